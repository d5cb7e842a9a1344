"""event_count_distribution.py

Plot a histogram showing how many collisions each two-sided trajectory had.
"""

import logging
import os
from typing import Any

import matplotlib.pyplot as plt
import pandas as pd

from src.analysis._utils_ import ensure_columns, save_plot, setup_analysis_logging


def run(summary_df: pd.DataFrame, params: dict[str, Any], output_path: str) -> str:
    """This run() function is executed by the analysis engine."""

    setup_analysis_logging(params.get("debug", False))
    logging.debug("Starting %s analysis", os.path.basename(__file__))

    ensure_columns(summary_df, ["events"])
    events = summary_df["events"].fillna(0).astype(int)

    plt.figure(figsize=(8, 6))
    plt.hist(
        events,
        bins=range(0, events.max() + 2),
        color=plt.get_cmap("tab10")(1),
        edgecolor="black",
        align="left",
    )
    plt.xlabel("Collisions per trajectory")
    plt.xlim(left=-0.5)
    plt.ylabel("Number of trajectories")
    title = "Distribution of Collision Counts"
    save_plot(title, output_path, ext="png", dpi=300, params=params)

    return f"{output_path}.png"
