"""strength_distribution.py

Plot a histogram of the two-sided total collision strength of every
trajectory in the summary.
"""

import logging
import os
from typing import Any

import matplotlib.pyplot as plt
import pandas as pd

from src.analysis._utils_ import (
    ensure_columns,
    numeric_column,
    save_plot,
    setup_analysis_logging,
)


def run(summary_df: pd.DataFrame, params: dict[str, Any], output_path: str) -> str:
    """This run() function is executed by the analysis engine."""

    setup_analysis_logging(params.get("debug", False))
    logging.debug("Starting %s analysis", os.path.basename(__file__))

    ensure_columns(summary_df, ["total_strength"])
    strengths = numeric_column(summary_df, "total_strength")

    plt.figure(figsize=(8, 6))
    plt.hist(
        strengths,
        bins=min(50, max(5, len(strengths) // 5)),
        color=plt.get_cmap("tab10")(0),
        edgecolor="black",
    )
    plt.axvline(
        strengths.mean(),
        color="black",
        linestyle="--",
        label=f"mean {strengths.mean():.4g}",
    )
    plt.xlabel("Total collision strength")
    plt.xlim(left=0)
    plt.ylabel("Number of trajectories")
    plt.legend()
    title = "Distribution of Total Collision Strength"
    save_plot(title, output_path, ext="png", dpi=300, params=params)

    return f"{output_path}.png"
