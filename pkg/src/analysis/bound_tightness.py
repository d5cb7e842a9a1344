"""bound_tightness.py

Scatter the total collision strength of every trajectory against its optimal
bound 4 sqrt(I_N(Z) energy(Z)). Every point must stay below the diagonal.
"""

import logging
import os
from typing import Any

import matplotlib.pyplot as plt
import pandas as pd

from src.analysis._utils_ import (
    ensure_columns,
    lambda_star_bound,
    save_plot,
    setup_analysis_logging,
)


def run(summary_df: pd.DataFrame, params: dict[str, Any], output_path: str) -> str:
    """This run() function is executed by the analysis engine."""

    setup_analysis_logging(params.get("debug", False))
    logging.debug("Starting %s analysis", os.path.basename(__file__))

    ensure_columns(summary_df, ["total_strength", "inertia", "energy"])
    bound = lambda_star_bound(summary_df)
    strength = summary_df["total_strength"]
    ratio = (strength / bound).max()
    logging.debug("Largest strength to bound ratio: %.4g", ratio)

    plt.figure(figsize=(7, 7))
    plt.scatter(bound, strength, s=12, alpha=0.6, color=plt.get_cmap("tab10")(0))
    top = float(max(bound.max(), strength.max()))
    plt.plot([0, top], [0, top], color="black", linestyle="--", label="bound")
    plt.xlim(0, top * 1.05)
    plt.ylim(0, top * 1.05)
    plt.xlabel(r"$4\sqrt{I_N \cdot energy}$")
    plt.ylabel("Total collision strength")
    plt.legend(title=f"max ratio {ratio:.3f}")
    title = "Collision Strength vs Optimal Bound"
    save_plot(title, output_path, ext="png", dpi=300, params=params)

    return f"{output_path}.png"
