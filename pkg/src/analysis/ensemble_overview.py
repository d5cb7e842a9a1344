"""ensemble_overview.py

A few summary statistics of the simulated trajectories, such as their number,
the collision counts, the mean collision strength and the tightest bound.
"""

import logging
import os
from typing import Any

import matplotlib.pyplot as plt
import pandas as pd

from src.analysis._utils_ import (
    SUMMARY_COLUMNS,
    ensure_columns,
    lambda_star_bound,
    save_plot,
    setup_analysis_logging,
)


def run(summary_df: pd.DataFrame, params: dict[str, Any], output_path: str) -> str:
    """This run() function is executed by the analysis engine."""

    setup_analysis_logging(params.get("debug", False))
    logging.debug("Starting %s analysis", os.path.basename(__file__))

    ensure_columns(summary_df, list(SUMMARY_COLUMNS))
    ratio = summary_df["total_strength"] / lambda_star_bound(summary_df)

    stats = [
        ["Particles", f"N={params.get('n', '?')}, d={params.get('dim', '?')}"],
        ["Seed", str(params.get("seed", "?"))],
        ["Trajectories", f"{len(summary_df):,}"],
        ["Total Collisions", f"{int(summary_df['events'].sum()):,}"],
        ["Collision-free", f"{int((summary_df['events'] == 0).sum()):,}"],
        ["Max Collisions", f"{int(summary_df['events'].max()):,}"],
        ["Mean Total Strength", f"{summary_df['total_strength'].mean():.6g}"],
        ["Mean Energy", f"{summary_df['energy'].mean():.6g}"],
        ["Mean Inertia", f"{summary_df['inertia'].mean():.6g}"],
        ["Max Strength / Bound", f"{ratio.max():.4f}"],
    ]
    if "passed" in summary_df.columns:
        stats.append(["Failed Trajectories", f"{int((~summary_df['passed']).sum())}"])
    logging.debug("Generated %d statistics for the overview table", len(stats))

    _, ax = plt.subplots(figsize=(8, 6))
    ax.axis("off")
    table = ax.table(
        cellText=stats,
        colLabels=["Statistic", "Value"],
        cellLoc="left",
        loc="center",
    )
    # Light blue shading for column label cells
    for (row, _), cell in table.get_celld().items():
        if row == 0:
            cell.set_facecolor("#e6f2ff")
    table.auto_set_font_size(False)
    table.set_fontsize(12)
    table.scale(1, 1.5)

    title = "Ensemble Overview"
    save_plot(title, output_path, ext="png", dpi=300, params=params)

    return f"{output_path}.png"
