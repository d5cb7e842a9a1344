"""lambda_sweep.py

Worst and median ratio of total collision strength to the bound
2 (lambda I_N + energy / lambda) across the lambda grid.
"""

import logging
import os
from typing import Any

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from src.analysis._utils_ import ensure_columns, save_plot, setup_analysis_logging
from src.illner_virial import lambda_grid


def run(summary_df: pd.DataFrame, params: dict[str, Any], output_path: str) -> str:
    """This run() function is executed by the analysis engine."""

    setup_analysis_logging(params.get("debug", False))
    logging.debug("Starting %s analysis", os.path.basename(__file__))

    ensure_columns(summary_df, ["total_strength", "inertia", "energy"])
    lambdas = lambda_grid()
    strength = summary_df["total_strength"].to_numpy()[:, np.newaxis]
    bounds = 2.0 * (
        lambdas * summary_df["inertia"].to_numpy()[:, np.newaxis]
        + summary_df["energy"].to_numpy()[:, np.newaxis] / lambdas
    )
    ratios = strength / bounds

    plt.figure(figsize=(8, 6))
    plt.plot(lambdas, ratios.max(axis=0), marker="o", markersize=3, label="worst")
    plt.plot(lambdas, np.median(ratios, axis=0), linestyle=":", label="median")
    plt.axhline(1.0, color="black", linestyle="--", linewidth=0.8)
    plt.xscale("log")
    plt.xlabel(r"$\lambda$")
    plt.ylabel("Strength / bound")
    plt.legend()
    title = "Strength Bound Across the Lambda Grid"
    save_plot(title, output_path, ext="png", dpi=300, params=params)

    return f"{output_path}.png"
