"""_utils_.py

Shared helpers for the summary plots: column checks, derived bound columns,
and the common figure finish (grid, run label, version footer).
"""

import logging
from typing import Any, Optional

import matplotlib

matplotlib.use("Agg")

# flake8: noqa: E402
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from src import __version__

SUMMARY_COLUMNS = ("events", "total_strength", "energy", "inertia")


def setup_analysis_logging(debug: bool = False) -> None:
    """Configure logging inside a worker process.

    Plots run in a process pool; workers start with an unconfigured root
    logger.
    """
    root = logging.getLogger()
    if debug and not root.handlers:
        logging.basicConfig(
            level=logging.DEBUG,
            format="%(asctime)s [%(levelname)s] %(message)s {%(filename)s:%(lineno)d}",
        )
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def ensure_columns(summary: pd.DataFrame, columns: list[str]) -> None:
    """Raise ValueError unless the summary has rows and every listed column."""
    absent = sorted(set(columns) - set(summary.columns))
    if absent:
        raise ValueError(f"Missing columns in summary: {absent}")
    if summary.empty:
        raise ValueError("Summary has no rows")


def numeric_column(summary: pd.DataFrame, column: str) -> pd.Series:
    """The column as floats, with unparsable cells dropped."""
    return pd.to_numeric(summary[column], errors="coerce").dropna()


def lambda_star_bound(summary: pd.DataFrame) -> pd.Series:
    """4 sqrt(I_N(Z) energy(Z)) for every row."""
    return 4.0 * np.sqrt(summary["inertia"] * summary["energy"])


def run_label(params: Optional[dict[str, Any]]) -> str:
    """Short 'N=20, d=2, seed=0' description of the run, or '' without params."""
    if not params:
        return ""
    parts = [
        f"{label}={params[key]}"
        for key, label in (("n", "N"), ("dim", "d"), ("seed", "seed"))
        if params.get(key) is not None
    ]
    return ", ".join(parts)


def save_plot(
    title: str,
    output_path: str,
    ext: str = "png",
    dpi: int = 300,
    params: Optional[dict[str, Any]] = None,
) -> None:
    """Title, style and write the current figure to '<output_path>.<ext>'."""
    plt.rcParams.update(
        {
            "font.size": 10,
            "axes.labelsize": 10,
            "axes.titlesize": 14,
            "mathtext.default": "regular",
        }
    )
    fig = plt.gcf()
    fig.suptitle(title, fontsize=16, fontweight="bold")

    ax = plt.gca()
    ax.set_axisbelow(True)
    ax.spines[["top", "right"]].set_visible(False)
    ax.grid(linestyle=":", linewidth=0.5, alpha=0.6)

    # Room for the footer row
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    label = run_label(params)
    if label:
        fig.text(0.01, 0.01, label, fontsize=6, color="gray", ha="left")
    fig.text(
        0.99,
        0.01,
        f"HardSphereVirial v{__version__}",
        fontsize=6,
        color="gray",
        ha="right",
    )

    fig.savefig(f"{output_path}.{ext}", dpi=dpi)
    plt.close(fig)
