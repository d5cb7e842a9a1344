import argparse
import concurrent.futures
import glob
import logging
import os
import sys
import time
from dataclasses import asdict
from typing import Any, Optional, Sequence

import pandas as pd
import yaml

from src import __version__, load_config, load_state
from src.config import RunConfig, resolve_config
from src.ensemble_mc import (
    POSITION_LAWS,
    VELOCITY_LAWS,
    InitialEnsemble,
    run_draws,
    sample_initial,
    simulate_two_sided,
    verify_spacetime_estimates,
)
from src.errors import (
    EXIT_OK,
    EXIT_USAGE,
    CheckFailure,
    HardSphereError,
    exit_code_for,
)
from src.hard_sphere_flow import (
    FlowSettings,
    evolve,
    evolve_to_dispersal,
    reverse,
)
from src.illner_virial import check_illner_identity, sample_times, verify_trajectory
from src.phase_core import PhasePoint
from src.reporting import read_event_log, write_event_log, write_report, write_summary

EVENT_LOG = "events.ndjson"
REPORT = "report.yaml"
SUMMARY = "summary.csv"


def setup_logging(debug: bool = False) -> None:
    """Set up logging configuration."""
    if debug:
        level = logging.DEBUG
        fmt = "%(asctime)s [%(levelname)s] %(message)s {%(filename)s:%(lineno)d}"
    else:
        level = logging.INFO
        fmt = "%(asctime)s [%(levelname)s] %(message)s"
    logging.basicConfig(level=level, format=fmt)


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags shared by every subcommand. Defaults are None so that only
    explicit flags override the config file."""
    parser.add_argument("--n", type=int, help="Number of particles N. (Default: 20)")
    parser.add_argument("--dim", type=int, help="Space dimension d >= 2. (Default: 2)")
    parser.add_argument("--seed", type=int, help="Master seed. (Default: 0)")
    parser.add_argument(
        "--samples", type=int, help="Number of sampled initial states. (Default: 100)"
    )
    parser.add_argument(
        "--s-order",
        dest="s_order",
        type=int,
        nargs="+",
        help="Marginal order(s) s for the spacetime estimate. (Default: 2)",
    )
    parser.add_argument(
        "--c-d",
        dest="c_d",
        type=float,
        help="Constant of the spacetime estimate. (Default: 4N/(N-1))",
    )
    parser.add_argument(
        "--position-law",
        dest="position_law",
        choices=POSITION_LAWS,
        help="Law of the sphere centers. (Default: uniform-ball)",
    )
    parser.add_argument("--radius", type=float, help="Ball radius R. (Default: 15)")
    parser.add_argument("--side", type=float, help="Cube side L. (Default: 30)")
    parser.add_argument(
        "--velocity-law",
        dest="velocity_law",
        choices=VELOCITY_LAWS,
        help="Law of the velocities. (Default: uniform-ball)",
    )
    parser.add_argument(
        "--sigma", type=float, help="Gaussian velocity scale. (Default: 1)"
    )
    parser.add_argument(
        "--speed", type=float, help="Radius of the velocity ball. (Default: 1)"
    )
    parser.add_argument(
        "--drift", type=float, help="Outward radial velocity drift. (Default: 0)"
    )
    parser.add_argument(
        "--until-dispersal",
        dest="until_dispersal",
        action="store_true",
        default=None,
        help="Evolve until no pair will ever collide again. (Default)",
    )
    parser.add_argument(
        "--t-end", dest="t_end", type=float, help="Evolve over [0, T] instead."
    )
    parser.add_argument(
        "--out",
        type=str,
        help="Directory to store output files. (Default: hsvirial_out)",
    )
    parser.add_argument(
        "--state",
        dest="state_path",
        type=str,
        help="YAML file with 'positions' and 'velocities' of an explicit state.",
    )
    parser.add_argument(
        "--trajectory",
        dest="trajectory_path",
        type=str,
        help="Re-verify an event log written by 'simulate'.",
    )
    parser.add_argument(
        "--sample-times",
        dest="sample_times",
        type=int,
        help="Check times per trajectory. (Default: 20)",
    )
    parser.add_argument(
        "--workers", type=int, help="Number of worker processes. (Default: 1)"
    )
    parser.add_argument(
        "--plots",
        action="store_true",
        default=None,
        help="Render the summary analyses as PNG files.",
    )
    parser.add_argument(
        "--config",
        type=str,
        default="config.yaml",
        help="Path to the config.yaml file.",
    )
    parser.add_argument(
        "--debug",
        action="store_true",
        default=None,
        help="Enable debug logging.",
    )
    parser.add_argument(
        "--fault-inject",
        dest="fault_inject",
        action="store_true",
        default=None,
        help=argparse.SUPPRESS,
    )


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description="HardSphereVirial: virial identities of the hard sphere flow."
    )
    parser.add_argument(
        "--version",
        action="store_true",
        help="Show the version of the project and exit.",
    )
    subparsers = parser.add_subparsers(dest="mode")
    for mode, text in (
        ("simulate", "Evolve one state and write its collision log."),
        ("verify", "Check the virial identities and bounds on sampled trajectories."),
        ("ensemble", "Monte Carlo estimate of the spacetime bound."),
    ):
        _add_common_arguments(subparsers.add_parser(mode, help=text))
    return parser.parse_args(argv)


def explicit_state(cfg: RunConfig) -> Optional[PhasePoint]:
    """The state named by the config or --state, if any."""
    if cfg.initial_state is not None:
        return PhasePoint.from_dict(cfg.initial_state, cfg.tol_overlap)
    if cfg.state_path:
        logging.info("Loading initial state from %s", cfg.state_path)
        return PhasePoint.from_dict(load_state(cfg.state_path), cfg.tol_overlap)
    return None


def run_simulate(cfg: RunConfig) -> int:
    """Evolve one state and write its event log."""
    state = explicit_state(cfg)
    if state is None:
        state = sample_initial(cfg.ensemble(), draw=0)
    settings = cfg.flow_settings()
    if cfg.to_dispersal:
        traj = evolve_to_dispersal(state, 0.0, settings)
    else:
        traj = evolve(state, 0.0, cfg.t_end, settings)

    os.makedirs(cfg.out, exist_ok=True)
    path = write_event_log(os.path.join(cfg.out, EVENT_LOG), traj, cfg.to_dict())
    logging.info(
        "Simulated N=%d in d=%d: %d collision%s up to t=%r. Saved log to '%s'.",
        state.n,
        state.dim,
        traj.n_events,
        "" if traj.n_events == 1 else "s",
        traj.final_time,
        path,
    )
    return EXIT_OK


def verify_draw(
    args: tuple[InitialEnsemble, int, int, FlowSettings],
) -> dict[str, Any]:
    """Run every check on one sampled state in a separate process."""
    ens, draw, sample_count, settings = args
    _, forward, backward = simulate_two_sided(ens, draw, settings)
    row = {"draw": draw}
    row.update(verify_trajectory(forward, backward, sample_count, settings).to_row())
    return row


def verify_state(
    state: PhasePoint, sample_count: int, settings: FlowSettings
) -> dict[str, Any]:
    forward = evolve_to_dispersal(state, 0.0, settings)
    backward = evolve_to_dispersal(reverse(state), 0.0, settings)
    row = {"draw": 0}
    row.update(verify_trajectory(forward, backward, sample_count, settings).to_row())
    return row


def summarize_checks(summary: pd.DataFrame) -> dict[str, Any]:
    """Worst value of every check across the verified trajectories."""
    return {
        "trajectories": len(summary),
        "failed_trajectories": int((~summary["passed"]).sum()),
        "events": int(summary["events"].sum()),
        "illner_identity": {
            "max_residual": summary["identity_residual"].max(),
            "min_jump": summary["min_jump"].min(),
            "passed": bool(summary["identity_ok"].all()),
        },
        "inertia_lemma": {
            "min_slack": summary["inertia_min_slack"].min(),
            "max_gap_residual": summary["inertia_gap_residual"].max(),
            "passed": bool(summary["inertia_ok"].all()),
        },
        "virial_bounds": {
            "r_bound_min_slack": summary["r_bound_min_slack"].min(),
            "strength_bound_min_slack": summary["strength_bound_min_slack"].min(),
            "lambda_star_min_slack": summary["lambda_star_slack"].min(),
            "passed": bool(summary["bounds_ok"].all()),
        },
        "conservation": {
            "max_event_momentum_residual": summary["event_momentum_residual"].max(),
            "max_event_energy_residual": summary["event_energy_residual"].max(),
            "max_drift": summary["drift"].max(),
            "passed": bool(summary["conservation_ok"].all()),
        },
        "collision_parameters": {
            "mismatches": int(summary["parameter_mismatches"].sum()),
        },
        "reversibility": {
            "checked": int(summary["reversibility_error"].notna().sum()),
            "max_error": summary["reversibility_error"].max(),
            "passed": bool(summary["reversibility_ok"].all()),
        },
        "passed": bool(summary["passed"].all()),
    }


def verify_trajectory_file(cfg: RunConfig) -> int:
    """Re-verify a saved event log. Identity reports are always produced;
    the full check bundle needs a dispersed log that starts at t0 = 0."""
    traj, header = read_event_log(cfg.trajectory_path)
    logging.info(
        "Loaded %d events written by version %s from %s",
        traj.n_events,
        header.get("version"),
        cfg.trajectory_path,
    )
    times = sample_times(traj, cfg.sample_times)
    identity = [check_illner_identity(traj, t) for t in times]
    body: dict[str, Any] = {
        "trajectory": cfg.trajectory_path,
        "identity": [asdict(report) for report in identity],
    }
    passed = all(report.holds() for report in identity)
    if traj.dispersed:
        row = verify_state(traj.initial, cfg.sample_times, cfg.flow_settings())
        summary = pd.DataFrame([row])
        body["checks"] = summarize_checks(summary)
        passed = passed and body["checks"]["passed"]
        write_summary(os.path.join(cfg.out, SUMMARY), summary, cfg.to_dict())
    else:
        logging.warning("Trajectory has not dispersed; only the identity is checked")
    body["passed"] = passed
    write_report(os.path.join(cfg.out, REPORT), body, cfg.to_dict())
    if not passed:
        raise CheckFailure(f"Verification of {cfg.trajectory_path} failed")
    return EXIT_OK


def run_verify(cfg: RunConfig) -> int:
    """Run the identity, lemma and corollary checks and write a report.

    Raises CheckFailure after the report is written if any check fails.
    """
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.trajectory_path:
        return verify_trajectory_file(cfg)
    if not cfg.to_dispersal:
        logging.warning("'verify' always runs to dispersal; ignoring t_end")

    settings = cfg.flow_settings()
    state = explicit_state(cfg)
    if state is not None:
        rows = [verify_state(state, cfg.sample_times, settings)]
    else:
        ens = cfg.ensemble()
        tasks = [
            (ens, draw, cfg.sample_times, settings) for draw in range(cfg.samples)
        ]
        if cfg.workers > 1:
            with concurrent.futures.ProcessPoolExecutor(cfg.workers) as executor:
                rows = list(executor.map(verify_draw, tasks))
        else:
            rows = [verify_draw(task) for task in tasks]
    summary = pd.DataFrame(rows)
    checks = summarize_checks(summary)

    write_summary(os.path.join(cfg.out, SUMMARY), summary, cfg.to_dict())
    write_report(os.path.join(cfg.out, REPORT), {"checks": checks}, cfg.to_dict())
    logging.info(
        "Verified %d trajector%s with %d collisions: %s.",
        checks["trajectories"],
        "y" if checks["trajectories"] == 1 else "ies",
        checks["events"],
        "all checks passed" if checks["passed"] else "CHECKS FAILED",
    )
    if cfg.plots:
        run_analyses(summary, cfg)
    if not checks["passed"]:
        raise CheckFailure(
            f"{checks['failed_trajectories']} trajectory check(s) failed. "
            f"See {os.path.join(cfg.out, REPORT)}."
        )
    return EXIT_OK


def run_ensemble(cfg: RunConfig) -> int:
    """Estimate both sides of the spacetime bound for every requested s."""
    os.makedirs(cfg.out, exist_ok=True)
    ens = cfg.ensemble()
    settings = cfg.flow_settings()
    draws = run_draws(ens, cfg.samples, cfg.s_order, settings, cfg.workers)
    reports = verify_spacetime_estimates(
        ens, cfg.s_order, cfg.samples, cfg.c_d, settings, cfg.workers, draws
    )
    write_summary(os.path.join(cfg.out, SUMMARY), draws, cfg.to_dict())
    write_report(
        os.path.join(cfg.out, REPORT),
        {"estimates": [report.to_dict() for report in reports]},
        cfg.to_dict(),
    )
    if cfg.plots:
        run_analyses(draws, cfg)

    if cfg.samples == 1:
        logging.info("Single sample: standard errors not applicable, no assertion.")
    failed = [report.s for report in reports if report.passed is False]
    if failed:
        raise CheckFailure(f"Spacetime estimate not confirmed for s={failed}")
    disagree = [report.s for report in reports if report.estimators_agree is False]
    if disagree:
        raise CheckFailure(
            "Symmetric and tagged estimators differ by more than 3 standard "
            f"errors for s={disagree}"
        )
    return EXIT_OK


def run_analysis(
    args: tuple[str, pd.DataFrame, dict[str, Any], str],
) -> tuple[str, str, float]:
    """Run a specific analysis in a separate process."""
    analysis, summary_df, params, output_dir = args
    start_time = time.perf_counter()
    output_file = ""
    try:
        module = __import__(f"src.analysis.{analysis}", fromlist=["run"])
        output_file = module.run(
            summary_df, params, os.path.join(output_dir, analysis)
        )
    except ImportError as e:
        logging.error("Analysis module '%s' not found: %s", analysis, e)
    except AttributeError:
        logging.error("Module '%s' does not have a run() function.", analysis)
    except Exception as e:
        logging.error("Error running analysis '%s': %s", analysis, e)
    return analysis, output_file, time.perf_counter() - start_time


def list_analyses() -> list[str]:
    """Analysis modules in src/analysis, skipping *_.py helpers."""
    analysis_dir = os.path.join(os.path.dirname(__file__), "analysis")
    return sorted(
        os.path.splitext(os.path.basename(f))[0]
        for f in glob.glob(os.path.join(analysis_dir, "*.py"))
        if not os.path.basename(f).endswith("_.py")
    )


def run_analyses(summary: pd.DataFrame, cfg: RunConfig) -> list[str]:
    """Render every summary analysis into the output directory."""
    analyses = list_analyses()
    params = cfg.to_dict()
    tasks = [(analysis, summary, params, cfg.out) for analysis in analyses]
    outputs = []
    with concurrent.futures.ProcessPoolExecutor(cfg.workers) as executor:
        for analysis, output_file, elapsed in executor.map(run_analysis, tasks):
            if output_file:
                logging.info(
                    "Saved output to '%s' in %.2f seconds.", output_file, elapsed
                )
                outputs.append(output_file)
            else:
                logging.error(
                    "Analysis '%s' failed in %.2f seconds. Skipping.", analysis, elapsed
                )
    return outputs


def main() -> None:
    """Main entry point for HardSphereVirial."""

    args = parse_args()
    main_start_time = time.perf_counter()
    setup_logging(bool(args.debug) if args.mode else False)

    if args.version:
        print(f"HardSphereVirial {__version__}")
        sys.exit(EXIT_OK)

    if not args.mode:
        logging.error("A subcommand is required: simulate, verify or ensemble.")
        sys.exit(EXIT_USAGE)

    try:
        cfg = resolve_config(args.mode, load_config(args.config), vars(args))
        runner = {
            "simulate": run_simulate,
            "verify": run_verify,
            "ensemble": run_ensemble,
        }[cfg.mode]
        code = runner(cfg)
    except (OSError, yaml.YAMLError) as e:
        logging.error("Cannot read input: %s", e)
        sys.exit(EXIT_USAGE)
    except (HardSphereError, ValueError) as e:
        logging.error("%s: %s", type(e).__name__, e)
        sys.exit(exit_code_for(e))

    main_elapsed = time.perf_counter() - main_start_time
    logging.info("'%s' completed in %.2f seconds.", args.mode, main_elapsed)
    sys.exit(code)


if __name__ == "__main__":
    main()
