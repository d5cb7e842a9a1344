"""reporting.py

Files written by the command line: newline-delimited JSON event logs, YAML
reports and CSV summaries. Every file carries the tool version and the
resolved configuration.

Floats in event logs are written with Python's shortest round-trip repr, so
reading a log back gives bit-identical binary64 values.
"""

import json
import logging
import math
from typing import Any, Optional

import numpy as np
import pandas as pd
import yaml

from src import __version__
from src.hard_sphere_flow import CollisionEvent, Trajectory
from src.phase_core import PhasePoint


class ReportJSONEncoder(json.JSONEncoder):
    """Serialize numpy scalars and arrays as plain JSON values."""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        return super().default(o)


def _dumps(record: dict[str, Any]) -> str:
    return json.dumps(record, cls=ReportJSONEncoder, allow_nan=True)


def event_record(event: CollisionEvent) -> dict[str, Any]:
    """One event-log line; particle indices are 1-based."""
    return {
        "record": "event",
        "time": event.time,
        "i": event.i + 1,
        "j": event.j + 1,
        "omega": event.omega,
        "v_i_pre": event.v_i_pre,
        "v_j_pre": event.v_j_pre,
        "v_i_post": event.v_i_post,
        "v_j_post": event.v_j_post,
        "strength": event.strength,
    }


def write_event_log(
    path: str, traj: Trajectory, config: Optional[dict[str, Any]] = None
) -> str:
    """Write header, one line per collision and a final-state line."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        header = {
            "record": "header",
            "version": __version__,
            "config": config or {},
            "t0": traj.t0,
            "n": traj.initial.n,
            "dim": traj.initial.dim,
            "tol_overlap": traj.initial.tol_overlap,
            "initial": traj.initial.to_dict(),
        }
        f.write(_dumps(header) + "\n")
        for event in traj.events:
            f.write(_dumps(event_record(event)) + "\n")
        final = {
            "record": "final",
            "time": traj.final_time,
            "events": traj.n_events,
            "dispersed": traj.dispersed,
            "state": traj.final_state.to_dict(),
        }
        f.write(_dumps(final) + "\n")
    logging.debug("Wrote %d event records to %s", traj.n_events, path)
    return path


def _read_event(record: dict[str, Any]) -> CollisionEvent:
    arrays = {}
    for key in ("omega", "v_i_pre", "v_j_pre", "v_i_post", "v_j_post"):
        arrays[key] = np.array(record[key], dtype=float)
        arrays[key].setflags(write=False)
    return CollisionEvent(
        time=float(record["time"]),
        i=int(record["i"]) - 1,
        j=int(record["j"]) - 1,
        strength=float(record["strength"]),
        **arrays,
    )


def read_event_log(path: str) -> tuple[Trajectory, dict[str, Any]]:
    """Rebuild the Trajectory stored by write_event_log; also returns the
    header record."""
    with open(path, encoding="utf-8") as f:
        records = [json.loads(line) for line in f if line.strip()]
    if len(records) < 2:
        raise ValueError(f"Event log {path} is truncated")
    header, final = records[0], records[-1]
    if header.get("record") != "header" or final.get("record") != "final":
        raise ValueError(f"Event log {path} lacks a header or final record")
    events = tuple(_read_event(r) for r in records[1:-1])
    if len(events) != final["events"]:
        raise ValueError(
            f"Event log {path} lists {len(events)} events, "
            f"final record says {final['events']}"
        )
    tol = header.get("tol_overlap", 1e-9)
    traj = Trajectory(
        initial=PhasePoint.from_dict(header["initial"], tol),
        t0=float(header["t0"]),
        events=events,
        final_time=float(final["time"]),
        final_state=PhasePoint.from_dict(final["state"], tol),
        dispersed=bool(final["dispersed"]),
    )
    return traj, header


def _plain(value: Any) -> Any:
    """Convert numpy values and non-finite floats for yaml.safe_dump."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    return value


def write_report(
    path: str, body: dict[str, Any], config: Optional[dict[str, Any]] = None
) -> str:
    """Write one YAML document: version, config, then ``body``."""
    document = {"version": __version__, "config": config or {}}
    document.update(body)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(_plain(document), f, sort_keys=False, default_flow_style=None)
    return path


def read_report(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def write_summary(
    path: str, summary: pd.DataFrame, config: Optional[dict[str, Any]] = None
) -> str:
    """CSV with one row per trajectory, preceded by '#' comment lines echoing
    the version and configuration."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# hsvirial {__version__}\n")
        f.write(f"# config: {_dumps(_plain(config or {}))}\n")
        summary.to_csv(f, index=False, lineterminator="\n")
    return path


def read_summary(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
