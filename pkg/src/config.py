"""config.py

Resolved run configuration: dataclass defaults, overridden by the flat YAML
config file, overridden by explicit command line flags.
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

from src.ensemble_mc import POSITION_LAWS, VELOCITY_LAWS, InitialEnsemble
from src.errors import ConfigError
from src.hard_sphere_flow import MAX_EVENTS, MAX_TIME, FlowSettings
from src.illner_virial import SAMPLE_TIMES
from src.phase_core import TOL_CONTACT, TOL_OVERLAP, TOL_TIME, Tolerances

MODES = ("simulate", "verify", "ensemble")


@dataclass
class RunConfig:
    mode: str = "simulate"
    n: int = 20
    dim: int = 2
    seed: int = 0
    samples: int = 100
    s_order: list[int] = field(default_factory=lambda: [2])
    c_d: Optional[float] = None
    position_law: str = "uniform-ball"
    radius: float = 15.0
    side: float = 30.0
    velocity_law: str = "uniform-ball"
    sigma: float = 1.0
    speed: float = 1.0
    drift: float = 0.0
    until_dispersal: bool = False
    t_end: Optional[float] = None
    out: str = "hsvirial_out"
    state_path: Optional[str] = None
    initial_state: Optional[dict] = None
    trajectory_path: Optional[str] = None
    sample_times: int = SAMPLE_TIMES
    workers: int = 1
    plots: bool = False
    debug: bool = False
    tol_overlap: float = TOL_OVERLAP
    tol_contact: float = TOL_CONTACT
    tol_time: float = TOL_TIME
    max_events: int = MAX_EVENTS
    max_time: float = MAX_TIME
    fault_inject: bool = False

    @property
    def to_dispersal(self) -> bool:
        """Evolutions run to dispersal unless a finite --t-end is given."""
        return self.until_dispersal or self.t_end is None

    def validate(self) -> None:
        """Raise ConfigError for the first value out of its documented range."""
        if self.mode not in MODES:
            raise ConfigError(f"Unknown mode '{self.mode}', expected one of {MODES}")
        checks = [
            (self.n >= 1, f"'n' must be >= 1, got {self.n}"),
            (self.dim >= 2, f"'dim' must be >= 2, got {self.dim}"),
            (self.samples >= 1, f"'samples' must be >= 1, got {self.samples}"),
            (0 <= self.seed < 2**64, "'seed' must be a 64-bit unsigned integer"),
            (self.sample_times >= 1, "'sample_times' must be >= 1"),
            (self.workers >= 1, f"'workers' must be >= 1, got {self.workers}"),
            (self.max_events >= 1, "'max_events' must be >= 1"),
            (self.max_time > 0, "'max_time' must be positive"),
            (
                self.c_d is None or self.c_d > 0,
                f"'c_d' must be positive, got {self.c_d}",
            ),
            (
                self.position_law in POSITION_LAWS,
                f"Unknown position law '{self.position_law}'",
            ),
            (
                self.velocity_law in VELOCITY_LAWS,
                f"Unknown velocity law '{self.velocity_law}'",
            ),
        ]
        for name in ("radius", "side", "sigma", "speed"):
            value = getattr(self, name)
            checks.append((value > 0, f"'{name}' must be positive, got {value}"))
        for name in ("tol_overlap", "tol_contact", "tol_time"):
            value = getattr(self, name)
            checks.append((value > 0, f"'{name}' must be positive, got {value}"))
        if self.t_end is not None:
            checks.append((self.t_end >= 0, f"'t_end' must be >= 0, got {self.t_end}"))
            checks.append(
                (
                    not self.until_dispersal,
                    "'until_dispersal' and 't_end' are mutually exclusive",
                )
            )
        if self.mode == "ensemble":
            checks.append((bool(self.s_order), "'s_order' needs at least one value"))
            checks.extend(
                (2 <= s <= self.n, f"Marginal order s={s} outside [2, {self.n}]")
                for s in self.s_order
            )
            checks.append((self.n >= 2, "Ensemble mode needs N >= 2"))
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def tolerances(self) -> Tolerances:
        return Tolerances(self.tol_overlap, self.tol_contact, self.tol_time)

    def flow_settings(self) -> FlowSettings:
        return FlowSettings(
            tolerances=self.tolerances(),
            max_events=self.max_events,
            max_time=self.max_time,
            fault_inject=self.fault_inject,
        )

    def ensemble(self) -> InitialEnsemble:
        """The sampling law; raises PackingError for overfull domains."""
        return InitialEnsemble(
            n=self.n,
            dim=self.dim,
            position_law=self.position_law,
            radius=self.radius,
            side=self.side,
            velocity_law=self.velocity_law,
            sigma=self.sigma,
            speed=self.speed,
            drift=self.drift,
            seed=self.seed,
        )

    def to_dict(self) -> dict[str, Any]:
        """Every resolved field, for echoing into output files."""
        return asdict(self)


FIELD_NAMES = frozenset(f.name for f in fields(RunConfig))
FLOAT_FIELDS = frozenset(
    ["c_d", "t_end"]
    + [f.name for f in fields(RunConfig) if isinstance(f.default, float)]
)
INT_FIELDS = frozenset(
    f.name
    for f in fields(RunConfig)
    if isinstance(f.default, int) and not isinstance(f.default, bool)
)


def _coerce(key: str, value: Any) -> Any:
    """YAML reads '1e-9' as a string; cast numeric fields explicitly."""
    if value is None:
        return None
    try:
        if key in FLOAT_FIELDS:
            return float(value)
        if key in INT_FIELDS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(value)
        if key == "s_order":
            values = [value] if isinstance(value, (int, str)) else value
            return [int(s) for s in values]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for '{key}': {value!r} ({e})") from e
    return value


def resolve_config(
    mode: str, file_config: dict[str, Any], cli: dict[str, Any]
) -> RunConfig:
    """Merge defaults < config file < command line and validate the result.

    ``cli`` holds parsed flags; None means the flag was not given.
    """
    unknown = sorted(set(file_config) - FIELD_NAMES)
    if unknown:
        raise ConfigError(f"Unknown config keys: {unknown}")
    merged = dict(file_config)
    merged.update({k: v for k, v in cli.items() if k in FIELD_NAMES and v is not None})
    merged = {k: _coerce(k, v) for k, v in merged.items()}
    merged["mode"] = mode
    try:
        cfg = RunConfig(**merged)
    except TypeError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
    cfg.validate()
    logging.debug("Resolved configuration: %s", cfg.to_dict())
    return cfg
