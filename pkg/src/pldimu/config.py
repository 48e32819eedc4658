"""Run configuration: nested dataclasses loaded from and dumped to YAML."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .lti import FrequencyGrid, LTIError, TFMatrix
from .robot import ModelError, TwoLinkParams, WeightSpec


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass
class RobotSection:
    a1: float = 48.125
    a2: float = 13.125
    a3: float = 6.25
    damping: list = field(default_factory=lambda: [[0.0, 0.0], [0.0, 0.0]])
    q_domain: list = field(default_factory=lambda: [[-3.141592653589793, 3.141592653589793]] * 2)
    qd_domain: list = field(default_factory=lambda: [[-1.5, 1.5]] * 2)
    u_domain: list = field(default_factory=lambda: [[-60.0, 60.0]] * 2)


@dataclass
class IntervalSection:
    source: str = "paper"          # paper | computed
    density: int = 50
    margin: float = 0.01


@dataclass
class WeightSection:
    M_S: list = field(default_factory=lambda: [2.0, 3.0])
    A_S: list = field(default_factory=lambda: [1e-2, 2e-2])
    omega_B: list = field(default_factory=lambda: [0.5, 0.1])
    M_T: list = field(default_factory=lambda: [2.1, 3.0])
    A_T: list = field(default_factory=lambda: [1e-2, 1e-2])
    omega_BT: list = field(default_factory=lambda: [10.0, 12.0])

    def spec(self) -> WeightSpec:
        return WeightSpec(self.M_S, self.A_S, self.omega_B, self.M_T, self.A_T, self.omega_BT)


@dataclass
class GridSection:
    lo: float = 1e-3
    hi: float = 1e4
    n: int = 200

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.logspace(self.lo, self.hi, self.n)


@dataclass
class SynthesisSection:
    mode: str = "unstructured"     # unstructured | fixed
    degrees: list = field(default_factory=lambda: [[[2, 3], [2, 3]], [[2, 3], [2, 3]]])
    max_iter: int = 30
    tol: float = 1e-3
    patience: int = 5
    order: int = 2
    gamma_tol: float = 1e-2
    grid_points: int = 120
    starts: int = 8


@dataclass
class VerificationSection:
    n_monte_carlo: int = 20
    vertex_mode: str = "full"      # full | sampled
    vertex_samples: int = 256
    slack: float = 1.05


@dataclass
class SimulationSection:
    reference: list = field(default_factory=lambda: [0.1, 0.0])
    t_end: float = 20.0
    dt: float = 1e-3
    check_dt: bool = False


@dataclass
class RunConfig:
    robot: RobotSection = field(default_factory=RobotSection)
    intervals: IntervalSection = field(default_factory=IntervalSection)
    weights: WeightSection = field(default_factory=WeightSection)
    grid: GridSection = field(default_factory=GridSection)
    synthesis: SynthesisSection = field(default_factory=SynthesisSection)
    verification: VerificationSection = field(default_factory=VerificationSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    controller: list | None = None  # rational entries [[{num, den}, ...], ...]
    seed: int = 0
    out: str = "out"

    # -- (de)serialization ------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        cfg = _build(cls, data or {}, "")
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        """Hash of the scenario; the output directory is not part of it."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(yaml.safe_dump(d, sort_keys=True).encode()).hexdigest()[:16]

    # -- derived objects --------------------------------------------------

    def controller_tf(self) -> TFMatrix | None:
        if self.controller is None:
            return None
        return TFMatrix(tuple(tuple((e["num"], e["den"]) for e in row) for row in self.controller))

    def validate(self) -> None:
        r = self.robot
        _check(lambda: TwoLinkParams(r.a1, r.a2, r.a3), "robot")
        for name in ("damping", "q_domain", "qd_domain", "u_domain"):
            arr = np.asarray(getattr(r, name), float)
            if arr.shape != (2, 2):
                raise ConfigError(f"robot.{name}: expected a 2x2 list, got shape {arr.shape}")
            if name != "damping" and np.any(arr[:, 0] > arr[:, 1]):
                raise ConfigError(f"robot.{name}: interval lower bound exceeds upper bound")
        if self.intervals.source not in ("paper", "computed"):
            raise ConfigError(f"intervals.source: expected 'paper' or 'computed', "
                              f"got {self.intervals.source!r}")
        if self.intervals.density < 2:
            raise ConfigError("intervals.density: must be at least 2")
        if self.intervals.margin < 0:
            raise ConfigError("intervals.margin: must be nonnegative")
        _check(self.weights.spec, "weights")
        _check(self.grid.grid, "grid")
        s = self.synthesis
        if s.mode not in ("unstructured", "fixed"):
            raise ConfigError(f"synthesis.mode: expected 'unstructured' or 'fixed', got {s.mode!r}")
        if s.max_iter < 1 or s.patience < 1 or s.starts < 1 or s.grid_points < 2:
            raise ConfigError("synthesis: max_iter, patience, starts must be >= 1, "
                              "grid_points >= 2")
        if not 0 <= s.order <= 4:
            raise ConfigError("synthesis.order: must be between 0 and 4")
        if s.tol <= 0 or s.gamma_tol <= 0:
            raise ConfigError("synthesis: tolerances must be positive")
        deg = np.asarray(s.degrees)
        if (deg.ndim != 3 or deg.shape[2] != 2 or np.any(deg < 0)
                or np.any(deg[..., 0] > deg[..., 1])):
            raise ConfigError("synthesis.degrees: expected a grid of proper "
                              "[num_degree, den_degree] pairs")
        v = self.verification
        if v.n_monte_carlo < 0:
            raise ConfigError("verification.n_monte_carlo: must be nonnegative")
        if v.vertex_mode not in ("full", "sampled"):
            raise ConfigError(f"verification.vertex_mode: expected 'full' or 'sampled', "
                              f"got {v.vertex_mode!r}")
        if v.vertex_samples < 1 or v.slack <= 0:
            raise ConfigError("verification: vertex_samples must be >= 1 and slack positive")
        sim = self.simulation
        if len(sim.reference) != 2:
            raise ConfigError("simulation.reference: expected two joint angles")
        if sim.t_end <= 0 or sim.dt <= 0 or sim.dt > 1e-3 * sim.t_end * (1 + 1e-9):
            raise ConfigError("simulation: need t_end > 0 and 0 < dt <= 1e-3 * t_end")
        if self.controller is not None:
            _check(self.controller_tf, "controller")


def _check(fn, path):
    try:
        fn()
    except (ModelError, LTIError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{sorted(unknown)[0]}: unknown field")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        where = f"{path}.{name}" if path else name
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, where)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}: expected true/false")
            kwargs[name] = value
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            try:
                kwargs[name] = type(default)(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}: {exc}") from exc
            if isinstance(default, int) and kwargs[name] != value:
                raise ConfigError(f"{where}: expected an integer")
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"{where}: expected a string")
            kwargs[name] = value
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: YAML parse error: {exc}") from exc
    return RunConfig.from_dict(data)


PRESET_DIR = Path(__file__).parent / "presets"


def preset(name: str) -> RunConfig:
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"preset: unknown preset {name!r}")
    return load_config(path)
