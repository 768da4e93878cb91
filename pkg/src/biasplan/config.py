"""Experiment configuration: flat key-value files with section headers.

The on-disk format is INI as understood by :mod:`configparser` (that is the
whole point: trivially parseable in any language).  Every key belongs to a
fixed section; unknown sections or keys are errors so that typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .eskf import SensorConfig
from .imu import ImuNoiseSpec
from .planner import PlannerConfig

_SCENARIOS = ("cube", "figure_eight")
_PLANNERS = ("greedy", "rrt")
# combined planner names fold the utility policy into the planner choice
_COMBINED_PLANNERS = {
    "adaptive_greedy": ("greedy", "adaptive"),
    "position_greedy": ("greedy", "position_only"),
    "adaptive_rrt": ("rrt", "adaptive"),
    "position_rrt": ("rrt", "position_only"),
}
_INTERPS = ("gp", "minsnap")
_POLICIES = ("adaptive", "position_only", "bias_only")


class ConfigError(Exception):
    """Bad configuration file or values."""


@dataclass
class ExperimentConfig:
    # [experiment]
    scenario: str = "cube"
    planner: str = "greedy"
    interp: str = "gp"
    policy: str = "adaptive"
    runs: int = 10
    duration: float = 300.0
    prior_duration: float = 30.0
    seed: int = 42
    record_rate: float = 20.0
    # [noise]
    sigma_f: float = 0.0196
    sigma_w: float = 0.0017
    sigma_bf: float = 5e-4
    sigma_bw: float = 2e-5
    gravity_z: float = -9.81
    # [sensors]
    imu_rate: float = 200.0
    range_rate: float = 2.0
    range_noise: float = 0.5
    max_range: float = 8.5          # <= 0 means unlimited
    round_robin: bool = False       # one anchor per range epoch
    # [filter] initial standard deviations per error block
    sigma_pos0: float = 0.3
    sigma_vel0: float = 0.1
    sigma_theta0: float = 0.01
    sigma_bf0: float = 0.1
    sigma_bw0: float = 1e-4
    # [kernel]
    signal_variance: float = 1.0
    lengthscale_factor: float = 3.0
    jitter: float = 1e-10
    # [planner]
    workspace_half: float = 4.0
    map_half: float = 6.0
    max_nodes: int = 300
    near_radius: float = 2.0
    lam: float = 2e-4
    v_max: float = 1.0
    a_max: float = 2.0
    candidate_count: int = 5
    min_duration: float = 0.0       # floor on planned edge durations, seconds
    budget: float = 0.0             # <= 0 means the experiment duration
    attitude: str = "track"         # level waypoints yawed along travel

    def validate(self):
        if self.scenario not in _SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.planner in _COMBINED_PLANNERS:
            kind, policy = _COMBINED_PLANNERS[self.planner]
            self.planner = kind
            self.policy = policy
        if self.planner not in _PLANNERS:
            raise ConfigError(f"unknown planner {self.planner!r}")
        if self.interp not in _INTERPS:
            raise ConfigError(f"unknown interp {self.interp!r}")
        if self.policy not in _POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.attitude not in ("random", "hold", "track"):
            raise ConfigError(f"unknown attitude mode {self.attitude!r}")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        for name in ("duration", "prior_duration", "record_rate", "imu_rate",
                     "range_rate", "range_noise", "v_max", "a_max", "lam",
                     "near_radius", "workspace_half", "map_half",
                     "signal_variance", "lengthscale_factor"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        for name in ("sigma_f", "sigma_w", "sigma_bf", "sigma_bw", "jitter",
                     "sigma_pos0", "sigma_vel0", "sigma_theta0", "sigma_bf0",
                     "sigma_bw0", "min_duration"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"{name} must be non-negative")
        if self.max_nodes < 1 or self.candidate_count < 1:
            raise ConfigError("max_nodes and candidate_count must be at least 1")
        if round(self.imu_rate / self.record_rate) < 1:
            raise ConfigError("record_rate must not exceed imu_rate")
        return self

    # ------------------------------------------------------------------ views
    def noise_spec(self):
        return ImuNoiseSpec(sigma_f=self.sigma_f, sigma_w=self.sigma_w,
                            sigma_bf=self.sigma_bf, sigma_bw=self.sigma_bw,
                            gravity=np.array([0.0, 0.0, self.gravity_z]))

    def sensor_config(self):
        return SensorConfig(imu_rate=self.imu_rate, range_rate=self.range_rate,
                            round_robin=self.round_robin,
                            range_noise_std=self.range_noise,
                            max_range=self.max_range if self.max_range > 0 else None,
                            noise=self.noise_spec())

    def planner_config(self, bounds):
        return PlannerConfig(
            bounds=bounds,
            budget=self.budget if self.budget > 0 else self.duration,
            max_nodes=self.max_nodes, near_radius=self.near_radius,
            lam=self.lam, v_max=self.v_max, a_max=self.a_max,
            candidate_count=self.candidate_count,
            min_duration=self.min_duration,
            policy=self.policy, seed=self.seed,
            attitude=self.attitude,
            signal_variance=self.signal_variance,
            lengthscale_factor=self.lengthscale_factor, jitter=self.jitter)


_SECTION_FIELDS = {
    "experiment": ("scenario", "planner", "interp", "policy", "runs",
                   "duration", "prior_duration", "seed", "record_rate"),
    "noise": ("sigma_f", "sigma_w", "sigma_bf", "sigma_bw", "gravity_z"),
    "sensors": ("imu_rate", "range_rate", "range_noise", "max_range",
                "round_robin"),
    "filter": ("sigma_pos0", "sigma_vel0", "sigma_theta0", "sigma_bf0",
               "sigma_bw0"),
    "kernel": ("signal_variance", "lengthscale_factor", "jitter"),
    "planner": ("workspace_half", "map_half", "max_nodes", "near_radius",
                "lam", "v_max", "a_max", "candidate_count", "min_duration",
                "budget", "attitude"),
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _convert(name, raw):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            lowered = str(raw).strip().lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        return str(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {raw!r}") from e


def load_config(path=None, overrides=None):
    """Config from an optional INI file plus explicit field overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        parser = configparser.ConfigParser()
        try:
            parser.read_string(p.read_text(encoding="utf-8"))
        except configparser.Error as e:
            raise ConfigError(f"cannot parse {p}: {e}") from e
        for section in parser.sections():
            if section not in _SECTION_FIELDS:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SECTION_FIELDS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                setattr(cfg, key, _convert(key, raw))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    return cfg.validate()


def dump_config(cfg):
    """Render a config back to its INI text (defaults included)."""
    lines = []
    for section, names in _SECTION_FIELDS.items():
        lines.append(f"[{section}]")
        for name in names:
            lines.append(f"{name} = {getattr(cfg, name)}")
        lines.append("")
    return "\n".join(lines)
