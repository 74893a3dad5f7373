"""Simulation configuration: defaults, YAML loading, validation, overrides."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .control import Gains
from .errors import ConfigError
from .rod import RodSpec, rod_spec_from_dict
from .trajectory import SCENARIOS, KIND_TO_NAME, Scenario, build_scenario

VEHICLE_MASS = 0.135
GRAVITY = 9.81

METHODS = ("adaptive-phi", "adaptive-phib", "pid-low", "pid-high", "pd", "oracle")
ADAPTIVE_METHODS = {"adaptive-phi": "plane", "adaptive-phib": "physical"}

DEFAULTS: dict = {
    "scenario": {"name": "exp1", "params": {}},
    "duration": None,
    "trials": 10,
    "methods": ["pid-low", "adaptive-phi", "adaptive-phib"],
    "seed": 0,
    "dt_physics": 0.001,
    "dt_control": 0.01,
    "noise_sigma": 0.05,
    "vehicle_mass": VEHICLE_MASS,
    "gravity": GRAVITY,
    "thrust_lag": 0.0,
    "initial_error": [0.0, 0.0, 0.0],
    "du_limit": 0.25,
    "divergence": {"position": 100.0, "velocity": 50.0},
    "rod": {"length": 1.2, "r0": 1.05, "segments": 16, "zone_rigidity": [0.05, 0.035],
            "zone_mass": [0.030, 0.018], "split": 0.4, "damping": 0.05},
    "gains": {
        "adaptive": {"k_p": 4.0, "k_d": 1.2, "u_max": 2.0 * VEHICLE_MASS * GRAVITY},
        "pid-low": {"k_p": 4.0, "k_d": 1.2, "k_i": 0.4, "i_max": 2.0, "u_max": 2.0 * VEHICLE_MASS * GRAVITY},
        "pid-high": {"k_p": 4.0, "k_d": 1.2, "k_i": 0.8, "i_max": 2.0, "u_max": 2.0 * VEHICLE_MASS * GRAVITY},
    },
    "estimator": {"order": 3, "lambda": 0.0, "p0": 1.0, "scheme": "euler", "delay_steps": 1,
                  "snapshot_interval": 5.0},
    "validation": {"enabled": False, "weight_scale": 0.1, "seed": 12345},
}


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class SimConfig:
    """Resolved, validated configuration. ``raw`` is the full nested mapping."""

    raw: dict
    rod: RodSpec = field(repr=False)
    scenario: Scenario = field(repr=False)
    gains: dict = field(repr=False)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def duration(self) -> float:
        d = self.raw["duration"]
        return self.scenario.duration if d is None else float(d)

    @property
    def substeps(self) -> int:
        return int(round(self.raw["dt_control"] / self.raw["dt_physics"]))

    @property
    def mass(self) -> float:
        return float(self.raw["vehicle_mass"])

    @property
    def validation(self) -> bool:
        return bool(self.raw["validation"]["enabled"])

    def with_overrides(self, **changes) -> "SimConfig":
        return resolve(deep_merge(self.raw, changes))

    def snapshot(self) -> dict:
        return copy.deepcopy(self.raw)


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(path, msg)


def _num(raw: dict, path: str) -> float:
    node: Any = raw
    for part in path.split("."):
        _require(isinstance(node, dict) and part in node, path, "missing field")
        node = node[part]
    _require(isinstance(node, (int, float)) and not isinstance(node, bool) and math.isfinite(node),
             path, f"expected a finite number, got {node!r}")
    return float(node)


def resolve(raw: dict) -> SimConfig:
    """Validate a merged mapping and build the runtime objects.

    Raises
    ------
    ConfigError
        With the dotted path of the first invalid field.
    """
    raw = deep_merge(DEFAULTS, raw)
    unknown = set(raw) - set(DEFAULTS)
    _require(not unknown, ",".join(sorted(unknown)), "unknown top-level field")

    dtp, dtc = _num(raw, "dt_physics"), _num(raw, "dt_control")
    _require(dtp > 0, "dt_physics", "must be > 0")
    _require(dtc > 0, "dt_control", "must be > 0")
    ratio = dtc / dtp
    _require(abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1, "dt_control",
             "must be an integer multiple of dt_physics")
    _require(_num(raw, "noise_sigma") >= 0, "noise_sigma", "must be >= 0")
    _require(isinstance(raw["seed"], int), "seed", "must be an integer")
    _require(isinstance(raw["trials"], int) and raw["trials"] >= 0, "trials", "must be a non-negative integer")
    m = _num(raw, "vehicle_mass")
    _require(m > 0, "vehicle_mass", "must be > 0")
    g = _num(raw, "gravity")
    _require(_num(raw, "thrust_lag") >= 0, "thrust_lag", "must be >= 0")
    _require(_num(raw, "du_limit") > 0, "du_limit", "must be > 0")
    ie = raw["initial_error"]
    _require(isinstance(ie, list) and len(ie) == 3
             and all(isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in ie),
             "initial_error", "must be a list of three finite numbers")
    if raw["duration"] is not None:
        _require(_num(raw, "duration") >= 0, "duration", "must be >= 0")

    methods = raw["methods"]
    _require(isinstance(methods, list) and methods, "methods", "must be a non-empty list")
    for i, meth in enumerate(methods):
        _require(meth in METHODS, f"methods[{i}]", f"unknown method {meth!r}; choose from {METHODS}")

    est = raw["estimator"]
    _require(isinstance(est.get("order"), int) and est["order"] >= 1, "estimator.order", "must be an integer >= 1")
    _require(_num(raw, "estimator.lambda") >= 0, "estimator.lambda", "must be >= 0")
    _require(_num(raw, "estimator.p0") > 0, "estimator.p0", "must be > 0")
    _require(est.get("scheme") in ("euler", "exact"), "estimator.scheme", "must be 'euler' or 'exact'")
    _require(est.get("delay_steps") in (0, 1), "estimator.delay_steps", "must be 0 or 1")
    _require(_num(raw, "estimator.snapshot_interval") > 0, "estimator.snapshot_interval", "must be > 0")

    # validation runs may probe below the adaptive k_d bound on purpose
    probing = bool(raw["validation"].get("enabled"))
    gains = {}
    for name in ("adaptive", "pid-low", "pid-high"):
        node = raw["gains"].get(name)
        _require(isinstance(node, dict), f"gains.{name}", "missing gain profile")
        vals = {k: _num(raw, f"gains.{name}.{k}") for k in node}
        try:
            gain = Gains(**vals)
        except TypeError as exc:
            raise ConfigError(f"gains.{name}", str(exc)) from None
        try:
            gain.validate(m, adaptive=(name == "adaptive" and not probing))
        except ValueError as exc:
            field_name = str(exc).split()[0]
            raise ConfigError(f"gains.{name}.{field_name}", str(exc)) from None
        gains[name] = gain
    gains["pd"] = Gains(gains["adaptive"].k_p, gains["adaptive"].k_d, 0.0, gains["adaptive"].u_max)
    gains["oracle"] = gains["adaptive"]
    for meth in ADAPTIVE_METHODS:
        gains[meth] = gains["adaptive"]

    try:
        rod = rod_spec_from_dict({**raw["rod"], "g": g})
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("rod", str(exc)) from None

    sc = raw["scenario"]
    name = sc.get("name") or sc.get("kind")
    _require(KIND_TO_NAME.get(name, name) in SCENARIOS, "scenario.name",
             f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    try:
        scenario = build_scenario(name, sc.get("params") or {})
    except (TypeError, ValueError) as exc:
        raise ConfigError("scenario.params", str(exc)) from None
    cfg = SimConfig(raw, rod, scenario, gains)
    _require(cfg.duration <= scenario.duration + 1e-9, "duration",
             f"exceeds the scenario length {scenario.duration}")
    return cfg


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> SimConfig:
    """Load a YAML file (or the defaults) and apply nested ``overrides``."""
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"not valid YAML: {exc}") from None
        _require(isinstance(raw, dict), str(path), "top level must be a mapping")
    return resolve(deep_merge(raw, overrides or {}))


def parse_assignment(text: str) -> dict:
    """``"a.b.c=3"`` -> ``{"a": {"b": {"c": 3}}}`` with YAML-typed values."""
    if "=" not in text:
        raise ConfigError(text, "override must look like key.path=value")
    key, value = text.split("=", 1)
    out: dict = {}
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = yaml.safe_load(value)
    return out


def dump_config(raw: dict) -> str:
    return yaml.safe_dump(raw, sort_keys=True)
