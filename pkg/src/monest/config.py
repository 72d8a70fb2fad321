"""Strict scenario-configuration schema.

Configs are plain JSON objects; unknown keys are rejected with a list of
offenders so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import copy
import json

__all__ = ["ConfigError", "SCENARIO_IDS", "default_config", "validate_config",
           "load_config", "set_by_path"]

SCENARIO_IDS = ("sine", "brake", "neuro")


class ConfigError(ValueError):
    pass


_NUMBER = (int, float)

# key -> (allowed types, default).  None default means "scenario decides".
_COMMON = {
    "scenario": (str, None),
    "tf": (_NUMBER, None),
    "h": (_NUMBER, None),
    "seed": (int, 0),
    "record_stride": (int, 1),
    "plant": (dict, {}),
    "estimator": (dict, {}),
    "analysis": (dict, {}),
}

_SCHEMAS = {
    "sine": {
        "tf": 50.0,
        "h": 1e-3,
        "plant": {
            "theta_true": (_NUMBER, 1.0),
            "x0": (list, [-2.985, 0.0]),
            "dither_amp": (_NUMBER, 0.1),
            "dither_freq": (_NUMBER, 2.0),
            "hop_amp": (_NUMBER, 0.0),
            "hop_period": (_NUMBER, 6.0),
            "hop_ramp": (_NUMBER, 1.0),
            "with_psi": (bool, True),
        },
        "estimator": {
            "K": (_NUMBER, 1.0),
            "Gamma": (_NUMBER, 1.0),
            "theta_hat0": (_NUMBER, None),
        },
        "analysis": {
            "pe_window": (_NUMBER, 3.2),
            "envelope_check": (bool, True),
            "bound_check": (bool, True),
        },
    },
    "brake": {
        "tf": 60.0,
        "h": 1e-4,
        "plant": {
            "mode": ((str,) + _NUMBER, "adaptive"),
            "x1_0": (_NUMBER, None),
            "x3_0": (_NUMBER, 0.02),
            "profile": (list, None),
            "feedforward": (str, "measured"),
        },
        "estimator": {
            "gamma": (_NUMBER, 100.0),
            "K_xi": (_NUMBER, None),
            "eps0": (_NUMBER, 0.001),
            "theta_I0": (_NUMBER, 0.0),
        },
        "analysis": {
            "pe_window": (_NUMBER, 0.5),
        },
    },
    "neuro": {
        "tf": 80.0,
        "h": 2e-3,
        "plant": {
            "N": (int, 20),
            "image": (str, "matched_p1"),
            "blur_theta1": (_NUMBER, 2.0),
            "T": (_NUMBER, 100.0),
            "theta0": (_NUMBER, 1.0),
            "harmonize_sensory_lag": (bool, True),
            "estimate_bound": (_NUMBER, 1000.0),
            "P1_file": (str, None),
            "P2_file": (str, None),
            "image_file": (str, None),
        },
        "estimator": {
            "theta_I0": (_NUMBER, 1.0),
        },
        "analysis": {},
    },
}


def default_config(scenario: str) -> dict:
    """Fully populated default configuration for a scenario id."""
    if scenario not in SCENARIO_IDS:
        raise ConfigError(f"unknown scenario {scenario!r}; known: {list(SCENARIO_IDS)}")
    schema = _SCHEMAS[scenario]
    cfg = {
        "scenario": scenario,
        "tf": schema["tf"],
        "h": schema["h"],
        "seed": 0,
        "record_stride": 1,
        "plant": {},
        "estimator": {},
        "analysis": {},
    }
    for section in ("plant", "estimator", "analysis"):
        for key, (_, default) in schema[section].items():
            cfg[section][key] = copy.deepcopy(default)
    if scenario == "neuro":
        cfg["record_stride"] = 40
    return cfg


def _check_type(path, value, types):
    if isinstance(types, tuple):
        ok = isinstance(value, types)
    else:
        ok = isinstance(value, types)
    # bool is an int subclass; require exact bool where bool is expected
    if ok and isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        ok = False
    if not ok:
        raise ConfigError(f"config key {path!r} has invalid type {type(value).__name__}")


def validate_config(raw: dict) -> dict:
    """Validate a raw config dict and return it with defaults filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "scenario" not in raw:
        raise ConfigError("config is missing the 'scenario' key")
    scenario = raw["scenario"]
    if scenario not in SCENARIO_IDS:
        raise ConfigError(f"unknown scenario {scenario!r}; known: {list(SCENARIO_IDS)}")
    schema = _SCHEMAS[scenario]

    unknown = sorted(set(raw) - set(_COMMON))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    cfg = default_config(scenario)
    for key in ("tf", "h", "seed", "record_stride"):
        if key in raw:
            _check_type(key, raw[key], _COMMON[key][0])
            cfg[key] = raw[key]
    for section in ("plant", "estimator", "analysis"):
        sub = raw.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        allowed = schema[section]
        unknown = sorted(set(sub) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown keys in {section!r}: {unknown}")
        for key, value in sub.items():
            if value is not None:
                _check_type(f"{section}.{key}", value, allowed[key][0])
            cfg[section][key] = value
    if cfg["tf"] < 0:
        raise ConfigError("tf must be non-negative")
    if cfg["h"] <= 0:
        raise ConfigError("h must be positive")
    if cfg["record_stride"] < 1:
        raise ConfigError("record_stride must be >= 1")
    return cfg


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return validate_config(json.load(fh))


def set_by_path(cfg: dict, dotted: str, value):
    """Set a config entry addressed as e.g. 'plant.mode' (sweep axes)."""
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"axis path {dotted!r} not resolvable at {p!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"axis path {dotted!r} names an unknown key {parts[-1]!r}")
    node[parts[-1]] = value
    return cfg
