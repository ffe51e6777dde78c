"""Run configuration: sectioned JSON with defaults, strict keys and CLI overrides."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from skds.errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "kernel": {"family": "rbf", "bandwidth": "median"},
    "model": {"kind": "linear", "hidden": 8, "diffusion": "diag_exp"},
    "train": {
        "steps": 5000,
        "batch_size": 256,
        "lr": 0.01,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
        "lambda_sparsity": 0.001,
        "estimator": "linear_pairs",
        "grad_clip": 10.0,
    },
    "sim": {
        "dt": 0.01,
        "burn_in_steps": 5000,
        "thinning": 10,
        "n_samples": 1000,
        "init": "zeros",
        "init_scale": 1.0,
        "divergence_threshold": 1e6,
        "chains": 1,
    },
    "data": {
        "kind": "sde",
        "graph_kind": "er",
        "d": 5,
        "n_per_env": 1000,
        "n_train_env": 3,
        "n_test_env": 2,
        "shift_magnitude": 2.0,
        "expected_degree": 3.0,
    },
}

_CHOICES = {
    ("kernel", "family"): ("rbf", "tilted_rbf", "imq_plus"),
    ("model", "kind"): ("linear", "mlp"),
    ("model", "diffusion"): ("diag_exp", "basis_cone"),
    ("train", "estimator"): ("linear_pairs", "u_statistic"),
    ("sim", "init"): ("zeros", "gaussian"),
    ("data", "kind"): ("sde", "scm"),
    ("data", "graph_kind"): ("er", "sf"),
}


def _check_type(path, default, value):
    if value is None and path in (("train", "grad_clip"),):
        return value
    if path == ("kernel", "bandwidth"):
        if value == "median":
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0:
            return float(value)
        raise ConfigError("kernel.bandwidth must be a positive number or 'median'")
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{'.'.join(path)}: expected {type(default).__name__}, got {value!r}")
    allowed = _CHOICES.get(path)
    if allowed and value not in allowed:
        raise ConfigError(f"{'.'.join(path)}: {value!r} not in {allowed}")
    return value


def merge(base: dict, override: dict, path=()) -> dict:
    """Deep-merge ``override`` into a copy of ``base``; unknown keys raise ConfigError."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        p = path + (k,)
        if k not in base:
            raise ConfigError(f"unknown config key {'.'.join(p)!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{'.'.join(p)} must be an object")
            out[k] = merge(base[k], v, p)
        else:
            out[k] = _check_type(p, base[k], v)
    return out


def resolve(file_config: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the config file, then CLI overrides (``None`` values skipped)."""
    cfg = merge(DEFAULTS, file_config or {})
    cleaned = _drop_none(overrides or {})
    return merge(cfg, cleaned)


def _drop_none(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            sub = _drop_none(v)
            if sub:
                out[k] = sub
        elif v is not None:
            out[k] = v
    return out


def load(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    return data
