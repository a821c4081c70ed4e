"""Optimal execution under transient impact: closed-form oracle and actor-critic experiments."""

import json
from pathlib import Path

from . import _core
from ._core import (
    CheckpointError,
    ConfigError,
    DomainError,
    SingularMatrixError,
    expected_profit,
    kernel_value,
    optimal_strategy,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DomainError",
    "SingularMatrixError",
    "config",
    "expected_profit",
    "kernel_value",
    "optimal_strategy",
    "preset_names",
    "run_baselines",
    "run_convergence",
    "run_eval",
    "run_online",
    "run_oracle",
    "simulate",
]


def preset_names():
    return list(_core.preset_names())


def config(preset="exp", overrides=(), base=None):
    """Config dict for a preset (or `base`), with `key=value` overrides applied."""
    text = json.dumps(base) if base is not None else _core.preset_json(preset)
    return json.loads(_core.apply_overrides_json(text, list(overrides)))


def _text(cfg):
    return json.dumps(cfg if cfg is not None else config())


def simulate(trades, cfg=None, seed=0):
    return _core.simulate(_text(cfg), list(trades), seed)


def run_oracle(cfg, out):
    return _core.run_oracle(_text(cfg), Path(out))


def run_baselines(cfg, out):
    return _core.run_baselines(_text(cfg), Path(out))


def run_convergence(cfg, out):
    return _core.run_convergence(_text(cfg), Path(out))


def run_online(cfg, checkpoint, out):
    return _core.run_online(_text(cfg), Path(checkpoint), Path(out))


def run_eval(checkpoint, cfg, out):
    return _core.run_eval(Path(checkpoint), _text(cfg), Path(out))
