"""Experiment configuration: ``key = value`` files plus flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ChannelParams, InvalidInputError, Targets
from .optimizer import OptimizerConfig
from .simulator import SimConfig

DEFAULTS = {
    "n": 7,
    "sigma1_sq": 1.0,
    "sigma2_sq": 0.5,
    "eta1": 10.0,
    "eta2": 10.0,
    "alpha": 0.8,
    "restarts": 30,
    "seed": 0,
    "eps": 1e-3,
    "max_outer": 200,
    "max_inner": 200,
    "trials": 1_000_000,
    "batch_size": 65_536,
    "message_model": "gaussian",
    "baseline": "two-way",
    "feedback_parity": "even",
    "samples": 1000,
    "n_min": 3,
    "n_max": 8,
    "alpha_values": "0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85,0.9,0.95",
    "n_values": "2,3,4,5,6,7,8,9",
    "out": None,
    "encoder": None,
}

INT_KEYS = {"n", "restarts", "seed", "max_outer", "max_inner", "trials", "batch_size",
            "samples", "n_min", "n_max"}
FLOAT_KEYS = {"sigma1_sq", "sigma2_sq", "eta1", "eta2", "alpha", "eps"}
BASELINES = ("open-loop", "one-way", "two-way")


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise InvalidInputError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key, value):
    if value is None:
        return None
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise InvalidInputError(f"bad value for {key}: {value!r}") from None
    return value


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"bad number list: {text!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    params: ChannelParams
    targets: Targets
    optimizer: OptimizerConfig
    sim: SimConfig
    baseline: str = "two-way"
    feedback_parity: str = "even"
    samples: int = 1000
    n_range: tuple = (3, 8)
    alpha_values: list = field(default_factory=list)
    n_values: list = field(default_factory=list)
    output_path: str | None = None
    encoder_path: str | None = None


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge defaults, file values and flag overrides (flags win)."""
    raw = dict(DEFAULTS)
    raw.update(file_values or {})
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    v = {k: _coerce(k, val) for k, val in raw.items()}
    if v["baseline"] not in BASELINES:
        raise InvalidInputError(f"baseline must be one of {', '.join(BASELINES)}")
    if not 0 <= v["seed"] < 2 ** 64:
        raise InvalidInputError("seed must be an unsigned 64-bit integer")
    params = ChannelParams(v["n"], v["sigma1_sq"], v["sigma2_sq"])
    targets = Targets(v["eta1"], v["eta2"], v["alpha"])
    opt = OptimizerConfig(eps=v["eps"], max_outer=v["max_outer"], max_inner=v["max_inner"],
                          restarts=v["restarts"], seed=v["seed"])
    sim = SimConfig(trials=v["trials"], seed=v["seed"], message_model=v["message_model"],
                    batch_size=v["batch_size"])
    alphas = _float_list(v["alpha_values"])
    ns = [int(x) for x in _float_list(v["n_values"])]
    for a in alphas:
        if not params.alpha_threshold <= a < 1:
            raise InvalidInputError(
                f"sweep alpha {a:g} outside [{params.alpha_threshold:.4g}, 1)")
    if any(n < 2 for n in ns):
        raise InvalidInputError("sweep blocklengths must be >= 2")
    if not 3 <= v["n_min"] <= v["n_max"]:
        raise InvalidInputError("need 3 <= n_min <= n_max")
    if v["samples"] < 1:
        raise InvalidInputError("samples must be >= 1")
    return ExperimentConfig(
        params=params, targets=targets, optimizer=opt, sim=sim,
        baseline=v["baseline"], feedback_parity=v["feedback_parity"],
        samples=v["samples"], n_range=(v["n_min"], v["n_max"]),
        alpha_values=alphas, n_values=ns,
        output_path=v["out"], encoder_path=v["encoder"],
    )


def fmt(value):
    """Render a CSV cell: 12 significant digits for reals."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return "" if value is None else str(value)
