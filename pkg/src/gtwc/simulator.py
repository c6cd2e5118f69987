"""Monte-Carlo simulation of the two-way exchange.

Trials are generated in fixed blocks of :data:`BLOCK` trials. Block ``b``
draws its randomness from ``SeedSequence(seed, spawn_key=(b,))``, so the
numbers tied to a trial index never depend on ``batch_size`` or on the
number of worker threads; per-block partial sums are reduced in block order.
Normal variates use the Box-Muller transform on PCG64 uniforms.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .model import (
    ChannelParams,
    EncoderPair,
    InvalidInputError,
    NativeEncoderPair,
    optimal_combiners,
    unit_lower_inverse,
)

BLOCK = 4096


class MessageModel(str, enum.Enum):
    gaussian = "gaussian"
    binary = "binary"


@dataclass(frozen=True)
class SimConfig:
    trials: int = 100_000
    seed: int = 0
    message_model: MessageModel = MessageModel.gaussian
    batch_size: int = 65_536

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "message_model", MessageModel(self.message_model))


@dataclass(frozen=True)
class SimulationReport:
    emp_p1: float
    emp_p2: float
    emp_snr1: float
    emp_snr2: float
    stderr_p1: float
    stderr_p2: float
    stderr_snr1: float
    stderr_snr2: float
    bias1: float
    bias2: float
    stderr_bias1: float
    stderr_bias2: float
    err1: float | None
    err2: float | None
    stderr_err1: float | None
    stderr_err2: float | None
    trials: int
    seed: int


def worker_count():
    env = os.environ.get("GTWC_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def box_muller(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normals from pairs of uniforms (cosine branch only)."""
    u1 = 1.0 - rng.random(shape)  # (0, 1]
    u2 = rng.random(shape)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def draw_block(seed, block, count, n, model=MessageModel.gaussian):
    """Messages and unit-variance noise for one block of trials.

    Returns ``m1, m2`` of shape ``(count,)`` and ``z1, z2`` of shape
    ``(count, n)``; scale ``z`` by the noise standard deviations.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),)))
    z = box_muller(rng, (count, 2 * n))
    if MessageModel(model) is MessageModel.gaussian:
        m = box_muller(rng, (count, 2))
    else:
        m = np.where(rng.random((count, 2)) < 0.5, -1.0, 1.0)
    return m[:, 0], m[:, 1], z[:, :n], z[:, n:]


def trajectory(enc, params: ChannelParams, m1, m2, n1, n2):
    """Run the exchange step by step for given messages and noise.

    ``enc`` may be an :class:`EncoderPair` or a :class:`NativeEncoderPair`.
    Inputs broadcast over leading axes: ``m`` has shape ``(...)`` and the
    noises ``(..., n)``. At use ``k`` each side only touches receptions from
    uses ``< k``. Returns ``x1, x2, y1, y2``.
    """
    n = params.n
    if isinstance(enc, NativeEncoderPair):
        g1, f1, g2, f2, native = enc.g1_t, enc.f1_t, enc.g2_t, enc.f2_t, True
    elif isinstance(enc, EncoderPair):
        g1, f1, g2, f2, native = enc.g1, enc.f1, enc.g2, enc.f2, False
    else:
        raise InvalidInputError(f"unsupported encoder type {type(enc).__name__}")
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    if g1.size != n or n1.shape[-1] != n or n2.shape[-1] != n:
        raise InvalidInputError("encoder and noise lengths must match the blocklength")
    try:
        lead = np.broadcast_shapes(m1.shape, m2.shape, n1.shape[:-1])
    except ValueError:
        lead = None
    if n1.shape != n2.shape or n1.shape[:-1] != lead:
        raise InvalidInputError("message and noise shapes do not agree")
    shape = n1.shape
    x1 = np.zeros(shape)
    x2 = np.zeros(shape)
    y1 = np.zeros(shape)
    y2 = np.zeros(shape)
    r1 = np.zeros(shape)  # User 1's echo-free feedback y1 - F2 x1
    r2 = np.zeros(shape)  # User 2's feedback (y2, or y2 - F1 x2 in native form)
    for k in range(n):
        x1[..., k] = g1[k] * m1 + r1[..., :k] @ f1[k, :k]
        x2[..., k] = g2[k] * m2 + r2[..., :k] @ f2[k, :k]
        y2[..., k] = x1[..., k] + n1[..., k]
        y1[..., k] = x2[..., k] + n2[..., k]
        r1[..., k] = y1[..., k] - x1[..., :k] @ f2[k, :k]
        r2[..., k] = y2[..., k] - (x2[..., :k] @ f1[k, :k] if native else 0.0)
    return x1, x2, y1, y2


def decode(enc: EncoderPair, x1, y1, y2, m1, m2, decoders=None, params=None):
    """Message estimates after each user strips its own contribution."""
    if decoders is None:
        decoders = optimal_combiners(enc, params)
    inv = unit_lower_inverse(enc.f2 @ enc.f1)
    v2 = inv.T @ decoders.w2
    m2_hat = (y1 - np.multiply.outer(m1, enc.f2 @ enc.g1)) @ v2
    m1_hat = (y2 - np.multiply.outer(m2, enc.f1 @ enc.g2)) @ decoders.w1
    return m1_hat, m2_hat


def _block_sums(enc, params, decoders, seed, block, count, model):
    m1, m2, z1, z2 = draw_block(seed, block, count, params.n, model)
    x1, x2, y1, y2 = trajectory(enc, params, m1, m2, z1 * params.sigma1, z2 * params.sigma2)
    m1_hat, m2_hat = decode(enc, x1, y1, y2, m1, m2, decoders)
    e1, e2 = m1_hat - m1, m2_hat - m2
    e1s, e2s = e1 * e1, e2 * e2
    p1 = np.sum(x1 * x1, axis=1)
    p2 = np.sum(x2 * x2, axis=1)
    out = [p1.sum(), (p1 * p1).sum(), p2.sum(), (p2 * p2).sum(),
           e1.sum(), e1s.sum(), (e1s * e1s).sum(), e2.sum(), e2s.sum(), (e2s * e2s).sum()]
    if model is MessageModel.binary:
        out += [np.count_nonzero(np.sign(m1_hat) != m1), np.count_nonzero(np.sign(m2_hat) != m2)]
    else:
        out += [0, 0]
    return np.array(out, dtype=float)


def _mean_se(s, ss, n):
    mean = s / n
    var = max(ss / n - mean * mean, 0.0)
    return mean, np.sqrt(var / max(n - 1, 1))


def run_exchange(enc: EncoderPair, params: ChannelParams, cfg: SimConfig | None = None) -> SimulationReport:
    """Simulate ``cfg.trials`` independent exchanges and decode both messages."""
    cfg = cfg or SimConfig()
    if enc.n != params.n:
        raise InvalidInputError("encoder length does not match the blocklength")
    decoders = optimal_combiners(enc, params)
    counts = [BLOCK] * (cfg.trials // BLOCK)
    if cfg.trials % BLOCK:
        counts.append(cfg.trials % BLOCK)
    per_task = max(1, cfg.batch_size // BLOCK)
    tasks = [range(i, min(i + per_task, len(counts))) for i in range(0, len(counts), per_task)]

    def run(blocks):
        return [_block_sums(enc, params, decoders, cfg.seed, b, counts[b], cfg.message_model) for b in blocks]

    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = [p for chunk in pool.map(run, tasks) for p in chunk]
    else:
        parts = [p for t in tasks for p in run(t)]
    tot = np.zeros_like(parts[0])
    for p in parts:  # fixed block order keeps the reduction reproducible
        tot += p
    n = float(cfg.trials)
    emp_p1, se_p1 = _mean_se(tot[0], tot[1], n)
    emp_p2, se_p2 = _mean_se(tot[2], tot[3], n)
    snr, se_snr, bias, se_bias = [], [], [], []
    for s1, s2, s4 in (tot[4:7], tot[7:10]):
        mu, se_mu = _mean_se(s1, s2, n)
        var = max(s2 / n - mu * mu, np.finfo(float).tiny)
        # delta method on 1/var with var estimated from squared errors
        se_var = np.sqrt(max(s4 / n - (s2 / n) ** 2, 0.0) / max(n - 1, 1))
        snr.append(1.0 / var)
        se_snr.append(se_var / var ** 2)
        bias.append(mu)
        se_bias.append(se_mu)
    err = se_err = (None, None)
    if cfg.message_model is MessageModel.binary:
        err = (tot[10] / n, tot[11] / n)
        se_err = tuple(float(np.sqrt(e * (1 - e) / n)) for e in err)
    return SimulationReport(
        emp_p1=float(emp_p1), emp_p2=float(emp_p2),
        emp_snr1=float(snr[0]), emp_snr2=float(snr[1]),
        stderr_p1=float(se_p1), stderr_p2=float(se_p2),
        stderr_snr1=float(se_snr[0]), stderr_snr2=float(se_snr[1]),
        bias1=float(bias[0]), bias2=float(bias[1]),
        stderr_bias1=float(se_bias[0]), stderr_bias2=float(se_bias[1]),
        err1=None if err[0] is None else float(err[0]),
        err2=None if err[1] is None else float(err[1]),
        stderr_err1=se_err[0], stderr_err2=se_err[1],
        trials=cfg.trials, seed=int(cfg.seed),
    )


def predicted_error_rate(snr):
    """Sign-detector error rate for +-1 messages under Gaussian estimation error."""
    return float(ndtr(-np.sqrt(snr)))
