"""Iterative two-way optimisation of the linear encoders.

User 2 relays only its latest sample (single-subdiagonal ``F2``), never
relays on the last use, and sends its message on the last use only. What is
left is alternated between two blocks:

* sub-problem 1: with ``F2`` fixed, pick the whitened message vector ``q1``
  through a fractional program and ``F1`` in closed form;
* sub-problem 2: with ``q1`` and ``F1`` fixed, sweep the subdiagonal of
  ``F2`` coordinate by coordinate.

The best of several random initialisations is returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fractional import FractionalProgram, FractionalSolverConfig, solve_fractional
from .model import (
    ChannelParams,
    DecoderPair,
    EncoderPair,
    InvalidInputError,
    PowerReport,
    Targets,
    g1_from_q1,
    matrix_sqrt_psd,
    optimal_combiners,
    q1_matrix,
    q2_matrix,
    subdiag_matrix,
    transmit_powers,
)

log = logging.getLogger(__name__)


class PreconditionError(ValueError):
    """Raised when the weight lies outside the regime the optimiser handles."""


@dataclass(frozen=True)
class OptimizerConfig:
    eps: float = 1e-3
    max_outer: int = 200
    max_inner: int = 200
    restarts: int = 30
    seed: int = 0
    # add runs from zero relay gains and from the one-way relay patterns
    zero_start: bool = True
    fp_config: FractionalSolverConfig = field(default_factory=FractionalSolverConfig)

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidInputError("eps must be positive")
        for name in ("max_outer", "max_inner", "restarts"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")


@dataclass(frozen=True)
class OptimReport:
    enc: EncoderPair
    decoders: DecoderPair
    objective_trace: list
    powers: PowerReport
    restart_index: int
    seed: int
    converged: bool
    restart_objectives: list = field(default_factory=list)

    @property
    def objective(self):
        return self.powers.weighted


def _require_last_use_regime(params, targets):
    if not targets.last_use_regime(params):
        raise PreconditionError(
            f"alpha={targets.alpha:g} is below sigma2^2/(sigma1^2+sigma2^2)="
            f"{params.alpha_threshold:.6g}; the last-use message placement for "
            "User 2 is only optimal above that threshold")


def canonical_g2(params: ChannelParams, targets: Targets) -> np.ndarray:
    """User 2 message encoder: all energy on the last channel use."""
    _require_last_use_regime(params, targets)
    g2 = np.zeros(params.n)
    g2[-1] = np.sqrt(targets.eta2 * params.sigma2_sq)
    return g2


def zero_last_relay(f2) -> np.ndarray:
    """Zero the relay gain on the last channel use."""
    f2 = np.array(f2, dtype=float)
    f2[-1, -2] = 0.0
    return f2


def f2_entry(f2, i):
    """Subdiagonal entry ``f_{2,i}`` (1-based ``i`` in ``2..n``)."""
    return f2[i - 1, i - 2]


def solve_f1(q1, f2, params: ChannelParams) -> np.ndarray:
    """Power-minimising ``F1`` for fixed ``q1`` and structured ``F2``.

    Column ``i`` (1-based, ``2 <= i <= n-1``) is a scaled copy of the tail
    ``h_i = q1[i+1:]``; column 1 and column ``n`` stay empty.
    """
    q1 = np.asarray(q1, dtype=float)
    n = params.n
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    f1 = np.zeros((n, n))
    for i in range(2, n):
        f = f2_entry(f2, i)
        h = q1[i:]
        coef = -(f * s1 / (f * f * s1 + s2)) * q1[i - 2] / (1.0 + h @ h)
        f1[i:, i - 1] = coef * h
    return f1


def phi_terms(f1, q1, f2, params: ChannelParams) -> np.ndarray:
    """Per-column pieces of ``E||x1||^2`` for canonical ``g2``.

    Entry ``i - 1`` is the column-``i`` cost; the sum of all entries plus
    ``sigma1^2 (q_{n-1}^2 + q_n^2)`` equals ``E||x1||^2``.
    """
    q1 = np.asarray(q1, dtype=float)
    n = params.n
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    out = np.zeros(n - 1)
    col = f1[1:, 0]
    t = q1[1:] @ col
    out[0] = t * t * s2 + col @ col * s2
    for i in range(2, n):
        col = f1[i:, i - 1]
        f = f2_entry(f2, i)
        t = q1[i:] @ col
        out[i - 1] = (q1[i - 2] + f * t) ** 2 * s1 + t * t * s2 + col @ col * (f * f * s1 + s2)
    return out


def build_fractional_program(f2, params: ChannelParams, targets: Targets) -> FractionalProgram:
    """Fractional program in ``x = q1**2`` after eliminating ``F1``.

    Term ``i`` (``i <= n-2``) carries the relayed share of ``x_i`` and is
    divided by one plus the energy placed on uses ``i+2..n``; the last term
    collects the remaining linear costs.
    """
    n = params.n
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    u = np.zeros((n - 1, n))
    m = np.zeros((n - 1, n))
    for i in range(1, n - 1):
        f = f2_entry(f2, i + 1)
        den = f * f * s1 + s2
        u[i - 1, i - 1] = f * f * s1 * s1 / den
        m[i - 1, i + 1:] = 1.0
        u[n - 2, i - 1] = s1 * s2 / den
    u[n - 2, n - 2:] = s1
    return FractionalProgram(u=u, m=m, budget=targets.eta1)


def q1_from_x(x) -> np.ndarray:
    return np.sqrt(np.clip(np.asarray(x, dtype=float), 0.0, None))


def _assemble(q1, f1, f2, g2, params) -> EncoderPair:
    g1 = g1_from_q1(q1, f1, f2, params)
    return EncoderPair(g1=g1, f1=f1, g2=g2, f2=f2, f2_structured=True)


def c_coefficient(i, q1, f1, f2, p, params: ChannelParams, alpha) -> float:
    """Curvature ``c_i`` of the surrogate objective in ``f_{2,i}``."""
    n = params.n
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    col = f1[i:, i - 1]
    t = q1[i:] @ col
    c = 2 * alpha * s1 * (t * t + col @ col) + 2 * (1 - alpha) * (p[i - 2] ** 2 + s1)
    acc = 0.0
    for j in range(i + 1, n):
        acc += f1[j - 1, i - 1] ** 2 * f2_entry(f2, j + 1) ** 2
    for k in range(2, i - 1):
        acc += f1[i - 2, k - 1] ** 2 * f2_entry(f2, k) ** 2
    c += 2 * (1 - alpha) * s1 * acc
    c += 2 * s2 * (1 - alpha) * sum(f1[i - 2, j - 1] ** 2 for j in range(1, i - 1))
    return float(c)


def surrogate_derivative(i, q1, f1, f2, p, params, alpha) -> float:
    """Derivative of the weighted objective in ``f_{2,i}`` with ``p`` frozen."""
    t = q1[i:] @ f1[i:, i - 1]
    c = c_coefficient(i, q1, f1, f2, p, params, alpha)
    return float(2 * alpha * params.sigma1_sq * q1[i - 2] * t + c * f2_entry(f2, i))


def f2_sweep(q1, f1, f2, p, params: ChannelParams, alpha) -> np.ndarray:
    """One Gauss-Seidel pass over ``f_{2,2} .. f_{2,n-1}``."""
    f2 = np.array(f2, dtype=float)
    for i in range(2, params.n):
        t = q1[i:] @ f1[i:, i - 1]
        c = c_coefficient(i, q1, f1, f2, p, params, alpha)
        f2[i - 1, i - 2] = -2 * alpha * params.sigma1_sq * q1[i - 2] * t / c
    return f2


def update_f2(q1, f1, f2, params: ChannelParams, alpha, g2=None, eps=1e-3, max_inner=200):
    """Repeat :func:`f2_sweep` until the weighted objective settles.

    ``p = Q1^{1/2} q1`` is evaluated once on entry and then held fixed.
    Returns the new ``F2`` and the number of sweeps taken.
    """
    q1 = np.asarray(q1, dtype=float)
    n = params.n
    probe = EncoderPair(np.zeros(n), f1, np.zeros(n), f2)
    p = matrix_sqrt_psd(q1_matrix(probe, params)) @ q1
    if g2 is None:
        g2 = np.zeros(n)
    nu_new = _objective(q1, f1, f2, g2, params, alpha)
    sweeps = 0
    for sweeps in range(1, max_inner + 1):
        f2 = f2_sweep(q1, f1, f2, p, params, alpha)
        nu_old, nu_new = nu_new, _objective(q1, f1, f2, g2, params, alpha)
        if abs(nu_new - nu_old) <= eps:
            break
    return f2, sweeps


def _objective(q1, f1, f2, g2, params, alpha):
    return transmit_powers(_assemble(q1, f1, f2, g2, params), params, alpha).weighted


@dataclass
class _RestartResult:
    q1: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    objective: float
    trace: list
    converged: bool


def restart_seed(seed, index):
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def run_restart(params, targets, cfg: OptimizerConfig, f2_init, fp_seed=0) -> _RestartResult:
    """Alternate the two sub-problems from one ``F2`` initialisation."""
    n = params.n
    alpha = targets.alpha
    g2 = canonical_g2(params, targets)
    f2 = zero_last_relay(f2_init)
    fp_cfg = FractionalSolverConfig(starts=cfg.fp_config.starts, max_iter=cfg.fp_config.max_iter,
                                    tol=cfg.fp_config.tol, seed=fp_seed)
    trace = []
    best = None
    s_new = np.inf
    converged = False
    for _ in range(cfg.max_outer):
        fp = build_fractional_program(f2, params, targets)
        res = solve_fractional(fp, fp_cfg)
        q1 = q1_from_x(res.x)
        q1 *= np.sqrt(targets.eta1) / np.linalg.norm(q1)
        f1 = solve_f1(q1, f2, params)
        # the relay update can raise the objective once g1 is rescaled
        s_mid = _objective(q1, f1, f2, g2, params, alpha)
        if best is None or s_mid < best[3]:
            best = (q1, f1, f2.copy(), s_mid)
        f2, _ = update_f2(q1, f1, f2, params, alpha, g2=g2, eps=cfg.eps, max_inner=cfg.max_inner)
        s_old, s_new = s_new, _objective(q1, f1, f2, g2, params, alpha)
        trace.append(s_new)
        if best is None or s_new < best[3]:
            best = (q1, f1, f2.copy(), s_new)
        if abs(s_new - s_old) <= cfg.eps:
            converged = True
            break
    q1, f1, f2, obj = best
    return _RestartResult(q1=q1, f1=f1, f2=f2, objective=obj, trace=trace, converged=converged)


def deterministic_starts(n):
    """Zero relay gains, then unit gains on even and on odd uses ``2..n-1``."""
    uses = np.arange(2, n + 1)
    starts = [np.zeros((n, n))]
    for parity in (0, 1):
        vals = ((uses % 2 == parity) & (uses < n)).astype(float)
        starts.append(subdiag_matrix(vals, n))
    return starts


def two_way_optimize(params: ChannelParams, targets: Targets, cfg: OptimizerConfig | None = None) -> OptimReport:
    """Best-of-restarts two-way design of ``(g1, F1, g2, F2)``.

    Restart ``r`` draws its relay gains from ``U(0, 1)`` with a stream keyed
    on ``(cfg.seed, r)``. With ``cfg.zero_start`` one extra run starts from
    zero relay gains and is reported as index ``cfg.restarts``.
    """
    cfg = cfg or OptimizerConfig()
    _require_last_use_regime(params, targets)
    n = params.n
    g2 = canonical_g2(params, targets)
    results = []
    for r in range(cfg.restarts):
        rng = np.random.default_rng(restart_seed(cfg.seed, r))
        f2_init = subdiag_matrix(np.append(rng.uniform(0.0, 1.0, n - 2), 0.0), n)
        fp_seed = int(rng.integers(2 ** 63))
        results.append(run_restart(params, targets, cfg, f2_init, fp_seed))
    if cfg.zero_start:
        for f2_init in deterministic_starts(n):
            results.append(run_restart(params, targets, cfg, f2_init, cfg.seed))
    objs = [res.objective for res in results]
    win = int(np.argmin(objs))
    best = results[win]
    enc = _assemble(best.q1, best.f1, best.f2, g2, params)
    powers = transmit_powers(enc, params, targets.alpha)
    if not all(res.converged for res in results):
        log.info("%d of %d restarts hit max_outer", sum(not r.converged for r in results), len(results))
    return OptimReport(
        enc=enc,
        decoders=optimal_combiners(enc, params),
        objective_trace=best.trace,
        powers=powers,
        restart_index=win,
        seed=cfg.seed,
        converged=any(res.converged for res in results),
        restart_objectives=objs,
    )


def g2_cost_matrix(f1, f2, params: ChannelParams, alpha) -> np.ndarray:
    """Matrix whose smallest eigenvalue governs the ``g2`` sub-problem."""
    n = params.n
    probe = EncoderPair(np.zeros(n), f1, np.zeros(n), f2)
    s = matrix_sqrt_psd(q2_matrix(probe, params))
    a = np.eye(n) + f2 @ f1
    b = alpha * s @ f1.T @ f1 @ s + (1 - alpha) * s @ a.T @ a @ s
    return 0.5 * (b + b.T)


def check_eigen_bounds(f1, f2, params: ChannelParams, alpha, tol=1e-9):
    """Smallest eigenvalue of the ``g2`` matrix and whether it sits in the bounds.

    Returns ``(nu_min, lower_ok, upper_ok)`` for
    ``min(alpha s1, (1-alpha) s2) <= nu_min <= (1-alpha) s2``.
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    nu = float(np.linalg.eigvalsh(g2_cost_matrix(f1, f2, params, alpha))[0])
    lo = min(alpha * params.sigma1_sq, (1 - alpha) * params.sigma2_sq)
    hi = (1 - alpha) * params.sigma2_sq
    return nu, bool(nu >= lo - tol), bool(nu <= hi + tol)


def sample_eigen_bounds(samples, seed, n_min=3, n_max=8, sigma1_sq=1.0, sigma2_sq=0.5):
    """Evaluate the eigenvalue bounds on random feedback matrices.

    Sample ``i`` uses its own stream keyed on ``(seed, i)``: ``n`` uniform
    on ``n_min..n_max``, ``alpha ~ U(0.01, 0.99)``, ``F1`` entries
    ``N(0, s^2)`` and relay gains ``N(0, s^2)`` with ``s ~ U(0.1, 3)``; the
    relay gain on the last use is zero. A bound violation is logged, not
    raised.
    """
    rows = []
    for i in range(samples):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        n = int(rng.integers(n_min, n_max + 1))
        alpha = float(rng.uniform(0.01, 0.99))
        s = rng.uniform(0.1, 3.0)
        f1 = np.tril(rng.normal(0.0, s, (n, n)), -1)
        f2 = zero_last_relay(subdiag_matrix(rng.normal(0.0, s, n - 1), n))
        params = ChannelParams(n, sigma1_sq, sigma2_sq)
        nu, lo, hi = check_eigen_bounds(f1, f2, params, alpha)
        if not (lo and hi):
            log.warning("eigenvalue bound violated: sample=%d n=%d alpha=%.6g nu_min=%.12g", i, n, alpha, nu)
        rows.append({"seed": seed, "sample": i, "n": n, "alpha": alpha,
                     "nu_min": nu, "lower_ok": lo, "upper_ok": hi})
    return rows
