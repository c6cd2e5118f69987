"""Sum-of-ratios linear fractional program over a scaled simplex.

Minimises ``sum_i u_i'x / (1 + m_i'x)`` subject to ``x >= 0`` and
``sum(x) = budget``. All ``u_i, m_i`` are nonnegative, so every denominator
is at least one and the objective is smooth on the feasible set; it is not
convex, which is why the solver runs from several starting points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FractionalSolverConfig:
    starts: int = 8
    max_iter: int = 5000
    tol: float = 1e-7
    seed: int = 0


@dataclass(frozen=True)
class FractionalProgram:
    u: np.ndarray  # (terms, n)
    m: np.ndarray  # (terms, n)
    budget: float

    @property
    def n(self):
        return self.u.shape[1]

    def objective(self, x):
        return float(np.sum((self.u @ x) / (1.0 + self.m @ x)))

    def gradient(self, x):
        num = self.u @ x
        den = 1.0 + self.m @ x
        return (self.u / den[:, None] - (num / den ** 2)[:, None] * self.m).sum(axis=0)


@dataclass(frozen=True)
class FractionalResult:
    x: np.ndarray
    objective: float
    stationarity: float
    converged: bool


def project_simplex(v, budget):
    """Euclidean projection onto ``{x >= 0, sum(x) = budget}``."""
    v = np.asarray(v, dtype=float)
    mu = np.sort(v)[::-1]
    css = np.cumsum(mu) - budget
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(mu - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def stationarity(fp: FractionalProgram, x):
    """Norm of the projected-gradient step ``x - P(x - grad)``."""
    return float(np.linalg.norm(x - project_simplex(x - fp.gradient(x), fp.budget)))


def _spg(fp, x, max_iter, tol, memory=10):
    # spectral projected gradient (nonmonotone Armijo along d = P(x - lam g) - x)
    f = fp.objective(x)
    g = fp.gradient(x)
    lam = 1.0 / max(np.linalg.norm(x - project_simplex(x - g, fp.budget)), 1e-12)
    history = [f]
    best_x, best_f = x, f
    for _ in range(max_iter):
        if np.linalg.norm(x - project_simplex(x - g, fp.budget)) <= tol:
            break
        d = project_simplex(x - lam * g, fp.budget) - x
        gd = g @ d
        if gd >= 0:
            break
        f_ref = max(history)
        t = 1.0
        while True:
            x_new = x + t * d
            f_new = fp.objective(x_new)
            if f_new <= f_ref + 1e-4 * t * gd or t < 1e-12:
                break
            t *= 0.5
        x_new = np.maximum(x_new, 0.0)
        g_new = fp.gradient(x_new)
        s, y = x_new - x, g_new - g
        sy = s @ y
        lam = float(np.clip((s @ s) / sy, 1e-10, 1e10)) if sy > 0 else 1e10
        x, f, g = x_new, f_new, g_new
        history = (history + [f])[-memory:]
        if f < best_f:
            best_x, best_f = x, f
        if t < 1e-12:
            break
    return best_x, best_f, stationarity(fp, best_x) <= tol


def solve_fractional(fp: FractionalProgram, cfg: FractionalSolverConfig | None = None) -> FractionalResult:
    """Multi-start projected-gradient solve of a :class:`FractionalProgram`.

    Starts are the vertex ``budget * e_n`` (which certifies the trivial upper
    bound), the simplex centre, and ``cfg.starts`` random interior points.
    The best local solution is returned.
    """
    cfg = cfg or FractionalSolverConfig()
    n, b = fp.n, fp.budget
    rng = np.random.default_rng(cfg.seed)
    starts = [np.eye(n)[-1] * b, np.full(n, b / n)]
    starts += [rng.dirichlet(np.ones(n)) * b for _ in range(cfg.starts)]
    best = None
    for x0 in starts:
        x, f, ok = _spg(fp, x0, cfg.max_iter, cfg.tol)
        if best is None or f < best[1] - 1e-15:
            best = (x, f, ok)
    x, f, _ = best
    st = stationarity(fp, x)
    return FractionalResult(x=x, objective=f, stationarity=st, converged=st <= 1e-6)
