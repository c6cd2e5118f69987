"""Signal model for linear coding over a Gaussian two-way channel.

User 1 and User 2 exchange one real message each over ``n`` channel uses.
Each user transmits a linear combination of its own message and the
samples it has received so far::

    x1 = g1 m1 + F1 (y1 - F2 x1)
    x2 = g2 m2 + F2 y2
    y2 = x1 + n1,  y1 = x2 + n2

with ``F1``/``F2`` strictly lower triangular (causality). This module holds
the value types and all closed-form quantities built on them: noise
covariances after pre-processing, optimal combiners, SNRs and block powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular


class InvalidInputError(ValueError):
    """Raised when a model value violates its invariants."""


class DegenerateEncoderError(ValueError):
    """Raised when a message encoder carries no energy to the receiver."""


class NotPSDError(ValueError):
    """Raised when a matrix expected to be PSD has a clearly negative eigenvalue."""


@dataclass(frozen=True)
class Tolerances:
    symmetric: float = 1e-10
    psd: float = 1e-10
    unbiased: float = 1e-10


TOL = Tolerances()


def _finite(name, a):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return a


def _check_strictly_lower(name, mat, n):
    if mat.shape != (n, n):
        raise InvalidInputError(f"{name} must be {n}x{n}, got {mat.shape}")
    if np.any(np.triu(mat) != 0.0):
        raise InvalidInputError(f"{name} must be strictly lower triangular")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelParams:
    """Blocklength and the two link noise variances.

    ``sigma1_sq`` is the noise on the User 1 -> User 2 link, ``sigma2_sq``
    the noise on the reverse link.
    """

    n: int
    sigma1_sq: float
    sigma2_sq: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidInputError(f"blocklength must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("sigma1_sq", "sigma2_sq"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise InvalidInputError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)

    @property
    def sigma1(self):
        return float(np.sqrt(self.sigma1_sq))

    @property
    def sigma2(self):
        return float(np.sqrt(self.sigma2_sq))

    @property
    def alpha_threshold(self):
        """Smallest weight for which User 2 should send only on the last use."""
        return self.sigma2_sq / (self.sigma1_sq + self.sigma2_sq)


@dataclass(frozen=True)
class Targets:
    """Target SNRs for both messages and the power weight ``alpha``."""

    eta1: float
    eta2: float
    alpha: float

    def __post_init__(self):
        for name in ("eta1", "eta2"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise InvalidInputError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)
        a = float(self.alpha)
        if not 0.0 < a < 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {a}")
        object.__setattr__(self, "alpha", a)

    def last_use_regime(self, params: ChannelParams) -> bool:
        """Whether sending User 2's message on the last use alone is optimal."""
        return self.alpha >= params.alpha_threshold


@dataclass(frozen=True)
class EncoderPair:
    """Effective linear encoders ``(g1, F1, g2, F2)``.

    When ``f2_structured`` is set, ``F2`` may only be nonzero on its first
    subdiagonal (User 2 relays only its latest received sample).
    """

    g1: np.ndarray
    f1: np.ndarray
    g2: np.ndarray
    f2: np.ndarray
    f2_structured: bool = False

    def __post_init__(self):
        g1 = _finite("g1", self.g1).reshape(-1)
        n = g1.size
        g2 = _finite("g2", self.g2).reshape(-1)
        f1 = _finite("f1", self.f1)
        f2 = _finite("f2", self.f2)
        if g2.size != n:
            raise InvalidInputError("g1 and g2 must have the same length")
        _check_strictly_lower("f1", f1, n)
        _check_strictly_lower("f2", f2, n)
        if self.f2_structured and np.any(np.tril(f2, -2) != 0.0):
            raise InvalidInputError("structured f2 may only use the first subdiagonal")
        for name, val in (("g1", g1), ("f1", f1), ("g2", g2), ("f2", f2)):
            object.__setattr__(self, name, _frozen(val))

    @property
    def n(self):
        return self.g1.size

    def replace(self, **changes) -> "EncoderPair":
        fields = dict(g1=self.g1, f1=self.f1, g2=self.g2, f2=self.f2,
                      f2_structured=self.f2_structured)
        fields.update(changes)
        return EncoderPair(**fields)


@dataclass(frozen=True)
class NativeEncoderPair:
    """Encoders as each user would apply them to its own raw receptions.

    Here both users subtract their own echo: ``x2 = g2 m2 + F2 (y2 - F1 x2)``.
    """

    g1_t: np.ndarray
    f1_t: np.ndarray
    g2_t: np.ndarray
    f2_t: np.ndarray

    def __post_init__(self):
        g1 = _finite("g1_t", self.g1_t).reshape(-1)
        n = g1.size
        g2 = _finite("g2_t", self.g2_t).reshape(-1)
        if g2.size != n:
            raise InvalidInputError("g1_t and g2_t must have the same length")
        f1 = _finite("f1_t", self.f1_t)
        f2 = _finite("f2_t", self.f2_t)
        _check_strictly_lower("f1_t", f1, n)
        _check_strictly_lower("f2_t", f2, n)
        for name, val in (("g1_t", g1), ("f1_t", f1), ("g2_t", g2), ("f2_t", f2)):
            object.__setattr__(self, name, _frozen(val))

    @property
    def n(self):
        return self.g1_t.size


@dataclass(frozen=True)
class DecoderPair:
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class PowerReport:
    p1: float
    p2: float
    weighted: float
    snr1: float
    snr2: float
    alpha: float = field(default=float("nan"))


def subdiag_matrix(values, n=None):
    """Build an ``n x n`` matrix with ``values`` on the first subdiagonal.

    ``values[k]`` lands at row ``k + 1``, column ``k``; ``values`` therefore
    holds ``f_{2,2}, ..., f_{2,n}`` in that order.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    n = values.size + 1 if n is None else n
    if values.size != n - 1:
        raise InvalidInputError(f"need {n - 1} subdiagonal values, got {values.size}")
    return np.diag(values, -1)


def unit_lower_inverse(strict_lower):
    """Inverse of ``I + L`` for strictly lower ``L`` via forward substitution."""
    n = strict_lower.shape[0]
    a = np.eye(n) + strict_lower
    return solve_triangular(a, np.eye(n), lower=True, unit_diagonal=True)


def _check_params(enc, params):
    if enc.n != params.n:
        raise InvalidInputError(f"encoder length {enc.n} != blocklength {params.n}")


def q1_matrix(enc: EncoderPair, params: ChannelParams) -> np.ndarray:
    """Noise covariance seen by User 2 after removing its own echo."""
    _check_params(enc, params)
    n = params.n
    a = np.eye(n) + enc.f1 @ enc.f2
    q = a @ a.T * params.sigma1_sq + enc.f1 @ enc.f1.T * params.sigma2_sq
    return 0.5 * (q + q.T)


def q2_matrix(enc: EncoderPair, params: ChannelParams) -> np.ndarray:
    """Noise covariance seen by User 1 after pre-processing."""
    _check_params(enc, params)
    q = enc.f2 @ enc.f2.T * params.sigma1_sq + params.sigma2_sq * np.eye(params.n)
    return 0.5 * (q + q.T)


def _quad_inv(q, g):
    # q is SPD by construction; Cholesky keeps g' Q^{-1} g nonnegative.
    c = np.linalg.cholesky(q)
    z = solve_triangular(c, g, lower=True)
    return z, c


def optimal_combiners(enc: EncoderPair, params: ChannelParams) -> DecoderPair:
    """Whitened matched filters normalised so that ``w_i' g_i = 1``."""
    ws = []
    for g, q in ((enc.g1, q1_matrix(enc, params)), (enc.g2, q2_matrix(enc, params))):
        if not np.any(g):
            raise DegenerateEncoderError("message encoder is identically zero")
        qinv_g = np.linalg.solve(q, g)
        denom = float(g @ qinv_g)
        if denom <= 0:
            raise DegenerateEncoderError("g' Q^-1 g is not positive")
        ws.append(qinv_g / denom)
    return DecoderPair(w1=ws[0], w2=ws[1])


def rayleigh_snr(w, g, q):
    """SNR delivered by an arbitrary combiner ``w``."""
    return float((w @ g) ** 2 / (w @ q @ w))


def snr_pair(enc: EncoderPair, params: ChannelParams) -> tuple[float, float]:
    """SNRs ``g_i' Q_i^{-1} g_i`` reached with the optimal combiners."""
    out = []
    for g, q in ((enc.g1, q1_matrix(enc, params)), (enc.g2, q2_matrix(enc, params))):
        z, _ = _quad_inv(q, g)
        out.append(float(z @ z))
    return out[0], out[1]


def block_powers(enc: EncoderPair, params: ChannelParams) -> tuple[float, float]:
    """Expected block energies ``E||x1||^2`` and ``E||x2||^2``."""
    _check_params(enc, params)
    n = params.n
    eye = np.eye(n)
    f1, f2, g1, g2 = enc.f1, enc.f2, enc.g1, enc.g2
    f1f2 = f1 @ f2
    f2f1 = f2 @ f1
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    p1 = g1 @ g1 + np.sum((f1 @ g2) ** 2) + np.sum(f1f2 ** 2) * s1 + np.sum(f1 ** 2) * s2
    p2 = (np.sum(((eye + f2f1) @ g2) ** 2) + np.sum((f2 @ g1) ** 2)
          + np.sum((f2 @ (eye + f1f2)) ** 2) * s1 + np.sum(f2f1 ** 2) * s2)
    return float(p1), float(p2)


def transmit_powers(enc: EncoderPair, params: ChannelParams, alpha: float) -> PowerReport:
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    p1, p2 = block_powers(enc, params)
    snr1, snr2 = snr_pair(enc, params)
    return PowerReport(p1=p1, p2=p2, weighted=alpha * p1 + (1 - alpha) * p2,
                       snr1=snr1, snr2=snr2, alpha=alpha)


def matrix_sqrt_psd(m, tol=TOL.psd) -> np.ndarray:
    """Symmetric square root through an eigendecomposition.

    Eigenvalues in ``(-tol, 0)`` are treated as roundoff and clamped to zero.
    """
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > TOL.symmetric * scale:
        raise InvalidInputError("matrix is not symmetric")
    lam, u = np.linalg.eigh(0.5 * (m + m.T))
    if lam.size and lam.min() < -tol:
        raise NotPSDError(f"smallest eigenvalue {lam.min():.3e} is below -{tol:g}")
    lam = np.clip(lam, 0.0, None)
    s = (u * np.sqrt(lam)) @ u.T
    return 0.5 * (s + s.T)


def g1_from_q1(q1, f1, f2, params: ChannelParams) -> np.ndarray:
    """Map whitened message vector ``q1`` to ``g1 = Q1^{1/2} q1``."""
    n = params.n
    probe = EncoderPair(np.zeros(n), f1, np.zeros(n), f2)
    return matrix_sqrt_psd(q1_matrix(probe, params)) @ np.asarray(q1, dtype=float)


def reduced_powers(q1, f1, f2, params: ChannelParams, eta2: float, alpha: float) -> PowerReport:
    """Block powers written in terms of ``q1``, with the canonical ``g2``.

    Assumes ``F2`` is structured with its last subdiagonal entry at zero and
    that User 2 sends its message on the last use only.
    """
    q1 = np.asarray(q1, dtype=float)
    n = params.n
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    eye = np.eye(n)
    f1f2 = f1 @ f2
    p1 = (np.sum((q1 @ (eye + f1f2)) ** 2) * s1 + np.sum((q1 @ f1) ** 2) * s2
          + np.sum(f1f2 ** 2) * s1 + np.sum(f1 ** 2) * s2)
    probe = EncoderPair(np.zeros(n), f1, np.zeros(n), f2)
    p = matrix_sqrt_psd(q1_matrix(probe, params)) @ q1
    g2_sq = eta2 * s2
    p2 = (g2_sq + np.sum((f2 @ p) ** 2) + np.sum((f2 @ (eye + f1f2)) ** 2) * s1
          + np.sum((f2 @ f1) ** 2) * s2)
    return PowerReport(p1=float(p1), p2=float(p2), weighted=float(alpha * p1 + (1 - alpha) * p2),
                       snr1=float(q1 @ q1), snr2=float(eta2), alpha=alpha)


def native_to_effective(nat: NativeEncoderPair) -> EncoderPair:
    """Untangle the users' mutual echo cancellation into effective encoders."""
    f1t, f2t = nat.f1_t, nat.f2_t
    inv_b = unit_lower_inverse(f2t @ f1t)
    g2 = inv_b @ nat.g2_t
    f2 = np.tril(inv_b @ f2t, -1)
    a_strict = -f1t @ (inv_b - np.eye(nat.n)) @ f2t
    inv_a = unit_lower_inverse(np.tril(a_strict, -1))
    g1 = inv_a @ nat.g1_t
    f1 = np.tril(inv_a @ f1t, -1)
    return EncoderPair(g1=g1, f1=f1, g2=g2, f2=f2)


def effective_to_native(eff: EncoderPair) -> NativeEncoderPair:
    """Inverse of :func:`native_to_effective`.

    The defining relations ``F2t = F2 + F2t F1t F2`` and
    ``F1t = F1 - F1t (F2 - F2t) F1`` only couple a subdiagonal band to
    strictly lower bands of the unknowns, so ``n`` substitution sweeps
    settle every band exactly.
    """
    n = eff.n
    f1, f2 = eff.f1, eff.f2
    f1t, f2t = f1.copy(), f2.copy()
    for _ in range(n):
        new_f2t = np.tril(f2 + f2t @ f1t @ f2, -1)
        new_f1t = np.tril(f1 - f1t @ (f2 - new_f2t) @ f1, -1)
        if np.array_equal(new_f1t, f1t) and np.array_equal(new_f2t, f2t):
            break
        f1t, f2t = new_f1t, new_f2t
    else:
        chk = native_to_effective(NativeEncoderPair(eff.g1, f1t, eff.g2, f2t))
        if not (np.allclose(chk.f1, f1, atol=1e-8) and np.allclose(chk.f2, f2, atol=1e-8)):
            raise ArithmeticError("band recursion for the native encoders did not settle")
    eye = np.eye(n)
    g2t = (eye + f2t @ f1t) @ eff.g2
    a = eye - f1t @ (f2 - f2t)
    g1t = a @ eff.g1
    return NativeEncoderPair(g1_t=g1t, f1_t=f1t, g2_t=g2t, f2_t=f2t)


def power_profile(enc: EncoderPair, params: ChannelParams) -> dict:
    """Per-use expected powers.

    ``g1_power``/``g2_power`` are the message parts ``g[k]^2``;
    ``f2_power`` is User 2's relay part ``E[(F2 y2)[k]^2]``; ``x1_power``
    and ``x2_power`` are the full per-use transmit powers.
    """
    n = params.n
    eye = np.eye(n)
    f1, f2, g1, g2 = enc.f1, enc.f2, enc.g1, enc.g2
    s1, s2 = params.sigma1_sq, params.sigma2_sq
    f1g2 = f1 @ g2
    cov_y2 = np.outer(g1, g1) + np.outer(f1g2, f1g2) + q1_matrix(enc, params)
    a = eye + f1 @ f2
    # x1 = g1 m1 + F1 g2 m2 + F1 F2 n1 + F1 n2
    cov_x1 = (np.outer(g1, g1) + np.outer(f1g2, f1g2)
              + (f1 @ f2) @ (f1 @ f2).T * s1 + f1 @ f1.T * s2)
    b = (eye + f2 @ f1) @ g2
    f2g1 = f2 @ g1
    cov_x2 = (np.outer(b, b) + np.outer(f2g1, f2g1)
              + (f2 @ a) @ (f2 @ a).T * s1 + (f2 @ f1) @ (f2 @ f1).T * s2)
    return {
        "k": np.arange(1, n + 1),
        "g1_power": g1 ** 2,
        "g2_power": g2 ** 2,
        "f2_power": np.diag(f2 @ cov_y2 @ f2.T).copy(),
        "x1_power": np.diag(cov_x1).copy(),
        "x2_power": np.diag(cov_x2).copy(),
    }
