"""Reference schemes: open loop and the one-way feedback design."""

from __future__ import annotations

import enum
import logging

import numpy as np

from .fractional import FractionalProgram, FractionalSolverConfig, solve_fractional
from .model import ChannelParams, EncoderPair, Targets, g1_from_q1, subdiag_matrix
from .optimizer import build_fractional_program, canonical_g2, q1_from_x, solve_f1

log = logging.getLogger(__name__)


class BaselineKind(str, enum.Enum):
    open_loop = "open_loop"
    one_way = "one_way"


def open_loop(params: ChannelParams, targets: Targets) -> EncoderPair:
    """No feedback; User 1 sends on the first use, User 2 on the last."""
    n = params.n
    g1 = np.zeros(n)
    g1[0] = np.sqrt(targets.eta1 * params.sigma1_sq)
    g2 = np.zeros(n)
    g2[-1] = np.sqrt(targets.eta2 * params.sigma2_sq)
    z = np.zeros((n, n))
    return EncoderPair(g1=g1, f1=z, g2=g2, f2=z, f2_structured=True)


def one_way_pattern(n, feedback_parity="even"):
    """Relay gains and User 1 message uses for the one-way adaptation.

    With ``feedback_parity="even"`` User 2 relays (unit gain) on the even
    uses ``2, 4, ...`` below ``n`` and User 1 places its message on the odd
    uses plus the last use. ``"odd"`` swaps the roles.
    """
    if feedback_parity not in ("even", "odd"):
        raise ValueError(f"feedback_parity must be 'even' or 'odd', got {feedback_parity!r}")
    first = 2 if feedback_parity == "even" else 3
    relay = np.zeros(n - 1)
    for i in range(first, n, 2):
        relay[i - 2] = 1.0
    start = 1 if feedback_parity == "even" else 2
    msg_uses = sorted(set(range(start, n + 1, 2)) | {n})
    return relay, np.array(msg_uses)


def one_way_baseline(params: ChannelParams, targets: Targets, alpha=None,
                     feedback_parity="even", fp_config: FractionalSolverConfig | None = None) -> EncoderPair:
    """One-way feedback design carried over to the two-way channel.

    User 2 relays without scaling on alternate uses; User 1's ``(q1, F1)``
    then minimise its own block energy as in a one-way channel.
    """
    n = params.n
    if alpha is not None:
        targets = Targets(targets.eta1, targets.eta2, alpha)
    if n < 3:
        log.warning("blocklength %d leaves no feedback slot; using open loop", n)
        return open_loop(params, targets)
    g2 = canonical_g2(params, targets)
    relay, msg_uses = one_way_pattern(n, feedback_parity)
    f2 = subdiag_matrix(relay, n)
    full = build_fractional_program(f2, params, targets)
    idx = msg_uses - 1
    sub = FractionalProgram(u=full.u[:, idx], m=full.m[:, idx], budget=full.budget)
    res = solve_fractional(sub, fp_config)
    x = np.zeros(n)
    x[idx] = res.x
    q1 = q1_from_x(x)
    q1 *= np.sqrt(targets.eta1) / np.linalg.norm(q1)
    f1 = solve_f1(q1, f2, params)
    g1 = g1_from_q1(q1, f1, f2, params)
    return EncoderPair(g1=g1, f1=f1, g2=g2, f2=f2, f2_structured=True)
