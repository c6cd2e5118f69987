import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_encoder, random_native
from gtwc.model import (
    ChannelParams,
    DegenerateEncoderError,
    EncoderPair,
    InvalidInputError,
    NativeEncoderPair,
    NotPSDError,
    Targets,
    block_powers,
    effective_to_native,
    g1_from_q1,
    matrix_sqrt_psd,
    native_to_effective,
    optimal_combiners,
    power_profile,
    q1_matrix,
    q2_matrix,
    rayleigh_snr,
    reduced_powers,
    snr_pair,
    subdiag_matrix,
    transmit_powers,
    unit_lower_inverse,
)
from gtwc.optimizer import canonical_g2


def _zero_enc(n, g1=None, g2=None):
    z = np.zeros((n, n))
    return EncoderPair(np.zeros(n) if g1 is None else g1, z, np.zeros(n) if g2 is None else g2, z)


# --- validation -------------------------------------------------------------

def test_channel_params_rejects_bad_values():
    with pytest.raises(InvalidInputError):
        ChannelParams(1, 1.0, 0.5)
    with pytest.raises(InvalidInputError):
        ChannelParams(3, 0.0, 0.5)
    with pytest.raises(InvalidInputError):
        ChannelParams(3, 1.0, float("nan"))


def test_targets_reject_alpha_outside_open_interval():
    for a in (0.0, 1.0, -0.1):
        with pytest.raises(InvalidInputError):
            Targets(10.0, 10.0, a)


def test_alpha_threshold():
    p = ChannelParams(7, 1.0, 0.5)
    assert p.alpha_threshold == pytest.approx(1 / 3)
    assert Targets(10, 10, 0.34).last_use_regime(p)
    assert not Targets(10, 10, 0.3).last_use_regime(p)


def test_encoder_rejects_entries_on_or_above_diagonal():
    f = np.zeros((3, 3))
    f[0, 1] = 1.0
    with pytest.raises(InvalidInputError):
        EncoderPair(np.ones(3), f, np.ones(3), np.zeros((3, 3)))
    f = np.eye(3)
    with pytest.raises(InvalidInputError):
        EncoderPair(np.ones(3), np.zeros((3, 3)), np.ones(3), f)


def test_encoder_rejects_nonfinite_and_shape_mismatch():
    z = np.zeros((3, 3))
    with pytest.raises(InvalidInputError):
        EncoderPair(np.array([1.0, np.inf, 0.0]), z, np.ones(3), z)
    with pytest.raises(InvalidInputError):
        EncoderPair(np.ones(4), z, np.ones(3), z)


def test_structured_flag_enforced():
    f2 = np.tril(np.ones((4, 4)), -1)
    with pytest.raises(InvalidInputError):
        EncoderPair(np.ones(4), np.zeros((4, 4)), np.ones(4), f2, f2_structured=True)


def test_encoder_arrays_are_read_only():
    enc = _zero_enc(3, np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        enc.g1[0] = 5.0


def test_subdiag_matrix_layout():
    f2 = subdiag_matrix([1.0, 2.0, 3.0])
    assert f2.shape == (4, 4)
    assert f2[1, 0] == 1.0 and f2[2, 1] == 2.0 and f2[3, 2] == 3.0
    assert np.count_nonzero(f2) == 3


def test_unit_lower_inverse(rng):
    l = np.tril(rng.normal(size=(6, 6)), -1)
    inv = unit_lower_inverse(l)
    np.testing.assert_allclose(inv @ (np.eye(6) + l), np.eye(6), atol=1e-12)


# --- noise covariances ------------------------------------------------------

def test_q1_identity_case():
    np.testing.assert_array_equal(q1_matrix(_zero_enc(4), ChannelParams(4, 1.3, 0.5)), 1.3 * np.eye(4))


def test_q1_hand_value():
    f1 = np.array([[0.0, 0.0], [1.0, 0.0]])
    enc = EncoderPair(np.ones(2), f1, np.ones(2), np.zeros((2, 2)))
    np.testing.assert_allclose(q1_matrix(enc, ChannelParams(2, 1.0, 0.5)), [[1.0, 0.0], [0.0, 1.5]])


def test_q2_identity_and_structured_cases():
    np.testing.assert_array_equal(q2_matrix(_zero_enc(3), ChannelParams(3, 1.0, 0.5)), 0.5 * np.eye(3))
    f2 = subdiag_matrix([1.0, 0.0])
    enc = EncoderPair(np.ones(3), np.zeros((3, 3)), np.ones(3), f2)
    np.testing.assert_allclose(q2_matrix(enc, ChannelParams(3, 1.0, 0.5)), np.diag([0.5, 1.5, 0.5]))


def test_covariances_match_monte_carlo(rng):
    enc, params = random_encoder(rng, 4)
    trials = 1_000_000
    n1 = rng.normal(0.0, params.sigma1, (trials, 4))
    n2 = rng.normal(0.0, params.sigma2, (trials, 4))
    a = np.eye(4) + enc.f1 @ enc.f2
    z1 = n1 @ a.T + n2 @ enc.f1.T
    z2 = n1 @ enc.f2.T + n2
    for z, q in ((z1, q1_matrix(enc, params)), (z2, q2_matrix(enc, params))):
        emp = z.T @ z / trials
        scale = np.sqrt(np.outer(np.diag(q), np.diag(q)))
        assert np.max(np.abs(emp - q) / scale) < 0.01


def test_covariances_positive_definite(rng):
    for _ in range(50):
        enc, params = random_encoder(rng, int(rng.integers(2, 8)), scale=2.0)
        q1, q2 = q1_matrix(enc, params), q2_matrix(enc, params)
        np.testing.assert_array_equal(q1, q1.T)
        assert np.linalg.eigvalsh(q1)[0] > 0
        assert np.linalg.eigvalsh(q2 - params.sigma2_sq * np.eye(params.n))[0] > -1e-12


# --- combiners and SNRs -------------------------------------------------------

def test_open_loop_combiner():
    params = ChannelParams(3, 1.0, 0.5)
    g1 = np.array([np.sqrt(10.0), 0.0, 0.0])
    dec = optimal_combiners(_zero_enc(3, g1, np.array([0.0, 0.0, 1.0])), params)
    np.testing.assert_allclose(dec.w1, [1 / np.sqrt(10.0), 0.0, 0.0])


def test_combiner_unbiased_and_self_consistent(rng):
    for _ in range(20):
        enc, params = random_encoder(rng, int(rng.integers(2, 7)))
        dec = optimal_combiners(enc, params)
        assert dec.w1 @ enc.g1 == pytest.approx(1.0, abs=1e-10)
        assert dec.w2 @ enc.g2 == pytest.approx(1.0, abs=1e-10)
        s1, s2 = snr_pair(enc, params)
        assert rayleigh_snr(dec.w1, enc.g1, q1_matrix(enc, params)) == pytest.approx(s1, rel=1e-10)
        assert rayleigh_snr(dec.w2, enc.g2, q2_matrix(enc, params)) == pytest.approx(s2, rel=1e-10)


def test_combiner_beats_random_search(rng):
    enc, params = random_encoder(rng, 3)
    q1, q2 = q1_matrix(enc, params), q2_matrix(enc, params)
    s1, s2 = snr_pair(enc, params)
    w = rng.normal(size=(1000, 3))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    for wk in w:
        assert rayleigh_snr(wk, enc.g1, q1) <= s1 + 1e-9
        assert rayleigh_snr(wk, enc.g2, q2) <= s2 + 1e-9


def test_degenerate_encoder_rejected():
    with pytest.raises(DegenerateEncoderError):
        optimal_combiners(_zero_enc(3, g2=np.ones(3)), ChannelParams(3, 1.0, 0.5))


def test_snr_sign_invariance(rng):
    enc, params = random_encoder(rng, 5)
    base = snr_pair(enc, params)
    assert snr_pair(enc.replace(g1=-enc.g1), params) == base
    assert snr_pair(enc.replace(g2=-enc.g2), params) == base


def test_snr_open_loop_and_last_use_g2(rng):
    params = ChannelParams(6, 1.0, 0.5)
    g1 = np.zeros(6)
    g1[0] = np.sqrt(10.0)
    assert snr_pair(_zero_enc(6, g1, np.ones(6)), params)[0] == pytest.approx(10.0, rel=1e-12)
    g2 = canonical_g2(params, Targets(10.0, 10.0, 0.8))
    f2 = subdiag_matrix(np.append(rng.normal(size=4), 0.0))
    enc = EncoderPair(np.ones(6), np.tril(rng.normal(size=(6, 6)), -1), g2, f2, f2_structured=True)
    assert snr_pair(enc, params)[1] == pytest.approx(10.0, abs=1e-10)


def test_shrinking_g1_scales_snr_and_powers(rng):
    enc, params = random_encoder(rng, 5)
    eps = 0.3
    small = enc.replace(g1=(1 - eps) * enc.g1)
    assert snr_pair(small, params)[0] == pytest.approx((1 - eps) ** 2 * snr_pair(enc, params)[0], rel=1e-12)
    assert small.g1 @ small.g1 < enc.g1 @ enc.g1
    assert np.sum((enc.f2 @ small.g1) ** 2) < np.sum((enc.f2 @ enc.g1) ** 2)


# --- powers -------------------------------------------------------------------

def test_open_loop_weighted_power():
    params = ChannelParams(7, 1.0, 0.5)
    g1 = np.zeros(7)
    g1[0] = np.sqrt(10.0)
    g2 = np.zeros(7)
    g2[-1] = np.sqrt(5.0)
    rep = transmit_powers(_zero_enc(7, g1, g2), params, 0.8)
    assert rep.weighted == pytest.approx(9.0, abs=1e-12)
    assert (rep.snr1, rep.snr2) == pytest.approx((10.0, 10.0))


def test_p1_without_feedback_is_g1_energy(rng):
    enc, params = random_encoder(rng, 5)
    enc = enc.replace(f1=np.zeros((5, 5)))
    assert block_powers(enc, params)[0] == pytest.approx(enc.g1 @ enc.g1, rel=1e-14)


def test_powers_match_direct_covariance(rng):
    # closed-loop expansion: x1 = g1 m1 + F1 g2 m2 + F1 F2 n1 + F1 n2, x2 = F2 (x1 + n1) + g2 m2
    for _ in range(20):
        enc, params = random_encoder(rng, int(rng.integers(2, 7)))
        x2_m1 = enc.f2 @ enc.g1
        x2_m2 = enc.g2 + enc.f2 @ enc.f1 @ enc.g2
        x1_m1 = enc.g1
        x1_m2 = enc.f1 @ enc.g2
        x1_n1 = enc.f1 @ enc.f2
        x1_n2 = enc.f1
        x2_n1 = enc.f2 + enc.f2 @ enc.f1 @ enc.f2
        x2_n2 = enc.f2 @ enc.f1
        p1 = x1_m1 @ x1_m1 + x1_m2 @ x1_m2 + params.sigma1_sq * np.sum(x1_n1 ** 2) + params.sigma2_sq * np.sum(x1_n2 ** 2)
        p2 = x2_m1 @ x2_m1 + x2_m2 @ x2_m2 + params.sigma1_sq * np.sum(x2_n1 ** 2) + params.sigma2_sq * np.sum(x2_n2 ** 2)
        assert block_powers(enc, params) == pytest.approx((p1, p2), rel=1e-10)


def test_power_profile_sums_to_block_powers(rng):
    enc, params = random_encoder(rng, 6, structured=True)
    prof = power_profile(enc, params)
    p1, p2 = block_powers(enc, params)
    np.testing.assert_array_equal(prof["k"], np.arange(1, 7))
    assert prof["x1_power"].sum() == pytest.approx(p1, rel=1e-10)
    assert prof["x2_power"].sum() == pytest.approx(p2, rel=1e-10)
    np.testing.assert_allclose(prof["g1_power"], enc.g1 ** 2)


# --- square root and reduced powers -------------------------------------------

def test_matrix_sqrt_simple_cases():
    np.testing.assert_allclose(matrix_sqrt_psd(2.0 * np.eye(3)), np.sqrt(2.0) * np.eye(3), atol=1e-15)
    np.testing.assert_allclose(matrix_sqrt_psd(np.diag([0.5, 1.5, 0.5])),
                               np.diag(np.sqrt([0.5, 1.5, 0.5])), atol=1e-15)


def test_matrix_sqrt_reconstructs_gram(rng):
    a = rng.normal(size=(6, 6))
    m = a.T @ a
    s = matrix_sqrt_psd(m)
    np.testing.assert_allclose(s, s.T, atol=1e-12)
    assert np.linalg.norm(s @ s - m) / np.linalg.norm(m) < 1e-8


def test_matrix_sqrt_clamps_roundoff_and_rejects_negative():
    m = np.diag([1.0, -5e-11])
    np.testing.assert_allclose(matrix_sqrt_psd(m), np.diag([1.0, 0.0]))
    with pytest.raises(NotPSDError):
        matrix_sqrt_psd(np.diag([1.0, -1e-3]))


def test_reduced_powers_match_reconstructed_encoder(rng):
    params = ChannelParams(5, 1.0, 0.5)
    targets = Targets(10.0, 10.0, 0.8)
    g2 = canonical_g2(params, targets)
    for _ in range(20):
        q1 = rng.normal(size=5)
        q1 *= np.sqrt(10.0) / np.linalg.norm(q1)
        f1 = np.tril(rng.normal(size=(5, 5)), -1)
        f2 = subdiag_matrix(np.append(rng.normal(size=3), 0.0))
        red = reduced_powers(q1, f1, f2, params, 10.0, 0.8)
        enc = EncoderPair(g1_from_q1(q1, f1, f2, params), f1, g2, f2, f2_structured=True)
        full = transmit_powers(enc, params, 0.8)
        assert red.p1 == pytest.approx(full.p1, rel=1e-8)
        assert red.p2 == pytest.approx(full.p2, rel=1e-8)
        assert full.snr1 == pytest.approx(10.0, abs=1e-8)


def test_reduced_powers_trivial_cases(rng):
    params = ChannelParams(4, 1.0, 0.5)
    f1 = np.tril(rng.normal(size=(4, 4)), -1)
    f2 = subdiag_matrix([0.7, -0.4, 0.0])
    red = reduced_powers(np.zeros(4), f1, f2, params, 10.0, 0.8)
    assert red.p1 == pytest.approx(np.sum((f1 @ f2) ** 2) + 0.5 * np.sum(f1 ** 2), rel=1e-12)
    q1 = np.full(4, np.sqrt(2.5))
    red = reduced_powers(q1, np.zeros((4, 4)), np.zeros((4, 4)), params, 10.0, 0.8)
    assert red.p1 == pytest.approx(10.0, rel=1e-12)


# --- native / effective mapping ---------------------------------------------------

def test_mapping_identity_without_feedback(rng):
    g1, g2 = rng.normal(size=4), rng.normal(size=4)
    z = np.zeros((4, 4))
    eff = native_to_effective(NativeEncoderPair(g1, z, g2, z))
    np.testing.assert_array_equal(eff.g1, g1)
    np.testing.assert_array_equal(eff.g2, g2)
    assert not eff.f1.any() and not eff.f2.any()
    nat = effective_to_native(EncoderPair(g1, z, g2, z))
    np.testing.assert_array_equal(nat.g1_t, g1)


def test_mapping_length_two_is_identity(rng):
    nat = random_native(rng, 2)
    eff = native_to_effective(nat)
    np.testing.assert_allclose(eff.f2, nat.f2_t)
    np.testing.assert_allclose(eff.g2, nat.g2_t)
    back = effective_to_native(eff)
    np.testing.assert_allclose(back.f1_t, eff.f1)
    np.testing.assert_allclose(back.f2_t, eff.f2)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 7), seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(0.05, 1.5))
def test_mapping_round_trip(n, seed, scale):
    rng = np.random.default_rng(seed)
    enc, _ = random_encoder(rng, n, scale=scale)
    nat = effective_to_native(enc)
    assert not np.triu(nat.f1_t).any() and not np.triu(nat.f2_t).any()
    back = native_to_effective(nat)
    for a, b in ((back.g1, enc.g1), (back.f1, enc.f1), (back.g2, enc.g2), (back.f2, enc.f2)):
        np.testing.assert_allclose(a, b, atol=1e-8)
    assert not np.triu(back.f1).any() and not np.triu(back.f2).any()
