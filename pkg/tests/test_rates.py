import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simtrx.cascade import BasebandChannelStats, SimPhaseConfig, baseband_stats
from simtrx.geometry import UePlacement, build_urpa_geometry
from simtrx.phase_error import PhaseErrorModel
from simtrx.precoder import precoders
from simtrx.rates import (
    RateConsistencyWarning,
    aligned_phase_sum,
    average_rate_mmse,
    diagonal_cascade_channels,
    high_snr_limit,
    mmse_sinrs,
    user_rate,
    zero_distance_limit,
    zero_distance_stats,
)

from conftest import LAM
from helpers import crandn, random_stats


def test_zero_power_gives_zero_rate(rng):
    st_ = random_stats(rng)
    rep = average_rate_mmse([st_], [np.eye(4)], np.zeros((3, 1)), 0.1)
    np.testing.assert_array_equal(rep.rate, 0.0)
    assert rep.R_avg == 0.0


def test_siso_reduction(rng):
    h = crandn(rng, 1, 1)
    st_ = BasebandChannelStats(h, np.zeros((1, 1, 1)))
    rho, noise = 2.5, 0.3
    rep = average_rate_mmse([st_], [np.eye(1)], [[rho]], noise)
    assert rep.R_avg == pytest.approx(np.log2(1 + rho * abs(h[0, 0]) ** 2 / noise), rel=1e-13)


def test_siso_with_distortion(rng):
    h = crandn(rng, 1, 1)
    c = 0.4
    st_ = BasebandChannelStats(h, np.full((1, 1, 1), c, dtype=complex))
    rho, noise = 2.0, 0.1
    rep = average_rate_mmse([st_], [np.eye(1)], [[rho]], noise)
    assert rep.sinr[0, 0] == pytest.approx(rho * abs(h[0, 0]) ** 2 / (rho * c + noise), rel=1e-13)


def test_noise_doubling_single_user_halves_sinr(rng):
    st_ = BasebandChannelStats(crandn(rng, 1, 4), np.zeros((1, 4, 4)))
    a = average_rate_mmse([st_], [np.eye(4)], [[1.0]], 0.1).sinr
    b = average_rate_mmse([st_], [np.eye(4)], [[1.0]], 0.2).sinr
    np.testing.assert_allclose(b, a / 2, rtol=1e-13)


def test_noise_increase_lowers_every_rate(rng):
    st_ = random_stats(rng)
    p = np.full((3, 1), 1 / 3)
    a = average_rate_mmse([st_], [np.eye(4)], p, 0.1).rate
    b = average_rate_mmse([st_], [np.eye(4)], p, 0.2).rate
    assert np.all(b < a)


def test_closed_form_matches_explicit_precoder(rng):
    for _ in range(10):
        st_ = random_stats(rng)
        S = crandn(rng, 4, 4)
        p = rng.uniform(0.1, 1, 3)
        rep = average_rate_mmse([st_], [S], p[:, None], 0.05)
        assert rep.crosscheck_error < 1e-9
        V = precoders(st_, S, p, 0.05).V
        for u in range(3):
            assert user_rate(st_, S, V, p, 0.05, u) == pytest.approx(rep.rate[u, 0], rel=1e-9)


def test_wrong_power_shape_rejected(rng):
    with pytest.raises(ValueError):
        average_rate_mmse([random_stats(rng)], [np.eye(4)], np.ones((2, 1)), 0.1)
    with pytest.raises(ValueError):
        average_rate_mmse([random_stats(rng)], [np.eye(4)], -np.ones((3, 1)), 0.1)


def test_rate_bounded_by_high_snr_limit(rng):
    st_ = random_stats(rng, U=3, M=4, distortion=0.2)
    shares = np.array([[0.5], [0.3], [0.2]])
    lim = high_snr_limit([st_], [np.eye(4)], shares)
    rates = [average_rate_mmse([st_], [np.eye(4)], rho * shares, 1.0).R_avg for rho in (1, 1e2, 1e4, 1e8)]
    assert np.all(np.diff(rates) > 0)
    assert rates[-1] <= lim + 1e-9
    assert rates[-1] == pytest.approx(lim, rel=1e-5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_high_snr_limit_invariant_to_share_scaling(seed, c):
    r = np.random.default_rng(seed)
    st_ = random_stats(r, U=3, M=4)
    shares = r.uniform(0.1, 1.0, (3, 1))
    a = high_snr_limit([st_], [np.eye(4)], shares)
    b = high_snr_limit([st_], [np.eye(4)], c * shares)
    assert a == pytest.approx(b, rel=1e-8)


def test_high_snr_limit_infinite_without_distortion_single_user(rng):
    st_ = BasebandChannelStats(crandn(rng, 1, 3), np.zeros((1, 3, 3)))
    assert high_snr_limit([st_], [np.eye(3)], [[1.0]]) == np.inf


def test_crosscheck_warning_on_inconsistent_input(rng):
    st_ = random_stats(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RateConsistencyWarning)
        average_rate_mmse([st_], [np.eye(4)], np.full((3, 1), 0.3), 0.1)


# element-aligned stack


def _stack(L, spacing=5 * LAM):
    geo = build_urpa_geometry((8, 8), LAM / 4, (spacing,) * L, (1, 2), LAM / 2)
    users = UePlacement(np.array([[0.0, 0.0, 0.5], [0.1, 0.05, 0.6]]))
    return geo, users


@pytest.mark.parametrize("L", [1, 2])
def test_aligned_closed_form_matches_generic_pipeline(L, rng):
    geo, users = _stack(L)
    phases = SimPhaseConfig.random(L, geo.N, rng)
    model = PhaseErrorModel.from_variance("uniform", 0.1)
    generic = baseband_stats(diagonal_cascade_channels(geo, users, LAM), phases, model)
    closed = zero_distance_stats(geo, users, phases, model, LAM)
    np.testing.assert_allclose(closed.h, generic.h, atol=1e-12 * np.abs(generic.h).max())
    np.testing.assert_allclose(closed.C, generic.C, atol=1e-12 * np.abs(generic.C).max())


def test_aligned_phases_collapse_to_identity():
    geo, users = _stack(2, spacing=0.0)
    hops = np.linalg.norm(np.diff(geo.layer_positions, axis=0), axis=2).sum(axis=0)
    theta = np.zeros((3, geo.N))
    theta[0] = 2 * np.pi / LAM * hops
    ph = SimPhaseConfig(theta)
    np.testing.assert_allclose(np.exp(1j * aligned_phase_sum(geo, ph, LAM)), 1.0, atol=1e-12)


def test_perfect_phases_remove_distortion(rng):
    geo, users = _stack(1)
    phases = SimPhaseConfig.random(1, geo.N, rng)
    st_ = zero_distance_stats(geo, users, phases, PhaseErrorModel(), LAM)
    np.testing.assert_array_equal(st_.C, 0.0)


def test_zero_distance_limit_shrinks_with_layers():
    model = PhaseErrorModel.from_variance("uniform", 0.1)
    rates = []
    for L in (1, 2, 3):
        geo, users = _stack(L, spacing=0.0)
        ph = SimPhaseConfig(np.zeros((L + 1, geo.N)))
        rates.append(zero_distance_limit(geo, users, ph, model, [LAM], np.full((2, 1), 0.5e-3), 1e-13))
    assert rates[0] > rates[1] > rates[2]


def test_mmse_sinrs_nonnegative(rng):
    st_ = random_stats(rng)
    assert np.all(mmse_sinrs(st_, np.eye(4), np.ones(3), 0.1) >= 0)
