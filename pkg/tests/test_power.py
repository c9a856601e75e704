import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from simtrx.cascade import BasebandChannelStats
from simtrx.power import (
    WaterfillingSettings,
    effective_gains,
    iterative_waterfilling,
    iterative_waterfilling_multi,
    waterfill_step,
)

from helpers import crandn, random_stats


def bisection_waterfill(g):
    """Independent oracle: find the water level mu with sum max(0, mu - 1/g) = 1."""
    g = np.asarray(g, dtype=float)
    f = lambda mu: np.maximum(0.0, mu - 1 / g).sum() - 1.0
    mu = brentq(f, 0.0, 2.0 + (1 / g).max(), xtol=1e-15)
    return np.maximum(0.0, mu - 1 / g)


def orthogonal_stats(gains):
    U = len(gains)
    h = np.diag(np.sqrt(gains)).astype(complex)
    return BasebandChannelStats(h, np.zeros((U, U, U)))


def test_equal_gains_split_evenly():
    np.testing.assert_allclose(waterfill_step([3.0, 3.0, 3.0, 3.0]), 0.25, atol=1e-15)


def test_weak_user_switched_off():
    p = waterfill_step([10.0, 1e-9])
    np.testing.assert_allclose(p, [1.0, 0.0], atol=1e-12)


def test_nonpositive_gain_rejected():
    with pytest.raises(ValueError):
        waterfill_step([1.0, 0.0])
    with pytest.raises(ValueError):
        waterfill_step([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-4, 1e4), min_size=1, max_size=8))
def test_matches_bisection_oracle(gains):
    p = waterfill_step(gains)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p, bisection_waterfill(gains), atol=1e-9)


def test_single_user_gets_everything(rng):
    res = iterative_waterfilling(random_stats(rng, U=1, M=3), np.eye(3), 0.1, 1.0)
    assert res.p.shape == (1, 1) and res.p[0, 0] == 1.0 and res.converged


def test_decoupled_users_reduce_to_classical_waterfilling():
    gains = np.array([5.0, 1.0, 0.2, 0.05])
    noise, rho = 0.5, 2.0
    res = iterative_waterfilling(orthogonal_stats(gains), np.eye(4), noise, rho)
    expected = bisection_waterfill(rho * gains / noise)
    np.testing.assert_allclose(res.p[:, 0], expected, atol=1e-8)
    assert res.converged


def test_every_iterate_on_simplex(rng):
    for _ in range(10):
        st_ = random_stats(rng, U=3, M=4)
        res = iterative_waterfilling(st_, crandn(rng, 4, 4), 0.05, 1.0, WaterfillingSettings(max_iter=50))
        for p in res.history:
            assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12


def test_mirrored_users_get_equal_shares(rng):
    h0 = crandn(rng, 4)
    P = np.eye(4)[[1, 0, 3, 2]]
    h = np.stack([h0, P @ h0])
    st_ = BasebandChannelStats(h, np.zeros((2, 4, 4)))
    res = iterative_waterfilling(st_, np.eye(4), 0.1, 1.0)
    np.testing.assert_allclose(res.p[:, 0], 0.5, atol=1e-10)


def test_fixed_point_property(rng):
    st_ = random_stats(rng, U=3, M=4)
    res = iterative_waterfilling(st_, np.eye(4), 0.05, 1.0, WaterfillingSettings(tol=1e-12, max_iter=500))
    if res.converged:
        g = effective_gains(st_, np.eye(4), res.p[:, 0], 0.05, 1.0)
        np.testing.assert_allclose(waterfill_step(g), res.p[:, 0], atol=1e-9)


def test_shared_mode_uses_one_vector(rng):
    stats = [random_stats(rng, U=2, M=3) for _ in range(3)]
    S = [np.eye(3)] * 3
    out = iterative_waterfilling_multi(stats, S, 0.1, 1.0, mode="shared")
    assert len(out) == 3
    for r in out[1:]:
        np.testing.assert_array_equal(r.p, out[0].p)
    per = iterative_waterfilling_multi(stats, S, 0.1, 1.0, mode="per_subcarrier")
    for k in range(3):
        np.testing.assert_allclose(per[k].p, iterative_waterfilling(stats[k], S[k], 0.1, 1.0).p)


def test_shared_mode_single_subcarrier_equals_per_subcarrier(rng):
    st_ = random_stats(rng, U=3, M=4)
    a = iterative_waterfilling_multi([st_], [np.eye(4)], 0.1, 1.0, mode="shared")[0]
    b = iterative_waterfilling_multi([st_], [np.eye(4)], 0.1, 1.0, mode="per_subcarrier")[0]
    np.testing.assert_allclose(a.p, b.p, atol=1e-14)


def test_unknown_mode_and_bad_settings():
    with pytest.raises(ValueError):
        iterative_waterfilling_multi([], [], 0.1, 1.0, mode="bogus")
    with pytest.raises(ValueError):
        WaterfillingSettings(tol=0)
    with pytest.raises(ValueError):
        WaterfillingSettings(max_iter=0)


def test_zero_channel_user_gets_nothing(rng):
    h = np.stack([crandn(rng, 3), np.zeros(3, dtype=complex)])
    st_ = BasebandChannelStats(h, np.zeros((2, 3, 3)))
    res = iterative_waterfilling(st_, np.eye(3), 0.1, 1.0)
    np.testing.assert_allclose(res.p[:, 0], [1.0, 0.0])
