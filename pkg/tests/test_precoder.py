import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from simtrx.cascade import BasebandChannelStats
from simtrx.precoder import (
    DegenerateChannelWarning,
    interference_matrices,
    interference_matrix,
    mmse_precoder,
    precoders,
)
from simtrx.rates import user_sinr

from helpers import crandn, random_stats


def test_single_user_without_distortion_has_no_interference(rng):
    st_ = BasebandChannelStats(crandn(rng, 1, 3), np.zeros((1, 3, 3)))
    np.testing.assert_array_equal(interference_matrix(st_, np.eye(3), [1.0], 0), 0)


def test_single_user_distortion_only(rng):
    st_ = random_stats(rng, U=1, M=3)
    S = crandn(rng, 3, 3)
    Q = interference_matrix(st_, S, [2.0], 0)
    np.testing.assert_allclose(Q, 2.0 * S.conj().T @ st_.C[0] @ S, atol=1e-14)
    assert np.linalg.eigvalsh(Q).min() > -1e-12


def test_interference_explicit_sum(rng):
    st_ = random_stats(rng, U=3, M=4)
    S = crandn(rng, 4, 4)
    p = np.array([0.2, 0.5, 0.3])
    for u in range(3):
        ref = p[u] * S.conj().T @ st_.C[u] @ S
        for v in range(3):
            if v != u:
                ref += p[v] * S.conj().T @ (np.outer(st_.h[v], st_.h[v].conj()) + st_.C[v]) @ S
        np.testing.assert_allclose(interference_matrix(st_, S, p, u), ref, atol=1e-13)


def test_negative_powers_rejected(rng):
    with pytest.raises(ValueError):
        interference_matrices(random_stats(rng), np.eye(4), [1.0, -1.0, 1.0])


def test_matched_filter_when_no_interference(rng):
    h = crandn(rng, 4)
    S = crandn(rng, 4, 4)
    v = mmse_precoder(h, S, np.zeros((4, 4)), 1e-3)
    mf = S.conj().T @ h
    np.testing.assert_allclose(v, mf / np.linalg.norm(mf), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_unit_norm_and_scale_invariance(seed, scale):
    r = np.random.default_rng(seed)
    st_ = random_stats(r, U=3, M=4)
    Q = interference_matrices(st_, np.eye(4), np.ones(3))
    v = mmse_precoder(st_.h[0], np.eye(4), Q[0], 0.1)
    assert abs(np.linalg.norm(v) - 1) < 1e-12
    w = mmse_precoder(st_.h[0], np.eye(4), scale * Q[0], scale * 0.1)
    np.testing.assert_allclose(w, v, atol=1e-9)


def test_generalized_rayleigh_optimality(rng):
    for _ in range(20):
        st_ = random_stats(rng, U=3, M=4)
        S = crandn(rng, 4, 4) + 2 * np.eye(4)
        p = rng.uniform(0.1, 1.0, 3)
        noise = 0.05
        sol = precoders(st_, S, p, noise)
        for u in range(3):
            a = S.conj().T @ st_.h[u]
            A = p[u] * np.outer(a, a.conj())
            B = sol.Q[u] + noise * np.eye(4)
            best = linalg.eigh(A, B, eigvals_only=True)[-1]
            assert user_sinr(st_, S, sol.V, p, noise, u) == pytest.approx(best, rel=1e-9)


def test_zero_forcing_limit():
    # two orthogonal deterministic users
    h = np.array([[1.0, 0.0], [1.0, 1.0]], dtype=complex) / np.array([[1.0], [np.sqrt(2)]])
    st_ = BasebandChannelStats(h, np.zeros((2, 2, 2)))
    p = np.array([1.0, 1.0])
    leak = []
    for noise in (1e-2, 1e-5, 1e-8):
        sol = precoders(st_, np.eye(2), p, noise)
        leak.append(abs(np.vdot(h[1], sol.V[:, 0])) ** 2)
    assert leak[-1] < 1e-12 and leak[0] > leak[1] > leak[2]


def test_zero_channel_returns_basis_vector():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        v = mmse_precoder(np.zeros(3, dtype=complex), np.eye(3), np.zeros((3, 3)), 1.0)
    assert any(issubclass(x.category, DegenerateChannelWarning) for x in w)
    np.testing.assert_array_equal(v, [1, 0, 0])


def test_invalid_noise_and_indefinite_system():
    with pytest.raises(ValueError):
        mmse_precoder(np.ones(2, dtype=complex), np.eye(2), np.zeros((2, 2)), 0.0)
    with pytest.raises(np.linalg.LinAlgError):
        mmse_precoder(np.ones(2, dtype=complex), np.eye(2), -np.eye(2), 0.5)
