"""Spectral efficiency and its analytic limits.

Powers are passed as ``rho_u^(k)`` arrays of shape (U, K), i.e. the share
times the per-subcarrier transmit power.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cascade import BasebandChannelStats, SimPhaseConfig
from .channel import SubcarrierChannels, TWO_PI, feed_to_layer0, ue_channel, diagonal_layer
from .geometry import SimGeometry, UePlacement
from .phase_error import PhaseErrorModel
from .precoder import _regularized_solve, interference_matrices, mmse_precoder

CROSSCHECK_RTOL = 1e-9


class RateConsistencyWarning(RuntimeWarning):
    pass


def _powers(powers, U: int, K: int) -> np.ndarray:
    p = np.asarray(powers, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape != (U, K):
        raise ValueError(f"powers must have shape (U, K) = {(U, K)}, got {p.shape}")
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    return p


def user_sinr(stats: BasebandChannelStats, S, V, powers, noise: float, u: int) -> float:
    """SINR of user u for an arbitrary precoder V (M x U)."""
    Q = interference_matrices(stats, S, powers)[u]
    v = V[:, u]
    signal = powers[u] * np.abs(np.vdot(stats.h[u], S @ v)) ** 2
    denom = np.real(np.vdot(v, Q @ v)) + noise
    return float(signal / denom)


def user_rate(stats: BasebandChannelStats, S, V, powers, noise: float, u: int) -> float:
    return float(np.log2(1.0 + user_sinr(stats, S, V, powers, noise, u)))


def mmse_sinrs(stats: BasebandChannelStats, S, powers, noise: float) -> np.ndarray:
    """rho_u h^H S (Q_u + sigma^2 I)^-1 S^H h for every user."""
    Q = interference_matrices(stats, S, powers)
    out = np.empty(stats.U)
    for u in range(stats.U):
        a = S.conj().T @ stats.h[u]
        out[u] = powers[u] * np.real(np.vdot(a, _regularized_solve(Q[u], noise, a)))
    return out


@dataclass
class RateReport:
    """``rate`` and ``sinr`` of shape (U, K); rates in bit/s/Hz."""

    rate: np.ndarray
    sinr: np.ndarray
    crosscheck_error: float = field(default=0.0)

    @property
    def R_avg(self) -> float:
        return float(self.rate.sum(axis=0).mean())

    @property
    def per_user(self) -> np.ndarray:
        return self.rate.mean(axis=1)

    @classmethod
    def from_sinr(cls, sinr, crosscheck_error: float = 0.0) -> "RateReport":
        sinr = np.maximum(np.asarray(sinr, dtype=float), 0.0)
        return cls(np.log2(1.0 + sinr), sinr, crosscheck_error)


def average_rate_mmse(stats: list[BasebandChannelStats], S: list[np.ndarray], powers, noise,
                      crosscheck: bool = True) -> RateReport:
    """Rates of the MMSE precoder over all subcarriers.

    The closed form is used for the report. With ``crosscheck`` the SINR
    of the explicit normalized precoder is evaluated as well and the
    largest relative disagreement stored in ``crosscheck_error``.
    """
    K = len(stats)
    U = stats[0].U
    P = _powers(powers, U, K)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    sinr = np.empty((U, K))
    worst = 0.0
    for k in range(K):
        sinr[:, k] = mmse_sinrs(stats[k], S[k], P[:, k], noise[k])
        if crosscheck:
            Q = interference_matrices(stats[k], S[k], P[:, k])
            for u in range(U):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    v = mmse_precoder(stats[k].h[u], S[k], Q[u], noise[k])
                direct = P[u, k] * np.abs(np.vdot(stats[k].h[u], S[k] @ v)) ** 2 / (
                    np.real(np.vdot(v, Q[u] @ v)) + noise[k])
                scale = max(abs(direct), abs(sinr[u, k]), 1e-300)
                worst = max(worst, abs(direct - sinr[u, k]) / scale)
    if worst > CROSSCHECK_RTOL:
        warnings.warn(f"closed-form and explicit-precoder SINR differ by {worst:.3g}", RateConsistencyWarning)
    return RateReport.from_sinr(sinr, worst)


def _quadratic_limit(a: np.ndarray, B: np.ndarray, rtol: float = 1e-12) -> float:
    """a^H B^+ a for Hermitian PSD B, or inf if a leaves the range of B."""
    w, E = np.linalg.eigh(B)
    proj = np.abs(E.conj().T @ a) ** 2
    scale = max(w.max(initial=0.0), 0.0)
    null = w <= rtol * scale if scale > 0 else np.ones_like(w, dtype=bool)
    if np.any(proj[null] > rtol * proj.sum()):
        return np.inf
    return float(np.sum(proj[~null] / w[~null]))


def high_snr_limit(stats: list[BasebandChannelStats], S: list[np.ndarray], shares) -> float:
    """Sum rate as the transmit power grows without bound.

    Only share ratios enter. Returns inf when some active user sees no
    interference or distortion along its channel direction.
    """
    K = len(stats)
    U = stats[0].U
    p = _powers(shares, U, K)
    total = 0.0
    for k in range(K):
        Q = interference_matrices(stats[k], S[k], p[:, k])
        for u in range(U):
            if p[u, k] == 0:
                continue
            a = S[k].conj().T @ stats[k].h[u]
            total += np.log2(1.0 + _quadratic_limit(a, Q[u] / p[u, k]))
    return float(total / K)


# ----------------------------------------------------------------------------
# Element-aligned stack


def diagonal_cascade_channels(geometry: SimGeometry, users: UePlacement, wavelength: float,
                              S: np.ndarray | None = None) -> SubcarrierChannels:
    """Channels with every layer link replaced by its element-aligned limit."""
    F0 = feed_to_layer0(geometry, wavelength)
    F = [diagonal_layer(geometry, l, wavelength) for l in range(1, geometry.num_layers + 1)]
    G = np.stack([ue_channel(geometry, r, wavelength) for r in users.positions])
    if S is None:
        S = np.eye(geometry.M, dtype=complex)
    return SubcarrierChannels(F0, F, G, S)


def aligned_phase_sum(geometry: SimGeometry, phases: SimPhaseConfig, wavelength: float) -> np.ndarray:
    """Per-element phase of the aligned cascade, theta^(0) + sum_l (theta^(l) - k d_n^(l))."""
    pos = geometry.layer_positions
    hops = np.linalg.norm(np.diff(pos, axis=0), axis=2).sum(axis=0) if geometry.num_layers else 0.0
    return phases.phases.sum(axis=0) - TWO_PI / wavelength * hops


def zero_distance_stats(geometry: SimGeometry, users: UePlacement, phases: SimPhaseConfig,
                        model: PhaseErrorModel, wavelength: float,
                        S: np.ndarray | None = None) -> BasebandChannelStats:
    """Mean channels and covariances of the element-aligned stack."""
    F0 = feed_to_layer0(geometry, wavelength)
    xi2 = model.xi ** (2 * (geometry.num_layers + 1))
    Xi = np.exp(1j * aligned_phase_sum(geometry, phases, wavelength))
    G = np.stack([ue_channel(geometry, r, wavelength) for r in users.positions])
    h = np.sqrt(xi2) * (G.conj() * Xi) @ F0
    h = h.conj()
    C = np.stack([(1 - xi2) * (F0.conj().T * np.abs(g) ** 2) @ F0 for g in G])
    return BasebandChannelStats(h, C)


def zero_distance_limit(geometry: SimGeometry, users: UePlacement, phases: SimPhaseConfig,
                        model: PhaseErrorModel, wavelengths, powers, noise,
                        S: list[np.ndarray] | None = None) -> float:
    """Sum rate of the MMSE design on the element-aligned stack."""
    wavelengths = np.atleast_1d(wavelengths)
    K = len(wavelengths)
    if S is None:
        S = [np.eye(geometry.M, dtype=complex)] * K
    stats = [zero_distance_stats(geometry, users, phases, model, lam) for lam in wavelengths]
    return average_rate_mmse(stats, S, powers, noise, crosscheck=False).R_avg
