"""Iterative waterfilling of the per-user power shares."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cascade import BasebandChannelStats
from .precoder import _regularized_solve, interference_matrices

log = logging.getLogger(__name__)

POWER_COUPLING_MODES = ("per_subcarrier", "shared")


@dataclass(frozen=True)
class WaterfillingSettings:
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class PowerShares:
    """Shares ``p`` of shape (U, K) with columns on the simplex."""

    p: np.ndarray
    iterations_used: int
    converged: bool = True
    history: list[np.ndarray] = field(default_factory=list, repr=False)


def effective_gain(h: np.ndarray, S: np.ndarray, Q: np.ndarray, noise: float, rho: float) -> float:
    """rho h^H S (Q + sigma^2 I)^-1 S^H h."""
    a = S.conj().T @ h
    x = _regularized_solve(Q, noise, a)
    return float(rho * np.real(np.vdot(a, x)))


def effective_gains(stats: BasebandChannelStats, S, shares, noise: float, rho: float) -> np.ndarray:
    """Gains of all users with Q built from the current shares."""
    Q = interference_matrices(stats, S, rho * np.asarray(shares, dtype=float))
    return np.array([effective_gain(stats.h[u], S, Q[u], noise, rho) for u in range(stats.U)])


def waterfill_step(gains) -> np.ndarray:
    """Classical waterfilling of unit total power over parallel gains.

    Users whose share would be nonpositive are dropped from the active set
    and the water level is recomputed until the shares sum to one.
    """
    g = np.asarray(gains, dtype=float)
    if g.ndim != 1 or len(g) == 0:
        raise ValueError("gains must be a nonempty vector")
    if np.any(g <= 0):
        raise ValueError("gains must be positive")
    inv = 1.0 / g
    active = np.ones(len(g), dtype=bool)
    while True:
        level = (1.0 + inv[active].sum()) / active.sum()
        p = np.where(active, level - inv, 0.0)
        if np.all(p[active] > 0):
            break
        active &= p > 0
    return p / p.sum()


def iterative_waterfilling(
    stats: BasebandChannelStats,
    S: np.ndarray,
    noise: float,
    rho: float,
    settings: WaterfillingSettings = WaterfillingSettings(),
) -> PowerShares:
    """Shares for one subcarrier; ``p`` has shape (U, 1)."""
    res = iterative_waterfilling_multi([stats], [S], [noise], [rho], settings, mode="per_subcarrier")
    return res[0]


def iterative_waterfilling_multi(
    stats: list[BasebandChannelStats],
    S: list[np.ndarray],
    noise,
    rho,
    settings: WaterfillingSettings = WaterfillingSettings(),
    mode: str = "per_subcarrier",
) -> list[PowerShares]:
    """Waterfilling over K subcarriers.

    ``per_subcarrier`` runs an independent iteration on each subcarrier.
    ``shared`` keeps one share vector for all subcarriers and waterfills
    the gains averaged over k. Either way one PowerShares per subcarrier
    is returned.
    """
    if mode not in POWER_COUPLING_MODES:
        raise ValueError(f"unknown power coupling mode {mode!r}")
    K = len(stats)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (K,))
    if mode == "per_subcarrier":
        return [_iterate([stats[k]], [S[k]], noise[k:k + 1], rho[k:k + 1], settings) for k in range(K)]
    shared = _iterate(stats, S, noise, rho, settings)
    return [shared for _ in range(K)]


def _iterate(stats, S, noise, rho, settings: WaterfillingSettings) -> PowerShares:
    U = stats[0].U
    p = np.full(U, 1.0 / U)
    history = [p]
    if U == 1:
        return PowerShares(p[:, None], 1, True, history)
    converged = False
    it = 0
    for it in range(1, settings.max_iter + 1):
        gains = np.mean([effective_gains(st, s, p, n, r) for st, s, n, r in zip(stats, S, noise, rho)], axis=0)
        if np.any(gains <= 0):
            # a user with zero effective channel gets nothing
            ok = gains > 0
            new = np.zeros(U) if ok.any() else p.copy()
            if ok.any():
                new[ok] = waterfill_step(gains[ok])
        else:
            new = waterfill_step(gains)
        history.append(new)
        step = np.max(np.abs(new - p))
        p = new
        if step < settings.tol:
            converged = True
            break
    if not converged:
        log.warning("iterative waterfilling stopped after %d iterations without converging", it)
    return PowerShares(p[:, None], it, converged, history)
