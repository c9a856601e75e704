"""MMSE digital precoding under phase-error statistics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .cascade import BasebandChannelStats


class DegenerateChannelWarning(RuntimeWarning):
    pass


def interference_matrices(stats: BasebandChannelStats, S: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """Q_u for every user, shape (U, M, M).

    Q_u = rho_u S^H C_u S + sum_{u' != u} rho_u' S^H (h_u' h_u'^H + C_u') S
    """
    powers = np.asarray(powers, dtype=float)
    if np.any(powers < 0):
        raise ValueError("powers must be non-negative")
    SH = S.conj().T
    dist = np.einsum("u,uij->ij", powers, stats.C)
    outer = np.einsum("u,ui,uj->uij", powers, stats.h, stats.h.conj())
    total = SH @ (dist + outer.sum(axis=0)) @ S
    Q = total[None] - SH[None] @ outer @ S[None]
    return 0.5 * (Q + Q.conj().transpose(0, 2, 1))


def interference_matrix(stats, S, powers, u: int) -> np.ndarray:
    return interference_matrices(stats, S, powers)[u]


def _regularized_solve(Q: np.ndarray, noise: float, rhs: np.ndarray) -> np.ndarray:
    if noise <= 0:
        raise ValueError("noise power must be positive")
    B = Q + noise * np.eye(Q.shape[0])
    try:
        factor = linalg.cho_factor(B, lower=True)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Q + sigma^2 I is not numerically positive definite") from exc
    return linalg.cho_solve(factor, rhs)


def mmse_precoder(h: np.ndarray, S: np.ndarray, Q: np.ndarray, noise: float) -> np.ndarray:
    """Unit-norm (Q + sigma^2 I)^-1 S^H h."""
    a = S.conj().T @ h
    v = _regularized_solve(Q, noise, a)
    norm = np.linalg.norm(v)
    if norm == 0 or not np.isfinite(norm):
        warnings.warn("zero effective channel; returning the first basis vector", DegenerateChannelWarning)
        v = np.zeros(len(h), dtype=complex)
        v[0] = 1.0
        return v
    return v / norm


@dataclass
class PrecoderSolution:
    """``V`` is M x U with unit-norm columns; ``Q`` is (U, M, M)."""

    V: np.ndarray
    Q: np.ndarray


def precoders(stats: BasebandChannelStats, S: np.ndarray, powers: np.ndarray, noise: float) -> PrecoderSolution:
    Q = interference_matrices(stats, S, powers)
    V = np.stack([mmse_precoder(stats.h[u], S, Q[u], noise) for u in range(stats.U)], axis=1)
    return PrecoderSolution(V, Q)
