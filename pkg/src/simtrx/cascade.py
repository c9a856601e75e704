"""SIM cascade and the statistics of the baseband channel it produces.

The baseband channel of user u is h^H = g^H A with A the realized
cascade. Under i.i.d. phase errors its mean is xi^(L+1) g^H A_bar and its
covariance follows a backward recursion over the layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SubcarrierChannels
from .phase_error import PhaseErrorModel


def wrap_phase(theta: np.ndarray) -> np.ndarray:
    """Map angles into (-pi, pi]."""
    out = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


@dataclass
class SimPhaseConfig:
    """Commanded phases, shape (L + 1, N)."""

    phases: np.ndarray

    def __post_init__(self):
        self.phases = wrap_phase(np.atleast_2d(np.asarray(self.phases, dtype=float)))

    @classmethod
    def random(cls, L: int, N: int, rng) -> "SimPhaseConfig":
        rng = np.random.default_rng(rng)
        return cls(-rng.uniform(-np.pi, np.pi, (L + 1, N)))

    @classmethod
    def zeros(cls, L: int, N: int) -> "SimPhaseConfig":
        return cls(np.zeros((L + 1, N)))

    @property
    def diagonals(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    @property
    def L(self) -> int:
        return self.phases.shape[0] - 1

    def with_layer(self, l: int, theta) -> "SimPhaseConfig":
        p = self.phases.copy()
        p[l] = theta
        return SimPhaseConfig(p)


def _check(ch: SubcarrierChannels, diag: np.ndarray) -> None:
    if diag.shape != (ch.L + 1, ch.N):
        raise ValueError(f"phase array shape {diag.shape} does not match (L+1, N) = {(ch.L + 1, ch.N)}")


def cascade_from_diagonals(ch: SubcarrierChannels, diag: np.ndarray) -> np.ndarray:
    """Theta_L F_L ... Theta_1 F_1 Theta_0 F_0 for given diagonal entries."""
    _check(ch, diag)
    A = diag[0][:, None] * ch.F0
    for l, Fl in enumerate(ch.F, start=1):
        A = diag[l][:, None] * (Fl @ A)
    return A


def nominal_cascade(ch: SubcarrierChannels, phases: SimPhaseConfig) -> np.ndarray:
    return cascade_from_diagonals(ch, phases.diagonals)


def realized_cascade(ch: SubcarrierChannels, phases: SimPhaseConfig, errors: np.ndarray) -> np.ndarray:
    """Cascade with the sampled error diagonals ``errors`` (L + 1, N) applied."""
    return cascade_from_diagonals(ch, phases.diagonals * errors)


def row_cascade(ch: SubcarrierChannels, diag: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """rows @ A evaluated right-to-left without forming A.

    ``rows`` has shape (..., N) and holds row channels g^H; the result has
    shape (..., M). Batched ``diag`` of shape (..., L + 1, N) is allowed.
    """
    x = rows
    for l in range(ch.L, 0, -1):
        x = (x * diag[..., l, :]) @ ch.F[l - 1]
    return (x * diag[..., 0, :]) @ ch.F0


def mean_channels(ch: SubcarrierChannels, phases: SimPhaseConfig, model: PhaseErrorModel) -> np.ndarray:
    """Mean baseband channels h_bar_u as rows, shape (U, M).

    Row u holds the column vector h_bar_u, i.e. the conjugate of the row
    channel xi^(L+1) g_u^H A_bar.
    """
    xi = model.xi
    rows = row_cascade(ch, phases.diagonals, ch.G.conj())
    return (xi ** (ch.L + 1) * rows).conj()


def mean_baseband_channel(ch, phases, model, u: int) -> np.ndarray:
    return mean_channels(ch.users(u), phases, model)[0]


def second_moment(ch: SubcarrierChannels, phases: SimPhaseConfig, model: PhaseErrorModel, u: int) -> np.ndarray:
    """E[h h^H] = F0^H Phi_0 F0 via the backward recursion."""
    xi2 = model.xi**2
    diag = phases.diagonals
    g = ch.G[u]
    b = diag[ch.L].conj() * g
    Phi = xi2 * np.outer(b, b.conj())
    Phi[np.diag_indices_from(Phi)] += (1 - xi2) * np.abs(g) ** 2
    for l in range(ch.L - 1, -1, -1):
        Fn = ch.F[l]
        X = Fn.conj().T @ Phi @ Fn
        d = diag[l]
        Phi = xi2 * (d.conj()[:, None] * X * d[None, :])
        Phi[np.diag_indices_from(Phi)] += (1 - xi2) * np.real(np.diag(X))
    return ch.F0.conj().T @ Phi @ ch.F0


def channel_uncertainty_covariance(ch: SubcarrierChannels, phases: SimPhaseConfig,
                                   model: PhaseErrorModel, u: int) -> np.ndarray:
    """Covariance of h_tilde_u (M x M, Hermitian PSD)."""
    if model.xi == 1.0:
        return np.zeros((ch.M, ch.M), dtype=complex)
    h = mean_baseband_channel(ch, phases, model, u)
    C = second_moment(ch, phases, model, u) - np.outer(h, h.conj())
    return 0.5 * (C + C.conj().T)


@dataclass
class BasebandChannelStats:
    """Per-subcarrier statistics: ``h`` (U, M) mean channels, ``C`` (U, M, M)."""

    h: np.ndarray
    C: np.ndarray

    @property
    def U(self) -> int:
        return self.h.shape[0]

    @property
    def M(self) -> int:
        return self.h.shape[1]


def baseband_stats(ch: SubcarrierChannels, phases: SimPhaseConfig, model: PhaseErrorModel) -> BasebandChannelStats:
    h = mean_channels(ch, phases, model)
    C = np.stack([channel_uncertainty_covariance(ch, phases, model, u) for u in range(ch.U)])
    return BasebandChannelStats(h, C)
