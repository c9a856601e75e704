"""Phase tuning error statistics of the metasurface elements.

Errors are i.i.d. across layers and elements. The quantity that matters
downstream is xi = E[exp(j theta)], the attenuation of the mean response
per layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

FAMILIES = ("none", "uniform", "von_mises")


def variance_to_param(family: str, variance: float) -> float:
    """Map an error variance to the family parameter.

    Uniform errors on (-iota, iota] have variance iota^2 / 3; von Mises
    errors with concentration kappa are assigned variance 1 / kappa.
    Returns 0.0 for the error-free case.
    """
    if variance < 0:
        raise ValueError("variance must be non-negative")
    if family == "none" or variance == 0:
        return 0.0
    if family == "uniform":
        if variance > np.pi**2 / 3:
            raise ValueError(f"uniform variance {variance} exceeds pi^2/3 (support wider than the circle)")
        return float(np.sqrt(3.0 * variance))
    if family == "von_mises":
        return 1.0 / variance
    raise ValueError(f"unknown phase error family {family!r}")


def bessel_ratio(kappa: float) -> float:
    """I1(kappa) / I0(kappa) via exponentially scaled Bessel functions."""
    return float(special.ive(1, kappa) / special.ive(0, kappa))


@dataclass(frozen=True)
class PhaseErrorModel:
    family: str = "none"
    param: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown phase error family {self.family!r}")
        if self.family == "uniform" and not 0 < self.param <= np.pi:
            raise ValueError("uniform half-width must lie in (0, pi]")
        if self.family == "von_mises" and not self.param > 0:
            raise ValueError("von Mises concentration must be positive")

    @classmethod
    def from_variance(cls, family: str, variance: float) -> "PhaseErrorModel":
        param = variance_to_param(family, variance)
        if param == 0.0:
            return cls("none")
        return cls(family, param)

    @property
    def xi(self) -> float:
        return xi_factor(self)

    @property
    def variance(self) -> float:
        if self.family == "uniform":
            return self.param**2 / 3.0
        if self.family == "von_mises":
            return 1.0 / self.param
        return 0.0

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        """Error angles in radians."""
        if self.family == "none":
            return np.zeros(size)
        if self.family == "uniform":
            # negate a [-a, a) draw to get the half-open (-a, a] support
            return -rng.uniform(-self.param, self.param, size)
        return rng.vonmises(0.0, self.param, size)


def xi_factor(model: PhaseErrorModel) -> float:
    if model.family == "uniform":
        return float(np.sin(model.param) / model.param)
    if model.family == "von_mises":
        return bessel_ratio(model.param)
    return 1.0


def sample_error_matrices(model: PhaseErrorModel, num_layers: int, N: int, rng) -> np.ndarray:
    """Diagonals of the error matrices, shape (num_layers, N), entries exp(j theta)."""
    rng = np.random.default_rng(rng)
    return np.exp(1j * model.sample((num_layers, N), rng))
