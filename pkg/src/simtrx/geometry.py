"""Physical layout of the metasurface stack, its feeds and the users.

All coordinates are in meters. Layer 0 sits in the z = 0 plane and every
further layer is offset along +z by the cumulative inter-layer distance.
Element grids are centered on the z-axis and indexed row-major with the
x index outermost: ``n = ix * Ny + iy``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 3e8


def wavelength(frequency: float) -> float:
    return SPEED_OF_LIGHT / frequency


def centered_grid(nx: int, ny: int, sx: float, sy: float, z: float = 0.0) -> np.ndarray:
    """Centers of an ``nx`` by ``ny`` grid with pitch ``(sx, sy)``, shape (nx*ny, 3)."""
    xs = (np.arange(nx) - (nx - 1) / 2) * sx
    ys = (np.arange(ny) - (ny - 1) / 2) * sy
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.empty((nx * ny, 3))
    pts[:, 0] = gx.ravel()
    pts[:, 1] = gy.ravel()
    pts[:, 2] = z
    return pts


@dataclass(frozen=True)
class SimGeometry:
    """Coordinates of the feeds and of every metasurface layer.

    Attributes
    ----------
    feed_counts, feed_spacing : (Mx, My) and (zx, zy) of the feed array.
    element_counts, element_size : (Nx, Ny) and (dx, dy) of each layer.
    distances : inter-layer distances d_1..d_L; its length is L.
    feed_offset : z coordinate of the feed plane (0 puts feeds in layer 0).
    """

    feed_counts: tuple[int, int]
    feed_spacing: tuple[float, float]
    element_counts: tuple[int, int]
    element_size: tuple[float, float]
    distances: tuple[float, ...]
    feed_offset: float = 0.0
    feed_positions: np.ndarray = field(init=False, repr=False, compare=False)
    layer_positions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mx, my = self.feed_counts
        nx, ny = self.element_counts
        feeds = centered_grid(mx, my, *self.feed_spacing, z=self.feed_offset)
        base = centered_grid(nx, ny, *self.element_size)
        layers = np.repeat(base[None], self.num_layers + 1, axis=0)
        layers[:, :, 2] = self.layer_z[:, None]
        feeds.setflags(write=False)
        layers.setflags(write=False)
        object.__setattr__(self, "feed_positions", feeds)
        object.__setattr__(self, "layer_positions", layers)

    @property
    def num_layers(self) -> int:
        """L, the number of intermediate layers."""
        return len(self.distances)

    @property
    def M(self) -> int:
        return self.feed_counts[0] * self.feed_counts[1]

    @property
    def N(self) -> int:
        return self.element_counts[0] * self.element_counts[1]

    @property
    def element_area(self) -> float:
        return self.element_size[0] * self.element_size[1]

    @property
    def layer_z(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.distances, dtype=float)))

    @property
    def output_z(self) -> float:
        return float(self.layer_z[-1])

    @property
    def aperture_diagonal(self) -> float:
        """Largest dimension D of one layer, element extents included."""
        wx = self.element_counts[0] * self.element_size[0]
        wy = self.element_counts[1] * self.element_size[1]
        return float(np.hypot(wx, wy))

    def element_index(self, ix: int, iy: int) -> int:
        nx, ny = self.element_counts
        if not (0 <= ix < nx and 0 <= iy < ny):
            raise IndexError(f"grid position ({ix}, {iy}) outside {nx}x{ny}")
        return ix * ny + iy

    def element_rowcol(self, n: int) -> tuple[int, int]:
        if not 0 <= n < self.N:
            raise IndexError(f"element index {n} outside 0..{self.N - 1}")
        return divmod(n, self.element_counts[1])


def build_urpa_geometry(
    element_counts: Sequence[int],
    element_size: float | Sequence[float],
    distances: Sequence[float] = (),
    feed_counts: Sequence[int] = (1, 1),
    feed_spacing: float | Sequence[float] = 1.0,
    feed_offset: float = 0.0,
) -> SimGeometry:
    """Build a validated :class:`SimGeometry` from grid counts and spacings.

    Scalars for ``element_size`` and ``feed_spacing`` apply to both axes.
    ``distances`` lists d_1..d_L; an empty sequence gives the single-layer
    (L = 0) metasurface.
    """
    element_size = _pair(element_size, "element_size")
    feed_spacing = _pair(feed_spacing, "feed_spacing")
    element_counts = tuple(int(c) for c in element_counts)
    feed_counts = tuple(int(c) for c in feed_counts)
    if len(element_counts) != 2 or len(feed_counts) != 2:
        raise ValueError("grid counts must be (nx, ny) pairs")
    if min(element_counts) < 1 or min(feed_counts) < 1:
        raise ValueError(f"grid counts must be >= 1, got {element_counts}, {feed_counts}")
    if min(element_size) <= 0 or min(feed_spacing) <= 0:
        raise ValueError("element sizes and feed spacings must be positive")
    distances = tuple(float(d) for d in distances)
    if any(d < 0 or not np.isfinite(d) for d in distances):
        raise ValueError(f"inter-layer distances must be finite and >= 0, got {distances}")
    return SimGeometry(
        feed_counts=feed_counts,
        feed_spacing=feed_spacing,
        element_counts=element_counts,
        element_size=element_size,
        distances=distances,
        feed_offset=float(feed_offset),
    )


def _pair(value, name) -> tuple[float, float]:
    if np.isscalar(value):
        return (float(value), float(value))
    value = tuple(float(v) for v in value)
    if len(value) != 2:
        raise ValueError(f"{name} must be a scalar or an (x, y) pair")
    return value


@dataclass(frozen=True)
class UePlacement:
    positions: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] != 3:
            raise ValueError("UE positions must be 3-vectors")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def U(self) -> int:
        return self.positions.shape[0]

    def check(self, geometry: SimGeometry) -> None:
        """Reject users lying in the output-layer plane."""
        gap = self.positions[:, 2] - geometry.output_z
        bad = np.flatnonzero(np.isclose(gap, 0.0, atol=1e-12))
        if bad.size:
            raise ValueError(f"UE(s) {bad.tolist()} lie in the layer-L plane")


def rayleigh_distance_from_aperture(aperture: float, wavelength: float) -> float:
    return 2.0 * aperture**2 / wavelength


def rayleigh_distance(geometry: SimGeometry, wavelength: float) -> float:
    """2 D^2 / lambda with D the diagonal of the output-layer aperture."""
    return rayleigh_distance_from_aperture(geometry.aperture_diagonal, wavelength)


def reactive_limit_from_aperture(aperture: float, wavelength: float) -> float:
    return 0.62 * np.sqrt(aperture**3 / wavelength)


class FieldRegion(str, enum.Enum):
    REACTIVE_NEAR_FIELD = "reactive-near-field"
    RADIATIVE_NEAR_FIELD = "radiative-near-field"
    FAR_FIELD = "far-field"


def classify_range(distance: float, aperture: float, wavelength: float) -> FieldRegion:
    if distance >= rayleigh_distance_from_aperture(aperture, wavelength):
        return FieldRegion.FAR_FIELD
    if distance > reactive_limit_from_aperture(aperture, wavelength):
        return FieldRegion.RADIATIVE_NEAR_FIELD
    return FieldRegion.REACTIVE_NEAR_FIELD


def field_region(geometry: SimGeometry, wavelength: float, point) -> FieldRegion:
    """Classify ``point`` by its distance to the center of the output layer."""
    center = np.array([0.0, 0.0, geometry.output_z])
    r = float(np.linalg.norm(np.asarray(point, dtype=float) - center))
    return classify_range(r, geometry.aperture_diagonal, wavelength)
