"""Propagation matrices of the SIM transmitter.

Conventions: ``F0`` is N x M (feeds -> layer 0), ``F[l-1]`` is the N x N
matrix from layer l-1 to layer l, and a user channel ``g`` is stored as a
column so that ``g.conj()`` is the row channel ``g^H`` seen by the user.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .geometry import SPEED_OF_LIGHT, SimGeometry, UePlacement, wavelength

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class WidebandConfig:
    """OFDM grid and per-subcarrier power budget.

    ``noise_power`` and ``tx_power`` are per subcarrier, in watts.
    ``tx_power`` may be a scalar or a length-K sequence.
    """

    carrier: float
    bandwidth: float
    num_subcarriers: int
    noise_power: float
    tx_power: float | Sequence[float] = 1e-3

    def __post_init__(self):
        if self.num_subcarriers < 1:
            raise ValueError("need at least one subcarrier")
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")
        if np.any(self.frequencies <= 0):
            raise ValueError("bandwidth too wide: a subcarrier frequency is not positive")
        if np.ndim(self.tx_power) and len(self.tx_power) != self.num_subcarriers:
            raise ValueError("tx_power must be scalar or have one entry per subcarrier")

    @property
    def K(self) -> int:
        return self.num_subcarriers

    @property
    def frequencies(self) -> np.ndarray:
        k = np.arange(1, self.num_subcarriers + 1)
        return self.carrier + self.bandwidth / self.num_subcarriers * (k - (self.num_subcarriers + 1) / 2)

    @property
    def wavelengths(self) -> np.ndarray:
        return SPEED_OF_LIGHT / self.frequencies

    @property
    def center_wavelength(self) -> float:
        return wavelength(self.carrier)

    @property
    def tx_powers(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.tx_power, dtype=float), (self.num_subcarriers,)).copy()


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between rows of ``a`` (P, 3) and ``b`` (Q, 3) -> (P, Q)."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("pqi,pqi->pq", diff, diff))


def feed_to_layer0(geometry: SimGeometry, wavelength: float) -> np.ndarray:
    dist = pairwise_distances(geometry.layer_positions[0], geometry.feed_positions)
    return np.exp(-1j * TWO_PI / wavelength * dist) / np.sqrt(geometry.N)


# ----------------------------------------------------------------------------
# Power gains


def _subgrid_offsets(size: tuple[float, float], subgrid: int) -> np.ndarray:
    frac = (np.arange(subgrid) + 0.5) / subgrid - 0.5
    ox, oy = np.meshgrid(frac * size[0], frac * size[1], indexing="ij")
    return np.stack([ox.ravel(), oy.ravel()], axis=1)


def element_power_gains(
    sources: np.ndarray,
    targets: np.ndarray,
    element_size: tuple[float, float],
    subgrid: int = 8,
) -> np.ndarray:
    """Power gains from rectangular source elements to target points.

    Composite midpoint rule over each source rectangle (lying in a plane
    z = const) of ``|dz| / (4 pi |p - t|^3)``, i.e. the solid angle of
    the element seen from the target divided by 4 pi.

    Returns an array of shape (len(targets), len(sources)).
    """
    sources = np.atleast_2d(sources)
    targets = np.atleast_2d(targets)
    dz = targets[:, None, 2] - sources[None, :, 2]
    if np.any(dz == 0):
        raise ValueError("target lies in the source plane; the area-integral gain is undefined")
    offs = _subgrid_offsets(element_size, subgrid)
    dA = element_size[0] * element_size[1] / len(offs)
    dx = targets[:, None, 0] - sources[None, :, 0]
    dy = targets[:, None, 1] - sources[None, :, 1]
    acc = np.zeros(dz.shape)
    dz2 = dz * dz
    for ox, oy in offs:
        r2 = (dx - ox) ** 2 + (dy - oy) ** 2 + dz2
        acc += r2**-1.5
    return np.abs(dz) * acc * dA / (4 * np.pi)


def element_power_gain(source_center, element_size, target, subgrid: int = 8) -> float:
    return float(element_power_gains(np.asarray(source_center, float), np.asarray(target, float),
                                     tuple(element_size), subgrid)[0, 0])


def rectangle_solid_angle(a: float, b: float, d: float) -> float:
    """Solid angle of an a x b rectangle seen from distance d on its axis."""
    return 4.0 * np.arcsin(a * b / np.sqrt((a * a + 4 * d * d) * (b * b + 4 * d * d)))


def _offset_table(geometry: SimGeometry, dz: float, subgrid: int):
    """Distances and gains for every grid offset between two aligned layers."""
    nx, ny = geometry.element_counts
    sx, sy = geometry.element_size
    ox = np.arange(-(nx - 1), nx) * sx
    oy = np.arange(-(ny - 1), ny) * sy
    gx, gy = np.meshgrid(ox, oy, indexing="ij")
    dist = np.sqrt(gx**2 + gy**2 + dz**2)
    targets = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, dz)], axis=1)
    gain = element_power_gains(np.zeros((1, 3)), targets, geometry.element_size, subgrid)
    return dist, gain.reshape(gx.shape)


def _gather_offsets(geometry: SimGeometry, table: np.ndarray) -> np.ndarray:
    nx, ny = geometry.element_counts
    ix, iy = np.divmod(np.arange(geometry.N), ny)
    return table[ix[:, None] - ix[None, :] + nx - 1, iy[:, None] - iy[None, :] + ny - 1]


def layer_geometry(geometry: SimGeometry, l: int, subgrid: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """(distance, amplitude) N x N matrices of the link layer l-1 -> layer l."""
    if not 1 <= l <= geometry.num_layers:
        raise ValueError(f"layer index {l} outside 1..{geometry.num_layers}")
    d = geometry.distances[l - 1]
    if d <= 0:
        raise ValueError("zero inter-layer distance: use the diagonal cascade limit instead")
    dist_t, gain_t = _offset_table(geometry, d, subgrid)
    return _gather_offsets(geometry, dist_t), np.sqrt(_gather_offsets(geometry, gain_t))


def layer_to_layer(geometry: SimGeometry, l: int, wavelength: float, subgrid: int = 8) -> np.ndarray:
    dist, amp = layer_geometry(geometry, l, subgrid)
    return amp * np.exp(-1j * TWO_PI / wavelength * dist)


def diagonal_layer(geometry: SimGeometry, l: int, wavelength: float) -> np.ndarray:
    """Element-aligned limit of a layer link: unit gains on the diagonal only."""
    pos = geometry.layer_positions
    d = np.linalg.norm(pos[l] - pos[l - 1], axis=1)
    return np.diag(np.exp(-1j * TWO_PI / wavelength * d))


def ue_gains(geometry: SimGeometry, position) -> np.ndarray:
    """Closed-form per-element power gain zeta_n toward a user."""
    r = np.asarray(position, dtype=float)
    out = geometry.layer_positions[-1]
    height = abs(r[2] - geometry.output_z)
    if height == 0:
        raise ValueError("user lies in the output-layer plane")
    dist = np.linalg.norm(r - out, axis=1)
    return geometry.element_area * height / (4 * np.pi * dist**3)


def ue_channel(geometry: SimGeometry, position, wavelength: float) -> np.ndarray:
    r = np.asarray(position, dtype=float)
    dist = np.linalg.norm(r - geometry.layer_positions[-1], axis=1)
    return np.sqrt(ue_gains(geometry, r)) * np.exp(1j * TWO_PI / wavelength * dist)


def path_loss(distance: float, reference_db: float = -30.0) -> float:
    """C0 / r^2 with C0 the loss at 1 m, in dB."""
    return 10 ** (reference_db / 10) / distance**2


def far_field_ue_channel(
    geometry: SimGeometry,
    direction,
    reference_range: float,
    wavelength: float,
    gain: float | None = None,
    reference_db: float = -30.0,
) -> np.ndarray:
    """Plane-wave user channel with a common per-element power gain.

    ``gain`` defaults to the path loss C0 / r^2 at ``reference_range``.
    """
    k_hat = np.asarray(direction, dtype=float)
    if not np.isclose(np.linalg.norm(k_hat), 1.0):
        raise ValueError("direction must be a unit vector")
    if reference_range <= 0:
        raise ValueError("reference range must be positive")
    if gain is None:
        gain = path_loss(reference_range, reference_db)
    proj = geometry.layer_positions[-1] @ k_hat
    return np.sqrt(gain) * np.exp(-1j * TWO_PI / wavelength * proj)


# ----------------------------------------------------------------------------
# Mutual coupling


def cosine_sine_integrals(x):
    """(Ci(x), Si(x)) for x > 0."""
    si, ci = special.sici(x)
    return ci, si


def mutual_impedance(
    port_positions: np.ndarray,
    dipole_length: float,
    wavelength: float,
    antenna_impedance: complex = 50.0,
) -> np.ndarray:
    """Z-parameter matrix of parallel side-by-side dipoles."""
    M = len(port_positions)
    Z = np.full((M, M), 0j)
    d = pairwise_distances(port_positions, port_positions)
    off = ~np.eye(M, dtype=bool)
    if np.any(d[off] <= 0):
        raise ValueError("coincident ports: mutual impedance undefined")
    k = TWO_PI / wavelength
    dd = d[off]
    root = np.sqrt(dd**2 + dipole_length**2)
    ci0, si0 = cosine_sine_integrals(k * dd)
    ci1, si1 = cosine_sine_integrals(k * (root + dipole_length))
    ci2, si2 = cosine_sine_integrals(k * (root - dipole_length))
    resistance = 30 * (2 * ci0 - ci1 - ci2)
    reactance = -30 * (2 * si0 - si1 - si2)
    Z[off] = resistance + 1j * reactance
    Z[np.diag_indices(M)] = antenna_impedance
    return Z


def coupling_matrix(Z: np.ndarray, antenna_impedance: complex = 50.0, load_impedance: complex = 50.0) -> np.ndarray:
    """S = (Z_A + Z_L) (Z + Z_L I)^-1."""
    M = Z.shape[0]
    T = Z + load_impedance * np.eye(M)
    if np.linalg.cond(T) > 1e12:
        raise np.linalg.LinAlgError("Z + Z_L I is numerically singular")
    return (antenna_impedance + load_impedance) * np.linalg.inv(T)


def mutual_coupling(
    port_positions: np.ndarray,
    dipole_length: float,
    wavelength: float,
    antenna_impedance: complex = 50.0,
    load_impedance: complex = 50.0,
    enabled: bool = True,
) -> np.ndarray:
    M = len(port_positions)
    if not enabled or M == 1:
        Z = antenna_impedance * np.eye(M, dtype=complex)
    else:
        Z = mutual_impedance(port_positions, dipole_length, wavelength, antenna_impedance)
    return coupling_matrix(Z, antenna_impedance, load_impedance)


@dataclass(frozen=True)
class CouplingConfig:
    enabled: bool = False
    dipole_length: float | None = None  # defaults to half the center wavelength
    antenna_impedance: float = 50.0
    load_impedance: float = 50.0


# ----------------------------------------------------------------------------
# Channel sets


@dataclass
class SubcarrierChannels:
    """All matrices of one subcarrier.

    ``G`` stacks the user column channels g_u as rows, shape (U, N).
    """

    F0: np.ndarray
    F: list[np.ndarray]
    G: np.ndarray
    S: np.ndarray

    @property
    def L(self) -> int:
        return len(self.F)

    @property
    def N(self) -> int:
        return self.F0.shape[0]

    @property
    def M(self) -> int:
        return self.F0.shape[1]

    @property
    def U(self) -> int:
        return self.G.shape[0]

    def users(self, idx) -> "SubcarrierChannels":
        idx = np.atleast_1d(idx)
        return SubcarrierChannels(self.F0, self.F, self.G[idx], self.S)


@dataclass
class ChannelSet:
    """Frequency-independent link geometry plus per-wavelength synthesis.

    Phases are rebuilt per wavelength; amplitudes (beta, zeta) are
    computed once since they are purely geometric.
    """

    geometry: SimGeometry
    users: UePlacement
    wideband: WidebandConfig
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    model: str = "near_field"
    far_field_gain: str = "matched"
    subgrid: int = 8
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.model not in ("near_field", "far_field"):
            raise ValueError(f"unknown channel model {self.model!r}")
        if self.far_field_gain not in ("matched", "path_loss"):
            raise ValueError(f"unknown far-field gain {self.far_field_gain!r}")
        self.users.check(self.geometry)
        geo = self.geometry
        self._feed_dist = pairwise_distances(geo.layer_positions[0], geo.feed_positions)
        self._layers = [layer_geometry(geo, l, self.subgrid) for l in range(1, geo.num_layers + 1)]
        out = geo.layer_positions[-1]
        if self.model == "near_field":
            self._ue_path = pairwise_distances(self.users.positions, out)
            self._ue_amp = np.sqrt(np.stack([ue_gains(geo, r) for r in self.users.positions]))
        else:
            center = np.array([0.0, 0.0, geo.output_z])
            rel = self.users.positions - center
            ranges = np.linalg.norm(rel, axis=1)
            dirs = rel / ranges[:, None]
            # stored column phase is exp(-j k <k_hat, p>), see far_field_ue_channel
            self._ue_path = -(dirs @ out.T)
            if self.far_field_gain == "matched":
                gains = [ue_gains(geo, r)[_nearest_to_axis(out)] for r in self.users.positions]
            else:
                gains = [path_loss(r) for r in ranges]
            self._ue_amp = np.sqrt(np.asarray(gains))[:, None] * np.ones((1, geo.N))

    @property
    def U(self) -> int:
        return self.users.U

    def at_wavelength(self, lam: float) -> SubcarrierChannels:
        key = float(lam)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        k = TWO_PI / lam
        F0 = np.exp(-1j * k * self._feed_dist) / np.sqrt(self.geometry.N)
        F = [amp * np.exp(-1j * k * dist) for dist, amp in self._layers]
        G = self._ue_amp * np.exp(1j * k * self._ue_path)
        S = self.coupling_matrix(lam)
        out = SubcarrierChannels(F0, F, G, S)
        if len(self._cache) < 4:
            self._cache[key] = out
        return out

    def coupling_matrix(self, lam: float) -> np.ndarray:
        c = self.coupling
        dipole = c.dipole_length if c.dipole_length is not None else self.wideband.center_wavelength / 2
        return mutual_coupling(self.geometry.feed_positions, dipole, lam,
                               c.antenna_impedance, c.load_impedance, enabled=c.enabled)

    def subcarrier(self, k: int) -> SubcarrierChannels:
        """Channels of subcarrier ``k`` (0-based)."""
        return self.at_wavelength(self.wideband.wavelengths[k])

    def center(self) -> SubcarrierChannels:
        return self.at_wavelength(self.wideband.center_wavelength)

    def __iter__(self):
        for k in range(self.wideband.K):
            yield self.subcarrier(k)


def _nearest_to_axis(points: np.ndarray) -> int:
    return int(np.argmin(np.hypot(points[:, 0], points[:, 1])))


# ----------------------------------------------------------------------------
# Dump file

_DUMP_COLUMNS = ["matrix", "index", "subcarrier", "row", "col", "re", "im"]


def write_channel_dump(channels: ChannelSet, path) -> Path:
    """Write every matrix of every subcarrier as long-format CSV."""
    path = Path(path)
    geo = channels.geometry
    K = channels.wideband.K
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "M", "L", "K", "U"])
        w.writerow([geo.N, geo.M, geo.num_layers, K, channels.U])
        w.writerow(_DUMP_COLUMNS)
        for k in range(K):
            sub = channels.subcarrier(k)
            blocks = [("F0", 0, sub.F0)]
            blocks += [("F", l + 1, Fl) for l, Fl in enumerate(sub.F)]
            blocks += [("g", u, sub.G[u][:, None]) for u in range(sub.U)]
            blocks += [("S", 0, sub.S)]
            for name, idx, mat in blocks:
                for (i, j), v in np.ndenumerate(mat):
                    w.writerow([name, idx, k, i, j, f"{v.real:.17g}", f"{v.imag:.17g}"])
    return path


def read_channel_dump(path) -> dict:
    """Inverse of :func:`write_channel_dump`: {(matrix, index, k): array}."""
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        next(r)
        N, M, L, K, U = (int(v) for v in next(r))
        next(r)
        shapes = {"F0": (N, M), "F": (N, N), "g": (N, 1), "S": (M, M)}
        out: dict = {"header": dict(N=N, M=M, L=L, K=K, U=U)}
        for name, idx, k, i, j, re, im in r:
            key = (name, int(idx), int(k))
            if key not in out:
                out[key] = np.zeros(shapes[name], dtype=complex)
            out[key][int(i), int(j)] = complex(float(re), float(im))
    return out
