"""Scenario files: YAML with unit-tagged quantities, sweeps and defaults.

Quantities carry their unit in the string, e.g. ``"10 GHz"``,
``"0.25 wavelengths"``, ``"-104 dBm/Hz"``. Wavelength-relative lengths are
resolved against the carrier. Sweep axes override dotted paths of the
normalized scenario dictionary; the pseudo-parameter ``snr`` sets the
transmit power from a target average receive SNR.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .channel import CouplingConfig, WidebandConfig, path_loss
from .geometry import SPEED_OF_LIGHT, SimGeometry, UePlacement, build_urpa_geometry
from .holographic import OptimizerSettings
from .phase_error import FAMILIES, PhaseErrorModel
from .power import POWER_COUPLING_MODES, WaterfillingSettings

PSEUDO_PARAMETERS = ("snr",)


class ConfigError(ValueError):
    """Invalid scenario; ``field`` is the dotted path, ``line`` 1-based when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None, source=None):
        self.field = field
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f":{line}"
        if field:
            where += f" [{field}]" if where else f"[{field}]"
        super().__init__(f"{where}: {message}" if where else message)


# ----------------------------------------------------------------------------
# Units

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]+)\s*$")

_SCALES = {
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "power": {"W": 1.0, "mW": 1e-3},
    "density": {"W/Hz": 1.0},
}


def dbm_to_watts(x: float) -> float:
    return 10 ** ((x - 30.0) / 10.0)


def db_to_linear(x: float) -> float:
    return 10 ** (x / 10.0)


def parse_quantity(value, kind: str, wavelength: float | None = None) -> float:
    """Convert a unit-tagged string to SI.

    ``kind`` is one of length, frequency, power, density, db.
    """
    if isinstance(value, bool) or not isinstance(value, str):
        raise ValueError(f"expected a unit-tagged string for a {kind}, got {value!r}")
    m = _QTY.match(value)
    if not m:
        raise ValueError(f"cannot parse quantity {value!r}")
    x, unit = float(m.group(1)), m.group(2)
    if kind == "length" and unit in ("wavelength", "wavelengths"):
        if wavelength is None:
            raise ValueError("wavelength-relative length needs the carrier")
        return x * wavelength
    if kind == "power" and unit == "dBm":
        return dbm_to_watts(x)
    if kind == "density" and unit == "dBm/Hz":
        return dbm_to_watts(x)
    if kind == "db":
        if unit != "dB":
            raise ValueError(f"expected dB, got {unit!r}")
        return x
    scale = _SCALES.get(kind, {}).get(unit)
    if scale is None:
        raise ValueError(f"unit {unit!r} is not valid for a {kind}")
    return x * scale


_FORMAT_UNITS = {"length": "m", "frequency": "Hz", "power": "W", "density": "W/Hz", "db": "dB"}


def format_quantity(x: float, kind: str) -> str:
    return f"{float(x)!r} {_FORMAT_UNITS[kind]}"


# ----------------------------------------------------------------------------
# Scenario dataclasses


@dataclass(frozen=True)
class GeometrySpec:
    element_counts: tuple[int, int] = (16, 16)
    element_size: float = 0.0075
    layers: int = 2
    layer_spacing: float = 0.15
    feed_counts: tuple[int, int] = (2, 2)
    feed_spacing: float = 0.015
    feed_offset: float = 0.0

    def build(self) -> SimGeometry:
        return build_urpa_geometry(self.element_counts, self.element_size, (self.layer_spacing,) * self.layers,
                                   self.feed_counts, self.feed_spacing, self.feed_offset)


@dataclass(frozen=True)
class WidebandSpec:
    carrier: float = 10e9
    bandwidth: float = 600e6
    subcarriers: int = 8
    noise_density: float = dbm_to_watts(-104.0)
    tx_power: float = 1e-3

    @property
    def noise_total(self) -> float:
        return self.noise_density * self.bandwidth

    def build(self) -> WidebandConfig:
        K = self.subcarriers
        return WidebandConfig(self.carrier, self.bandwidth, K, self.noise_total / K, self.tx_power / K)


@dataclass(frozen=True)
class PhaseErrorSpec:
    """Family and variance as written; zero variance means error-free."""

    family: str = "none"
    variance: float = 0.0

    @property
    def model(self) -> PhaseErrorModel:
        return PhaseErrorModel.from_variance(self.family, self.variance)


@dataclass(frozen=True)
class ChannelSpec:
    model: str = "near_field"
    far_field_gain: str = "matched"
    subgrid: int = 8
    coupling: bool = False
    dipole_length: float | None = None
    antenna_impedance: float = 50.0
    load_impedance: float = 50.0

    @property
    def coupling_config(self) -> CouplingConfig:
        return CouplingConfig(self.coupling, self.dipole_length, self.antenna_impedance, self.load_impedance)


@dataclass(frozen=True)
class SweepAxis:
    parameters: tuple[str, ...]
    values: tuple[tuple, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    geometry: GeometrySpec
    wideband: WidebandSpec
    phase_spec: PhaseErrorSpec
    user_positions: np.ndarray = field(compare=False, repr=False)
    user_count: int = 1
    channel: ChannelSpec = ChannelSpec()
    optimizer: OptimizerSettings = OptimizerSettings()
    power: WaterfillingSettings = WaterfillingSettings()
    power_coupling: str = "per_subcarrier"
    montecarlo_samples: int = 10_000
    snr_reference_user: int = 0
    sweep: tuple[SweepAxis, ...] = ()
    output_dir: str = "out"
    source: str | None = field(default=None, compare=False)

    @property
    def phase_error(self) -> PhaseErrorModel:
        return self.phase_spec.model

    @property
    def users(self) -> np.ndarray:
        return self.user_positions[: self.user_count]

    @property
    def placement(self) -> UePlacement:
        return UePlacement(self.users)

    @property
    def center_wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.wideband.carrier

    def to_dict(self) -> dict:
        return serialize(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def points(self) -> list[tuple[dict, "Scenario"]]:
        """Cartesian product of the sweep axes as (assignments, scenario) pairs."""
        return expand_sweep(self)

    def same_fields(self, other: "Scenario") -> bool:
        return self.to_dict() == other.to_dict()


# ----------------------------------------------------------------------------
# Parsing


def _yaml_lines(text: str) -> dict:
    """Map dotted paths to 1-based line numbers of the YAML nodes."""
    out: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, f"{path}.{k.value}" if path else str(k.value))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}.{i}")

    if root is not None:
        walk(root, "")
    return out


class _Reader:
    def __init__(self, data: dict, lines: dict | None = None, source=None):
        self.data = data
        self.lines = lines or {}
        self.source = source
        self.used: set[str] = set()

    def error(self, path: str, message: str) -> ConfigError:
        line = None
        parts = path.split(".")
        while parts and line is None:
            line = self.lines.get(".".join(parts))
            parts.pop()
        return ConfigError(message, path, line, self.source)

    def section(self, name: str) -> dict:
        sec = self.data.get(name, {})
        if sec is None:
            sec = {}
        if not isinstance(sec, dict):
            raise self.error(name, "expected a mapping")
        return sec

    def get(self, path: str, default=None, convert=None):
        sec, _, key = path.rpartition(".")
        container = self.section(sec) if sec else self.data
        self.used.add(path)
        if key not in container:
            return default
        value = container[key]
        if convert is None:
            return value
        try:
            return convert(value)
        except (TypeError, ValueError) as exc:
            raise self.error(path, str(exc)) from None


def _int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(v)


_PLAIN_NUMBER = re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?$")


def _float(v) -> float:
    # YAML 1.1 reads exponent literals without a dot (1e-10) as strings
    if isinstance(v, str) and _PLAIN_NUMBER.match(v.strip()):
        return float(v)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _pair(v) -> tuple[int, int]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError(f"expected an [x, y] pair, got {v!r}")
    return (_int(v[0]), _int(v[1]))


def _bool(v) -> bool:
    if not isinstance(v, bool):
        raise ValueError(f"expected true or false, got {v!r}")
    return v


def _choice(options):
    def conv(v):
        if v not in options:
            raise ValueError(f"expected one of {list(options)}, got {v!r}")
        return v
    return conv


_KNOWN = {
    "": {"name", "seed", "geometry", "wideband", "phase_error", "users", "channel", "optimizer", "power",
         "montecarlo", "snr", "sweep", "output"},
    "geometry": {"element_counts", "element_size", "layers", "layer_spacing", "feed_counts", "feed_spacing",
                 "feed_offset"},
    "wideband": {"carrier", "bandwidth", "subcarriers", "noise_density", "tx_power"},
    "phase_error": {"family", "variance"},
    "users": {"unit", "positions", "count"},
    "channel": {"model", "far_field_gain", "subgrid", "coupling", "dipole_length", "antenna_impedance",
                "load_impedance"},
    "optimizer": {"sweeps", "epsilon"},
    "power": {"coupling", "tol", "max_iter"},
    "montecarlo": {"samples"},
    "snr": {"reference_user"},
    "output": {"dir"},
}


def _check_keys(r: _Reader) -> None:
    for sec, keys in _KNOWN.items():
        container = r.data if sec == "" else r.section(sec)
        for k in container:
            if k not in keys:
                raise r.error(f"{sec}.{k}" if sec else str(k), f"unknown field {k!r}")


def parse_scenario(data: dict, source=None, lines: dict | None = None) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping", source=source)
    r = _Reader(data, lines, source)
    _check_keys(r)
    if "seed" not in data:
        raise r.error("seed", "a seed is required")

    carrier = r.get("wideband.carrier", 10e9, lambda v: parse_quantity(v, "frequency"))
    if carrier <= 0:
        raise r.error("wideband.carrier", "carrier must be positive")
    lam = SPEED_OF_LIGHT / carrier

    def length(v):
        return parse_quantity(v, "length", lam)

    wb = WidebandSpec(
        carrier=carrier,
        bandwidth=r.get("wideband.bandwidth", 600e6, lambda v: parse_quantity(v, "frequency")),
        subcarriers=r.get("wideband.subcarriers", 8, _int),
        noise_density=r.get("wideband.noise_density", dbm_to_watts(-104.0), lambda v: parse_quantity(v, "density")),
        tx_power=r.get("wideband.tx_power", 1e-3, lambda v: parse_quantity(v, "power")),
    )
    try:
        wb.build()
    except ValueError as exc:
        raise r.error("wideband", str(exc)) from None

    geo = GeometrySpec(
        element_counts=r.get("geometry.element_counts", (16, 16), _pair),
        element_size=r.get("geometry.element_size", lam / 4, length),
        layers=r.get("geometry.layers", 2, _int),
        layer_spacing=r.get("geometry.layer_spacing", 5 * lam, length),
        feed_counts=r.get("geometry.feed_counts", (2, 2), _pair),
        feed_spacing=r.get("geometry.feed_spacing", lam / 2, length),
        feed_offset=r.get("geometry.feed_offset", 0.0, length),
    )
    if geo.layers < 0:
        raise r.error("geometry.layers", "number of layers must be >= 0")
    try:
        built = geo.build()
    except ValueError as exc:
        raise r.error("geometry", str(exc)) from None

    family = r.get("phase_error.family", "none", _choice(FAMILIES))
    variance = r.get("phase_error.variance", 0.0, _float)
    try:
        PhaseErrorModel.from_variance(family, variance)
    except ValueError as exc:
        raise r.error("phase_error.variance", str(exc)) from None

    unit = r.get("users.unit", None)
    if unit is None:
        raise r.error("users.unit", "user positions need a unit tag (m, cm, mm or wavelengths)")
    raw_pos = r.get("users.positions", None)
    if not isinstance(raw_pos, list) or not raw_pos:
        raise r.error("users.positions", "expected a nonempty list of [x, y, z] positions")
    try:
        scale = lam if unit in ("wavelength", "wavelengths") else parse_quantity(f"1 {unit}", "length")
        pos = np.array([[_float(c) for c in p] for p in raw_pos]) * scale
    except (TypeError, ValueError) as exc:
        raise r.error("users.positions", str(exc)) from None
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise r.error("users.positions", "each position must have three coordinates")
    count = r.get("users.count", len(pos), _int)
    if not 1 <= count <= len(pos):
        raise r.error("users.count", f"count must lie in 1..{len(pos)}")
    try:
        UePlacement(pos[:count]).check(built)
    except ValueError as exc:
        raise r.error("users.positions", str(exc)) from None

    ch = ChannelSpec(
        model=r.get("channel.model", "near_field", _choice(("near_field", "far_field"))),
        far_field_gain=r.get("channel.far_field_gain", "matched", _choice(("matched", "path_loss"))),
        subgrid=r.get("channel.subgrid", 8, _int),
        coupling=r.get("channel.coupling", False, _bool),
        dipole_length=r.get("channel.dipole_length", None, lambda v: None if v is None else length(v)),
        antenna_impedance=r.get("channel.antenna_impedance", 50.0, _float),
        load_impedance=r.get("channel.load_impedance", 50.0, _float),
    )
    if ch.subgrid < 1:
        raise r.error("channel.subgrid", "subgrid must be >= 1")

    try:
        opt = OptimizerSettings(epsilon=r.get("optimizer.epsilon", 1e-12, _float),
                                max_sweeps=r.get("optimizer.sweeps", 4, _int), seed=None)
        pw = WaterfillingSettings(tol=r.get("power.tol", 1e-8, _float),
                                  max_iter=r.get("power.max_iter", 100, _int))
    except ValueError as exc:
        raise r.error("optimizer" if "sweeps" in str(exc) or "epsilon" in str(exc) else "power", str(exc)) from None

    samples = r.get("montecarlo.samples", 10_000, _int)
    if samples < 1:
        raise r.error("montecarlo.samples", "samples must be positive")
    ref = r.get("snr.reference_user", 0, _int)
    if not 0 <= ref < count:
        raise r.error("snr.reference_user", f"reference user must lie in 0..{count - 1}")

    name = data.get("name", "scenario")
    if not isinstance(name, str):
        raise r.error("name", "name must be a string")
    scenario = Scenario(
        name=name,
        seed=r.get("seed", None, _int),
        geometry=geo,
        wideband=wb,
        phase_spec=PhaseErrorSpec(family, variance),
        user_positions=pos,
        user_count=count,
        channel=ch,
        optimizer=opt,
        power=pw,
        power_coupling=r.get("power.coupling", "per_subcarrier", _choice(POWER_COUPLING_MODES)),
        montecarlo_samples=samples,
        snr_reference_user=ref,
        sweep=_parse_sweep(r),
        output_dir=str(r.get("output.dir", "out")),
        source=None if source is None else str(source),
    )
    _check_sweep_paths(scenario, r)
    return scenario


def _parse_sweep(r: _Reader) -> tuple[SweepAxis, ...]:
    raw = r.data.get("sweep", []) or []
    if not isinstance(raw, list):
        raise r.error("sweep", "expected a list of sweep axes")
    axes = []
    for i, ax in enumerate(raw):
        path = f"sweep.{i}"
        if not isinstance(ax, dict) or "values" not in ax:
            raise r.error(path, "each axis needs 'parameter' or 'parameters' and 'values'")
        if ("parameter" in ax) == ("parameters" in ax):
            raise r.error(path, "give exactly one of 'parameter' or 'parameters'")
        values = ax["values"]
        if not isinstance(values, list):
            raise r.error(f"{path}.values", "values must be a list")
        if "parameter" in ax:
            params = (str(ax["parameter"]),)
            rows = tuple((v,) for v in values)
        else:
            params = tuple(str(p) for p in ax["parameters"])
            rows = []
            for j, v in enumerate(values):
                if not isinstance(v, list) or len(v) != len(params):
                    raise r.error(f"{path}.values.{j}", f"expected {len(params)} zipped values")
                rows.append(tuple(v))
            rows = tuple(rows)
        axes.append(SweepAxis(params, rows))
    return tuple(axes)


def _check_sweep_paths(scenario: Scenario, r: _Reader) -> None:
    base = serialize(scenario)
    for i, ax in enumerate(scenario.sweep):
        for p in ax.parameters:
            if p in PSEUDO_PARAMETERS:
                continue
            if not _has_path(base, p):
                raise r.error(f"sweep.{i}", f"sweep parameter {p!r} does not exist")
    # parse each point once so bad values fail at load time, not mid-run
    for assignment, _ in expand_sweep(scenario, _reader=r):
        pass


def _has_path(d: dict, path: str) -> bool:
    cur: Any = d
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return False
        cur = cur[part]
    return True


def _set_path(d: dict, path: str, value) -> None:
    parts = path.split(".")
    cur = d
    for part in parts[:-1]:
        cur = cur[part]
    cur[parts[-1]] = value


def expand_sweep(scenario: Scenario, _reader: _Reader | None = None) -> list[tuple[dict, Scenario]]:
    if not scenario.sweep:
        return [({}, scenario)]
    base = serialize(scenario)
    base["sweep"] = []
    out = []
    for combo in itertools.product(*(ax.values for ax in scenario.sweep)):
        d = copy.deepcopy(base)
        assignment: dict[str, Any] = {}
        snr = None
        for ax, row in zip(scenario.sweep, combo):
            for p, v in zip(ax.parameters, row):
                assignment[p] = v
                if p == "snr":
                    snr = v
                else:
                    _set_path(d, p, v)
        try:
            point = parse_scenario(d, scenario.source)
            if snr is not None:
                point = with_snr(point, parse_quantity(snr, "db"))
        except (ConfigError, ValueError) as exc:
            msg = f"sweep point {assignment}: {exc}"
            if _reader is not None:
                raise _reader.error("sweep", msg) from None
            raise ConfigError(msg, "sweep", source=scenario.source) from None
        out.append((assignment, point))
    return out


def reference_path_gain(scenario: Scenario) -> float:
    """C0 / |r|^2 of the reference user, with C0 = -30 dB at 1 m."""
    r = np.linalg.norm(scenario.users[scenario.snr_reference_user])
    return path_loss(r)


def average_snr_db(scenario: Scenario) -> float:
    return 10 * np.log10(scenario.wideband.tx_power * reference_path_gain(scenario) / scenario.wideband.noise_total)


def with_snr(scenario: Scenario, snr_db: float) -> Scenario:
    """Same scenario with the transmit power giving average SNR ``snr_db``."""
    rho = db_to_linear(snr_db) * scenario.wideband.noise_total / reference_path_gain(scenario)
    wb = WidebandSpec(scenario.wideband.carrier, scenario.wideband.bandwidth, scenario.wideband.subcarriers,
                      scenario.wideband.noise_density, rho)
    return replace(scenario, wideband=wb)


# ----------------------------------------------------------------------------
# Serialization


def serialize(s: Scenario) -> dict:
    g, w, c = s.geometry, s.wideband, s.channel
    return {
        "name": s.name,
        "seed": s.seed,
        "geometry": {
            "element_counts": list(g.element_counts),
            "element_size": format_quantity(g.element_size, "length"),
            "layers": g.layers,
            "layer_spacing": format_quantity(g.layer_spacing, "length"),
            "feed_counts": list(g.feed_counts),
            "feed_spacing": format_quantity(g.feed_spacing, "length"),
            "feed_offset": format_quantity(g.feed_offset, "length"),
        },
        "wideband": {
            "carrier": format_quantity(w.carrier, "frequency"),
            "bandwidth": format_quantity(w.bandwidth, "frequency"),
            "subcarriers": w.subcarriers,
            "noise_density": format_quantity(w.noise_density, "density"),
            "tx_power": format_quantity(w.tx_power, "power"),
        },
        "phase_error": {"family": s.phase_spec.family, "variance": float(s.phase_spec.variance)},
        "users": {"unit": "m", "positions": [[float(x) for x in p] for p in s.user_positions],
                  "count": s.user_count},
        "channel": {
            "model": c.model,
            "far_field_gain": c.far_field_gain,
            "subgrid": c.subgrid,
            "coupling": c.coupling,
            "dipole_length": None if c.dipole_length is None else format_quantity(c.dipole_length, "length"),
            "antenna_impedance": float(c.antenna_impedance),
            "load_impedance": float(c.load_impedance),
        },
        "optimizer": {"sweeps": s.optimizer.max_sweeps, "epsilon": float(s.optimizer.epsilon)},
        "power": {"coupling": s.power_coupling, "tol": float(s.power.tol), "max_iter": s.power.max_iter},
        "montecarlo": {"samples": s.montecarlo_samples},
        "snr": {"reference_user": s.snr_reference_user},
        "sweep": [
            {"parameter": ax.parameters[0], "values": [row[0] for row in ax.values]}
            if len(ax.parameters) == 1
            else {"parameters": list(ax.parameters), "values": [list(row) for row in ax.values]}
            for ax in s.sweep
        ],
        "output": {"dir": s.output_dir},
    }


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(serialize(s), sort_keys=False)


def loads_scenario(text: str, source=None) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1, source=source) from None
    return parse_scenario(data, source, _yaml_lines(text))


def load_scenario(path) -> Scenario:
    path = Path(path)
    return loads_scenario(path.read_text(), source=path)
