"""End-to-end pipeline, parameter sweeps, Monte Carlo checks and file output."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cascade import BasebandChannelStats, SimPhaseConfig, baseband_stats, mean_channels, row_cascade
from .channel import ChannelSet
from .geometry import UePlacement
from .holographic import OptimizerSettings, OptimizerTrace, optimize
from .phase_error import PhaseErrorModel, sample_error_matrices
from .power import WaterfillingSettings, iterative_waterfilling_multi
from .rates import RateReport, average_rate_mmse, high_snr_limit, zero_distance_limit
from .scenario import Scenario

log = logging.getLogger(__name__)

THREADS_ENV = "SIMTRX_THREADS"
TDMA_GRID = 101
NUMERICAL_ERRORS = (np.linalg.LinAlgError, FloatingPointError, ArithmeticError, ValueError)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


# ----------------------------------------------------------------------------
# One design


@dataclass
class DesignResult:
    phases: SimPhaseConfig
    trace: OptimizerTrace
    stats: list[BasebandChannelStats]
    S: list[np.ndarray]
    noise: np.ndarray
    shares: np.ndarray  # (U, K)
    powers: np.ndarray  # (U, K)
    report: RateReport
    waterfilling_iterations: int


def build_channels(scenario: Scenario, users: np.ndarray | None = None) -> ChannelSet:
    return ChannelSet(
        geometry=scenario.geometry.build(),
        users=UePlacement(scenario.users if users is None else users),
        wideband=scenario.wideband.build(),
        coupling=scenario.channel.coupling_config,
        model=scenario.channel.model,
        far_field_gain=scenario.channel.far_field_gain,
        subgrid=scenario.channel.subgrid,
    )


def design(
    channels: ChannelSet,
    model: PhaseErrorModel,
    optimizer: OptimizerSettings = OptimizerSettings(),
    power: WaterfillingSettings = WaterfillingSettings(),
    power_coupling: str = "per_subcarrier",
    phases: SimPhaseConfig | None = None,
) -> DesignResult:
    """Holographic phases at the carrier, then MMSE precoding and power shares per subcarrier.

    Passing ``phases`` skips the phase optimization.
    """
    if phases is None:
        phases, trace = optimize(channels.center(), model, optimizer)
    else:
        trace = OptimizerTrace()
    wb = channels.wideband
    subs = list(channels)
    stats = [baseband_stats(ch, phases, model) for ch in subs]
    S = [ch.S for ch in subs]
    noise = np.full(wb.K, wb.noise_power)
    rho = wb.tx_powers
    shares = iterative_waterfilling_multi(stats, S, noise, rho, power, power_coupling)
    P = np.stack([s.p[:, 0] for s in shares], axis=1)
    report = average_rate_mmse(stats, S, P * rho, noise)
    iters = max(s.iterations_used for s in shares)
    return DesignResult(phases, trace, stats, S, noise, P, P * rho, report, iters)


# ----------------------------------------------------------------------------
# Sweeps


@dataclass
class TdmaResult:
    """Single-user rates and the two-user time-sharing frontier."""

    user_rates: np.ndarray
    epsilon: np.ndarray
    frontier: np.ndarray

    @property
    def best(self) -> float:
        return float(self.frontier.max()) if self.frontier.size else float(self.user_rates.max())


def tdma_frontier(r1: float, r2: float, points: int = TDMA_GRID) -> tuple[np.ndarray, np.ndarray]:
    eps = np.linspace(0.0, 1.0, points)
    return eps, eps * r1 + (1 - eps) * r2


@dataclass
class PointResult:
    index: int
    assignment: dict
    seed: int = 0
    status: str = "ok"
    error: str = ""
    report: RateReport | None = None
    trace: OptimizerTrace | None = None
    tdma: TdmaResult | None = None
    waterfilling_iterations: int = 0

    @property
    def R_avg(self) -> float:
        if self.tdma is not None:
            return self.tdma.best
        return self.report.R_avg if self.report is not None else float("nan")


@dataclass
class RunRecord:
    scenario_name: str
    scenario_hash: str
    parameters: list[str]
    points: list[PointResult]
    wall_clock: float
    version: str = __version__
    config: dict = field(default_factory=dict)

    @property
    def failed(self) -> list[PointResult]:
        return [p for p in self.points if p.status != "ok"]


def _point_seed(seed: int, n: int) -> list[int]:
    """Disjoint sub-seeds, one per sweep point, from the scenario seed and point index."""
    return [int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(n)]


def initialization_seed(seed: int) -> int:
    """Seed of the random initial phases, shared by all sweep points.

    Sharing it means points with the same stack shape start from the same
    phases, so sweep trends are not masked by different local optima.
    """
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def _run_point(index: int, assignment: dict, scenario: Scenario, seed: int) -> PointResult:
    res = PointResult(index, assignment, seed)
    settings = replace(scenario.optimizer, seed=initialization_seed(scenario.seed))
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            if scenario.channel.model == "far_field":
                rates, reports, traces = [], [], []
                for u in range(len(scenario.users)):
                    d = design(build_channels(scenario, scenario.users[u:u + 1]), scenario.phase_error, settings,
                               scenario.power, scenario.power_coupling)
                    rates.append(d.report.R_avg)
                    reports.append(d.report)
                    traces.append(d.trace)
                rates = np.asarray(rates)
                if len(rates) == 2:
                    eps, front = tdma_frontier(rates[0], rates[1])
                else:
                    eps, front = np.empty(0), np.empty(0)
                res.tdma = TdmaResult(rates, eps, front)
                res.report = RateReport(np.concatenate([r.rate for r in reports]),
                                        np.concatenate([r.sinr for r in reports]))
                res.trace = traces[0]
            else:
                d = design(build_channels(scenario), scenario.phase_error, settings, scenario.power,
                           scenario.power_coupling)
                res.report = d.report
                res.trace = d.trace
                res.waterfilling_iterations = d.waterfilling_iterations
    except NUMERICAL_ERRORS as exc:
        res.status = "error"
        res.error = f"{type(exc).__name__}: {exc}"
        log.warning("sweep point %d failed: %s", index, res.error)
    return res


def run_scenario(scenario: Scenario, threads: int | None = None, seed: int | None = None) -> RunRecord:
    """Run every sweep point; failures are recorded per point."""
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    start = time.perf_counter()
    points = scenario.points()
    seeds = _point_seed(scenario.seed, len(points))
    jobs = [(i, a, s, seeds[i]) for i, (a, s) in enumerate(points)]
    workers = resolve_threads(threads)
    if workers == 1 or len(jobs) <= 1:
        results = [_run_point(*j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: _run_point(*j), jobs))
    params = []
    for ax in scenario.sweep:
        params.extend(ax.parameters)
    return RunRecord(scenario.name, scenario.digest(), params, results, time.perf_counter() - start,
                     config=scenario.to_dict())


# ----------------------------------------------------------------------------
# Output


def fmt(x) -> str:
    """12 significant digits for numbers; JSON for lists."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    if isinstance(x, (list, tuple)):
        return json.dumps(x, separators=(",", ":"))
    return str(x)


RATE_COLUMNS = ["user", "subcarrier", "sinr", "rate"]
SUMMARY_COLUMNS = ["status", "R_avg", "objective", "sweeps", "waterfilling_iterations", "tdma_best", "error"]


def _write_csv(path: Path, header: list[str], rows) -> None:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_outputs(record: RunRecord, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    params = record.parameters

    def prefix(p: PointResult) -> list[str]:
        return [str(p.index)] + [fmt(p.assignment.get(k, "")) for k in params]

    rate_rows, summary_rows, trace_rows, frontier_rows = [], [], [], []
    for p in record.points:
        if p.report is not None:
            U, K = p.report.rate.shape
            for u in range(U):
                for k in range(K):
                    rate_rows.append(prefix(p) + [str(u), str(k), fmt(p.report.sinr[u, k]), fmt(p.report.rate[u, k])])
        tr = p.trace
        objective = tr.objective_per_sweep[-1] if tr is not None and tr.objective_per_sweep else float("nan")
        summary_rows.append(prefix(p) + [
            p.status,
            fmt(p.R_avg),
            fmt(objective),
            str(tr.sweeps_used if tr is not None and tr.objective_per_sweep else 0),
            str(p.waterfilling_iterations),
            fmt(p.tdma.best) if p.tdma is not None else "",
            p.error,
        ])
        if tr is not None:
            for s, obj in enumerate(tr.objective_per_sweep):
                trace_rows.append([str(p.index), str(s), fmt(obj)])
        if p.tdma is not None:
            for e, r in zip(p.tdma.epsilon, p.tdma.frontier):
                frontier_rows.append([str(p.index), fmt(e), fmt(r)])

    head = ["point"] + params
    paths = {
        "rates": out / "rates.csv",
        "summary": out / "summary.csv",
        "trace": out / "trace.csv",
        "frontier": out / "frontier.csv",
        "json": out / "summary.json",
    }
    _write_csv(paths["rates"], head + RATE_COLUMNS, rate_rows)
    _write_csv(paths["summary"], head + SUMMARY_COLUMNS, summary_rows)
    _write_csv(paths["trace"], ["point", "sweep", "objective"], trace_rows)
    _write_csv(paths["frontier"], ["point", "epsilon1", "rate"], frontier_rows)
    doc = {
        "scenario": record.scenario_name,
        "scenario_hash": record.scenario_hash,
        "version": record.version,
        "wall_clock_s": record.wall_clock,
        "config": record.config,
        "points": [
            {"point": p.index, "params": p.assignment, "seed": p.seed, "status": p.status, "R_avg": p.R_avg,
             "error": p.error}
            for p in record.points
        ],
    }
    try:
        paths["json"].write_text(json.dumps(doc, indent=2, default=str) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {paths['json']}: {exc.strerror or exc}") from exc
    return paths


# ----------------------------------------------------------------------------
# Monte Carlo validation of the channel statistics


@dataclass
class ValidationReport:
    n_samples: int
    xi_expected: float
    xi_empirical: float
    xi_standard_error: float
    mean_fraction_within: float
    cov_relative_error: float
    mean_threshold: float = 0.95
    cov_threshold: float = 0.05

    @property
    def xi_ok(self) -> bool:
        if self.xi_standard_error == 0:
            return abs(self.xi_empirical - self.xi_expected) < 1e-12
        return abs(self.xi_empirical - self.xi_expected) <= 3 * self.xi_standard_error

    @property
    def mean_ok(self) -> bool:
        return self.mean_fraction_within >= self.mean_threshold

    @property
    def cov_ok(self) -> bool:
        return self.cov_relative_error < self.cov_threshold

    @property
    def passed(self) -> bool:
        return self.xi_ok and self.mean_ok and self.cov_ok

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "xi_expected": self.xi_expected,
            "xi_empirical": self.xi_empirical,
            "xi_standard_error": self.xi_standard_error,
            "xi_ok": self.xi_ok,
            "mean_fraction_within_3se": self.mean_fraction_within,
            "mean_ok": self.mean_ok,
            "cov_relative_error": self.cov_relative_error,
            "cov_ok": self.cov_ok,
            "passed": self.passed,
        }


@dataclass
class MonteCarloMoments:
    """Empirical moments of the baseband row channels g_u^H A."""

    mean: np.ndarray  # (U, M)
    standard_error: np.ndarray  # (U, M)
    covariance: np.ndarray  # (U, M, M)
    xi: float
    xi_standard_error: float


def sample_channel_moments(ch, phases: SimPhaseConfig, model: PhaseErrorModel, n_samples: int, seed,
                           batch: int = 1000, threads: int | None = None) -> MonteCarloMoments:
    """Accumulate first and second moments of g^H A over random phase errors."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    sizes = [min(batch, n_samples - s) for s in range(0, n_samples, batch)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    rows = ch.G.conj()
    U, M = ch.U, ch.M

    def work(args):
        size, child = args
        E = sample_error_matrices(model, size * (ch.L + 1), ch.N, np.random.default_rng(child))
        E = E.reshape(size, ch.L + 1, ch.N)
        diag = phases.diagonals[None] * E
        h = np.stack([row_cascade(ch, diag, rows[u][None, :]) for u in range(U)], axis=1)  # (B, U, M)
        s1 = h.sum(axis=0)
        s2 = np.einsum("bui,buj->uij", h.conj(), h)  # sum of column-vector outer products
        c = np.cos(np.angle(E)).ravel()
        return s1, s2, np.abs(h) ** 2, c.sum(), (c * c).sum(), c.size

    jobs = list(zip(sizes, children))
    workers = resolve_threads(threads)
    if workers == 1:
        parts = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, jobs))
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    abs2 = sum(p[2].sum(axis=0) for p in parts)
    cs, cs2, cn = (sum(p[i] for p in parts) for i in (3, 4, 5))
    n = n_samples
    mean = s1 / n
    var = np.maximum(abs2 / n - np.abs(mean) ** 2, 0.0)
    col_mean = mean.conj()
    cov = s2 / n - np.einsum("ui,uj->uij", col_mean, col_mean.conj())
    xi = cs / cn
    xi_se = np.sqrt(max(cs2 / cn - xi * xi, 0.0) / cn)
    return MonteCarloMoments(mean, np.sqrt(var / n), cov, float(xi), float(xi_se))


def run_montecarlo_validation(scenario: Scenario, n_samples: int | None = None, threads: int | None = None,
                              phases: SimPhaseConfig | None = None) -> ValidationReport:
    """Compare sampled channel moments with their closed forms at the carrier.

    Uses the first sweep point and the optimized phases unless ``phases``
    is given.
    """
    n = scenario.montecarlo_samples if n_samples is None else n_samples
    point = scenario.points()[0][1]
    model = point.phase_error
    ch = build_channels(point).center()
    if phases is None:
        phases, _ = optimize(ch, model, replace(point.optimizer, seed=initialization_seed(point.seed)))
    mc = sample_channel_moments(ch, phases, model, n, _point_seed(point.seed, 1)[0], threads=threads)
    exact_rows = mean_channels(ch, phases, model).conj()
    # round-off floor so deterministic entries (zero standard error) still compare
    floor = 1e-9 * np.abs(exact_rows).max(initial=0.0)
    within = np.abs(mc.mean - exact_rows) <= 3 * mc.standard_error + floor
    stats = baseband_stats(ch, phases, model)
    num = np.linalg.norm(mc.covariance - stats.C)
    den = np.linalg.norm(stats.C)
    rel = float(num / den) if den > 0 else float(num)
    return ValidationReport(n, model.xi, mc.xi, mc.xi_standard_error, float(within.mean()), rel)


# ----------------------------------------------------------------------------
# Analytic limits


@dataclass
class LimitResult:
    index: int
    assignment: dict
    R_avg: float = float("nan")
    high_snr: float = float("nan")
    zero_distance: float = float("nan")
    status: str = "ok"
    error: str = ""


def evaluate_limits(scenario: Scenario) -> list[LimitResult]:
    """High-power and element-aligned rate limits of the optimized design at every point."""
    points = scenario.points()
    out = []
    for i, (a, s) in enumerate(points):
        res = LimitResult(i, a)
        try:
            channels = build_channels(s)
            d = design(channels, s.phase_error, replace(s.optimizer, seed=initialization_seed(s.seed)), s.power,
                       s.power_coupling)
            res.R_avg = d.report.R_avg
            res.high_snr = high_snr_limit(d.stats, d.S, d.shares)
            aligned = replace(s.geometry, layer_spacing=0.0).build()
            res.zero_distance = zero_distance_limit(aligned, channels.users, d.phases, s.phase_error,
                                                    channels.wideband.wavelengths, d.powers, d.noise, d.S)
        except NUMERICAL_ERRORS as exc:
            res.status = "error"
            res.error = f"{type(exc).__name__}: {exc}"
        out.append(res)
    return out


def write_limits(results: list[LimitResult], params: list[str], path) -> Path:
    path = Path(path)
    rows = [[str(r.index)] + [fmt(r.assignment.get(k, "")) for k in params]
            + [r.status, fmt(r.R_avg), fmt(r.high_snr), fmt(r.zero_distance), r.error] for r in results]
    _write_csv(path, ["point"] + params + ["status", "R_avg", "high_snr_limit", "zero_distance_limit", "error"], rows)
    return path
