"""Closed-loop simulation, tracking metrics and the strategy benchmark."""

from __future__ import annotations

import csv
import gc
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import ControllerSpec, decide
from .errors import AdpMpcError, InfeasibleError, PlantBlowupError
from .scenario import Problem

logger = logging.getLogger(__name__)

WARMUP_STEPS = 10


@dataclass
class SimTrace:
    """Per-step record of one closed-loop run (absolute units).

    Row ``k`` holds the state at ``t_k``, the measurement the controller
    saw, the input it applied over ``[t_k, t_k+1)`` and the step's costs.
    """

    strategy: str
    t: np.ndarray
    x_true: np.ndarray
    x_meas: np.ndarray
    u: np.ndarray
    stage_cost: np.ndarray
    value: np.ndarray
    latency: np.ndarray
    clamped: np.ndarray
    infeasible: np.ndarray
    failure: str | None = None
    failure_kind: str | None = None

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def n(self) -> int:
        return self.x_true.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def columns(self) -> list[str]:
        cols = ["t"]
        cols += [f"x{i + 1}" for i in range(self.n)]
        cols += [f"x{i + 1}_meas" for i in range(self.n)]
        cols += [f"u{j + 1}" for j in range(self.m)]
        return cols + ["stage_cost", "value", "latency", "clamped", "infeasible"]

    def rows(self):
        for k in range(len(self)):
            yield [self.t[k], *self.x_true[k], *self.x_meas[k], *self.u[k], self.stage_cost[k],
                   self.value[k], self.latency[k], int(self.clamped[k]), int(self.infeasible[k])]


def empty_trace(strategy: str, n: int, m: int) -> SimTrace:
    z = np.zeros(0)
    return SimTrace(strategy, z, np.zeros((0, n)), np.zeros((0, n)), np.zeros((0, m)), z, z, z,
                    np.zeros(0, bool), np.zeros(0, bool))


def run_closed_loop(problem: Problem, spec: ControllerSpec, *, steps: int | None = None,
                    x0=None, sigma: float | None = None, seed: int | None = None,
                    policy: str | None = None) -> SimTrace:
    """Simulate the true plant under ``spec`` for ``steps + 1`` sampling instants.

    Measurement noise is zero-mean Gaussian with standard deviation
    ``sigma`` on every level, drawn from a generator seeded with ``seed``.
    A plant failure, or an infeasible instant under the ``terminate``
    policy, ends the run early and is recorded on the trace.
    """
    c = problem.scenario.config
    steps = problem.scenario.steps if steps is None else steps
    sigma = float(c["noise"]["sigma"]) if sigma is None else sigma
    seed = int(c["seed"]) if seed is None else seed
    policy = c["infeasibility"] if policy is None else policy
    plant = problem.plant
    eplant = problem.error_plant
    x_r = problem.setpoint.x_r
    u_r = problem.setpoint.u_r
    W = spec.model.weights
    rng = np.random.default_rng(seed)
    n, m = plant.n, plant.m
    K = steps + 1
    t = np.arange(K) * plant.dt
    xs = np.zeros((K, n))
    xm = np.zeros((K, n))
    us = np.zeros((K, m))
    stage = np.zeros(K)
    value = np.zeros(K)
    lat = np.zeros(K)
    clamp = np.zeros(K, bool)
    infeas = np.zeros(K, bool)
    x = np.asarray(c["initial_state"] if x0 is None else x0, dtype=float).reshape(n)
    failure = kind = None
    rows = 0
    for k in range(K):
        xs[k] = x
        meas = x + sigma * rng.standard_normal(n) if sigma > 0 else x
        xm[k] = meas
        try:
            dec = decide(meas - x_r, spec, eplant)
            du, val, lat[k] = dec.u, dec.objective, dec.latency
        except InfeasibleError as exc:
            infeas[k] = True
            if policy == "terminate":
                failure, kind = str(exc), "infeasible"
                break
            logger.warning("t=%.2f: %s; applying least-violation level", t[k], exc)
            du, val = exc.u, np.nan
        except PlantBlowupError as exc:
            failure, kind = str(exc), "runtime"
            break
        us[k] = du + u_r
        value[k] = val
        et = x - x_r
        stage[k] = float(et @ W.Q @ et + du @ W.R @ du)
        rows = k + 1
        if k == K - 1:
            break
        try:
            x, clamp[k] = plant.step(x, us[k], return_clamp=True)
        except PlantBlowupError as exc:
            failure, kind = str(exc), "runtime"
            break
    sl = slice(0, rows)
    return SimTrace(spec.strategy.value, t[sl], xs[sl], xm[sl], us[sl], stage[sl], value[sl], lat[sl],
                    clamp[sl], infeas[sl], failure, kind)


def compute_ise(trace: SimTrace, x_r) -> float:
    """Sum over steps of the squared distance of the true state to ``x_r``."""
    if len(trace) == 0:
        raise ValueError("ISE of an empty trace")
    e = trace.x_true - np.asarray(x_r, dtype=float)
    return float(np.sum(e * e))


def total_variation(u) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.sum(np.abs(np.diff(u, axis=0))))


@dataclass
class StrategyResult:
    strategy: str
    mean_time: float
    median_time: float
    p99_time: float
    ise: float
    final_error: float
    steps: int
    failure: str | None = None


@dataclass
class BenchReport:
    results: list[StrategyResult]
    traces: dict[str, SimTrace] = field(default_factory=dict)

    def by_strategy(self) -> dict[str, StrategyResult]:
        return {r.strategy: r for r in self.results}

    def table(self) -> str:
        head = f"{'strategy':<10}{'mean [s]':>14}{'median [s]':>14}{'p99 [s]':>14}{'ISE':>14}{'final |e|':>14}  status"
        lines = [head, "-" * len(head)]
        for r in self.results:
            lines.append(
                f"{r.strategy:<10}{r.mean_time:>14.4e}{r.median_time:>14.4e}{r.p99_time:>14.4e}"
                f"{r.ise:>14.6g}{r.final_error:>14.4e}  {r.failure or 'ok'}"
            )
        return "\n".join(lines)


def latency_stats(trace: SimTrace, warmup: int = WARMUP_STEPS) -> tuple[float, float, float]:
    lat = trace.latency[warmup:] if len(trace) > warmup else trace.latency
    if lat.size == 0:
        return float("nan"), float("nan"), float("nan")
    return float(np.mean(lat)), float(np.median(lat)), float(np.percentile(lat, 99))


def benchmark(problem: Problem, strategies=None, *, steps: int | None = None,
              sigma: float | None = None) -> BenchReport:
    """Run each strategy from the same initial state and seed; time the controller only."""
    c = problem.scenario.config
    strategies = list(c["strategies"] if strategies is None else strategies)
    results, traces = [], {}
    for name in strategies:
        try:
            spec = problem.spec(name)
        except AdpMpcError as exc:
            results.append(StrategyResult(name, *(float("nan"),) * 5, 0, str(exc)))
            continue
        enabled = gc.isenabled()
        gc.disable()
        try:
            tr = run_closed_loop(problem, spec, steps=steps, sigma=sigma)
        finally:
            if enabled:
                gc.enable()
        traces[name] = tr
        mean, med, p99 = latency_stats(tr)
        ise = compute_ise(tr, problem.setpoint.x_r) if len(tr) else float("nan")
        fin = float(np.linalg.norm(tr.x_true[-1] - problem.setpoint.x_r)) if len(tr) else float("nan")
        results.append(StrategyResult(name, mean, med, p99, ise, fin, len(tr), tr.failure))
    return BenchReport(results, traces)


# -- CSV ----------------------------------------------------------------------


def write_trace_csv(trace: SimTrace, path) -> Path:
    """One row per step; floats written with ``repr`` for exact read-back."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(trace.columns())
            for row in trace.rows():
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc
    return path


def read_trace_csv(path, strategy: str = "") -> SimTrace:
    path = Path(path)
    with path.open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = np.array([[float(v) for v in row] for row in rd], dtype=float).reshape(-1, len(header))
    n = sum(1 for h in header if h.startswith("x") and not h.endswith("_meas"))
    m = sum(1 for h in header if h.startswith("u"))
    col = 1
    x = data[:, col:col + n]
    col += n
    xm = data[:, col:col + n]
    col += n
    u = data[:, col:col + m]
    col += m
    return SimTrace(strategy, data[:, 0], x, xm, u, data[:, col], data[:, col + 1], data[:, col + 2],
                    data[:, col + 3].astype(bool), data[:, col + 4].astype(bool))


def write_report(report: BenchReport, directory) -> list[Path]:
    """Benchmark table as CSV and aligned text, plus one trace CSV per strategy."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    p = d / "bench.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "mean_time", "median_time", "p99_time", "ise", "final_error", "steps", "failure"])
        for r in report.results:
            w.writerow([r.strategy, repr(r.mean_time), repr(r.median_time), repr(r.p99_time), repr(r.ise),
                        repr(r.final_error), r.steps, r.failure or ""])
    out.append(p)
    p = d / "bench.txt"
    p.write_text(report.table() + "\n")
    out.append(p)
    for name, tr in report.traces.items():
        out.append(write_trace_csv(tr, d / f"trace_{name}.csv"))
    return out
