"""Grid-based Lyapunov decrease check for the closed loop.

The candidate Lyapunov function is the controller's own objective
``J(x)`` (stage cost plus valued successor).  For every grid point ``x``
outside a small ball around the origin the audit computes::

    c(x) = (J(f(x, u(x))) - J(x)) / |x|^2

and reports ``c2 = -max c``.  A positive ``c2`` certifies decrease on the
tested points only, to the precision of the grid.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .controller import ControllerSpec, decide
from .errors import AdpMpcError
from .plant import NonlinearPlant, lipschitz_estimate
from .polytope import Polytope, grid_points

logger = logging.getLogger(__name__)

CERTIFIED = "certified-decrease"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True, eq=False)
class AuditConfig:
    """What to audit and on which grid.

    Attributes:
        X: Region to grid, in the plant's (error) coordinates.
        spec: Control law under audit.
        plant: Plant in the same coordinates.
        per_axis: Grid points per axis (used when ``grid_step`` is None).
        grid_step: Uniform spacing; overrides ``per_axis``.
        exclusion: Points with ``|x| <= exclusion`` are skipped.
        workers: Threads evaluating grid points.
        lipschitz_samples: Grid points used for the Lipschitz estimate.
        progress: Optional callback ``(done, total)``.
    """

    X: Polytope
    spec: ControllerSpec
    plant: NonlinearPlant
    per_axis: int = 21
    grid_step: float | None = None
    exclusion: float = 1e-4
    workers: int = 1
    lipschitz_samples: int = 200
    progress: Callable[[int, int], None] | None = None

    def __post_init__(self):
        if self.exclusion <= 0:
            raise ValueError("exclusion radius must be positive")
        if self.grid_step is not None and self.grid_step <= 0:
            raise ValueError("grid step must be positive")
        if self.grid_step is None and self.per_axis < 2:
            raise ValueError("grid needs at least two points per axis")


@dataclass
class AuditReport:
    c1: float
    c2: float
    worst_state: np.ndarray | None
    points_tested: int
    points_excluded: int
    grid_step: float
    precision_h: int
    verdict: str
    value_at_origin: float
    lower_bound_ok: bool
    lipschitz: float
    offending: list = field(default_factory=list)

    def summary(self) -> str:
        lines = [
            f"verdict          {self.verdict}",
            f"c1 (min eig Q)   {self.c1:.6g}",
            f"c2 (-max c)      {self.c2:.6g}",
            f"worst state      {np.array2string(self.worst_state, precision=6) if self.worst_state is not None else '-'}",
            f"points tested    {self.points_tested} (excluded {self.points_excluded})",
            f"grid step        {self.grid_step:.6g}; holds to {self.precision_h} digit(s)",
            f"J(0) offset      {self.value_at_origin:.6g}",
            f"J - J(0) >= c1|x|^2 on grid: {self.lower_bound_ok}",
            f"Lipschitz est.   {self.lipschitz:.6g}",
        ]
        if self.value_at_origin != 0.0:
            lines.append("note: J(0) is nonzero; the lower bound is checked after subtracting it")
        for x, why in self.offending[:10]:
            lines.append(f"offending state  {np.array2string(np.asarray(x), precision=6)}: {why}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "c1": self.c1,
            "c2": self.c2,
            "worst_state": None if self.worst_state is None else self.worst_state.tolist(),
            "points_tested": self.points_tested,
            "points_excluded": self.points_excluded,
            "grid_step": self.grid_step,
            "precision_h": self.precision_h,
            "value_at_origin": self.value_at_origin,
            "lower_bound_ok": self.lower_bound_ok,
            "lipschitz": self.lipschitz,
            "offending": [[np.asarray(x).tolist(), why] for x, why in self.offending],
        }


def closed_loop_cost(x, spec: ControllerSpec, plant: NonlinearPlant) -> float:
    """Objective the controller attains at ``x``; infeasibility propagates."""
    return decide(x, spec, plant).objective


def _point(x, spec, plant):
    """``(J(x), J(x+), None)`` or ``(nan, nan, reason)``."""
    try:
        dec = decide(x, spec, plant)
        nxt = plant.step(x, dec.u)
        J1 = closed_loop_cost(nxt, spec, plant)
    except AdpMpcError as exc:
        return math.nan, math.nan, f"{type(exc).__name__}: {exc}"
    return dec.objective, J1, None


def audit_grid(config: AuditConfig) -> tuple[np.ndarray, float]:
    lo, hi = config.X.bounding_box
    if config.grid_step is not None:
        pts = grid_points(lo, hi, step=config.grid_step)
        step = config.grid_step
    else:
        pts = grid_points(lo, hi, per_axis=config.per_axis)
        span = hi - lo
        step = float(np.max(span[span > 0]) / (config.per_axis - 1)) if np.any(span > 0) else 0.0
    pts = pts[config.X.contains(pts)]
    if pts.shape[0] == 0 or step <= 0:
        raise ValueError("audit grid is empty or degenerate")
    return pts, step


def audit(config: AuditConfig) -> AuditReport:
    """Evaluate the decrease condition on every grid point."""
    spec, plant = config.spec, config.plant
    pts, step = audit_grid(config)
    norms2 = np.sum(pts**2, axis=1)
    keep = norms2 > config.exclusion**2
    tested = pts[keep]
    n2 = norms2[keep]
    total = tested.shape[0]

    def run(idx):
        return [_point(tested[i], spec, plant) for i in idx]

    chunks = np.array_split(np.arange(total), max(1, min(total, 64 * config.workers)))
    results: list = []
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            for part in pool.map(run, chunks):
                results.extend(part)
                if config.progress:
                    config.progress(len(results), total)
    else:
        for ch in chunks:
            results.extend(run(ch))
            if config.progress:
                config.progress(len(results), total)

    J0 = np.array([r[0] for r in results])
    J1 = np.array([r[1] for r in results])
    offending = [(tested[i], r[2]) for i, r in enumerate(results) if r[2] is not None]
    c = (J1 - J0) / n2
    bad = ~np.isfinite(c)
    for i in np.flatnonzero(bad):
        if results[i][2] is None:
            offending.append((tested[i], "non-finite decrease ratio"))

    c1 = float(np.linalg.eigvalsh(spec.model.weights.Q).min())
    try:
        origin_value = closed_loop_cost(np.zeros(spec.model.n), spec, plant)
    except AdpMpcError:
        origin_value = math.nan
    finite = ~bad
    lower_ok = bool(np.all(J0[finite] - origin_value >= c1 * n2[finite] - 1e-9 * np.maximum(1.0, J0[finite])))

    if finite.any():
        k = int(np.flatnonzero(finite)[np.argmax(c[finite])])
        c2 = -float(c[k])
        worst = tested[k].copy()
    else:
        c2, worst = math.nan, None
    if offending:
        verdict = INCONCLUSIVE
    elif c2 > 0:
        verdict = CERTIFIED
    else:
        verdict = VIOLATED

    sample = tested[np.linspace(0, total - 1, min(total, config.lipschitz_samples)).astype(int)]
    lip = lipschitz_estimate(plant, sample, spec.model.control_set.levels)
    h = int(math.floor(-math.log10(step)))
    return AuditReport(
        c1=c1, c2=c2, worst_state=worst, points_tested=total, points_excluded=int((~keep).sum()),
        grid_step=step, precision_h=h, verdict=verdict, value_at_origin=float(origin_value),
        lower_bound_ok=lower_ok, lipschitz=lip, offending=offending,
    )
