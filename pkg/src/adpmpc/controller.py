"""Online control laws built on a min-of-quadratics value function.

All controllers act in error coordinates: the state is ``e = x - x_r`` and
the control levels are ``dv = v - u_r``.  The plant passed to a step must be
expressed in the same coordinates (see ``shift_to_error_coordinates``).

Strategies:

* ``adp1``: one-step look-ahead over the quantized levels, successor valued
  by the offline set.
* ``adp2``: ``adp1`` followed by a local refinement around the chosen level
  on a finer grid, valued with the matrix that won the first stage.
* ``adp3``: ``adp1`` restricted to levels whose predicted successor stays in
  a constraint polytope, valued with a region-reduced set.
* ``nmpc``: exhaustive search over all level sequences of length ``N``.
"""

from __future__ import annotations

import enum
import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BudgetExceededError, ConfigError, InfeasibleError, ModelMismatchError, PlantBlowupError
from .plant import METHODS, NonlinearPlant
from .polytope import Polytope
from .switched_model import SwitchedAffineModel
from .synthesis import RegionRiccatiMap, RiccatiSet, augment

FEAS_TOL = 1e-9


class Strategy(str, enum.Enum):
    ADP1 = "adp1"
    ADP2 = "adp2"
    ADP3 = "adp3"
    NMPC = "nmpc"


@dataclass(frozen=True, eq=False)
class ControllerSpec:
    """Everything a controller step needs besides the state and the plant.

    Attributes:
        strategy: Which control law to run.
        model: Switched model in error coordinates; supplies levels and weights.
        riccati: Offline value set, or a region map for ``adp3``.
        W: Refinement half-width (``adp2``): ``2W + 1`` candidates per input.
        delta_u: Refinement spacing (``adp2``).
        constraint: State polytope in error coordinates (``adp3``).
        horizon: Search depth (``nmpc``).
        predictor: ``"plant"`` (nonlinear one-step map) or ``"linear"``
            (the model's ``A, B``; used for oracle comparisons).
        stage2_full_set: Re-minimize over the whole set in the refinement.
        budget: Largest number of sequences ``nmpc`` may enumerate.
    """

    strategy: Strategy
    model: SwitchedAffineModel
    riccati: RiccatiSet | RegionRiccatiMap | None = None
    W: int = 0
    delta_u: float = 0.0
    constraint: Polytope | None = None
    horizon: int | None = None
    predictor: str = "plant"
    stage2_full_set: bool = False
    budget: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.predictor not in ("plant", "linear"):
            raise ConfigError(f"unknown predictor {self.predictor!r}")
        s = self.strategy
        if s is Strategy.NMPC:
            if not self.horizon or self.horizon < 1:
                raise ConfigError("nmpc needs a horizon >= 1")
            return
        if self.riccati is None:
            raise ConfigError(f"{s.value} needs an offline value set")
        base = self.riccati.parent if isinstance(self.riccati, RegionRiccatiMap) else self.riccati
        if base.model_fingerprint and base.model_fingerprint != self.model.fingerprint():
            raise ModelMismatchError("value set was synthesized for a different model")
        if base.d != self.model.d:
            raise ModelMismatchError("value set dimension does not match the model")
        if s is Strategy.ADP2 and (self.W < 1 or self.delta_u <= 0):
            raise ConfigError("adp2 needs W >= 1 and delta_u > 0")
        if s is Strategy.ADP3 and self.constraint is None:
            raise ConfigError("adp3 needs a constraint polytope")
        if s is not Strategy.ADP3 and isinstance(self.riccati, RegionRiccatiMap):
            raise ConfigError("region maps are only used by adp3")

    def value_set(self, x) -> RiccatiSet:
        if isinstance(self.riccati, RegionRiccatiMap):
            return self.riccati.set_for(x)
        return self.riccati


@dataclass(frozen=True)
class ControlDecision:
    """Outcome of one controller step (error coordinates).

    Attributes:
        u: Chosen input deviation ``(m,)``.
        stage1_value: Objective of the level scan.
        stage2_value: Objective after refinement (``adp2`` only).
        argmin_matrix_index: Index of the valuing matrix in the set used.
        level_index: Index of the chosen quantized level.
        feasible_count: Levels that passed the constraint test.
        value_matrix: The valuing matrix itself (None for ``nmpc``).
        latency: Wall time of the step in seconds (set by :func:`decide`).
    """

    u: np.ndarray
    stage1_value: float
    stage2_value: float | None
    argmin_matrix_index: int
    level_index: int
    feasible_count: int
    value_matrix: np.ndarray | None = None
    latency: float = 0.0

    @property
    def objective(self) -> float:
        return self.stage1_value if self.stage2_value is None else self.stage2_value


def _predict(x: np.ndarray, us: np.ndarray, spec: ControllerSpec, plant: NonlinearPlant) -> np.ndarray:
    if spec.predictor == "linear":
        return x @ spec.model.A.T + us @ spec.model.B.T
    nxt, _ = plant.step_batch(np.broadcast_to(x, (us.shape[0], x.shape[0])), us)
    if not np.all(np.isfinite(nxt)):
        raise PlantBlowupError(f"non-finite prediction from x={x}")
    return nxt


def _stage_costs(x: np.ndarray, us: np.ndarray, spec: ControllerSpec) -> np.ndarray:
    w = spec.model.weights
    return float(x @ w.Q @ x) + np.einsum("ki,ij,kj->k", us, w.R, us)


def _scan(x, spec, plant, rset: RiccatiSet, constraint: Polytope | None = None):
    levels = spec.model.control_set.levels
    nxt = _predict(x, levels, spec, plant)
    stage = float(x @ spec.model.weights.Q @ x) + spec.model.level_costs()
    mask = None
    if constraint is not None:
        mask = kernels.halfspace_mask(nxt, constraint.H, constraint.h, FEAS_TOL)
    j, J, i = kernels.adp_scan(augment(nxt), stage, rset.matrices, mask)
    return j, J, i, nxt, mask


def adp1_step(x, spec: ControllerSpec, plant: NonlinearPlant) -> ControlDecision:
    """Best quantized level for one-step cost plus valued successor."""
    x = np.asarray(x, dtype=float).reshape(spec.model.n)
    rset = spec.value_set(x)
    j, J, i, _, _ = _scan(x, spec, plant, rset)
    u = spec.model.control_set.levels[j]
    return ControlDecision(u.copy(), J, None, i, j, spec.model.M, rset.matrices[i])


def refinement_candidates(v_star, spec: ControllerSpec) -> tuple[np.ndarray, int]:
    """Grid ``v* + q * delta_u`` with ``q`` in ``-W..W`` per input, clipped to the box.

    Returns:
        (candidates ``(K, m)`` in lexicographic ``q`` order, index of ``q = 0``)
    """
    cs = spec.model.control_set
    offs = np.arange(-spec.W, spec.W + 1) * spec.delta_u
    grid = np.array(list(itertools.product(offs, repeat=cs.m)))
    cand = np.minimum(np.maximum(v_star[None, :] + grid, cs.lower), cs.upper)
    center = (len(grid) - 1) // 2
    return cand, center


def adp2_step(x, spec: ControllerSpec, plant: NonlinearPlant) -> ControlDecision:
    """Level scan, then a finer search around the winning level."""
    first = adp1_step(x, spec, plant)
    x = np.asarray(x, dtype=float).reshape(spec.model.n)
    cand, center = refinement_candidates(first.u, spec)
    nxt = _predict(x, cand, spec, plant)
    rset = spec.value_set(x)
    P = rset.matrices if spec.stage2_full_set else first.value_matrix[None]
    vals, idx = kernels.quadform_min(P, augment(nxt))
    J = _stage_costs(x, cand, spec) + vals
    # the unshifted candidate is the stage-1 decision itself
    J[center] = first.stage1_value
    idx[center] = 0 if not spec.stage2_full_set else first.argmin_matrix_index
    k = int(np.argmin(J))
    mat_i = first.argmin_matrix_index if not spec.stage2_full_set else int(idx[k])
    return ControlDecision(
        cand[k].copy(), first.stage1_value, float(J[k]), mat_i, first.level_index,
        first.feasible_count, rset.matrices[mat_i],
    )


def adp3_step(x, spec: ControllerSpec, plant: NonlinearPlant) -> ControlDecision:
    """Level scan over constraint-admissible successors with a reduced set.

    Raises:
        InfeasibleError: no level keeps the successor inside the polytope;
            carries the level with the smallest violation.
    """
    x = np.asarray(x, dtype=float).reshape(spec.model.n)
    rset = spec.value_set(x)
    j, J, i, nxt, mask = _scan(x, spec, plant, rset, spec.constraint)
    if j < 0:
        viol = spec.constraint.violation(nxt)
        best = int(np.argmin(viol))
        raise InfeasibleError(
            f"no admissible level at x={x}", best, spec.model.control_set.levels[best].copy(), float(viol[best])
        )
    u = spec.model.control_set.levels[j]
    return ControlDecision(u.copy(), J, None, i, j, int(mask.sum()), rset.matrices[i])


def _nmpc_generic(x, spec, plant, N):
    model = spec.model
    levels = model.control_set.levels
    rcost = model.level_costs()
    Q, QN = model.weights.Q, model.weights.QN
    M = levels.shape[0]
    states = x[None, :]
    cost = np.zeros(1)
    for _ in range(N):
        s = np.einsum("kd,de,ke->k", states, Q, states)
        cost = (cost[:, None] + (s[:, None] + rcost[None, :])).reshape(-1)
        k = states.shape[0]
        states = _predict_rows(np.repeat(states, M, axis=0), np.tile(levels, (k, 1)), plant)
    cost = cost + np.einsum("kd,de,ke->k", states, QN, states)
    best = int(np.argmin(cost))
    return best // (M ** (N - 1)), float(cost[best])


def _predict_rows(xs, us, plant):
    nxt, _ = plant.step_batch(xs, us)
    if not np.all(np.isfinite(nxt)):
        raise PlantBlowupError("non-finite prediction in exhaustive search")
    return nxt


def nmpc_exhaustive_step(x, spec: ControllerSpec, plant: NonlinearPlant) -> ControlDecision:
    """First move of the exact minimizer over all ``M^N`` level sequences.

    Raises:
        BudgetExceededError: ``M^N`` exceeds ``spec.budget``.
    """
    model = spec.model
    x = np.asarray(x, dtype=float).reshape(model.n)
    N = spec.horizon
    M = model.M
    if M**N > spec.budget:
        raise BudgetExceededError(f"{M}^{N} sequences exceed budget {spec.budget}")
    rcost = model.level_costs()
    W = model.weights
    if spec.predictor == "linear":
        j, J = kernels.nmpc_linear(x, model.A, model.offsets(), W.Q, rcost, W.QN, N)
    elif plant._tank_vec is not None:
        j, J = kernels.nmpc_tank(
            x + plant.x_offset, model.control_set.levels[:, 0] + plant.u_offset[0], rcost,
            plant.x_offset, W.Q, W.QN, N, plant._tank_vec, plant.dt, plant.substeps,
            METHODS[plant.method], plant.x_lower + plant.x_offset, plant.x_upper + plant.x_offset,
        )
    else:
        j, J = _nmpc_generic(x, spec, plant, N)
    if not np.isfinite(J):
        raise PlantBlowupError(f"non-finite objective in exhaustive search from x={x}")
    return ControlDecision(model.control_set.levels[j].copy(), J, None, -1, j, M, None)


_STEPS = {
    Strategy.ADP1: adp1_step,
    Strategy.ADP2: adp2_step,
    Strategy.ADP3: adp3_step,
    Strategy.NMPC: nmpc_exhaustive_step,
}


def decide(x, spec: ControllerSpec, plant: NonlinearPlant) -> ControlDecision:
    """Run the configured strategy and record its wall time."""
    t0 = time.perf_counter()
    dec = _STEPS[spec.strategy](x, spec, plant)
    lat = time.perf_counter() - t0
    return ControlDecision(
        dec.u, dec.stage1_value, dec.stage2_value, dec.argmin_matrix_index, dec.level_index,
        dec.feasible_count, dec.value_matrix, lat,
    )
