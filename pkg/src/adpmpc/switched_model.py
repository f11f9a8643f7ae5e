"""Problem data: linearization, quantized inputs, and the augmented switched model.

With the augmented state ``xbar = [x; 1]`` each quantized input level
``v_s`` turns the linear model ``x+ = A x + B u`` into one linear map::

    Abar_s = [[A, B v_s],      Qbar_s = [[Q, 0],
              [0, 1    ]]                [0, v_s' R v_s]]

and the terminal weight becomes ``QbarN = blockdiag(Q_N, 0)``.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, expm

from .errors import ConfigError, DimensionError, SingularLinearizationError
from .plant import NonlinearPlant

logger = logging.getLogger(__name__)

SYM_TOL = 1e-12
EIG_TOL = 1e-12


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


@dataclass(frozen=True, eq=False)
class QuantizedControlSet:
    """Ordered finite input set ``U_v`` inside the actuator box.

    Attributes:
        levels: ``(M, m)`` array, rows sorted lexicographically.
        lower: Box lower bound ``(m,)``.
        upper: Box upper bound ``(m,)``.
    """

    levels: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    allow_duplicates: bool = False

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim == 1:
            lv = lv[:, None]
        lo = np.asarray(self.lower, dtype=float).reshape(lv.shape[1])
        hi = np.asarray(self.upper, dtype=float).reshape(lv.shape[1])
        if lv.shape[0] < 2:
            raise ConfigError("a quantized control set needs at least two levels")
        if np.any(lv < lo - 1e-12) or np.any(lv > hi + 1e-12):
            raise ConfigError("quantized levels must lie inside the actuator box")
        order = np.lexsort(lv.T[::-1])
        lv = lv[order]
        if not self.allow_duplicates and np.any(np.all(np.diff(lv, axis=0) == 0, axis=1)):
            raise ConfigError("quantized levels must be pairwise distinct")
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, lower, upper, M: int) -> "QuantizedControlSet":
        """``M`` evenly spaced levels per input, endpoints included."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        axes = [np.linspace(lo, hi, M) for lo, hi in zip(lower, upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        levels = np.stack([g.reshape(-1) for g in mesh], axis=1)
        return cls(levels, lower, upper)

    @property
    def M(self) -> int:
        return self.levels.shape[0]

    @property
    def m(self) -> int:
        return self.levels.shape[1]

    def shifted(self, u_ref) -> "QuantizedControlSet":
        u_ref = np.asarray(u_ref, dtype=float).reshape(self.m)
        return QuantizedControlSet(
            self.levels - u_ref, self.lower - u_ref, self.upper - u_ref, self.allow_duplicates
        )


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Stage weights ``Q``, ``R`` and terminal weight ``Q_N``."""

    Q: np.ndarray
    R: np.ndarray
    QN: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        QN = np.atleast_2d(np.asarray(self.QN, dtype=float))
        for name, W in (("Q", Q), ("R", R), ("Q_N", QN)):
            if W.shape[0] != W.shape[1]:
                raise DimensionError(f"{name} must be square")
            if np.max(np.abs(W - W.T), initial=0.0) > SYM_TOL:
                raise ConfigError(f"{name} is not symmetric")
        if Q.shape != QN.shape:
            raise DimensionError("Q and Q_N differ in size")
        if np.linalg.eigvalsh(Q).min() < -EIG_TOL or np.linalg.eigvalsh(QN).min() < -EIG_TOL:
            raise ConfigError("Q and Q_N must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ConfigError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "QN", QN)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def stage(self, x, u) -> float:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return float(x @ self.Q @ x + u @ self.R @ u)


@dataclass(frozen=True, eq=False)
class SwitchedAffineModel:
    """Switched affine model in augmented form, one subsystem per input level."""

    A: np.ndarray
    B: np.ndarray
    abar: np.ndarray
    qbar: np.ndarray
    qbarN: np.ndarray
    control_set: QuantizedControlSet
    weights: CostWeights
    operating_point: tuple[np.ndarray, np.ndarray] | None = None
    _fingerprint: str = field(default="", repr=False)
    _level_costs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = self.control_set.levels
        object.__setattr__(self, "_level_costs", np.einsum("ki,ij,kj->k", v, self.weights.R, v))
        h = hashlib.sha256()
        for arr in (self.abar, self.qbar, self.qbarN):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        object.__setattr__(self, "_fingerprint", h.hexdigest()[:32])

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def M(self) -> int:
        return self.abar.shape[0]

    @property
    def d(self) -> int:
        return self.n + 1

    def fingerprint(self) -> str:
        return self._fingerprint

    def offsets(self) -> np.ndarray:
        """``B v_s`` for every level, shape ``(M, n)``."""
        return self.control_set.levels @ self.B.T

    def level_costs(self) -> np.ndarray:
        """``v_s' R v_s`` for every level."""
        return self._level_costs


@dataclass(frozen=True, eq=False)
class Setpoint:
    """Target state and the steady input that holds it."""

    x_r: np.ndarray
    u_r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_r", np.asarray(self.x_r, dtype=float).reshape(-1))
        object.__setattr__(self, "u_r", np.asarray(self.u_r, dtype=float).reshape(-1))

    def residual(self, plant: NonlinearPlant) -> float:
        """``|f(x_r, u_r) - x_r|`` for the sampled plant in base coordinates."""
        nxt, _ = plant.step_batch(self.x_r[None, :], self.u_r[None, :])
        return float(np.linalg.norm(nxt[0] - self.x_r))


def continuous_jacobians(plant: NonlinearPlant, x_o, u_o, rel_step: float = 1e-6):
    """Central finite-difference Jacobians of the vector field."""
    x_o = np.asarray(x_o, dtype=float).reshape(plant.n)
    u_o = np.asarray(u_o, dtype=float).reshape(plant.m)

    def column(fun, z, i):
        h = rel_step * max(abs(z[i]), 1.0) if z[i] == 0 else rel_step * abs(z[i])
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        return (fun(zp) - fun(zm)) / (zp[i] - zm[i])

    Ac = np.column_stack([column(lambda z: plant.derivative(z, u_o), x_o, i) for i in range(plant.n)])
    Bc = np.column_stack([column(lambda w: plant.derivative(x_o, w), u_o, j) for j in range(plant.m)])
    return Ac, Bc


def discretize(Ac, Bc, dt: float, method: str = "zoh") -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold (matrix exponential) or forward-Euler discretization."""
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    Bc = np.asarray(Bc, dtype=float).reshape(Ac.shape[0], -1)
    n, m = Bc.shape
    if method == "euler":
        return np.eye(n) + dt * Ac, dt * Bc
    if method != "zoh":
        raise ValueError(f"unknown discretization {method!r}")
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = Ac
    blk[:n, n:] = Bc
    E = expm(blk * dt)
    return E[:n, :n], E[:n, n:]


def linearize(plant: NonlinearPlant, x_o, u_o, dt: float | None = None, method: str = "zoh"):
    """Discrete ``(A, B)`` of the plant around ``(x_o, u_o)``.

    Raises:
        SingularLinearizationError: on a non-finite Jacobian or an operating
            point on the boundary of the physical state range.
    """
    x_o = np.asarray(x_o, dtype=float).reshape(plant.n)
    u_o = np.asarray(u_o, dtype=float).reshape(plant.m)
    dt = plant.dt if dt is None else dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    if np.any(x_o <= plant.x_lower) or np.any(x_o >= plant.x_upper):
        raise SingularLinearizationError(f"operating point {x_o} is not interior")
    with np.errstate(all="ignore"):
        Ac, Bc = continuous_jacobians(plant, x_o, u_o)
    if not (np.all(np.isfinite(Ac)) and np.all(np.isfinite(Bc))):
        raise SingularLinearizationError(f"non-finite Jacobian at {x_o}")
    return discretize(Ac, Bc, dt, method)


def build_switched_model(A, B, control_set: QuantizedControlSet, weights: CostWeights,
                         operating_point=None) -> SwitchedAffineModel:
    """Assemble ``Abar_s``, ``Qbar_s`` and ``QbarN`` for every input level."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    if A.shape != (n, n):
        raise DimensionError("A must be square")
    if control_set.m != m:
        raise DimensionError(f"control levels have {control_set.m} inputs, B has {m}")
    if weights.n != n or weights.R.shape[0] != m:
        raise DimensionError("weight dimensions do not match the model")
    v = control_set.levels
    M = v.shape[0]
    abar = np.zeros((M, n + 1, n + 1))
    abar[:, :n, :n] = A
    abar[:, :n, n] = v @ B.T
    abar[:, n, n] = 1.0
    qbar = np.zeros((M, n + 1, n + 1))
    qbar[:, :n, :n] = weights.Q
    qbar[:, n, n] = np.einsum("ki,ij,kj->k", v, weights.R, v)
    qbar = symmetrize(qbar)
    qbarN = symmetrize(block_diag(weights.QN, np.zeros((1, 1))))
    return SwitchedAffineModel(A, B, abar, qbar, qbarN, control_set, weights, operating_point)


def shift_to_error_coordinates(plant: NonlinearPlant, sp: Setpoint, tol: float = 1e-9) -> NonlinearPlant:
    """Plant in ``e = x - x_r``, ``du = u - u_r`` so the origin is an equilibrium."""
    res = sp.residual(plant)
    if res > tol:
        logger.warning("setpoint is not a fixed point of the sampled plant (residual %.3g)", res)
    return plant.shifted(sp.x_r, sp.u_r)
