"""Continuous-time plants with fixed-step integration.

A :class:`NonlinearPlant` wraps an ODE right-hand side together with the
sampling period, actuator box and optional physical clamp.  The same object
drives the simulator and every controller predictor, so both always see the
same discrete map ``x_{k+1} = f(x_k, u_k)``.

Plants can be re-expressed around a setpoint (``shifted``); the shifted plant
integrates in the original coordinates and subtracts the offset afterwards,
which keeps trajectories of the two plants bit-for-bit related.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels
from .errors import DimensionError, PlantBlowupError
from .polytope import Polytope

logger = logging.getLogger(__name__)

Rhs = Callable[[np.ndarray, np.ndarray], np.ndarray]

METHODS = {"rk4": kernels.METHOD_RK4, "euler": kernels.METHOD_EULER}


def integrate(rhs: Rhs, x: np.ndarray, u: np.ndarray, dt: float, substeps: int, method: str) -> np.ndarray:
    """Fixed-step RK4 or forward Euler for a batched right-hand side."""
    h = dt / substeps
    x = np.array(x, dtype=float, copy=True)
    for _ in range(substeps):
        if method == "rk4":
            k1 = rhs(x, u)
            k2 = rhs(x + 0.5 * h * k1, u)
            k3 = rhs(x + 0.5 * h * k2, u)
            k4 = rhs(x + h * k3, u)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            x = x + h * rhs(x, u)
    return x


@dataclass(frozen=True, eq=False)
class NonlinearPlant:
    """Sampled nonlinear plant ``x_{k+1} = f(x_k, u_k)``.

    Attributes:
        rhs: Batched vector field in the plant's *base* coordinates,
            ``(k, n), (k, m) -> (k, n)``.
        n: State dimension.
        m: Input dimension.
        u_lower: Actuator lower bounds in this plant's coordinates.
        u_upper: Actuator upper bounds in this plant's coordinates.
        dt: Sampling period in seconds.
        method: ``"rk4"`` or ``"euler"``.
        substeps: Integrator sub-intervals per sampling period.
        X: Optional state constraint polytope (this plant's coordinates).
        x_lower: Optional physical clamp, lower side (this plant's coordinates).
        x_upper: Optional physical clamp, upper side.
        x_offset: Base-coordinate state of this plant's origin.
        u_offset: Base-coordinate input of this plant's zero input.
        tank: Multi-tank parameters; enables the compiled tank kernel.
    """

    rhs: Rhs
    n: int
    m: int
    u_lower: np.ndarray
    u_upper: np.ndarray
    dt: float
    method: str = "rk4"
    substeps: int = 1
    X: Polytope | None = None
    x_lower: np.ndarray | None = None
    x_upper: np.ndarray | None = None
    x_offset: np.ndarray | None = None
    u_offset: np.ndarray | None = None
    tank: object | None = None
    name: str = "plant"
    _tank_vec: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("sampling period must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator {self.method!r}")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("u_lower", np.asarray(self.u_lower, dtype=float).reshape(self.m))
        set_("u_upper", np.asarray(self.u_upper, dtype=float).reshape(self.m))
        if np.any(self.u_lower > self.u_upper):
            raise ValueError("u_lower exceeds u_upper")
        set_("x_offset", np.zeros(self.n) if self.x_offset is None else np.asarray(self.x_offset, float))
        set_("u_offset", np.zeros(self.m) if self.u_offset is None else np.asarray(self.u_offset, float))
        lo = np.full(self.n, -np.inf) if self.x_lower is None else np.asarray(self.x_lower, float)
        hi = np.full(self.n, np.inf) if self.x_upper is None else np.asarray(self.x_upper, float)
        set_("x_lower", lo)
        set_("x_upper", hi)
        if self.tank is not None:
            set_("_tank_vec", self.tank.vector())

    # -- coordinates -------------------------------------------------------

    def shifted(self, x_ref, u_ref) -> "NonlinearPlant":
        """Same plant re-expressed in deviations from ``(x_ref, u_ref)``."""
        x_ref = np.asarray(x_ref, dtype=float).reshape(self.n)
        u_ref = np.asarray(u_ref, dtype=float).reshape(self.m)
        return replace(
            self,
            u_lower=self.u_lower - u_ref,
            u_upper=self.u_upper - u_ref,
            X=None if self.X is None else self.X.shift(x_ref),
            x_lower=self.x_lower - x_ref,
            x_upper=self.x_upper - x_ref,
            x_offset=self.x_offset + x_ref,
            u_offset=self.u_offset + u_ref,
            name=f"{self.name}[shifted]",
        )

    # -- dynamics ----------------------------------------------------------

    def derivative(self, x, u) -> np.ndarray:
        """Continuous vector field at one point, in this plant's coordinates."""
        x = np.asarray(x, dtype=float).reshape(1, self.n) + self.x_offset
        u = np.asarray(u, dtype=float).reshape(1, self.m) + self.u_offset
        return self.rhs(x, u)[0]

    def step_batch(self, xs, us) -> tuple[np.ndarray, np.ndarray]:
        """Advance each row one sampling period.

        Returns:
            (successors ``(k, n)``, clamp flags ``(k,)`` as bool)
        """
        xs = np.asarray(xs, dtype=float).reshape(-1, self.n)
        us = np.asarray(us, dtype=float).reshape(-1, self.m)
        if xs.shape[0] != us.shape[0]:
            raise DimensionError("state and input batches differ in length")
        xa = xs + self.x_offset
        ua = us + self.u_offset
        lo = self.x_lower + self.x_offset
        hi = self.x_upper + self.x_offset
        if self._tank_vec is not None:
            out, flags = kernels.tank_step_batch(
                xa, ua[:, 0], self._tank_vec, self.dt, self.substeps, METHODS[self.method], lo, hi
            )
            return out - self.x_offset, flags.astype(bool)
        out = integrate(self.rhs, xa, ua, self.dt, self.substeps, self.method)
        clipped = np.minimum(np.maximum(out, lo), hi)
        flags = np.any(clipped != out, axis=1)
        return clipped - self.x_offset, flags

    def clip_input(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(self.m)
        clipped = np.minimum(np.maximum(u, self.u_lower), self.u_upper)
        if np.any(np.abs(clipped - u) > 1e-12):
            logger.warning("input %s outside actuator box; clamped to %s", u, clipped)
        return clipped

    def step(self, x, u, *, return_clamp: bool = False):
        """One sampling period from ``x`` under held input ``u``.

        Inputs outside the actuator box are clamped with a logged warning.

        Raises:
            PlantBlowupError: if the successor is not finite.
        """
        u = self.clip_input(u)
        nxt, flags = self.step_batch(np.asarray(x, dtype=float).reshape(1, self.n), u.reshape(1, self.m))
        if not np.all(np.isfinite(nxt)):
            raise PlantBlowupError(f"non-finite successor from x={x}, u={u}")
        return (nxt[0], bool(flags[0])) if return_clamp else nxt[0]

    def simulate(self, x0, inputs) -> np.ndarray:
        """Open-loop trajectory ``(len(inputs) + 1, n)`` for a held-input sequence."""
        traj = [np.asarray(x0, dtype=float).reshape(self.n)]
        for u in np.asarray(inputs, dtype=float).reshape(-1, self.m):
            traj.append(self.step(traj[-1], u))
        return np.array(traj)


def step(plant: NonlinearPlant, x, u) -> np.ndarray:
    """Functional alias for :meth:`NonlinearPlant.step`."""
    return plant.step(x, u)


def linear_plant(Ac, Bc, dt: float, u_lower, u_upper, **kwargs) -> NonlinearPlant:
    """Continuous LTI plant ``x' = Ac x + Bc u`` wrapped as a sampled plant."""
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    Bc = np.asarray(Bc, dtype=float).reshape(Ac.shape[0], -1)

    def rhs(x, u):
        return x @ Ac.T + u @ Bc.T

    return NonlinearPlant(rhs, Ac.shape[0], Bc.shape[1], u_lower, u_upper, dt, **kwargs)


def lipschitz_estimate(plant: NonlinearPlant, points: np.ndarray, inputs: np.ndarray, h: float = 1e-6) -> float:
    """Largest finite-difference quotient of the discrete map over a sample.

    For each sample point and input, every coordinate direction is perturbed
    by ``h`` and the quotient ``|f(x + h e_i, u) - f(x, u)| / h`` recorded.
    """
    points = np.asarray(points, dtype=float).reshape(-1, plant.n)
    best = 0.0
    for u in np.asarray(inputs, dtype=float).reshape(-1, plant.m):
        us = np.repeat(u[None, :], points.shape[0], axis=0)
        base, _ = plant.step_batch(points, us)
        for i in range(plant.n):
            bumped = points.copy()
            bumped[:, i] += h
            nxt, _ = plant.step_batch(bumped, us)
            quot = np.linalg.norm(nxt - base, axis=1) / h
            best = max(best, float(np.max(quot)))
    return best
