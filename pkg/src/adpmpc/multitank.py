"""Three-tank cascade: top rectangular tank, trapezoidal middle, cylindrical bottom.

Geometry defaults are the rig's published dimensions.  The valve
resistances ``C``, flow exponents ``alpha`` and the pump's flow capacity
``q_max`` are NOT published; the defaults below are placeholders chosen to
give a sensible operating range and must be treated as configuration.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SingularLinearizationError, UnreachableSetpointError
from .plant import NonlinearPlant
from .polytope import Polytope

logger = logging.getLogger(__name__)

BETA3_FLOOR = 1e-6


@dataclass(frozen=True)
class TankParams:
    """Physical parameters of the cascade (SI units, volts for the pump)."""

    a: float = 0.25
    b: float = 0.345
    c: float = 0.10
    w_t: float = 0.035
    R: float = 0.365
    h_max: tuple[float, float, float] = (0.35, 0.35, 0.35)
    # placeholders, not rig values
    C: tuple[float, float, float] = (1e-4, 1e-4, 1e-4)
    alpha: tuple[float, float, float] = (0.29, 0.2256, 0.2487)
    u_min: float = 0.54
    u_max: float = 1.0
    q_max: float = 9e-5

    def __post_init__(self):
        object.__setattr__(self, "h_max", tuple(float(v) for v in self.h_max))
        object.__setattr__(self, "C", tuple(float(v) for v in self.C))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        geom = [self.a, self.b, self.c, self.w_t, self.R, *self.h_max, *self.C, self.q_max]
        if min(geom) <= 0:
            raise ValueError("tank geometry, valve and pump parameters must be positive")
        if not all(0 < al <= 1 for al in self.alpha):
            raise ValueError("flow exponents must lie in (0, 1]")
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")

    def vector(self) -> np.ndarray:
        return np.array(
            [self.a, self.b, self.c, self.w_t, self.R, *self.h_max, *self.C, *self.alpha,
             self.u_min, self.u_max, self.q_max]
        )

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class SteadyState:
    H: np.ndarray
    q: float
    u: float
    adjusted: bool = False
    residual: float = field(default=0.0)


def cross_sections(H, params: TankParams) -> np.ndarray:
    """Wetted cross-sections ``(beta1, beta2, beta3)`` at levels ``H``."""
    H = np.asarray(H, dtype=float)
    p = params
    beta1 = np.full(H.shape[:-1], p.a * p.w_t)
    beta2 = p.c * p.w_t + (H[..., 1] / p.h_max[1]) * p.b * p.w_t
    h3 = np.clip(H[..., 2], BETA3_FLOOR, 2 * p.R - BETA3_FLOOR)
    beta3 = p.w_t * np.sqrt(p.R**2 - (p.R - h3) ** 2)
    return np.stack([beta1, beta2, beta3], axis=-1)


def outflows(H, params: TankParams) -> np.ndarray:
    H = np.maximum(np.asarray(H, dtype=float), 0.0)
    return np.asarray(params.C) * np.power(H, np.asarray(params.alpha))


def tank_rhs(H, q, params: TankParams) -> np.ndarray:
    """Level rates for inflow ``q`` (m^3/s); ``H`` may be ``(3,)`` or ``(k, 3)``."""
    H = np.asarray(H, dtype=float)
    o = outflows(H, params)
    beta = cross_sections(H, params)
    inflow = np.stack([np.broadcast_to(q, H.shape[:-1]).astype(float), o[..., 0], o[..., 1]], axis=-1)
    return (inflow - o) / beta


def pump_map(u, params: TankParams):
    """Affine voltage-to-flow law; out-of-box voltages are clamped with a warning."""
    u_arr = np.asarray(u, dtype=float)
    clipped = np.clip(u_arr, params.u_min, params.u_max)
    if np.any(clipped != u_arr):
        logger.warning("pump voltage %s outside [%g, %g]; clamped", u, params.u_min, params.u_max)
    q = params.q_max * (clipped - params.u_min) / (params.u_max - params.u_min)
    return float(q) if np.ndim(q) == 0 else q


def inverse_pump_map(q: float, params: TankParams) -> float:
    if q >= params.q_max:
        return params.u_max
    if q <= 0.0:
        return params.u_min
    return params.u_min + (params.u_max - params.u_min) * q / params.q_max


def solve_steady_input(x_r, params: TankParams, rtol: float = 1e-9) -> SteadyState:
    """Steady levels and pump voltage holding the top tank at ``x_r[0]``.

    If the requested lower levels are not consistent with the cascade flow
    balance, they are recomputed from the top-tank flow and ``adjusted`` is set.

    Raises:
        UnreachableSetpointError: if the needed inflow exceeds ``q_max``.
    """
    x_r = np.asarray(x_r, dtype=float).reshape(3)
    C = np.asarray(params.C)
    al = np.asarray(params.alpha)
    q_r = C[0] * x_r[0] ** al[0]
    if q_r > params.q_max * (1 + 1e-12):
        raise UnreachableSetpointError(f"inflow {q_r:.4g} m^3/s exceeds pump capacity {params.q_max:.4g}")
    consistent = np.array([x_r[0], (q_r / C[1]) ** (1 / al[1]), (q_r / C[2]) ** (1 / al[2])])
    adjusted = not np.allclose(consistent, x_r, rtol=rtol, atol=0.0)
    H = consistent if adjusted else x_r.copy()
    if adjusted:
        logger.info("setpoint %s not cascade-consistent; using %s", x_r, H)
    residual = float(np.max(np.abs(outflows(H, params) - q_r)))
    return SteadyState(H=H, q=q_r, u=inverse_pump_map(q_r, params), adjusted=adjusted, residual=residual)


def steady_state_for_input(u_r: float, params: TankParams) -> SteadyState:
    """Steady levels reached under a constant pump voltage."""
    q = pump_map(u_r, params)
    if q <= 0:
        raise UnreachableSetpointError("zero inflow has no interior steady state")
    C = np.asarray(params.C)
    al = np.asarray(params.alpha)
    H = (q / C) ** (1 / al)
    return SteadyState(H=H, q=q, u=float(u_r), residual=float(np.max(np.abs(outflows(H, params) - q))))


def analytic_jacobian(H0, params: TankParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact continuous-time Jacobians ``(d f/d H, d f/d q)`` at levels ``H0``.

    Includes the level dependence of the middle and bottom cross-sections;
    those terms vanish at a steady state.  Neither Jacobian depends on the
    inflow because the top cross-section is constant.
    """
    H0 = np.asarray(H0, dtype=float).reshape(3)
    if np.any(H0 <= 0) or H0[2] >= 2 * params.R:
        raise SingularLinearizationError(f"levels {H0} on a cross-section singularity")
    C = np.asarray(params.C)
    al = np.asarray(params.alpha)
    o = C * H0**al
    do = C * al * H0 ** (al - 1)
    b1, b2, b3 = cross_sections(H0, params)
    db2 = params.b * params.w_t / params.h_max[1]
    root = np.sqrt(params.R**2 - (params.R - H0[2]) ** 2)
    db3 = params.w_t * (params.R - H0[2]) / root
    A = np.zeros((3, 3))
    A[0, 0] = -do[0] / b1
    A[1, 0] = do[0] / b2
    A[1, 1] = -do[1] / b2 - (o[0] - o[1]) * db2 / b2**2
    A[2, 1] = do[1] / b3
    A[2, 2] = -do[2] / b3 - (o[1] - o[2]) * db3 / b3**2
    B = np.array([1.0 / b1, 0.0, 0.0])
    return A, B


def steady_linearization(H0, params: TankParams) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form linearization valid at a cascade steady state.

    Cross-section derivatives drop out because inflow equals outflow in
    every tank; the bottom cross-section is evaluated with the same circular
    profile used by :func:`tank_rhs`.
    """
    H0 = np.asarray(H0, dtype=float).reshape(3)
    p = params
    C1, C2, C3 = p.C
    a1, a2, a3 = p.alpha
    H10, H20, H30 = H0
    mid = p.w_t * (p.c + p.b * H20 / p.h_max[1])
    bot = p.w_t * np.sqrt(p.R**2 - (p.R - H30) ** 2)
    A = np.array(
        [
            [-C1 * a1 / (p.a * p.w_t * H10 ** (1 - a1)), 0.0, 0.0],
            [C1 * a1 / (mid * H10 ** (1 - a1)), -C2 * a2 / (mid * H20 ** (1 - a2)), 0.0],
            [0.0, C2 * a2 / (bot * H20 ** (1 - a2)), -C3 * a3 / (bot * H30 ** (1 - a3))],
        ]
    )
    B = np.array([1.0 / (p.a * p.w_t), 0.0, 0.0])
    return A, B


def tank_plant(
    params: TankParams | None = None,
    dt: float = 0.01,
    method: str = "rk4",
    substeps: int = 1,
    X: Polytope | None = None,
) -> NonlinearPlant:
    """The cascade as a sampled plant driven by pump voltage."""
    params = params or TankParams()

    def rhs(H, u):
        return tank_rhs(H, pump_map(np.clip(u[:, 0], params.u_min, params.u_max), params), params)

    return NonlinearPlant(
        rhs=rhs,
        n=3,
        m=1,
        u_lower=[params.u_min],
        u_upper=[params.u_max],
        dt=dt,
        method=method,
        substeps=substeps,
        X=X,
        x_lower=np.zeros(3),
        x_upper=np.asarray(params.h_max),
        tank=params,
        name="multitank",
    )
