"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_kernels.pyx``.
The compiled module is preferred at import time (see ``kernels.py``); this
one is the fallback and the reference the compiled code is tested against.

Tank parameter vector layout (``TANK_PARAM_LAYOUT``)::

    a, b, c, w_t, R, h1max, h2max, h3max, C1, C2, C3, al1, al2, al3,
    u_min, u_max, q_max
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

TANK_PARAM_LAYOUT = (
    "a", "b", "c", "w_t", "R", "h1max", "h2max", "h3max",
    "C1", "C2", "C3", "al1", "al2", "al3", "u_min", "u_max", "q_max",
)
BETA3_FLOOR = 1e-6

METHOD_RK4 = 0
METHOD_EULER = 1


def tank_rhs_batch(H: np.ndarray, u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """dH/dt for a batch of levels ``(k, 3)`` under pump voltages ``(k,)``."""
    a, b, c, w_t, R, h1m, h2m, h3m, C1, C2, C3, al1, al2, al3, u_min, u_max, q_max = p
    uc = np.clip(u, u_min, u_max)
    q = q_max * (uc - u_min) / (u_max - u_min)
    H1 = H[:, 0]
    H2 = H[:, 1]
    H3 = H[:, 2]
    o1 = C1 * np.power(np.maximum(H1, 0.0), al1)
    o2 = C2 * np.power(np.maximum(H2, 0.0), al2)
    o3 = C3 * np.power(np.maximum(H3, 0.0), al3)
    beta1 = a * w_t
    beta2 = c * w_t + (H2 / h2m) * b * w_t
    h3 = np.minimum(np.maximum(H3, BETA3_FLOOR), 2.0 * R - BETA3_FLOOR)
    beta3 = w_t * np.sqrt(R * R - (R - h3) * (R - h3))
    out = np.empty_like(H)
    out[:, 0] = (q - o1) / beta1
    out[:, 1] = (o1 - o2) / beta2
    out[:, 2] = (o2 - o3) / beta3
    return out


def tank_step_batch(H, u, p, dt, substeps, method, lo, hi):
    """Integrate each row over ``dt`` and clamp into ``[lo, hi]``.

    Returns:
        (next levels ``(k, 3)``, clamp flags ``(k,)`` as uint8)
    """
    x = np.array(H, dtype=float, copy=True)
    u = np.asarray(u, dtype=float)
    h = dt / substeps
    for _ in range(substeps):
        if method == METHOD_RK4:
            k1 = tank_rhs_batch(x, u, p)
            k2 = tank_rhs_batch(x + 0.5 * h * k1, u, p)
            k3 = tank_rhs_batch(x + 0.5 * h * k2, u, p)
            k4 = tank_rhs_batch(x + h * k3, u, p)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            x = x + h * tank_rhs_batch(x, u, p)
    clipped = np.minimum(np.maximum(x, lo), hi)
    flags = np.any(clipped != x, axis=1).astype(np.uint8)
    return clipped, flags


def quadform_min(P: np.ndarray, X: np.ndarray):
    """Row-wise ``min_i x^T P_i x`` and the first attaining index."""
    vals = np.einsum("kd,ide,ke->ki", X, P, X)
    idx = np.argmin(vals, axis=1)
    return vals[np.arange(X.shape[0]), idx], idx.astype(np.int64)


def adp_scan(Xbar: np.ndarray, stage: np.ndarray, P: np.ndarray, mask: np.ndarray | None):
    """One-step look-ahead over candidate successors.

    Args:
        Xbar: Augmented predicted successors, one row per candidate ``(M, d)``.
        stage: Stage cost of each candidate ``(M,)``.
        P: Stack of value matrices ``(mu, d, d)``.
        mask: Optional feasibility flags ``(M,)``; zero rows are skipped.

    Returns:
        ``(j, J, i)``: best candidate, its objective, its argmin matrix.
        ``j == -1`` when no candidate is feasible.
    """
    vmin, vidx = quadform_min(P, Xbar)
    J = stage + vmin
    if mask is not None:
        feasible = np.asarray(mask, dtype=bool)
        if not feasible.any():
            return -1, np.inf, -1
        J = np.where(feasible, J, np.inf)
    j = int(np.argmin(J))
    return j, float(J[j]), int(vidx[j])


def nmpc_tank(x0, uabs, rcost, xr, Q, QN, N, p, dt, substeps, method, lo, hi):
    """Exhaustive quantized NMPC on the tank model, breadth-first.

    The sequences are expanded in lexicographic order so ``argmin`` picks
    the same winner as the depth-first compiled search on ties.

    Returns:
        (first-move index, optimal objective)
    """
    M = uabs.shape[0]
    states = np.asarray(x0, dtype=float).reshape(1, -1)
    cost = np.zeros(1)
    for _ in range(N):
        e = states - xr
        s = np.einsum("kd,de,ke->k", e, Q, e)
        cost = (cost[:, None] + (s[:, None] + rcost[None, :])).reshape(-1)
        k = states.shape[0]
        rep = np.repeat(states, M, axis=0)
        us = np.tile(uabs, k)
        states, _ = tank_step_batch(rep, us, p, dt, substeps, method, lo, hi)
    e = states - xr
    cost = cost + np.einsum("kd,de,ke->k", e, QN, e)
    best = int(np.argmin(cost))
    return best // (M ** (N - 1)), float(cost[best])


def nmpc_linear(x0, A, Bv, Q, rcost, QN, N):
    """Exhaustive quantized MPC on ``x+ = A x + B v`` (error coordinates)."""
    M = Bv.shape[0]
    states = np.asarray(x0, dtype=float).reshape(1, -1)
    cost = np.zeros(1)
    for _ in range(N):
        s = np.einsum("kd,de,ke->k", states, Q, states)
        cost = (cost[:, None] + (s[:, None] + rcost[None, :])).reshape(-1)
        nxt = states @ A.T
        states = (nxt[:, None, :] + Bv[None, :, :]).reshape(-1, A.shape[0])
    cost = cost + np.einsum("kd,de,ke->k", states, QN, states)
    best = int(np.argmin(cost))
    return best // (M ** (N - 1)), float(cost[best])


def halfspace_mask(X: np.ndarray, H: np.ndarray, h: np.ndarray, tol: float) -> np.ndarray:
    """uint8 flags: row ``x`` of ``X`` satisfies ``H x <= h + tol``."""
    return np.all(X @ H.T <= h + tol, axis=1).astype(np.uint8)
