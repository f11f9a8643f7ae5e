"""Offline construction of the min-of-quadratics value function.

The tail cost of an ``N``-step quantized problem, seen from the second
stage, is the minimum over switching sequences of one quadratic form each.
Those forms are built by backward Riccati steps over the switching tree and
thinned with an epsilon-domination test so the online scan stays small.

Ordering convention: matrices are kept in lexicographic order of their
generating sequence (first applied level first).  Pruning walks that order
and compares each candidate with the matrices already kept, so every
removal is certified by one kept dominator.
"""

from __future__ import annotations

import bisect
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import EmptyRegionError, SynthesisOverflowError
from .polytope import Polytope, grid_points
from .switched_model import SwitchedAffineModel, symmetrize

logger = logging.getLogger(__name__)

PSD_TOL = 1e-9
DEFAULT_BUDGET = 1_000_000
DEFAULT_SAMPLES = 21


@dataclass(frozen=True, eq=False)
class RiccatiSet:
    """Ordered stack of symmetric PSD matrices, value ``min_i xbar' P_i xbar``.

    Attributes:
        matrices: ``(mu, d, d)`` array.
        epsilon: Pruning tolerance used at synthesis.
        horizon: Prediction horizon ``N``.
        n_levels: Number of quantized input levels ``M``.
        levels_pruned: Matrices removed at each backward level, deepest first.
        model_fingerprint: Fingerprint of the generating switched model.
        sequences: Generating level sequence of each matrix, ``(mu, N-1)``.
        source_indices: Position of each matrix in its parent set, if derived.
    """

    matrices: np.ndarray
    epsilon: float
    horizon: int
    n_levels: int
    levels_pruned: tuple[int, ...] = ()
    model_fingerprint: str = ""
    sequences: np.ndarray | None = None
    source_indices: np.ndarray | None = None

    def __post_init__(self):
        P = np.ascontiguousarray(self.matrices, dtype=float)
        if P.ndim != 3 or P.shape[0] == 0 or P.shape[1] != P.shape[2]:
            raise ValueError("a Riccati set needs a nonempty (mu, d, d) stack")
        object.__setattr__(self, "matrices", P)
        if self.sequences is None:
            object.__setattr__(self, "sequences", np.zeros((P.shape[0], 0), dtype=np.int64))
        object.__setattr__(self, "levels_pruned", tuple(int(c) for c in self.levels_pruned))

    def __len__(self) -> int:
        return self.matrices.shape[0]

    @property
    def mu(self) -> int:
        return self.matrices.shape[0]

    @property
    def d(self) -> int:
        return self.matrices.shape[1]

    def subset(self, indices) -> "RiccatiSet":
        """Matrices at ``indices`` (kept in the given order), tagged with their source positions."""
        idx = np.asarray(indices, dtype=np.int64)
        src = idx if self.source_indices is None else self.source_indices[idx]
        return RiccatiSet(
            self.matrices[idx], self.epsilon, self.horizon, self.n_levels, self.levels_pruned,
            self.model_fingerprint, self.sequences[idx], src,
        )

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrices).min())


def riccati_step(P_next: np.ndarray, sigma: int, model: SwitchedAffineModel) -> np.ndarray:
    """``Qbar_s + Abar_s' P_next Abar_s`` for level index ``sigma`` (0-based)."""
    Ab = model.abar[sigma]
    return symmetrize(model.qbar[sigma] + Ab.T @ P_next @ Ab)


def _expand(P: np.ndarray, model: SwitchedAffineModel) -> np.ndarray:
    """All children of a stack, level-major: child ``s * mu + p``."""
    # (M, mu, d, d): Qbar_s + Abar_s' P_p Abar_s
    kids = model.qbar[:, None] + np.einsum("sji,pjk,skl->spil", model.abar, P, model.abar)
    kids = symmetrize(kids)
    return kids.reshape(-1, P.shape[1], P.shape[2])


def _dominators(P_j: np.ndarray, cands: np.ndarray, epsilon: float) -> np.ndarray:
    """Boolean mask of candidates ``P_i`` with ``P_j + eps I - P_i`` PSD."""
    if cands.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    diff = (P_j + epsilon * np.eye(P_j.shape[0]))[None] - cands
    # a PSD matrix has a nonnegative diagonal: cheap rejection first
    ok = np.all(np.diagonal(diff, axis1=1, axis2=2) >= -PSD_TOL, axis=1)
    out = np.zeros(cands.shape[0], dtype=bool)
    if ok.any():
        lam = np.linalg.eigvalsh(symmetrize(diff[ok]))[:, 0]
        out[np.flatnonzero(ok)] = lam >= -PSD_TOL
    return out


def is_eps_redundant(P_j, candidates, epsilon: float) -> tuple[bool, int | None]:
    """Whether some candidate dominates ``P_j`` within ``epsilon * I``.

    Returns:
        (redundant, index of the first dominating candidate or None)
    """
    cands = np.asarray(candidates, dtype=float).reshape(-1, *np.shape(P_j))
    mask = _dominators(np.asarray(P_j, dtype=float), cands, epsilon)
    hits = np.flatnonzero(mask)
    return (True, int(hits[0])) if hits.size else (False, None)


def prune_indices(P: np.ndarray, epsilon: float) -> np.ndarray:
    """Indices that survive a single in-order pruning pass."""
    P = np.asarray(P, dtype=float)
    mu, d, _ = P.shape
    kept = np.empty((mu, d, d))
    keep_idx = []
    for j in range(mu):
        k = len(keep_idx)
        if k and _dominators(P[j], kept[:k], epsilon).any():
            continue
        kept[k] = P[j]
        keep_idx.append(j)
    return np.asarray(keep_idx, dtype=np.int64)


def prune(matrices, epsilon: float) -> np.ndarray:
    """Drop every matrix epsilon-dominated by an earlier kept one.

    The value of the kept set exceeds that of the input set by at most
    ``epsilon * |xbar|^2`` at every ``xbar``.
    """
    P = np.asarray(matrices, dtype=float)
    if P.ndim != 3 or P.shape[0] == 0:
        raise ValueError("prune needs a nonempty (mu, d, d) stack")
    return P[prune_indices(P, epsilon)]


def build_p1_set(
    model: SwitchedAffineModel,
    N: int,
    epsilon: float = 0.0,
    budget: int = DEFAULT_BUDGET,
    prune_every_level: bool = True,
) -> RiccatiSet:
    """Value matrices for the tail of an ``N``-step problem.

    Starts from the terminal weight and applies ``N - 1`` backward Riccati
    levels.  With ``prune_every_level`` each level is pruned before being
    expanded; otherwise only the final level is pruned.

    Raises:
        SynthesisOverflowError: a level would exceed ``budget`` matrices
            before pruning.
    """
    if N < 1:
        raise ValueError("horizon must be >= 1")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    M = model.M
    P = model.qbarN[None].copy()
    seqs = np.zeros((1, 0), dtype=np.int64)
    removed = []
    for level in range(N - 1, 0, -1):
        size = M * P.shape[0]
        if size > budget:
            raise SynthesisOverflowError(
                f"level {level} needs {size} matrices (budget {budget}); increase epsilon"
            )
        P = _expand(P, model)
        seqs = np.concatenate(
            [np.repeat(np.arange(M), seqs.shape[0])[:, None], np.tile(seqs, (M, 1))], axis=1
        )
        if prune_every_level or level == 1:
            keep = prune_indices(P, epsilon)
            removed.append(size - keep.size)
            P, seqs = P[keep], seqs[keep]
        else:
            removed.append(0)
        logger.debug("level %d: %d matrices kept of %d", level, P.shape[0], size)
    return RiccatiSet(P, float(epsilon), N, M, tuple(removed), model.fingerprint(), seqs)


def eval_value(rset: RiccatiSet, xbar) -> tuple[float, int]:
    """``min_i xbar' P_i xbar`` and the lowest attaining index."""
    xbar = np.asarray(xbar, dtype=float).reshape(1, rset.d)
    vals, idx = kernels.quadform_min(rset.matrices, xbar)
    return float(vals[0]), int(idx[0])


def eval_value_batch(rset: RiccatiSet, xbars) -> tuple[np.ndarray, np.ndarray]:
    xbars = np.asarray(xbars, dtype=float).reshape(-1, rset.d)
    return kernels.quadform_min(rset.matrices, xbars)


def augment(x) -> np.ndarray:
    """Append the constant 1 to a state or a batch of states."""
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def pruning_error_bound(model: SwitchedAffineModel, rset: RiccatiSet, xbars) -> np.ndarray:
    """Worst-case value increase caused by pruning, propagated through the tree.

    A level pruned with tolerance ``eps`` adds at most ``eps |y|^2`` at the
    point ``y`` where that level is evaluated; the point reached after ``j``
    steps is ``Abar_{s_j} ... Abar_{s_1} xbar`` for some sequence, so the
    bound sums the largest ``|y|^2`` over reachable points per pruned level.
    Cost grows as ``M^(N-2)``; meant for small instances.
    """
    X = np.asarray(xbars, dtype=float).reshape(-1, model.d)
    pruned = [c > 0 for c in rset.levels_pruned[::-1]]  # level 1 first
    total = np.zeros(X.shape[0])
    reach = X[None]
    for depth, was_pruned in enumerate(pruned):
        if depth:
            reach = np.einsum("sij,pkj->spki", model.abar, reach).reshape(-1, *X.shape)
        if was_pruned:
            total += rset.epsilon * np.max(np.sum(reach**2, axis=-1), axis=0)
    return total


def restrict_to_region(parent: RiccatiSet, region: Polytope, n_samples: int = DEFAULT_SAMPLES) -> RiccatiSet:
    """Matrices of ``parent`` that attain the minimum somewhere on a grid over ``region``.

    The grid has ``n_samples`` points per axis over the region's bounding
    box; points outside the polytope are dropped.  The result keeps the
    parent's order.

    Raises:
        EmptyRegionError: no grid point falls inside the region.
    """
    lo, hi = region.bounding_box
    pts = grid_points(lo, hi, per_axis=n_samples)
    pts = pts[region.contains(pts)]
    if pts.shape[0] == 0:
        raise EmptyRegionError("no sample point lies in the region")
    _, idx = eval_value_batch(parent, augment(pts))
    return parent.subset(np.unique(idx))


def _axis_splits(z: int, n: int) -> tuple[int, ...]:
    """Per-axis cell counts whose product is ``z``, as even as possible."""
    factors = []
    k, p = z, 2
    while k > 1:
        while k % p == 0:
            factors.append(p)
            k //= p
        p += 1
    counts = [1] * n
    for f in sorted(factors, reverse=True):
        counts[int(np.argmin(counts))] *= f
    return tuple(counts)


@dataclass(frozen=True, eq=False)
class RegionRiccatiMap:
    """Axis-aligned cells over a constraint polytope, one reduced set per cell.

    Attributes:
        regions: Cell polytopes (cell box intersected with ``X``).
        sets: Reduced value set per cell.
        parent: Set the cell sets were drawn from.
        edges: Per-axis cell boundaries used by :meth:`locate`.
    """

    regions: list[Polytope]
    sets: list[RiccatiSet]
    parent: RiccatiSet
    edges: list[np.ndarray] = field(default_factory=list)
    _inner: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_inner", [np.asarray(e, dtype=float)[1:-1].tolist() for e in self.edges])

    @property
    def z(self) -> int:
        return len(self.regions)

    def locate(self, x) -> int:
        """Cell index containing ``x``; boundary points go to the lower cell.

        Points outside the partitioned box are mapped to the nearest cell.
        """
        cell = 0
        for xi, inner in zip(np.asarray(x, dtype=float).tolist(), self._inner):
            cell = cell * (len(inner) + 1) + bisect.bisect_left(inner, xi)
        return cell

    def set_for(self, x) -> RiccatiSet:
        return self.sets[self.locate(x)]


def partition_regions(
    X: Polytope,
    z: int,
    parent: RiccatiSet,
    n_samples: int = DEFAULT_SAMPLES,
) -> RegionRiccatiMap:
    """Split ``X`` into ``z`` axis-aligned cells and reduce ``parent`` on each.

    ``parent`` should already be restricted to ``X`` so that every cell set
    is a subset of it.
    """
    if z < 1:
        raise ValueError("number of regions must be >= 1")
    lo, hi = X.bounding_box
    counts = _axis_splits(z, X.dim)
    edges = [np.linspace(lo[a], hi[a], counts[a] + 1) for a in range(X.dim)]
    regions, sets = [], []
    for cell in itertools.product(*[range(c) for c in counts]):
        clo = np.array([edges[a][i] for a, i in enumerate(cell)])
        chi = np.array([edges[a][i + 1] for a, i in enumerate(cell)])
        region = Polytope.box(clo, chi).intersect(X)
        regions.append(region)
        sets.append(restrict_to_region(parent, region, n_samples))
    return RegionRiccatiMap(regions, sets, parent, edges)
