"""Half-space polytopes {x : H x <= h} in small dimension."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionError, EmptyRegionError


@dataclass(frozen=True, eq=False)
class Polytope:
    """Bounded polytope in half-space form.

    Attributes:
        H: Normal vectors, shape ``(k, n)``.
        h: Offsets, shape ``(k,)``.
    """

    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if H.shape[0] != h.shape[0]:
            raise DimensionError(f"H has {H.shape[0]} rows but h has {h.shape[0]}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)

    @classmethod
    def box(cls, lower, upper) -> "Polytope":
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise DimensionError("box bounds differ in length")
        n = lower.size
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @classmethod
    def whole_space(cls, n: int) -> "Polytope":
        return cls(np.zeros((0, n)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    def contains(self, x, tol: float = 1e-9) -> np.ndarray | bool:
        """Membership test for one point ``(n,)`` or a batch ``(k, n)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return bool(np.all(self.H @ x <= self.h + tol))
        return np.all(x @ self.H.T <= self.h + tol, axis=1)

    def violation(self, x) -> np.ndarray | float:
        """Largest half-space excess ``max(H x - h)``; <= 0 inside."""
        x = np.asarray(x, dtype=float)
        if self.H.shape[0] == 0:
            return 0.0 if x.ndim == 1 else np.zeros(x.shape[0])
        excess = x @ self.H.T - self.h
        return float(excess.max()) if x.ndim == 1 else excess.max(axis=1)

    def shift(self, offset) -> "Polytope":
        """The translated set ``{x - offset : x in self}``."""
        offset = np.asarray(offset, dtype=float).reshape(-1)
        return Polytope(self.H, self.h - self.H @ offset)

    @cached_property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.dim
        lo = np.empty(n)
        hi = np.empty(n)
        for i in range(n):
            c = np.zeros(n)
            c[i] = 1.0
            for sign, out in ((1.0, lo), (-1.0, hi)):
                res = linprog(sign * c, A_ub=self.H, b_ub=self.h, bounds=[(None, None)] * n)
                if res.status == 2:
                    raise EmptyRegionError("polytope is empty")
                if res.status != 0:
                    raise ValueError("polytope is unbounded")
                out[i] = res.x[i]
        return lo, hi

    def intersect(self, other: "Polytope") -> "Polytope":
        return Polytope(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]))

    def to_dict(self) -> dict:
        return {"H": self.H.tolist(), "h": self.h.tolist()}


def grid_points(lower, upper, per_axis: int | None = None, step: float | None = None) -> np.ndarray:
    """Tensor grid over a box, C-ordered, endpoints included.

    Exactly one of ``per_axis`` and ``step`` is used; ``step`` wins when both
    are given.  Degenerate axes (lower == upper) contribute one point.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    axes = []
    for lo, hi in zip(lower, upper):
        if hi - lo <= 0.0:
            axes.append(np.array([lo]))
        elif step is not None:
            count = int(np.floor((hi - lo) / step + 1e-9)) + 1
            axes.append(lo + step * np.arange(count))
        else:
            axes.append(np.linspace(lo, hi, per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)
