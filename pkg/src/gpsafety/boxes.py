"""Axis-aligned boxes and the margin operations used by the abstraction.

Shrinking and expanding move every face inward/outward by a margin in the
infinity norm, which is how function-approximation error is converted into
geometric slack when testing where the learned mean image can land.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True)
class Box:
    """Nonempty axis-aligned box [lower_i, upper_i] in R^n."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(hi < lo):
            raise ValueError(f"empty box: lower={lo}, upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radii(self) -> np.ndarray:
        """Per-axis half-widths."""
        return 0.5 * (self.upper - self.lower)

    @property
    def euclidean_radius(self) -> float:
        """Largest Euclidean distance from the center to any point of the box."""
        return float(np.linalg.norm(self.radii))

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def contains_box(self, other: "Box") -> bool:
        return bool(
            np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper)
        )

    def intersects(self, other: "Box") -> bool:
        """Closed-set intersection test; touching boundaries count."""
        return bool(
            np.all(self.lower <= other.upper) and np.all(self.upper >= other.lower)
        )

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform i.i.d. points in the box, shape (count, dim)."""
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))


def shrink_box(box: Box, eps: float) -> Box | None:
    """Move every face inward by eps; None if any side is consumed."""
    if eps < 0:
        raise ValueError("margin must be nonnegative")
    lo = box.lower + eps
    hi = box.upper - eps
    if np.any(hi <= lo) and eps > 0:
        return None
    return Box(lo, hi)


def expand_box(box: Box, eps: float) -> Box:
    """Move every face outward by eps."""
    if eps < 0:
        raise ValueError("margin must be nonnegative")
    return Box(box.lower - eps, box.upper + eps)


def hull(boxes) -> Box:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("hull of no boxes")
    return Box(
        np.min([b.lower for b in boxes], axis=0),
        np.max([b.upper for b in boxes], axis=0),
    )


def subdivide(box: Box, k: int) -> list[Box]:
    """Split the box into k^dim congruent sub-boxes (k per axis)."""
    if k < 1:
        raise ValueError("subdivision count must be >= 1")
    edges = [np.linspace(box.lower[d], box.upper[d], k + 1) for d in range(box.dim)]
    out = []
    for idx in product(range(k), repeat=box.dim):
        lo = np.array([edges[d][i] for d, i in enumerate(idx)])
        hi = np.array([edges[d][i + 1] for d, i in enumerate(idx)])
        out.append(Box(lo, hi))
    return out


def subgrid_centers(box: Box, k: int) -> np.ndarray:
    """Centers of the k-per-axis subdivision, shape (k^dim, dim)."""
    step = box.sides / k
    axes = [
        box.lower[d] + step[d] * (np.arange(k) + 0.5) for d in range(box.dim)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)
