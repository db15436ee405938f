"""Fiber polylines, orientation, resampling and the segment order relation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Grid, sample_many

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True, eq=False)
class Fiber:
    id: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"fiber {self.id}: points must be an (n, 3) array")
        if len(pts) < 2:
            raise ValueError(f"fiber {self.id}: needs at least 2 points, got {len(pts)}")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "id", int(self.id))

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return (isinstance(other, Fiber) and self.id == other.id
                and np.array_equal(self.points, other.points))

    @property
    def endpoints(self) -> np.ndarray:
        return self.points[[0, -1]]

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


class FiberSet(list):
    """List of fibers with unique ids."""

    def __init__(self, fibers=()):
        super().__init__(fibers)
        seen = set()
        for f in self:
            if f.id in seen:
                raise ValueError(f"duplicate fiber id {f.id}")
            seen.add(f.id)


@dataclass(frozen=True)
class SegmentWindow:
    """Contiguous, inclusive range of point indices along one fiber."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start <= self.end):
            raise ValueError(f"invalid window [{self.start}, {self.end}]")

    def check(self, n_points: int) -> None:
        if self.end >= n_points:
            raise ValueError(f"window [{self.start}, {self.end}] exceeds fiber of {n_points} points")


def orient(f: Fiber, axis: str = "z", sense: str = "descending") -> Fiber:
    """Reverse ``f`` if its endpoints run against ``sense`` along ``axis``."""
    if sense not in ("descending", "ascending"):
        raise ValueError(f"sense must be 'descending' or 'ascending', got {sense!r}")
    a = AXES[axis]
    first, last = f.points[0, a], f.points[-1, a]
    if (sense == "descending" and first < last) or (sense == "ascending" and first > last):
        return Fiber(f.id, f.points[::-1])
    return f


def resample(f: Fiber, step_mm: float = 1.0) -> Fiber:
    """Points every ``step_mm`` of arc length; both endpoints kept."""
    if step_mm <= 0:
        raise ValueError("step must be > 0")
    seg = np.linalg.norm(np.diff(f.points, axis=0), axis=1)
    keep = seg > 0
    pts = np.vstack([f.points[:1], f.points[1:][keep]])
    seg = seg[keep]
    total = seg.sum()
    if total == 0:
        raise ValueError(f"fiber {f.id} has zero length")
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.arange(0.0, total, step_mm)
    if len(s) > 1 and total - s[-1] <= 1e-9 * step_mm:
        s = s[:-1]
    out = np.empty((len(s) + 1, 3))
    for axis in range(3):
        out[:-1, axis] = np.interp(s, cum, pts[:, axis])
    out[0] = pts[0]
    out[-1] = pts[-1]
    # an excursion shorter than a step can land two samples on one spot
    dup = np.zeros(len(out), dtype=bool)
    dup[1:-1] = np.all(out[1:-1] == out[:-2], axis=1)
    if len(out) > 2 and np.array_equal(out[-1], out[-2]):
        dup[-2] = True
    return Fiber(f.id, out[~dup])


def sample_fiber(f: Fiber, v: Grid) -> np.ndarray:
    """Landscape degree at every fiber point."""
    return sample_many(v, f.points)


def follows(w1: SegmentWindow, w2: SegmentWindow) -> bool:
    """``w1`` lies strictly after ``w2`` along the fiber."""
    return w1.start > w2.end
