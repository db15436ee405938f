"""Fuzzy landscapes for spatial relations and the degrees read off them.

A landscape is a FuzzyVolume whose value at a voxel is the degree to which
that voxel satisfies the relation with respect to a reference structure.
Directional relations dilate the reference by a fuzzy cone; crossing uses the
normalized distance inside the loop of an object; between conjoins two
opposed cones.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lattice import DEFAULT_TNORM, TNorm
from .volume import (
    FuzzyVolume,
    binarize,
    close_crisp,
    distance_transform,
    erode_crisp,
    sample_many,
)

log = logging.getLogger(__name__)

AGGREGATIONS = ("sup", "mean")


@dataclass(frozen=True)
class DirectionSpec:
    """Unit direction in world coordinates plus the cone half-angle (radians)."""

    vector: tuple
    aperture: float = math.pi / 2

    def __post_init__(self):
        vec = tuple(float(c) for c in self.vector)
        if len(vec) != 3 or abs(math.sqrt(sum(c * c for c in vec)) - 1.0) > 1e-9:
            raise ValueError(f"direction must be a unit 3-vector, got {self.vector}")
        if not (0.0 < self.aperture <= math.pi):
            raise ValueError(f"aperture must lie in (0, pi], got {self.aperture}")
        object.__setattr__(self, "vector", vec)

    @classmethod
    def toward(cls, vector, aperture: float = math.pi / 2) -> "DirectionSpec":
        v = np.asarray(vector, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("zero direction vector")
        return cls(tuple(v / n), aperture)

    def reversed(self) -> "DirectionSpec":
        return DirectionSpec(tuple(-c for c in self.vector), self.aperture)


@dataclass(frozen=True)
class RelationParams:
    contour_margin_mm: float = 2.0
    aggregation: str = "sup"
    closing_radius_mm: float = 10.0
    near_band_mm: tuple = (2.0, 8.0)
    aperture: float = math.pi / 2

    def __post_init__(self):
        if self.contour_margin_mm < 0:
            raise ValueError("contour_margin_mm must be >= 0")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.closing_radius_mm <= 0:
            raise ValueError("closing_radius_mm must be > 0")
        d_in, d_out = (float(x) for x in self.near_band_mm)
        if not (0 <= d_in < d_out):
            raise ValueError(f"near band needs 0 <= d_inner < d_outer, got {self.near_band_mm}")
        object.__setattr__(self, "near_band_mm", (d_in, d_out))
        if not (0.0 < self.aperture <= math.pi):
            raise ValueError("aperture must lie in (0, pi]")

    def updated(self, **changes) -> "RelationParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class TriangularQuantifier:
    """Fuzzy number "about n": 1 at modal, 0 beyond modal +- halfwidth."""

    modal: float
    halfwidth: float

    def __post_init__(self):
        if self.modal < 0 or self.halfwidth <= 0:
            raise ValueError("quantifier needs modal >= 0 and halfwidth > 0")

    def __call__(self, count: float) -> float:
        return quantifier_degree(self, count)


# -- world frame ---------------------------------------------------------------

_OPPOSITE = {"left": "right", "right": "left", "anterior": "posterior",
             "posterior": "anterior", "superior": "inferior", "inferior": "superior"}
_LINE = {"left": "lr", "right": "lr", "anterior": "ap", "posterior": "ap",
         "superior": "si", "inferior": "si"}


@dataclass(frozen=True)
class Frame:
    """Which anatomical direction each positive world axis points to."""

    axes: tuple = ("left", "anterior", "superior")

    def __post_init__(self):
        axes = tuple(a.lower() for a in self.axes)
        if len(axes) != 3 or any(a not in _OPPOSITE for a in axes):
            raise ValueError(f"bad axis convention {self.axes}")
        if len({_LINE[a] for a in axes}) != 3:
            raise ValueError(f"axis convention {self.axes} repeats an anatomical axis")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def parse(cls, text: str) -> "Frame":
        """Parse ``x=left y=anterior z=superior`` (any order of the three)."""
        found = {}
        for item in text.split():
            key, sep, value = item.partition("=")
            if not sep or key not in ("x", "y", "z") or key in found:
                raise ValueError(f"bad axis convention item {item!r}")
            found[key] = value
        if set(found) != {"x", "y", "z"}:
            raise ValueError(f"axis convention must name x, y and z: {text!r}")
        return cls((found["x"], found["y"], found["z"]))

    def render(self) -> str:
        return " ".join(f"{k}={a}" for k, a in zip("xyz", self.axes))

    def vector(self, direction: str) -> tuple:
        direction = direction.lower()
        for i, a in enumerate(self.axes):
            if a == direction or _OPPOSITE[a] == direction:
                v = [0.0, 0.0, 0.0]
                v[i] = 1.0 if a == direction else -1.0
                return tuple(v)
        raise ValueError(f"unknown direction {direction!r}")

    def lateral_axis(self) -> int:
        return next(i for i, a in enumerate(self.axes) if _LINE[a] == "lr")


# -- directional relations -------------------------------------------------------

def cone_membership(offset, d: DirectionSpec) -> float:
    """Degree to which ``offset`` points along the cone ``d``: 1 - angle/aperture."""
    o = np.asarray(offset, dtype=float)
    n = math.sqrt(float(o @ o))
    if n == 0.0:
        return 0.0
    cos = min(1.0, max(-1.0, float(o @ np.asarray(d.vector)) / n))
    return max(0.0, 1.0 - math.acos(cos) / d.aperture)


def _cone_many(offsets: np.ndarray, d: DirectionSpec) -> np.ndarray:
    return _cone_from_cos(_cos_many(offsets, d), d)


def _cos_many(offsets: np.ndarray, d: DirectionSpec) -> np.ndarray:
    # cosine to the cone axis; -inf for a zero offset (the apex itself)
    norm = np.sqrt(np.einsum("...i,...i->...", offsets, offsets))
    dot = offsets @ np.asarray(d.vector)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.clip(dot / norm, -1.0, 1.0)
    return np.where(norm == 0.0, -np.inf, cos)


def _cone_from_cos(cos: np.ndarray, d: DirectionSpec) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        out = np.maximum(0.0, 1.0 - np.arccos(cos) / d.aperture)
    return np.where(np.isneginf(cos), 0.0, out)


def directional_dilation(region: FuzzyVolume, d: DirectionSpec,
                         t: TNorm = DEFAULT_TNORM, chunk_elems: int = 1 << 21) -> FuzzyVolume:
    """Dilation of ``region`` by the unbounded cone ``d`` (no interior removal).

    Sources sharing a membership level are reduced to their best cosine
    before the arccos; the cone profile is monotone in the angle, so this
    equals the pairwise sup.
    """
    t = TNorm.parse(t)
    src = region.support()
    out = np.zeros(region.dims)
    if len(src) == 0:
        return region.with_values(out, warning="empty region support")
    grid = region.world_coords().reshape(-1, 3)
    src_world = region.index_to_world(src)
    src_vals = region.values[tuple(src.T)]
    flat = out.reshape(-1)
    step = max(1, chunk_elems // len(grid))
    for level in np.unique(src_vals):
        pts = src_world[src_vals == level]
        best = np.full(len(grid), -np.inf)
        for lo in range(0, len(pts), step):
            offs = grid[None, :, :] - pts[lo:lo + step, None, :]
            np.maximum(best, _cos_many(offs, d).max(axis=0), out=best)
        np.maximum(flat, t.apply(_cone_from_cos(best, d), level), out=flat)
    return region.with_values(out)


def interior_mask(region: FuzzyVolume, margin_mm: float) -> FuzzyVolume:
    """Crisp interior of ``region`` lying farther than margin_mm from its border."""
    return erode_crisp(binarize(region, 0.5), margin_mm)


def directional_landscape(region: FuzzyVolume, d: DirectionSpec,
                          params: RelationParams = RelationParams(),
                          t: TNorm = DEFAULT_TNORM) -> FuzzyVolume:
    """Region in direction ``d`` of ``region``, its deep interior removed."""
    raw = directional_dilation(region, d, t)
    if raw.warning:
        log.warning("directional landscape: %s", raw.warning)
        return raw
    keep = 1.0 - interior_mask(region, params.contour_margin_mm).values
    return raw.with_values(raw.values * keep)


def directional_degree(landscape: FuzzyVolume, target: FuzzyVolume,
                       params: RelationParams = RelationParams(),
                       t: TNorm = DEFAULT_TNORM) -> float:
    """Aggregate C(landscape, target) over the grid (sup, or target-weighted mean)."""
    landscape.check_geometry(target)
    vals = TNorm.parse(t).apply(landscape.values, target.values)
    if params.aggregation == "sup":
        return float(vals.max())
    total = target.values.sum()
    if total == 0:
        return 0.0
    return float(min(1.0, vals.sum() / total))


# -- crossing -------------------------------------------------------------------

def hole_region(mask: FuzzyVolume, closing_radius_mm: float) -> FuzzyVolume:
    """Loop interior of a crisp object: its ball closing minus the object."""
    closed = close_crisp(mask, closing_radius_mm)
    hole = (closed.values == 1.0) & (mask.values == 0.0)
    warning = None
    if not hole.any():
        warning = f"no loop detected at closing radius {closing_radius_mm} mm"
        log.warning(warning)
    return mask.with_values(hole.astype(float), warning=warning)


def crossing_landscape(mask: FuzzyVolume, params: RelationParams = RelationParams(),
                       hole: FuzzyVolume | None = None) -> FuzzyVolume:
    """0 at the rim of the loop of ``mask``, rising to 1 at its center.

    ``hole`` overrides the automatic loop detection when the interior is known.
    """
    if hole is None:
        h = hole_region(mask, params.closing_radius_mm)
    else:
        mask.check_geometry(hole)
        h = binarize(hole, 0.5)
    if not h.values.any():
        return mask.with_values(np.zeros(mask.dims), warning=h.warning or "empty hole")
    if h.values.all():
        raise ValueError("hole covers the entire grid; crossing landscape undefined")
    d = distance_transform(h)
    return mask.with_values(d / d.max(), warning=h.warning)


# -- between / distance --------------------------------------------------------

def centroid(region: FuzzyVolume) -> np.ndarray:
    w = region.values
    total = w.sum()
    if total == 0:
        raise ValueError("centroid of an empty region")
    idx = np.argwhere(w > 0)
    return region.index_to_world((idx * w[w > 0][:, None]).sum(axis=0) / total)


def between_landscape(a: FuzzyVolume, b: FuzzyVolume, aperture: float = math.pi / 2,
                      t: TNorm = DEFAULT_TNORM) -> FuzzyVolume:
    """Points seen from ``a`` toward ``b`` and from ``b`` toward ``a``, outside both."""
    a.check_geometry(b)
    if not a.values.any() or not b.values.any():
        raise ValueError("between needs two non-empty regions")
    axis = centroid(b) - centroid(a)
    if np.linalg.norm(axis) < 1e-12:
        raise ValueError("between: the two regions have coincident centroids")
    u = DirectionSpec.toward(axis, aperture)
    la = directional_dilation(a, u, t)
    lb = directional_dilation(b, u.reversed(), t)
    outside = 1.0 - np.maximum(binarize(a).values, binarize(b).values)
    return a.with_values(np.minimum(la.values, lb.values) * outside)


def distance_band_landscape(region: FuzzyVolume, band) -> FuzzyVolume:
    """1 within d_inner of the region, ramping linearly to 0 at d_outer."""
    d_in, d_out = (float(x) for x in band)
    if not (0 <= d_in < d_out):
        raise ValueError(f"band needs 0 <= d_inner < d_outer, got {band}")
    mask = binarize(region, 0.5)
    if not mask.values.any():
        raise ValueError("distance band of an empty region")
    if mask.values.all():
        return mask
    dist = distance_transform(mask.with_values(1.0 - mask.values))
    ramp = np.clip((d_out - dist) / (d_out - d_in), 0.0, 1.0)
    return mask.with_values(np.where(dist <= d_in, 1.0, ramp))


# -- quantifiers -------------------------------------------------------------------

def quantifier_degree(q: TriangularQuantifier, count: float) -> float:
    if count < 0:
        raise ValueError("count must be >= 0")
    return max(0.0, 1.0 - abs(count - q.modal) / q.halfwidth)


def connected_degree(fiber_endpoints, region: FuzzyVolume, q: TriangularQuantifier) -> float:
    """"About n" endpoints lie in ``region``, counting fractional memberships."""
    pts = np.asarray(fiber_endpoints, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("need at least one endpoint")
    return quantifier_degree(q, float(sample_many(region, pts).sum()))


# -- relation dispatch ----------------------------------------------------------

DIRECTIONAL = {
    "anterior_of": "anterior",
    "posterior_of": "posterior",
    "inferior_of": "inferior",
    "superior_of": "superior",
}
RELATION_ARITY = {
    **{name: 1 for name in DIRECTIONAL},
    "lateral_of": 1,
    "medial_of": 1,
    "crossing": 1,
    "near": 1,
    "between": 2,
    "connected_about": 1,
}


@dataclass(frozen=True)
class LandscapeRequest:
    """Everything that determines one landscape volume."""

    relation: str
    params: RelationParams = field(default_factory=RelationParams)
    tnorm: TNorm = DEFAULT_TNORM
    frame: Frame = field(default_factory=Frame)
    midline: float | None = None


def relation_landscape(req: LandscapeRequest, structures, hole: FuzzyVolume | None = None) -> FuzzyVolume:
    """Build the landscape of ``req.relation`` around the given structure volumes."""
    rel, p, t = req.relation, req.params, req.tnorm
    if rel not in RELATION_ARITY or rel == "connected_about":
        raise ValueError(f"relation {rel!r} has no landscape")
    if len(structures) != RELATION_ARITY[rel]:
        raise ValueError(f"{rel} takes {RELATION_ARITY[rel]} structure(s), got {len(structures)}")
    ref = structures[0]
    if rel in DIRECTIONAL:
        d = DirectionSpec(req.frame.vector(DIRECTIONAL[rel]), p.aperture)
        return directional_landscape(ref, d, p, t)
    if rel == "lateral_of":
        lat = req.frame.lateral_axis()
        e = [0.0, 0.0, 0.0]
        e[lat] = 1.0
        plus = directional_landscape(ref, DirectionSpec(tuple(e), p.aperture), p, t)
        minus = directional_landscape(ref, DirectionSpec(tuple(-c for c in e), p.aperture), p, t)
        return plus.with_values(np.maximum(plus.values, minus.values))
    if rel == "medial_of":
        lat = req.frame.lateral_axis()
        mid = req.midline
        if mid is None:
            mid = ref.origin[lat] + ref.spacing[lat] * (ref.dims[lat] - 1) / 2.0
        e = [0.0, 0.0, 0.0]
        e[lat] = 1.0 if centroid(ref)[lat] <= mid else -1.0
        return directional_landscape(ref, DirectionSpec(tuple(e), p.aperture), p, t)
    if rel == "crossing":
        return crossing_landscape(binarize(ref, 0.5), p, hole)
    if rel == "near":
        return distance_band_landscape(ref, p.near_band_mm)
    return between_landscape(structures[0], structures[1], p.aperture, t)
