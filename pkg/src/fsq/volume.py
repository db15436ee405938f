"""Fuzzy sets on a regular 3D grid and the morphology kernels built on them.

Arrays are indexed ``values[i, j, k]`` with ``i`` along x.  On disk the
payload is x-fastest (Fortran order); in memory we keep a plain numpy array
and only care about layout at the I/O boundary.

Grid boundary convention: anything outside the grid has membership 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import DEFAULT_TNORM, TNorm

log = logging.getLogger(__name__)


class GeometryError(ValueError):
    pass


def _triple(values, name, positive=False):
    out = tuple(float(v) for v in values)
    if len(out) != 3:
        raise GeometryError(f"{name} must have 3 components, got {len(out)}")
    if positive and not all(v > 0 for v in out):
        raise GeometryError(f"{name} must be strictly positive, got {out}")
    return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Shared geometry of fuzzy and label volumes."""

    values: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise GeometryError(f"values must be a non-empty 3D array, got shape {self.values.shape}")
        object.__setattr__(self, "spacing", _triple(self.spacing, "spacing", positive=True))
        object.__setattr__(self, "origin", _triple(self.origin, "origin"))

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.values.shape)

    def same_geometry(self, other: "Grid") -> bool:
        return (self.dims == other.dims and self.spacing == other.spacing
                and self.origin == other.origin)

    def check_geometry(self, other: "Grid") -> None:
        if not self.same_geometry(other):
            raise GeometryError(
                f"geometry mismatch: dims {self.dims} vs {other.dims}, "
                f"spacing {self.spacing} vs {other.spacing}, "
                f"origin {self.origin} vs {other.origin}")

    def world_coords(self) -> np.ndarray:
        """World positions (mm) of all voxel centers, shape dims + (3,)."""
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def index_to_world(self, index) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.spacing) * np.asarray(index, dtype=float)

    def world_to_index(self, point) -> np.ndarray:
        return (np.asarray(point, dtype=float) - np.asarray(self.origin)) / np.asarray(self.spacing)


@dataclass(frozen=True, eq=False)
class FuzzyVolume(Grid):
    """Membership degrees in [0, 1] on a grid."""

    warning: str | None = field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        super().__post_init__()
        if values.size and not (np.all(values >= 0.0) and np.all(values <= 1.0)):
            bad = values[(values < 0) | (values > 1) | np.isnan(values)]
            raise ValueError(f"fuzzy values must lie in [0, 1], found {bad.flat[0]!r}")
        values.flags.writeable = False

    @classmethod
    def zeros_like(cls, grid: Grid, warning=None) -> "FuzzyVolume":
        return cls(np.zeros(grid.dims), grid.spacing, grid.origin, warning=warning)

    def with_values(self, values, warning=None) -> "FuzzyVolume":
        return FuzzyVolume(values, self.spacing, self.origin, warning=warning)

    def is_crisp(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def support(self) -> np.ndarray:
        return np.argwhere(self.values > 0)


@dataclass(frozen=True, eq=False)
class LabelVolume(Grid):
    """Integer labels, 0 is background."""

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype.kind == "f":
            if not np.all(values == np.round(values)):
                raise ValueError("label values must be integers")
        values = values.astype(np.int64)
        if values.size and values.min() < 0:
            raise ValueError("label values must be non-negative")
        object.__setattr__(self, "values", values)
        super().__post_init__()
        values.flags.writeable = False


@dataclass(frozen=True, eq=False)
class StructuringElement:
    """A fuzzy kernel with its center voxel; offsets are in voxels."""

    volume: FuzzyVolume
    center: tuple

    def __post_init__(self):
        center = tuple(int(c) for c in self.center)
        if len(center) != 3 or not all(0 <= c < n for c, n in zip(center, self.volume.dims)):
            raise GeometryError(f"SE center {center} outside dims {self.volume.dims}")
        object.__setattr__(self, "center", center)
        if self.volume.values[center] < self.volume.values.max():
            raise ValueError("structuring element must be maximal at its center")

    @classmethod
    def from_array(cls, values, center=None, spacing=(1.0, 1.0, 1.0)) -> "StructuringElement":
        values = np.asarray(values, dtype=float)
        if center is None:
            center = tuple(n // 2 for n in values.shape)
        return cls(FuzzyVolume(values, spacing), center)


def from_label(lv: LabelVolume, label: int) -> FuzzyVolume:
    """Crisp mask of one label.  An absent label yields zeros plus a warning."""
    if label < 1:
        raise ValueError("label must be >= 1")
    mask = (lv.values == label).astype(float)
    warning = None
    if not mask.any():
        warning = f"label {label} absent from volume"
        log.warning(warning)
    return FuzzyVolume(mask, lv.spacing, lv.origin, warning=warning)


def pointwise_min(a: FuzzyVolume, b: FuzzyVolume) -> FuzzyVolume:
    a.check_geometry(b)
    return a.with_values(np.minimum(a.values, b.values))


def pointwise_max(a: FuzzyVolume, b: FuzzyVolume) -> FuzzyVolume:
    a.check_geometry(b)
    return a.with_values(np.maximum(a.values, b.values))


def complement(v: FuzzyVolume) -> FuzzyVolume:
    return v.with_values(1.0 - v.values)


def binarize(v: FuzzyVolume, level: float = 0.5) -> FuzzyVolume:
    return v.with_values((v.values >= level).astype(float))


# -- fuzzy dilation ---------------------------------------------------------

def _check_se(mu: FuzzyVolume, se: StructuringElement) -> None:
    if mu.spacing != se.volume.spacing:
        raise GeometryError(
            f"structuring element spacing {se.volume.spacing} differs from image spacing {mu.spacing}")


def dilate(mu: FuzzyVolume, se: StructuringElement, t: TNorm = DEFAULT_TNORM) -> FuzzyVolume:
    """Fuzzy dilation: out(k) = sup_k' C(se(k - k'), mu(k')).

    Work is O(|support(mu)| * |support(se)|): for each SE offset the
    translated support is scattered into the output with a running max.
    """
    _check_se(mu, se)
    t = TNorm.parse(t)
    out = np.zeros(mu.dims)
    src = mu.support()
    if len(src) == 0:
        return mu.with_values(out)
    src_vals = mu.values[tuple(src.T)]
    dims = np.asarray(mu.dims)
    center = np.asarray(se.center)
    for off in np.argwhere(se.volume.values > 0):
        nu = se.volume.values[tuple(off)]
        dst = src + (off - center)
        ok = np.all((dst >= 0) & (dst < dims), axis=1)
        if not ok.any():
            continue
        idx = tuple(dst[ok].T)
        # translation is injective, so idx holds no duplicates
        out[idx] = np.maximum(out[idx], t.apply(nu, src_vals[ok]))
    return mu.with_values(out)


def dilate_bruteforce(mu: FuzzyVolume, se: StructuringElement, t: TNorm = DEFAULT_TNORM) -> FuzzyVolume:
    """Reference dilation: for each k, sup over every k' of the grid."""
    _check_se(mu, se)
    t = TNorm.parse(t)
    nx, ny, nz = mu.dims
    all_src = np.indices(mu.dims).reshape(3, -1).T
    mu_flat = mu.values[tuple(all_src.T)]
    se_vals = se.volume.values
    se_dims = np.asarray(se.volume.dims)
    center = np.asarray(se.center)
    out = np.zeros(mu.dims)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                rel = np.array([i, j, k]) - all_src + center
                inside = np.all((rel >= 0) & (rel < se_dims), axis=1)
                nu = np.zeros(len(all_src))
                nu[inside] = se_vals[tuple(rel[inside].T)]
                out[i, j, k] = np.max(t.apply(nu, mu_flat))
    return mu.with_values(out)


# -- distance transform ------------------------------------------------------

def _edt_1d(f: np.ndarray, step: float) -> np.ndarray:
    """Lower envelope of parabolas: d(p) = min_q (step*(p-q))^2 + f(q)."""
    n = len(f)
    out = np.empty(n)
    v = [0] * n
    z = [0.0] * (n + 1)
    finite = np.isfinite(f)
    if not finite.any():
        out[:] = np.inf
        return out
    first = int(np.argmax(finite))
    v[0] = first
    z[0], z[1] = -math.inf, math.inf
    kk = 0
    s2 = step * step
    for q in range(first + 1, n):
        fq = f[q]
        if fq == math.inf:
            continue
        while True:
            r = v[kk]
            s = ((fq + s2 * q * q) - (f[r] + s2 * r * r)) / (2.0 * s2 * (q - r))
            if s <= z[kk]:
                kk -= 1
                if kk < 0:
                    break
            else:
                break
        kk += 1
        v[kk] = q
        z[kk] = s
        z[kk + 1] = math.inf
    kk = 0
    for p in range(n):
        while z[kk + 1] < p:
            kk += 1
        d = step * (p - v[kk])
        out[p] = d * d + f[v[kk]]
    return out


def _squared_edt(zero_mask: np.ndarray, spacing) -> np.ndarray:
    f = np.where(zero_mask, 0.0, np.inf)
    for axis in range(3):
        f = np.moveaxis(f, axis, -1)
        flat = f.reshape(-1, f.shape[-1])
        res = np.empty_like(flat)
        for row in range(flat.shape[0]):
            line = flat[row]
            if np.all(line == 0.0) or np.all(np.isinf(line)):
                res[row] = line
            else:
                res[row] = _edt_1d(line, spacing[axis])
        f = np.moveaxis(res.reshape(f.shape), -1, axis)
    return f


def _require_crisp(mask: FuzzyVolume) -> None:
    if not mask.is_crisp():
        raise ValueError("operation requires a crisp mask (values in {0, 1})")


def distance_transform(mask: FuzzyVolume) -> np.ndarray:
    """Exact Euclidean distance (mm) from each 1-voxel to the nearest 0-voxel.

    Separable three-pass squared-distance transform; returns a float array
    shaped like the grid (unbounded values, so not a FuzzyVolume).
    """
    _require_crisp(mask)
    ones = mask.values == 1.0
    if ones.all() or not ones.any():
        raise ValueError("distance transform needs at least one 0-voxel and one 1-voxel")
    return np.sqrt(_squared_edt(~ones, mask.spacing))


def distance_bruteforce(mask: FuzzyVolume) -> np.ndarray:
    """O(n^2) nearest-zero scan, for cross-checking distance_transform."""
    _require_crisp(mask)
    zeros = np.argwhere(mask.values == 0.0)
    sp = np.asarray(mask.spacing)
    out = np.zeros(mask.dims)
    for idx in np.argwhere(mask.values == 1.0):
        diff = sp * (idx - zeros)
        sq = diff[:, 2] ** 2 + (diff[:, 1] ** 2 + diff[:, 0] ** 2)
        out[tuple(idx)] = math.sqrt(sq.min())
    return out


def _padded_distance(ones: np.ndarray, spacing) -> np.ndarray:
    # Distance to the nearest 0, with the outside of the grid counting as 0.
    padded = np.pad(ones, 1, constant_values=False)
    d = np.sqrt(_squared_edt(~padded, spacing))
    return d[1:-1, 1:-1, 1:-1]


def erode_crisp(mask: FuzzyVolume, radius_mm: float) -> FuzzyVolume:
    """Keep voxels whose distance to the nearest 0-voxel exceeds radius_mm."""
    _require_crisp(mask)
    if radius_mm < 0:
        raise ValueError("radius must be >= 0")
    if radius_mm == 0:
        return mask
    ones = mask.values == 1.0
    if not ones.any():
        return mask
    d = _padded_distance(ones, mask.spacing)
    return mask.with_values((ones & (d > radius_mm)).astype(float))


def dilate_crisp(mask: FuzzyVolume, radius_mm: float) -> FuzzyVolume:
    """Ball dilation restricted to the grid: voxels within radius_mm of the mask."""
    _require_crisp(mask)
    ones = mask.values == 1.0
    if radius_mm <= 0 or not ones.any() or ones.all():
        return mask
    d = np.sqrt(_squared_edt(ones, mask.spacing))
    return mask.with_values((d <= radius_mm).astype(float))


def close_crisp(mask: FuzzyVolume, radius_mm: float) -> FuzzyVolume:
    """Ball closing, with everything outside the grid counted as background.

    The grid is padded by the radius so that the dilation is not clipped and
    the erosion sees the true exterior.  Axes of length 1 are not padded: a
    single slice is treated as a 2D image.
    """
    _require_crisp(mask)
    ones = mask.values == 1.0
    if radius_mm <= 0 or not ones.any():
        return mask
    pad = [int(math.ceil(radius_mm / s)) + 1 if n > 1 else 0 for s, n in zip(mask.spacing, mask.dims)]
    big = np.pad(ones, [(p, p) for p in pad], constant_values=False)
    dil = np.sqrt(_squared_edt(big, mask.spacing)) <= radius_mm
    closed = dil & (np.sqrt(_squared_edt(~dil, mask.spacing)) > radius_mm)
    core = tuple(slice(p, p + n) for p, n in zip(pad, mask.dims))
    return mask.with_values((closed[core] | ones).astype(float))


# -- sampling ----------------------------------------------------------------

def sample_trilinear(v: Grid, point) -> float:
    """Trilinear interpolation at a world point; 0 outside the voxel-center box."""
    idx = v.world_to_index(point)
    return float(sample_many(v, idx[None, :], indices=True)[0])


def sample_many(v: Grid, points, indices: bool = False) -> np.ndarray:
    """Vectorized trilinear sampling of an (n, 3) array of world points."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    idx = pts if indices else v.world_to_index(pts)
    dims = np.asarray(v.dims)
    inside = np.all((idx >= 0) & (idx <= dims - 1), axis=1)
    out = np.zeros(len(pts))
    if not inside.any():
        return out
    q = idx[inside]
    lo = np.minimum(np.floor(q).astype(int), np.maximum(dims - 2, 0))
    frac = q - lo
    hi = np.minimum(lo + 1, dims - 1)
    vals = np.asarray(v.values, dtype=float)

    def lerp(a, b, f):
        # a + f * (b - a) keeps constant fields and voxel centers exact
        return a + f * (b - a)

    corner = {}
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                corner[cx, cy, cz] = vals[(hi if cx else lo)[:, 0],
                                          (hi if cy else lo)[:, 1],
                                          (hi if cz else lo)[:, 2]]
    fx, fy, fz = frac.T
    plane = {(cy, cz): lerp(corner[0, cy, cz], corner[1, cy, cz], fx) for cy in (0, 1) for cz in (0, 1)}
    line = {cz: lerp(plane[0, cz], plane[1, cz], fy) for cz in (0, 1)}
    acc = lerp(line[0], line[1], fz)
    if isinstance(v, FuzzyVolume):
        acc = np.clip(acc, 0.0, 1.0)
    out[inside] = acc
    return out
