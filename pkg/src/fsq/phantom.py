"""Deterministic synthetic scene with known-good and decoy fibers.

Layout (world mm, +x left, +y anterior, +z superior):

* label 1 ``VertebralCanal``: torus around the z axis, fibers descend through its hole
* label 2 ``Piriformis``: ellipsoid below the canal; positives pass anterior of it
* label 3 ``Obturator``: ellipsoid further down; positives end posterior of it
* label 4 ``Sacrum``: slab behind everything

The torus tunnel is also written as an explicit hole mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fibers import Fiber
from .io import save_fibers, save_volume
from .scene import format_scene
from .volume import FuzzyVolume, LabelVolume

LABELS = {"VertebralCanal": 1, "Piriformis": 2, "Obturator": 3, "Sacrum": 4}

QUERY_TEXT = """\
# Phantom root: through the canal, in front of the piriformis, behind the obturator.
@threshold 0.5
Phantom = crossing(VertebralCanal)
  then anterior_of(Piriformis)
  then not anterior_of(Obturator)
"""

FAMILIES = ("miss_hole", "wrong_side", "reversed_order")


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 42
    dims: tuple = (40, 44, 64)
    spacing: float = 1.0
    torus_center: tuple = (20.0, 16.0, 50.0)
    torus_axis: str = "z"
    torus_radii: tuple = (9.0, 4.0)  # major, tube
    blob_centers: tuple = ((20.0, 24.0, 32.0), (20.0, 24.0, 12.0))
    blob_radii: tuple = ((6.0, 4.0, 4.0), (6.0, 4.0, 4.0))
    n_positive: int = 20
    n_decoy: int = 30

    def extent(self) -> np.ndarray:
        return (np.asarray(self.dims) - 1) * self.spacing

    def validate(self) -> None:
        if self.torus_axis != "z":
            raise ValueError("only z-axis tori are supported")
        big, tube = self.torus_radii
        if not 0 < tube < big:
            raise ValueError("torus needs 0 < tube radius < major radius")
        c = np.asarray(self.torus_center)
        reach = np.array([big + tube, big + tube, tube])
        if np.any(c - reach < 0) or np.any(c + reach > self.extent()):
            raise ValueError("torus does not fit inside the grid")
        for center, radii in zip(self.blob_centers, self.blob_radii):
            lo, hi = np.asarray(center) - radii, np.asarray(center) + radii
            if np.any(lo < 0) or np.any(hi > self.extent()):
                raise ValueError(f"blob at {center} does not fit inside the grid")
        if self.n_positive < 0 or self.n_decoy < 0:
            raise ValueError("fiber counts must be >= 0")


def _coords(spec):
    axes = [spec.spacing * np.arange(n) for n in spec.dims]
    return np.meshgrid(*axes, indexing="ij")


def torus_masks(spec: PhantomSpec):
    """Return (torus, tunnel) boolean arrays; the tunnel is the torus hole."""
    x, y, z = _coords(spec)
    cx, cy, cz = spec.torus_center
    big, tube = spec.torus_radii
    rho = np.hypot(x - cx, y - cy)
    dz = z - cz
    torus = (rho - big) ** 2 + dz ** 2 <= tube ** 2
    inner = big - np.sqrt(np.clip(tube ** 2 - dz ** 2, 0.0, None))
    tunnel = (np.abs(dz) < tube) & (rho < inner) & ~torus
    return torus, tunnel


def label_volume(spec: PhantomSpec) -> LabelVolume:
    x, y, z = _coords(spec)
    labels = np.zeros(spec.dims, dtype=np.int64)
    torus, _ = torus_masks(spec)
    labels[torus] = LABELS["VertebralCanal"]
    for name, center, radii in zip(("Piriformis", "Obturator"), spec.blob_centers, spec.blob_radii):
        inside = sum(((c - c0) / r) ** 2 for c, c0, r in zip((x, y, z), center, radii)) <= 1.0
        labels[inside] = LABELS[name]
    # sacrum: thin posterior slab spanning the piriformis levels
    cx = spec.torus_center[0]
    slab = ((np.abs(x - cx) <= 8) & (y >= 2) & (y <= 5)
            & (z >= spec.blob_centers[0][2] - 12) & (z <= spec.blob_centers[0][2] + 12))
    labels[slab & (labels == 0)] = LABELS["Sacrum"]
    return LabelVolume(labels, (spec.spacing,) * 3)


class _Paths:
    """Waypoint recipes for each fiber family, jittered by ``rng``."""

    def __init__(self, spec: PhantomSpec, rng: np.random.Generator):
        self.s, self.rng = spec, rng
        self.tc = np.asarray(spec.torus_center)
        self.b1, self.b2 = (np.asarray(c) for c in spec.blob_centers)
        self.r1, self.r2 = (np.asarray(r) for r in spec.blob_radii)
        self.hole_radius = spec.torus_radii[0] - spec.torus_radii[1]
        self.zmax = spec.extent()[2] - 1.0

    def j(self, scale=1.0):
        return self.rng.uniform(-scale, scale)

    def hole_offset(self):
        # uniform in a disk of 0.18 * hole radius, inside the 20% guarantee
        r = 0.18 * self.hole_radius * np.sqrt(self.rng.uniform())
        a = self.rng.uniform(0, 2 * np.pi)
        return np.array([r * np.cos(a), r * np.sin(a), 0.0])

    def descent(self, shift=np.zeros(3)):
        tube = self.s.torus_radii[1]
        off = self.hole_offset()
        top = self.tc + off + shift + [self.j(), self.j(), 0.0]
        top[2] = min(self.tc[2] + tube + 8, self.zmax)
        hole = self.tc + off + shift
        below = self.tc + off + shift
        below[2] = self.tc[2] - tube - 2
        return [top, hole, below]

    def anterior_pass(self):
        gap = self.rng.uniform(4.0, 8.0)
        x = self.b1[0] + self.j(1.5)
        y = self.b1[1] + self.r1[1] + gap
        return [np.array([x, y, self.b1[2]]),
                np.array([x + self.j(0.5), y + self.j(0.5), self.b1[2] - self.r1[2] - 2])]

    def posterior_pass(self):
        gap = self.rng.uniform(4.0, 6.0)
        x = self.b1[0] + self.j(1.5)
        y = self.b1[1] - self.r1[1] - gap
        return [np.array([x, y, self.b1[2]]),
                np.array([x, y + self.j(0.5), self.b1[2] - self.r1[2] - 2])]

    def behind_obturator(self):
        gap = self.rng.uniform(3.0, 6.0)
        x = self.b2[0] + self.j(1.5)
        y = self.b2[1] - self.r2[1] - gap
        return [np.array([x, y, self.b2[2] + self.r2[2] + 2]),
                np.array([x + self.j(0.5), y + self.j(0.5), max(self.b2[2] - self.r2[2] - 2, 1.0)])]

    def positive(self):
        return self.descent() + self.anterior_pass() + self.behind_obturator()

    def miss_hole(self):
        side = 1.0 if self.rng.uniform() < 0.5 else -1.0
        big, tube = self.s.torus_radii
        shift = np.array([side * (big + tube + 3.0), 0.0, 0.0])
        return self.descent(shift) + self.anterior_pass() + self.behind_obturator()

    def wrong_side(self):
        return self.descent() + self.posterior_pass() + self.behind_obturator()

    def reversed_order(self):
        # visit the anterior zone first, then climb back over and thread the hole
        front = self.anterior_pass()
        start = front[0].copy()
        start[2] = self.b1[2] + self.r1[2] + 4
        up = front[0].copy()
        up[2] = min(self.tc[2] + self.s.torus_radii[1] + 6, self.zmax)
        over = self.tc + [self.j(), self.j(), 0.0]
        over[2] = up[2]
        return [start, front[0], up, over] + self.descent()[1:] + self.posterior_pass() + self.behind_obturator()


def generate_fibers(spec: PhantomSpec):
    """Fibers and their ground truth rows ``(id, label, family)``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    paths = _Paths(spec, rng)
    kinds = ["positive"] * spec.n_positive + [FAMILIES[i % 3] for i in range(spec.n_decoy)]
    order = rng.permutation(len(kinds))
    fibers, truth = [], []
    for fid, k in enumerate(order, start=1):
        kind = kinds[k]
        pts = np.array(getattr(paths, kind)())
        fibers.append(Fiber(fid, pts))
        truth.append((fid, "positive" if kind == "positive" else "decoy", kind))
    return fibers, truth


def generate(spec: PhantomSpec, out_dir) -> dict:
    """Write the phantom bundle into ``out_dir`` and return the file paths."""
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = label_volume(spec)
    _, tunnel = torus_masks(spec)
    hole = FuzzyVolume(tunnel.astype(float), labels.spacing, labels.origin)
    fibers, truth = generate_fibers(spec)

    files = {
        "labels": out / "anatomy.lvol",
        "hole": out / "canal_hole.fvol",
        "fibers": out / "fibers.fib",
        "truth": out / "ground_truth.tsv",
        "scene": out / "phantom.scene",
        "query": out / "phantom.fq",
    }
    save_volume(labels, files["labels"])
    save_volume(hole, files["hole"])
    save_fibers(fibers, files["fibers"])
    lines = ["fiber_id\tlabel\tfamily"] + [f"{i}\t{lab}\t{fam}" for i, lab, fam in truth]
    files["truth"].write_text("\n".join(lines) + "\n", encoding="ascii")
    structures = [(name, "labels", files["labels"].name, label) for name, label in LABELS.items()]
    files["scene"].write_text(format_scene(
        structures,
        holes=[("VertebralCanal", files["hole"].name)],
        defaults=[("tnorm", "lukasiewicz"), ("threshold", "0.5"), ("aggregation", "sup"),
                  ("combiner", "min"), ("aperture", "90"), ("margin", "2"),
                  ("resample_step", "1"), ("orientation", "z descending")],
    ), encoding="ascii")
    files["query"].write_text(QUERY_TEXT, encoding="ascii")
    return files


def read_truth(path) -> dict:
    rows = {}
    with open(path, encoding="ascii") as fh:
        next(fh)
        for line in fh:
            fid, label, family = line.rstrip("\n").split("\t")
            rows[int(fid)] = (label, family)
    return rows
