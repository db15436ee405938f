import filecmp

import numpy as np
import pytest

from fsq.io import load_fibers, load_volume
from fsq.phantom import LABELS, PhantomSpec, generate, generate_fibers, read_truth, torus_masks
from fsq.volume import from_label


def test_bundle_contents(phantom_dir):
    truth = read_truth(phantom_dir / "ground_truth.tsv")
    fibers = load_fibers(phantom_dir / "fibers.fib")
    assert len(fibers) == 50 == len(truth)
    labels = [lab for lab, _ in truth.values()]
    assert labels.count("positive") == 20 and labels.count("decoy") == 30
    families = {fam for lab, fam in truth.values() if lab == "decoy"}
    assert families == {"miss_hole", "wrong_side", "reversed_order"}
    assert (phantom_dir / "phantom.fq").read_text().count("then") == 2


def test_label_volume_matches_masks(phantom_dir):
    spec = PhantomSpec()
    lv = load_volume(phantom_dir / "anatomy.lvol")
    torus, tunnel = torus_masks(spec)
    canal = from_label(lv, LABELS["VertebralCanal"])
    assert canal.values.sum() == torus.sum()
    hole = load_volume(phantom_dir / "canal_hole.fvol")
    assert hole.values.sum() == tunnel.sum()
    assert not np.any(tunnel & torus)
    for name in LABELS:
        assert from_label(lv, LABELS[name]).values.any()


def test_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    fa, fb = generate(PhantomSpec(), a), generate(PhantomSpec(), b)
    for key in fa:
        assert filecmp.cmp(fa[key], fb[key], shallow=False), key
    other = generate(PhantomSpec(seed=7), tmp_path / "c")
    assert not filecmp.cmp(fa["fibers"], other["fibers"], shallow=False)


def test_positives_near_axis():
    spec = PhantomSpec()
    fibers, truth = generate_fibers(spec)
    cx, cy, cz = spec.torus_center
    hole_radius = spec.torus_radii[0] - spec.torus_radii[1]
    for f, (_, label, _) in zip(fibers, truth):
        if label != "positive":
            continue
        # where the polyline crosses the torus plane
        z = f.points[:, 2]
        i = np.flatnonzero((z[:-1] - cz) * (z[1:] - cz) <= 0)[0]
        t = (cz - z[i]) / (z[i + 1] - z[i]) if z[i + 1] != z[i] else 0.0
        p = f.points[i] + t * (f.points[i + 1] - f.points[i])
        assert np.hypot(p[0] - cx, p[1] - cy) <= 0.2 * hole_radius


@pytest.mark.parametrize("changes", [
    {"torus_center": (2.0, 16.0, 50.0)},
    {"torus_radii": (4.0, 5.0)},
    {"blob_centers": ((20.0, 24.0, 1.0), (20.0, 24.0, 12.0))},
    {"torus_axis": "x"},
    {"n_decoy": -1},
])
def test_impossible_specs(changes, tmp_path):
    with pytest.raises(ValueError):
        generate(PhantomSpec(**changes), tmp_path)


def test_ten_thousand_fibers(tmp_path):
    spec = PhantomSpec(n_positive=4000, n_decoy=6000)
    files = generate(spec, tmp_path)
    fibers = load_fibers(files["fibers"])
    assert len(fibers) == 10000
    assert len({f.id for f in fibers}) == 10000
