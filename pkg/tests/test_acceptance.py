"""The nine acceptance criteria, each at its stated tolerance and time budget."""

import math
import subprocess
import sys
import time
from importlib import resources

import numpy as np

from fsq.engine import EvalConfig, evaluate_samples, evaluate_samples_bruteforce, evaluate_set, resolve
from fsq.io import load_fibers
from fsq.lang import dump_ast, format_query, load_query, parse_query_text
from fsq.lattice import TNorm, conj, residuum
from fsq.phantom import read_truth
from fsq.scene import load_scene
from fsq.relations import (
    DirectionSpec,
    RelationParams,
    cone_membership,
    crossing_landscape,
    directional_dilation,
    directional_landscape,
)
from fsq.volume import (
    FuzzyVolume,
    StructuringElement,
    dilate,
    dilate_bruteforce,
    distance_bruteforce,
    distance_transform,
)
from oracles import all_triples
from test_engine import random_instance
from test_relations import ring_mask


def test_c1_adjointness(criterion):
    start = time.perf_counter()
    bad = 0
    for t in TNorm:
        bad += sum((conj(a, b, t) <= g) != (a <= residuum(b, g, t)) for a, b, g in all_triples(0.05))
    took = time.perf_counter() - start
    ok = bad == 0 and took < 5
    assert criterion(1, ok, f"adjointness on 0.05 grid, {bad} violations, {took:.2f} s")


def test_c2_dilation_oracle(criterion):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        dims = tuple(int(n) for n in rng.integers(1, 17, size=3))
        vals = rng.uniform(size=dims) * (rng.uniform(size=dims) < rng.uniform(0.05, 0.6))
        se_dims = tuple(int(n) for n in rng.integers(1, 6, size=3))
        se_vals = rng.uniform(size=se_dims) * (rng.uniform(size=se_dims) < 0.7)
        center = tuple(int(rng.integers(0, n)) for n in se_dims)
        se_vals[center] = 1.0
        se = StructuringElement.from_array(se_vals, center)
        t = list(TNorm)[int(rng.integers(3))]
        mu = FuzzyVolume(vals)
        err = np.max(np.abs(dilate(mu, se, t).values - dilate_bruteforce(mu, se, t).values))
        worst = max(worst, float(err))
    took = time.perf_counter() - start
    ok = worst <= 1e-12 and took < 60
    assert criterion(2, ok, f"dilation vs brute force, max error {worst:.3g}, {took:.2f} s")


def test_c3_distance_oracle(criterion):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(50):
        dims = tuple(int(n) for n in rng.integers(1, 13, size=3))
        ones = rng.uniform(size=dims) < rng.uniform(0.3, 0.95)
        ones.flat[0], ones.flat[-1] = False, True
        if ones.size == 1:
            ones = np.array([[[True], [False]]])
        spacing = tuple(float(s) for s in rng.choice([0.5, 0.8, 1.0, 1.3], size=3))
        mask = FuzzyVolume(ones.astype(float), spacing)
        mismatches += int(not np.array_equal(distance_transform(mask), distance_bruteforce(mask)))
    took = time.perf_counter() - start
    ok = mismatches == 0 and took < 30
    assert criterion(3, ok, f"distance transform exact match, {mismatches} of 50 differ, {took:.2f} s")


def _region_pair(rng):
    inner = rng.uniform(size=(3, 3, 3)) * (rng.uniform(size=(3, 3, 3)) < 0.6)
    inner[1, 1, 1] = 1.0
    a, b = np.zeros((12, 12, 12)), np.zeros((12, 12, 12))
    a[2:5, 2:5, 2:5] = inner
    b[4:7, 3:6, 2:5] = inner
    return FuzzyVolume(a), FuzzyVolume(b)


def test_c4_directional(criterion):
    rng = np.random.default_rng(4)
    cov_err = 0.0
    mono_bad = 0
    for i in range(20):
        t = list(TNorm)[i % 3]
        d = DirectionSpec.toward(rng.normal(size=3), aperture=float(rng.uniform(0.3, math.pi)))
        p = RelationParams(contour_margin_mm=float(rng.uniform(0, 2)))
        a, b = _region_pair(rng)
        la = directional_landscape(a, d, p, t).values
        lb = directional_landscape(b, d, p, t).values
        cov_err = max(cov_err, float(np.max(np.abs(la[:-2, :-1, :] - lb[2:, 1:, :]))))

        small = rng.uniform(size=(8, 8, 8)) * (rng.uniform(size=(8, 8, 8)) < 0.1)
        big = np.maximum(small, rng.uniform(size=(8, 8, 8)) * (rng.uniform(size=(8, 8, 8)) < 0.1))
        d1 = directional_dilation(FuzzyVolume(small), d, t).values
        d2 = directional_dilation(FuzzyVolume(big), d, t).values
        p0 = RelationParams(contour_margin_mm=0.0)
        l1 = directional_landscape(FuzzyVolume(small), d, p0, t).values
        l2 = directional_landscape(FuzzyVolume(big), d, p0, t).values
        outside = big < 0.5
        mono_bad += int(np.sum(d1 > d2)) + int(np.sum(l1[outside] > l2[outside]))

    vals = np.zeros((11, 11, 11))
    apex = (5, 3, 6)
    vals[apex] = 1.0
    region = FuzzyVolume(vals, spacing=(1.0, 0.8, 1.3))
    d = DirectionSpec((0.0, 1.0, 0.0), aperture=math.pi / 2)
    land = directional_landscape(region, d, RelationParams(contour_margin_mm=0.0)).values
    cone_err = max(abs(land[k] - cone_membership(region.index_to_world(k) - region.index_to_world(apex), d))
                   for k in np.ndindex(*region.dims))
    ok = cov_err <= 1e-12 and mono_bad == 0 and cone_err <= 1e-9
    assert criterion(4, ok, f"translation error {cov_err:.3g}, monotonicity violations {mono_bad}, "
                            f"point-cone error {cone_err:.3g}")


def test_c5_crossing_ring(criterion):
    inner = 5.0
    mask, r = ring_mask(41, inner, 7.0)
    land = crossing_landscape(mask).values[:, :, 0]
    center = land[20, 20]
    rim = land[(r >= inner) & (r <= 7.0)]
    hole = r < inner
    # every pair (p, q) in the hole with r_p < r_q but land_p < land_q is a violation
    rs, ls = r[hole], land[hole]
    order = np.argsort(rs, kind="stable")
    rs, ls = rs[order], ls[order]
    later_max = np.maximum.accumulate(ls[::-1])[::-1]
    nxt = np.append(later_max[1:], -np.inf)
    viol = ls < nxt
    # equal radii count as ordered too, which only makes the check stricter
    viol_r = rs[viol]
    outside_band = int(np.sum(viol_r <= inner - 1.0))
    ok = center == 1.0 and land.max() == 1.0 and np.all(rim == 0.0) and outside_band == 0
    assert criterion(5, ok, f"ring crossing: center {center:g}, rim max {rim.max():g}, "
                            f"{int(viol.sum())} monotonicity violations, {outside_band} outside the rim band")


def test_c6_dp_enumeration(criterion):
    rng = np.random.default_rng(6)
    configs = [EvalConfig(), EvalConfig(aggregation="mean"), EvalConfig(combiner="tnorm")]
    start = time.perf_counter()
    worst, decisions = 0.0, 0
    for i in range(200):
        config = configs[i % 3]
        clauses, samples, n = random_instance(rng, quantize=i % 2 == 0)
        d1, _, _ = evaluate_samples(clauses, samples, n, config)
        d2, _, _ = evaluate_samples_bruteforce(clauses, samples, n, config)
        worst = max(worst, abs(d1 - d2))
        decisions += int((d1 >= config.threshold) != (d2 >= config.threshold))
    took = time.perf_counter() - start
    ok = worst <= 1e-12 and decisions == 0 and took < 30
    assert criterion(6, ok, f"DP vs enumeration on 200 instances, max error {worst:.3g}, "
                            f"{decisions} decision mismatches, {took:.2f} s")


def test_c7_phantom(criterion, phantom_dir):
    start = time.perf_counter()
    q = resolve(load_query(phantom_dir / "phantom.fq"), load_scene(phantom_dir / "phantom.scene"))
    fibers = load_fibers(phantom_dir / "fibers.fib")
    results = evaluate_set(q, fibers)
    took = time.perf_counter() - start
    truth = read_truth(phantom_dir / "ground_truth.tsv")
    pos = [r for f, r in zip(fibers, results) if truth[f.id][0] == "positive"]
    dec = [r for f, r in zip(fibers, results) if truth[f.id][0] == "decoy"]
    tp = sum(r.accepted for r in pos)
    fp = sum(r.accepted for r in dec)
    margin = min(r.degree for r in pos) - max(r.degree for r in dec)
    ok = (len(fibers) == 50 and q.config.threshold == 0.5 and tp == len(pos) and fp == 0
          and margin > 0 and took < 120)
    assert criterion(7, ok, f"phantom: {tp}/{len(pos)} positives accepted, {fp}/{len(dec)} decoys accepted, "
                            f"margin {margin:.4f}, {took:.2f} s")


def _filter(ph, out, *extra):
    out.mkdir()
    cmd = [sys.executable, "-m", "fsq", "filter", "--scene", str(ph / "phantom.scene"),
           "--query", str(ph / "phantom.fq"), "--fibers", str(ph / "fibers.fib"),
           "--out", str(out / "kept.fib"), "--scores", str(out / "scores.tsv"), *map(str, extra)]
    subprocess.run(cmd, check=True, capture_output=True)
    return (out / "scores.tsv").read_bytes(), (out / "kept.fib").read_bytes()


def test_c8_determinism(criterion, phantom_dir, tmp_path):
    cache = tmp_path / "cache"
    one = _filter(phantom_dir, tmp_path / "j1", "--jobs", 1, "--no-cache")
    eight = _filter(phantom_dir, tmp_path / "j8", "--jobs", 8, "--no-cache")
    cold = _filter(phantom_dir, tmp_path / "cold", "--cache-dir", cache)
    warm = _filter(phantom_dir, tmp_path / "warm", "--cache-dir", cache, "--jobs", 8)
    jobs_same = one == eight
    cache_same = one == cold == warm
    ok = jobs_same and cache_same
    assert criterion(8, ok, f"jobs 1 vs 8 identical: {jobs_same}, cache off/cold/warm identical: {cache_same}")


def test_c9_corpus(criterion):
    counts, stable = [], True
    for name in ("L5", "S1", "S2", "S3"):
        path = resources.files("fsq") / "queries" / f"{name}.fq"
        q = load_query(path)
        counts.append(len(q.clauses))
        proc = subprocess.run([sys.executable, "-m", "fsq", "parse", "--dump-ast", str(path)],
                              check=True, capture_output=True, text=True)
        again = parse_query_text(format_query(q))
        stable &= proc.stdout == dump_ast(q) == dump_ast(again) and again == q
    ok = counts == [9, 9, 9, 9] and stable
    assert criterion(9, ok, f"corpus clause counts {counts}, dump-ast round trip stable: {stable}")
