"""Query evaluation over fibers.

Each "then" clause is matched to its own contiguous window of fiber points.
Windows must appear in clause order without overlapping, and gaps between
them are allowed.  A fiber's degree is the best assignment of windows,
scored by combining clause degrees (min by default).  It is computed by a
DP over (clause, window end).
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fibers import Fiber, SegmentWindow, orient, resample, sample_fiber
from .lang import And, Atom, Not, Query
from .lattice import DEFAULT_TNORM, TNorm
from .relations import TriangularQuantifier, connected_degree
from .volume import FuzzyVolume

log = logging.getLogger(__name__)

BRUTEFORCE_MAX_POINTS = 14
BRUTEFORCE_MAX_CLAUSES = 4


@dataclass(frozen=True)
class EvalConfig:
    threshold: float = 0.5
    aggregation: str = "sup"
    combiner: str = "min"
    tnorm: TNorm = DEFAULT_TNORM
    per_clause_threshold: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.aggregation not in ("sup", "mean"):
            raise ValueError(f"aggregation must be sup or mean, got {self.aggregation!r}")
        if self.combiner not in ("min", "tnorm"):
            raise ValueError(f"combiner must be min or tnorm, got {self.combiner!r}")
        object.__setattr__(self, "tnorm", TNorm.parse(self.tnorm))

    def combine(self, a, b):
        if self.combiner == "min":
            return np.minimum(a, b)
        return self.tnorm.apply(a, b)

    def combine_masked(self, a, b):
        # -inf marks an impossible placement and must survive any combiner.
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        out = np.full(a.shape, -np.inf)
        ok = (a >= 0) & (b >= 0)
        out[ok] = self.combine(a[ok], b[ok])
        return out


@dataclass(frozen=True, eq=False)
class EndpointBinding:
    """connected_about(S, n=, w=): a per-fiber count of endpoints inside S."""

    region: FuzzyVolume
    quantifier: TriangularQuantifier


@dataclass(frozen=True, eq=False)
class ResolvedQuery:
    query: Query
    bindings: dict  # Atom -> FuzzyVolume | EndpointBinding
    config: EvalConfig = field(default_factory=EvalConfig)
    step_mm: float = 1.0
    orient_axis: str = "z"
    orient_sense: str = "descending"

    @property
    def clauses(self):
        return self.query.clauses


@dataclass
class FiberResult:
    fiber_id: int
    degree: float
    accepted: bool
    windows: list
    clause_degrees: list


# -- clause degrees -------------------------------------------------------------------

def clause_degree(clause, samples: dict, w: SegmentWindow, aggregation: str = "sup") -> float:
    """Degree of one clause on one window, straight from the definition."""
    if isinstance(clause, Atom):
        vals = np.asarray(samples[clause])[w.start:w.end + 1]
        return float(vals.max() if aggregation == "sup" else vals.mean())
    if isinstance(clause, Not):
        return 1.0 - clause_degree(clause.child, samples, w, aggregation)
    left = clause_degree(clause.left, samples, w, aggregation)
    right = clause_degree(clause.right, samples, w, aggregation)
    return min(left, right) if isinstance(clause, And) else max(left, right)


def _atom_windows(s: np.ndarray, aggregation: str) -> np.ndarray:
    # W[i, j] = aggregate of s[i..j] for i <= j; lower triangle is unused.
    n = len(s)
    out = np.zeros((n, n))
    for i in range(n):
        if aggregation == "sup":
            out[i, i:] = np.maximum.accumulate(s[i:])
        else:
            out[i, i:] = np.cumsum(s[i:]) / np.arange(1, n - i + 1)
    return out


def window_degrees(clause, samples: dict, aggregation: str = "sup", _memo=None) -> np.ndarray:
    """Clause degree for every window at once, as an (n, n) upper-triangular matrix."""
    memo = {} if _memo is None else _memo
    if isinstance(clause, Atom):
        if clause not in memo:
            memo[clause] = _atom_windows(np.asarray(samples[clause], dtype=float), aggregation)
        return memo[clause]
    if isinstance(clause, Not):
        return 1.0 - window_degrees(clause.child, samples, aggregation, memo)
    left = window_degrees(clause.left, samples, aggregation, memo)
    right = window_degrees(clause.right, samples, aggregation, memo)
    return np.minimum(left, right) if isinstance(clause, And) else np.maximum(left, right)


def _clause_tables(clauses, samples, config, n):
    memo = {}
    valid = np.triu(np.ones((n, n), dtype=bool))
    tables = []
    for c in clauses:
        d = window_degrees(c, samples, config.aggregation, memo)
        if config.per_clause_threshold is not None:
            d = (d >= config.per_clause_threshold).astype(float)
        tables.append(np.where(valid, d, -np.inf))
    return tables


# -- DP ------------------------------------------------------------------------------

def evaluate_samples(clauses, samples: dict, n: int, config: EvalConfig = EvalConfig()):
    """Best ordered window assignment for pre-sampled degrees.

    Returns ``(degree, windows, clause_degrees)``; windows is empty when the
    fiber has fewer points than there are clauses.
    """
    m = len(clauses)
    if n < m:
        return 0.0, [], []
    tables = _clause_tables(clauses, samples, config, n)
    comb = config.combine_masked

    # forward: best[e] = best fold of clauses 0..j with clause j's window ending at e
    prefix = np.ones(n)  # prefix[s]: best fold of earlier clauses ending before s
    best = None
    for j, d in enumerate(tables):
        cand = comb(d, prefix[:, None])
        best = cand.max(axis=0)
        prefix = np.concatenate([[-np.inf], np.maximum.accumulate(best)[:-1]])
    degree = float(max(best.max(), 0.0))

    # backward: suffix[j][s] = best fold of clauses j.. with every start >= s
    suffix = [None] * (m + 1)
    suffix[m] = np.ones(n + 1)
    for j in range(m - 1, -1, -1):
        cand = comb(tables[j], suffix[j + 1][1:][None, :])
        row_best = cand.max(axis=1)
        suffix[j] = np.concatenate([np.maximum.accumulate(row_best[::-1])[::-1], [-np.inf]])

    # lexicographically earliest assignment that still reaches the optimum
    tol = 0.0 if config.combiner == "min" else 1e-12
    acc, prev_end = 1.0, -1
    windows, degrees = [], []
    for j in range(m):
        cand = comb(acc, comb(tables[j], suffix[j + 1][1:][None, :]))
        cand[: prev_end + 1, :] = -np.inf
        a, e = np.argwhere(cand >= degree - tol)[0]
        windows.append(SegmentWindow(int(a), int(e)))
        degrees.append(float(tables[j][a, e]))
        acc = float(comb(acc, tables[j][a, e]))
        prev_end = int(e)
    return degree, windows, degrees


def evaluate_samples_bruteforce(clauses, samples: dict, n: int, config: EvalConfig = EvalConfig()):
    """Exhaustive enumeration of ordered non-overlapping window assignments."""
    m = len(clauses)
    if n > BRUTEFORCE_MAX_POINTS or m > BRUTEFORCE_MAX_CLAUSES:
        raise ValueError(
            f"brute force limited to {BRUTEFORCE_MAX_POINTS} points and "
            f"{BRUTEFORCE_MAX_CLAUSES} clauses, got {n} and {m}")
    if n < m:
        return 0.0, [], []
    all_windows = [SegmentWindow(a, e) for a in range(n) for e in range(a, n)]
    scores = []
    for c in clauses:
        row = {}
        for w in all_windows:
            v = clause_degree(c, samples, w, config.aggregation)
            if config.per_clause_threshold is not None:
                v = 1.0 if v >= config.per_clause_threshold else 0.0
            row[w] = v
        scores.append(row)

    best, best_ws = -1.0, None

    def rec(j, after, acc, chosen):
        nonlocal best, best_ws
        if j == m:
            if acc > best:
                best, best_ws = acc, list(chosen)
            return
        for w in all_windows:
            if w.start > after:
                chosen.append(w)
                rec(j + 1, w.end, float(config.combine(acc, scores[j][w])) if j else scores[j][w], chosen)
                chosen.pop()

    rec(0, -1, 1.0, [])
    return best, best_ws, [scores[j][w] for j, w in enumerate(best_ws)]


# -- fibers -------------------------------------------------------------------------

def prepare_fiber(q: ResolvedQuery, f: Fiber) -> Fiber:
    return resample(orient(f, q.orient_axis, q.orient_sense), q.step_mm)


def sample_atoms(q: ResolvedQuery, f: Fiber) -> dict:
    samples = {}
    for atom, binding in q.bindings.items():
        if isinstance(binding, EndpointBinding):
            deg = connected_degree(f.endpoints, binding.region, binding.quantifier)
            samples[atom] = np.full(len(f), deg)
        else:
            samples[atom] = sample_fiber(f, binding)
    return samples


def _result(fid, q, degree, windows, degrees) -> FiberResult:
    return FiberResult(fid, degree, degree >= q.config.threshold, windows, degrees)


def evaluate_fiber(q: ResolvedQuery, f: Fiber) -> FiberResult:
    """Score an oriented, resampled fiber against the query."""
    samples = sample_atoms(q, f)
    return _result(f.id, q, *evaluate_samples(q.clauses, samples, len(f), q.config))


def evaluate_fiber_bruteforce(q: ResolvedQuery, f: Fiber) -> FiberResult:
    samples = sample_atoms(q, f)
    return _result(f.id, q, *evaluate_samples_bruteforce(q.clauses, samples, len(f), q.config))


_WORKER_QUERY = None


def _init_worker(q):
    global _WORKER_QUERY
    _WORKER_QUERY = q


def _eval_raw(f: Fiber) -> FiberResult:
    return evaluate_fiber(_WORKER_QUERY, prepare_fiber(_WORKER_QUERY, f))


def iter_results(q: ResolvedQuery, fibers, jobs: int = 1, chunk: int = 256):
    """Evaluate raw fibers lazily, yielding ``(fiber, result)`` in input order.

    Only ``chunk * jobs`` fibers are held at a time.
    """
    if jobs <= 1:
        for f in fibers:
            yield f, evaluate_fiber(q, prepare_fiber(q, f))
        return
    it = iter(fibers)
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(q,)) as pool:
        while True:
            batch = list(itertools.islice(it, chunk * jobs))
            if not batch:
                break
            results = pool.map(_eval_raw, batch, chunksize=max(1, len(batch) // (jobs * 4)))
            yield from zip(batch, results)


def evaluate_set(q: ResolvedQuery, fs, jobs: int = 1) -> list:
    """Orient, resample and score every fiber; results follow input order."""
    return [r for _, r in iter_results(q, fs, jobs)]


# -- name resolution ------------------------------------------------------------------

def atom_params(atom: Atom, base):
    """Scene defaults with the atom's own numeric overrides applied."""
    changes = {}
    if atom.param("aperture") is not None:
        changes["aperture"] = atom.param("aperture") * math.pi / 180.0
    if atom.param("margin") is not None:
        changes["contour_margin_mm"] = atom.param("margin")
    if atom.param("radius") is not None:
        changes["closing_radius_mm"] = atom.param("radius")
    if atom.param("d_in") is not None or atom.param("d_out") is not None:
        d_in, d_out = base.near_band_mm
        changes["near_band_mm"] = (atom.param("d_in", d_in), atom.param("d_out", d_out))
    return base.updated(**changes) if changes else base


def resolve(ast: Query, scene, threshold: float | None = None, cache=None, jobs: int = 1) -> ResolvedQuery:
    """Bind every atom of ``ast`` to a landscape (or endpoint counter) from ``scene``.

    Precedence for the threshold is: explicit argument, query ``@threshold``,
    scene default.
    """
    d = scene.defaults
    directives = ast.directives
    config = EvalConfig(
        threshold=threshold if threshold is not None else directives.get("threshold", d.threshold),
        aggregation=directives.get("aggregation", d.params.aggregation),
        combiner=directives.get("combiner", d.combiner),
        tnorm=d.tnorm,
        per_clause_threshold=directives.get("per_clause_threshold", d.per_clause_threshold),
    )
    atoms = ast.atoms()
    for atom in atoms:
        for name in atom.args:
            scene.require(name)

    bindings = {}
    jobs_list = []
    for atom in atoms:
        if atom.relation == "connected_about":
            q = TriangularQuantifier(atom.param("n"), atom.param("w"))
            bindings[atom] = EndpointBinding(scene.volume(atom.args[0]), q)
        else:
            jobs_list.append(atom)

    # One landscape per (relation, structures, params); duplicates share it.
    unique = {}
    for atom in jobs_list:
        unique.setdefault((atom.relation, atom.args, atom_params(atom, d.params)), []).append(atom)

    def build(key):
        rel, names, params = key
        vol, _ = scene.landscape(rel, list(names), params, d.tnorm, cache)
        return vol

    keys = list(unique)
    for name in {n for k in keys for n in k[1]}:
        scene.volume(name)  # load serially; landscapes may then run in threads
        scene.hole(name)
    if jobs > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vols = list(pool.map(build, keys))
    else:
        vols = [build(k) for k in keys]
    for key, vol in zip(keys, vols):
        if vol.warning:
            log.warning("%s(%s): %s", key[0], ", ".join(key[1]), vol.warning)
        for atom in unique[key]:
            bindings[atom] = vol
    return ResolvedQuery(ast, bindings, config, d.resample_step, d.orient_axis, d.orient_sense)
