"""Fuzzy spatial queries over nerve fiber tracts.

Anatomical structures are fuzzy volumes; spatial relations to them become
fuzzy landscapes; a query is a sequence of relation clauses that a fiber
must satisfy along its length, scored in a residuated lattice.
"""

from .engine import EvalConfig, FiberResult, evaluate_fiber, evaluate_set, resolve
from .fibers import Fiber, FiberSet, SegmentWindow, orient, resample
from .io import load_fibers, load_volume, save_fibers, save_volume
from .lang import QueryError, dump_ast, format_query, load_query, parse, parse_query_text
from .lattice import DEFAULT_TNORM, TNorm, conj, neg_involutive, neg_residuated, residuum
from .relations import DirectionSpec, Frame, RelationParams, TriangularQuantifier
from .scene import Scene, SceneError, load_scene
from .volume import FuzzyVolume, LabelVolume, StructuringElement, dilate, distance_transform

__all__ = [
    "EvalConfig", "FiberResult", "evaluate_fiber", "evaluate_set", "resolve", "Fiber",
    "FiberSet", "SegmentWindow", "orient", "resample", "load_fibers", "load_volume",
    "save_fibers", "save_volume", "QueryError", "dump_ast", "format_query", "load_query",
    "parse", "parse_query_text", "DEFAULT_TNORM", "TNorm", "conj", "neg_involutive",
    "neg_residuated", "residuum", "DirectionSpec", "Frame", "RelationParams",
    "TriangularQuantifier", "Scene", "SceneError", "load_scene", "FuzzyVolume", "LabelVolume",
    "StructuringElement", "dilate", "distance_transform",
]

__version__ = "0.1.0"
