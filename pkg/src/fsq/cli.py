"""Command-line entry point: ``fsq parse | landscape | filter | phantom``.

Exit codes: 0 success, 1 I/O or scene errors, 2 query parse errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import ExitStack
from pathlib import Path

from . import __version__
from .cache import LandscapeCache, degrees_to_radians
from .engine import iter_results, resolve
from .io import SCORES_HEADER, FiberWriter, FormatError, format_score_row, iter_fibers, save_volume
from .lang import QueryError, dump_ast, format_query, load_query
from .phantom import PhantomSpec, generate
from .relations import RELATION_ARITY
from .scene import SceneError, load_scene
from .volume import GeometryError

log = logging.getLogger("fsq")

LANDSCAPE_RELATIONS = sorted(r for r in RELATION_ARITY if r != "connected_about")


class _Fail(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


def _cache(args):
    if getattr(args, "no_cache", False):
        return None
    return LandscapeCache.from_env(args.cache_dir)


def cmd_parse(args) -> int:
    q = load_query(args.query)
    if args.dump_ast:
        sys.stdout.write(dump_ast(q))
    else:
        sys.stdout.write(format_query(q))
        print(f"# {len(q.clauses)} clauses")
    return 0


def cmd_landscape(args) -> int:
    scene = load_scene(args.scene)
    names = args.structure
    want = RELATION_ARITY[args.relation]
    if len(names) != want:
        raise _Fail(f"relation {args.relation} takes {want} structure(s), got {len(names)}")
    for n in names:
        scene.require(n)
    changes = {}
    if args.aperture is not None:
        if not 0 < args.aperture <= 180:
            raise _Fail("--aperture must lie in (0, 180] degrees")
        changes["aperture"] = degrees_to_radians(args.aperture)
    if args.margin is not None:
        if args.margin < 0:
            raise _Fail("--margin must be >= 0")
        changes["contour_margin_mm"] = args.margin
    params = scene.defaults.params.updated(**changes)
    cache = _cache(args)
    vol, hit = scene.landscape(args.relation, names, params, cache=cache)
    if vol.warning:
        log.warning("%s(%s): %s", args.relation, ", ".join(names), vol.warning)
    save_volume(vol, args.out)
    status = "disabled" if cache is None else ("hit" if hit else "miss")
    print(f"landscape {args.relation}({', '.join(names)}) -> {args.out} [cache {status}]")
    if args.figure:
        from .plotting import landscape_slices
        landscape_slices(vol, args.figure, title=f"{args.relation}({', '.join(names)})")
        print(f"figure -> {args.figure}")
    return 0


def cmd_filter(args) -> int:
    scene = load_scene(args.scene)
    query = load_query(args.query)
    if args.threshold is not None and not 0 <= args.threshold <= 1:
        raise _Fail("--threshold must lie in [0, 1]")
    if args.jobs < 1:
        raise _Fail("--jobs must be >= 1")
    resolved = resolve(query, scene, threshold=args.threshold, cache=_cache(args), jobs=args.jobs)
    scores_path = Path(args.scores)
    tmp = scores_path.with_name(f".{scores_path.name}.{os.getpid()}.tmp")
    total = kept = 0
    degrees = []
    try:
        with ExitStack() as stack:
            writer = stack.enter_context(FiberWriter(args.out))
            scores = stack.enter_context(open(tmp, "w", encoding="ascii", newline="\n"))
            scores.write(SCORES_HEADER + "\n")
            for fiber, result in iter_results(resolved, iter_fibers(args.fibers), args.jobs):
                scores.write(format_score_row(result) + "\n")
                total += 1
                degrees.append(result.degree)
                if result.accepted:
                    writer.write(fiber)
                    kept += 1
        os.replace(tmp, scores_path)
    finally:
        if tmp.exists():
            tmp.unlink()
    print(f"accepted {kept} of {total} fibers (threshold {resolved.config.threshold:g})")
    if args.figure:
        from .plotting import degree_histogram
        degree_histogram(degrees, resolved.config.threshold, args.figure,
                         title=f"{query.name or Path(args.query).stem}: {kept} of {total} accepted")
        print(f"figure -> {args.figure}")
    return 0


def cmd_phantom(args) -> int:
    spec = PhantomSpec(seed=args.seed, n_positive=args.positives, n_decoy=args.decoys)
    try:
        files = generate(spec, args.out)
    except ValueError as exc:
        raise _Fail(f"invalid phantom: {exc}") from None
    for kind, path in files.items():
        print(f"{kind}\t{path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsq", description="Fuzzy spatial queries over fiber tracts.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("parse", help="check a query file and print it normalized")
    sp.add_argument("query")
    sp.add_argument("--dump-ast", action="store_true", help="print the syntax tree instead")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("landscape", help="compute one relation landscape")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--structure", required=True, action="append",
                    help="reference structure; give twice for between")
    sp.add_argument("--relation", required=True, choices=LANDSCAPE_RELATIONS)
    sp.add_argument("--aperture", type=float, help="cone half-angle in degrees")
    sp.add_argument("--margin", type=float, help="contour margin in mm")
    sp.add_argument("--out", required=True)
    sp.add_argument("--cache-dir", help="landscape cache (default: $FSQ_CACHE_DIR)")
    sp.add_argument("--no-cache", action="store_true")
    sp.add_argument("--figure", help="also write orthogonal slices to this image file")
    sp.set_defaults(func=cmd_landscape)

    sp = sub.add_parser("filter", help="score fibers against a query and keep the accepted ones")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--query", required=True)
    sp.add_argument("--fibers", required=True)
    sp.add_argument("--out", required=True, help="accepted fibers (.fib)")
    sp.add_argument("--scores", required=True, help="score table (.tsv)")
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--cache-dir", help="landscape cache (default: $FSQ_CACHE_DIR)")
    sp.add_argument("--no-cache", action="store_true")
    sp.add_argument("--figure", help="also write a degree histogram to this image file")
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("phantom", help="write the synthetic test bundle")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--out", required=True)
    sp.add_argument("--positives", type=int, default=PhantomSpec.n_positive)
    sp.add_argument("--decoys", type=int, default=PhantomSpec.n_decoy)
    sp.set_defaults(func=cmd_phantom)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except QueryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (SceneError, FormatError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"error: {where}{exc.strerror or exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
