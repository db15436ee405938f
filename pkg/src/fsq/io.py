"""Volume (.fvol/.lvol), fiber (.fib) and score (.tsv) files.

Volume header, one item per line::

    FVOL 1 | LVOL 1
    dims nx ny nz
    spacing sx sy sz
    origin ox oy oz
    data ascii | binary-le-f32 | binary-le-f64 | binary-le-u16

followed by the payload in x-fastest order.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .fibers import Fiber, FiberSet
from .volume import FuzzyVolume, LabelVolume

FUZZY_ENCODINGS = {"ascii": None, "binary-le-f32": "<f4", "binary-le-f64": "<f8"}
LABEL_ENCODINGS = {"ascii": None, "binary-le-u16": "<u2"}


class FormatError(ValueError):
    def __init__(self, path, message, line=None, offset=None):
        where = str(path)
        if line is not None:
            where += f":{line}"
        if offset is not None:
            where += f" (byte offset {offset})"
        super().__init__(f"{where}: {message}")


def _fmt(v: float) -> str:
    return repr(float(v))


def save_volume(v, path, encoding: str | None = None) -> None:
    """Write a FuzzyVolume or LabelVolume; binary encodings by default."""
    path = Path(path)
    fuzzy = isinstance(v, FuzzyVolume)
    if encoding is None:
        encoding = "binary-le-f32" if fuzzy else "binary-le-u16"
    table = FUZZY_ENCODINGS if fuzzy else LABEL_ENCODINGS
    if encoding not in table:
        raise ValueError(f"encoding {encoding!r} not valid for {'FVOL' if fuzzy else 'LVOL'}")
    header = "\n".join([
        "FVOL 1" if fuzzy else "LVOL 1",
        "dims " + " ".join(str(n) for n in v.dims),
        "spacing " + " ".join(_fmt(s) for s in v.spacing),
        "origin " + " ".join(_fmt(o) for o in v.origin),
        "data " + encoding,
    ]) + "\n"
    flat = np.asarray(v.values).ravel(order="F")
    if encoding == "ascii":
        body = "\n".join(_fmt(x) if fuzzy else str(int(x)) for x in flat) + "\n"
        payload = body.encode("ascii")
    else:
        if not fuzzy and flat.size and flat.max() > 0xFFFF:
            raise ValueError("label values exceed the u16 range")
        payload = flat.astype(table[encoding]).tobytes()
    _atomic_write(path, header.encode("ascii") + payload)


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _header_triple(path, line_no, line, key, cast):
    parts = line.split()
    if len(parts) != 4 or parts[0] != key:
        raise FormatError(path, f"expected '{key} a b c', got {line!r}", line_no)
    try:
        return tuple(cast(p) for p in parts[1:])
    except ValueError:
        raise FormatError(path, f"bad number in {line!r}", line_no) from None


def load_volume(path):
    """Read a .fvol or .lvol file into a FuzzyVolume or LabelVolume."""
    raw = Path(path).read_bytes()
    lines, offset = [], 0
    for _ in range(5):
        end = raw.find(b"\n", offset)
        if end < 0:
            raise FormatError(path, "truncated header", len(lines) + 1)
        lines.append(raw[offset:end].decode("ascii", errors="replace").strip())
        offset = end + 1
    magic = lines[0]
    if magic not in ("FVOL 1", "LVOL 1"):
        raise FormatError(path, f"unknown magic {magic!r}", 1)
    fuzzy = magic == "FVOL 1"
    dims = _header_triple(path, 2, lines[1], "dims", int)
    if min(dims) < 1:
        raise FormatError(path, f"dims must be positive, got {dims}", 2)
    spacing = _header_triple(path, 3, lines[2], "spacing", float)
    origin = _header_triple(path, 4, lines[3], "origin", float)
    parts = lines[4].split()
    table = FUZZY_ENCODINGS if fuzzy else LABEL_ENCODINGS
    if len(parts) != 2 or parts[0] != "data" or parts[1] not in table:
        raise FormatError(path, f"bad data line {lines[4]!r}", 5)
    encoding = parts[1]
    count = int(np.prod(dims))
    if encoding == "ascii":
        text = raw[offset:].decode("ascii", errors="replace")
        tokens = text.split()
        if len(tokens) != count:
            raise FormatError(path, f"expected {count} values, found {len(tokens)}", 6)
        try:
            flat = np.array([float(t) for t in tokens]) if fuzzy else np.array([int(t) for t in tokens])
        except ValueError as exc:
            raise FormatError(path, f"bad value in payload: {exc}", 6) from None
    else:
        dtype = np.dtype(table[encoding])
        need = count * dtype.itemsize
        have = len(raw) - offset
        if have != need:
            raise FormatError(path, f"payload size mismatch: expected {need} bytes, got {have}",
                              offset=offset + min(have, need))
        flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).astype(
            np.float64 if fuzzy else np.int64)
    values = flat.reshape(dims, order="F")
    if fuzzy:
        bad = np.flatnonzero(~((flat >= 0.0) & (flat <= 1.0)))
        if len(bad):
            where = {"line": 6 + int(bad[0])} if encoding == "ascii" else {
                "offset": offset + int(bad[0]) * np.dtype(table[encoding]).itemsize}
            raise FormatError(path, f"value {flat[bad[0]]!r} outside [0, 1]", **where)
        return FuzzyVolume(values, spacing, origin)
    return LabelVolume(values, spacing, origin)


# -- fibers -------------------------------------------------------------------------

def iter_fibers(path):
    """Stream fibers from a .fib file, validating as it goes."""
    seen = set()
    with open(path, encoding="ascii") as fh:
        first = fh.readline().strip()
        if first != "FIB 1":
            raise FormatError(path, f"expected 'FIB 1', got {first!r}", 1)
        line_no = 1
        while True:
            line = fh.readline()
            line_no += 1
            if not line:
                return
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] != "FIBER":
                raise FormatError(path, f"expected 'FIBER <id> <npoints>', got {line.strip()!r}", line_no)
            try:
                fid, npts = int(parts[1]), int(parts[2])
            except ValueError:
                raise FormatError(path, f"bad fiber header {line.strip()!r}", line_no) from None
            if npts < 2:
                raise FormatError(path, f"fiber {fid} has {npts} point(s); at least 2 required", line_no)
            if fid in seen:
                raise FormatError(path, f"duplicate fiber id {fid}", line_no)
            seen.add(fid)
            pts = np.empty((npts, 3))
            for i in range(npts):
                line = fh.readline()
                line_no += 1
                coords = line.split()
                if len(coords) != 3:
                    raise FormatError(path, f"expected 'x y z', got {line.strip()!r}", line_no)
                try:
                    pts[i] = [float(c) for c in coords]
                except ValueError:
                    raise FormatError(path, f"bad coordinate in {line.strip()!r}", line_no) from None
            yield Fiber(fid, pts)


def load_fibers(path) -> FiberSet:
    return FiberSet(iter_fibers(path))


class FiberWriter:
    """Incremental .fib writer; the file appears atomically on close."""

    def __init__(self, path):
        self.path = Path(path)
        self._tmp = self.path.with_name(f".{self.path.name}.{os.getpid()}.tmp")
        self._fh = open(self._tmp, "w", encoding="ascii", newline="\n")
        self._fh.write("FIB 1\n")
        self.count = 0

    def write(self, f: Fiber) -> None:
        self._fh.write(f"FIBER {f.id} {len(f.points)}\n")
        self._fh.writelines(f"{x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in f.points)
        self.count += 1

    def close(self) -> None:
        self._fh.close()
        os.replace(self._tmp, self.path)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, *exc):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
            self._tmp.unlink(missing_ok=True)


def save_fibers(fs, path) -> None:
    with FiberWriter(path) as w:
        for f in fs:
            w.write(f)


# -- scores -------------------------------------------------------------------------

SCORES_HEADER = "fiber_id\tdegree\taccepted\tclause_degrees"


def format_score_row(r) -> str:
    clauses = ",".join(f"{d:.6f}" for d in r.clause_degrees)
    return f"{r.fiber_id}\t{r.degree:.6f}\t{int(r.accepted)}\t{clauses}"


def read_scores(path) -> list:
    """Parse a scores table back into dicts (for tests and reports)."""
    rows = []
    with open(path, encoding="ascii") as fh:
        header = fh.readline().rstrip("\n")
        if header != SCORES_HEADER:
            raise FormatError(path, f"unexpected header {header!r}", 1)
        for line in fh:
            fid, deg, acc, clauses = line.rstrip("\n").split("\t")
            rows.append({
                "fiber_id": int(fid),
                "degree": float(deg),
                "accepted": acc == "1",
                "clause_degrees": [float(c) for c in clauses.split(",")] if clauses else [],
            })
    return rows
