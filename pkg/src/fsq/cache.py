"""Content-addressed on-disk cache of landscape volumes."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import asdict
from pathlib import Path

from .io import FormatError, load_volume, save_volume

log = logging.getLogger(__name__)

CACHE_ENV = "FSQ_CACHE_DIR"
_VERSION = b"fsq-landscape-v1"


def landscape_key(relation, volumes, params, tnorm, frame=None, midline=None, hole=None) -> str:
    """SHA-256 over the input volumes' bytes and every parameter that shapes the output."""
    h = hashlib.sha256(_VERSION)
    meta = {
        "relation": relation,
        "params": asdict(params),
        "tnorm": getattr(tnorm, "value", str(tnorm)),
        "frame": list(frame.axes) if frame is not None else None,
        "midline": midline,
    }
    h.update(json.dumps(meta, sort_keys=True, default=repr).encode())
    for v in list(volumes) + ([hole] if hole is not None else []):
        h.update(repr((v.dims, v.spacing, v.origin)).encode())
        h.update(v.values.astype("<f8").tobytes(order="F"))
    if hole is None:
        h.update(b"no-hole")
    return h.hexdigest()


class LandscapeCache:
    """Landscapes stored as float64 volumes named by their key.

    Entries are bit-identical to the computed volumes, so a run with the
    cache gives the same results as one without it.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    @classmethod
    def from_env(cls, directory=None):
        directory = directory or os.environ.get(CACHE_ENV)
        return cls(directory) if directory else None

    def path_for(self, key: str) -> Path:
        return self.directory / f"{key}.fvol"

    def get(self, key: str):
        path = self.path_for(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            vol = load_volume(path)
        except (FormatError, ValueError, OSError) as exc:
            log.warning("evicting corrupt cache entry %s: %s", path.name, exc)
            path.unlink(missing_ok=True)
            self.misses += 1
            return None
        self.hits += 1
        return vol

    def put(self, key: str, volume) -> None:
        save_volume(volume, self.path_for(key), encoding="binary-le-f64")


def degrees_to_radians(deg: float) -> float:
    return deg * math.pi / 180.0
