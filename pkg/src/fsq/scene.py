"""Scene files: named anatomical structures plus evaluation defaults.

A scene is line-oriented text, ``#`` comments allowed::

    frame x=left y=anterior z=superior
    structure Canal labels anatomy.lvol 1
    structure Canal hole canal_hole.fvol
    structure Muscle fuzzy muscle.fvol
    default threshold 0.5

Paths are relative to the scene file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from .cache import degrees_to_radians, landscape_key
from .io import load_volume
from .lattice import DEFAULT_TNORM, TNorm
from .relations import (
    Frame,
    LandscapeRequest,
    RelationParams,
    relation_landscape,
)
from .volume import FuzzyVolume, LabelVolume, from_label

log = logging.getLogger(__name__)


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class StructureSource:
    kind: str  # "labels" or "fuzzy"
    path: Path
    label: int | None = None


@dataclass(frozen=True)
class SceneDefaults:
    params: RelationParams = field(default_factory=RelationParams)
    tnorm: TNorm = DEFAULT_TNORM
    threshold: float = 0.5
    combiner: str = "min"
    per_clause_threshold: float | None = None
    resample_step: float = 1.0
    orient_axis: str = "z"
    orient_sense: str = "descending"
    midline: float | None = None


_PARAM_DEFAULTS = {
    "margin": ("contour_margin_mm", float),
    "aggregation": ("aggregation", str),
    "closing_radius": ("closing_radius_mm", float),
    "aperture": ("aperture", lambda s: degrees_to_radians(float(s))),
}


def _apply_default(d: SceneDefaults, key, args, where) -> SceneDefaults:
    def one():
        if len(args) != 1:
            raise SceneError(f"{where}: default {key} takes one value")
        return args[0]

    try:
        if key in _PARAM_DEFAULTS:
            attr, cast = _PARAM_DEFAULTS[key]
            return replace(d, params=d.params.updated(**{attr: cast(one())}))
        if key == "near_band":
            if len(args) != 2:
                raise SceneError(f"{where}: default near_band takes two values")
            return replace(d, params=d.params.updated(near_band_mm=(float(args[0]), float(args[1]))))
        if key == "tnorm":
            return replace(d, tnorm=TNorm.parse(one()))
        if key == "threshold":
            value = float(one())
            if not 0 <= value <= 1:
                raise SceneError(f"{where}: threshold must lie in [0, 1]")
            return replace(d, threshold=value)
        if key == "per_clause_threshold":
            return replace(d, per_clause_threshold=float(one()))
        if key == "combiner":
            if one() not in ("min", "tnorm"):
                raise SceneError(f"{where}: combiner must be min or tnorm")
            return replace(d, combiner=one())
        if key == "resample_step":
            value = float(one())
            if value <= 0:
                raise SceneError(f"{where}: resample_step must be > 0")
            return replace(d, resample_step=value)
        if key == "orientation":
            if len(args) != 2 or args[0] not in ("x", "y", "z") or args[1] not in ("ascending", "descending"):
                raise SceneError(f"{where}: orientation needs '<x|y|z> <ascending|descending>'")
            return replace(d, orient_axis=args[0], orient_sense=args[1])
        if key == "midline":
            return replace(d, midline=float(one()))
    except SceneError:
        raise
    except ValueError as exc:
        raise SceneError(f"{where}: {exc}") from None
    raise SceneError(f"{where}: unknown default {key!r}")


class Scene:
    """Structure table, world frame and defaults, with lazy volume loading."""

    def __init__(self, structures, holes=None, frame=None, defaults=None, path=None):
        self.structures = dict(structures)
        self.holes = dict(holes or {})
        self.frame = frame or Frame()
        self.defaults = defaults or SceneDefaults()
        self.path = path
        self._volumes = {}
        self._grid = None

    @classmethod
    def from_volumes(cls, volumes: dict, holes=None, **kw) -> "Scene":
        """In-memory scene, mainly for tests and library use."""
        scene = cls({name: StructureSource("memory", Path(name)) for name in volumes}, **kw)
        scene._volumes = dict(volumes)
        for name, hole in (holes or {}).items():
            scene.holes[name] = Path(f"<memory:{name}>")
            scene._volumes[("hole", name)] = hole
        return scene

    @property
    def names(self) -> list:
        return sorted(self.structures)

    def require(self, name: str) -> None:
        if name not in self.structures:
            raise SceneError(
                f"unknown structure {name!r}; available: {', '.join(self.names) or '(none)'}")

    def _load(self, path: Path):
        try:
            return load_volume(path)
        except OSError as exc:
            raise SceneError(f"cannot read {path}: {exc.strerror or exc}") from None

    def volume(self, name: str) -> FuzzyVolume:
        self.require(name)
        if name not in self._volumes:
            src = self.structures[name]
            vol = self._load(src.path)
            if src.kind == "labels":
                if not isinstance(vol, LabelVolume):
                    raise SceneError(f"{src.path}: expected a label volume for {name}")
                vol = from_label(vol, src.label)
            elif not isinstance(vol, FuzzyVolume):
                raise SceneError(f"{src.path}: expected a fuzzy volume for {name}")
            self._check_grid(name, vol)
            self._volumes[name] = vol
        return self._volumes[name]

    def hole(self, name: str) -> FuzzyVolume | None:
        if name not in self.holes:
            return None
        key = ("hole", name)
        if key not in self._volumes:
            vol = self._load(self.holes[name])
            if not isinstance(vol, FuzzyVolume):
                raise SceneError(f"{self.holes[name]}: hole mask must be a fuzzy volume")
            self._check_grid(f"{name} hole", vol)
            self._volumes[key] = vol
        return self._volumes[key]

    def _check_grid(self, name, vol):
        if self._grid is None:
            self._grid = vol
        elif not self._grid.same_geometry(vol):
            raise SceneError(f"structure {name} is on a different grid than the rest of the scene")

    def landscape(self, relation: str, names, params: RelationParams | None = None,
                  tnorm: TNorm | None = None, cache=None):
        """Landscape of ``relation`` around the named structures.

        Returns ``(volume, cache_hit)``.
        """
        params = params or self.defaults.params
        tnorm = TNorm.parse(tnorm or self.defaults.tnorm)
        vols = [self.volume(n) for n in names]
        hole = self.hole(names[0]) if relation == "crossing" else None
        req = LandscapeRequest(relation, params, tnorm, self.frame, self.defaults.midline)
        key = None
        if cache is not None:
            key = landscape_key(relation, vols, params, tnorm, self.frame, self.defaults.midline, hole)
            hit = cache.get(key)
            if hit is not None:
                return hit, True
        vol = relation_landscape(req, vols, hole)
        if cache is not None:
            cache.put(key, vol)
        return vol, False


def load_scene(path) -> Scene:
    """Parse and validate a scene file; referenced files must exist."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SceneError(f"cannot read scene {path}: {exc.strerror or exc}") from None
    base = path.parent
    structures, holes = {}, {}
    frame = None
    defaults = SceneDefaults()
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{no}"
        parts = line.split()
        head = parts[0]
        if head == "frame":
            try:
                frame = Frame.parse(" ".join(parts[1:]))
            except ValueError as exc:
                raise SceneError(f"{where}: {exc}") from None
        elif head == "structure":
            if len(parts) < 4:
                raise SceneError(f"{where}: expected 'structure <Name> <kind> <path> [label]'")
            name, kind, rel = parts[1], parts[2], parts[3]
            file = (base / rel).resolve()
            if not file.exists():
                raise SceneError(f"{where}: missing file {rel}")
            if kind == "labels":
                if len(parts) != 5:
                    raise SceneError(f"{where}: labels entries need a label id")
                try:
                    label = int(parts[4])
                except ValueError:
                    raise SceneError(f"{where}: bad label id {parts[4]!r}") from None
                if label < 1:
                    raise SceneError(f"{where}: label id must be >= 1")
                src = StructureSource("labels", file, label)
            elif kind == "fuzzy":
                if len(parts) != 4:
                    raise SceneError(f"{where}: fuzzy entries take exactly one path")
                src = StructureSource("fuzzy", file)
            elif kind == "hole":
                if len(parts) != 4:
                    raise SceneError(f"{where}: hole entries take exactly one path")
                if name in holes:
                    raise SceneError(f"{where}: duplicate hole mask for {name}")
                holes[name] = file
                continue
            else:
                raise SceneError(f"{where}: unknown structure kind {kind!r}")
            if name in structures:
                raise SceneError(f"{where}: duplicate structure name {name!r}")
            structures[name] = src
        elif head == "default":
            if len(parts) < 3:
                raise SceneError(f"{where}: expected 'default <param> <value>'")
            defaults = _apply_default(defaults, parts[1], parts[2:], where)
        else:
            raise SceneError(f"{where}: unknown directive {head!r}")
    orphans = set(holes) - set(structures)
    if orphans:
        raise SceneError(f"{path}: hole mask for undeclared structure(s) {', '.join(sorted(orphans))}")
    return Scene(structures, holes, frame, defaults, path)


def format_scene(structures, holes=(), frame=None, defaults=()) -> str:
    """Render scene text from (name, kind, path[, label]) tuples."""
    out = [f"frame {(frame or Frame()).render()}"]
    for entry in structures:
        out.append("structure " + " ".join(str(x) for x in entry))
    for name, p in holes:
        out.append(f"structure {name} hole {p}")
    for key, value in defaults:
        out.append(f"default {key} {value}")
    return "\n".join(out) + "\n"

