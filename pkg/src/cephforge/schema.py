"""Landmark schema, landmark sets and angle constraints.

Coordinates are pixels with the origin at the top-left corner, x to the right
and y downward. Landmark indices are 1-based everywhere outside of array
indexing.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CephforgeIOError, DegenerateGeometryError, SchemaError, ValidationError

N_LANDMARKS = 38
DEFAULT_CRITICAL = (2, 4, 11, 12, 17)


@dataclass(frozen=True)
class LandmarkId:
    index: int
    name: str


@dataclass(frozen=True)
class AngleConstraint:
    """Unsigned angle ray_a -> vertex -> ray_b kept inside [min_deg, max_deg].

    ``coupled`` landmarks follow ray_b when the constraint is re-targeted.
    """

    name: str
    vertex: int
    ray_a: int
    ray_b: int
    min_deg: float
    max_deg: float
    coupled: frozenset[int] = frozenset()

    def __post_init__(self):
        if not self.min_deg < self.max_deg:
            raise SchemaError(f"constraint {self.name}: min_deg {self.min_deg} must be < max_deg {self.max_deg}")
        if len({self.vertex, self.ray_a, self.ray_b}) != 3:
            raise SchemaError(f"constraint {self.name}: vertex, ray_a and ray_b must be distinct")
        if self.vertex in self.coupled or self.ray_a in self.coupled:
            raise SchemaError(f"constraint {self.name}: coupled set may not contain vertex or ray_a")

    @property
    def moved(self) -> tuple[int, ...]:
        """Indices rotated by an augmentation of this constraint, ray_b first."""
        return (self.ray_b,) + tuple(sorted(self.coupled - {self.ray_b}))


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """Immutable set of landmark points, row ``i`` holding landmark ``i + 1``."""

    points: np.ndarray
    width: int
    height: int
    spacing: float
    tags: frozenset[str] = frozenset()

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError(f"points must have shape (n, 2), got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "tags", frozenset(self.tags))

    def __len__(self):
        return len(self.points)

    def point(self, index: int) -> np.ndarray:
        return self.points[index - 1]

    def replace_points(self, points: np.ndarray) -> "LandmarkSet":
        return LandmarkSet(points, self.width, self.height, self.spacing, self.tags)

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.spacing == other.spacing
            and self.tags == other.tags
            and np.array_equal(self.points, other.points)
        )

    def __hash__(self):
        return hash((self.points.tobytes(), self.width, self.height, self.spacing, self.tags))

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "spacing_mm_per_px": self.spacing,
            "tags": sorted(self.tags),
            "points": {str(i + 1): [float(x), float(y)] for i, (x, y) in enumerate(self.points)},
        }

    @classmethod
    def from_json(cls, doc: Mapping, n_landmarks: int = N_LANDMARKS) -> "LandmarkSet":
        try:
            width = int(doc["width"])
            height = int(doc["height"])
            spacing = float(doc["spacing_mm_per_px"])
            raw = doc["points"]
        except KeyError as exc:
            raise ValidationError(f"annotation missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"annotation field has wrong type: {exc}") from None
        pts = np.full((n_landmarks, 2), np.nan)
        for key, xy in raw.items():
            idx = int(key)
            if not 1 <= idx <= n_landmarks:
                raise ValidationError(f"unknown landmark index {idx}")
            if len(xy) != 2:
                raise ValidationError(f"landmark {idx}: expected [x, y], got {xy!r}")
            pts[idx - 1] = [float(xy[0]), float(xy[1])]
        missing = [i + 1 for i in range(n_landmarks) if str(i + 1) not in raw and (i + 1) not in raw]
        if missing:
            raise ValidationError(f"missing landmark {', '.join(map(str, missing))}")
        return cls(pts, width, height, spacing, frozenset(doc.get("tags", ())))


def read_landmarks(path: str | Path, n_landmarks: int = N_LANDMARKS) -> LandmarkSet:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CephforgeIOError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return LandmarkSet.from_json(doc, n_landmarks)


def write_landmarks(ls: LandmarkSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ls.to_json(), indent=1) + "\n")


@dataclass(frozen=True)
class AnatomySchema:
    landmarks: tuple[LandmarkId, ...]
    edges: frozenset[tuple[int, int]]
    critical_centers: tuple[tuple[int, tuple[int, int, int]], ...]
    constraints: tuple[AngleConstraint, ...] = ()
    neighbor_groups: Mapping[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        idx = [lm.index for lm in self.landmarks]
        if idx != list(range(1, len(idx) + 1)):
            raise SchemaError("landmark indices must be unique and contiguous from 1")
        names = [lm.name for lm in self.landmarks]
        if len(set(names)) != len(names):
            raise SchemaError("landmark names must be unique")
        n = len(idx)
        norm = set()
        for a, b in self.edges:
            if not (1 <= a <= n and 1 <= b <= n):
                raise SchemaError(f"edge ({a}, {b}) references unknown landmark")
            if a == b:
                raise SchemaError(f"self-loop on landmark {a}")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))
        comps = _components(n, norm)
        if len(comps) > 1:
            others = sorted(min(comps[1:], key=min))
            raise SchemaError(f"graph disconnected: component {{{', '.join(map(str, others))}}} unreachable from landmark 1")
        crit = [c for c, _ in self.critical_centers]
        if not crit:
            raise SchemaError("at least one critical center required")
        if len(set(crit)) != len(crit):
            raise SchemaError("critical centers must be distinct")
        for c, rgb in self.critical_centers:
            if not 1 <= c <= n:
                raise SchemaError(f"critical center {c} is not a landmark")
            if len(rgb) != 3 or any(not 0 <= v <= 255 for v in rgb):
                raise SchemaError(f"critical center {c}: colour {rgb} outside [0, 255]^3")
        colors = [tuple(rgb) for _, rgb in self.critical_centers]
        if len(set(colors)) != len(colors):
            raise SchemaError("critical center colours must be pairwise distinct")
        seen = set()
        for c in self.constraints:
            if c.name in seen:
                raise SchemaError(f"duplicate constraint name {c.name}")
            seen.add(c.name)
            for i in (c.vertex, c.ray_a, c.ray_b, *c.coupled):
                if not 1 <= i <= n:
                    raise SchemaError(f"constraint {c.name} references unknown landmark {i}")
        groups = {int(k): frozenset(v) for k, v in self.neighbor_groups.items()}
        object.__setattr__(self, "neighbor_groups", groups)

    @property
    def n(self) -> int:
        return len(self.landmarks)

    @property
    def critical_indices(self) -> tuple[int, ...]:
        return tuple(c for c, _ in self.critical_centers)

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {i: [] for i in range(1, self.n + 1)}
        for a, b in sorted(self.edges):
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def constraint(self, name: str) -> AngleConstraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def with_constraints(self, names: Iterable[str]) -> "AnatomySchema":
        """Copy keeping only the named constraints, in schema order."""
        keep = set(names)
        unknown = keep - {c.name for c in self.constraints}
        if unknown:
            raise SchemaError(f"unknown constraints: {sorted(unknown)}")
        return AnatomySchema(
            self.landmarks,
            self.edges,
            self.critical_centers,
            tuple(c for c in self.constraints if c.name in keep),
            self.neighbor_groups,
        )

    def to_json(self) -> dict:
        return {
            "landmarks": [{"index": lm.index, "name": lm.name} for lm in self.landmarks],
            "edges": [list(e) for e in sorted(self.edges)],
            "critical_centers": [{"index": c, "rgb": list(rgb)} for c, rgb in self.critical_centers],
            "constraints": [
                {
                    "name": c.name,
                    "vertex": c.vertex,
                    "ray_a": c.ray_a,
                    "ray_b": c.ray_b,
                    "min_deg": c.min_deg,
                    "max_deg": c.max_deg,
                    "coupled": sorted(c.coupled),
                }
                for c in self.constraints
            ],
            "neighbor_groups": {str(k): sorted(v) for k, v in sorted(self.neighbor_groups.items())},
        }


def _components(n: int, edges: Iterable[tuple[int, int]]) -> list[set[int]]:
    adj: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen: set[int] = set()
    comps = []
    for start in range(1, n + 1):
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w not in comp:
                    comp.add(w)
                    queue.append(w)
        seen |= comp
        comps.append(comp)
    return comps


def _field(doc, key, where, kind=None):
    if key not in doc:
        raise SchemaError(f"{where}: missing field '{key}'")
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise SchemaError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}")
    return val


def schema_from_json(doc: Mapping, expected_count: int | None = N_LANDMARKS) -> AnatomySchema:
    number = (int, float)
    lms = []
    for k, item in enumerate(_field(doc, "landmarks", "schema", list)):
        where = f"landmarks[{k}]"
        lms.append(LandmarkId(int(_field(item, "index", where, int)), str(_field(item, "name", where, str))))
    lms.sort(key=lambda lm: lm.index)
    if expected_count is not None and len(lms) != expected_count:
        raise SchemaError(f"landmarks: expected {expected_count} entries, got {len(lms)}")

    edges = []
    for k, e in enumerate(_field(doc, "edges", "schema", list)):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) for v in e)):
            raise SchemaError(f"edges[{k}]: expected [i, j] integer pair, got {e!r}")
        edges.append((e[0], e[1]))

    crit = []
    for k, item in enumerate(_field(doc, "critical_centers", "schema", list)):
        where = f"critical_centers[{k}]"
        rgb = _field(item, "rgb", where, list)
        crit.append((int(_field(item, "index", where, int)), tuple(int(v) for v in rgb)))

    cons = []
    for k, item in enumerate(doc.get("constraints", [])):
        where = f"constraints[{k}]"
        coupled = item.get("coupled")
        ray_b = int(_field(item, "ray_b", where, int))
        cons.append((where, item, ray_b, coupled))

    groups = {int(k): frozenset(int(v) for v in vs) for k, vs in doc.get("neighbor_groups", {}).items()}

    built = []
    for where, item, ray_b, coupled in cons:
        if coupled is None:
            coupled = groups.get(ray_b, frozenset())
        built.append(
            AngleConstraint(
                name=str(_field(item, "name", where, str)),
                vertex=int(_field(item, "vertex", where, int)),
                ray_a=int(_field(item, "ray_a", where, int)),
                ray_b=ray_b,
                min_deg=float(_field(item, "min_deg", where, number)),
                max_deg=float(_field(item, "max_deg", where, number)),
                coupled=frozenset(int(v) for v in coupled),
            )
        )
    return AnatomySchema(tuple(lms), frozenset(edges), tuple(crit), tuple(built), groups)


def load_schema(path: str | Path | None = None, expected_count: int | None = N_LANDMARKS) -> AnatomySchema:
    """Load a schema file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("cephforge").joinpath("data/default_schema.json").read_text()
        where = "default_schema.json"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise CephforgeIOError(f"cannot read schema {path}: {exc}") from None
        where = str(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{where}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return schema_from_json(doc, expected_count)


def angle_deg(vertex: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    ax, ay = a[0] - vertex[0], a[1] - vertex[1]
    bx, by = b[0] - vertex[0], b[1] - vertex[1]
    if (ax == 0 and ay == 0) or (bx == 0 and by == 0):
        raise DegenerateGeometryError("ray endpoint coincides with vertex")
    # atan2 form stays accurate near 0 and 180 degrees where acos does not
    return math.degrees(math.atan2(abs(ax * by - ay * bx), ax * bx + ay * by))


def measure_angle(ls: LandmarkSet, c: AngleConstraint) -> float:
    return angle_deg(ls.point(c.vertex), ls.point(c.ray_a), ls.point(c.ray_b))


@dataclass(frozen=True)
class Violation:
    kind: str  # "bounds" | "non-finite" | "spacing" | "count" | "constraint" | "degenerate"
    message: str
    landmark: int | None = None
    constraint: str | None = None
    measured: float | None = None
    range: tuple[float, float] | None = None


def validate_landmark_set(ls: LandmarkSet, schema: AnatomySchema, check_constraints: bool = True) -> list[Violation]:
    """Every violated invariant of ``ls`` under ``schema``; empty iff valid."""
    out: list[Violation] = []
    if len(ls) != schema.n:
        out.append(Violation("count", f"expected {schema.n} landmarks, got {len(ls)}"))
        return out
    if not (ls.spacing > 0 and math.isfinite(ls.spacing)):
        out.append(Violation("spacing", f"spacing must be > 0, got {ls.spacing}"))
    if ls.width <= 0 or ls.height <= 0:
        out.append(Violation("bounds", f"image size must be positive, got {ls.width}x{ls.height}"))
    for i, (x, y) in enumerate(ls.points, start=1):
        if not (math.isfinite(x) and math.isfinite(y)):
            out.append(Violation("non-finite", f"landmark {i}: non-finite coordinate ({x}, {y})", landmark=i))
        elif not (0 <= x < ls.width and 0 <= y < ls.height):
            out.append(
                Violation(
                    "bounds",
                    f"landmark {i}: ({x:.3f}, {y:.3f}) outside [0, {ls.width}) x [0, {ls.height})",
                    landmark=i,
                )
            )
    if check_constraints and not any(v.kind == "non-finite" for v in out):
        for c in schema.constraints:
            try:
                ang = measure_angle(ls, c)
            except DegenerateGeometryError:
                out.append(Violation("degenerate", f"{c.name}: ray endpoint coincides with vertex", constraint=c.name))
                continue
            if not c.min_deg <= ang <= c.max_deg:
                out.append(
                    Violation(
                        "constraint",
                        f"{c.name}: measured {ang:.4f} deg outside [{c.min_deg:g}, {c.max_deg:g}]",
                        constraint=c.name,
                        measured=ang,
                        range=(c.min_deg, c.max_deg),
                    )
                )
    return out
