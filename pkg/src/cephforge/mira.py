"""Random landmark-set expansion: global affine jitter followed by angle re-targeting."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateGeometryError, ResampleBudgetExhausted, ValidationError
from .schema import AngleConstraint, AnatomySchema, LandmarkSet, angle_deg, validate_landmark_set

log = logging.getLogger(__name__)

MAX_CONSECUTIVE_REJECTIONS = 1000
REPROJECTION_ROUNDS = 10
_TARGET_TOL_DEG = 1e-9


@dataclass(frozen=True)
class GlobalAffine:
    s_x: float = 1.0
    s_y: float = 1.0
    theta: float = 0.0  # radians
    t_x: float = 0.0
    t_y: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.s_x > 0 and self.s_y > 0):
            raise ValueError("scale factors must be positive")

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous matrix acting on points already shifted to ``center``."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array(
            [
                [self.s_x * c, -self.s_y * s, self.t_x],
                [self.s_x * s, self.s_y * c, self.t_y],
                [0.0, 0.0, 1.0],
            ]
        )


def apply_affine(ls: LandmarkSet, a: GlobalAffine) -> LandmarkSet:
    m = a.matrix()
    ctr = np.asarray(a.center, dtype=np.float64)
    rel = ls.points - ctr
    out = rel @ m[:2, :2].T + m[:2, 2] + ctr
    return ls.replace_points(out)


def _retarget(points: np.ndarray, c: AngleConstraint, target_deg: float) -> None:
    """Rotate ray_b and the coupled landmarks about the vertex, in place."""
    v = points[c.vertex - 1]
    a = points[c.ray_a - 1] - v
    b = points[c.ray_b - 1] - v
    if not (a.any() and b.any()):
        raise DegenerateGeometryError(f"{c.name}: ray endpoint coincides with vertex")
    signed = math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])
    direction = 1.0 if signed >= 0 else -1.0
    delta = direction * (math.radians(target_deg) - abs(signed))
    if delta == 0.0:
        return
    cs, sn = math.cos(delta), math.sin(delta)
    rot = np.array([[cs, -sn], [sn, cs]])
    idx = [i - 1 for i in c.moved]
    points[idx] = (points[idx] - v) @ rot.T + v


def apply_angle_augmentation(
    ls: LandmarkSet, c: AngleConstraint, target_deg: float, schema: AnatomySchema | None = None
) -> LandmarkSet:
    """Rigidly rotate ray_b (and ``c.coupled``) about the vertex so the angle equals ``target_deg``."""
    if not c.min_deg <= target_deg <= c.max_deg:
        raise ValidationError(f"{c.name}: target {target_deg} outside [{c.min_deg}, {c.max_deg}]")
    if schema is not None and c not in schema.constraints:
        raise ValidationError(f"constraint {c.name} does not belong to the schema")
    pts = np.array(ls.points)
    _retarget(pts, c, target_deg)
    return ls.replace_points(pts)


def enforce_constraints(
    ls: LandmarkSet,
    schema: AnatomySchema,
    targets: dict[str, float],
    rounds: int = REPROJECTION_ROUNDS,
) -> LandmarkSet | None:
    """Re-project until every constraint holds at once.

    Constraints named in ``targets`` are pinned to their sampled angle; any
    other constraint that drifted out of range is clamped to its nearest
    bound. Returns ``None`` when ``rounds`` passes do not converge.
    """
    pts = np.array(ls.points)
    for _ in range(rounds):
        changed = False
        for c in schema.constraints:
            ang = angle_deg(pts[c.vertex - 1], pts[c.ray_a - 1], pts[c.ray_b - 1])
            if c.name in targets:
                goal = targets[c.name]
                if abs(ang - goal) <= _TARGET_TOL_DEG:
                    continue
            elif c.min_deg <= ang <= c.max_deg:
                continue
            else:
                goal = min(max(ang, c.min_deg), c.max_deg)
            _retarget(pts, c, goal)
            changed = True
        if not changed:
            return ls.replace_points(pts)
    return None


@dataclass(frozen=True)
class AugmentConfig:
    n_l: int
    seed: int = 0
    scale_range: tuple[float, float] = (0.92, 1.08)
    rotation_range_deg: tuple[float, float] = (-5.0, 5.0)
    translation_range_frac: tuple[float, float] = (-0.04, 0.04)
    anatomical_min: int = 1
    anatomical_max: int | None = None  # None: every schema constraint
    reject_out_of_bounds: bool = True

    def __post_init__(self):
        if self.n_l < 1:
            raise ConfigError("n_l must be >= 1")
        for name in ("scale_range", "rotation_range_deg", "translation_range_frac"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: empty interval [{lo}, {hi}]")
        if self.scale_range[0] <= 0:
            raise ConfigError("scale_range must be positive")
        if self.anatomical_min < 0:
            raise ConfigError("anatomical_min must be >= 0")
        if self.anatomical_max is not None and self.anatomical_max < self.anatomical_min:
            raise ConfigError("anatomical_max must be >= anatomical_min")

    def anatomical_bounds(self, schema: AnatomySchema) -> tuple[int, int]:
        n = len(schema.constraints)
        hi = n if self.anatomical_max is None else self.anatomical_max
        if not 0 <= self.anatomical_min <= hi <= n:
            raise ConfigError(
                f"need 0 <= anatomical_min <= anatomical_max <= {n} constraints, "
                f"got [{self.anatomical_min}, {hi}]"
            )
        return self.anatomical_min, hi


@dataclass(frozen=True)
class Provenance:
    source_id: str
    affine: GlobalAffine
    applied_constraints: tuple[tuple[str, float], ...]
    seed_stream: int
    rejections: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["affine"]["center"] = list(self.affine.center)
        d["applied_constraints"] = [[n, t] for n, t in self.applied_constraints]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Provenance":
        aff = dict(d["affine"])
        aff["center"] = tuple(aff["center"])
        return cls(
            source_id=d["source_id"],
            affine=GlobalAffine(**aff),
            applied_constraints=tuple((n, float(t)) for n, t in d["applied_constraints"]),
            seed_stream=int(d["seed_stream"]),
            rejections=int(d.get("rejections", 0)),
        )


def slot_seed(seed: int, slot: int, stream: int = 0) -> int:
    """64-bit stream seed for one output slot; independent of worker layout."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stream, slot])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_affine(rng: np.random.Generator, ls: LandmarkSet, cfg: AugmentConfig) -> GlobalAffine:
    s_x, s_y = rng.uniform(*cfg.scale_range, size=2)
    theta = math.radians(rng.uniform(*cfg.rotation_range_deg))
    fx, fy = rng.uniform(*cfg.translation_range_frac, size=2)
    cx, cy = ls.points.mean(axis=0)
    return GlobalAffine(float(s_x), float(s_y), theta, float(fx * ls.width), float(fy * ls.height), (float(cx), float(cy)))


def _generate_slot(
    slot: int,
    pool: Sequence[LandmarkSet],
    source_ids: Sequence[str],
    cfg: AugmentConfig,
    schema: AnatomySchema,
) -> tuple[LandmarkSet, Provenance]:
    stream = slot_seed(cfg.seed, slot)
    rng = np.random.default_rng(stream)
    kmin, kmax = cfg.anatomical_bounds(schema)
    cons = schema.constraints
    for attempt in range(MAX_CONSECUTIVE_REJECTIONS):
        src = int(rng.integers(len(pool)))
        base = pool[src]
        affine = sample_affine(rng, base, cfg)
        k = int(rng.integers(kmin, kmax + 1))
        picked = sorted(rng.choice(len(cons), size=k, replace=False).tolist()) if k else []
        targets = {cons[i].name: float(rng.uniform(cons[i].min_deg, cons[i].max_deg)) for i in picked}

        out = apply_affine(base, affine)
        try:
            pts = np.array(out.points)
            for i in picked:
                _retarget(pts, cons[i], targets[cons[i].name])
            fixed = enforce_constraints(out.replace_points(pts), schema, targets)
        except DegenerateGeometryError:
            fixed = None
        if fixed is None:
            continue
        problems = validate_landmark_set(fixed, schema)
        if not cfg.reject_out_of_bounds:
            problems = [p for p in problems if p.kind != "bounds"]
        if problems:
            continue
        prov = Provenance(
            source_id=source_ids[src],
            affine=affine,
            applied_constraints=tuple((cons[i].name, targets[cons[i].name]) for i in picked),
            seed_stream=stream,
            rejections=attempt,
        )
        return fixed, prov
    raise ResampleBudgetExhausted(
        f"slot {slot}: {MAX_CONSECUTIVE_REJECTIONS} consecutive rejections; widen the image or narrow the config ranges"
    )


def _generate_chunk(args):
    slots, pool, source_ids, cfg, schema = args
    return [_generate_slot(s, pool, source_ids, cfg, schema) for s in slots]


def mira_generate(
    pool: Sequence[LandmarkSet],
    cfg: AugmentConfig,
    schema: AnatomySchema,
    source_ids: Sequence[str] | None = None,
    jobs: int = 1,
) -> list[tuple[LandmarkSet, Provenance]]:
    """Expand ``pool`` into ``cfg.n_l`` augmented sets with provenance.

    Slot ``i`` draws from its own random stream seeded by ``(cfg.seed, i)``, so
    output does not depend on ``jobs``.
    """
    if not pool:
        raise ValidationError("pool is empty")
    cfg.anatomical_bounds(schema)
    if source_ids is None:
        source_ids = [str(i) for i in range(len(pool))]
    if len(source_ids) != len(pool):
        raise ConfigError("source_ids must match pool length")
    for sid, ls in zip(source_ids, pool):
        problems = validate_landmark_set(ls, schema)
        if problems:
            raise ValidationError(f"pool member {sid} invalid: {problems[0].message}")

    slots = range(cfg.n_l)
    if jobs <= 1 or cfg.n_l < 64:
        return [_generate_slot(s, pool, source_ids, cfg, schema) for s in slots]
    size = math.ceil(cfg.n_l / (jobs * 4))
    chunks = [list(slots[i : i + size]) for i in range(0, cfg.n_l, size)]
    out: list[tuple[LandmarkSet, Provenance]] = []
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        for part in ex.map(_generate_chunk, [(c, pool, source_ids, cfg, schema) for c in chunks]):
            out.extend(part)
    return out
