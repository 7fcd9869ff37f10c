"""Dataset ingestion, bundle assembly, splitting and manifest verification."""

from __future__ import annotations

import json
import logging
import shutil
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .ait import RasterStyle, rasterize_many
from .errors import CephforgeIOError, ConfigError, ValidationError
from .mira import AugmentConfig, Provenance, enforce_constraints, mira_generate, slot_seed
from .pdg import PromptLexicon, generate_prompts, parse_prompt, validate_prompt
from .schema import AnatomySchema, LandmarkSet, read_landmarks, validate_landmark_set, write_landmarks

log = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
PROVENANCE = "provenance.jsonl"
POOL_STREAM = 2


@dataclass
class IngestResult:
    sets: list[LandmarkSet]
    ids: list[str]
    rejected: dict[str, list[str]] = field(default_factory=dict)


def annotation_files(directory: str | Path) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise CephforgeIOError(f"not a readable directory: {d}")
    try:
        return sorted(p for p in d.iterdir() if p.suffix == ".json" and p.is_file())
    except OSError as exc:
        raise CephforgeIOError(f"cannot list {d}: {exc}") from None


def ingest(directory: str | Path, schema: AnatomySchema) -> IngestResult:
    """Load every annotation JSON in ``directory``; invalid files are reported, not loaded."""
    result = IngestResult([], [])
    for path in annotation_files(directory):
        try:
            ls = read_landmarks(path, schema.n)
        except ValidationError as exc:
            result.rejected[path.name] = [str(exc)]
            continue
        problems = validate_landmark_set(ls, schema)
        if problems:
            result.rejected[path.name] = [p.message for p in problems]
            continue
        result.sets.append(ls)
        result.ids.append(path.stem)
    for name, msgs in result.rejected.items():
        log.warning("rejected %s: %s", name, "; ".join(msgs))
    if not result.sets:
        raise ValidationError(f"no valid annotation files in {directory}")
    return result


# -- synthetic pool fixture ---------------------------------------------------
# Scanner geometries: (width, height, mm/px, relative frequency).
SCANNERS = (
    (1937, 2089, 0.125, 170),
    (2400, 1935, 0.1, 266),
    (2304, 2880, 0.096, 66),
    (2687, 2304, 0.087, 100),
    (2696, 2100, 0.089, 58),
)
FEATURE_TAGS = (
    ("Deciduous teeth", 68 / 592),
    ("Missing teeth", 42 / 592),
    ("Orthodontic appliance", 30 / 592),
    ("Dentures", 0.05),
)


def load_template() -> LandmarkSet:
    doc = json.loads(resources.files("cephforge").joinpath("data/template_landmarks.json").read_text())
    return LandmarkSet.from_json(doc)


def synth_pool(n: int, seed: int, schema: AnatomySchema, jitter_mm: float = 1.5) -> list[LandmarkSet]:
    """Stand-in for real annotations: jittered copies of a template skull.

    Each member is placed on one of the scanner geometries above, with its
    constraint angles redrawn uniformly inside their ranges.
    """
    template = load_template()
    weights = np.array([s[3] for s in SCANNERS], dtype=float)
    weights /= weights.sum()
    centred = template.points - template.points.mean(axis=0)
    out = []
    for i in range(n):
        rng = np.random.default_rng(slot_seed(seed, i, POOL_STREAM))
        for _ in range(1000):
            w, h, spacing, _ = SCANNERS[rng.choice(len(SCANNERS), p=weights)]
            scale = template.spacing / spacing * rng.uniform(0.94, 1.06)
            pts = centred * scale + rng.normal(0, jitter_mm / spacing, size=centred.shape)
            pts += [w / 2, h / 2] + rng.normal(0, 0.02, size=2) * [w, h]
            tags = frozenset(t for t, p in FEATURE_TAGS if rng.random() < p)
            ls = LandmarkSet(pts, w, h, spacing, tags)
            targets = {c.name: float(rng.uniform(c.min_deg, c.max_deg)) for c in schema.constraints}
            ls = enforce_constraints(ls, schema, targets)
            if ls is not None and not validate_landmark_set(ls, schema):
                out.append(ls)
                break
        else:
            raise ValidationError(f"could not place synthetic pool member {i}")
    return out


# -- bundles ------------------------------------------------------------------


@dataclass
class BundleRecord:
    id: str
    topology_image: str
    prompt: str
    landmarks: str
    spacing_mm_per_px: float
    width: int
    height: int
    provenance: dict
    seed: int

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, separators=(",", ":"))


def _prepare_out(out: Path) -> Path:
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise ConfigError(f"output directory {out} exists and is not empty")
    tmp = out.parent / f".{out.name}.partial"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    return tmp


def _commit(tmp: Path, out: Path) -> None:
    if out.exists():
        out.rmdir()
    tmp.rename(out)


def write_augmented(
    results: Sequence[tuple[LandmarkSet, Provenance]], out: str | Path, prefix: str = "aug"
) -> list[str]:
    """One annotation JSON per set plus ``provenance.jsonl``; returns the ids."""
    out = Path(out)
    tmp = _prepare_out(out)
    try:
        ids = []
        lines = []
        for i, (ls, prov) in enumerate(results):
            rid = f"{prefix}_{i:06d}"
            write_landmarks(ls, tmp / f"{rid}.json")
            lines.append(json.dumps({"id": rid, **prov.to_json()}, separators=(",", ":")))
            ids.append(rid)
        (tmp / PROVENANCE).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        _commit(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return ids


def build_bundles(
    pool: Sequence[LandmarkSet],
    schema: AnatomySchema,
    mira_cfg: AugmentConfig,
    lexicon: PromptLexicon,
    raster_style: RasterStyle | None,
    out: str | Path,
    size: int = 512,
    source_ids: Sequence[str] | None = None,
    jobs: int = 1,
) -> list[BundleRecord]:
    """Augment -> rasterize -> prompt, written as a manifest-indexed bundle tree.

    Prompt ``i`` is paired with landmark set ``i``; prompts come from their own
    random stream of ``mira_cfg.seed``. Nothing is left behind on failure.
    """
    out = Path(out)
    tmp = _prepare_out(out)
    try:
        results = mira_generate(pool, mira_cfg, schema, source_ids=source_ids, jobs=jobs)
        prompts = generate_prompts(lexicon, len(results), mira_cfg.seed)
        pngs = rasterize_many([ls for ls, _ in results], schema, size, raster_style, jobs=jobs)
        (tmp / "images").mkdir()
        (tmp / "landmarks").mkdir()
        records = []
        for i, ((ls, prov), prompt, png) in enumerate(zip(results, prompts, pngs)):
            rid = f"syn_{i:06d}"
            img_rel = f"images/{rid}.png"
            lm_rel = f"landmarks/{rid}.json"
            (tmp / img_rel).write_bytes(png)
            write_landmarks(ls, tmp / lm_rel)
            records.append(
                BundleRecord(
                    id=rid,
                    topology_image=img_rel,
                    prompt=prompt.text,
                    landmarks=lm_rel,
                    spacing_mm_per_px=ls.spacing,
                    width=ls.width,
                    height=ls.height,
                    provenance=prov.to_json(),
                    seed=prov.seed_stream,
                )
            )
        (tmp / "prompts.txt").write_text("".join(r.prompt + "\n" for r in records), encoding="utf-8", newline="\n")
        (tmp / MANIFEST).write_text(
            "".join(r.to_json_line() + "\n" for r in records), encoding="utf-8", newline="\n"
        )
        _commit(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    log.info("wrote %d bundle records to %s", len(records), out)
    return records


def read_manifest(path: str | Path) -> list[dict]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CephforgeIOError(f"cannot read manifest {path}: {exc}") from None
    out = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: line {n}: {exc.msg}") from None
    return out


def verify_manifest(
    path: str | Path, schema: AnatomySchema, lexicon: PromptLexicon, size: int | None = 512
) -> list[str]:
    """Every defect found in a bundle manifest; empty when the bundle is sound."""
    path = Path(path)
    root = path.parent
    defects = []
    seen: set[str] = set()
    fields = set(BundleRecord.__dataclass_fields__)
    for n, rec in enumerate(read_manifest(path), start=1):
        rid = rec.get("id", f"<line {n}>")
        missing = fields - set(rec)
        if missing:
            defects.append(f"{rid}: missing fields {sorted(missing)}")
            continue
        if rid in seen:
            defects.append(f"{rid}: duplicate id")
        seen.add(rid)
        img = root / rec["topology_image"]
        if not img.is_file():
            defects.append(f"{rid}: missing image {rec['topology_image']}")
        else:
            with Image.open(img) as im:
                if im.mode != "RGB":
                    defects.append(f"{rid}: image mode {im.mode}, expected RGB")
                if size is not None and im.size != (size, size):
                    defects.append(f"{rid}: image size {im.size}, expected {(size, size)}")
        lm = root / rec["landmarks"]
        if not lm.is_file():
            defects.append(f"{rid}: missing landmarks {rec['landmarks']}")
        else:
            try:
                ls = read_landmarks(lm, schema.n)
                for v in validate_landmark_set(ls, schema):
                    defects.append(f"{rid}: {v.message}")
                if ls.spacing != rec["spacing_mm_per_px"] or (ls.width, ls.height) != (rec["width"], rec["height"]):
                    defects.append(f"{rid}: calibration differs from landmark file")
            except ValidationError as exc:
                defects.append(f"{rid}: {exc}")
        try:
            problems = validate_prompt(parse_prompt(rec["prompt"], lexicon), lexicon)
        except ValidationError as exc:
            problems = [str(exc)]
        defects.extend(f"{rid}: prompt {p}" for p in problems)
    return defects


# -- splitting ----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def to_json(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test)}


def split_dataset(records: Sequence[str], sizes: tuple[int, int, int], seed: int) -> DatasetSplit:
    if any(s < 0 for s in sizes) or sum(sizes) != len(records):
        raise ConfigError(f"split sizes {tuple(sizes)} do not sum to {len(records)} records")
    if len(set(records)) != len(records):
        raise ConfigError("record ids must be unique")
    rng = np.random.default_rng(seed)
    order = [records[i] for i in rng.permutation(len(records))]
    a, b, _ = sizes
    return DatasetSplit(tuple(order[:a]), tuple(order[a : a + b]), tuple(order[a + b :]))


# -- stub renderer (test fixture only) -----------------------------------------


def render_stub_xray(ls: LandmarkSet, schema: AnatomySchema, size: int = 512) -> np.ndarray:
    """Procedural grayscale "radiograph" for exercising detector plumbing.

    Bright ridges follow schema edges, small blobs mark landmarks, and a
    low-amplitude interference texture breaks up flat regions.
    """
    if size < 32:
        raise ConfigError(f"stub size {size} < 32")
    pts = ls.points * [size / ls.width, size / ls.height]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    d2 = np.full((size, size), np.inf)
    for a, b in sorted(schema.edges):
        p, q = pts[a - 1], pts[b - 1]
        seg = q - p
        L2 = float(seg @ seg)
        if L2 == 0:
            t = np.zeros_like(xx)
        else:
            t = np.clip(((xx - p[0]) * seg[0] + (yy - p[1]) * seg[1]) / L2, 0, 1)
        dx = xx - (p[0] + t * seg[0])
        dy = yy - (p[1] + t * seg[1])
        np.minimum(d2, dx * dx + dy * dy, out=d2)
    width = size / 170
    img = 30 + 140 * np.exp(-d2 / (2 * width**2))
    blob = np.zeros_like(img)
    for x, y in pts:
        np.maximum(blob, np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2 * (size / 256) ** 2)), out=blob)
    img += 70 * blob
    img += 8 * np.sin(xx * 0.21) * np.cos(yy * 0.17)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
