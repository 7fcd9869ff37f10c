"""Mean radial error and success detection rate, overall and per feature tag."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ValidationError
from .schema import LandmarkSet

DEFAULT_THRESHOLDS = (2.0, 2.5, 3.0, 4.0)


@dataclass(frozen=True)
class RadialError:
    landmark: int
    error_mm: float


def radial_errors(pred: LandmarkSet | np.ndarray, gt: LandmarkSet) -> list[RadialError]:
    """Per-landmark Euclidean distance in pixels times the ground-truth spacing."""
    return [RadialError(i + 1, float(e)) for i, e in enumerate(_errors_array(pred, gt))]


def _errors_array(pred, gt) -> np.ndarray:
    p = pred.points if isinstance(pred, LandmarkSet) else np.asarray(pred, dtype=np.float64)
    if p.shape != gt.points.shape:
        raise ValidationError(f"landmark mismatch: prediction has {len(p)} points, ground truth {len(gt)}")
    return np.hypot(*(p - gt.points).T) * gt.spacing


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    ddof: int = 0  # 0: population SD, 1: sample SD
    pooling: str = "landmarks"  # "landmarks": every per-landmark error; "images": per-image mean errors
    by_tag: bool = False

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        if not th or any(t <= 0 for t in th) or list(th) != sorted(th):
            raise ConfigError(f"thresholds must be positive and sorted, got {self.thresholds}")
        object.__setattr__(self, "thresholds", th)
        if self.ddof not in (0, 1):
            raise ConfigError("ddof must be 0 or 1")
        if self.pooling not in ("landmarks", "images"):
            raise ConfigError("pooling must be 'landmarks' or 'images'")


@dataclass
class EvalReport:
    mre_mm: float
    sd_mm: float
    sdr: dict[float, float]
    n_landmarks: int
    n_images: int
    subsets: dict[str, "EvalReport"] = field(default_factory=dict)
    sd_ddof: int = 0
    pooling: str = "landmarks"

    @property
    def thresholds(self) -> tuple[float, ...]:
        return tuple(self.sdr)

    def to_json(self) -> dict:
        return {
            "header": {"sd_ddof": self.sd_ddof, "pooling": self.pooling, "sdr_boundary": "inclusive"},
            "mre_mm": self.mre_mm,
            "sd_mm": self.sd_mm,
            "sdr": {_fmt_threshold(t): v for t, v in self.sdr.items()},
            "n_landmarks": self.n_landmarks,
            "n_images": self.n_images,
            "subsets": {k: v.to_json() for k, v in sorted(self.subsets.items())},
        }


def _fmt_threshold(t: float) -> str:
    return f"{t:g}"


def summarize(errors: np.ndarray, thresholds: Sequence[float], ddof: int = 0) -> tuple[float, float, dict[float, float]]:
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValidationError("empty error pool")
    mre = float(e.mean())
    sd = float(e.std(ddof=ddof)) if e.size > ddof else 0.0
    sdr = {float(t): float(np.count_nonzero(e <= t)) / e.size for t in thresholds}
    return mre, sd, sdr


def _report(per_image: list[np.ndarray], cfg: EvalConfig) -> EvalReport:
    if not per_image:
        raise ValidationError("empty error pool")
    pooled = np.concatenate(per_image)
    sd_pool = pooled if cfg.pooling == "landmarks" else np.array([e.mean() for e in per_image])
    mre, _, sdr = summarize(pooled, cfg.thresholds, cfg.ddof)
    sd = float(sd_pool.std(ddof=cfg.ddof)) if sd_pool.size > cfg.ddof else 0.0
    return EvalReport(mre, sd, sdr, int(pooled.size), len(per_image), sd_ddof=cfg.ddof, pooling=cfg.pooling)


def evaluate(
    pairs: Sequence[tuple[LandmarkSet | np.ndarray, LandmarkSet]],
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
    by_tag: bool = False,
    cfg: EvalConfig | None = None,
) -> EvalReport:
    """MRE, SD and SDR over every (prediction, ground truth) pair.

    With ``by_tag`` a nested report is added for each tag carried by any
    ground truth, computed over the pairs whose ground truth has that tag.
    """
    cfg = cfg or EvalConfig(tuple(thresholds), by_tag=by_tag)
    if not pairs:
        raise ValidationError("no prediction / ground-truth pairs")
    per_image = [_errors_array(p, g) for p, g in pairs]
    report = _report(per_image, cfg)
    if cfg.by_tag or by_tag:
        tags = sorted({t for _, g in pairs for t in g.tags})
        for tag in tags:
            sub = [e for e, (_, g) in zip(per_image, pairs) if tag in g.tags]
            report.subsets[tag] = _report(sub, cfg)
    return report


def format_delta(before: float, after: float, digits: int = 3) -> str:
    """``after`` followed by its signed change from ``before``, e.g. ``82.206(+6.454)``."""
    delta = round(after - before, digits)
    if delta == 0:
        delta = 0.0  # drop the sign of -0.0
    return f"{after:.{digits}f}({delta:+.{digits}f})"


@dataclass(frozen=True)
class DeltaRow:
    metric: str
    before: float
    after: float

    @property
    def delta(self) -> float:
        return self.after - self.before

    def formatted(self, digits: int = 3) -> str:
        return format_delta(self.before, self.after, digits)


def compare_reports(a: EvalReport, b: EvalReport) -> list[DeltaRow]:
    """Signed change from ``a`` to ``b`` for MRE, SD and each SDR threshold (SDR in %)."""
    if a.thresholds != b.thresholds:
        raise ConfigError(f"threshold mismatch: {a.thresholds} vs {b.thresholds}")
    rows = [DeltaRow("MRE (mm)", a.mre_mm, b.mre_mm), DeltaRow("SD (mm)", a.sd_mm, b.sd_mm)]
    for t in a.thresholds:
        rows.append(DeltaRow(f"SDR {_fmt_threshold(t)}mm (%)", 100 * a.sdr[t], 100 * b.sdr[t]))
    return rows


def format_table(report: EvalReport, title: str = "All") -> str:
    """Plain-text table in the MRE ± SD / SDR-per-threshold layout, one row per subset."""
    heads = ["Features", "MRE ± SD (mm)"] + [f"SDR {_fmt_threshold(t)}mm (%)" for t in report.thresholds]
    rows = [(title, report)] + sorted(report.subsets.items())
    body = [
        [name, f"{r.mre_mm:.3f} ± {r.sd_mm:.3f}"] + [f"{100 * r.sdr[t]:.3f}" for t in report.thresholds]
        for name, r in rows
    ]
    widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(heads)]
    fmt = lambda cells: " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(heads), sep] + [fmt(r) for r in body]) + "\n"


def format_comparison(rows: Sequence[DeltaRow], digits: int = 3) -> str:
    width = max(len(r.metric) for r in rows)
    return "\n".join(f"{r.metric.ljust(width)}  {r.formatted(digits)}" for r in rows) + "\n"


def is_monotone(report: EvalReport) -> bool:
    vals = [report.sdr[t] for t in report.thresholds]
    return all(a <= b for a, b in zip(vals, vals[1:])) and not any(math.isnan(v) for v in vals)
