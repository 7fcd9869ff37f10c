"""Gaussian heatmap encoder / argmax decoder and the heatmap MSE loss.

A landmark at input pixel ``x`` sits at heatmap coordinate ``x / stride``;
heatmap cell ``j`` is centred on input pixel ``j * stride``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError
from .schema import LandmarkSet


@dataclass(frozen=True)
class CodecConfig:
    stride: float = 4.0
    sigma: float = 2.0
    refine_subpixel: bool = True
    heatmap_size: tuple[int, int] | None = None  # (h, w); None derives it from the image size

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        if not self.stride >= 1:
            raise ConfigError("stride must be >= 1")
        if self.heatmap_size is not None and min(self.heatmap_size) < 8:
            raise ConfigError("heatmap h and w must be >= 8")

    def grid_for(self, width: int, height: int) -> tuple[int, int]:
        """(h, w) large enough that every in-bounds point has its nearest cell on the grid."""
        if self.heatmap_size is not None:
            return tuple(self.heatmap_size)
        h = math.floor(height / self.stride + 0.5) + 1
        w = math.floor(width / self.stride + 0.5) + 1
        return max(h, 8), max(w, 8)


@dataclass(frozen=True, eq=False)
class HeatmapStack:
    maps: np.ndarray  # (n_planes, h, w)
    stride: float

    def __post_init__(self):
        m = np.asarray(self.maps)
        if m.ndim != 3:
            raise ValidationError(f"heatmap stack must be 3-D, got shape {m.shape}")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")
        object.__setattr__(self, "maps", m)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.maps.shape


def encode_points(points: np.ndarray, grid: tuple[int, int], cfg: CodecConfig) -> np.ndarray:
    """Unnormalised Gaussian planes (n, h, w) for input-pixel ``points`` (n, 2)."""
    h, w = grid
    uv = np.asarray(points, dtype=np.float64) / cfg.stride
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    gx = np.exp(-((xs[None, :] - uv[:, :1]) ** 2) / (2 * cfg.sigma**2))
    gy = np.exp(-((ys[None, :] - uv[:, 1:]) ** 2) / (2 * cfg.sigma**2))
    return gy[:, :, None] * gx[:, None, :]


def encode(ls: LandmarkSet, cfg: CodecConfig) -> HeatmapStack:
    grid = cfg.grid_for(ls.width, ls.height)
    return HeatmapStack(encode_points(ls.points, grid, cfg), cfg.stride)


def decode(
    stack: HeatmapStack, cfg: CodecConfig, out_size: tuple[int, int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates (n, 2) in input pixels plus a per-plane "flat heatmap" flag.

    Argmax ties go to the smallest (y, x). With ``cfg.refine_subpixel`` the
    argmax moves a quarter cell toward the larger neighbour on each axis.
    """
    maps = stack.maps
    if not np.isfinite(maps).all():
        raise ValidationError("heatmap contains non-finite values")
    n, h, w = maps.shape
    flat_idx = maps.reshape(n, -1).argmax(axis=1)
    ys, xs = np.divmod(flat_idx, w)
    coords = np.stack([xs, ys], axis=1).astype(np.float64)
    flat = maps.reshape(n, -1).max(axis=1) == maps.reshape(n, -1).min(axis=1)

    if cfg.refine_subpixel:
        k = np.arange(n)
        coords[:, 0] += 0.25 * _shift_sign(maps[k, ys, :], xs, cfg.sigma)
        coords[:, 1] += 0.25 * _shift_sign(maps[k, :, xs], ys, cfg.sigma)

    coords[flat] = [(w - 1) / 2, (h - 1) / 2]
    coords *= stack.stride
    if out_size is not None:
        ow, oh = out_size
        coords[:, 0] = np.clip(coords[:, 0], 0, np.nextafter(ow, 0))
        coords[:, 1] = np.clip(coords[:, 1], 0, np.nextafter(oh, 0))
    return coords, flat


def _shift_sign(lines: np.ndarray, peak: np.ndarray, sigma: float) -> np.ndarray:
    """-1, 0 or +1 per row of ``lines`` (n, m): direction of the larger neighbour of ``peak``.

    On the border the missing neighbour is the mirror value a Gaussian of
    width ``sigma`` through the two known cells would have, so the shift is
    toward the inner cell only when the peak lies strictly inside the grid.
    """
    n, m = lines.shape
    k = np.arange(n)
    v0 = lines[k, peak]
    left = np.where(peak > 0, lines[k, np.maximum(peak - 1, 0)], np.nan)
    right = np.where(peak < m - 1, lines[k, np.minimum(peak + 1, m - 1)], np.nan)
    out = np.sign(np.nan_to_num(right - left))
    edge = np.isnan(left) ^ np.isnan(right)
    if edge.any():
        inner = np.where(np.isnan(left), right, left)[edge]
        toward = np.where(np.isnan(left), 1.0, -1.0)[edge]
        with np.errstate(divide="ignore", invalid="ignore"):
            gap = np.log(inner) - np.log(v0[edge])
        moves = (inner > 0) & (v0[edge] > 0) & (gap > -0.5 / sigma**2 + 1e-9)
        out[edge] = np.where(moves, toward, 0.0)
    return out


def mse_loss(pred: HeatmapStack, gt: HeatmapStack) -> float:
    if pred.maps.shape != gt.maps.shape:
        raise ValidationError(f"shape mismatch: {pred.maps.shape} vs {gt.maps.shape}")
    diff = pred.maps.astype(np.float64) - gt.maps.astype(np.float64)
    return float(np.mean(diff * diff))


_HEADER = struct.Struct("<4f")


def write_stack(stack: HeatmapStack, path: str | Path) -> None:
    """Flat little-endian float32 dump: header (n_planes, h, w, stride) then the planes."""
    n, h, w = stack.maps.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(n, h, w, stack.stride))
        fh.write(np.ascontiguousarray(stack.maps, dtype="<f4").tobytes())


def read_stack(path: str | Path) -> HeatmapStack:
    raw = Path(path).read_bytes()
    n, h, w, stride = _HEADER.unpack_from(raw)
    n, h, w = int(n), int(h), int(w)
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if data.size != n * h * w:
        raise ValidationError(f"{path}: expected {n * h * w} values, found {data.size}")
    return HeatmapStack(data.reshape(n, h, w).astype(np.float64), float(stride))
