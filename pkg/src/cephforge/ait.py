"""Topology conditioning raster: graph-distance colour mixing and gradient edges."""

from __future__ import annotations

import io
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .errors import ConfigError, SchemaError
from .schema import AnatomySchema, LandmarkSet

RGB = tuple[float, float, float]


def graph_distances(schema: AnatomySchema) -> dict[tuple[int, int], int]:
    """Hop count from every landmark to every critical center, keyed (node, center)."""
    adj = schema.adjacency()
    out: dict[tuple[int, int], int] = {}
    for center in schema.critical_indices:
        dist = {center: 0}
        queue = deque([center])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        if len(dist) != schema.n:
            raise SchemaError(f"graph disconnected: landmarks unreachable from critical center {center}")
        for v, d in dist.items():
            out[(v, center)] = d
    return out


@dataclass(frozen=True)
class NodeColoring:
    colors: dict[int, RGB]
    weights: dict[int, dict[int, float]]

    def as_array(self) -> np.ndarray:
        """(n, 3) float colours, row ``i`` for landmark ``i + 1``."""
        return np.array([self.colors[i] for i in sorted(self.colors)], dtype=np.float64)


def color_nodes(schema: AnatomySchema) -> NodeColoring:
    dist = graph_distances(schema)
    palette = {c: tuple(float(v) for v in rgb) for c, rgb in schema.critical_centers}
    colors: dict[int, RGB] = {}
    weights: dict[int, dict[int, float]] = {}
    for v in range(1, schema.n + 1):
        if v in palette:
            colors[v] = palette[v]
            weights[v] = {c: float(c == v) for c in palette}
            continue
        raw = {c: 1.0 / dist[(v, c)] for c in palette}
        total = sum(raw.values())
        w = {c: raw[c] / total for c in palette}
        weights[v] = w
        colors[v] = tuple(sum(w[c] * palette[c][ch] for c in palette) for ch in range(3))
    return NodeColoring(colors, weights)


def gradient_edge(c1: Sequence[float], c2: Sequence[float], d: int) -> np.ndarray:
    """``d`` colours stepping linearly from ``c1`` to ``c2`` inclusive, shape (d, 3)."""
    if d < 1:
        raise ValueError("gradient length must be >= 1")
    a = np.asarray(c1, dtype=np.float64)
    b = np.asarray(c2, dtype=np.float64)
    if d == 1:
        return a[None, :].copy()
    t = np.arange(d, dtype=np.float64)[:, None] / (d - 1)
    out = a + t * (b - a)
    # pin the last sample; a + 1.0 * (b - a) can be off by one ulp
    out[-1] = b
    return out


def line_pixels(x0: int, y0: int, x1: int, y1: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer midpoint line from (x0, y0) to (x1, y1), endpoints included.

    The minor coordinate at major step i is ``round_half_up(i * d_minor / d_major)``
    evaluated in integer arithmetic, which is the midpoint-algorithm result.
    """
    dx, dy = x1 - x0, y1 - y0
    n = max(abs(dx), abs(dy))
    if n == 0:
        return np.array([x0]), np.array([y0])
    i = np.arange(n + 1, dtype=np.int64)

    def minor(d):
        return np.sign(d) * ((2 * i * abs(d) + n) // (2 * n))

    if abs(dx) >= abs(dy):
        xs = x0 + np.sign(dx) * i
        ys = y0 + minor(dy)
    else:
        ys = y0 + np.sign(dy) * i
        xs = x0 + minor(dx)
    return xs, ys


@dataclass(frozen=True)
class RasterStyle:
    node_radius: int = 4
    edge_thickness: int = 2
    background: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if self.node_radius < 0 or self.edge_thickness < 1:
            raise ConfigError("node_radius must be >= 0 and edge_thickness >= 1")

    def scaled(self, size: int) -> "RasterStyle":
        """Style values are given for a 512 px canvas; rescale for other sizes."""
        if size == 512:
            return self
        f = size / 512
        return RasterStyle(max(0, round(self.node_radius * f)), max(1, round(self.edge_thickness * f)), self.background)


def _quantize(colors: np.ndarray) -> np.ndarray:
    # np.rint rounds half to even
    return np.clip(np.rint(colors), 0, 255).astype(np.uint8)


def node_pixels(ls: LandmarkSet, size: int) -> np.ndarray:
    """Integer pixel position of every landmark on a size x size canvas, shape (n, 2)."""
    sx = size / ls.width
    sy = size / ls.height
    xy = np.floor(ls.points * [sx, sy]).astype(np.int64)
    return np.clip(xy, 0, size - 1)


def rasterize(
    ls: LandmarkSet,
    schema: AnatomySchema,
    size: int = 512,
    style: RasterStyle | None = None,
    coloring: NodeColoring | None = None,
) -> np.ndarray:
    """Render the topology image as a (size, size, 3) uint8 array.

    Edges are drawn first in sorted order, then nodes as filled discs in index
    order. No anti-aliasing.
    """
    if size < 32:
        raise ConfigError(f"raster size {size} < 32")
    if len(ls) != schema.n:
        raise ConfigError(f"landmark count {len(ls)} does not match schema ({schema.n})")
    style = style or RasterStyle()
    coloring = coloring or color_nodes(schema)
    node_rgb = coloring.as_array()
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:] = style.background
    pix = node_pixels(ls, size)
    scaled = ls.points * [size / ls.width, size / ls.height]

    lo = -(style.edge_thickness // 2)
    brush = np.arange(lo, lo + style.edge_thickness)
    bx, by = np.meshgrid(brush, brush)
    bx, by = bx.ravel(), by.ravel()
    for a, b in sorted(schema.edges):
        (x0, y0), (x1, y1) = pix[a - 1], pix[b - 1]
        xs, ys = line_pixels(int(x0), int(y0), int(x1), int(y1))
        length = float(np.hypot(*(scaled[b - 1] - scaled[a - 1])))
        d = max(1, int(np.rint(length)))
        ramp = gradient_edge(node_rgb[a - 1], node_rgb[b - 1], d)
        steps = len(xs)
        if steps == 1:
            t = np.zeros(1, dtype=np.int64)
        else:
            t = np.rint(np.arange(steps) * (d - 1) / (steps - 1)).astype(np.int64)
        cols = _quantize(ramp[t])
        px = (xs[:, None] + bx[None, :]).ravel()
        py = (ys[:, None] + by[None, :]).ravel()
        cc = np.repeat(cols, len(bx), axis=0)
        keep = (px >= 0) & (px < size) & (py >= 0) & (py < size)
        # overlapping brush stamps resolve the same way on every call
        img[py[keep], px[keep]] = cc[keep]

    r = style.node_radius
    off = np.arange(-r, r + 1)
    ox, oy = np.meshgrid(off, off)
    disc = ox**2 + oy**2 <= r * r
    ox, oy = ox[disc], oy[disc]
    node_u8 = _quantize(node_rgb)
    for i, (x, y) in enumerate(pix):
        px, py = x + ox, y + oy
        keep = (px >= 0) & (px < size) & (py >= 0) & (py < size)
        img[py[keep], px[keep]] = node_u8[i]
    return img


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8)).save(buf, format="PNG", compress_level=1)
    return buf.getvalue()


def write_png(img: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(png_bytes(img))


def _render_chunk(args):
    sets, schema, size, style = args
    coloring = color_nodes(schema)
    return [png_bytes(rasterize(ls, schema, size, style, coloring)) for ls in sets]


def rasterize_many(
    sets: Sequence[LandmarkSet],
    schema: AnatomySchema,
    size: int = 512,
    style: RasterStyle | None = None,
    jobs: int = 1,
) -> list[bytes]:
    """PNG bytes for each set, in input order; identical for any ``jobs``."""
    style = style or RasterStyle()
    if jobs <= 1 or len(sets) < 16:
        return _render_chunk((list(sets), schema, size, style))
    step = -(-len(sets) // (jobs * 4))
    chunks = [(list(sets[i : i + step]), schema, size, style) for i in range(0, len(sets), step)]
    out: list[bytes] = []
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        for part in ex.map(_render_chunk, chunks):
            out.extend(part)
    return out
