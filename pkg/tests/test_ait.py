import hashlib
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cephforge.ait import (
    RasterStyle,
    color_nodes,
    gradient_edge,
    graph_distances,
    line_pixels,
    node_pixels,
    png_bytes,
    rasterize,
    rasterize_many,
)
from cephforge.errors import ConfigError
from cephforge.schema import AnatomySchema, LandmarkId, LandmarkSet

RED, BLUE = (255, 0, 0), (0, 0, 255)


def make_schema(n, edges, centers):
    return AnatomySchema(tuple(LandmarkId(i, f"L{i}") for i in range(1, n + 1)), frozenset(edges), tuple(centers))


def floyd(n, edges):
    inf = float("inf")
    d = [[0 if i == j else inf for j in range(n + 1)] for i in range(n + 1)]
    for a, b in edges:
        d[a][b] = d[b][a] = 1
    for k in range(1, n + 1):
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                d[i][j] = min(d[i][j], d[i][k] + d[k][j])
    return d


def oracle_colors(n, edges, centers):
    d = floyd(n, edges)
    out = {}
    for v in range(1, n + 1):
        hit = [rgb for c, rgb in centers if c == v]
        if hit:
            out[v] = tuple(Fraction(x) for x in hit[0])
            continue
        w = {c: Fraction(1, d[v][c]) for c, _ in centers}
        tot = sum(w.values())
        out[v] = tuple(sum(w[c] / tot * rgb[ch] for c, rgb in centers) for ch in range(3))
    return d, out


def random_connected(rng, n):
    edges = {(int(rng.integers(1, i)), i) for i in range(2, n + 1)}  # random tree
    for _ in range(int(rng.integers(0, n))):
        a, b = rng.choice(np.arange(1, n + 1), 2, replace=False)
        edges.add((int(min(a, b)), int(max(a, b))))
    return edges


def check_against_oracle(schema, centers):
    d, expect = oracle_colors(schema.n, schema.edges, centers)
    dist = graph_distances(schema)
    col = color_nodes(schema)
    crit = {c for c, _ in centers}
    env = np.array([rgb for _, rgb in centers], dtype=float)
    for v in range(1, schema.n + 1):
        for c in crit:
            assert dist[(v, c)] == d[v][c]
        np.testing.assert_allclose(col.colors[v], [float(x) for x in expect[v]], rtol=0, atol=1e-9)
        assert all(env[:, ch].min() - 1e-9 <= col.colors[v][ch] <= env[:, ch].max() + 1e-9 for ch in range(3))
        if v in crit:
            assert col.colors[v] == tuple(float(x) for x in dict(centers)[v])
        else:
            assert abs(sum(col.weights[v].values()) - 1) <= 1e-9


def test_self_distance_and_path():
    s = make_schema(3, {(1, 2), (2, 3)}, [(1, RED)])
    d = graph_distances(s)
    assert d[(1, 1)] == 0 and d[(3, 1)] == 2


def test_default_schema_distances_finite(schema):
    d = graph_distances(schema)
    assert len(d) == 38 * 5 and all(0 <= v < 38 for v in d.values())


def test_symmetric_midpoint_color():
    s = make_schema(3, {(1, 2), (2, 3)}, [(1, RED), (3, BLUE)])
    assert color_nodes(s).colors[2] == (127.5, 0.0, 127.5)


def test_one_three_color():
    s = make_schema(5, {(1, 2), (2, 3), (3, 4), (4, 5)}, [(1, RED), (5, BLUE)])
    col = color_nodes(s)
    assert col.weights[2] == {1: 0.75, 5: 0.25}
    assert col.colors[2] == (191.25, 0.0, 63.75)


def test_critical_nodes_keep_color(schema):
    col = color_nodes(schema)
    for c, rgb in schema.critical_centers:
        assert col.colors[c] == tuple(float(x) for x in rgb)
    assert col.colors[2] == (255.0, 0.0, 0.0)


def test_default_schema_against_oracle(schema):
    check_against_oracle(schema, list(schema.critical_centers))


def test_random_graphs_against_oracle():
    rng = np.random.default_rng(0)
    palette = [(255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0), (255, 0, 255)]
    for _ in range(200):
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(n, 5) + 1))
        centers = list(zip(sorted(rng.choice(np.arange(1, n + 1), k, replace=False).tolist()), palette))
        s = make_schema(n, random_connected(rng, n), centers)
        check_against_oracle(s, centers)


def test_gradient_three_steps():
    np.testing.assert_array_equal(gradient_edge((0, 0, 0), (255, 255, 255), 3), [[0, 0, 0], [127.5] * 3, [255] * 3])


def test_gradient_single():
    np.testing.assert_array_equal(gradient_edge((1, 2, 3), (9, 9, 9), 1), [[1, 2, 3]])


rgb = st.tuples(*[st.floats(0, 255)] * 3)


@given(rgb, rgb, st.integers(2, 2000))
def test_gradient_endpoints_exact(c1, c2, d):
    g = gradient_edge(c1, c2, d)
    assert g.shape == (d, 3)
    assert tuple(g[0]) == c1 and tuple(g[-1]) == c2


@given(rgb, st.integers(1, 500))
def test_gradient_constant(c, d):
    assert (gradient_edge(c, c, d) == np.array(c)).all()


@given(st.integers(-60, 60), st.integers(-60, 60), st.integers(-60, 60), st.integers(-60, 60))
def test_line_pixels_connected_and_anchored(x0, y0, x1, y1):
    xs, ys = line_pixels(x0, y0, x1, y1)
    assert (xs[0], ys[0]) == (x0, y0) and (xs[-1], ys[-1]) == (x1, y1)
    assert len(xs) == max(abs(x1 - x0), abs(y1 - y0)) + 1
    assert np.abs(np.diff(xs)).max(initial=0) <= 1 and np.abs(np.diff(ys)).max(initial=0) <= 1
    # each pixel lies within half a pixel of the true line along the minor axis
    if len(xs) > 1:
        if abs(x1 - x0) >= abs(y1 - y0):
            true = y0 + (xs - x0) * (y1 - y0) / (x1 - x0)
            assert np.abs(ys - true).max() <= 0.5 + 1e-12
        else:
            true = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
            assert np.abs(xs - true).max() <= 0.5 + 1e-12


def test_node_centers_have_node_color(schema, pool):
    col = color_nodes(schema).as_array()
    for ls in pool[:5]:
        img = rasterize(ls, schema)
        pix = node_pixels(ls, 512)
        # later discs may overdraw earlier centres; check the topmost owner
        for i, (x, y) in enumerate(pix):
            later = [j for j in range(i + 1, 38) if np.hypot(*(pix[j] - pix[i])) <= 4]
            if not later:
                assert tuple(img[y, x]) == tuple(np.rint(col[i]).astype(np.uint8))


def test_coincident_nodes_draw_only_discs():
    s = make_schema(2, {(1, 2)}, [(1, RED), (2, BLUE)])
    ls = LandmarkSet([[100.0, 100.0], [100.0, 100.0]], 256, 256, 0.1)
    img = rasterize(ls, s, size=256)
    lit = np.argwhere(img.any(axis=2))
    assert len(lit) == sum(1 for dx in range(-4, 5) for dy in range(-4, 5) if dx * dx + dy * dy <= 16)
    assert (img[lit[:, 0], lit[:, 1]] == BLUE).all()


def test_edge_endpoints_carry_node_colors():
    s = make_schema(2, {(1, 2)}, [(1, RED), (2, BLUE)])
    ls = LandmarkSet([[10.0, 50.0], [200.0, 50.0]], 256, 256, 0.1)
    img = rasterize(ls, s, size=256, style=RasterStyle(node_radius=0, edge_thickness=1))
    row = img[50, 10:201]
    assert tuple(row[0]) == RED and tuple(row[-1]) == BLUE
    assert (np.diff(row[:, 0].astype(int)) <= 0).all() and (np.diff(row[:, 2].astype(int)) >= 0).all()
    assert not img[:50].any() and not img[51:].any()


def test_raster_size_and_background(schema, pool):
    img = rasterize(pool[0], schema, size=64)
    assert img.shape == (64, 64, 3) and img.dtype == np.uint8
    assert (img[0, 0] == 0).all()


def test_small_raster_rejected(schema, pool):
    with pytest.raises(ConfigError):
        rasterize(pool[0], schema, size=31)


def test_png_deterministic(schema, pool):
    a = hashlib.sha256(png_bytes(rasterize(pool[0], schema))).hexdigest()
    b = hashlib.sha256(png_bytes(rasterize(pool[0], schema))).hexdigest()
    assert a == b


def test_rasterize_many_independent_of_jobs(schema, pool):
    assert rasterize_many(pool[:20], schema, jobs=1) == rasterize_many(pool[:20], schema, jobs=2)


def test_coloring_ignores_coordinates(schema, pool):
    assert color_nodes(schema) == color_nodes(schema)
    col = color_nodes(schema).as_array()
    for ls in pool[:2]:
        img = rasterize(ls, schema, coloring=color_nodes(schema))
        assert np.array_equal(img, rasterize(ls, schema))
    assert col.shape == (38, 3)
