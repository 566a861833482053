import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlt.datacube import HyperCube, Rect, make_grouping
from hlt.detection import (MAX_AREA, MIN_AREA, connected_components, extract_candidates,
                           label_components, morphological_close)
from hlt.fusion import otsu_multilevel
from hlt.likelihood import LikelihoodMap

from oracles import closing_oracle, flood_fill_labels


def partition(labels):
    """Label image -> set of frozen pixel sets (label values ignored)."""
    out = {}
    for (r, c), v in np.ndenumerate(labels):
        if v:
            out.setdefault(v, set()).add((r, c))
    return {frozenset(s) for s in out.values()}


def test_close_all_zero():
    assert not morphological_close(np.zeros((6, 6), bool)).grid.any()


def test_close_fills_one_pixel_gap():
    m = np.zeros((5, 7), bool)
    m[2, 2] = m[2, 4] = True
    assert morphological_close(m).grid[2, 3]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.6))
def test_close_properties(seed, density):
    m = np.random.default_rng(seed).random((15, 17)) < density
    closed = morphological_close(m).grid
    assert np.all(closed[m])  # extensive
    assert np.array_equal(morphological_close(closed).grid, closed)  # idempotent
    assert np.array_equal(closed, closing_oracle(m))


def test_single_rect_component():
    m = np.zeros((10, 12), bool)
    m[2:6, 3:9] = True
    (b,) = connected_components(m)
    assert b.bbox == Rect(3, 2, 6, 4) and b.area == 24
    assert b.centroid == (6.0, 4.0)


def test_diagonal_pixels_join():
    m = np.zeros((4, 4), bool)
    m[1, 1] = m[2, 2] = True
    assert len(connected_components(m)) == 1
    assert len(connected_components(m, connectivity=4)) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 0.6))
def test_labels_match_flood_fill(seed, density):
    m = np.random.default_rng(seed).random((20, 23)) < density
    labels, n = label_components(m)
    ref, n_ref = flood_fill_labels(m)
    assert n == n_ref
    assert partition(labels) == partition(ref)
    # raster order of first pixel
    assert np.array_equal(labels, ref)
    blobs = connected_components(m)
    for b in blobs:
        ys, xs = np.nonzero(labels == b.id)
        assert b.area == ys.size
        assert b.bbox == Rect(xs.min(), ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1)
        cx, cy = b.centroid
        assert b.bbox.x <= cx <= b.bbox.x1 and b.bbox.y <= cy <= b.bbox.y1


def _fused_with_boxes(boxes, shape=(60, 60), seed=0):
    rng = np.random.default_rng(seed)
    g = 0.1 + 0.05 * rng.random(shape)
    for r, level in boxes:
        g[r.y:r.y1, r.x:r.x1] = level
    return LikelihoodMap(g, -1)


def _cube(shape=(60, 60), bands=10, seed=1):
    rng = np.random.default_rng(seed)
    return HyperCube(rng.random((bands,) + shape), 400.0 + np.arange(bands))


def test_defaults_are_20_to_100():
    assert (MIN_AREA, MAX_AREA) == (20, 100)


def test_extract_area_filter_and_order():
    small = Rect(2, 2, 3, 3)      # 9 px, dropped
    mid = Rect(10, 10, 8, 5)      # 40 px
    big = Rect(30, 30, 20, 20)    # 400 px, dropped
    other = Rect(40, 5, 10, 6)    # 60 px
    fused = _fused_with_boxes([(small, 0.9), (mid, 0.8), (big, 0.85), (other, 0.95)])
    blobs = extract_candidates(fused, _cube(), make_grouping(10, 2), levels=1)
    assert [b.bbox for b in blobs] == [other, mid]
    assert blobs[0].mean_confidence == pytest.approx(0.95)
    for b in blobs:
        assert MIN_AREA <= b.area <= MAX_AREA
        assert len(b.histograms) == 2 and all(len(h) == 50 for h in b.histograms)


def test_blob_histograms_cover_bbox():
    cube = _cube()
    fused = _fused_with_boxes([(Rect(10, 10, 8, 5), 0.9)])
    (b,) = extract_candidates(fused, cube, make_grouping(10, 1))
    idx = np.minimum(np.floor(cube.planes[:, 10:15, 10:18].astype(float) * 10), 9).astype(int)
    counts = np.concatenate([np.bincount(idx[k].ravel(), minlength=10) for k in range(10)])
    assert np.allclose(b.histograms[0].values, counts / counts.sum(), atol=1e-15)


def test_flat_map_gives_no_blobs():
    fused = LikelihoodMap(np.full((40, 40), 0.3), -1)
    assert extract_candidates(fused, _cube((40, 40)), make_grouping(10, 2)) == []


def test_bad_area_bounds():
    with pytest.raises(ValueError):
        extract_candidates(_fused_with_boxes([]), _cube(), make_grouping(10, 2), 0, 10)
    with pytest.raises(ValueError):
        extract_candidates(_fused_with_boxes([]), _cube(), make_grouping(10, 2), 50, 10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
def test_extract_invariants(seed, levels):
    rng = np.random.default_rng(seed)
    g = rng.random((40, 40)) ** 3
    for _ in range(4):
        x, y = rng.integers(0, 32, 2)
        g[y:y + rng.integers(3, 9), x:x + rng.integers(3, 9)] = rng.uniform(0.7, 1.0)
    fused = LikelihoodMap(g, -1)
    cube = _cube((40, 40), seed=seed % 7)
    a = extract_candidates(fused, cube, make_grouping(10, 5), 5, 60, levels)
    b = extract_candidates(fused, cube, make_grouping(10, 5), 5, 60, levels)
    assert [x.to_json() for x in a] == [x.to_json() for x in b]
    assert [x.id for x in a] == [x.id for x in b]
    thr = otsu_multilevel(g, levels)[-1]
    closed = morphological_close(g > thr).grid
    labels, _ = label_components(closed)
    seen = set()
    for blob in a:
        assert 5 <= blob.area <= 60
        pix = set(zip(*np.nonzero(labels == blob.id)))
        assert not pix & seen
        seen |= pix
    confs = [x.mean_confidence for x in a]
    assert confs == sorted(confs, reverse=True)
