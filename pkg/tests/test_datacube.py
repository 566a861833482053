import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlt.datacube import (CubeHeaderError, CubeNonFiniteError, CubeRangeError, CubeSizeError,
                          EmptyROIError, HyperCube, InvalidGroupingError, Rect, crop_roi,
                          load_cube, make_grouping, save_cube)

from conftest import random_cube


def test_grouping_12_of_5():
    g = make_grouping(60, 12)
    assert len(g) == 12 and g.bands_per_group == 5
    assert g[0] == (0, 5) and g[-1] == (55, 60)


def test_grouping_single_and_20():
    assert make_grouping(60, 1).groups == ((0, 60),)
    g = make_grouping(60, 20)
    assert len(g) == 20 and all(b - a == 3 for a, b in g)


@pytest.mark.parametrize("bands,n", [(60, 7), (60, 0), (10, 20)])
def test_grouping_rejects_uneven(bands, n):
    with pytest.raises(InvalidGroupingError):
        make_grouping(bands, n)


@given(st.sampled_from([1, 2, 3, 4, 5, 6, 10, 12, 15, 20, 30, 60]))
def test_grouping_covers_bands_in_order(n):
    g = make_grouping(60, n)
    flat = [b for a, c in g for b in range(a, c)]
    assert flat == list(range(60))


def test_round_trip_small(tmp_path, rng):
    cube = random_cube(rng, 4, 4, 3)
    save_cube(cube, tmp_path / "c")
    back = load_cube(tmp_path / "c")
    assert back == cube
    assert np.array_equal(back.wavelengths_nm, cube.wavelengths_nm)
    hdr = json.loads((tmp_path / "c.json").read_text())
    assert hdr == {"width": 4, "height": 4, "bands": 3, "wavelengths_nm": [400.0, 410.0, 420.0]}


def test_bsq_layout(tmp_path):
    planes = np.arange(2 * 3 * 4, dtype=np.float32).reshape(2, 3, 4) / 24.0
    save_cube(HyperCube(planes, [500.0, 600.0]), tmp_path / "c")
    raw = np.fromfile(tmp_path / "c.bsq", dtype="<f4")
    # band-major, then row-major
    assert np.array_equal(raw, planes.ravel())


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_round_trip_property(tmp_path_factory, h, w, b, seed):
    cube = random_cube(np.random.default_rng(seed), h, w, b)
    path = tmp_path_factory.mktemp("rt") / "cube"
    save_cube(cube, path)
    assert load_cube(path) == cube


def test_size_mismatch(tmp_path, rng):
    save_cube(random_cube(rng, 2, 2, 60), tmp_path / "c")
    hdr = json.loads((tmp_path / "c.json").read_text())
    hdr["bands"] = 61
    hdr["wavelengths_nm"].append(1000.0)
    (tmp_path / "c.json").write_text(json.dumps(hdr))
    with pytest.raises(CubeSizeError):
        load_cube(tmp_path / "c")


def test_range_error(tmp_path, rng):
    save_cube(random_cube(rng, 2, 2, 3), tmp_path / "c")
    raw = np.fromfile(tmp_path / "c.bsq", dtype="<f4")
    raw[5] = 1.5
    raw.tofile(tmp_path / "c.bsq")
    with pytest.raises(CubeRangeError):
        load_cube(tmp_path / "c")


def test_nonfinite_error(tmp_path, rng):
    save_cube(random_cube(rng, 2, 2, 3), tmp_path / "c")
    raw = np.fromfile(tmp_path / "c.bsq", dtype="<f4")
    raw[0] = np.nan
    raw.tofile(tmp_path / "c.bsq")
    with pytest.raises(CubeNonFiniteError):
        load_cube(tmp_path / "c")


def test_malformed_header(tmp_path, rng):
    save_cube(random_cube(rng, 2, 2, 3), tmp_path / "c")
    (tmp_path / "c.json").write_text('{"width": 2}')
    with pytest.raises(CubeHeaderError):
        load_cube(tmp_path / "c")


def test_error_kinds_are_distinct():
    kinds = {CubeHeaderError, CubeSizeError, CubeRangeError, CubeNonFiniteError}
    assert len(kinds) == 4
    for a in kinds:
        for b in kinds - {a}:
            assert not issubclass(a, b)


def test_wavelengths_must_increase():
    with pytest.raises(CubeHeaderError):
        HyperCube(np.zeros((2, 1, 1)), [500.0, 500.0])


def test_cube_is_read_only(rng):
    cube = random_cube(rng, 3, 3, 2)
    with pytest.raises(ValueError):
        cube.planes[0, 0, 0] = 0.5


def test_hwb_view(rng):
    cube = random_cube(rng, 3, 5, 2)
    assert cube.data.shape == (3, 5, 2) == cube.shape
    assert cube.data[1, 4, 1] == cube.planes[1, 1, 4]


def test_crop_full_frame_identity(rng):
    cube = random_cube(rng, 8, 8, 3)
    assert crop_roi(cube, Rect(0, 0, 8, 8)) == cube


def test_crop_200():
    cube = HyperCube(np.zeros((2, 240, 260), np.float32), [1.0, 2.0])
    out = crop_roi(cube, Rect(0, 0, 200, 200))
    assert (out.width, out.height, out.bands) == (200, 200, 2)
    assert np.array_equal(out.wavelengths_nm, cube.wavelengths_nm)


def test_crop_clamps_right_edge(rng):
    cube = random_cube(rng, 20, 30, 2)
    out = crop_roi(cube, Rect(10, 0, 30, 10))
    assert out.width == 20 and out.height == 10
    assert np.array_equal(out.planes, cube.planes[:, 0:10, 10:30])


def test_crop_empty():
    cube = HyperCube(np.zeros((1, 4, 4), np.float32), [1.0])
    with pytest.raises(EmptyROIError):
        crop_roi(cube, Rect(10, 10, 3, 3))


@settings(max_examples=50, deadline=None)
@given(st.integers(-5, 15), st.integers(-5, 15), st.integers(1, 20), st.integers(1, 20))
def test_crop_idempotent(x, y, w, h):
    cube = random_cube(np.random.default_rng(0), 12, 14, 2)
    try:
        once = crop_roi(cube, Rect(x, y, w, h))
    except EmptyROIError:
        return
    assert crop_roi(once, Rect(0, 0, once.width, once.height)) == once


def test_rect_iou():
    a = Rect(0, 0, 10, 10)
    assert a.iou(a) == 1.0
    assert a.iou(Rect(5, 0, 10, 10)) == pytest.approx(50 / 150)
    assert a.iou(Rect(10, 0, 5, 5)) == 0.0
