"""Mask codec tests: rasterization, RLE round trips, golden strings, box/area."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pastiche.masks import (
    EMPTY_BBOX,
    Rle,
    bitmap_to_rle,
    compress_rle,
    decompress_rle,
    mask_area,
    polygons_to_bitmap,
    rle_to_bitmap,
    tight_bbox,
)

FIXTURES = Path(__file__).parent / "fixtures"


def _bitmap_from_case(case: dict) -> np.ndarray:
    h, w = case["size"]
    b = np.zeros((h, w), dtype=bool)
    for r, c in case["foreground"]:
        b[r, c] = True
    return b


def _point_in_polygon(px: float, py: float, xs: list[float], ys: list[float]) -> bool:
    """Scalar even-odd crossing test (independent reference for the rasterizer)."""
    inside = False
    j = len(xs) - 1
    for i in range(len(xs)):
        if (ys[i] > py) != (ys[j] > py):
            x_cross = (xs[j] - xs[i]) * (py - ys[i]) / (ys[j] - ys[i]) + xs[i]
            if px < x_cross:
                inside = not inside
        j = i
    return inside


def _rasterize_reference(poly: list[float], h: int, w: int) -> np.ndarray:
    xs, ys = list(poly[0::2]), list(poly[1::2])
    out = np.zeros((h, w), dtype=bool)
    for r in range(h):
        for c in range(w):
            out[r, c] = _point_in_polygon(c + 0.5, r + 0.5, xs, ys)
    return out


class TestGoldenRle:
    def test_golden_strings(self):
        cases = json.loads((FIXTURES / "golden_rle.json").read_text())["cases"]
        assert len(cases) >= 8
        for case in cases:
            bitmap = _bitmap_from_case(case)
            rle = bitmap_to_rle(bitmap)
            assert list(rle.counts) == case["counts"], case["name"]
            s = compress_rle(rle)
            assert s == case["string"], case["name"]
            back = decompress_rle(case["string"], tuple(case["size"]))
            assert list(back.counts) == case["counts"], case["name"]
            np.testing.assert_array_equal(rle_to_bitmap(back), bitmap, err_msg=case["name"])


class TestRleRoundTrip:
    def test_all_zero_3x3(self):
        rle = bitmap_to_rle(np.zeros((3, 3), dtype=bool))
        assert rle.counts == (9,)
        assert rle.area == 0

    def test_all_one_3x3(self):
        rle = bitmap_to_rle(np.ones((3, 3), dtype=bool))
        assert rle.counts == (0, 9)
        assert rle.area == 9

    def test_counts_start_with_background_run(self):
        b = np.zeros((4, 4), dtype=bool)
        b[0, 0] = True
        assert bitmap_to_rle(b).counts[0] == 0

    @given(hnp.arrays(dtype=bool, shape=st.tuples(st.integers(1, 64), st.integers(1, 64))))
    @settings(max_examples=200, deadline=None)
    def test_bitmap_rle_string_roundtrip(self, bitmap):
        rle = bitmap_to_rle(bitmap)
        assert sum(rle.counts) == bitmap.size
        np.testing.assert_array_equal(rle_to_bitmap(rle), bitmap)
        s = compress_rle(rle)
        back = decompress_rle(s, rle.size)
        assert back.counts == rle.counts

    def test_random_16x16_roundtrip(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            b = rng.random((16, 16)) < rng.random()
            np.testing.assert_array_equal(rle_to_bitmap(bitmap_to_rle(b)), b)

    def test_negative_delta_roundtrip(self):
        # counts[2] < counts[0] forces a negative stored delta
        rle = Rle(size=(7, 1), counts=(3, 1, 2, 1))
        assert decompress_rle(compress_rle(rle), (7, 1)).counts == rle.counts

    def test_large_counts_multiword(self):
        b = np.zeros((300, 300), dtype=bool)
        b[100:200, 150:250] = True
        rle = bitmap_to_rle(b)
        assert decompress_rle(compress_rle(rle), rle.size).counts == rle.counts


class TestRleErrors:
    def test_counts_sum_mismatch(self):
        with pytest.raises(ValueError, match="sum"):
            rle_to_bitmap(Rle(size=(3, 3), counts=(4, 4)))

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            Rle(size=(3, 3), counts=(-1, 10))

    def test_character_out_of_range(self):
        with pytest.raises(ValueError, match="48..111"):
            decompress_rle("9\x1f", (3, 3))
        with pytest.raises(ValueError, match="48..111"):
            decompress_rle("~9", (3, 3))

    def test_truncated_continuation(self):
        # 'd' has the continuation bit set, so a following word is required
        with pytest.raises(ValueError, match="truncated"):
            decompress_rle("d", (5, 5))


class TestRasterize:
    def test_axis_aligned_rectangle(self):
        b = polygons_to_bitmap([[0, 0, 4, 0, 4, 3, 0, 3]], 10, 10)
        assert mask_area(b) == 12
        assert b[:3, :4].all()
        assert not b[3:, :].any() and not b[:, 4:].any()

    def test_matches_reference_scan(self):
        rng = np.random.default_rng(11)
        h, w = 18, 15
        for _ in range(20):
            n = int(rng.integers(3, 9))
            poly = []
            for _ in range(n):
                poly += [float(rng.uniform(-2, w + 2)), float(rng.uniform(-2, h + 2))]
            got = polygons_to_bitmap([poly], h, w)
            np.testing.assert_array_equal(got, _rasterize_reference(poly, h, w))

    def test_degenerate_polygon_empty(self):
        b = polygons_to_bitmap([[0, 0, 2, 2, 4, 4]], 8, 8)
        assert mask_area(b) == 0

    def test_disjoint_triangles_union(self):
        t1 = [1, 1, 8, 1, 1, 8]
        t2 = [12, 12, 18, 12, 12, 18]
        a1 = mask_area(polygons_to_bitmap([t1], 24, 24))
        a2 = mask_area(polygons_to_bitmap([t2], 24, 24))
        both = mask_area(polygons_to_bitmap([t1, t2], 24, 24))
        assert a1 > 0 and a2 > 0
        assert both == a1 + a2

    def test_too_few_vertices(self):
        with pytest.raises(ValueError, match="at least 3"):
            polygons_to_bitmap([[0, 0, 1, 1]], 4, 4)

    def test_out_of_bounds_vertices_clip_to_canvas(self):
        # rectangle extends past the right edge; only in-canvas pixels survive
        b = polygons_to_bitmap([[5, 0, 20, 0, 20, 4, 5, 4]], 6, 10)
        assert b[:4, 5:10].all()
        assert mask_area(b) == 20


class TestBoxAndArea:
    def test_empty_sentinel(self):
        b = np.zeros((5, 5), dtype=bool)
        assert tight_bbox(b) == EMPTY_BBOX
        assert mask_area(b) == 0

    def test_single_pixel(self):
        b = np.zeros((10, 10), dtype=bool)
        b[7, 5] = True
        assert tight_bbox(b) == (5.0, 7.0, 1.0, 1.0)
        assert mask_area(b) == 1

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            b = rng.random((12, 17)) < 0.2
            # independent min/max scan
            area = 0
            x0 = y0 = 10**9
            x1 = y1 = -1
            for r in range(12):
                for c in range(17):
                    if b[r, c]:
                        area += 1
                        x0, x1 = min(x0, c), max(x1, c)
                        y0, y1 = min(y0, r), max(y1, r)
            assert mask_area(b) == area
            if area == 0:
                assert tight_bbox(b) == EMPTY_BBOX
            else:
                assert tight_bbox(b) == (float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))

    def test_shrink_by_one_excludes_foreground(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            b = rng.random((20, 20)) < 0.1
            if not b.any():
                continue
            x, y, w, h = (int(v) for v in tight_bbox(b))
            assert b[y : y + h, x : x + w].any()
            # each side is load-bearing: shaving it drops at least one pixel
            assert b[y, x : x + w].any()
            assert b[y + h - 1, x : x + w].any()
            assert b[y : y + h, x].any()
            assert b[y : y + h, x + w - 1].any()
