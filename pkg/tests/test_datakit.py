import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cashsight import datakit as D
from conftest import textured_bgr
from oracles import rotate_box_corners


class TestClassTable:
    def test_thirty_classes(self):
        assert len(D.CLASS_TABLE) == 30
        assert [e.class_id for e in D.CLASS_TABLE] == list(range(30))

    def test_names_are_sorted_table_order(self):
        assert list(D.CLASS_NAMES) == sorted(D.CLASS_NAMES)

    def test_groups_partition(self):
        groups = {}
        for e in D.CLASS_TABLE:
            groups.setdefault(e.group, set()).add(e.value)
        assert groups["BDT"] == {1, 2, 5, 10, 20, 50, 100, 200, 500, 1000}
        assert groups["USD"] == {1, 2, 5, 10, 20, 50, 100}
        assert groups["EUR"] == {1, 2, 5, 10, 20, 50, 100}
        assert groups["EURCENT"] == {1, 2, 5, 10, 20, 50}

    def test_lookup_examples(self):
        e = D.class_lookup("50eurocent")
        assert (e.group, e.value) == ("EURCENT", 50)
        e = D.class_lookup("2dollar")
        assert (e.group, e.value) == ("USD", 2)

    def test_lookup_by_id_matches_name(self):
        for e in D.CLASS_TABLE:
            assert D.class_lookup(e.class_id) is e
            assert D.class_lookup(e.name) is e

    def test_unknown_rejected(self):
        with pytest.raises(KeyError):
            D.class_lookup("3dollar")
        with pytest.raises(KeyError):
            D.class_lookup(30)

    def test_spoken_strings(self):
        assert D.class_lookup("5taka").spoken == "5 taka"
        assert D.class_lookup("100dollar").spoken == "100 dollar"


class TestYoloTxt:
    def test_full_image_box(self, tmp_path):
        p = tmp_path / "a.txt"
        p.write_text("0 0.5 0.5 1.0 1.0\n")
        anns = D.read_yolo_txt(p)
        assert anns == [D.Annotation(0, 0.5, 0.5, 1.0, 1.0)]
        assert anns[0].to_pixel_xyxy(100, 60) == (0.0, 0.0, 100.0, 60.0)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("")
        assert D.read_yolo_txt(p) == []

    def test_malformed_line_names_line_number(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("0 0.5\n")
        with pytest.raises(D.LabelParseError, match="line 1"):
            D.read_yolo_txt(p)

    def test_class_out_of_range(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("0 0.5 0.5 0.2 0.2\n31 0.5 0.5 0.2 0.2\n")
        with pytest.raises(D.LabelParseError, match="line 2.*31"):
            D.read_yolo_txt(p)

    def test_coord_out_of_range_names_field(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("0 0.5 1.5 0.2 0.2\n")
        with pytest.raises(D.LabelParseError, match="cy"):
            D.read_yolo_txt(p)

    @pytest.mark.parametrize("seed", range(5))
    def test_write_read_roundtrip(self, seed, tmp_path):
        rng = np.random.default_rng(seed)
        anns = []
        for _ in range(100):
            w, h = rng.uniform(0.01, 1.0, 2)
            cx = rng.uniform(w / 2, 1 - w / 2)
            cy = rng.uniform(h / 2, 1 - h / 2)
            anns.append(D.Annotation(int(rng.integers(0, 30)), cx, cy, w, h))
        p = tmp_path / "x.txt"
        D.write_yolo_txt(anns, p)
        back = D.read_yolo_txt(p)
        assert len(back) == len(anns)
        for a, b in zip(anns, back):
            assert a.class_id == b.class_id
            for fa, fb in zip((a.cx, a.cy, a.w, a.h), (b.cx, b.cy, b.w, b.h)):
                assert abs(fa - fb) <= 1e-6


class TestSplit:
    def test_100_items_split_70_15_15(self):
        train, val, test = D.split_dataset(list(range(100)), D.SplitSpec(seed=3))
        assert (len(train), len(val), len(test)) == (70, 15, 15)

    def test_single_item_goes_to_test(self):
        train, val, test = D.split_dataset(["only"], D.SplitSpec())
        assert (train, val, test) == ([], [], ["only"])

    def test_deterministic_and_partitioning(self):
        items = list(range(37))
        a = D.split_dataset(items, D.SplitSpec(seed=9))
        b = D.split_dataset(items, D.SplitSpec(seed=9))
        assert a == b
        merged = sorted(a[0] + a[1] + a[2])
        assert merged == items

    @given(st.integers(1, 200), st.integers(0, 1000))
    @settings(max_examples=30)
    def test_always_disjoint_and_exhaustive(self, n, seed):
        items = list(range(n))
        train, val, test = D.split_dataset(items, D.SplitSpec(seed=seed))
        assert len(train) == int(0.7 * n)
        assert len(val) == int(0.15 * n)
        assert sorted(train + val + test) == items

    def test_bad_fractions_rejected(self):
        with pytest.raises(ValueError, match="sum"):
            D.SplitSpec(0.5, 0.2, 0.2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            D.split_dataset([], D.SplitSpec())


class TestRotation:
    def square(self, seed=0, n=64):
        return textured_bgr(seed, n, n)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            D.rotate_image_and_boxes(np.zeros((10, 20, 3), np.uint8), [], 90)

    def test_unsupported_angle_rejected(self):
        with pytest.raises(ValueError, match="angle"):
            D.rotate_image_and_boxes(self.square(), [], 45)

    def test_360_is_identity(self):
        img = self.square(1)
        anns = [D.Annotation(3, 0.3, 0.4, 0.2, 0.1)]
        out_img, out_anns = D.rotate_image_and_boxes(img, anns, 360)
        assert np.array_equal(out_img, img)
        assert out_anns == anns

    def test_90_degree_box_example(self):
        anns = [D.Annotation(0, 0.25, 0.25, 0.1, 0.2)]
        _, out = D.rotate_image_and_boxes(self.square(), anns, 90)
        a = out[0]
        assert (a.cx, a.cy) == pytest.approx((0.75, 0.25))
        assert (a.w, a.h) == pytest.approx((0.2, 0.1))

    def test_30_degree_centered_square_aabb(self):
        w = 0.3
        anns = [D.Annotation(0, 0.5, 0.5, w, w)]
        _, out = D.rotate_image_and_boxes(self.square(), anns, 30)
        expected = w * (math.cos(math.radians(30)) + math.sin(math.radians(30)))
        assert out[0].w == pytest.approx(expected, abs=1e-9)
        assert out[0].h == pytest.approx(expected, abs=1e-9)

    def test_box_matches_corner_arithmetic_oracle(self):
        for angle in (30, 60, 90, 180, 270):
            anns = [D.Annotation(0, 0.55, 0.42, 0.2, 0.14)]
            _, out = D.rotate_image_and_boxes(self.square(), anns, angle)
            x1, y1, x2, y2 = rotate_box_corners(0.55, 0.42, 0.2, 0.14, angle)
            a = out[0]
            assert a.cx == pytest.approx((x1 + x2) / 2, abs=1e-9)
            assert a.w == pytest.approx(x2 - x1, abs=1e-9)
            assert a.h == pytest.approx(y2 - y1, abs=1e-9)

    def test_right_angles_are_pixel_permutations(self):
        img = self.square(2)
        out, _ = D.rotate_image_and_boxes(img, [], 90)
        assert sorted(out.ravel()) == sorted(img.ravel())

    def test_180_twice_is_identity(self):
        img = self.square(3)
        once, _ = D.rotate_image_and_boxes(img, [], 180)
        twice, _ = D.rotate_image_and_boxes(once, [], 180)
        assert np.array_equal(twice, img)

    def test_90_pixel_against_point_formula(self):
        img = self.square(4, 8)
        out, _ = D.rotate_image_and_boxes(img, [], 90)
        n = 8
        for y in range(n):
            for x in range(n):
                # continuous-coordinate rotation of the pixel center
                sx, sy = x + 0.5 - n / 2, y + 0.5 - n / 2
                dx, dy = -sy, sx
                nx, ny = int(dx + n / 2 - 0.5), int(dy + n / 2 - 0.5)
                assert np.array_equal(out[ny, nx], img[y, x])

    def test_sliver_boxes_dropped(self):
        # box hugging the corner mostly rotates out of the canvas at 30 deg
        anns = [D.Annotation(0, 0.02, 0.5, 0.04, 0.9)]
        _, out = D.rotate_image_and_boxes(self.square(), anns, 30)
        for a in out:
            assert a.w * a.h >= 0.2 * 0.04 * 0.9


class TestAugmentTwelve:
    def test_exactly_twelve(self):
        img = textured_bgr(5, 64, 64)
        out = D.augment_twelve(img, [D.Annotation(0, 0.5, 0.5, 0.4, 0.2)])
        assert len(out) == 12

    def test_0_360_reproduces_input(self):
        img = textured_bgr(6, 64, 64)
        anns = [D.Annotation(1, 0.4, 0.6, 0.2, 0.2)]
        out = D.augment_twelve(img, anns)
        idx = D.AUGMENT_ANGLES.index((0, 360))
        assert np.array_equal(out[idx][0], img)
        assert out[idx][1] == anns

    def test_30_90_equals_direct_120_within_one_level(self):
        img = textured_bgr(7, 64, 64)
        out = D.augment_twelve(img, [])
        idx = D.AUGMENT_ANGLES.index((30, 90))
        composite = out[idx][0]
        direct = D._rotate_pixels(img, 120.0)
        diff = np.abs(composite.astype(int) - direct.astype(int))
        assert diff.max() <= 1

    def test_outputs_distinct_from_each_other(self):
        img = textured_bgr(8, 64, 64)
        out = D.augment_twelve(img, [])
        hashes = {o[0].tobytes() for o in out}
        assert len(hashes) == 12
