import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cashsight import head as H
from cashsight.config import DEFAULT_ANCHORS
from cashsight.tensorops import grad_check, sigmoid
from oracles import nms_reference


def make_se(channels, reduction=16, seed=0):
    return H.SEBlock(channels, reduction=reduction, rng=np.random.default_rng(seed), dtype=np.float64)


class TestSEBlock:
    def test_saturated_gate_passes_input_through(self):
        se = make_se(8, reduction=4)
        se.fc2.weight.value[:] = 0.0
        se.fc2.bias.value[:] = 20.0  # sigmoid(20) ~ 1
        x = np.random.default_rng(0).standard_normal((2, 8, 4, 4))
        out = se.forward(x)
        assert np.max(np.abs(out - x)) < 1e-6

    def test_zero_input_gives_zero_output(self):
        se = make_se(8, reduction=4, seed=3)
        se.fc1.bias.value[:] = 0.7  # nonzero gate either way
        out = se.forward(np.zeros((1, 8, 3, 3)))
        assert np.all(out == 0)

    def test_hidden_width_32_16_2(self):
        se = make_se(32, reduction=16)
        assert se.fc1.weight.shape == (2, 32)
        assert se.fc2.weight.shape == (32, 2)

    def test_reduction_floors_at_one(self):
        se = make_se(8, reduction=16)
        assert se.fc1.weight.shape == (1, 8)

    def test_gating_never_amplifies(self):
        for seed in range(5):
            se = make_se(16, reduction=4, seed=seed)
            x = np.random.default_rng(seed).standard_normal((2, 16, 5, 5))
            out = se.forward(x)
            assert np.all(np.abs(out) <= np.abs(x) + 1e-12)

    def test_channel_mismatch_raises(self):
        with pytest.raises(Exception, match="SE block"):
            make_se(8).forward(np.zeros((1, 4, 2, 2)))

    def test_gradients(self):
        worst = 0.0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            se = make_se(8, reduction=4, seed=seed)
            x = rng.standard_normal((1, 8, 4, 4))
            params = se.params()

            def forward(arrays):
                xv = arrays[0]
                for p, arr in zip(params, arrays[1:]):
                    p.value = arr
                cache = {}
                y = se.forward(xv, cache=cache)

                def backward(dy):
                    for p in params:
                        p.grad = np.zeros_like(p.value)
                    dx = se.backward(dy, cache)
                    return [dx] + [p.grad for p in params]

                return y, backward

            worst = max(worst, grad_check(forward, [x] + [p.value for p in params], rng=rng))
        assert worst < 1e-5


class TestHeadForward:
    @pytest.mark.parametrize("batch", [1, 2, 4])
    @pytest.mark.parametrize("p5", [256, 512])
    def test_output_shapes(self, batch, p5):
        head = H.DetectionHead(in_channels={"P3": 64, "P4": 128, "P5": p5}, seed=0)
        feats = {
            "P3": np.zeros((batch, 64, 80, 80), np.float32),
            "P4": np.zeros((batch, 128, 40, 40), np.float32),
            "P5": np.zeros((batch, p5, 20, 20), np.float32),
        }
        out = head.forward(feats)
        assert out["P3"].shape == (batch, 105, 80, 80)
        assert out["P4"].shape == (batch, 105, 40, 40)
        assert out["P5"].shape == (batch, 105, 20, 20)

    def test_105_is_3_anchors_times_35(self):
        assert H.OUT_CHANNELS == 105 == H.NUM_ANCHORS * (H.NUM_CLASSES + 5)

    def test_zero_input_zero_biases_yields_conv1_bias(self):
        head = H.DetectionHead(seed=0)
        scale = head.scales["P3"]
        scale.conv3.bias.value[:] = 0.0
        feats = {
            "P3": np.zeros((1, 64, 80, 80), np.float32),
            "P4": np.zeros((1, 128, 40, 40), np.float32),
            "P5": np.zeros((1, 256, 20, 20), np.float32),
        }
        out = head.forward(feats)["P3"]
        expected = scale.conv1.bias.value[None, :, None, None]
        assert np.allclose(out, np.broadcast_to(expected, out.shape), atol=1e-6)

    def test_missing_scale_rejected(self):
        head = H.DetectionHead(seed=0)
        with pytest.raises(ValueError, match="missing scale P5"):
            head.forward({"P3": np.zeros((1, 64, 80, 80), np.float32), "P4": np.zeros((1, 128, 40, 40), np.float32)})

    def test_channel_mismatch_rejected(self):
        head = H.DetectionHead(seed=0)
        feats = {
            "P3": np.zeros((1, 32, 80, 80), np.float32),
            "P4": np.zeros((1, 128, 40, 40), np.float32),
            "P5": np.zeros((1, 256, 20, 20), np.float32),
        }
        with pytest.raises(Exception, match="conv2d expects"):
            head.forward(feats)

    def test_save_load_roundtrip(self, tmp_path):
        head = H.DetectionHead(seed=5)
        path = tmp_path / "head.dnm"
        head.save(path)
        other = H.DetectionHead(seed=9)
        other.load(path)
        for name, arr in head.named_arrays().items():
            assert np.array_equal(other.named_arrays()[name], arr), name


def small_grids():
    return {"P3": 6, "P4": 5, "P5": 4}


class TestDecode:
    def test_all_cold_logits_decode_to_nothing(self):
        raw = {s: np.full((105, 4, 4), -20.0) for s in H.SCALES}
        assert H.decode(raw, DEFAULT_ANCHORS, conf_threshold=0.25) == []

    def test_single_hot_cell_p5(self):
        raw = {s: np.full((105, g, g), -20.0) for s, g in (("P3", 80), ("P4", 40), ("P5", 20))}
        grid = raw["P5"].reshape(3, 35, 20, 20)
        vec = grid[1, :, 10, 10]
        vec[0] = 0.0  # sigmoid -> 0.5
        vec[1] = 0.0
        vec[2] = 0.0  # exp -> 1, size = anchor
        vec[3] = 0.0
        vec[4] = 20.0
        vec[5 + 7] = 20.0
        anchors = dict(DEFAULT_ANCHORS)
        anchors = {**anchors, "P5": [(100.0, 50.0), (100.0, 50.0), (100.0, 50.0)]}
        dets = H.decode(raw, anchors, conf_threshold=0.25)
        assert len(dets) == 1
        d = dets[0]
        cx = (d.box[0] + d.box[2]) / 2
        cy = (d.box[1] + d.box[3]) / 2
        assert cx == pytest.approx(336.0, abs=1e-6) and cy == pytest.approx(336.0, abs=1e-6)
        assert d.box[2] - d.box[0] == pytest.approx(100.0, abs=1e-6)
        assert d.box[3] - d.box[1] == pytest.approx(50.0, abs=1e-6)
        assert d.class_id == 7
        assert d.confidence == pytest.approx(1.0, abs=1e-6)

    def test_three_anchors_per_location(self):
        raw = {s: np.full((105, g, g), -20.0) for s, g in (("P3", 80), ("P4", 40), ("P5", 20))}
        grid = raw["P4"].reshape(3, 35, 40, 40)
        for a in range(3):
            grid[a, 4, 7, 9] = 20.0
            grid[a, 5, 7, 9] = 20.0
        dets = H.decode(raw, DEFAULT_ANCHORS, conf_threshold=0.25)
        assert len(dets) == 3

    def test_wrong_channel_count_rejected(self):
        with pytest.raises(Exception, match="105"):
            H.decode({"P3": np.zeros((104, 4, 4))}, DEFAULT_ANCHORS)

    def test_boxes_clamped_to_canvas(self):
        raw = {s: np.full((105, g, g), -20.0) for s, g in (("P3", 80), ("P4", 40), ("P5", 20))}
        grid = raw["P5"].reshape(3, 35, 20, 20)
        grid[2, 2:4, 0, 0] = 4.0  # oversized box at the corner
        grid[2, 4, 0, 0] = 20.0
        grid[2, 5, 0, 0] = 20.0
        d = H.decode(raw, DEFAULT_ANCHORS, conf_threshold=0.25)[0]
        assert d.box[0] >= 0 and d.box[1] >= 0 and d.box[2] <= 640 and d.box[3] <= 640

    @given(st.data())
    @settings(max_examples=30)
    def test_encode_decode_roundtrip(self, data):
        rng_seed = data.draw(st.integers(0, 10_000))
        rng = np.random.default_rng(rng_seed)
        scale = data.draw(st.sampled_from(H.SCALES))
        anchor = data.draw(st.integers(0, 2))
        stride = H.STRIDES[scale]
        grid = H.GRID_SIZES[scale]
        aw, ah = DEFAULT_ANCHORS[scale][anchor]
        cell = (int(rng.integers(0, grid)), int(rng.integers(0, grid)))
        cx = (cell[0] + rng.uniform(0.05, 0.95)) * stride
        cy = (cell[1] + rng.uniform(0.05, 0.95)) * stride
        w = aw * rng.uniform(0.3, 3.0)
        h = ah * rng.uniform(0.3, 3.0)
        box = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
        assume(box[0] >= 0 and box[1] >= 0)  # decode clamps at the canvas edge
        target = H.AssignedTarget(scale, anchor, cell[0], cell[1], box, class_id=int(rng.integers(0, 30)))
        raw = H.encode_targets([target], DEFAULT_ANCHORS)
        dets = H.decode(raw, DEFAULT_ANCHORS, conf_threshold=0.5, input_size=10_000)
        assert len(dets) == 1
        got = dets[0]
        assert got.class_id == target.class_id
        for a, b in zip(got.box, box):
            assert abs(a - b) < 1e-3


class TestIoU:
    def test_identical(self):
        assert H.iou((1, 2, 5, 7), (1, 2, 5, 7)) == 1.0

    def test_disjoint(self):
        assert H.iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0

    def test_half_overlap_thirds(self):
        assert H.iou((0, 0, 10, 10), (5, 0, 15, 10)) == pytest.approx(1 / 3)

    def test_degenerate_is_zero(self):
        assert H.iou((3, 3, 3, 9), (0, 0, 10, 10)) == 0.0


def _det(box, cls, conf):
    return H.Detection(tuple(map(float, box)), cls, conf)


class TestNms:
    def test_single_survives(self):
        d = _det((0, 0, 10, 10), 1, 0.7)
        assert H.nms([d]) == [d]

    def test_high_overlap_same_class_suppressed(self):
        a = _det((0, 0, 10, 10), 2, 0.9)
        b = _det((0.5, 0, 10.5, 10), 2, 0.8)
        assert H.nms([a, b], 0.45) == [a]

    def test_different_classes_both_kept(self):
        a = _det((0, 0, 10, 10), 2, 0.9)
        b = _det((0.5, 0, 10.5, 10), 3, 0.8)
        assert len(H.nms([a, b], 0.45)) == 2

    def test_matches_exhaustive_oracle_100_seeds(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(1, 11))
            dets = []
            for _ in range(n):
                x1, y1 = rng.uniform(0, 500, 2)
                w, h = rng.uniform(10, 140, 2)
                dets.append(_det((x1, y1, x1 + w, y1 + h), int(rng.integers(0, 3)), float(np.round(rng.uniform(0.1, 1.0), 2))))
            thr = float(rng.uniform(0.2, 0.7))
            assert H.nms(dets, thr) == nms_reference(dets, thr), f"seed {seed}"


class TestAssignTargets:
    def test_best_shape_anchor_wins(self):
        aw, ah = DEFAULT_ANCHORS["P4"][1]
        box = (300 - aw / 2, 300 - ah / 2, 300 + aw / 2, 300 + ah / 2)
        t = H.assign_targets([(box, 5)], DEFAULT_ANCHORS)[0]
        assert (t.scale, t.anchor) == ("P4", 1)
        assert (t.cell_x, t.cell_y) == (300 // 16, 300 // 16)

    def test_one_target_per_slot(self):
        aw, ah = DEFAULT_ANCHORS["P3"][0]
        box = (100 - aw / 2, 100 - ah / 2, 100 + aw / 2, 100 + ah / 2)
        out = H.assign_targets([(box, 1), (box, 2)], DEFAULT_ANCHORS)
        assert len(out) == 1 and out[0].class_id == 1

    def test_cell_clamped_to_grid(self):
        aw, ah = DEFAULT_ANCHORS["P5"][2]
        box = (640 - aw, 640 - ah, 640, 640)  # center at the edge
        t = H.assign_targets([(box, 0)], DEFAULT_ANCHORS)[0]
        assert 0 <= t.cell_x < H.GRID_SIZES[t.scale]


class TestHeadLoss:
    def grids(self):
        return {s: np.random.default_rng(3).standard_normal((1, 105, 4, 4)) * 0.3 for s in H.SCALES}

    def test_no_targets_cold_objectness_is_near_zero(self):
        raw = {s: np.zeros((1, 105, 4, 4)) for s in H.SCALES}
        for s in H.SCALES:
            raw[s].reshape(1, 3, 35, 4, 4)[:, :, 4] = -20.0
        breakdown, grads = H.head_loss(raw, [[]], DEFAULT_ANCHORS)
        assert breakdown.obj < 1e-6
        assert breakdown.box == 0.0 and breakdown.cls == 0.0
        assert breakdown.total < 1e-6

    def test_perfect_prediction_is_near_zero(self):
        aw, ah = DEFAULT_ANCHORS["P4"][0]
        cx, cy = (2 + 0.5) * 16, (1 + 0.5) * 16
        box = (cx - aw / 2, cy - ah / 2, cx + aw / 2, cy + ah / 2)
        target = H.AssignedTarget("P4", 0, 2, 1, box, 9)
        raw = {s: np.zeros((1, 105, 4, 4)) for s in H.SCALES}
        for s in H.SCALES:
            g = raw[s].reshape(1, 3, 35, 4, 4)
            g[:, :, 4] = -20.0
            g[:, :, 5:] = -20.0
        g = raw["P4"].reshape(1, 3, 35, 4, 4)
        g[0, 0, 0:4, 1, 2] = 0.0  # sigmoid 0.5 center offset, size = anchor
        g[0, 0, 4, 1, 2] = 20.0
        g[0, 0, 5 + 9, 1, 2] = 20.0
        breakdown, _ = H.head_loss(raw, [[target]], DEFAULT_ANCHORS)
        assert breakdown.total < 1e-3

    def test_loss_weights_applied(self):
        raw = self.grids()
        breakdown, _ = H.head_loss(raw, [[]], DEFAULT_ANCHORS)
        assert breakdown.total == pytest.approx(breakdown.obj * 1.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        anchors = DEFAULT_ANCHORS
        raw = {s: rng.standard_normal((1, 105, 4, 4)) * 0.5 for s in H.SCALES}
        aw, ah = anchors["P5"][1]
        cx, cy = (2 + 0.45) * 32, (1 + 0.55) * 32
        w, h = aw * 1.1, ah * 0.95
        target = H.AssignedTarget("P5", 1, 2, 1, (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), 7)
        _, grads = H.head_loss(raw, [[target]], anchors)
        eps = 1e-6
        worst = 0.0
        for s in H.SCALES:
            arr = raw[s]
            for idx in [(0, ch, 1, 2) for ch in range(0, 105, 3)]:
                orig = arr[idx]
                arr[idx] = orig + eps
                lp = H.head_loss(raw, [[target]], anchors)[0].total
                arr[idx] = orig - eps
                lm = H.head_loss(raw, [[target]], anchors)[0].total
                arr[idx] = orig
                num = (lp - lm) / (2 * eps)
                ana = grads[s][idx]
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
        assert worst < 1e-5

    def test_nonfinite_raw_aborts(self):
        raw = {s: np.zeros((1, 105, 4, 4)) for s in H.SCALES}
        raw["P3"][0, 0, 0, 0] = np.inf
        with pytest.raises(FloatingPointError):
            H.head_loss(raw, [[]], DEFAULT_ANCHORS)


class TestTrainHead:
    def small_dataset(self, n=2):
        rng = np.random.default_rng(0)
        anchors = DEFAULT_ANCHORS
        dataset = []
        for i in range(n):
            feats = {
                "P3": rng.standard_normal((64, 8, 8)).astype(np.float32),
                "P4": rng.standard_normal((128, 4, 4)).astype(np.float32),
                "P5": rng.standard_normal((256, 2, 2)).astype(np.float32),
            }
            aw, ah = anchors["P3"][0]
            cx, cy = (3 + 0.5) * 8, (2 + 0.5) * 8
            box = (cx - aw / 2, cy - ah / 2, cx + aw / 2, cy + ah / 2)
            dataset.append((feats, [H.AssignedTarget("P3", 0, 3, 2, box, i % 30)]))
        return dataset

    def test_zero_learning_rate_keeps_params_bit_identical(self):
        head = H.DetectionHead(seed=0)
        before = {k: v.copy() for k, v in head.named_arrays().items()}
        H.train_head(head, self.small_dataset(), DEFAULT_ANCHORS, lr=0.0, batch_size=2, epochs=3, seed=0)
        after = head.named_arrays()
        for name, arr in before.items():
            if name.endswith("running_mean") or name.endswith("running_var"):
                continue  # running stats move in training mode regardless of lr
            assert np.array_equal(arr, after[name]), name

    def test_deterministic_history(self):
        h1 = H.DetectionHead(seed=0)
        h2 = H.DetectionHead(seed=0)
        ds = self.small_dataset()
        hist1 = H.train_head(h1, ds, DEFAULT_ANCHORS, lr=0.01, batch_size=2, epochs=5, seed=7)
        hist2 = H.train_head(h2, ds, DEFAULT_ANCHORS, lr=0.01, batch_size=2, epochs=5, seed=7)
        assert hist1 == hist2

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            H.train_head(H.DetectionHead(seed=0), [], DEFAULT_ANCHORS)


class TestKmeansAnchors:
    def test_recovers_three_clusters(self):
        rng = np.random.default_rng(0)
        whs = []
        for cw, ch in ((12, 14), (60, 50), (300, 280)):
            whs += [(cw * rng.uniform(0.9, 1.1), ch * rng.uniform(0.9, 1.1)) for _ in range(40)]
        anchors = H.kmeans_anchors(whs, k=9, seed=1)
        assert set(anchors) == {"P3", "P4", "P5"}
        assert all(len(v) == 3 for v in anchors.values())
        # small shapes land in P3, big ones in P5
        assert anchors["P3"][0][0] < anchors["P5"][0][0]

    def test_too_few_boxes_rejected(self):
        with pytest.raises(ValueError, match="at least"):
            H.kmeans_anchors([(10, 10)], k=9)
