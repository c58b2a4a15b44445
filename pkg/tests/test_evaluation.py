"""Frame metric tests with hand-computed oracles on tiny grids."""

import numpy as np
import pytest

from rflabel.errors import InputError
from rflabel.evaluation import (
    boundary_metrics,
    frame_metrics,
    mask_metrics,
    recall_at,
    sequence_metrics,
)


def grid(rows):
    return np.array(rows, dtype=np.uint8)


class TestMaskMetrics:
    def test_perfect_prediction(self):
        g = grid([[0, 1, 1], [0, 2, 2], [0, 0, 0]])
        t = {1: "A", 2: "B"}
        assert mask_metrics(g, t, g, t) == (1.0, 1.0, 1.0)

    def test_relabeled_ids_still_perfect(self):
        g = grid([[0, 1, 1], [0, 2, 2], [0, 0, 0]])
        h = grid([[0, 2, 2], [0, 1, 1], [0, 0, 0]])
        assert mask_metrics(h, {2: "A", 1: "B"}, g, {1: "A", 2: "B"}) == (1.0, 1.0, 1.0)

    def test_half_overlap_hand_computed(self):
        gt = grid([[1, 1, 1, 1]])
        pred = grid([[1, 1, 0, 0]])
        f, p, r = mask_metrics(pred, {1: "A"}, gt, {1: "A"})
        assert p == 1.0
        assert r == 0.5
        assert f == pytest.approx(2 * 1.0 * 0.5 / 1.5)

    def test_epc_mismatch_zeroes_true_positives(self):
        g = grid([[1, 1]])
        f, p, r = mask_metrics(g, {1: "A"}, g, {1: "B"})
        assert (f, p, r) == (0.0, 0.0, 0.0)

    def test_empty_prediction_against_nonempty_gt(self):
        gt = grid([[1]])
        pred = grid([[0]])
        assert mask_metrics(pred, {}, gt, {1: "A"}) == (0.0, 0.0, 0.0)

    def test_both_empty(self):
        z = grid([[0]])
        assert mask_metrics(z, {}, z, {}) == (1.0, 1.0, 1.0)

    def test_one_to_one_matching_penalizes_splits(self):
        gt = grid([[1, 1, 1, 1]])
        pred = grid([[1, 1, 2, 2]])  # gt object split into two predictions
        f, p, r = mask_metrics(pred, {1: "A", 2: "A"}, gt, {1: "A"})
        # only one predicted instance can match the single gt instance
        assert p == 0.5 and r == 0.5

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InputError):
            mask_metrics(grid([[0]]), {}, grid([[0, 0]]), {})


class TestBoundaryMetrics:
    def test_perfect(self):
        g = np.zeros((8, 8), dtype=np.uint8)
        g[2:6, 2:6] = 1
        assert boundary_metrics(g, {1: "A"}, g, {1: "A"}, tol_px=0) == (1.0, 1.0, 1.0)

    def test_one_pixel_shift_within_tolerance(self):
        g = np.zeros((10, 10), dtype=np.uint8)
        g[2:6, 2:6] = 1
        h = np.zeros((10, 10), dtype=np.uint8)
        h[3:7, 2:6] = 1  # shifted down by 1
        f, p, r = boundary_metrics(h, {1: "A"}, g, {1: "A"}, tol_px=2)
        assert (f, p, r) == (1.0, 1.0, 1.0)

    def test_shift_beyond_tolerance_misses(self):
        g = np.zeros((16, 16), dtype=np.uint8)
        g[2:6, 2:6] = 1
        h = np.zeros((16, 16), dtype=np.uint8)
        h[10:14, 10:14] = 1
        f, p, r = boundary_metrics(h, {1: "A"}, g, {1: "A"}, tol_px=1)
        assert f == 0.0

    def test_epc_aware(self):
        g = np.zeros((8, 8), dtype=np.uint8)
        g[2:6, 2:6] = 1
        f, p, r = boundary_metrics(g, {1: "A"}, g, {1: "B"}, tol_px=2)
        assert f == 0.0

    def test_empty_conventions(self):
        z = np.zeros((4, 4), dtype=np.uint8)
        g = np.zeros((4, 4), dtype=np.uint8)
        g[1:3, 1:3] = 1
        assert boundary_metrics(z, {}, z, {}) == (1.0, 1.0, 1.0)
        assert boundary_metrics(z, {}, g, {1: "A"}) == (0.0, 0.0, 0.0)

    def test_negative_tolerance_rejected(self):
        z = np.zeros((4, 4), dtype=np.uint8)
        with pytest.raises(InputError):
            boundary_metrics(z, {}, z, {}, tol_px=-1)


class TestRecallAt:
    def test_exact_match(self):
        g = grid([[1, 1, 0, 0]])
        assert recall_at(g, {1: "A"}, g, {1: "A"}, tau=0.75) == 1.0

    def test_low_iou_fails_threshold(self):
        gt = grid([[1, 1, 1, 1]])
        pred = grid([[1, 0, 0, 0]])  # IoU 0.25
        assert recall_at(pred, {1: "A"}, gt, {1: "A"}, tau=0.75) == 0.0
        assert recall_at(pred, {1: "A"}, gt, {1: "A"}, tau=0.25) == 1.0

    def test_epc_must_agree(self):
        g = grid([[1, 1]])
        assert recall_at(g, {1: "B"}, g, {1: "A"}, tau=0.5) == 0.0

    def test_empty_gt_is_one(self):
        z = grid([[0]])
        assert recall_at(z, {}, z, {}, tau=0.75) == 1.0

    def test_bad_tau_rejected(self):
        z = grid([[0]])
        with pytest.raises(InputError):
            recall_at(z, {}, z, {}, tau=0.0)


class TestAggregation:
    def test_frame_metrics_bundle(self):
        g = np.zeros((8, 8), dtype=np.uint8)
        g[2:6, 2:6] = 1
        fm = frame_metrics(g, {1: "A"}, g, {1: "A"})
        assert fm.mask_f == 1.0
        assert fm.boundary_f == 1.0
        assert fm.recall_at[0.75] == 1.0

    def test_sequence_metrics_strided_mean(self):
        g = np.zeros((8, 8), dtype=np.uint8)
        g[2:6, 2:6] = 1
        z = np.zeros((8, 8), dtype=np.uint8)
        gt = [(g, {1: "A"})] * 4
        pred = [(g, {1: "A"}), (z, {}), (g, {1: "A"}), (z, {})]
        # stride 2 picks frames 0 and 2, both perfect
        fm = sequence_metrics(pred, gt, sample_stride=2)
        assert fm.mask_f == 1.0
        # stride 1 averages in the two empty frames
        fm = sequence_metrics(pred, gt, sample_stride=1)
        assert fm.mask_f == pytest.approx(0.5)

    def test_length_mismatch_rejected(self):
        with pytest.raises(InputError):
            sequence_metrics([], [(np.zeros((2, 2), dtype=np.uint8), {})])
