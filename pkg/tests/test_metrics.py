import numpy as np
import pytest

from sceneadapt.errors import DataError, UsageError
from sceneadapt.metrics import ConfusionMatrix


def brute_force_counts(predicted, gt, num_classes):
    """Reference recount: one pixel at a time."""
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p, g in zip(predicted.reshape(-1), gt.reshape(-1)):
        counts[g, p] += 1
    return counts


def from_counts(counts):
    counts = np.asarray(counts, dtype=np.int64)
    cm = ConfusionMatrix(counts.shape[0])
    cm.counts = counts
    return cm


def test_accumulate_perfect_prediction_is_diagonal():
    cm = ConfusionMatrix(3)
    mask = np.array([[0, 1], [2, 1]])
    cm.accumulate(mask, mask)
    assert np.array_equal(cm.counts, np.diag([1, 2, 1]))


def test_accumulate_hand_counts():
    cm = ConfusionMatrix(2)
    gt = np.array([[0, 0], [1, 1]])
    pred = np.array([[0, 1], [1, 1]])
    cm.accumulate(pred, gt)
    assert np.array_equal(cm.counts, [[1, 1], [0, 2]])


def test_accumulate_is_additive(rng=np.random.default_rng(3)):
    a_pred, a_gt = rng.integers(0, 4, (2, 8, 8))
    b_pred, b_gt = rng.integers(0, 4, (2, 8, 8))
    one = ConfusionMatrix(4)
    one.accumulate(a_pred, a_gt)
    one.accumulate(b_pred, b_gt)
    both = ConfusionMatrix(4)
    both.accumulate(np.concatenate([a_pred, b_pred]), np.concatenate([a_gt, b_gt]))
    assert np.array_equal(one.counts, both.counts)


def test_merge_matches_joint_accumulation(rng=np.random.default_rng(4)):
    pred, gt = rng.integers(0, 3, (2, 10, 10))
    a = ConfusionMatrix(3)
    a.accumulate(pred[:5], gt[:5])
    b = ConfusionMatrix(3)
    b.accumulate(pred[5:], gt[5:])
    a.merge(b)
    whole = ConfusionMatrix(3)
    whole.accumulate(pred, gt)
    assert np.array_equal(a.counts, whole.counts)


def test_accumulate_rejects_out_of_range_ids():
    cm = ConfusionMatrix(2)
    with pytest.raises(DataError):
        cm.accumulate(np.array([0, 2]), np.array([0, 1]))
    with pytest.raises(DataError):
        cm.accumulate(np.array([0, 1]), np.array([-1, 1]))


def test_accumulate_rejects_shape_mismatch():
    cm = ConfusionMatrix(2)
    with pytest.raises(UsageError):
        cm.accumulate(np.zeros((2, 2), dtype=int), np.zeros((2, 3), dtype=int))


def test_matches_brute_force_on_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        c = int(rng.integers(2, 9))
        pred = rng.integers(0, c, (32, 32))
        gt = rng.integers(0, c, (32, 32))
        cm = ConfusionMatrix(c)
        cm.accumulate(pred, gt)
        assert np.array_equal(cm.counts, brute_force_counts(pred, gt, c))


def test_per_class_accuracy_hand_case():
    mean, values = from_counts([[2, 1], [0, 1]]).per_class_accuracy()
    assert values[0] == pytest.approx(2 / 3)
    assert values[1] == pytest.approx(1.0)
    assert mean == pytest.approx(5 / 6)


def test_mean_iou_hand_case():
    mean, values = from_counts([[2, 1], [0, 1]]).mean_iou()
    assert values[0] == pytest.approx(2 / 3)
    assert values[1] == pytest.approx(1 / 2)
    assert mean == pytest.approx(7 / 12)


def test_absent_class_excluded_from_accuracy():
    mean, values = from_counts([[3, 0, 0], [1, 1, 0], [0, 0, 0]]).per_class_accuracy()
    assert values[2] is None
    assert mean == pytest.approx((1.0 + 0.5) / 2)


def test_false_positive_only_class_scores_zero_iou():
    # Class 1 never occurs in ground truth but absorbs a prediction.
    mean, values = from_counts([[3, 1], [0, 0]]).mean_iou()
    assert values[1] == 0.0
    assert mean == pytest.approx((3 / 4 + 0.0) / 2)


def test_class_absent_everywhere_excluded_from_iou():
    mean, values = from_counts([[4, 0, 0], [1, 2, 0], [0, 0, 0]]).mean_iou()
    assert values[2] is None
    assert mean == pytest.approx((4 / 5 + 2 / 3) / 2)


def test_metrics_undefined_without_pixels():
    cm = ConfusionMatrix(3)
    with pytest.raises(DataError):
        cm.per_class_accuracy()
    with pytest.raises(DataError):
        cm.mean_iou()


def test_mean_iou_never_exceeds_accuracy():
    rng = np.random.default_rng(19)
    for _ in range(50):
        c = int(rng.integers(2, 7))
        cm = ConfusionMatrix(c)
        cm.accumulate(rng.integers(0, c, (16, 16)), rng.integers(0, c, (16, 16)))
        assert cm.mean_iou()[0] <= cm.per_class_accuracy()[0] + 1e-12


def test_permuting_pixels_leaves_metrics_unchanged():
    rng = np.random.default_rng(23)
    pred = rng.integers(0, 5, 400)
    gt = rng.integers(0, 5, 400)
    order = rng.permutation(400)
    a = ConfusionMatrix(5)
    a.accumulate(pred, gt)
    b = ConfusionMatrix(5)
    b.accumulate(pred[order], gt[order])
    assert np.array_equal(a.counts, b.counts)


def test_report_csv_layout():
    cm = from_counts([[2, 1], [0, 1]])
    lines = cm.report_csv(["road", "pole"]).strip().split("\n")
    assert lines[0] == "class,c_acc,m_iou"
    assert lines[1] == "Average,0.8333,0.5833"
    assert lines[2] == "road,0.6667,0.6667"
    assert lines[3] == "pole,1.0000,0.5000"


def test_report_csv_blank_cells_for_absent_class():
    cm = from_counts([[2, 0, 0], [0, 1, 0], [0, 0, 0]])
    lines = cm.report_csv(["a", "b", "c"]).strip().split("\n")
    assert lines[4] == "c,,"
