import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmact.gradcheck import check_loss_gradient, check_loss_through_softmax
from mmact.loss import (
    LossConfig,
    WeightingFn,
    anticipation_loss,
    anticipation_loss_batch,
    frame_times,
    stagewise_total,
    weight_at,
)

SIGMOID_5S = WeightingFn("sigmoid", duration=5.0, alpha=3.0, beta=6.0)
LINEAR_5S = WeightingFn("linear", duration=5.0)


def test_sigmoid_weight_midpoint_exact():
    assert weight_at(SIGMOID_5S, 2.0) == 0.5


def test_sigmoid_weight_at_zero():
    expected = math.exp(-6.0) / (1.0 + math.exp(-6.0))
    assert abs(weight_at(SIGMOID_5S, 0.0) - expected) < 1e-12


def test_linear_weight_endpoints():
    assert weight_at(LINEAR_5S, 5.0) == 1.0
    assert weight_at(LINEAR_5S, 0.0) == 0.0


def test_uniform_weight_is_one_everywhere():
    w = WeightingFn("uniform", duration=5.0)
    assert weight_at(w, 0.0) == 1.0 and weight_at(w, 5.0) == 1.0


def test_weight_out_of_range():
    with pytest.raises(ValueError, match="range"):
        weight_at(SIGMOID_5S, 5.5)
    with pytest.raises(ValueError, match="range"):
        weight_at(SIGMOID_5S, -0.1)


def test_unknown_weighting_kind():
    with pytest.raises(ValueError, match="kind"):
        WeightingFn("quadratic", duration=5.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 2.0))
def test_sigmoid_weight_symmetry_about_midpoint(d):
    mid = SIGMOID_5S.beta / SIGMOID_5S.alpha
    assert abs(weight_at(SIGMOID_5S, mid - d) + weight_at(SIGMOID_5S, mid + d) - 1.0) < 1e-12


@pytest.mark.parametrize("w", [SIGMOID_5S, LINEAR_5S])
def test_weightings_nondecreasing_on_dense_grid(w):
    grid = np.linspace(0.0, w.duration, 2001)
    vals = weight_at(w, grid)
    assert np.all(np.diff(vals) >= 0)
    assert np.all((vals >= 0) & (vals <= 1))


def test_frame_times_one_based():
    times = frame_times(150, 30.0)
    assert times[0] == 1 / 30.0
    assert times[59] == 2.0  # the sigmoid midpoint lands on frame 60
    assert times[-1] == 5.0


def test_uniform_prediction_single_frame_linear_weight():
    # one frame at t = T, two classes, 0.5 each: -(log .5 + 1 * log .5) = 2 ln 2
    cfg = LossConfig(num_classes=2, weighting=WeightingFn("linear", duration=1 / 30.0))
    value, grad = anticipation_loss(
        np.array([[0.5, 0.5]]), 0, cfg, times=frame_times(1, 30.0)
    )
    assert abs(value - 2.0 * math.log(2.0)) < 1e-12
    assert grad.shape == (1, 2)


def test_uniform_prediction_single_frame_sigmoid_early():
    # near t = 0 the wrong-class term is weighted by logistic(-6) = 0.00247...
    cfg = LossConfig(num_classes=2, weighting=WeightingFn("sigmoid", duration=5.0))
    w0 = math.exp(-6.0) / (1.0 + math.exp(-6.0))
    value, _ = anticipation_loss(np.array([[0.5, 0.5]]), 0, cfg, times=np.array([0.0]))
    assert abs(value - (math.log(2.0) + w0 * math.log(2.0))) < 1e-12


def test_perfect_prediction_loss_near_zero():
    cfg = LossConfig(num_classes=3, weighting=LINEAR_5S, clip_epsilon=1e-7)
    t_frames = 10
    preds = np.zeros((t_frames, 3))
    preds[:, 1] = 1.0
    value, _ = anticipation_loss(preds, 1, cfg, times=frame_times(t_frames, 2.0))
    assert 0 <= value <= 3 * t_frames * abs(math.log(1 - 1e-7)) + 1e-9


def test_malformed_distribution_rejected():
    cfg = LossConfig(num_classes=2, weighting=LINEAR_5S)
    with pytest.raises(ValueError, match="malformed"):
        anticipation_loss(np.array([[0.9, 0.3]]), 0, cfg, times=np.array([1.0]))


def test_label_out_of_range():
    cfg = LossConfig(num_classes=2, weighting=LINEAR_5S)
    with pytest.raises(ValueError, match="label"):
        anticipation_loss(np.array([[0.5, 0.5]]), 2, cfg, times=np.array([1.0]))


def test_batch_mean_matches_per_sequence_average():
    rng = np.random.default_rng(0)
    cfg = LossConfig(num_classes=4, weighting=SIGMOID_5S)
    times = frame_times(6, 6 / 5.0)
    preds = rng.dirichlet(np.ones(4), size=(3, 6))
    labels = np.array([0, 2, 3])
    batch_value, batch_grad = anticipation_loss_batch(preds, labels, cfg, times)
    singles = [anticipation_loss(preds[k], labels[k], cfg, times) for k in range(3)]
    assert abs(batch_value - np.mean([v for v, _ in singles])) < 1e-12
    np.testing.assert_allclose(batch_grad, np.stack([g for _, g in singles]) / 3.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_moving_toward_one_hot_decreases_loss(seed):
    rng = np.random.default_rng(seed)
    n_classes = int(rng.integers(2, 6))
    t_frames = int(rng.integers(1, 6))
    cfg = LossConfig(num_classes=n_classes, weighting=SIGMOID_5S)
    times = np.linspace(0.5, 5.0, t_frames)
    preds = rng.dirichlet(np.ones(n_classes), size=t_frames)
    label = int(rng.integers(0, n_classes))
    one_hot = np.zeros(n_classes)
    one_hot[label] = 1.0
    values = []
    for lam in (0.0, 0.3, 0.6, 0.9):
        mixed = (1 - lam) * preds + lam * one_hot
        value, _ = anticipation_loss(mixed, label, cfg, times=times)
        values.append(value)
    assert all(b < a for a, b in zip(values, values[1:]))


def test_wrong_confidence_costs_more_late_than_early():
    cfg = LossConfig(num_classes=3, weighting=SIGMOID_5S)
    wrongish = np.array([[0.2, 0.5, 0.3]])
    early, _ = anticipation_loss(wrongish, 0, cfg, times=np.array([0.5]))
    late, _ = anticipation_loss(wrongish, 0, cfg, times=np.array([4.5]))
    assert late > early


def test_loss_gradient_matches_finite_differences():
    for seed in range(100):
        rep = check_loss_gradient(seed)
        assert rep.passed and rep.max_relative_error < 1e-6, f"seed {seed}: {rep}"


def test_loss_gradient_through_softmax():
    for seed in range(100):
        rep = check_loss_through_softmax(seed)
        assert rep.passed, f"seed {seed}: {rep}"


def test_gradient_zero_where_clipped():
    cfg = LossConfig(num_classes=2, weighting=LINEAR_5S, clip_epsilon=1e-3)
    preds = np.array([[1e-5, 1.0 - 1e-5]])
    _, grad = anticipation_loss(preds, 0, cfg, times=np.array([5.0]))
    np.testing.assert_array_equal(grad, np.zeros((1, 2)))


def test_stagewise_total():
    cfg0 = LossConfig(num_classes=2, weighting=LINEAR_5S, intermediate_loss_weight=0.0)
    cfg1 = LossConfig(num_classes=2, weighting=LINEAR_5S, intermediate_loss_weight=1.0)
    assert stagewise_total(1.0, 123.0, cfg0) == 1.0
    assert stagewise_total(1.0, 0.5, cfg1) == 1.5


def test_negative_intermediate_weight_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        LossConfig(num_classes=2, weighting=LINEAR_5S, intermediate_loss_weight=-0.1)


def test_clip_epsilon_bounds():
    with pytest.raises(ValueError, match="clip_epsilon"):
        LossConfig(num_classes=2, weighting=LINEAR_5S, clip_epsilon=0.5)
