import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmact.gradcheck import check_affine, check_bptt, check_fc_pool, check_lstm_step
from mmact.layers import (
    AffineLayer,
    LSTMCell,
    LSTMState,
    affine_forward,
    bptt_backward,
    fc_pool_forward,
    lstm_forward_sequence,
    lstm_step,
    zero_state,
)
from mmact.params_io import read_mmw1, write_mmw1


def test_affine_identity():
    layer = AffineLayer(np.eye(3), np.zeros((1, 3)))
    x = np.array([[1.0, -2.0, 0.5]])
    np.testing.assert_array_equal(affine_forward(layer, x), x)


def test_affine_hand_example():
    layer = AffineLayer(np.array([[1.0, 1.0]]), np.array([[1.0]]))
    np.testing.assert_array_equal(affine_forward(layer, np.array([[2.0, 3.0]])), [[6.0]])


def test_affine_wrong_width():
    layer = AffineLayer(np.ones((2, 3)), np.zeros((1, 2)))
    with pytest.raises(ValueError, match="width"):
        affine_forward(layer, np.ones((1, 4)))


def test_lstm_zero_parameters_zero_state():
    cell = LSTMCell(2, 3, np.zeros((5, 12)), np.zeros((1, 12)))
    out, state = lstm_step(cell, np.zeros((1, 2)), zero_state(cell))
    np.testing.assert_array_equal(out, np.zeros((1, 3)))
    np.testing.assert_array_equal(state.cell, np.zeros((1, 3)))


def test_lstm_zero_parameters_nonzero_cell():
    # all gates sit at 0.5, candidate at 0: c' = 0.5 c, h' = 0.5 tanh(0.5 c)
    cell = LSTMCell(2, 3, np.zeros((5, 12)), np.zeros((1, 12)))
    c0 = np.ones((1, 3))
    out, state = lstm_step(cell, np.zeros((1, 2)), LSTMState(np.zeros((1, 3)), c0))
    np.testing.assert_allclose(state.cell, 0.5 * c0, atol=1e-15)
    np.testing.assert_allclose(out, 0.5 * np.tanh(0.5) * np.ones((1, 3)), atol=1e-15)


def test_lstm_input_width_checked():
    cell = LSTMCell.init(np.random.default_rng(0), 3, 4)
    with pytest.raises(ValueError, match="width"):
        lstm_step(cell, np.zeros((1, 2)), zero_state(cell))


def test_lstm_rejects_non_finite_state():
    cell = LSTMCell.init(np.random.default_rng(0), 2, 3)
    bad = LSTMState(np.full((1, 3), np.nan), np.zeros((1, 3)))
    with pytest.raises(ValueError, match="non-finite"):
        lstm_step(cell, np.zeros((1, 2)), bad)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_lstm_hidden_bounded(seed):
    rng = np.random.default_rng(seed)
    cell = LSTMCell(2, 4, rng.standard_normal((6, 16)) * 2, rng.standard_normal((1, 16)))
    state = zero_state(cell)
    for _ in range(10):
        out, state = lstm_step(cell, rng.uniform(-3, 3, size=(1, 2)), state)
        assert np.max(np.abs(out)) < 1.0


def test_forget_gate_bias_initialized_to_one():
    cell = LSTMCell.init(np.random.default_rng(0), 3, 5)
    np.testing.assert_array_equal(cell.bias[0, 5:10], np.ones(5))
    assert np.all(cell.bias[0, :5] == 0) and np.all(cell.bias[0, 10:] == 0)


def test_fc_pool_single_row_identity():
    layer = AffineLayer(np.eye(4), np.zeros((1, 4)))
    row = np.arange(4.0).reshape(1, 4)
    np.testing.assert_array_equal(fc_pool_forward(layer, row), row)


@pytest.mark.parametrize("k", [4, 5])
def test_fc_pool_compacts_stack_to_single_vector(k):
    h = 1024
    rng = np.random.default_rng(k)
    layer = AffineLayer.init(rng, in_dim=k * h, out_dim=h)
    out = fc_pool_forward(layer, rng.standard_normal((k, h)))
    assert out.shape == (1, h)


def test_fc_pool_parameters_shared_across_steps():
    rng = np.random.default_rng(1)
    layer = AffineLayer.init(rng, in_dim=6, out_dim=3)
    stacked = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(
        fc_pool_forward(layer, stacked), fc_pool_forward(layer, stacked.copy())
    )


def test_bptt_single_step_matches_step_backward():
    rng = np.random.default_rng(2)
    cell = LSTMCell.init(rng, 2, 3)
    xs = rng.standard_normal((1, 1, 2))
    hs, caches = lstm_forward_sequence(cell, xs)
    d_hs = rng.standard_normal((1, 1, 3))
    d_xs, d_w, d_b = bptt_backward(cell, caches, d_hs)
    from mmact.layers import lstm_step_backward

    d_x1, _, _, d_w1, d_b1 = lstm_step_backward(cell, caches[0], d_hs[:, 0, :], np.zeros((1, 3)))
    np.testing.assert_allclose(d_xs[:, 0, :], d_x1)
    np.testing.assert_allclose(d_w, d_w1)
    np.testing.assert_allclose(d_b, d_b1)


def test_bptt_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(3)
    cell = LSTMCell.init(rng, 2, 3)
    hs, caches = lstm_forward_sequence(cell, rng.standard_normal((2, 4, 2)))
    d_xs, d_w, d_b = bptt_backward(cell, caches, np.zeros((2, 4, 3)))
    assert np.all(d_w == 0) and np.all(d_b == 0) and np.all(d_xs == 0)


def test_bptt_step_count_mismatch():
    rng = np.random.default_rng(4)
    cell = LSTMCell.init(rng, 2, 3)
    _, caches = lstm_forward_sequence(cell, rng.standard_normal((1, 3, 2)))
    with pytest.raises(ValueError, match="records"):
        bptt_backward(cell, caches, np.zeros((1, 2, 3)))


@pytest.mark.parametrize("checker", [check_affine, check_lstm_step, check_bptt, check_fc_pool])
def test_gradients_match_finite_differences_100_seeds(checker):
    worst = 0.0
    for seed in range(100):
        rep = checker(seed)
        worst = max(worst, rep.max_relative_error)
        assert rep.passed, f"seed {seed}: {rep}"
    assert worst < 1e-5


def test_mmw1_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    entries = [
        ("cell.weight", rng.standard_normal((5, 12)).astype(np.float32)),
        ("cell.bias", rng.standard_normal((1, 12)).astype(np.float32)),
    ]
    path = tmp_path / "weights.mmw1"
    write_mmw1(path, entries)
    loaded = read_mmw1(path)
    for name, arr in entries:
        np.testing.assert_array_equal(loaded[name], arr)


def test_mmw1_bad_magic(tmp_path):
    path = tmp_path / "bad.mmw1"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    from mmact.params_io import ParamFormatError

    with pytest.raises(ParamFormatError, match="magic"):
        read_mmw1(path)


def test_mmw1_truncated(tmp_path):
    rng = np.random.default_rng(6)
    path = tmp_path / "trunc.mmw1"
    write_mmw1(path, [("w", rng.standard_normal((4, 4)))])
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    from mmact.params_io import ParamFormatError

    with pytest.raises(ParamFormatError, match="truncated"):
        read_mmw1(path)
