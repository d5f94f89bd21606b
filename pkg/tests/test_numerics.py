import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmact.numerics import (
    add,
    elementwise,
    finite_difference_check,
    logistic,
    matmul,
    mul,
    softmax,
    sub,
    tanh,
)


def test_matmul_identity():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3))
    np.testing.assert_array_equal(matmul(np.eye(3), a), a)


def test_matmul_hand_example():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0], [6.0]])
    np.testing.assert_array_equal(matmul(a, b), [[17.0], [39.0]])


def test_matmul_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        matmul(np.zeros((2, 3)), np.zeros((4, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_matmul_associativity(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((int(rng.integers(1, 5)), int(rng.integers(1, 5))))
    b = rng.standard_normal((a.shape[1], int(rng.integers(1, 5))))
    c = rng.standard_normal((b.shape[1], int(rng.integers(1, 5))))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.max(np.abs(left - right)) < 1e-10


def test_elementwise_values():
    assert logistic(np.array([[0.0]]))[0, 0] == 0.5
    assert tanh(np.array([[0.0]]))[0, 0] == 0.0
    # direct scalar evaluation at double precision
    assert abs(logistic(np.array([-6.0]))[0] - 0.0024726231566347743) < 1e-15


def test_elementwise_binary_shapes():
    a, b = np.ones((2, 2)), np.ones((2, 2))
    np.testing.assert_array_equal(add(a, b), 2 * a)
    np.testing.assert_array_equal(sub(a, b), 0 * a)
    np.testing.assert_array_equal(mul(a, 2 * b), 2 * a)
    with pytest.raises(ValueError, match="shape mismatch"):
        add(np.ones((2, 2)), np.ones((2, 3)))


def test_elementwise_dispatch():
    np.testing.assert_array_equal(elementwise("tanh", np.zeros((1, 2))), np.zeros((1, 2)))
    with pytest.raises(ValueError, match="unknown elementwise"):
        elementwise("relu", np.zeros((1, 1)))


def test_softmax_uniform_and_stability():
    np.testing.assert_allclose(softmax(np.zeros(3)), np.ones(3) / 3, rtol=0, atol=1e-15)
    out = softmax(np.array([1000.0, 0.0]))
    assert np.isfinite(out).all()
    assert out[0] > 0.999999 and out[1] < 1e-6


def test_softmax_hand_example():
    out = softmax(np.log(np.array([1.0, 3.0])))
    np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-12)


def test_softmax_empty_rejected():
    with pytest.raises(ValueError):
        softmax(np.array([]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_softmax_sums_and_shift_invariance(seed):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal(int(rng.integers(1, 8))) * rng.uniform(0.1, 50)
    out = softmax(logits)
    assert abs(out.sum() - 1.0) <= 1e-12
    assert (out > 0).all()
    shifted = softmax(logits + rng.uniform(-100, 100))
    assert np.argmax(shifted) == np.argmax(out)


def test_finite_difference_quadratic():
    rep = finite_difference_check(lambda x: float(x[0] ** 2), np.array([3.0]), np.array([6.0]))
    assert rep.passed and rep.max_relative_error < 1e-9


def test_finite_difference_constant():
    rep = finite_difference_check(lambda x: 1.0, np.array([0.5, -2.0]), np.zeros(2))
    assert rep.passed


def test_finite_difference_wrong_gradient_fails():
    rep = finite_difference_check(lambda x: float(x[0] ** 2), np.array([3.0]), np.array([5.0]))
    assert not rep.passed
    assert rep.worst_parameter_index == 0


def test_finite_difference_non_finite_diagnostic():
    rep = finite_difference_check(lambda x: float("nan"), np.array([1.0]), np.array([0.0]))
    assert not rep.passed
    assert "non-finite" in rep.note
