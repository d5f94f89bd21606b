"""Dense matrix primitives and the finite-difference gradient checker.

Matrices are 2-D numpy arrays (row-major). Binary elementwise operations
require exactly equal shapes; the only broadcasting allowed anywhere in this
package is row-vector bias addition inside the affine layer. Gradient checks
must run in float64: central differences are meaningless at single precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Floor for the relative-error denominator, so near-zero gradients do not
# blow up the ratio.
REL_ERR_FLOOR = 1e-8


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def _check_same_shape(op: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    _check_same_shape("add", a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    _check_same_shape("sub", a, b)
    return a - b


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    _check_same_shape("mul", a, b)
    return a * b


def tanh(a: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(a))


def logistic(a: np.ndarray) -> np.ndarray:
    """Elementwise 1 / (1 + exp(-x)) via the tanh identity, stable for all x."""
    a = np.asarray(a, dtype=np.result_type(a, np.float32))
    return 0.5 * (1.0 + np.tanh(0.5 * a))


ELEMENTWISE_OPS = {
    "tanh": tanh,
    "logistic": logistic,
    "add": add,
    "mul": mul,
    "sub": sub,
}


def elementwise(op: str, *args: np.ndarray) -> np.ndarray:
    """Dispatch an elementwise operation by name."""
    try:
        fn = ELEMENTWISE_OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability.

    Accepts a 1-D vector or a 2-D matrix (each row normalized independently).
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax requires at least one entry")
    squeeze = z.ndim == 1
    z = np.atleast_2d(z)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if squeeze else out


def softmax_backward(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. logits given gradient w.r.t. softmax outputs.

    dL/dz_j = p_j * (dL/dp_j - sum_c dL/dp_c * p_c), applied row-wise.
    """
    probs = np.atleast_2d(probs)
    d_probs = np.atleast_2d(d_probs)
    _check_same_shape("softmax_backward", probs, d_probs)
    inner = (d_probs * probs).sum(axis=1, keepdims=True)
    return probs * (d_probs - inner)


@dataclass(frozen=True)
class GradCheckReport:
    max_relative_error: float
    worst_parameter_index: int
    passed: bool
    note: str = ""


def finite_difference_check(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic_grad: np.ndarray,
    step: float = 1e-5,
    tolerance: float = 1e-5,
) -> GradCheckReport:
    """Compare an analytic gradient against central finite differences.

    `f` is a scalar-valued function of a flat parameter vector; each
    coordinate of `x` is perturbed by +-step. Per-coordinate relative error
    is |a - n| / max(|a|, |n|, 1e-8).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64).ravel().copy()
    analytic = np.asarray(analytic_grad, dtype=np.float64).ravel()
    if analytic.size != x.size:
        raise ValueError(
            f"analytic gradient has {analytic.size} entries, parameter vector has {x.size}"
        )
    numeric = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        f_plus = float(f(x))
        x[i] = orig - step
        f_minus = float(f(x))
        x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            return GradCheckReport(
                max_relative_error=float("inf"),
                worst_parameter_index=i,
                passed=False,
                note=f"non-finite function value at coordinate {i}",
            )
        numeric[i] = (f_plus - f_minus) / (2.0 * step)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_ERR_FLOOR)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel)) if rel.size else 0
    max_rel = float(rel[worst]) if rel.size else 0.0
    return GradCheckReport(
        max_relative_error=max_rel,
        worst_parameter_index=worst,
        passed=bool(max_rel <= tolerance),
    )
