"""Anticipation loss with pluggable time weighting, plus its exact gradient.

Per sequence with one-hot labels y and per-frame class distributions y_hat:

    L = - sum_t sum_c [ y_c * log(y_hat_tc) + w(t) * (1 - y_c) * log(1 - y_hat_tc) ]

The first term rewards predicting the correct class at every frame; the
second penalizes confidence on wrong classes, scaled by w(t) so that false
positives cost little early and a lot late. Batched variants average over
the N sequences of a mini-batch.

Frame j (0-based) of a clip sampled at `fps` is assigned time (j + 1) / fps,
so the final frame of a T-second clip sits exactly at t = T and the linear
weight reaches 1 there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import logistic

WEIGHTING_KINDS = ("linear", "sigmoid", "uniform")


@dataclass(frozen=True)
class WeightingFn:
    """Time weighting w(t) on [0, duration] seconds.

    linear: w(t) = t / duration. sigmoid: w(t) = logistic(alpha * t - beta),
    strictly increasing with midpoint at t = beta / alpha. uniform: w(t) = 1.
    """

    kind: str
    duration: float
    alpha: float = 3.0
    beta: float = 6.0

    def __post_init__(self):
        if self.kind not in WEIGHTING_KINDS:
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


def weight_at(w: WeightingFn, t) -> np.ndarray | float:
    """Evaluate w at time t (seconds, scalar or array). t must lie in [0, duration]."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or np.any(t_arr > w.duration):
        raise ValueError(f"t out of range [0, {w.duration}]")
    if w.kind == "linear":
        out = t_arr / w.duration
    elif w.kind == "sigmoid":
        out = logistic(w.alpha * t_arr - w.beta)
    else:  # uniform
        out = np.ones_like(t_arr)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def frame_times(num_frames: int, fps: float) -> np.ndarray:
    """Seconds assigned to each frame: (j + 1) / fps for j = 0..num_frames-1."""
    return (np.arange(num_frames, dtype=np.float64) + 1.0) / fps


@dataclass(frozen=True)
class LossConfig:
    num_classes: int
    weighting: WeightingFn
    clip_epsilon: float = 1e-7
    intermediate_loss_weight: float = 1.0

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if not (0.0 < self.clip_epsilon <= 0.01):
            raise ValueError("clip_epsilon must lie in (0, 0.01]")
        if self.intermediate_loss_weight < 0:
            raise ValueError("intermediate_loss_weight must be nonnegative")


def _validate_predictions(predictions: np.ndarray, num_classes: int) -> np.ndarray:
    p = np.asarray(predictions, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != num_classes:
        raise ValueError(f"predictions must be (T, {num_classes}), got {p.shape}")
    row_sums = p.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6) or np.any(p < -1e-12):
        raise ValueError("malformed distribution: rows must be probabilities summing to 1")
    return p


def anticipation_loss(predictions: np.ndarray, label: int, cfg: LossConfig, times=None):
    """Loss and exact gradient for one sequence.

    predictions is (T, num_classes), one distribution per frame; times gives
    each frame's second mark (defaults cannot be inferred here, so pass the
    output of frame_times). Returns (value, gradient) with the gradient taken
    w.r.t. the unclipped predictions (zero where clipping is active).
    """
    p = _validate_predictions(predictions, cfg.num_classes)
    if not (0 <= label < cfg.num_classes):
        raise ValueError(f"label {label} out of range for {cfg.num_classes} classes")
    if times is None:
        raise ValueError("times is required; use frame_times(T, fps)")
    value, grad = anticipation_loss_batch(p[None, :, :], np.array([label]), cfg, times)
    return value, grad[0]


def anticipation_loss_batch(predictions: np.ndarray, labels: np.ndarray, cfg: LossConfig, times):
    """Batch-mean loss and gradient.

    predictions is (N, T, num_classes); labels is (N,). Returns
    (value, gradient of value w.r.t. the unclipped predictions, same shape).
    """
    p = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    n, t_frames, n_classes = p.shape
    if n_classes != cfg.num_classes:
        raise ValueError(f"expected {cfg.num_classes} classes, got {n_classes}")
    times = np.asarray(times, dtype=np.float64)
    if times.shape != (t_frames,):
        raise ValueError(f"times must have shape ({t_frames},)")
    w = weight_at(cfg.weighting, times)  # (T,)

    eps = cfg.clip_epsilon
    clipped = np.clip(p, eps, 1.0 - eps)
    y = np.zeros((n, n_classes))
    y[np.arange(n), labels] = 1.0
    y = y[:, None, :]  # (N, 1, C) broadcast over frames

    log_hit = y * np.log(clipped)
    log_miss = (1.0 - y) * np.log(1.0 - clipped)
    value = -(log_hit + w[None, :, None] * log_miss).sum() / n

    grad = -(y / clipped - w[None, :, None] * (1.0 - y) / (1.0 - clipped)) / n
    grad[(p < eps) | (p > 1.0 - eps)] = 0.0
    return float(value), grad


def stagewise_total(final_loss: float, intermediate_loss: float, cfg: LossConfig) -> float:
    """Training objective: final loss plus the weighted auxiliary-stage loss."""
    if not (np.isfinite(final_loss) and np.isfinite(intermediate_loss)):
        raise ValueError("losses must be finite")
    return float(final_loss + cfg.intermediate_loss_weight * intermediate_loss)
