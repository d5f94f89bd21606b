"""Vehicle-dynamics descriptors.

Each scalar sensor signal (steering angle, speed) is expanded per frame into
the triple (value, velocity, acceleration) using finite differences with gap
delta, then mapped to a fixed-size descriptor by a small LSTM trained to
classify the action from dynamics alone. The classifier head is only used
during embedder training; embeddings are per-frame hidden states.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .layers import (
    AffineLayer,
    LSTMCell,
    affine_backward,
    affine_forward,
    bptt_backward,
    lstm_forward_sequence,
)
from .numerics import softmax, softmax_backward


def dynamics_triples(signal, delta: int = 1) -> np.ndarray:
    """Per-frame (value, velocity, acceleration) for a scalar series.

    velocity = s_t - s_{t-delta}; acceleration = s_t - 2 s_{t-delta} + s_{t-2delta}.
    Frames reaching before the start use edge padding (s_{<0} := s_0).
    """
    s = np.asarray(signal, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("empty signal")
    if delta < 1:
        raise ValueError("delta must be >= 1")
    idx = np.arange(s.size)
    back1 = s[np.maximum(idx - delta, 0)]
    back2 = s[np.maximum(idx - 2 * delta, 0)]
    return np.stack([s, s - back1, s - 2.0 * back1 + back2], axis=1)


@dataclass
class DynamicsEmbedder:
    lstm: LSTMCell
    classifier: AffineLayer
    training_losses: list = field(default_factory=list)

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int, num_classes: int) -> "DynamicsEmbedder":
        return cls(
            lstm=LSTMCell.init(rng, input_size=3, hidden_size=hidden),
            classifier=AffineLayer.init(rng, in_dim=hidden, out_dim=num_classes),
        )

    def params(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("lstm.weight", self.lstm.weight),
            ("lstm.bias", self.lstm.bias),
            ("classifier.weight", self.classifier.weight),
            ("classifier.bias", self.classifier.bias),
        ]


def embed(embedder: DynamicsEmbedder, triples: np.ndarray) -> np.ndarray:
    """Per-frame hidden states for one (T, 3) triple series, classifier dropped."""
    triples = np.asarray(triples, dtype=np.float64)
    if triples.ndim != 2 or triples.shape[1] != 3:
        raise ValueError(f"triples must be (T, 3), got {triples.shape}")
    hs, _ = lstm_forward_sequence(embedder.lstm, triples[None, :, :])
    return hs[0]


def embed_batch(embedder: DynamicsEmbedder, triples: np.ndarray) -> np.ndarray:
    """Batched variant: (N, T, 3) -> (N, T, hidden)."""
    hs, _ = lstm_forward_sequence(embedder.lstm, np.asarray(triples, dtype=np.float64))
    return hs


def _embedder_batch_step(embedder, xs, labels, lr, clip):
    """One SGD step on mean per-frame cross-entropy. Returns the batch loss."""
    n, t_frames, _ = xs.shape
    hs, caches = lstm_forward_sequence(embedder.lstm, xs)
    flat_h = hs.reshape(n * t_frames, -1)
    logits = affine_forward(embedder.classifier, flat_h)
    probs = softmax(logits)
    denom = n * t_frames
    picked = probs[np.arange(denom), np.repeat(labels, t_frames)]
    loss = float(-np.log(np.maximum(picked, 1e-12)).mean())

    d_probs = np.zeros_like(probs)
    d_probs[np.arange(denom), np.repeat(labels, t_frames)] = -1.0 / np.maximum(picked, 1e-12) / denom
    d_logits = softmax_backward(probs, d_probs)
    d_h_flat, d_cw, d_cb = affine_backward(embedder.classifier, flat_h, d_logits)
    _, d_w, d_b = bptt_backward(embedder.lstm, caches, d_h_flat.reshape(n, t_frames, -1))

    grads = [d_w, d_b, d_cw, d_cb]
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    scale = lr * (clip / norm if norm > clip else 1.0)
    embedder.lstm.weight -= scale * d_w
    embedder.lstm.bias -= scale * d_b
    embedder.classifier.weight -= scale * d_cw
    embedder.classifier.bias -= scale * d_cb
    return loss


def train_embedder(
    triples: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    hidden: int = 64,
    epochs: int = 20,
    lr: float = 0.05,
    batch_size: int = 64,
    seed: int = 0,
    clip: float = 5.0,
) -> DynamicsEmbedder:
    """Train a dynamics embedder on (N, T, 3) triples with integer labels.

    Deterministic under a fixed seed. epochs=0 returns the initialized,
    untrained embedder. Per-epoch mean losses are kept on training_losses.
    """
    triples = np.asarray(triples, dtype=np.float64)
    labels = np.asarray(labels)
    if triples.ndim != 3 or triples.shape[2] != 3:
        raise ValueError(f"triples must be (N, T, 3), got {triples.shape}")
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if np.unique(labels).size < 2:
        warnings.warn("training data contains a single class; proceeding anyway")

    rng = np.random.default_rng(seed)
    embedder = DynamicsEmbedder.init(rng, hidden=hidden, num_classes=num_classes)
    n = triples.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            losses.append(_embedder_batch_step(embedder, triples[idx], labels[idx], lr, clip))
        embedder.training_losses.append(float(np.mean(losses)))
    return embedder
