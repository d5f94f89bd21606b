import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmact.descriptors import (
    DynamicsEmbedder,
    dynamics_triples,
    embed,
    embed_batch,
    train_embedder,
)
from mmact.layers import AffineLayer, LSTMCell


def test_triples_constant_signal():
    out = dynamics_triples(np.full(8, 5.0))
    np.testing.assert_array_equal(out, np.tile([5.0, 0.0, 0.0], (8, 1)))


def test_triples_linear_signal():
    # s_t = 2t: at t=2 with delta 1 -> value 4, velocity 2, acceleration 0
    out = dynamics_triples([0.0, 2.0, 4.0, 6.0], delta=1)
    np.testing.assert_array_equal(out[2], [4.0, 2.0, 0.0])


def test_triples_quadratic_signal():
    # s = [0, 1, 4]: at t=2 -> (4, 3, 2)
    out = dynamics_triples([0.0, 1.0, 4.0], delta=1)
    np.testing.assert_array_equal(out[2], [4.0, 3.0, 2.0])


def test_triples_edge_padding():
    out = dynamics_triples([3.0, 7.0], delta=1)
    np.testing.assert_array_equal(out[0], [3.0, 0.0, 0.0])  # s_{-1} := s_0
    np.testing.assert_array_equal(out[1], [7.0, 4.0, 4.0])  # s_{-1} hits s_0 again


def test_triples_empty_and_bad_delta():
    with pytest.raises(ValueError, match="empty"):
        dynamics_triples([])
    with pytest.raises(ValueError, match="delta"):
        dynamics_triples([1.0], delta=0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_triples_match_direct_recomputation(seed):
    rng = np.random.default_rng(seed)
    t_frames = int(rng.integers(1, 20))
    delta = int(rng.integers(1, 4))
    signal = rng.integers(-50, 50, size=t_frames).astype(np.float64)
    out = dynamics_triples(signal, delta)
    for t in range(t_frames):
        s = signal[t]
        s1 = signal[max(t - delta, 0)]
        s2 = signal[max(t - 2 * delta, 0)]
        assert out[t, 0] == s
        assert out[t, 1] == s - s1
        assert out[t, 2] == s - 2 * s1 + s2


def _toy_embedder(hidden=4):
    rng = np.random.default_rng(0)
    return DynamicsEmbedder.init(rng, hidden=hidden, num_classes=2)


def test_embed_shape_and_single_frame():
    emb = _toy_embedder()
    out = embed(emb, np.zeros((1, 3)))
    assert out.shape == (1, 4)
    out = embed(emb, np.random.default_rng(1).standard_normal((7, 3)))
    assert out.shape == (7, 4)


def test_embed_zero_parameters_gives_zero():
    emb = DynamicsEmbedder(
        lstm=LSTMCell(3, 4, np.zeros((7, 16)), np.zeros((1, 16))),
        classifier=AffineLayer(np.zeros((2, 4)), np.zeros((1, 2))),
    )
    out = embed(emb, np.random.default_rng(2).standard_normal((5, 3)))
    np.testing.assert_array_equal(out, np.zeros((5, 4)))


def test_embed_prefix_causality():
    emb = _toy_embedder()
    triples = np.random.default_rng(3).standard_normal((9, 3))
    full = embed(emb, triples)
    for t in (1, 4, 9):
        np.testing.assert_array_equal(embed(emb, triples[:t]), full[:t])


def test_embed_batch_matches_single():
    emb = _toy_embedder()
    triples = np.random.default_rng(4).standard_normal((3, 6, 3))
    batched = embed_batch(emb, triples)
    for k in range(3):
        np.testing.assert_allclose(batched[k], embed(emb, triples[k]), atol=1e-12)


def _separable_dynamics(n_per_class=30, t_frames=40, seed=0):
    # class 0: flat steering; class 1: steering ramp
    rng = np.random.default_rng(seed)
    triples, labels = [], []
    for c in (0, 1):
        for _ in range(n_per_class):
            base = rng.normal(0, 0.3, size=t_frames)
            if c == 1:
                base = base + np.linspace(0, 20, t_frames)
            triples.append(dynamics_triples(base))
            labels.append(c)
    return np.stack(triples), np.array(labels)


def test_train_embedder_learns_separable_classes():
    triples, labels = _separable_dynamics(seed=0)
    rng = np.random.default_rng(99)
    order = rng.permutation(len(labels))
    held = order[:12]
    fit = order[12:]
    emb = train_embedder(triples[fit], labels[fit], num_classes=2, hidden=16, epochs=20, seed=1)
    assert emb.training_losses[-1] < emb.training_losses[0]
    from mmact.layers import affine_forward
    from mmact.numerics import softmax

    hits = 0
    for i in held:
        h = embed(emb, triples[i])
        probs = softmax(affine_forward(emb.classifier, h))
        if probs.mean(axis=0).argmax() == labels[i]:
            hits += 1
    assert hits / len(held) >= 0.95


def test_train_embedder_zero_epochs_returns_initialized():
    triples, labels = _separable_dynamics(n_per_class=3, t_frames=10)
    emb = train_embedder(triples, labels, num_classes=2, hidden=8, epochs=0, seed=5)
    assert emb.training_losses == []
    ref = DynamicsEmbedder.init(np.random.default_rng(5), hidden=8, num_classes=2)
    np.testing.assert_array_equal(emb.lstm.weight, ref.lstm.weight)


def test_train_embedder_single_class_warns_but_runs():
    triples, labels = _separable_dynamics(n_per_class=4, t_frames=10)
    only = labels == 0
    with pytest.warns(UserWarning, match="single class"):
        emb = train_embedder(triples[only], labels[only], num_classes=2, hidden=8, epochs=2, seed=2)
    assert len(emb.training_losses) == 2


def test_train_embedder_deterministic():
    triples, labels = _separable_dynamics(n_per_class=5, t_frames=12)
    a = train_embedder(triples, labels, num_classes=2, hidden=8, epochs=3, seed=7)
    b = train_embedder(triples, labels, num_classes=2, hidden=8, epochs=3, seed=7)
    np.testing.assert_array_equal(a.lstm.weight, b.lstm.weight)
    np.testing.assert_array_equal(a.classifier.weight, b.classifier.weight)
