"""Multi-modal anticipation models with exact BPTT gradients.

MultiModalLSTM: each modality stream runs through its own LSTM; the per-frame
hidden states are stacked into an (M, H) matrix, compacted by a shared
time-distributed affine layer (FC-Pool) into a single H-vector, fed to a
fusion LSTM, and the fusion output is stacked back above the modality states
via a skip connection before a second FC-Pool produces the final
representation for the classifier. An auxiliary classifier on the fusion
output provides stage-wise supervision during training and is ignored at
inference.

Baselines: SingleStreamLSTM (one LSTM over the concatenated modality
features) and TwoStageLSTM (a fixed-order two-stage variant: stage one reads
modality group A, its output is concatenated with group B for stage two).

All forward passes take a list of (B, T, dim_i) arrays, one per modality.
The backward passes exploit the layered structure: the fc-pool layers and
classifier heads are time-distributed with shared parameters, so their
backward runs as one flat matrix product over (B*T) rows, while recurrence
is handled per LSTM by bptt_backward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .layers import (
    AffineLayer,
    LSTMCell,
    affine_backward,
    affine_forward,
    bptt_backward,
    lstm_forward_sequence,
)
from .loss import LossConfig, WeightingFn, anticipation_loss_batch, frame_times, stagewise_total
from .numerics import softmax, softmax_backward
from . import params_io


@dataclass
class MMLSTMConfig:
    num_modalities: int
    modality_input_dims: list[int]
    num_classes: int
    hidden: int = 1024
    fps: float = 30.0
    loss_cfg: LossConfig | None = None

    def __post_init__(self):
        if self.num_modalities != len(self.modality_input_dims):
            raise ValueError("num_modalities must match modality_input_dims")
        if self.num_modalities < 1:
            raise ValueError("need at least one modality")
        if self.hidden < 1 or self.num_classes < 1:
            raise ValueError("hidden and num_classes must be positive")


@dataclass
class PredictionTimeline:
    per_frame: np.ndarray          # (T, num_classes) softmax distributions
    pooled: np.ndarray             # (T, num_classes) running temporal averages
    predicted_class_at: np.ndarray  # (T,) argmax of pooled, ties to lowest index


def _as_batches(inputs) -> list[np.ndarray]:
    return [np.asarray(x, dtype=np.float64) for x in inputs]


# ---------------------------------------------------------------------------
# MM-LSTM
# ---------------------------------------------------------------------------

class MultiModalLSTM:
    kind = "mm"
    has_intermediate = True

    def __init__(self, config: MMLSTMConfig, rng: np.random.Generator):
        self.config = config
        H = config.hidden
        M = config.num_modalities
        self.modality_cells = [
            LSTMCell.init(rng, input_size=d, hidden_size=H) for d in config.modality_input_dims
        ]
        self.fc_pool_1 = AffineLayer.init(rng, in_dim=M * H, out_dim=H)
        self.fusion = LSTMCell.init(rng, input_size=H, hidden_size=H)
        self.fc_pool_2 = AffineLayer.init(rng, in_dim=(M + 1) * H, out_dim=H)
        self.final_classifier = AffineLayer.init(rng, in_dim=H, out_dim=config.num_classes)
        self.intermediate_classifier = AffineLayer.init(rng, in_dim=H, out_dim=config.num_classes)

    def params(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, cell in enumerate(self.modality_cells):
            out.append((f"modality_{i}.lstm.weight", cell.weight))
            out.append((f"modality_{i}.lstm.bias", cell.bias))
        out += [
            ("fc_pool_1.weight", self.fc_pool_1.weight),
            ("fc_pool_1.bias", self.fc_pool_1.bias),
            ("fusion.lstm.weight", self.fusion.weight),
            ("fusion.lstm.bias", self.fusion.bias),
            ("fc_pool_2.weight", self.fc_pool_2.weight),
            ("fc_pool_2.bias", self.fc_pool_2.bias),
            ("final_classifier.weight", self.final_classifier.weight),
            ("final_classifier.bias", self.final_classifier.bias),
            ("intermediate_classifier.weight", self.intermediate_classifier.weight),
            ("intermediate_classifier.bias", self.intermediate_classifier.bias),
        ]
        return out

    def forward(self, inputs, want_intermediate: bool = False):
        """inputs: list of (B, T, dim_i). Returns (final_logits, inter_logits, cache)."""
        xs = _as_batches(inputs)
        if len(xs) != self.config.num_modalities:
            raise ValueError(f"expected {self.config.num_modalities} modality streams, got {len(xs)}")
        for x, d in zip(xs, self.config.modality_input_dims):
            if x.shape[2] != d:
                raise ValueError(f"modality stream width {x.shape[2]}, expected {d}")
        B, T = xs[0].shape[:2]
        H = self.config.hidden
        M = self.config.num_modalities

        mod_hs, mod_caches = [], []
        for cell, x in zip(self.modality_cells, xs):
            hs, caches = lstm_forward_sequence(cell, x)
            mod_hs.append(hs)
            mod_caches.append(caches)
        d_stack = np.stack(mod_hs, axis=2)          # (B, T, M, H)
        d_flat = d_stack.reshape(B, T, M * H)
        o_seq = affine_forward(self.fc_pool_1, d_flat.reshape(B * T, M * H)).reshape(B, T, H)
        fusion_hs, fusion_caches = lstm_forward_sequence(self.fusion, o_seq)
        skip_flat = np.concatenate([fusion_hs, d_flat], axis=2)  # (B, T, (M+1)H)
        rep = affine_forward(self.fc_pool_2, skip_flat.reshape(B * T, -1)).reshape(B, T, H)
        final_logits = affine_forward(self.final_classifier, rep.reshape(B * T, H))
        final_logits = final_logits.reshape(B, T, -1)
        inter_logits = None
        if want_intermediate:
            inter_logits = affine_forward(
                self.intermediate_classifier, fusion_hs.reshape(B * T, H)
            ).reshape(B, T, -1)
        cache = {
            "mod_caches": mod_caches,
            "d_flat": d_flat,
            "fusion_caches": fusion_caches,
            "fusion_hs": fusion_hs,
            "skip_flat": skip_flat,
            "rep": rep,
            "shape": (B, T),
        }
        return final_logits, inter_logits, cache

    def backward(self, cache, d_final_logits, d_inter_logits=None) -> list[np.ndarray]:
        """Gradients for every parameter, aligned with params()."""
        B, T = cache["shape"]
        H = self.config.hidden
        M = self.config.num_modalities
        rep_flat = cache["rep"].reshape(B * T, H)
        d_rep, d_final_w, d_final_b = affine_backward(
            self.final_classifier, rep_flat, d_final_logits.reshape(B * T, -1)
        )
        skip_2d = cache["skip_flat"].reshape(B * T, -1)
        d_skip, d_fc2_w, d_fc2_b = affine_backward(self.fc_pool_2, skip_2d, d_rep)
        d_skip = d_skip.reshape(B, T, -1)
        d_fusion_hs = d_skip[:, :, :H].copy()
        d_d_flat = d_skip[:, :, H:].copy()

        fusion_flat = cache["fusion_hs"].reshape(B * T, H)
        if d_inter_logits is not None:
            d_fh, d_inter_w, d_inter_b = affine_backward(
                self.intermediate_classifier, fusion_flat, d_inter_logits.reshape(B * T, -1)
            )
            d_fusion_hs += d_fh.reshape(B, T, H)
        else:
            d_inter_w = np.zeros_like(self.intermediate_classifier.weight)
            d_inter_b = np.zeros_like(self.intermediate_classifier.bias)

        d_o, d_fusion_w, d_fusion_b = bptt_backward(
            self.fusion, cache["fusion_caches"], d_fusion_hs
        )
        d_df2, d_fc1_w, d_fc1_b = affine_backward(
            self.fc_pool_1, cache["d_flat"].reshape(B * T, M * H), d_o.reshape(B * T, H)
        )
        d_d_flat += d_df2.reshape(B, T, M * H)
        d_d_stack = d_d_flat.reshape(B, T, M, H)

        grads = []
        for i, cell in enumerate(self.modality_cells):
            _, d_w, d_b = bptt_backward(cell, cache["mod_caches"][i], d_d_stack[:, :, i, :])
            grads += [d_w, d_b]
        grads += [
            d_fc1_w, d_fc1_b,
            d_fusion_w, d_fusion_b,
            d_fc2_w, d_fc2_b,
            d_final_w, d_final_b,
            d_inter_w, d_inter_b,
        ]
        return grads


def forward_step(model: MultiModalLSTM, frame_inputs, states=None):
    """Single-frame forward for inspection: returns (final_logits, inter_logits, states).

    frame_inputs is a list of M row vectors; states carries the (modality,
    fusion) LSTM states between calls, as produced by this function.
    """
    from .layers import lstm_step_cached, zero_state

    xs = [np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in frame_inputs]
    if len(xs) != model.config.num_modalities:
        raise ValueError(f"expected {model.config.num_modalities} modality inputs")
    B = xs[0].shape[0]
    H = model.config.hidden
    if states is None:
        states = {
            "modality": [zero_state(c, B) for c in model.modality_cells],
            "fusion": zero_state(model.fusion, B),
        }
    h_rows = []
    for i, (cell, x) in enumerate(zip(model.modality_cells, xs)):
        h, st, _ = lstm_step_cached(cell, x, states["modality"][i])
        states["modality"][i] = st
        h_rows.append(h)
    d_stack = np.stack(h_rows, axis=1)            # (B, M, H)
    d_flat = d_stack.reshape(B, -1)
    o = affine_forward(model.fc_pool_1, d_flat)
    h_f, states["fusion"], _ = lstm_step_cached(model.fusion, o, states["fusion"])
    skip = np.concatenate([h_f, d_flat], axis=1)  # fusion output stacked above D^t
    rep = affine_forward(model.fc_pool_2, skip)
    final_logits = affine_forward(model.final_classifier, rep)
    inter_logits = affine_forward(model.intermediate_classifier, h_f)
    return final_logits, inter_logits, states


# ---------------------------------------------------------------------------
# Baseline 1: one LSTM over concatenated modality features
# ---------------------------------------------------------------------------

class SingleStreamLSTM:
    kind = "single"
    has_intermediate = False

    def __init__(self, config: MMLSTMConfig, rng: np.random.Generator):
        self.config = config
        self.input_width = int(sum(config.modality_input_dims))
        self.lstm = LSTMCell.init(rng, input_size=self.input_width, hidden_size=config.hidden)
        self.classifier = AffineLayer.init(rng, in_dim=config.hidden, out_dim=config.num_classes)

    def params(self):
        return [
            ("lstm.weight", self.lstm.weight),
            ("lstm.bias", self.lstm.bias),
            ("classifier.weight", self.classifier.weight),
            ("classifier.bias", self.classifier.bias),
        ]

    def forward(self, inputs, want_intermediate: bool = False):
        xs = np.concatenate(_as_batches(inputs), axis=2)
        if xs.shape[2] != self.input_width:
            raise ValueError(f"stream width {xs.shape[2]}, expected {self.input_width}")
        B, T = xs.shape[:2]
        hs, caches = lstm_forward_sequence(self.lstm, xs)
        logits = affine_forward(self.classifier, hs.reshape(B * T, -1)).reshape(B, T, -1)
        return logits, None, {"hs": hs, "caches": caches, "shape": (B, T)}

    def backward(self, cache, d_final_logits, d_inter_logits=None):
        B, T = cache["shape"]
        hs_flat = cache["hs"].reshape(B * T, -1)
        d_hs, d_cw, d_cb = affine_backward(
            self.classifier, hs_flat, d_final_logits.reshape(B * T, -1)
        )
        _, d_w, d_b = bptt_backward(self.lstm, cache["caches"], d_hs.reshape(B, T, -1))
        return [d_w, d_b, d_cw, d_cb]


# ---------------------------------------------------------------------------
# Baseline 3: fixed-order two-stage LSTM over two modality groups
# ---------------------------------------------------------------------------

class TwoStageLSTM:
    kind = "ms2"
    has_intermediate = True

    def __init__(self, config: MMLSTMConfig, groups, rng: np.random.Generator):
        if len(groups) != 2:
            raise ValueError(f"two-stage model needs exactly 2 modality groups, got {len(groups)}")
        flat = sorted(i for g in groups for i in g)
        if flat != list(range(config.num_modalities)):
            raise ValueError("groups must partition the modality indices")
        self.config = config
        self.groups = [list(g) for g in groups]
        H = config.hidden
        dims = config.modality_input_dims
        self.stage1_width = int(sum(dims[i] for i in self.groups[0]))
        self.stage2_width = H + int(sum(dims[i] for i in self.groups[1]))
        self.stage1 = LSTMCell.init(rng, input_size=self.stage1_width, hidden_size=H)
        self.stage2 = LSTMCell.init(rng, input_size=self.stage2_width, hidden_size=H)
        self.final_classifier = AffineLayer.init(rng, in_dim=H, out_dim=config.num_classes)
        self.intermediate_classifier = AffineLayer.init(rng, in_dim=H, out_dim=config.num_classes)

    def params(self):
        return [
            ("stage1.lstm.weight", self.stage1.weight),
            ("stage1.lstm.bias", self.stage1.bias),
            ("stage2.lstm.weight", self.stage2.weight),
            ("stage2.lstm.bias", self.stage2.bias),
            ("final_classifier.weight", self.final_classifier.weight),
            ("final_classifier.bias", self.final_classifier.bias),
            ("intermediate_classifier.weight", self.intermediate_classifier.weight),
            ("intermediate_classifier.bias", self.intermediate_classifier.bias),
        ]

    def forward(self, inputs, want_intermediate: bool = False):
        xs = _as_batches(inputs)
        B, T = xs[0].shape[:2]
        H = self.config.hidden
        x1 = np.concatenate([xs[i] for i in self.groups[0]], axis=2)
        x2_feats = [xs[i] for i in self.groups[1]]
        hs1, caches1 = lstm_forward_sequence(self.stage1, x1)
        x2 = np.concatenate([hs1] + x2_feats, axis=2)
        hs2, caches2 = lstm_forward_sequence(self.stage2, x2)
        final_logits = affine_forward(self.final_classifier, hs2.reshape(B * T, H)).reshape(B, T, -1)
        inter_logits = None
        if want_intermediate:
            inter_logits = affine_forward(
                self.intermediate_classifier, hs1.reshape(B * T, H)
            ).reshape(B, T, -1)
        cache = {"hs1": hs1, "hs2": hs2, "caches1": caches1, "caches2": caches2, "shape": (B, T)}
        return final_logits, inter_logits, cache

    def backward(self, cache, d_final_logits, d_inter_logits=None):
        B, T = cache["shape"]
        H = self.config.hidden
        d_hs2, d_final_w, d_final_b = affine_backward(
            self.final_classifier, cache["hs2"].reshape(B * T, H), d_final_logits.reshape(B * T, -1)
        )
        d_x2, d_w2, d_b2 = bptt_backward(self.stage2, cache["caches2"], d_hs2.reshape(B, T, H))
        d_hs1 = d_x2[:, :, :H].copy()
        if d_inter_logits is not None:
            d_h1_head, d_inter_w, d_inter_b = affine_backward(
                self.intermediate_classifier,
                cache["hs1"].reshape(B * T, H),
                d_inter_logits.reshape(B * T, -1),
            )
            d_hs1 += d_h1_head.reshape(B, T, H)
        else:
            d_inter_w = np.zeros_like(self.intermediate_classifier.weight)
            d_inter_b = np.zeros_like(self.intermediate_classifier.bias)
        _, d_w1, d_b1 = bptt_backward(self.stage1, cache["caches1"], d_hs1)
        return [d_w1, d_b1, d_w2, d_b2, d_final_w, d_final_b, d_inter_w, d_inter_b]


def build_baseline(kind: str, config: MMLSTMConfig, rng: np.random.Generator, groups=None):
    """Build a baseline variant: 'single_stream' or 'ms_lstm_two_stage'."""
    if kind == "single_stream":
        return SingleStreamLSTM(config, rng)
    if kind == "ms_lstm_two_stage":
        if groups is None:
            raise ValueError("ms_lstm_two_stage requires two modality groups")
        return TwoStageLSTM(config, groups, rng)
    raise ValueError(f"unknown baseline kind {kind!r}")


# ---------------------------------------------------------------------------
# Inference and training
# ---------------------------------------------------------------------------

def predict_timeline(model, sequence_inputs) -> PredictionTimeline:
    """Per-frame distributions and running temporal averages for one sequence.

    sequence_inputs is a list of (T, dim_i) arrays. The intermediate
    classifier plays no part here.
    """
    xs = [np.asarray(x, dtype=np.float64)[None, :, :] for x in sequence_inputs]
    logits, _, _ = model.forward(xs, want_intermediate=False)
    per_frame = softmax(logits[0])
    pooled = np.cumsum(per_frame, axis=0) / np.arange(1, per_frame.shape[0] + 1)[:, None]
    predicted = pooled.argmax(axis=1)
    return PredictionTimeline(per_frame=per_frame, pooled=pooled, predicted_class_at=predicted)


def batch_timelines(model, batch_inputs) -> np.ndarray:
    """Pooled timelines for a batch: returns (B, T, num_classes) running means."""
    logits, _, _ = model.forward(batch_inputs, want_intermediate=False)
    B, T, C = logits.shape
    per_frame = softmax(logits.reshape(B * T, C)).reshape(B, T, C)
    return np.cumsum(per_frame, axis=1) / np.arange(1, T + 1)[None, :, None]


def model_loss_and_grads(model, batch_inputs, labels, loss_cfg: LossConfig, times):
    """Stage-wise training objective and parameter gradients for one batch."""
    want_inter = model.has_intermediate
    final_logits, inter_logits, cache = model.forward(batch_inputs, want_intermediate=want_inter)
    B, T, C = final_logits.shape
    final_probs = softmax(final_logits.reshape(B * T, C)).reshape(B, T, C)
    final_value, d_final_probs = anticipation_loss_batch(final_probs, labels, loss_cfg, times)
    d_final_logits = softmax_backward(
        final_probs.reshape(B * T, C), d_final_probs.reshape(B * T, C)
    ).reshape(B, T, C)

    inter_value = 0.0
    d_inter_logits = None
    if want_inter:
        inter_probs = softmax(inter_logits.reshape(B * T, C)).reshape(B, T, C)
        inter_value, d_inter_probs = anticipation_loss_batch(inter_probs, labels, loss_cfg, times)
        lam = loss_cfg.intermediate_loss_weight
        d_inter_logits = softmax_backward(
            inter_probs.reshape(B * T, C), lam * d_inter_probs.reshape(B * T, C)
        ).reshape(B, T, C)

    total = stagewise_total(final_value, inter_value, loss_cfg)
    grads = model.backward(cache, d_final_logits, d_inter_logits)
    return total, grads


def clip_global_norm(grads: list[np.ndarray], clip: float) -> float:
    """Scale gradients in place to a maximum global L2 norm. Returns the norm."""
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if clip > 0 and norm > clip:
        scale = clip / norm
        for g in grads:
            g *= scale
    return norm


def training_step(model, batch_inputs, labels, lr: float, times=None, clip: float = 5.0) -> float:
    """One SGD step on a batch. Returns the (pre-update) training objective.

    Rejects the step without touching parameters if the loss is non-finite.
    """
    cfg = model.config.loss_cfg
    if cfg is None:
        raise ValueError("model config has no loss_cfg")
    if times is None:
        times = frame_times(np.asarray(batch_inputs[0]).shape[1], model.config.fps)
    total, grads = model_loss_and_grads(model, batch_inputs, labels, cfg, times)
    if not np.isfinite(total):
        raise RuntimeError(f"non-finite training loss {total!r}; step rejected")
    clip_global_norm(grads, clip)
    for (_, p), g in zip(model.params(), grads):
        p -= lr * g
    return total


# ---------------------------------------------------------------------------
# Flat parameter views (gradient checking) and save/load
# ---------------------------------------------------------------------------

def flatten_params(model) -> np.ndarray:
    return np.concatenate([p.ravel() for _, p in model.params()])


def set_flat_params(model, vector: np.ndarray) -> None:
    vector = np.asarray(vector, dtype=np.float64)
    pos = 0
    for _, p in model.params():
        n = p.size
        p[...] = vector[pos:pos + n].reshape(p.shape)
        pos += n
    if pos != vector.size:
        raise ValueError(f"parameter vector has {vector.size} entries, expected {pos}")


def flatten_grads(grads: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([g.ravel() for g in grads])


def save_model(path, model, extra_meta: dict | None = None) -> None:
    """Write parameters as MMW1 plus a JSON sidecar describing the config."""
    params_io.write_mmw1(path, model.params())
    meta = {
        "kind": model.kind,
        "num_modalities": model.config.num_modalities,
        "modality_input_dims": list(model.config.modality_input_dims),
        "hidden": model.config.hidden,
        "num_classes": model.config.num_classes,
        "fps": model.config.fps,
    }
    if model.kind == "ms2":
        meta["groups"] = model.groups
    if model.config.loss_cfg is not None:
        w = model.config.loss_cfg.weighting
        meta["loss"] = {
            "weighting": w.kind,
            "alpha": w.alpha,
            "beta": w.beta,
            "duration": w.duration,
            "clip_epsilon": model.config.loss_cfg.clip_epsilon,
            "intermediate_loss_weight": model.config.loss_cfg.intermediate_loss_weight,
        }
    if extra_meta:
        meta.update(extra_meta)
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Rebuild a model from an MMW1 file and its JSON sidecar."""
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    loss_cfg = None
    if "loss" in meta:
        lm = meta["loss"]
        loss_cfg = LossConfig(
            num_classes=meta["num_classes"],
            weighting=WeightingFn(
                kind=lm["weighting"], duration=lm["duration"], alpha=lm["alpha"], beta=lm["beta"]
            ),
            clip_epsilon=lm["clip_epsilon"],
            intermediate_loss_weight=lm["intermediate_loss_weight"],
        )
    config = MMLSTMConfig(
        num_modalities=meta["num_modalities"],
        modality_input_dims=list(meta["modality_input_dims"]),
        num_classes=meta["num_classes"],
        hidden=meta["hidden"],
        fps=meta["fps"],
        loss_cfg=loss_cfg,
    )
    rng = np.random.default_rng(0)
    if meta["kind"] == "mm":
        model = MultiModalLSTM(config, rng)
    elif meta["kind"] == "single":
        model = SingleStreamLSTM(config, rng)
    elif meta["kind"] == "ms2":
        model = TwoStageLSTM(config, meta["groups"], rng)
    else:
        raise ValueError(f"unknown model kind {meta['kind']!r}")
    stored = params_io.read_mmw1(path)
    for name, p in model.params():
        if name not in stored:
            raise params_io.ParamFormatError(f"missing parameter {name!r} in {path}")
        if tuple(stored[name].shape) != p.shape:
            raise params_io.ParamFormatError(
                f"parameter {name!r} has shape {stored[name].shape}, expected {p.shape}"
            )
        p[...] = stored[name].astype(np.float64)
    return model, meta
