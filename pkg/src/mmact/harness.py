"""Training orchestration, per-second evaluation, and report emission.

Evaluation follows the anticipation protocol: for each horizon of h observed
seconds the decision is the temporally averaged (pooled) prediction at frame
ceil(h * fps) - 1. Pooling is causal, so the pooled row at that frame depends
only on frames before the horizon boundary; computing it from a single full
forward pass is exactly equivalent to physically truncating the input, and a
test corrupts post-horizon frames to prove it.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .datagen import MODALITY_NAMES, Sequence
from .descriptors import DynamicsEmbedder, dynamics_triples, embed_batch, train_embedder
from .loss import LossConfig, WeightingFn, frame_times
from .model import (
    MMLSTMConfig,
    MultiModalLSTM,
    PredictionTimeline,
    batch_timelines,
    build_baseline,
    training_step,
)
from . import params_io


# ---------------------------------------------------------------------------
# Stream assembly: sequences -> per-modality (N, T, dim) arrays
# ---------------------------------------------------------------------------

@dataclass
class StreamSet:
    inputs: list[np.ndarray]          # per modality, (N, T, dim) float32
    labels: np.ndarray                # (N,)
    modalities: list[str]
    fps: float
    frames: int
    ids: list[str]

    @property
    def dims(self) -> list[int]:
        return [int(x.shape[2]) for x in self.inputs]

    def subset(self, indices) -> "StreamSet":
        indices = np.asarray(indices)
        return StreamSet(
            inputs=[x[indices] for x in self.inputs],
            labels=self.labels[indices],
            modalities=self.modalities,
            fps=self.fps,
            frames=self.frames,
            ids=[self.ids[i] for i in indices],
        )


def assemble_streams(
    sequences: list[Sequence],
    embedders: dict[str, DynamicsEmbedder] | None = None,
    modalities: list[str] | None = None,
    delta: int = 1,
) -> StreamSet:
    """Build model-ready modality streams from raw sequences.

    Steering and speed streams are the frozen embedder outputs of the
    dynamics triples; appearance and motion pass through unchanged.
    """
    if not sequences:
        raise ValueError("no sequences to assemble")
    modalities = list(modalities) if modalities is not None else list(MODALITY_NAMES)
    unknown = set(modalities) - set(MODALITY_NAMES)
    if unknown:
        raise ValueError(f"unknown modalities {sorted(unknown)}")
    needs_embedders = {"steering", "speed"} & set(modalities)
    if needs_embedders and not embedders:
        raise ValueError(f"modalities {sorted(needs_embedders)} require trained embedders")

    inputs = []
    for name in modalities:
        if name == "appearance":
            inputs.append(np.stack([s.modality_features[0] for s in sequences]))
        elif name == "motion":
            inputs.append(np.stack([s.modality_features[1] for s in sequences]))
        else:
            raw = [s.raw_steering if name == "steering" else s.raw_speed for s in sequences]
            triples = np.stack([dynamics_triples(r, delta) for r in raw])
            inputs.append(embed_batch(embedders[name], triples).astype(np.float32))
    return StreamSet(
        inputs=inputs,
        labels=np.array([s.class_label for s in sequences], dtype=np.int64),
        modalities=modalities,
        fps=sequences[0].fps,
        frames=sequences[0].frames,
        ids=[s.id for s in sequences],
    )


def dynamics_triples_matrix(sequences: list[Sequence], which: str, delta: int = 1) -> np.ndarray:
    raw = [s.raw_steering if which == "steering" else s.raw_speed for s in sequences]
    return np.stack([dynamics_triples(r, delta) for r in raw])


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    horizons: list[float]                  # observed seconds per decision point
    accuracy_at: list[float]
    per_class_accuracy_at: np.ndarray      # (n_horizons, num_classes)
    confusion_at: list[np.ndarray]         # per horizon (C, C) counts, rows = truth
    num_test_sequences: int


def horizon_frame(horizon_s: float, fps: float) -> int:
    """Decision frame index for a horizon: ceil(h * fps) - 1, 0-based."""
    return int(np.ceil(horizon_s * fps)) - 1


def evaluate(model, streams: StreamSet, horizons: list[float] | None = None, chunk: int = 64) -> EvalReport:
    """Accuracy, per-class accuracy, and confusion matrix after each horizon."""
    n = len(streams.labels)
    if n == 0:
        raise ValueError("empty test set")
    if horizons is None:
        horizons = [float(h) for h in range(1, int(streams.frames / streams.fps) + 1)]
    frames_idx = []
    for h in horizons:
        f = horizon_frame(h, streams.fps)
        if f >= streams.frames or f < 0:
            raise ValueError(f"horizon {h}s is beyond the {streams.frames}-frame sequences")
        frames_idx.append(f)

    n_classes = model.config.num_classes
    confusion = [np.zeros((n_classes, n_classes), dtype=np.int64) for _ in horizons]
    for start in range(0, n, chunk):
        batch = [x[start:start + chunk].astype(np.float64) for x in streams.inputs]
        pooled = batch_timelines(model, batch)  # (B, T, C)
        labels = streams.labels[start:start + chunk]
        for j, f in enumerate(frames_idx):
            preds = pooled[:, f, :].argmax(axis=1)
            np.add.at(confusion[j], (labels, preds), 1)

    accuracy = [float(np.trace(c)) / n for c in confusion]
    per_class = np.zeros((len(horizons), n_classes))
    for j, c in enumerate(confusion):
        row_totals = c.sum(axis=1)
        nz = row_totals > 0
        per_class[j, nz] = np.diag(c)[nz] / row_totals[nz]
    return EvalReport(
        horizons=[float(h) for h in horizons],
        accuracy_at=accuracy,
        per_class_accuracy_at=per_class,
        confusion_at=confusion,
        num_test_sequences=n,
    )


def time_to_first_sustained_correct(timeline: PredictionTimeline, label: int, sustain: int = 10):
    """Earliest frame t with pooled argmax == label for all of [t, t + sustain).

    Returns None when no full window is correct (windows must fit within the
    timeline).
    """
    if sustain < 1:
        raise ValueError("sustain must be >= 1")
    correct = timeline.predicted_class_at == label
    t_frames = correct.size
    run = 0
    for t in range(t_frames):
        run = run + 1 if correct[t] else 0
        if run >= sustain:
            return t - sustain + 1
    return None


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    model_kind: str = "mm"                 # mm | single | ms2
    hidden: int = 64
    epochs: int = 10
    lr: float = 0.05
    lr_decay: float = 1.0                  # multiplicative per epoch
    batch_size: int = 16
    seed: int = 0
    weighting: str = "sigmoid"             # sigmoid | linear | uniform
    alpha: float = 3.0
    beta: float = 6.0
    clip_epsilon: float = 1e-7
    intermediate_weight: float = 1.0
    grad_clip: float = 5.0
    modalities: list[str] | None = None    # default: all four
    groups: list[list[int]] | None = None  # ms2 only; indices into modalities
    embed_hidden: int = 64
    embed_epochs: int = 12
    embed_lr: float = 0.05
    delta: int = 1
    horizons: list[float] | None = None
    select_best: bool = True

    def __post_init__(self):
        if self.model_kind not in ("mm", "single", "ms2"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")


@dataclass
class TrainLog:
    epoch_losses: list[float]
    epoch_accuracy: list[list[float]]  # per epoch, accuracy at each horizon
    horizons: list[float]
    wall_clock_s: float
    seed: int
    config: dict
    best_epoch: int


def _default_horizons(frames: int, fps: float) -> list[float]:
    return [float(h) for h in range(1, int(frames / fps) + 1)] or [frames / fps]


def train_embedders_for(
    train_seqs: list[Sequence], cfg: TrainConfig, num_classes: int
) -> dict[str, DynamicsEmbedder]:
    """Fit one dynamics embedder per requested dynamics modality, frozen afterwards."""
    modalities = cfg.modalities or list(MODALITY_NAMES)
    labels = np.array([s.class_label for s in train_seqs], dtype=np.int64)
    embedders = {}
    for offset, name in enumerate(m for m in ("steering", "speed") if m in modalities):
        triples = dynamics_triples_matrix(train_seqs, name, cfg.delta)
        embedders[name] = train_embedder(
            triples,
            labels,
            num_classes=num_classes,
            hidden=cfg.embed_hidden,
            epochs=cfg.embed_epochs,
            lr=cfg.embed_lr,
            seed=cfg.seed + 1000 + offset,
        )
    return embedders


def build_model(cfg: TrainConfig, dims: list[int], num_classes: int, fps: float, duration_s: float):
    loss_cfg = LossConfig(
        num_classes=num_classes,
        weighting=WeightingFn(kind=cfg.weighting, duration=duration_s, alpha=cfg.alpha, beta=cfg.beta),
        clip_epsilon=cfg.clip_epsilon,
        intermediate_loss_weight=cfg.intermediate_weight,
    )
    model_cfg = MMLSTMConfig(
        num_modalities=len(dims),
        modality_input_dims=list(dims),
        num_classes=num_classes,
        hidden=cfg.hidden,
        fps=fps,
        loss_cfg=loss_cfg,
    )
    rng = np.random.default_rng(cfg.seed)
    if cfg.model_kind == "mm":
        return MultiModalLSTM(model_cfg, rng)
    if cfg.model_kind == "single":
        return build_baseline("single_stream", model_cfg, rng)
    groups = cfg.groups if cfg.groups is not None else _default_groups(len(dims))
    return build_baseline("ms_lstm_two_stage", model_cfg, rng, groups=groups)


def _default_groups(n_modalities: int) -> list[list[int]]:
    half = max(1, n_modalities // 2)
    return [list(range(half)), list(range(half, n_modalities))]


def train(
    train_seqs: list[Sequence],
    test_seqs: list[Sequence],
    cfg: TrainConfig,
    num_classes: int | None = None,
):
    """Full pipeline: embedders, stream assembly, SGD epochs, held-out tracking.

    Returns (model, embedders, TrainLog). The retained parameters are the
    best-by-mean-held-out-accuracy snapshot when select_best is on.
    """
    if not train_seqs:
        raise ValueError("empty training set")
    t0 = time.perf_counter()
    if num_classes is None:
        num_classes = max(s.class_label for s in train_seqs + test_seqs) + 1
    embedders = train_embedders_for(train_seqs, cfg, num_classes)
    train_streams = assemble_streams(train_seqs, embedders, cfg.modalities, cfg.delta)
    test_streams = assemble_streams(test_seqs, embedders, cfg.modalities, cfg.delta) if test_seqs else None

    fps = train_streams.fps
    frames = train_streams.frames
    model = build_model(cfg, train_streams.dims, num_classes, fps, frames / fps)
    horizons = cfg.horizons or _default_horizons(frames, fps)
    times = frame_times(frames, fps)

    rng = np.random.default_rng(cfg.seed + 1)
    n = len(train_streams.labels)
    epoch_losses: list[float] = []
    epoch_accuracy: list[list[float]] = []
    best_score, best_epoch, best_params = -1.0, -1, None
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        lr = cfg.lr * cfg.lr_decay ** epoch
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = [x[idx].astype(np.float64) for x in train_streams.inputs]
            try:
                losses.append(
                    training_step(model, batch, train_streams.labels[idx], lr, times, cfg.grad_clip)
                )
            except RuntimeError as exc:
                raise RuntimeError(f"epoch {epoch}, batch starting at {start}: {exc}") from exc
        epoch_losses.append(float(np.mean(losses)))
        if test_streams is not None:
            rep = evaluate(model, test_streams, horizons)
            epoch_accuracy.append([float(a) for a in rep.accuracy_at])
            score = float(np.mean(rep.accuracy_at))
            if cfg.select_best and score > best_score:
                best_score, best_epoch = score, epoch
                best_params = [p.copy() for _, p in model.params()]

    if cfg.select_best and best_params is not None:
        for (_, p), saved in zip(model.params(), best_params):
            p[...] = saved

    log = TrainLog(
        epoch_losses=epoch_losses,
        epoch_accuracy=epoch_accuracy,
        horizons=[float(h) for h in horizons],
        wall_clock_s=time.perf_counter() - t0,
        seed=cfg.seed,
        config=asdict(cfg),
        best_epoch=best_epoch,
    )
    return model, embedders, log


# ---------------------------------------------------------------------------
# Report CSV emission
# ---------------------------------------------------------------------------

def _fmt_h(h: float) -> str:
    return str(int(h)) if float(h).is_integer() else str(h)


def report(rep: EvalReport, out_dir) -> list[str]:
    """Write accuracy.csv, per_class.csv, and one confusion grid per horizon.

    Returns the written file names. Float cells use repr so a re-parse
    reproduces the in-memory report exactly.
    """
    if rep.num_test_sequences <= 0:
        raise ValueError("refusing to report on an empty test set")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    lines = ["horizon_s,accuracy"]
    for h, a in zip(rep.horizons, rep.accuracy_at):
        lines.append(f"{_fmt_h(h)},{a!r}")
    (out / "accuracy.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append("accuracy.csv")

    lines = ["horizon_s,class,accuracy"]
    for j, h in enumerate(rep.horizons):
        for c in range(rep.per_class_accuracy_at.shape[1]):
            lines.append(f"{_fmt_h(h)},{c},{rep.per_class_accuracy_at[j, c]!r}")
    (out / "per_class.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append("per_class.csv")

    for h, conf in zip(rep.horizons, rep.confusion_at):
        name = f"confusion_h{_fmt_h(h)}.csv"
        header = ",".join(f"pred_{c}" for c in range(conf.shape[1]))
        rows = [header] + [",".join(str(int(v)) for v in row) for row in conf]
        (out / name).write_text("\n".join(rows) + "\n", encoding="utf-8")
        written.append(name)
    return written


def read_report(report_dir) -> EvalReport:
    """Parse the CSVs written by report() back into an EvalReport."""
    d = Path(report_dir)
    acc_lines = (d / "accuracy.csv").read_text(encoding="utf-8").strip().splitlines()[1:]
    horizons, accuracy = [], []
    for line in acc_lines:
        h, a = line.split(",")
        horizons.append(float(h))
        accuracy.append(float(a))
    pc_lines = (d / "per_class.csv").read_text(encoding="utf-8").strip().splitlines()[1:]
    n_classes = max(int(line.split(",")[1]) for line in pc_lines) + 1
    per_class = np.zeros((len(horizons), n_classes))
    for line in pc_lines:
        h, c, a = line.split(",")
        per_class[horizons.index(float(h)), int(c)] = float(a)
    confusion = []
    for h in horizons:
        rows = (d / f"confusion_h{_fmt_h(h)}.csv").read_text(encoding="utf-8").strip().splitlines()[1:]
        confusion.append(np.array([[int(v) for v in r.split(",")] for r in rows], dtype=np.int64))
    return EvalReport(
        horizons=horizons,
        accuracy_at=accuracy,
        per_class_accuracy_at=per_class,
        confusion_at=confusion,
        num_test_sequences=int(confusion[0].sum()) if confusion else 0,
    )


# ---------------------------------------------------------------------------
# Bundles: model + frozen embedders in one MMW1 file with a JSON sidecar
# ---------------------------------------------------------------------------

def save_bundle(path, model, embedders: dict[str, DynamicsEmbedder], train_cfg: TrainConfig) -> None:
    entries = [(f"model.{name}", arr) for name, arr in model.params()]
    for mod_name, emb in embedders.items():
        entries += [(f"embedder.{mod_name}.{n}", a) for n, a in emb.params()]
    params_io.write_mmw1(path, entries)
    w = model.config.loss_cfg.weighting if model.config.loss_cfg else None
    meta = {
        "kind": model.kind,
        "modality_input_dims": list(model.config.modality_input_dims),
        "hidden": model.config.hidden,
        "num_classes": model.config.num_classes,
        "fps": model.config.fps,
        "modalities": list(train_cfg.modalities or MODALITY_NAMES),
        "groups": getattr(model, "groups", None),
        "embed_hidden": train_cfg.embed_hidden,
        "delta": train_cfg.delta,
        "weighting": None if w is None else {
            "kind": w.kind, "alpha": w.alpha, "beta": w.beta, "duration": w.duration,
        },
        "clip_epsilon": train_cfg.clip_epsilon,
        "intermediate_weight": train_cfg.intermediate_weight,
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(path):
    """Rebuild (model, embedders, meta) from a bundle file."""
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    stored = params_io.read_mmw1(path)
    w = meta["weighting"]
    loss_cfg = None
    if w is not None:
        loss_cfg = LossConfig(
            num_classes=meta["num_classes"],
            weighting=WeightingFn(kind=w["kind"], duration=w["duration"], alpha=w["alpha"], beta=w["beta"]),
            clip_epsilon=meta["clip_epsilon"],
            intermediate_loss_weight=meta["intermediate_weight"],
        )
    model_cfg = MMLSTMConfig(
        num_modalities=len(meta["modality_input_dims"]),
        modality_input_dims=list(meta["modality_input_dims"]),
        num_classes=meta["num_classes"],
        hidden=meta["hidden"],
        fps=meta["fps"],
        loss_cfg=loss_cfg,
    )
    rng = np.random.default_rng(0)
    if meta["kind"] == "mm":
        model = MultiModalLSTM(model_cfg, rng)
    elif meta["kind"] == "single":
        model = build_baseline("single_stream", model_cfg, rng)
    elif meta["kind"] == "ms2":
        model = build_baseline("ms_lstm_two_stage", model_cfg, rng, groups=meta["groups"])
    else:
        raise ValueError(f"unknown model kind {meta['kind']!r}")
    for name, p in model.params():
        key = f"model.{name}"
        if key not in stored:
            raise params_io.ParamFormatError(f"missing {key!r} in {path}")
        p[...] = stored[key].astype(np.float64)

    embedders = {}
    for mod_name in ("steering", "speed"):
        key = f"embedder.{mod_name}.lstm.weight"
        if key in stored:
            emb = DynamicsEmbedder.init(np.random.default_rng(0), meta["embed_hidden"], meta["num_classes"])
            for pname, p in emb.params():
                p[...] = stored[f"embedder.{mod_name}.{pname}"].astype(np.float64)
            embedders[mod_name] = emb
    return model, embedders, meta
