"""Multi-modal LSTM action anticipation on synthetic driving scenarios."""

from .datagen import GeneratorConfig, Sequence, SplitSpec, generate_dataset, scenario_preset, split
from .harness import TrainConfig, assemble_streams, evaluate, report, train
from .loss import LossConfig, WeightingFn, anticipation_loss, weight_at
from .model import MMLSTMConfig, MultiModalLSTM, build_baseline, predict_timeline

__all__ = [
    "GeneratorConfig",
    "Sequence",
    "SplitSpec",
    "generate_dataset",
    "scenario_preset",
    "split",
    "TrainConfig",
    "assemble_streams",
    "evaluate",
    "report",
    "train",
    "LossConfig",
    "WeightingFn",
    "anticipation_loss",
    "weight_at",
    "MMLSTMConfig",
    "MultiModalLSTM",
    "build_baseline",
    "predict_timeline",
]

__version__ = "0.1.0"
