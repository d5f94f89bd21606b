"""Synthetic driving-scenario generator with multi-modal class coding.

Each labeled sample is a fixed-length clip: T frames of appearance and motion
feature vectors plus raw steering (degrees) and speed (km/h) traces. Before a
late onset frame every class follows the same neutral forward-driving regime
(pure noise around the bases), so nothing before the onset identifies the
class. From the onset, class signatures ramp in over `ramp_frames` frames:
template vectors on the feature modalities, kinematic shapes on the dynamics.

With cross_modal_coding enabled, the class-to-signature map of every single
modality is many-to-one (pairs of classes share a signature), with the
pairings chosen so that any two modalities jointly identify the class. A
nearest-template read of one modality then caps out near 50% while the joint
read is essentially perfect, which is what makes fusion worthwhile.

Night and adverse-weather samples have their appearance/motion template
amplitude scaled down by the configured SNR penalties; dynamics are
unaffected. Every sequence derives its own RNG stream from (seed, class,
index), so serial and parallel generation are bit-identical.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

SCENARIO_CLASS_COUNTS = {"dm": 6, "ac": 4, "tr": 5, "pi": 4, "fci": 6}
MODALITY_NAMES = ("appearance", "motion", "steering", "speed")

# Pairwise-orthogonal pair partitions of 6 classes: any two modalities jointly
# separate all classes, while each single modality confuses exactly one pair.
_ORTHOGONAL_GROUPS_6 = {
    "appearance": [0, 0, 1, 1, 2, 2],   # pairs {0,1} {2,3} {4,5}
    "motion":     [0, 1, 0, 2, 1, 2],   # pairs {0,2} {1,4} {3,5}
    "steering":   [0, 1, 2, 0, 2, 1],   # pairs {0,3} {1,5} {2,4}
    "speed":      [0, 1, 2, 1, 0, 2],   # pairs {0,4} {1,3} {2,5}
}


@dataclass
class GeneratorConfig:
    num_classes: int = 6
    samples_per_class: int = 600
    appearance_dim: int = 32
    motion_dim: int = 32
    noise_sigma: float = 0.25
    night_snr_penalty: float = 0.6
    adverse_weather_snr_penalty: float = 0.7
    cross_modal_coding: bool = True
    seed: int = 0
    frames: int = 150
    fps: float = 30.0
    scenario: str = "dm"
    day_fraction: float = 2.0 / 3.0
    clear_fraction: float = 2.0 / 3.0
    onset_mean_s: float = 4.0
    onset_std_s: float = 0.3
    ramp_frames: int = 15
    template_amplitude: float = 1.0
    cruise_speed: float = 50.0
    steer_magnitude: float = 25.0
    speed_surge: float = 15.0
    dyn_noise_scale: float = 2.0

    def __post_init__(self):
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        for name in ("night_snr_penalty", "adverse_weather_snr_penalty"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.frames < 2 * self.ramp_frames:
            raise ValueError("frames must allow an onset in the second half")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @property
    def duration_s(self) -> float:
        return self.frames / self.fps


def scenario_preset(name: str, **overrides) -> GeneratorConfig:
    """Config preset for one of the scenario families (dm, ac, tr, pi, fci)."""
    if name not in SCENARIO_CLASS_COUNTS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIO_CLASS_COUNTS)}")
    params = {"scenario": name, "num_classes": SCENARIO_CLASS_COUNTS[name]}
    params.update(overrides)
    return GeneratorConfig(**params)


@dataclass
class Sequence:
    id: str
    scenario: str
    class_label: int
    frames: int
    fps: float
    modality_features: list[np.ndarray]  # [appearance (T, A), motion (T, Mo)], float32
    raw_steering: np.ndarray             # (T,) float32, degrees
    raw_speed: np.ndarray                # (T,) float32, km/h
    onset_frame: int
    daytime: str
    weather: str
    user: str


# ---------------------------------------------------------------------------
# Template bank
# ---------------------------------------------------------------------------

@dataclass
class TemplateBank:
    appearance_templates: np.ndarray  # (n_app_groups, appearance_dim), unit norm
    motion_templates: np.ndarray
    group_maps: dict[str, list[int]]  # class index -> group per modality
    steering_shape_ids: list[str]     # one shape name per steering group
    speed_shape_ids: list[str]


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _paired_group_maps(rng: np.random.Generator, num_classes: int) -> dict[str, list[int]]:
    """Random pair partitions per modality whose joint signature is unique."""
    for _ in range(200):
        maps = {}
        for name in MODALITY_NAMES:
            perm = rng.permutation(num_classes)
            groups = [0] * num_classes
            for pos, cls in enumerate(perm):
                groups[cls] = pos // 2
            maps[name] = groups
        joint = {tuple(maps[m][c] for m in MODALITY_NAMES) for c in range(num_classes)}
        if len(joint) == num_classes:
            return maps
    raise RuntimeError("could not build a jointly separating cross-modal coding")


def make_bank(cfg: GeneratorConfig) -> TemplateBank:
    rng = np.random.default_rng([cfg.seed, _scenario_tag(cfg.scenario), 0xBA2D])
    n = cfg.num_classes
    if cfg.cross_modal_coding and n >= 4:
        if n == 6:
            group_maps = {k: list(v) for k, v in _ORTHOGONAL_GROUPS_6.items()}
        else:
            group_maps = _paired_group_maps(rng, n)
        steering_shapes = ["flat", "ramp_pos", "pulse_pos"]
        speed_shapes = ["steady", "decay", "surge"]
    else:
        # semantic mode: one signature per class, kinematics follow the
        # driver-maneuver reading (forward/stop flat, turns ramp, lane
        # changes pulse; only stopping changes speed)
        group_maps = {m: list(range(n)) for m in MODALITY_NAMES}
        if cfg.scenario == "dm" and n == 6:
            steering_shapes = ["flat", "flat", "ramp_pos", "ramp_neg", "pulse_pos", "pulse_neg"]
            speed_shapes = ["steady", "decay", "steady", "steady", "steady", "steady"]
        else:
            steer_cycle = ["flat", "ramp_pos", "ramp_neg", "pulse_pos", "pulse_neg"]
            speed_cycle = ["steady", "decay", "surge"]
            steering_shapes = [steer_cycle[c % len(steer_cycle)] for c in range(n)]
            speed_shapes = [speed_cycle[c % len(speed_cycle)] for c in range(n)]

    n_app = max(group_maps["appearance"]) + 1
    n_mot = max(group_maps["motion"]) + 1
    n_steer = max(group_maps["steering"]) + 1
    n_speed = max(group_maps["speed"]) + 1
    return TemplateBank(
        appearance_templates=_unit_rows(rng, n_app, cfg.appearance_dim),
        motion_templates=_unit_rows(rng, n_mot, cfg.motion_dim),
        group_maps=group_maps,
        steering_shape_ids=[steering_shapes[g % len(steering_shapes)] for g in range(n_steer)],
        speed_shape_ids=[speed_shapes[g % len(speed_shapes)] for g in range(n_speed)],
    )


def _scenario_tag(name: str) -> int:
    return int.from_bytes(name.encode("utf-8")[:4].ljust(4, b"_"), "little")


# ---------------------------------------------------------------------------
# Kinematic shapes: offset added to the neutral trace from the onset on,
# as a function of k = frame - onset >= 0.
# ---------------------------------------------------------------------------

def _steering_shape(name: str, k: np.ndarray, cfg: GeneratorConfig) -> np.ndarray:
    ramp = cfg.ramp_frames
    mag = cfg.steer_magnitude
    if name == "flat":
        return np.zeros_like(k, dtype=np.float64)
    if name in ("ramp_pos", "ramp_neg"):
        out = mag * np.minimum(1.0, (k + 1.0) / ramp)
        return out if name == "ramp_pos" else -out
    if name in ("pulse_pos", "pulse_neg"):
        # swing to +mag, through zero to -0.6 mag, then settle back to zero
        out = np.zeros_like(k, dtype=np.float64)
        up = k < ramp
        down = (k >= ramp) & (k < 2 * ramp)
        back = (k >= 2 * ramp) & (k < 3 * ramp)
        out[up] = mag * (k[up] + 1.0) / ramp
        out[down] = mag - 1.6 * mag * (k[down] - ramp + 1.0) / ramp
        out[back] = -0.6 * mag * (1.0 - (k[back] - 2 * ramp + 1.0) / ramp)
        return out if name == "pulse_pos" else -out
    raise ValueError(f"unknown steering shape {name!r}")


def _speed_shape(name: str, k: np.ndarray, cfg: GeneratorConfig) -> np.ndarray:
    if name == "steady":
        return np.zeros_like(k, dtype=np.float64)
    if name == "decay":
        tau = max(1.0, 0.75 * cfg.fps)
        return cfg.cruise_speed * (np.exp(-(k + 1.0) / tau) - 1.0)
    if name == "surge":
        return cfg.speed_surge * np.minimum(1.0, (k + 1.0) / cfg.ramp_frames)
    raise ValueError(f"unknown speed shape {name!r}")


def noiseless_signals(cfg: GeneratorConfig, bank: TemplateBank, class_label: int, onset: int):
    """Expected (appearance, motion, steering, speed) signals without noise.

    Also the oracle's reference: the generator adds Gaussian noise on top of
    exactly these arrays.
    """
    T = cfg.frames
    t = np.arange(T)
    ramp = np.where(
        t >= onset, np.minimum(1.0, (t - onset + 1.0) / cfg.ramp_frames), 0.0
    )
    app_tmpl = bank.appearance_templates[bank.group_maps["appearance"][class_label]]
    mot_tmpl = bank.motion_templates[bank.group_maps["motion"][class_label]]
    appearance = ramp[:, None] * app_tmpl[None, :] * cfg.template_amplitude
    motion = ramp[:, None] * mot_tmpl[None, :] * cfg.template_amplitude

    k = t - onset
    post = k >= 0
    steering = np.zeros(T)
    speed = np.full(T, cfg.cruise_speed, dtype=np.float64)
    st_shape = bank.steering_shape_ids[bank.group_maps["steering"][class_label]]
    sp_shape = bank.speed_shape_ids[bank.group_maps["speed"][class_label]]
    steering[post] += _steering_shape(st_shape, k[post], cfg)
    speed[post] += _speed_shape(sp_shape, k[post], cfg)
    return appearance, motion, steering, speed


def _draw_onset(cfg: GeneratorConfig, rng: np.random.Generator) -> int:
    raw = rng.normal(cfg.onset_mean_s * cfg.fps, cfg.onset_std_s * cfg.fps)
    lo = int(np.ceil(cfg.frames / 2.0))
    hi = cfg.frames - cfg.ramp_frames
    return int(np.clip(np.rint(raw), lo, hi))


def generate_sequence(cfg: GeneratorConfig, bank: TemplateBank, class_label: int, index: int) -> Sequence:
    rng = np.random.default_rng([cfg.seed, class_label, index, 0x5E9])
    onset = _draw_onset(cfg, rng)
    daytime = "day" if rng.random() < cfg.day_fraction else "night"
    weather = "clear" if rng.random() < cfg.clear_fraction else "adverse"
    user = f"u{int(rng.integers(0, 3))}"

    appearance, motion, steering, speed = noiseless_signals(cfg, bank, class_label, onset)
    amp = 1.0
    if daytime == "night":
        amp *= cfg.night_snr_penalty
    if weather == "adverse":
        amp *= cfg.adverse_weather_snr_penalty
    appearance = appearance * amp
    motion = motion * amp

    sigma = cfg.noise_sigma
    dyn_sigma = sigma * cfg.dyn_noise_scale
    steering = steering + rng.normal(0.0, dyn_sigma, size=steering.shape) if sigma > 0 else steering
    speed = speed + rng.normal(0.0, dyn_sigma, size=speed.shape) if sigma > 0 else speed
    if sigma > 0:
        appearance = appearance + rng.normal(0.0, sigma, size=appearance.shape)
        motion = motion + rng.normal(0.0, sigma, size=motion.shape)

    return Sequence(
        id=f"{cfg.scenario}-c{class_label}-{index:05d}",
        scenario=cfg.scenario,
        class_label=class_label,
        frames=cfg.frames,
        fps=cfg.fps,
        modality_features=[
            appearance.astype(np.float32),
            motion.astype(np.float32),
        ],
        raw_steering=steering.astype(np.float32),
        raw_speed=speed.astype(np.float32),
        onset_frame=onset,
        daytime=daytime,
        weather=weather,
        user=user,
    )


def generate_dataset(cfg: GeneratorConfig, parallel: bool = False) -> list[Sequence]:
    """All num_classes * samples_per_class sequences, deterministic in cfg.seed."""
    bank = make_bank(cfg)
    tasks = [(c, i) for c in range(cfg.num_classes) for i in range(cfg.samples_per_class)]
    if parallel:
        with ThreadPoolExecutor() as pool:
            return list(pool.map(lambda ci: generate_sequence(cfg, bank, *ci), tasks))
    return [generate_sequence(cfg, bank, c, i) for c, i in tasks]


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

@dataclass
class SplitSpec:
    kind: str = "random"
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("random", "daytime", "weather"):
            raise ValueError(f"unknown split kind {self.kind!r}")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must lie in (0, 1)")


def split(sequences: list[Sequence], spec: SplitSpec):
    """Disjoint, exhaustive (train, test) partition per the split spec."""
    if not sequences:
        raise ValueError("cannot split an empty dataset")
    if spec.kind == "random":
        rng = np.random.default_rng(spec.seed)
        by_class: dict[int, list[int]] = {}
        for idx, seq in enumerate(sequences):
            by_class.setdefault(seq.class_label, []).append(idx)
        train_idx = []
        for label in sorted(by_class):
            idxs = by_class[label]
            order = rng.permutation(len(idxs))
            n_train = int(len(idxs) * spec.train_fraction + 0.5)
            train_idx.extend(idxs[i] for i in order[:n_train])
        chosen = set(train_idx)
        train = [sequences[i] for i in sorted(chosen)]
        test = [s for i, s in enumerate(sequences) if i not in chosen]
        return train, test

    tag = {"daytime": ("day", "night"), "weather": ("clear", "adverse")}[spec.kind]
    attr = "daytime" if spec.kind == "daytime" else "weather"
    train = [s for s in sequences if getattr(s, attr) == tag[0]]
    test = [s for s in sequences if getattr(s, attr) == tag[1]]
    if not train or not test:
        raise ValueError(f"{spec.kind} split needs both {tag[0]!r} and {tag[1]!r} samples")
    return train, test


# ---------------------------------------------------------------------------
# Nearest-template oracle (generation-time verification of the coding)
# ---------------------------------------------------------------------------

def oracle_predict(
    seq: Sequence,
    cfg: GeneratorConfig,
    bank: TemplateBank,
    modalities=MODALITY_NAMES,
    frame_slice: slice | None = None,
) -> int:
    """Brute-force nearest-template class for one sequence.

    Scores each candidate class by the squared distance between the observed
    signals and the noiseless signals that class would have produced at the
    sequence's onset, summed over the requested modalities and frames. Ties
    go to the lowest class index.
    """
    sl = frame_slice if frame_slice is not None else slice(None)
    obs = {
        "appearance": np.asarray(seq.modality_features[0], dtype=np.float64)[sl],
        "motion": np.asarray(seq.modality_features[1], dtype=np.float64)[sl],
        "steering": np.asarray(seq.raw_steering, dtype=np.float64)[sl],
        "speed": np.asarray(seq.raw_speed, dtype=np.float64)[sl],
    }
    amp = 1.0
    if seq.daytime == "night":
        amp *= cfg.night_snr_penalty
    if seq.weather == "adverse":
        amp *= cfg.adverse_weather_snr_penalty

    best_cls, best_score = 0, np.inf
    for c in range(cfg.num_classes):
        appearance, motion, steering, speed = noiseless_signals(cfg, bank, c, seq.onset_frame)
        expected = {
            "appearance": appearance[sl] * amp,
            "motion": motion[sl] * amp,
            "steering": steering[sl],
            "speed": speed[sl],
        }
        score = 0.0
        for m in modalities:
            diff = obs[m] - expected[m]
            score += float((diff * diff).sum())
        if score < best_score - 1e-12:
            best_score = score
            best_cls = c
    return best_cls


def oracle_accuracy(
    sequences: list[Sequence],
    cfg: GeneratorConfig,
    bank: TemplateBank,
    modalities=MODALITY_NAMES,
    pre_onset_only: bool = False,
) -> float:
    hits = 0
    for seq in sequences:
        sl = slice(0, seq.onset_frame) if pre_onset_only else None
        if oracle_predict(seq, cfg, bank, modalities, sl) == seq.class_label:
            hits += 1
    return hits / len(sequences)
