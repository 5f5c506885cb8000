#!/usr/bin/python3
"""
Seeded synthetic scenarios with hidden-teacher ground truth.

Each sequence gets Bernoulli-per-frame action arrivals with geometric
durations, a bounded context signal kappa(t) built from sinusoids, and
ground truth produced by the suspicion engine under teacher coefficients
omega * (1 + 0.5 kappa(t)). Visual features carry kappa along a fixed
direction so a modulator can recover it.

Randomness: one SeedSequence per dataset. Spawn key (0,) feeds the
dataset-level draws (prototypes, context direction, anchor bank), spawn key
(1, i) feeds sequence i, spawn key (2,) feeds ``split``.
"""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .concept_anchor import AnchorBank, load_anchor_bank, random_anchor_bank, save_anchor_bank, spectrum_batch
from .constants import COEFFICIENTS, DATASET_FORMAT, DATASET_FORMAT_VERSION, DEFAULT_OMEGA, DELTA_SCALE, \
    NUM_CATEGORIES, TEMPORAL_PRESENCE_SLICE, VISUAL_DIM
from .errors import ArgumentError, ConfigError, DataError
from .event_model import ActionEvent, Sequence, load_events, save_events, temporal_features
from .feature_container import load_feature_container, save_features
from .logger import get_logger
from .modulator import FeatureStack
from .progress import progress
from .suspicion_engine import CoefficientHistory, SuspicionCurve, forward_with_tape, load_curve, save_curve

logger = get_logger(__name__)

TEACHER_CSV_HEADER = ['frame', 'alpha', 'beta', 'gamma', 'context']
LOW_FREQUENCY_SCALE = 0.3
HIGH_FREQUENCY_SCALE = 3.0


@dataclass(frozen=True)
class SynthConfig:
    """
    Generator settings; rates are per frame and category, durations in frames.

    ``arrival_rate`` and ``mean_duration`` take one value for all categories
    or a sequence of 11 values, one per category.
    """
    seed: int = 0
    num_sequences: int = 100
    frames_per_sequence: int = 600
    fps: float = 30.0
    arrival_rate: float | tuple[float, ...] = 0.002
    mean_duration: float | tuple[float, ...] = 30.0
    distractor_rate: float = 0.0
    context_components: int = 3
    context_amplitude: float = 1.0
    visual_scale: float = 0.5
    feature_noise_std: float = 0.25
    anchor_dim: int = 64
    frequency_scale: float = 1.0
    misspecified_noise: float = 0.0
    omega: tuple[float, float, float] = tuple(DEFAULT_OMEGA[p] for p in COEFFICIENTS)

    def __post_init__(self) -> None:
        def positive_int(name, minimum=1):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
                raise ConfigError(f'synth.{name}', f"expected an integer >= {minimum}, got {value}")

        def in_range(value, minimum, strict, maximum) -> bool:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
            ok = ok and (value > minimum if strict else value >= minimum)
            return ok and (maximum is None or value <= maximum)

        def bound(minimum, strict, maximum) -> str:
            text = f"> {minimum}" if strict else f">= {minimum}"
            return text if maximum is None else f"{text} and <= {maximum}"

        def number(name, minimum=0.0, strict=False, maximum=None):
            value = getattr(self, name)
            if not in_range(value, minimum, strict, maximum):
                raise ConfigError(f'synth.{name}', f"expected a number {bound(minimum, strict, maximum)}, got {value}")

        def per_category(name, minimum=0.0, maximum=None):
            value = getattr(self, name)
            if isinstance(value, (list, tuple)):
                if len(value) != NUM_CATEGORIES:
                    raise ConfigError(f'synth.{name}',
                                      f"expected one value or {NUM_CATEGORIES} per-category values, got {len(value)}")
                for category, entry in enumerate(value):
                    if not in_range(entry, minimum, False, maximum):
                        raise ConfigError(f'synth.{name}', f"category {category}: expected a number "
                                                            f"{bound(minimum, False, maximum)}, got {entry}")
                object.__setattr__(self, name, tuple(float(v) for v in value))
            else:
                number(name, minimum, maximum=maximum)

        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError('seed', f"expected an unsigned 64-bit integer, got {self.seed}")
        positive_int('num_sequences')
        positive_int('frames_per_sequence', 50)
        positive_int('context_components')
        positive_int('anchor_dim')
        number('fps', strict=True)
        per_category('arrival_rate', maximum=1.0)
        per_category('mean_duration', minimum=1.0)
        number('distractor_rate', maximum=1.0)
        number('context_amplitude', strict=True, maximum=1.0)
        number('visual_scale', strict=True)
        number('feature_noise_std')
        number('frequency_scale', strict=True)
        number('misspecified_noise')
        if np.max(self.category_rates) > 1.0:
            raise ConfigError('synth.frequency_scale', "scaled arrival rate exceeds one event per frame")
        if len(self.omega) != 3 or any(not (math.isfinite(w) and w > 0) for w in self.omega):
            raise ConfigError('modulator.omega', f"expected three positive base values, got {list(self.omega)}")

    @property
    def category_rates(self) -> np.ndarray:
        """Arrival rate of every category after ``frequency_scale``."""
        return np.broadcast_to(np.asarray(self.arrival_rate, dtype=np.float64), NUM_CATEGORIES) * self.frequency_scale

    @property
    def category_durations(self) -> np.ndarray:
        """Mean event duration of every category."""
        return np.broadcast_to(np.asarray(self.mean_duration, dtype=np.float64), NUM_CATEGORIES).copy()


@dataclass(frozen=True)
class TeacherTrajectory:
    """Hidden per-frame coefficients of a synthetic sequence and the context driving them."""
    history: CoefficientHistory
    context: np.ndarray


@dataclass
class LabeledSequence:
    """A sequence with its per-frame features, ground-truth curve and (for synthetic data) teacher."""
    sequence: Sequence
    features: FeatureStack
    gt: SuspicionCurve
    teacher: TeacherTrajectory | None = None

    @property
    def id(self) -> str:
        return self.sequence.id


@dataclass
class LabeledDataset:
    """Labeled sequences plus the anchor bank and generator settings they came from."""
    samples: list[LabeledSequence]
    anchors: AnchorBank | None = None
    generator: dict | None = None

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


@dataclass(frozen=True)
class _DatasetDraws:
    prototypes: np.ndarray
    context_direction: np.ndarray
    anchors: AnchorBank
    anchor_context: np.ndarray
    anchor_background: np.ndarray


def _dataset_draws(config: SynthConfig) -> _DatasetDraws:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    prototypes = rng.standard_normal((NUM_CATEGORIES, VISUAL_DIM))
    context_direction = rng.standard_normal(VISUAL_DIM)
    anchors = random_anchor_bank(config.anchor_dim, rng)
    anchor_context = rng.standard_normal(config.anchor_dim)
    anchor_context /= np.linalg.norm(anchor_context)
    anchor_background = rng.standard_normal(config.anchor_dim)
    anchor_background /= np.linalg.norm(anchor_background)
    return _DatasetDraws(prototypes, context_direction, anchors, anchor_context, anchor_background)


def _draw_events(rng: np.random.Generator, num_frames: int, rates: np.ndarray, mean_durations: np.ndarray,
                 confidence_range: tuple[float, float]) -> list[ActionEvent]:
    events = []
    for category in range(NUM_CATEGORIES):
        starts = np.flatnonzero(rng.random(num_frames) < rates[category])
        durations = rng.geometric(1.0 / mean_durations[category], size=starts.size)
        confidences = rng.uniform(*confidence_range, size=starts.size)
        for start, duration, confidence in zip(starts, durations, confidences):
            end = min(int(start) + int(duration) - 1, num_frames - 1)
            events.append(ActionEvent(category, int(start), end, float(confidence)))
    return events


def _event_order(event: ActionEvent) -> tuple[int, int, int]:
    return event.start_frame, event.category, event.end_frame


def context_signal(rng: np.random.Generator, num_frames: int, components: int, amplitude: float) -> np.ndarray:
    """
    Sum of seeded sinusoids rescaled so that max |kappa| equals ``amplitude``.

    Periods range from a third of the sequence to twice its length.
    """
    frames = np.arange(num_frames)
    weights = rng.uniform(0.5, 1.0, size=components)
    frequencies = rng.uniform(0.5, 3.0, size=components) / num_frames
    phases = rng.uniform(0.0, 2.0 * np.pi, size=components)
    signal = (weights[:, None] * np.sin(2.0 * np.pi * frequencies[:, None] * frames[None, :] + phases[:, None])).sum(axis=0)
    peak = float(np.max(np.abs(signal)))
    return amplitude * signal / peak if peak > 0 else signal


def _teacher(rng: np.random.Generator, context: np.ndarray, config: SynthConfig) -> TeacherTrajectory:
    omega = np.asarray(config.omega, dtype=np.float64)
    drive = np.repeat(context[:, None], 3, axis=1)
    if config.misspecified_noise > 0:
        drive = np.clip(drive + config.misspecified_noise * rng.standard_normal(drive.shape), -1.0, 1.0)
    return TeacherTrajectory(CoefficientHistory(omega * (1.0 + DELTA_SCALE * drive)), context)


def _to_float32(values: np.ndarray) -> np.ndarray:
    return values.astype(np.float32).astype(np.float64)


def _features(rng: np.random.Generator, seq: Sequence, context: np.ndarray, draws: _DatasetDraws,
              config: SynthConfig) -> FeatureStack:
    T = seq.num_frames
    temporal = temporal_features(seq)
    presence = temporal[:, TEMPORAL_PRESENCE_SLICE]
    conf = np.zeros((T, NUM_CATEGORIES), dtype=np.float64)
    for event in seq.events:
        rows = slice(event.start_frame, event.end_frame + 1)
        conf[rows, event.category] = np.maximum(conf[rows, event.category], event.confidence)
    visual = config.visual_scale * (presence @ draws.prototypes + context[:, None] * draws.context_direction[None, :])
    visual += config.feature_noise_std * rng.standard_normal((T, VISUAL_DIM))
    embeddings = presence @ draws.anchors.anchors + 0.5 * context[:, None] * draws.anchor_context[None, :]
    embeddings += draws.anchor_background[None, :]
    embeddings += config.feature_noise_std * rng.standard_normal((T, config.anchor_dim)) / math.sqrt(config.anchor_dim)
    spectrum = spectrum_batch(embeddings, draws.anchors)
    return FeatureStack({
        'visual': _to_float32(visual),
        'conf': _to_float32(conf),
        'temporal': _to_float32(temporal),
        'spectrum': _to_float32(spectrum),
    })


def generate_sequence(config: SynthConfig, index: int, draws: _DatasetDraws | None = None) -> LabeledSequence:
    """
    Generate sequence ``index`` of a dataset; independent of the other sequences.

    Args:
        config (SynthConfig): Generator settings
        index (int): Position of the sequence in the dataset
        draws (_DatasetDraws | None): Dataset-level draws, recomputed if None

    Returns:
        LabeledSequence: Detected sequence, features, ground truth and teacher
    """
    if draws is None:
        draws = _dataset_draws(config)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1, index)))
    T = config.frames_per_sequence
    seq_id = f"seq_{index:05d}"
    true_events = _draw_events(rng, T, config.category_rates, config.category_durations, (0.6, 1.0))
    truth = Sequence(seq_id, T, float(config.fps), tuple(sorted(true_events, key=_event_order)))
    context = context_signal(rng, T, config.context_components, config.context_amplitude)
    teacher = _teacher(rng, context, config)
    gt, _ = forward_with_tape(truth, teacher.history)
    # drawn after the ground truth so distractors never change it
    distractor_rates = np.full(NUM_CATEGORIES, config.distractor_rate)
    distractors = _draw_events(rng, T, distractor_rates, config.category_durations, (0.1, 0.6))
    detected = Sequence(seq_id, T, float(config.fps), tuple(sorted(true_events + distractors, key=_event_order)))
    features = _features(rng, detected, context, draws, config)
    logger.trace("Generated '%s': %d events, %d distractors", seq_id, len(true_events), len(distractors))
    return LabeledSequence(detected, features, gt, teacher)


def generate(config: SynthConfig) -> LabeledDataset:
    """
    Generate a complete synthetic dataset.

    Args:
        config (SynthConfig): Generator settings

    Returns:
        LabeledDataset: Sequences in id order, the anchor bank and the settings
    """
    logger.info("Generating %d synthetic sequences of %d frames (seed %d)",
                config.num_sequences, config.frames_per_sequence, config.seed)
    draws = _dataset_draws(config)
    samples = [generate_sequence(config, i, draws)
               for i in progress(range(config.num_sequences), desc="Generating", unit='seq')]
    return LabeledDataset(samples, draws.anchors, synth_config_to_dict(config))


def synth_config_to_dict(config: SynthConfig) -> dict:
    data = asdict(config)
    data['omega'] = list(config.omega)
    for key in ('arrival_rate', 'mean_duration'):
        if isinstance(data[key], tuple):
            data[key] = list(data[key])
    return data


def split(samples, train_frac: float, seed: int) -> tuple[list, list]:
    """
    Seeded shuffle and split into training and validation parts.

    Args:
        samples (Sequence[LabeledSequence]): Items to split
        train_frac (float): Fraction for training, 0 < train_frac < 1
        seed (int): Split seed

    Returns:
        tuple[list, list]: Disjoint training and validation lists, each in original order

    Raises:
        ArgumentError: If a side of the split would be empty
    """
    samples = list(samples)
    if not 0 < train_frac < 1:
        raise ArgumentError(f"train_frac must lie in (0, 1), got {train_frac}")
    n_train = int(round(train_frac * len(samples)))
    if n_train < 1 or n_train >= len(samples):
        raise ArgumentError(f"Cannot split {len(samples)} sequences with train_frac {train_frac}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    order = rng.permutation(len(samples))
    train_idx, val_idx = sorted(order[:n_train]), sorted(order[n_train:])
    return [samples[i] for i in train_idx], [samples[i] for i in val_idx]


def _save_teacher(teacher: TeacherTrajectory, path: str) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(TEACHER_CSV_HEADER)
        for t, (row, kappa) in enumerate(zip(teacher.history.values, teacher.context)):
            writer.writerow([t] + [f"{v:.17g}" for v in row] + [f"{kappa:.17g}"])


def _load_teacher(path: str) -> TeacherTrajectory:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != TEACHER_CSV_HEADER:
        raise DataError(f"Teacher file {path} must start with header '{','.join(TEACHER_CSV_HEADER)}'")
    try:
        values = np.array([[float(v) for v in row[1:]] for row in rows[1:]], dtype=np.float64)
    except ValueError as e:
        raise DataError(f"Teacher file {path}: {e}")
    return TeacherTrajectory(CoefficientHistory(values[:, :3]), values[:, 3])


def write_dataset(dataset: LabeledDataset, out_dir: str) -> str:
    """
    Write a dataset directory.

    Layout: ``events/<id>.json``, ``features/<id>/``, ``gt/<id>.csv``,
    ``teacher/<id>.csv``, ``anchors/anchors.json`` and ``manifest.json``.

    Returns:
        str: Path of the dataset manifest
    """
    for sub in ('events', 'features', 'gt', 'teacher', 'anchors'):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    for sample in progress(dataset.samples, desc="Writing", unit='seq'):
        seq = sample.sequence
        save_events(seq, os.path.join(out_dir, 'events', f"{seq.id}.json"))
        save_features(sample.features, os.path.join(out_dir, 'features', seq.id), seq.id, seq.fps)
        save_curve(sample.gt, os.path.join(out_dir, 'gt', f"{seq.id}.csv"))
        if sample.teacher is not None:
            _save_teacher(sample.teacher, os.path.join(out_dir, 'teacher', f"{seq.id}.csv"))
    if dataset.anchors is not None:
        save_anchor_bank(dataset.anchors, os.path.join(out_dir, 'anchors', 'anchors.json'))
    manifest = {
        "format": DATASET_FORMAT,
        "format_version": DATASET_FORMAT_VERSION,
        "num_sequences": len(dataset),
        "members": [s.id for s in dataset.samples],
        "generator": dataset.generator,
    }
    manifest_path = os.path.join(out_dir, 'manifest.json')
    with open(manifest_path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    logger.info("Wrote dataset of %d sequences to %s", len(dataset), out_dir)
    return manifest_path


def load_dataset(directory: str) -> LabeledDataset:
    """
    Load a dataset directory written by write_dataset.

    Teacher trajectories and the anchor bank are optional.

    Raises:
        DataError: On a missing member file or inconsistent frame counts
    """
    manifest_path = os.path.join(directory, 'manifest.json')
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error("Cannot read dataset manifest %s", manifest_path)
        raise DataError(f"Cannot read dataset manifest {manifest_path}: {e}")
    if manifest.get('format') != DATASET_FORMAT:
        raise DataError(f"{manifest_path} is not a {DATASET_FORMAT} manifest")
    members = manifest.get('members')
    if not isinstance(members, list) or not members:
        raise DataError(f"Dataset manifest {manifest_path}: 'members' must be a non-empty list")
    samples = []
    for seq_id in progress(members, desc="Loading", unit='seq'):
        seq = load_events(os.path.join(directory, 'events', f"{seq_id}.json"))
        container = load_feature_container(os.path.join(directory, 'features', seq_id))
        gt = load_curve(os.path.join(directory, 'gt', f"{seq_id}.csv"), seq_id)
        if container.frames != seq.num_frames or len(gt) != seq.num_frames:
            raise DataError(f"Sequence '{seq_id}': events have {seq.num_frames} frames, features "
                            f"{container.frames}, ground truth {len(gt)}")
        teacher_path = os.path.join(directory, 'teacher', f"{seq_id}.csv")
        teacher = _load_teacher(teacher_path) if os.path.exists(teacher_path) else None
        samples.append(LabeledSequence(seq, container.features, gt, teacher))
    anchors_path = os.path.join(directory, 'anchors', 'anchors.json')
    anchors = load_anchor_bank(anchors_path) if os.path.exists(anchors_path) else None
    logger.info("Loaded dataset of %d sequences from %s", len(samples), directory)
    return LabeledDataset(samples, anchors, manifest.get('generator'))
