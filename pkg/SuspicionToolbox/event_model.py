#!/usr/bin/python3
"""
Sequences of detected suspicious actions and their per-frame partitions.

A sequence is a single-actor video of ``num_frames`` frames carrying the
action instances reported by an upstream temporal action localiser. At every
frame the instances split into the *current* set (running at that frame) and
the *past* set (already ended); the suspicion engine consumes both.
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from importlib import resources

import numpy as np

from .constants import NUM_CATEGORIES, TEMPORAL_DIM, TEMPORAL_ACTIVE_COUNT, TEMPORAL_PAST_COUNT, \
    TEMPORAL_PRESENCE_SLICE, TEMPORAL_TIMESTAMP
from .errors import DataError, RangeError
from .logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class ActionCategory:
    """One of the eleven predefined suspicious action concepts."""
    id: int
    name: str
    definition: str


@dataclass(frozen=True)
class ActionEvent:
    """
    One detected suspicious-action instance.

    Frames are inclusive on both ends, so a one-frame event has
    ``start_frame == end_frame``.
    """
    category: int
    start_frame: int
    end_frame: int
    confidence: float

    @property
    def duration(self) -> int:
        """Final duration in frames."""
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class Sequence:
    """A video sequence with its detected action events."""
    id: str
    num_frames: int
    fps: float
    events: tuple[ActionEvent, ...] = field(default_factory=tuple)

    @cached_property
    def categories(self) -> np.ndarray:
        return np.array([e.category for e in self.events], dtype=np.int64)

    @cached_property
    def starts(self) -> np.ndarray:
        return np.array([e.start_frame for e in self.events], dtype=np.int64)

    @cached_property
    def ends(self) -> np.ndarray:
        return np.array([e.end_frame for e in self.events], dtype=np.int64)

    @cached_property
    def confidences(self) -> np.ndarray:
        return np.array([e.confidence for e in self.events], dtype=np.float64)


@dataclass(frozen=True)
class FramePartition:
    """
    Current/past split of a sequence's events at one frame.

    Attributes:
        frame (int): Frame index the partition was taken at
        current (frozenset[int]): Indices of events running at ``frame``
        past (frozenset[int]): Indices of events that ended before ``frame``
        durations (dict[int, int]): Elapsed duration for current events, final duration for past events
        frequencies (tuple[int, ...]): Per-category count of events started at or before ``frame``
    """
    frame: int
    current: frozenset[int]
    past: frozenset[int]
    durations: dict[int, int]
    frequencies: tuple[int, ...]


@dataclass(frozen=True)
class Violation:
    """A broken sequence invariant; ``event_index`` is None for sequence-level problems."""
    event_index: int | None
    reason: str


@lru_cache(maxsize=1)
def load_categories() -> tuple[ActionCategory, ...]:
    """
    Load the bundled catalogue of suspicious action categories.

    Returns:
        tuple[ActionCategory, ...]: Exactly eleven categories ordered by id

    Raises:
        DataError: If the bundled asset breaks the catalogue invariants
    """
    text = resources.files(__package__).joinpath('data', 'concept_definitions.json').read_text(encoding='utf-8')
    raw = json.loads(text)['categories']
    categories = tuple(ActionCategory(int(c['id']), str(c['name']), str(c['definition'])) for c in raw)
    if [c.id for c in categories] != list(range(NUM_CATEGORIES)):
        raise DataError(f"Concept catalogue must hold ids 0..{NUM_CATEGORIES - 1} in order")
    if any(not c.name.strip() or not c.definition.strip() for c in categories):
        raise DataError("Concept catalogue contains an empty name or definition")
    logger.trace("Loaded %d action categories", len(categories))
    return categories


def _check_frame(seq: Sequence, t: int) -> None:
    if not 0 <= t < seq.num_frames:
        raise RangeError(f"Frame {t} outside sequence '{seq.id}' with {seq.num_frames} frames")


def partition_at(seq: Sequence, t: int) -> FramePartition:
    """
    Split the events of a sequence into current and past sets at frame ``t``.

    Args:
        seq (Sequence): Sequence to partition
        t (int): Frame index

    Returns:
        FramePartition: Partition with elapsed/final durations and per-category frequencies

    Raises:
        RangeError: If ``t`` is outside ``[0, num_frames)``
    """
    _check_frame(seq, t)
    current = []
    past = []
    durations = {}
    frequencies = [0] * NUM_CATEGORIES
    for index, event in enumerate(seq.events):
        if event.start_frame > t:
            continue
        frequencies[event.category] += 1
        if event.end_frame < t:
            past.append(index)
            durations[index] = event.duration
        else:
            current.append(index)
            durations[index] = t - event.start_frame + 1
    return FramePartition(t, frozenset(current), frozenset(past), durations, tuple(frequencies))


def category_counts(seq: Sequence) -> np.ndarray:
    """
    Per-category cumulative event counts for every frame.

    Returns:
        np.ndarray: Integer matrix of shape (num_frames, 11); entry [t, c] counts events
        of category c with ``start_frame <= t``
    """
    counts = np.zeros((seq.num_frames, NUM_CATEGORIES), dtype=np.int64)
    if seq.events:
        np.add.at(counts, (seq.starts, seq.categories), 1)
    return np.cumsum(counts, axis=0)


def temporal_features(seq: Sequence) -> np.ndarray:
    """
    Point-process temporal feature for every frame.

    Layout per row: active count, past count, eleven presence flags of the
    categories with a running event, and the timestamp in seconds.

    Returns:
        np.ndarray: Matrix of shape (num_frames, 14)
    """
    frames = np.arange(seq.num_frames)
    features = np.zeros((seq.num_frames, TEMPORAL_DIM), dtype=np.float64)
    if seq.events:
        active = (seq.starts[:, None] <= frames[None, :]) & (frames[None, :] <= seq.ends[:, None])
        ended = seq.ends[:, None] < frames[None, :]
        features[:, TEMPORAL_ACTIVE_COUNT] = active.sum(axis=0)
        features[:, TEMPORAL_PAST_COUNT] = ended.sum(axis=0)
        presence = np.zeros((seq.num_frames, NUM_CATEGORIES), dtype=bool)
        for index, category in enumerate(seq.categories):
            presence[:, category] |= active[index]
        features[:, TEMPORAL_PRESENCE_SLICE] = presence
    features[:, TEMPORAL_TIMESTAMP] = frames / seq.fps
    return features


def temporal_feature(seq: Sequence, t: int) -> np.ndarray:
    """Temporal feature of a single frame (see temporal_features)."""
    _check_frame(seq, t)
    partition = partition_at(seq, t)
    feature = np.zeros(TEMPORAL_DIM, dtype=np.float64)
    feature[TEMPORAL_ACTIVE_COUNT] = len(partition.current)
    feature[TEMPORAL_PAST_COUNT] = len(partition.past)
    for index in partition.current:
        feature[TEMPORAL_PRESENCE_SLICE.start + seq.events[index].category] = 1.0
    feature[TEMPORAL_TIMESTAMP] = t / seq.fps
    return feature


def validate_sequence(seq: Sequence) -> list[Violation]:
    """
    Check every sequence and event invariant.

    Args:
        seq (Sequence): Sequence to check

    Returns:
        list[Violation]: Empty if the sequence is well-formed, else one record per failure
    """
    violations = []
    if not isinstance(seq.id, str) or not seq.id:
        violations.append(Violation(None, "sequence id must be a non-empty string"))
    if seq.num_frames < 1:
        violations.append(Violation(None, f"num_frames must be >= 1, got {seq.num_frames}"))
    if not (isinstance(seq.fps, (int, float)) and math.isfinite(seq.fps) and seq.fps > 0):
        violations.append(Violation(None, f"fps must be positive, got {seq.fps}"))
    for index, event in enumerate(seq.events):
        if not 0 <= event.category < NUM_CATEGORIES:
            violations.append(Violation(index, f"category {event.category} out of range"))
        if event.start_frame < 0:
            violations.append(Violation(index, f"start_frame {event.start_frame} is negative"))
        if event.end_frame < event.start_frame:
            violations.append(Violation(index, f"end_frame {event.end_frame} before start_frame {event.start_frame}"))
        if event.end_frame >= seq.num_frames:
            violations.append(Violation(index, f"end_frame {event.end_frame} beyond last frame {seq.num_frames - 1}"))
        if not (math.isfinite(event.confidence) and 0.0 <= event.confidence <= 1.0):
            violations.append(Violation(index, "confidence out of range"))
    for violation in violations:
        logger.debug("Sequence '%s' violation at event %s: %s", seq.id, violation.event_index, violation.reason)
    return violations


def _require(obj: dict, key: str, kind: type | tuple, where: str):
    if key not in obj:
        raise DataError(f"{where}: missing field '{key}'")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, kind):
        raise DataError(f"{where}: field '{key}' has wrong type {type(value).__name__}")
    return value


def sequence_from_dict(data: dict) -> Sequence:
    """Build a Sequence from the events JSON object."""
    if not isinstance(data, dict):
        raise DataError("Events document must be a JSON object")
    seq_id = _require(data, 'id', str, 'sequence')
    num_frames = _require(data, 'num_frames', int, 'sequence')
    fps = float(_require(data, 'fps', (int, float), 'sequence'))
    raw_events = _require(data, 'events', list, 'sequence')
    events = []
    for index, item in enumerate(raw_events):
        where = f"events[{index}]"
        if not isinstance(item, dict):
            raise DataError(f"{where}: must be an object")
        events.append(ActionEvent(
            category=_require(item, 'category', int, where),
            start_frame=_require(item, 'start', int, where),
            end_frame=_require(item, 'end', int, where),
            confidence=float(_require(item, 'confidence', (int, float), where)),
        ))
    return Sequence(seq_id, num_frames, fps, tuple(events))


def sequence_to_dict(seq: Sequence) -> dict:
    """Serialise a Sequence to the events JSON object."""
    return {
        "id": seq.id,
        "num_frames": seq.num_frames,
        "fps": seq.fps,
        "events": [
            {"category": e.category, "start": e.start_frame, "end": e.end_frame, "confidence": e.confidence}
            for e in seq.events
        ],
    }


def load_events(path: str) -> Sequence:
    """
    Load a sequence from an events JSON file.

    Args:
        path (str): Path to the events file

    Returns:
        Sequence: Loaded sequence (not validated)

    Raises:
        DataError: If the file is missing, not JSON, or lacks a field
    """
    logger.debug("Loading events from %s", path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise DataError(f"Cannot read events file {path}: {e}")
    except json.JSONDecodeError as e:
        raise DataError(f"Events file {path} is not valid JSON: {e}")
    seq = sequence_from_dict(data)
    logger.debug("Loaded sequence '%s' with %d frames and %d events", seq.id, seq.num_frames, len(seq.events))
    return seq


def save_events(seq: Sequence, path: str) -> None:
    """Write a sequence as an events JSON file."""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(sequence_to_dict(seq), f, indent=2)
    logger.debug("Wrote events of sequence '%s' to %s", seq.id, path)
