#!/usr/bin/python3
"""
Continuous suspicion score of a sequence of detected actions.

The raw score at frame t sums the kernels of the running actions and the
exponentially decayed kernels of the ended ones::

    raw(t) = sum_{i in C_t} f(i; alpha(t), beta(t))
           + sum_{j in P_t} f(j; alpha(t_j), beta(t_j)) * exp(-gamma(t) * (t - t_j))

with f = (1 + tanh(alpha * d)) * log(1 + beta * n) and t_j the end frame of
past action j. Past kernels are frozen at t_j. The published score is
tanh(raw), which lies in [0, 1).

Three evaluation paths are provided: ``score_sequence`` follows the formula
frame by frame, ``score_sequence_fast`` runs a decayed running sum for
constant coefficients, and ``forward_with_tape`` evaluates all frames at once
while keeping what the analytic gradient needs.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .constants import COEFFICIENTS, CURVE_CSV_HEADER, DECAY_MODES, EXPONENT_FLOOR
from .errors import ArgumentError, DataError, StateError
from .event_model import Sequence, category_counts, partition_at
from .logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class CoefficientTriple:
    """Duration (alpha), frequency (beta) and decay (gamma) coefficients of one frame."""
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        for name in COEFFICIENTS:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ArgumentError(f"Coefficient {name} must be positive and finite, got {value}")


class CoefficientHistory:
    """
    Per-frame coefficient triples of a sequence, stored as a (T, 3) array.

    Columns are alpha, beta, gamma.
    """

    def __init__(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != 3:
            raise ArgumentError(f"Coefficient history must have shape (T, 3), got {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            bad = int(np.argmax(~(np.isfinite(values) & (values > 0)).all(axis=1)))
            raise ArgumentError(f"Coefficient history holds a non-positive or non-finite value at frame {bad}")
        self.values = values

    @classmethod
    def constant(cls, coeffs: CoefficientTriple, num_frames: int) -> 'CoefficientHistory':
        """History repeating one triple for every frame."""
        row = np.array([coeffs.alpha, coeffs.beta, coeffs.gamma], dtype=np.float64)
        return cls(np.tile(row, (num_frames, 1)))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def beta(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def gamma(self) -> np.ndarray:
        return self.values[:, 2]

    def at(self, t: int) -> CoefficientTriple:
        """Coefficient triple in force at frame ``t``."""
        if not 0 <= t < len(self):
            raise StateError(f"No coefficients recorded for frame {t} (history covers {len(self)} frames)")
        alpha, beta, gamma = self.values[t]
        return CoefficientTriple(float(alpha), float(beta), float(gamma))

    def is_constant(self) -> bool:
        return len(self) == 0 or bool(np.all(self.values == self.values[0]))


@dataclass(frozen=True)
class SuspicionCurve:
    """Per-frame raw and squashed suspicion scores of one sequence."""
    sequence_id: str
    raw: np.ndarray
    scores: np.ndarray

    @classmethod
    def from_raw(cls, sequence_id: str, raw: np.ndarray) -> 'SuspicionCurve':
        raw = np.asarray(raw, dtype=np.float64)
        return cls(sequence_id, raw, np.tanh(raw))

    def __len__(self) -> int:
        return self.scores.shape[0]


def duration_effect(alpha: float, d: int) -> float:
    """
    Duration effect 1 + tanh(alpha * d).

    Args:
        alpha (float): Duration coefficient, > 0
        d (int): Duration in frames, >= 1

    Returns:
        float: Value in (1, 2)
    """
    if not alpha > 0:
        raise ArgumentError(f"alpha must be positive, got {alpha}")
    if d < 1:
        raise ArgumentError(f"duration must be at least one frame, got {d}")
    return 1.0 + math.tanh(alpha * d)


def frequency_effect(beta: float, n: int) -> float:
    """
    Frequency effect log(1 + beta * n) with the natural logarithm.

    Args:
        beta (float): Frequency coefficient, > 0
        n (int): Occurrence count, >= 0

    Returns:
        float: 0 for n = 0, concave increasing in n
    """
    if not beta > 0:
        raise ArgumentError(f"beta must be positive, got {beta}")
    if n < 0:
        raise ArgumentError(f"frequency must be non-negative, got {n}")
    return math.log1p(beta * n)


def kernel(d: int, n: int, coeffs: CoefficientTriple) -> float:
    """Suspicion kernel of one action: duration effect times frequency effect."""
    return duration_effect(coeffs.alpha, d) * frequency_effect(coeffs.beta, n)


def _decay(gamma: float, elapsed: float) -> float:
    return math.exp(min(0.0, max(EXPONENT_FLOOR, -gamma * elapsed)))


def score_frame(seq: Sequence, t: int, coeff_history: CoefficientHistory,
                frozen_kernels: dict[int, float]) -> float:
    """
    Raw suspicion score of one frame.

    Kernels of past events are evaluated once, with the coefficients of the
    event's end frame and its final duration and frequency, and stored in
    ``frozen_kernels`` keyed by event index.

    Args:
        seq (Sequence): Scored sequence
        t (int): Frame index
        coeff_history (CoefficientHistory): Coefficients for frames 0..t at least
        frozen_kernels (dict[int, float]): Per-invocation cache of frozen past kernels

    Returns:
        float: Raw score, >= 0

    Raises:
        StateError: If the history does not reach frame ``t``
    """
    if coeff_history is None or len(coeff_history) <= t:
        raise StateError(f"Coefficient history missing for frame {t} of sequence '{seq.id}'")
    partition = partition_at(seq, t)
    coeffs = coeff_history.at(t)
    raw = 0.0
    for index in sorted(partition.current):
        category = seq.events[index].category
        raw += kernel(partition.durations[index], partition.frequencies[category], coeffs)
    for index in sorted(partition.past):
        event = seq.events[index]
        if index not in frozen_kernels:
            at_end = partition_at(seq, event.end_frame)
            frozen_kernels[index] = kernel(event.duration, at_end.frequencies[event.category],
                                           coeff_history.at(event.end_frame))
            logger.trace("Froze kernel of event %d at frame %d: %.6g", index, event.end_frame, frozen_kernels[index])
        raw += frozen_kernels[index] * _decay(coeffs.gamma, t - event.end_frame)
    return raw


def _check_history(seq: Sequence, coeff_history: CoefficientHistory) -> None:
    if len(coeff_history) != seq.num_frames:
        raise ArgumentError(f"Coefficient history covers {len(coeff_history)} frames, "
                            f"sequence '{seq.id}' has {seq.num_frames}")


def score_sequence(seq: Sequence, coeff_history: CoefficientHistory, decay_mode: str = 'literal') -> SuspicionCurve:
    """
    Score every frame of a sequence with the literal formula.

    Args:
        seq (Sequence): Sequence to score
        coeff_history (CoefficientHistory): One coefficient triple per frame
        decay_mode (str): Decay reading; only 'literal' (gamma at the evaluation frame) exists

    Returns:
        SuspicionCurve: Raw and tanh-squashed scores
    """
    if decay_mode not in DECAY_MODES:
        raise ArgumentError(f"Unsupported decay mode '{decay_mode}', available: {', '.join(DECAY_MODES)}")
    _check_history(seq, coeff_history)
    logger.debug("Scoring sequence '%s' (%d frames, %d events) on the literal path",
                 seq.id, seq.num_frames, len(seq.events))
    frozen_kernels: dict[int, float] = {}
    raw = np.array([score_frame(seq, t, coeff_history, frozen_kernels) for t in range(seq.num_frames)],
                   dtype=np.float64)
    return SuspicionCurve.from_raw(seq.id, raw)


def score_sequence_fast(seq: Sequence, coeffs: CoefficientTriple | CoefficientHistory) -> SuspicionCurve:
    """
    Score a sequence with constant coefficients using a running decayed sum.

    The past component is carried from frame to frame by one multiplication
    with exp(-gamma); events ending at t-1 join it at frame t.

    Args:
        seq (Sequence): Sequence to score
        coeffs (CoefficientTriple | CoefficientHistory): Constant coefficients

    Returns:
        SuspicionCurve: Same values as score_sequence up to rounding

    Raises:
        ArgumentError: If a history with varying coefficients is passed
    """
    if isinstance(coeffs, CoefficientHistory):
        _check_history(seq, coeffs)
        if not coeffs.is_constant():
            raise ArgumentError("The running-sum path requires constant coefficients")
        coeffs = coeffs.at(0)
    T = seq.num_frames
    raw = np.zeros(T, dtype=np.float64)
    if not seq.events:
        return SuspicionCurve.from_raw(seq.id, raw)

    counts = category_counts(seq)
    frames = np.arange(T)
    starts, ends, cats = seq.starts, seq.ends, seq.categories

    elapsed = frames[None, :] - starts[:, None] + 1
    running = (starts[:, None] <= frames[None, :]) & (frames[None, :] <= ends[:, None])
    live_counts = counts[:, cats].T
    current = (1.0 + np.tanh(coeffs.alpha * np.maximum(elapsed, 1))) * np.log1p(coeffs.beta * live_counts)
    raw += np.where(running, current, 0.0).sum(axis=0)

    frozen = (1.0 + np.tanh(coeffs.alpha * (ends - starts + 1))) * np.log1p(coeffs.beta * counts[ends, cats])
    injected = np.zeros(T + 1, dtype=np.float64)
    np.add.at(injected, ends + 1, frozen)
    step = math.exp(-coeffs.gamma)
    past = 0.0
    for t in range(T):
        past = (past + injected[t]) * step
        raw[t] += past
    return SuspicionCurve.from_raw(seq.id, raw)


@dataclass
class EngineTape:
    """
    Intermediates of a vectorised engine pass, laid out as (events, frames) matrices.

    Attributes hold everything engine_coefficient_gradients needs: masks,
    live attributes, tanh terms and frozen kernels.
    """
    sequence_id: str
    history: CoefficientHistory
    curve: SuspicionCurve
    running: np.ndarray
    ended: np.ndarray
    elapsed: np.ndarray
    live_counts: np.ndarray
    live_tanh: np.ndarray
    live_duration_effect: np.ndarray
    live_frequency_effect: np.ndarray
    end_frames: np.ndarray
    final_durations: np.ndarray
    final_counts: np.ndarray
    frozen_tanh: np.ndarray
    frozen_duration_effect: np.ndarray
    frozen_frequency_effect: np.ndarray
    frozen_kernels: np.ndarray
    since_end: np.ndarray
    decay: np.ndarray
    decay_clamped: np.ndarray


def forward_with_tape(seq: Sequence, coeff_history: CoefficientHistory) -> tuple[SuspicionCurve, EngineTape]:
    """
    Score all frames at once for time-varying coefficients and keep a tape.

    Args:
        seq (Sequence): Sequence to score
        coeff_history (CoefficientHistory): One coefficient triple per frame

    Returns:
        tuple[SuspicionCurve, EngineTape]: The curve and the intermediates for backward
    """
    _check_history(seq, coeff_history)
    T = seq.num_frames
    E = len(seq.events)
    frames = np.arange(T)
    alpha, beta, gamma = coeff_history.alpha, coeff_history.beta, coeff_history.gamma
    counts = category_counts(seq)
    starts, ends, cats = seq.starts, seq.ends, seq.categories

    running = (starts[:, None] <= frames[None, :]) & (frames[None, :] <= ends[:, None])
    ended = ends[:, None] < frames[None, :]
    elapsed = np.maximum(frames[None, :] - starts[:, None] + 1, 1).astype(np.float64)
    live_counts = counts[:, cats].T.astype(np.float64) if E else np.zeros((0, T))

    live_tanh = np.tanh(alpha[None, :] * elapsed)
    live_duration_effect = 1.0 + live_tanh
    live_frequency_effect = np.log1p(beta[None, :] * live_counts)
    current = np.where(running, live_duration_effect * live_frequency_effect, 0.0)

    final_durations = (ends - starts + 1).astype(np.float64)
    final_counts = counts[ends, cats].astype(np.float64) if E else np.zeros(0)
    frozen_tanh = np.tanh(alpha[ends] * final_durations)
    frozen_duration_effect = 1.0 + frozen_tanh
    frozen_frequency_effect = np.log1p(beta[ends] * final_counts)
    frozen_kernels = frozen_duration_effect * frozen_frequency_effect

    since_end = (frames[None, :] - ends[:, None]).astype(np.float64)
    exponent = -gamma[None, :] * since_end
    decay_clamped = ended & (exponent < EXPONENT_FLOOR)
    decay = np.where(ended, np.exp(np.clip(exponent, EXPONENT_FLOOR, 0.0)), 0.0)
    past = frozen_kernels[:, None] * decay

    raw = current.sum(axis=0) + past.sum(axis=0)
    curve = SuspicionCurve.from_raw(seq.id, raw)
    logger.trace("Vectorised engine pass over '%s': %d events x %d frames", seq.id, E, T)
    tape = EngineTape(
        sequence_id=seq.id, history=coeff_history, curve=curve,
        running=running, ended=ended, elapsed=elapsed, live_counts=live_counts,
        live_tanh=live_tanh, live_duration_effect=live_duration_effect,
        live_frequency_effect=live_frequency_effect,
        end_frames=ends, final_durations=final_durations, final_counts=final_counts,
        frozen_tanh=frozen_tanh, frozen_duration_effect=frozen_duration_effect,
        frozen_frequency_effect=frozen_frequency_effect, frozen_kernels=frozen_kernels,
        since_end=since_end, decay=decay, decay_clamped=decay_clamped,
    )
    return curve, tape


def save_curve(curve: SuspicionCurve, path: str) -> None:
    """
    Write a curve as CSV with header ``frame,raw,score`` and 9 significant digits.

    Args:
        curve (SuspicionCurve): Curve to write
        path (str): Output path
    """
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(CURVE_CSV_HEADER + '\n')
        for t, (raw, score) in enumerate(zip(curve.raw, curve.scores)):
            f.write(f"{t},{raw:.9g},{score:.9g}\n")
    logger.debug("Wrote curve of '%s' (%d frames) to %s", curve.sequence_id, len(curve), path)


def load_curve(path: str, sequence_id: str | None = None) -> SuspicionCurve:
    """
    Read a curve CSV written by save_curve.

    Args:
        path (str): CSV path
        sequence_id (str | None): Id to attach; defaults to the file stem

    Returns:
        SuspicionCurve: Loaded curve

    Raises:
        DataError: On a wrong header, a gap in frame numbers, or an unparsable row
    """
    if sequence_id is None:
        sequence_id = os.path.splitext(os.path.basename(path))[0]
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = [line.strip() for line in f if line.strip()]
    except OSError as e:
        raise DataError(f"Cannot read curve file {path}: {e}")
    if not lines or lines[0] != CURVE_CSV_HEADER:
        raise DataError(f"Curve file {path} must start with header '{CURVE_CSV_HEADER}'")
    raw, scores = [], []
    for row_number, line in enumerate(lines[1:]):
        parts = line.split(',')
        try:
            frame, raw_value, score_value = int(parts[0]), float(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            raise DataError(f"Curve file {path}: cannot parse row {row_number + 2}: '{line}'")
        if frame != row_number:
            raise DataError(f"Curve file {path}: expected frame {row_number}, found {frame}")
        raw.append(raw_value)
        scores.append(score_value)
    return SuspicionCurve(sequence_id, np.array(raw, dtype=np.float64), np.array(scores, dtype=np.float64))
