"""
Shared fixtures for the SuspicionToolbox test suite.
"""

import numpy as np
import pytest

from SuspicionToolbox.event_model import ActionEvent, Sequence
from SuspicionToolbox.modulator import FeatureStack, ModulatorConfig, init_params
from SuspicionToolbox.constants import MODALITY_DIMS, MODALITIES
from SuspicionToolbox.progress import set_progress_enabled
from SuspicionToolbox.synth import SynthConfig, generate


@pytest.fixture(autouse=True)
def no_progress_bars():
    set_progress_enabled(False)
    yield
    set_progress_enabled(True)


def make_sequence(events, num_frames=20, seq_id='test', fps=30.0) -> Sequence:
    """Build a sequence from (category, start, end[, confidence]) tuples."""
    built = []
    for item in events:
        category, start, end = item[:3]
        confidence = item[3] if len(item) > 3 else 0.9
        built.append(ActionEvent(category, start, end, confidence))
    return Sequence(seq_id, num_frames, fps, tuple(built))


def random_sequence(rng: np.random.Generator, num_frames: int, num_events: int, seq_id='random') -> Sequence:
    events = []
    for _ in range(num_events):
        start = int(rng.integers(0, num_frames))
        end = min(start + int(rng.integers(0, 40)), num_frames - 1)
        events.append(ActionEvent(int(rng.integers(0, 11)), start, end, float(rng.uniform(0.5, 1.0))))
    events.sort(key=lambda e: (e.start_frame, e.category))
    return Sequence(seq_id, num_frames, 25.0, tuple(events))


def random_features(rng: np.random.Generator, num_frames: int) -> FeatureStack:
    return FeatureStack({m: rng.standard_normal((num_frames, MODALITY_DIMS[m])) for m in MODALITIES})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_params(rng):
    """Width-8 parameters with non-zero output heads."""
    return init_params(8, rng, zero_heads=False)


@pytest.fixture
def small_modulator():
    return ModulatorConfig(hidden=8)


@pytest.fixture(scope='session')
def tiny_synth_config():
    return SynthConfig(seed=11, num_sequences=6, frames_per_sequence=80, arrival_rate=0.01,
                       mean_duration=10.0, anchor_dim=16)


@pytest.fixture(scope='session')
def tiny_dataset(tiny_synth_config):
    set_progress_enabled(False)
    return generate(tiny_synth_config)
