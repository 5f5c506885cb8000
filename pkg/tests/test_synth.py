import json
from dataclasses import replace

import numpy as np
import pytest

from SuspicionToolbox.errors import ArgumentError, ConfigError, DataError
from SuspicionToolbox.event_model import partition_at, validate_sequence
from SuspicionToolbox.synth import (
    HIGH_FREQUENCY_SCALE, SynthConfig, context_signal, generate, generate_sequence, load_dataset, split,
    write_dataset,
)


def test_same_seed_gives_identical_datasets(tiny_synth_config, tiny_dataset):
    again = generate(tiny_synth_config)
    for a, b in zip(tiny_dataset.samples, again.samples):
        assert a.sequence == b.sequence
        np.testing.assert_array_equal(a.gt.raw, b.gt.raw)
        for name, values in a.features.arrays.items():
            np.testing.assert_array_equal(values, b.features[name])


def test_sequences_do_not_depend_on_batch(tiny_synth_config, tiny_dataset):
    alone = generate_sequence(tiny_synth_config, 4)
    np.testing.assert_array_equal(alone.gt.raw, tiny_dataset.samples[4].gt.raw)
    assert alone.id == 'seq_00004'


def test_different_seeds_differ(tiny_synth_config, tiny_dataset):
    other = generate(replace(tiny_synth_config, seed=12))
    assert any(a.sequence != b.sequence for a, b in zip(tiny_dataset.samples, other.samples))


def test_no_arrivals_give_a_zero_ground_truth(tiny_synth_config):
    dataset = generate(replace(tiny_synth_config, arrival_rate=0.0, num_sequences=2))
    for sample in dataset.samples:
        assert sample.sequence.events == ()
        assert not np.any(sample.gt.scores)


def test_generated_sequences_are_valid(tiny_dataset):
    for sample in tiny_dataset.samples:
        assert validate_sequence(sample.sequence) == []
        assert sample.gt.sequence_id == sample.id
        assert np.all((sample.gt.scores >= 0) & (sample.gt.scores < 1))


def test_temporal_features_count_running_events(tiny_dataset):
    sample = tiny_dataset.samples[0]
    temporal = sample.features['temporal']
    for t in range(sample.sequence.num_frames):
        assert temporal[t, 0] == len(partition_at(sample.sequence, t).current)


def test_confidence_features_follow_active_events(tiny_dataset):
    sample = tiny_dataset.samples[1]
    conf = sample.features['conf']
    for t in range(sample.sequence.num_frames):
        for category in range(11):
            active = [e.confidence for e in sample.sequence.events
                      if e.category == category and e.start_frame <= t <= e.end_frame]
            assert conf[t, category] == pytest.approx(max(active, default=0.0), abs=1e-6)


def test_teacher_stays_within_modulation_bounds(tiny_dataset):
    omega = np.array([0.05, 1.0, 0.02])
    for sample in tiny_dataset.samples:
        values = sample.teacher.history.values
        assert np.all(values >= 0.5 * omega - 1e-12)
        assert np.all(values <= 1.5 * omega + 1e-12)
        assert np.all(np.abs(sample.teacher.context) <= 1.0 + 1e-12)


def test_context_signal_peak_matches_amplitude():
    signal = context_signal(np.random.default_rng(0), 300, 3, 0.7)
    assert np.max(np.abs(signal)) == pytest.approx(0.7)


def test_distractors_only_reach_the_detected_events(tiny_synth_config):
    clean = generate(replace(tiny_synth_config, num_sequences=2))
    noisy = generate(replace(tiny_synth_config, num_sequences=2, distractor_rate=0.02))
    for a, b in zip(clean.samples, noisy.samples):
        assert len(b.sequence.events) > len(a.sequence.events)
        np.testing.assert_array_equal(a.gt.raw, b.gt.raw)


def test_high_frequency_variant_has_more_events(tiny_synth_config):
    base = generate(replace(tiny_synth_config, num_sequences=4))
    high = generate(replace(tiny_synth_config, num_sequences=4, frequency_scale=HIGH_FREQUENCY_SCALE))
    assert sum(len(s.sequence.events) for s in high) > sum(len(s.sequence.events) for s in base)


def test_misspecified_teacher_keeps_bounds(tiny_synth_config):
    dataset = generate(replace(tiny_synth_config, num_sequences=2, misspecified_noise=0.3))
    omega = np.array(tiny_synth_config.omega)
    for sample in dataset.samples:
        assert np.all(sample.teacher.history.values <= 1.5 * omega + 1e-12)


def test_context_is_recoverable_from_visual_features():
    dataset = generate(SynthConfig(seed=5, num_sequences=3, frames_per_sequence=800, anchor_dim=16))
    visual = np.concatenate([s.features['visual'] for s in dataset.samples])
    context = np.concatenate([s.teacher.context for s in dataset.samples])
    design = np.column_stack([visual, np.ones(len(visual))])
    solution = np.linalg.lstsq(design, context, rcond=None)[0]
    residual = context - design @ solution
    assert 1 - np.sum(residual ** 2) / np.sum((context - context.mean()) ** 2) > 0.8


def test_split_sizes_and_coverage():
    items = list(range(10))
    train, val = split(items, 0.8, 7)
    assert (len(train), len(val)) == (8, 2)
    assert sorted(train + val) == items
    assert split(items, 0.8, 7) == (train, val)


def test_split_rejects_degenerate_sizes():
    with pytest.raises(ArgumentError):
        split([1, 2], 0.1, 0)
    with pytest.raises(ArgumentError):
        split(list(range(5)), 1.0, 0)


def test_dataset_directory_round_trip(tmp_path, tiny_dataset):
    write_dataset(tiny_dataset, str(tmp_path))
    manifest = json.loads((tmp_path / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['members'] == [s.id for s in tiny_dataset.samples]
    assert manifest['generator']['seed'] == 11
    loaded = load_dataset(str(tmp_path))
    assert len(loaded) == len(tiny_dataset)
    for a, b in zip(tiny_dataset.samples, loaded.samples):
        assert a.sequence == b.sequence
        np.testing.assert_array_equal(a.features['visual'], b.features['visual'])
        np.testing.assert_allclose(b.gt.scores, a.gt.scores, rtol=1e-8)
        np.testing.assert_allclose(b.teacher.history.values, a.teacher.history.values, rtol=1e-15)
    np.testing.assert_allclose(loaded.anchors.anchors, tiny_dataset.anchors.anchors, atol=1e-6)


def test_dataset_with_missing_member(tmp_path, tiny_dataset):
    write_dataset(tiny_dataset, str(tmp_path))
    (tmp_path / 'gt' / 'seq_00002.csv').unlink()
    with pytest.raises(DataError):
        load_dataset(str(tmp_path))


@pytest.mark.parametrize('changes, field', [
    ({'frames_per_sequence': 49}, 'synth.frames_per_sequence'),
    ({'arrival_rate': -0.1}, 'synth.arrival_rate'),
    ({'arrival_rate': (0.01,) * 10}, 'synth.arrival_rate'),
    ({'arrival_rate': (0.01,) * 10 + (1.5,)}, 'synth.arrival_rate'),
    ({'mean_duration': (5.0,) * 10 + (0.5,)}, 'synth.mean_duration'),
    ({'arrival_rate': (0.01,) * 10 + (0.5,), 'frequency_scale': 3.0}, 'synth.frequency_scale'),
    ({'context_amplitude': 1.5}, 'synth.context_amplitude'),
    ({'seed': -1}, 'seed'),
])
def test_config_validation(changes, field):
    with pytest.raises(ConfigError) as info:
        SynthConfig(**changes)
    assert info.value.field == field


def test_silent_category_never_appears(tiny_synth_config):
    rates = tuple(0.0 if c == 4 else 0.02 for c in range(11))
    dataset = generate(replace(tiny_synth_config, arrival_rate=rates, mean_duration=(5.0,) * 11))
    categories = {e.category for s in dataset.samples for e in s.sequence.events}
    assert 4 not in categories
    assert len(categories) >= 8


def test_only_the_last_category_fires(tiny_synth_config):
    config = replace(tiny_synth_config, arrival_rate=(0.0,) * 10 + (0.05,), mean_duration=(5.0,) * 11)
    events = [e for s in generate(config).samples for e in s.sequence.events]
    assert events
    assert {e.category for e in events} == {10}


def test_scalar_rates_match_their_broadcast(tiny_synth_config):
    broadcast = replace(tiny_synth_config, arrival_rate=(0.01,) * 11, mean_duration=[10.0] * 11)
    assert broadcast.arrival_rate == (0.01,) * 11
    assert broadcast.mean_duration == (10.0,) * 11
    for index in (0, 3):
        a = generate_sequence(tiny_synth_config, index)
        b = generate_sequence(broadcast, index)
        assert a.sequence == b.sequence
        np.testing.assert_array_equal(a.gt.raw, b.gt.raw)


def test_frequency_scale_applies_to_every_category():
    rates = tuple(0.001 * (c + 1) for c in range(11))
    config = SynthConfig(arrival_rate=rates, frequency_scale=2.0)
    np.testing.assert_allclose(config.category_rates, 2.0 * np.array(rates))
    np.testing.assert_allclose(SynthConfig(frequency_scale=3.0).category_rates, np.full(11, 0.006))
    np.testing.assert_array_equal(SynthConfig().category_durations, np.full(11, 30.0))


def test_per_category_rates_survive_the_manifest(tmp_path, tiny_synth_config):
    rates = (0.0,) * 10 + (0.02,)
    dataset = generate(replace(tiny_synth_config, num_sequences=2, arrival_rate=rates))
    write_dataset(dataset, str(tmp_path))
    manifest = json.loads((tmp_path / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['generator']['arrival_rate'] == list(rates)
    assert manifest['generator']['mean_duration'] == 10.0
