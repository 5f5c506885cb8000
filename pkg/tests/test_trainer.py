import json

import numpy as np
import pytest

from SuspicionToolbox.checkpoint import load_checkpoint
from SuspicionToolbox.errors import ConfigError, StateError
from SuspicionToolbox.modulator import ModulatorConfig, init_params
from SuspicionToolbox.suspicion_engine import CoefficientHistory, forward_with_tape
from SuspicionToolbox.synth import SynthConfig, generate, split
from SuspicionToolbox.trainer import (
    AdamOptimizer, SequenceResult, TrainConfig, clip_gradients, engine_coefficient_gradients,
    fixed_coefficient_curves, gradcheck, predict, sequence_gradient, train,
)
from SuspicionToolbox.wave_loss import LossWeights

from conftest import make_sequence


def test_engine_gradients_match_finite_differences(rng):
    seq = make_sequence([(0, 1, 4), (2, 3, 9), (0, 6, 7), (5, 11, 13)], num_frames=16)
    values = rng.uniform([0.05, 0.5, 0.02], [0.4, 2.0, 0.3], size=(16, 3))
    upstream = rng.standard_normal(16)

    def objective(v):
        curve, _ = forward_with_tape(seq, CoefficientHistory(v))
        return float(np.sum(upstream * curve.scores))

    _, tape = forward_with_tape(seq, CoefficientHistory(values))
    analytic = engine_coefficient_gradients(tape, upstream)
    h = 1e-6
    for t in range(16):
        for i in range(3):
            plus, minus = values.copy(), values.copy()
            plus[t, i] += h
            minus[t, i] -= h
            numeric = (objective(plus) - objective(minus)) / (2 * h)
            assert analytic[t, i] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


def test_engine_gradients_without_past_events(rng):
    seq = make_sequence([(3, 2, 19), (4, 5, 19)], num_frames=20)
    _, tape = forward_with_tape(seq, CoefficientHistory(np.tile([0.1, 1.0, 0.05], (20, 1))))
    grads = engine_coefficient_gradients(tape, rng.standard_normal(20))
    assert not np.any(grads[:, 2])
    assert np.any(grads[:, 0])


def test_engine_gradients_of_zero_upstream(rng):
    seq = make_sequence([(3, 2, 6)], num_frames=12)
    _, tape = forward_with_tape(seq, CoefficientHistory(np.tile([0.1, 1.0, 0.05], (12, 1))))
    assert not np.any(engine_coefficient_gradients(tape, np.zeros(12)))


def test_engine_gradients_need_a_tape():
    with pytest.raises(StateError):
        engine_coefficient_gradients(None, np.zeros(3))


def test_gradcheck_passes_on_fresh_draws():
    report = gradcheck(20, seed=1)
    assert report.passed
    assert report.checked > 0
    assert all(g.failures == 0 for g in report.groups.values())


def test_gradcheck_detects_a_corrupted_gradient():
    def corrupted(sample, params, weights):
        result = sequence_gradient(sample, params, weights)
        grads = {name: 1.5 * g for name, g in result.grads.items()}
        return SequenceResult(result.sequence_id, result.loss, result.curve, grads)

    report = gradcheck(1, seed=2, modulator=ModulatorConfig(hidden=4), analytic_gradient=corrupted)
    assert not report.passed
    assert report.groups['omega_beta'].failures == 1


def test_gradcheck_with_zero_trials_passes():
    report = gradcheck(0)
    assert report.passed
    assert report.checked == 0
    assert json.loads(json.dumps(report.to_dict()))['trials'] == 0


def test_train_config_validation():
    with pytest.raises(ConfigError, match='train.epochs'):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError, match='train.train_frac'):
        TrainConfig(train_frac=1.0)
    with pytest.raises(ConfigError, match='train.adam_beta2'):
        TrainConfig(adam_beta2=1.0)


def test_clip_gradients():
    grads = {'a': np.array([3.0, 4.0]), 'b': np.array([0.0])}
    assert clip_gradients(grads, 1.0, ['a', 'b']) == pytest.approx(5.0)
    np.testing.assert_allclose(grads['a'], [0.6, 0.8])
    grads = {'a': np.array([0.3, 0.4])}
    clip_gradients(grads, 1.0, ['a'])
    np.testing.assert_allclose(grads['a'], [0.3, 0.4])


def test_adam_leaves_omega_alone_by_default(rng):
    params = init_params(4, rng)
    omega = params.omega.copy()
    grads = params.zero_gradients()
    grads['omega_beta'][:] = 10.0
    AdamOptimizer(params, TrainConfig()).step(grads)
    np.testing.assert_array_equal(params.omega, omega)


def test_adam_floors_trained_omega(rng):
    params = init_params(4, rng, omega=[1e-6, 1.0, 0.02])
    grads = params.zero_gradients()
    grads['omega_alpha'][:] = 1.0
    version = params.version
    AdamOptimizer(params, TrainConfig(learning_rate=0.5, train_base_values=True)).step(grads)
    assert params.omega[0] == 1e-6
    assert params.omega[1] == 1.0
    assert params.version == version + 1


def test_adam_first_step_moves_by_the_learning_rate(rng):
    params = init_params(4, rng)
    before = params['key_weight'].copy()
    grads = params.zero_gradients()
    grads['key_weight'][:] = 0.01
    AdamOptimizer(params, TrainConfig(learning_rate=0.1)).step(grads)
    np.testing.assert_allclose(before - params['key_weight'], 0.1, rtol=1e-5)


def test_zero_heads_predict_the_fixed_coefficient_curves(tiny_dataset, rng):
    params = init_params(4, rng)
    samples = tiny_dataset.samples
    for predicted, fixed in zip(predict(samples, params, threads=2), fixed_coefficient_curves(samples, params.omega)):
        assert predicted.sequence_id == fixed.sequence_id
        np.testing.assert_array_equal(predicted.raw, fixed.raw)


def _short_run(dataset, tmp_path, threads=1):
    train_set, val_set = split(dataset.samples, 0.5, 3)
    config = TrainConfig(learning_rate=1e-2, epochs=2, batch=2, seed=3, threads=threads)
    params = init_params(4, np.random.default_rng(3))
    return train(train_set, val_set, config, params, str(tmp_path))


def test_short_training_run(tiny_dataset, tmp_path):
    params, report = _short_run(tiny_dataset, tmp_path)
    assert [e.epoch for e in report.epochs] == [0, 1, 2]
    assert report.epochs[0].train_loss is None
    assert report.epochs[0].val_mse == report.baseline['mse']
    assert all(np.isfinite(e.train_loss) for e in report.epochs[1:])
    loaded = load_checkpoint(str(tmp_path))
    np.testing.assert_allclose(loaded['key_weight'], params['key_weight'], atol=1e-6)
    report.save_json(str(tmp_path / 'report.json'))
    data = json.loads((tmp_path / 'report.json').read_text(encoding='utf-8'))
    assert data['num_train'] == 3 and data['num_val'] == 3


def test_training_is_deterministic_across_thread_counts(tiny_dataset, tmp_path):
    first, report_a = _short_run(tiny_dataset, tmp_path / 'a')
    second, report_b = _short_run(tiny_dataset, tmp_path / 'b', threads=3)
    for name in first.names():
        np.testing.assert_array_equal(first[name], second[name])
    assert [e.val_mse for e in report_a.epochs] == [e.val_mse for e in report_b.epochs]


def test_train_needs_training_sequences(small_params):
    with pytest.raises(ConfigError):
        train([], [], TrainConfig(epochs=1), small_params)


@pytest.fixture(scope='module')
def recovery_data():
    dataset = generate(SynthConfig(seed=2024, num_sequences=100, frames_per_sequence=600))
    return split(dataset.samples, 0.8, 2024)


def _experiment(data, weights: LossWeights):
    train_set, val_set = data
    params = init_params(64, np.random.default_rng(2024))
    config = TrainConfig(epochs=50, seed=2024, loss=weights)
    return train(train_set, val_set, config, params)[1]


@pytest.fixture(scope='module')
def full_loss_report(recovery_data):
    return _experiment(recovery_data, LossWeights())


@pytest.mark.slow
def test_modulation_recovers_the_teacher(recovery_data, full_loss_report):
    assert len(recovery_data[0]) == 80 and len(recovery_data[1]) == 20
    assert full_loss_report.final.val_mse <= 0.5 * full_loss_report.baseline['mse']
    assert full_loss_report.final.val_r2 > 0


@pytest.mark.slow
def test_wave_aware_terms_improve_first_differences(recovery_data, full_loss_report):
    base_only = _experiment(recovery_data, LossWeights(lambda_magn=0.0, lambda_trend=0.0))
    assert full_loss_report.final.val_diff_mse < base_only.final.val_diff_mse
