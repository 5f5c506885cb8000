import math
import time

import numpy as np
import pytest

from SuspicionToolbox.errors import ArgumentError, DataError, StateError
from SuspicionToolbox.suspicion_engine import (
    CoefficientHistory, CoefficientTriple, SuspicionCurve, duration_effect, forward_with_tape, frequency_effect,
    kernel, load_curve, save_curve, score_frame, score_sequence, score_sequence_fast,
)

from conftest import make_sequence, random_sequence

COEFFS = CoefficientTriple(0.05, 1.0, 0.1)


def constant(coeffs, num_frames):
    return CoefficientHistory.constant(coeffs, num_frames)


def test_duration_effect_values():
    assert duration_effect(0.5, 2) == pytest.approx(1.761594, abs=1e-6)
    assert duration_effect(0.05, 100) == pytest.approx(1.999909, abs=1e-6)
    assert duration_effect(1e-12, 7) == pytest.approx(1.0)
    assert duration_effect(0.1, 3) < duration_effect(0.1, 4) < duration_effect(0.2, 4)


def test_duration_effect_rejects_bad_arguments():
    with pytest.raises(ArgumentError):
        duration_effect(0.0, 1)
    with pytest.raises(ArgumentError):
        duration_effect(0.5, 0)


def test_frequency_effect_values():
    assert frequency_effect(1.0, 0) == 0.0
    assert frequency_effect(1.0, 1) == pytest.approx(0.693147, abs=1e-6)
    assert frequency_effect(1.0, 3) == pytest.approx(1.386294, abs=1e-6)
    gain_12 = frequency_effect(1.0, 2) - frequency_effect(1.0, 1)
    gain_23 = frequency_effect(1.0, 3) - frequency_effect(1.0, 2)
    assert gain_23 < gain_12
    with pytest.raises(ArgumentError):
        frequency_effect(1.0, -1)


def test_kernel_values():
    assert kernel(9, 0, COEFFS) == 0.0
    assert kernel(2, 1, CoefficientTriple(0.5, 1.0, 0.1)) == pytest.approx(1.221044, abs=1e-6)
    assert kernel(1, 1, CoefficientTriple(1.0, math.e - 1.0, 0.1)) == pytest.approx(1.761594, abs=1e-6)


def test_coefficient_triple_must_be_positive():
    with pytest.raises(ArgumentError):
        CoefficientTriple(0.1, 0.0, 0.1)
    with pytest.raises(ArgumentError):
        CoefficientTriple(0.1, 1.0, float('nan'))


def test_no_events_gives_zero_curve():
    seq = make_sequence([], num_frames=15)
    curve = score_sequence(seq, constant(COEFFS, 15))
    assert np.all(curve.raw == 0.0)
    assert np.all(curve.scores == 0.0)
    assert np.all(score_sequence_fast(seq, COEFFS).raw == 0.0)


def test_single_past_event_decays_from_its_end():
    seq = make_sequence([(0, 0, 0)], num_frames=11)
    coeffs = CoefficientTriple(0.3, 1.0, 0.1)
    frozen = kernel(1, 1, coeffs)
    curve = score_sequence(seq, constant(coeffs, 11))
    assert curve.raw[0] == pytest.approx(frozen)
    assert curve.raw[10] == pytest.approx(frozen * math.exp(-1.0), rel=1e-12)


def test_past_contributions_add_up():
    alpha = 1.0
    seq = make_sequence([(0, 0, 4), (1, 5, 7)], num_frames=10)
    coeffs = CoefficientTriple(alpha, 1.0, 0.1)
    curve = score_sequence(seq, constant(coeffs, 10))
    f1 = kernel(5, 1, coeffs)
    f2 = kernel(3, 1, coeffs)
    expected = f1 * math.exp(-0.1 * 5) + f2 * math.exp(-0.1 * 2)
    assert curve.raw[9] == pytest.approx(expected, rel=1e-12)


def test_score_squash():
    curve = SuspicionCurve.from_raw('x', np.array([0.0, 1.0, 50.0]))
    assert curve.scores[0] == 0.0
    assert curve.scores[1] == pytest.approx(0.761594, abs=1e-6)
    assert np.all(curve.scores <= 1.0)


def test_scores_stay_below_one(rng):
    seq = random_sequence(rng, 120, 30)
    curve = score_sequence_fast(seq, COEFFS)
    assert np.all(curve.raw >= 0)
    assert np.all((curve.scores >= 0) & (curve.scores <= 1))
    small = curve.raw < 5
    assert np.all(curve.scores[small] < 1)


def test_history_length_mismatch():
    seq = make_sequence([(0, 1, 3)], num_frames=10)
    with pytest.raises(ArgumentError):
        score_sequence(seq, constant(COEFFS, 9))


def test_missing_history_is_a_state_error():
    seq = make_sequence([(0, 1, 3)], num_frames=10)
    with pytest.raises(StateError):
        score_frame(seq, 5, constant(COEFFS, 3), {})
    with pytest.raises(StateError):
        score_frame(seq, 0, None, {})


def test_integrated_decay_mode_is_not_available():
    seq = make_sequence([], num_frames=3)
    with pytest.raises(ArgumentError, match='integrated'):
        score_sequence(seq, constant(COEFFS, 3), decay_mode='integrated')


def test_fast_path_matches_literal_path(rng):
    started = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        T = int(rng.integers(1, 501))
        seq = random_sequence(rng, T, int(rng.integers(0, 51)))
        coeffs = CoefficientTriple(*rng.uniform([0.01, 0.2, 0.005], [0.5, 3.0, 0.5]))
        literal = score_sequence(seq, constant(coeffs, T))
        fast = score_sequence_fast(seq, coeffs)
        worst = max(worst, float(np.max(np.abs(literal.raw - fast.raw))))
    assert worst < 1e-9
    assert time.perf_counter() - started < 60


def test_fast_path_rejects_varying_coefficients():
    seq = make_sequence([(0, 1, 3)], num_frames=4)
    history = CoefficientHistory(np.array([[0.1, 1.0, 0.1]] * 3 + [[0.2, 1.0, 0.1]]))
    with pytest.raises(ArgumentError):
        score_sequence_fast(seq, history)


def test_vectorised_path_matches_literal_with_varying_coefficients(rng):
    for _ in range(10):
        T = int(rng.integers(20, 200))
        seq = random_sequence(rng, T, int(rng.integers(0, 20)))
        history = CoefficientHistory(rng.uniform([0.01, 0.2, 0.005], [0.5, 3.0, 0.5], size=(T, 3)))
        literal = score_sequence(seq, history)
        vectorised, tape = forward_with_tape(seq, history)
        np.testing.assert_allclose(vectorised.raw, literal.raw, rtol=0, atol=1e-12)
        assert tape.history is history


def test_past_kernels_are_frozen_at_event_end():
    seq = make_sequence([(0, 0, 2)], num_frames=8)
    values = np.tile([0.2, 1.0, 0.1], (8, 1))
    values[3:, 0] = 5.0
    values[3:, 1] = 9.0
    curve = score_sequence(seq, CoefficientHistory(values))
    frozen = kernel(3, 1, CoefficientTriple(0.2, 1.0, 0.1))
    assert curve.raw[5] == pytest.approx(frozen * math.exp(-0.1 * 3), rel=1e-12)


def test_decay_is_monotone_after_last_event(rng):
    seq = random_sequence(rng, 200, 10)
    last_end = max(e.end_frame for e in seq.events)
    raw = score_sequence_fast(seq, COEFFS).raw
    assert np.all(np.diff(raw[last_end:]) <= 0)


def test_halving_gamma_doubles_half_life():
    seq = make_sequence([(0, 0, 0)], num_frames=400)

    def half_life(gamma):
        raw = score_sequence_fast(seq, CoefficientTriple(0.1, 1.0, gamma)).raw
        return int(np.argmax(raw <= raw[0] / 2.0))

    assert half_life(0.025) / half_life(0.05) == pytest.approx(2.0, rel=0.01)


def test_distinct_categories_add(rng):
    a = make_sequence([(0, 2, 6), (0, 10, 12)], num_frames=40)
    b = make_sequence([(5, 4, 9), (6, 20, 30)], num_frames=40)
    both = make_sequence([(0, 2, 6), (5, 4, 9), (0, 10, 12), (6, 20, 30)], num_frames=40)
    history = CoefficientHistory(rng.uniform([0.05, 0.5, 0.01], [0.3, 2.0, 0.2], size=(40, 3)))
    np.testing.assert_allclose(score_sequence(both, history).raw,
                               score_sequence(a, history).raw + score_sequence(b, history).raw, atol=1e-12)


def test_raw_increases_with_beta(rng):
    seq = random_sequence(rng, 100, 15)
    low = score_sequence_fast(seq, CoefficientTriple(0.1, 0.5, 0.05)).raw
    high = score_sequence_fast(seq, CoefficientTriple(0.1, 0.8, 0.05)).raw
    positive = low > 0
    assert np.all(high[positive] > low[positive])


def test_fast_path_throughput(rng):
    seq = random_sequence(rng, 20000, 50)
    started = time.perf_counter()
    score_sequence_fast(seq, COEFFS)
    elapsed = time.perf_counter() - started
    assert seq.num_frames / elapsed >= 100_000


def test_curve_file_round_trip(tmp_path, rng):
    seq = random_sequence(rng, 30, 5, seq_id='clip')
    curve = score_sequence_fast(seq, COEFFS)
    path = tmp_path / 'clip.csv'
    save_curve(curve, str(path))
    lines = path.read_text(encoding='utf-8').splitlines()
    assert lines[0] == 'frame,raw,score'
    assert len(lines) == 31
    loaded = load_curve(str(path))
    assert loaded.sequence_id == 'clip'
    np.testing.assert_allclose(loaded.scores, curve.scores, rtol=1e-8)


def test_curve_file_with_gap(tmp_path):
    path = tmp_path / 'gap.csv'
    path.write_text("frame,raw,score\n0,0,0\n2,0,0\n", encoding='utf-8')
    with pytest.raises(DataError, match='expected frame 1'):
        load_curve(str(path))
