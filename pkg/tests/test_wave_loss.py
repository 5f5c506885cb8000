import numpy as np
import pytest

from SuspicionToolbox.errors import ArgumentError, ConfigError
from SuspicionToolbox.wave_loss import LossWeights, base_loss, magnitude_loss, total_loss, trend_loss


def finite_difference(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for i in range(x.size):
        plus, minus = x.copy(), x.copy()
        plus[i] += h
        minus[i] -= h
        grad[i] = (f(plus) - f(minus)) / (2 * h)
    return grad


def test_huber_inside_and_outside_the_corner():
    assert base_loss([0.5], [0.0]).value == pytest.approx(0.125)
    assert base_loss([2.0], [0.0]).value == pytest.approx(1.5)
    assert base_loss([0.0, 2.0], [0.5, 0.0]).value == pytest.approx((0.125 + 1.5) / 2)


def test_magnitude_of_one_step():
    assert magnitude_loss([0.0, 0.1], [0.0, 0.0]).value == pytest.approx(0.01)


def test_trend_against_true_direction():
    assert trend_loss([0.5, 0.3], [0.0, 1.0]).value == pytest.approx(0.2)
    assert trend_loss([0.3, 0.5], [0.0, 1.0]).value == 0.0


def test_trend_deadzone_ignores_flat_truth():
    assert trend_loss([0.5, 0.0], [0.2, 0.2 + 5e-5]).value == 0.0
    assert trend_loss([0.5, 0.0], [0.2, 0.2 + 5e-5], deadzone=0.0).value == pytest.approx(0.5)


def test_loss_of_perfect_prediction_is_zero(rng):
    gt = rng.uniform(0, 1, 40)
    loss = total_loss(gt, gt)
    assert loss.value == 0.0
    assert not np.any(loss.grad)


def test_difference_terms_ignore_constant_offsets(rng):
    pred = rng.uniform(0, 1, 25)
    gt = rng.uniform(0, 1, 25)
    assert magnitude_loss(pred + 0.3, gt).value == pytest.approx(magnitude_loss(pred, gt).value)
    assert trend_loss(pred - 0.2, gt).value == pytest.approx(trend_loss(pred, gt).value)


def test_total_combines_weighted_terms(rng):
    pred = rng.uniform(0, 1, 30)
    gt = rng.uniform(0, 1, 30)
    weights = LossWeights(lambda_magn=0.7, lambda_trend=0.2)
    loss = total_loss(pred, gt, weights)
    c = loss.components
    assert loss.value == pytest.approx(c['base'] + 0.7 * c['magnitude'] + 0.2 * c['trend'])


@pytest.mark.parametrize('term', [
    lambda p, g: base_loss(p, g),
    lambda p, g: magnitude_loss(p, g),
    lambda p, g: total_loss(p, g),
])
def test_gradients_match_finite_differences(rng, term):
    pred = rng.uniform(0, 1, 12)
    gt = rng.uniform(0, 1, 12)
    analytic = term(pred, gt).grad
    numeric = finite_difference(lambda x: term(x, gt).value, pred)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)


def test_trend_gradient_away_from_kinks():
    pred = np.array([0.0, 0.4, 0.1, 0.3, 0.2])
    gt = np.array([0.0, 0.1, 0.5, 0.2, 0.6])
    analytic = trend_loss(pred, gt).grad
    numeric = finite_difference(lambda x: trend_loss(x, gt).value, pred)
    np.testing.assert_allclose(analytic, numeric, atol=1e-8)


def test_one_frame_curves():
    assert total_loss([0.5], [0.0], LossWeights(0.0, 0.0)).value == pytest.approx(0.125)
    with pytest.raises(ArgumentError):
        total_loss([0.5], [0.0])
    with pytest.raises(ArgumentError):
        magnitude_loss([0.5], [0.0])


def test_length_mismatch():
    with pytest.raises(ArgumentError):
        total_loss([0.1, 0.2], [0.1])


def test_weights_are_validated():
    with pytest.raises(ConfigError, match='loss.lambda_trend'):
        LossWeights(lambda_trend=-0.1)
    with pytest.raises(ConfigError, match='loss.huber_delta'):
        LossWeights(huber_delta=0.0)
