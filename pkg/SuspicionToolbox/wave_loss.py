#!/usr/bin/python3
"""
Wave-aware loss between a predicted and a ground-truth suspicion curve.

The loss adds a Huber term on the values, a squared error on the
first-order differences and a hinge penalty on frames where the predicted
change runs against the direction of the true change. Every term is a mean
over frames and returns its gradient with respect to the prediction.
"""

import math
from dataclasses import dataclass

import numpy as np

from .constants import HUBER_DELTA, LAMBDA_MAGN, LAMBDA_TREND, TREND_DEADZONE
from .errors import ArgumentError, ConfigError
from .logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the magnitude and trend terms plus the Huber corner and trend deadzone."""
    lambda_magn: float = LAMBDA_MAGN
    lambda_trend: float = LAMBDA_TREND
    huber_delta: float = HUBER_DELTA
    trend_deadzone: float = TREND_DEADZONE

    def __post_init__(self) -> None:
        for name in ('lambda_magn', 'lambda_trend', 'trend_deadzone'):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
                raise ConfigError(f'loss.{name}', f"expected a non-negative number, got {value}")
        if not (isinstance(self.huber_delta, (int, float)) and math.isfinite(self.huber_delta)
                and self.huber_delta > 0):
            raise ConfigError('loss.huber_delta', f"expected a positive number, got {self.huber_delta}")


@dataclass(frozen=True)
class LossTerm:
    """Value of one loss term and its gradient with respect to the prediction."""
    value: float
    grad: np.ndarray


@dataclass(frozen=True)
class WaveLoss:
    """Total loss, its gradient and the unweighted component values."""
    value: float
    grad: np.ndarray
    components: dict[str, float]


def _pair(pred, gt, min_frames: int) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.shape != gt.shape:
        raise ArgumentError(f"Prediction has {pred.size} frames, ground truth has {gt.size}")
    if pred.size < min_frames:
        raise ArgumentError(f"Loss needs at least {min_frames} frame(s), got {pred.size}")
    return pred, gt


def base_loss(pred, gt, delta: float = HUBER_DELTA) -> LossTerm:
    """
    Mean Huber (smooth L1) loss of the per-frame errors.

    Args:
        pred (array-like): Predicted scores
        gt (array-like): Ground-truth scores of the same length
        delta (float): Huber corner

    Returns:
        LossTerm: Value and dL/dpred
    """
    pred, gt = _pair(pred, gt, 1)
    error = pred - gt
    inside = np.abs(error) < delta
    value = np.where(inside, 0.5 * error ** 2 / delta, np.abs(error) - 0.5 * delta)
    grad = np.where(inside, error / delta, np.sign(error)) / pred.size
    return LossTerm(float(value.mean()), grad)


def _scatter_difference_grad(d_diff: np.ndarray, size: int) -> np.ndarray:
    grad = np.zeros(size, dtype=np.float64)
    grad[1:] += d_diff
    grad[:-1] -= d_diff
    return grad


def magnitude_loss(pred, gt) -> LossTerm:
    """Mean squared error of the first-order differences."""
    pred, gt = _pair(pred, gt, 2)
    residual = np.diff(pred) - np.diff(gt)
    steps = residual.size
    return LossTerm(float(np.mean(residual ** 2)), _scatter_difference_grad(2.0 * residual / steps, pred.size))


def trend_loss(pred, gt, deadzone: float = TREND_DEADZONE) -> LossTerm:
    """
    Mean hinge penalty on predicted changes against the true direction.

    Steps where the true change is within ``deadzone`` of zero carry no direction
    and contribute nothing. The subgradient at the hinge kink is 0.
    """
    pred, gt = _pair(pred, gt, 2)
    true_diff = np.diff(gt)
    direction = np.where(np.abs(true_diff) <= deadzone, 0.0, np.sign(true_diff))
    against = -np.diff(pred) * direction
    active = against > 0
    steps = against.size
    d_diff = np.where(active, -direction, 0.0) / steps
    return LossTerm(float(np.mean(np.maximum(against, 0.0))), _scatter_difference_grad(d_diff, pred.size))


def total_loss(pred, gt, weights: LossWeights = LossWeights()) -> WaveLoss:
    """
    Wave-aware loss L = L_base + lambda_magn * L_magn + lambda_trend * L_trend.

    The difference terms are skipped for one-frame curves when their weights are zero.

    Args:
        pred (array-like): Predicted scores
        gt (array-like): Ground-truth scores
        weights (LossWeights): Term weights

    Returns:
        WaveLoss: Total value, gradient and component values
    """
    pred, gt = _pair(pred, gt, 1)
    base = base_loss(pred, gt, weights.huber_delta)
    value = base.value
    grad = base.grad.copy()
    components = {"base": base.value, "magnitude": 0.0, "trend": 0.0}
    if pred.size < 2:
        if weights.lambda_magn > 0 or weights.lambda_trend > 0:
            raise ArgumentError("Magnitude and trend terms need at least 2 frames")
        return WaveLoss(value, grad, components)
    magnitude = magnitude_loss(pred, gt)
    trend = trend_loss(pred, gt, weights.trend_deadzone)
    components["magnitude"] = magnitude.value
    components["trend"] = trend.value
    value += weights.lambda_magn * magnitude.value + weights.lambda_trend * trend.value
    grad += weights.lambda_magn * magnitude.grad + weights.lambda_trend * trend.grad
    return WaveLoss(value, grad, components)
