#!/usr/bin/python3
"""
Multimodal modulator: per-frame features to the three engine coefficients.

Per frame the four modality vectors (visual, conf, temporal, spectrum) are
projected to H-dimensional tokens, fused by a softmax attention over the
modalities, and each coefficient attends over the token sequence
[enabled modality tokens..., fused token] with its own learned query. A
bounded head turns the context into delta in [-0.5, 0.5] and the coefficient
is omega * (1 + delta).

Forward and backward passes are written out by hand over batches of frames;
the forward pass keeps everything the backward pass needs on a tape.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import COEFFICIENTS, DEFAULT_HIDDEN, DEFAULT_OMEGA, DELTA_SCALE, MODALITIES, MODALITY_DIMS
from .errors import ArgumentError, ConfigError, NumericError, StateError
from .logger import get_logger
from .suspicion_engine import CoefficientHistory, CoefficientTriple

logger = get_logger(__name__)


@dataclass(frozen=True)
class ModulatorConfig:
    """Architecture settings of the modulator."""
    hidden: int = DEFAULT_HIDDEN
    omega_alpha: float = DEFAULT_OMEGA['alpha']
    omega_beta: float = DEFAULT_OMEGA['beta']
    omega_gamma: float = DEFAULT_OMEGA['gamma']
    modalities: tuple[str, ...] = MODALITIES

    def __post_init__(self) -> None:
        if isinstance(self.hidden, bool) or not isinstance(self.hidden, int) or self.hidden < 1:
            raise ConfigError('modulator.hidden', f"expected a positive integer, got {self.hidden}")
        for name in COEFFICIENTS:
            value = getattr(self, f'omega_{name}')
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f'modulator.omega_{name}', f"expected a positive number, got {value}")
        if not self.modalities:
            raise ConfigError('modulator.modalities', "at least one modality must be enabled")
        unknown = [m for m in self.modalities if m not in MODALITIES]
        if unknown:
            raise ConfigError('modulator.modalities', f"unknown modality {unknown[0]!r}, expected one of {list(MODALITIES)}")
        if len(set(self.modalities)) != len(self.modalities):
            raise ConfigError('modulator.modalities', "modalities must not repeat")

    @property
    def omega(self) -> np.ndarray:
        return np.array([self.omega_alpha, self.omega_beta, self.omega_gamma], dtype=np.float64)


@dataclass(frozen=True)
class FrameFeatureBundle:
    """Modality vectors of one frame."""
    visual: np.ndarray
    conf: np.ndarray
    temporal: np.ndarray
    spectrum: np.ndarray

    def __post_init__(self) -> None:
        for name in MODALITIES:
            value = getattr(self, name)
            if np.ndim(value) != 1 or np.shape(value)[0] != MODALITY_DIMS[name]:
                raise ArgumentError(f"Modality '{name}' must be a {MODALITY_DIMS[name]}-vector, got shape {np.shape(value)}")


class FeatureStack:
    """
    Modality features of consecutive frames as (T, dim) matrices.

    Args:
        arrays (dict[str, np.ndarray]): One matrix per modality, all with T rows
    """

    def __init__(self, arrays: dict[str, np.ndarray]) -> None:
        missing = [m for m in MODALITIES if m not in arrays]
        if missing:
            raise ArgumentError(f"Feature stack is missing modality '{missing[0]}'")
        self.arrays = {}
        rows = None
        for name in MODALITIES:
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.ndim != 2 or value.shape[1] != MODALITY_DIMS[name]:
                raise ArgumentError(f"Modality '{name}' must have shape (T, {MODALITY_DIMS[name]}), got {value.shape}")
            if rows is not None and value.shape[0] != rows:
                raise ArgumentError(f"Modality '{name}' has {value.shape[0]} rows, expected {rows}")
            rows = value.shape[0]
            self.arrays[name] = value

    @classmethod
    def from_bundles(cls, bundles: list[FrameFeatureBundle]) -> 'FeatureStack':
        if not bundles:
            raise ArgumentError("Cannot stack an empty list of frame bundles")
        return cls({m: np.stack([getattr(b, m) for b in bundles]) for m in MODALITIES})

    def __getitem__(self, modality: str) -> np.ndarray:
        return self.arrays[modality]

    def __len__(self) -> int:
        return self.arrays[MODALITIES[0]].shape[0]

    def bundle(self, t: int) -> FrameFeatureBundle:
        return FrameFeatureBundle(**{m: self.arrays[m][t] for m in MODALITIES})

    def bundles(self) -> list[FrameFeatureBundle]:
        return [self.bundle(t) for t in range(len(self))]


def parameter_shapes(hidden: int) -> list[tuple[str, tuple[int, ...]]]:
    """
    Names and shapes of all modulator parameters in checkpoint order.

    The base values omega are not part of this list; they are stored separately.
    """
    shapes = []
    for m in MODALITIES:
        shapes.append((f'proj_{m}_weight', (MODALITY_DIMS[m], hidden)))
        shapes.append((f'proj_{m}_bias', (hidden,)))
    for m in MODALITIES:
        shapes.append((f'fusion_{m}_weight', (hidden,)))
        shapes.append((f'fusion_{m}_bias', (1,)))
    shapes.append(('fusion_out_weight', (hidden, hidden)))
    shapes.append(('fusion_out_bias', (hidden,)))
    for p in COEFFICIENTS:
        shapes.append((f'query_{p}', (hidden,)))
        shapes.append((f'query_{p}_weight', (hidden, hidden)))
    shapes.append(('key_weight', (hidden, hidden)))
    shapes.append(('value_weight', (hidden, hidden)))
    for p in COEFFICIENTS:
        shapes.append((f'head_{p}_weight', (hidden,)))
        shapes.append((f'head_{p}_bias', (1,)))
    return shapes


def parameter_count(hidden: int) -> int:
    """Number of scalar network parameters for width ``hidden``, omega excluded."""
    return sum(int(np.prod(shape)) for _, shape in parameter_shapes(hidden))


class ModulatorParams:
    """
    Parameter arrays of the modulator plus the base values omega.

    Arrays are updated in place by the optimiser, which calls ``touch`` so
    that tapes recorded before the update are recognised as stale.
    """

    def __init__(self, hidden: int, arrays: dict[str, np.ndarray], omega, modalities=MODALITIES) -> None:
        self.hidden = hidden
        self.modalities = tuple(modalities)
        if not self.modalities or any(m not in MODALITIES for m in self.modalities) \
                or len(set(self.modalities)) != len(self.modalities):
            raise ArgumentError(f"Invalid modality selection {list(self.modalities)}")
        self.arrays = {}
        for name, shape in parameter_shapes(hidden):
            if name not in arrays:
                raise ArgumentError(f"Missing modulator parameter '{name}'")
            value = np.array(arrays[name], dtype=np.float64)
            if value.shape != shape:
                raise ArgumentError(f"Parameter '{name}' must have shape {shape}, got {value.shape}")
            if not np.all(np.isfinite(value)):
                raise ArgumentError(f"Parameter '{name}' contains non-finite values")
            self.arrays[name] = value
        self.omega = np.array(omega, dtype=np.float64)
        if self.omega.shape != (3,) or not np.all(np.isfinite(self.omega)) or np.any(self.omega <= 0):
            raise ArgumentError(f"Base values omega must be three positive numbers, got {self.omega.tolist()}")
        self.version = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self) -> list[str]:
        return list(self.arrays)

    def touch(self) -> None:
        """Mark the parameters as modified."""
        self.version += 1

    def copy(self) -> 'ModulatorParams':
        return ModulatorParams(self.hidden, {k: v.copy() for k, v in self.arrays.items()}, self.omega.copy(),
                               self.modalities)

    def zero_gradients(self) -> dict[str, np.ndarray]:
        """Gradient buffer holding one zero array per parameter and per omega entry."""
        grads = {name: np.zeros_like(value) for name, value in self.arrays.items()}
        for p in COEFFICIENTS:
            grads[f'omega_{p}'] = np.zeros(1, dtype=np.float64)
        return grads


def init_params(hidden: int, rng: np.random.Generator, omega=None, modalities=MODALITIES,
                zero_heads: bool = True) -> ModulatorParams:
    """
    Glorot-uniform initialisation with zero biases.

    Args:
        hidden (int): Width H
        rng (np.random.Generator): Source of randomness, drawn in checkpoint order
        omega (array-like | None): Base values, defaults to the configured defaults
        modalities (Sequence[str]): Enabled modalities
        zero_heads (bool): Zero the delta output heads so delta is 0 for every input

    Returns:
        ModulatorParams: Fresh parameters
    """
    if omega is None:
        omega = [DEFAULT_OMEGA[p] for p in COEFFICIENTS]
    arrays = {}
    for name, shape in parameter_shapes(hidden):
        if name.endswith('_bias') or (zero_heads and name.startswith('head_')):
            arrays[name] = np.zeros(shape, dtype=np.float64)
            continue
        fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(-limit, limit, size=shape)
    logger.debug("Initialised modulator with H=%d (%d parameters, zero heads: %s)",
                 hidden, parameter_count(hidden), zero_heads)
    return ModulatorParams(hidden, arrays, omega, modalities)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=-1, keepdims=True)


def _softmax_backward(weights: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return weights * (upstream - (weights * upstream).sum(axis=-1, keepdims=True))


def _as_stack(features) -> FeatureStack:
    if isinstance(features, FeatureStack):
        return features
    if isinstance(features, FrameFeatureBundle):
        return FeatureStack.from_bundles([features])
    if isinstance(features, dict):
        return FeatureStack(features)
    raise ArgumentError(f"Expected frame features, got {type(features).__name__}")


def project(features, params: ModulatorParams) -> dict[str, np.ndarray]:
    """
    Project each enabled modality to an H-dimensional token z = tanh(x W + b).

    Args:
        features (FeatureStack | FrameFeatureBundle): Frame features
        params (ModulatorParams): Parameters

    Returns:
        dict[str, np.ndarray]: (N, H) token matrix per enabled modality
    """
    stack = _as_stack(features)
    return {m: np.tanh(stack[m] @ params[f'proj_{m}_weight'] + params[f'proj_{m}_bias'])
            for m in params.modalities}


def fuse(tokens: dict[str, np.ndarray], params: ModulatorParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Attention fusion of the modality tokens.

    Args:
        tokens (dict[str, np.ndarray]): (N, H) tokens of the enabled modalities
        params (ModulatorParams): Parameters

    Returns:
        tuple: fused token h (N, H), fusion weights over the enabled modalities (N, M),
        and the weighted token sum u (N, H) before the output layer
    """
    order = params.modalities
    for m in order:
        if tokens[m].shape[-1] != params.hidden:
            raise ArgumentError(f"Token '{m}' has width {tokens[m].shape[-1]}, expected {params.hidden}")
    logits = np.column_stack([tokens[m] @ params[f'fusion_{m}_weight'] + params[f'fusion_{m}_bias'][0]
                              for m in order])
    weights = _softmax(logits)
    mixed = sum(weights[:, i, None] * tokens[m] for i, m in enumerate(order))
    fused = np.tanh(mixed @ params['fusion_out_weight'] + params['fusion_out_bias'])
    return fused, weights, mixed


def _token_sequence(tokens: dict[str, np.ndarray], fused: np.ndarray, params: ModulatorParams) -> np.ndarray:
    return np.stack([tokens[m] for m in params.modalities] + [fused], axis=1)


def coefficient_attention(fused: np.ndarray, tokens: dict[str, np.ndarray], params: ModulatorParams,
                          coefficient: str) -> tuple[np.ndarray, np.ndarray]:
    """
    Cross-attention of one coefficient query over [modality tokens..., fused token].

    Args:
        fused (np.ndarray): (N, H) fused tokens
        tokens (dict[str, np.ndarray]): (N, H) modality tokens
        params (ModulatorParams): Parameters
        coefficient (str): 'alpha', 'beta' or 'gamma'

    Returns:
        tuple[np.ndarray, np.ndarray]: Context (N, H) and attention weights (N, M + 1)
    """
    if coefficient not in COEFFICIENTS:
        raise ArgumentError(f"Unknown coefficient '{coefficient}'")
    sequence = _token_sequence(tokens, np.atleast_2d(fused), params)
    keys = sequence @ params['key_weight']
    values = sequence @ params['value_weight']
    query = params[f'query_{coefficient}'] @ params[f'query_{coefficient}_weight']
    attention = _softmax(keys @ query / math.sqrt(params.hidden))
    return np.einsum('nl,nlh->nh', attention, values), attention


@dataclass
class ModulatorTape:
    """Intermediates of one modulate call, consumed by backward."""
    params: ModulatorParams
    version: int
    inputs: dict[str, np.ndarray]
    tokens: dict[str, np.ndarray]
    fusion_weights: np.ndarray
    mixed: np.ndarray
    fused: np.ndarray
    sequence: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    queries: dict[str, np.ndarray] = field(default_factory=dict)
    attention: dict[str, np.ndarray] = field(default_factory=dict)
    contexts: dict[str, np.ndarray] = field(default_factory=dict)
    deltas: np.ndarray | None = None


@dataclass
class ModulatorOutput:
    """
    Coefficients of N frames.

    Attributes:
        coefficients (np.ndarray): (N, 3) alpha, beta, gamma
        deltas (np.ndarray): (N, 3) modulation factors in [-0.5, 0.5]
        fusion_weights (np.ndarray): (N, 4) weights per modality in MODALITIES order, 0 when disabled
        tape (ModulatorTape): Cached intermediates for backward
    """
    coefficients: np.ndarray
    deltas: np.ndarray
    fusion_weights: np.ndarray
    tape: ModulatorTape

    def __len__(self) -> int:
        return self.coefficients.shape[0]

    def triple(self, row: int = 0) -> CoefficientTriple:
        alpha, beta, gamma = self.coefficients[row]
        return CoefficientTriple(float(alpha), float(beta), float(gamma))

    def history(self) -> CoefficientHistory:
        return CoefficientHistory(self.coefficients)


def _check_finite(name: str, value: np.ndarray, sequence_id: str | None) -> None:
    if np.all(np.isfinite(value)):
        return
    bad = ~np.isfinite(value.reshape(value.shape[0], -1)).all(axis=1)
    frame = int(np.argmax(bad))
    logger.error("Non-finite modulator intermediate '%s' at frame %d", name, frame)
    raise NumericError(f"Modulator produced a non-finite {name}", sequence_id, frame)


def modulate(features, params: ModulatorParams, sequence_id: str | None = None) -> ModulatorOutput:
    """
    Compute the modulated coefficients of every frame.

    Args:
        features (FeatureStack | FrameFeatureBundle): Features of N frames (or one)
        params (ModulatorParams): Parameters
        sequence_id (str | None): Sequence id used in error messages

    Returns:
        ModulatorOutput: Coefficients, deltas, fusion weights and the tape

    Raises:
        NumericError: If an intermediate value is NaN or Inf
    """
    stack = _as_stack(features)
    tokens = project(stack, params)
    for m, z in tokens.items():
        _check_finite(f"{m} token", z, sequence_id)
    fused, weights, mixed = fuse(tokens, params)
    _check_finite("fused token", fused, sequence_id)
    sequence = _token_sequence(tokens, fused, params)
    keys = sequence @ params['key_weight']
    values = sequence @ params['value_weight']
    tape = ModulatorTape(params=params, version=params.version,
                         inputs={m: stack[m] for m in params.modalities}, tokens=tokens,
                         fusion_weights=weights, mixed=mixed, fused=fused,
                         sequence=sequence, keys=keys, values=values)
    scale = math.sqrt(params.hidden)
    deltas = np.empty((len(stack), 3), dtype=np.float64)
    for i, p in enumerate(COEFFICIENTS):
        query = params[f'query_{p}'] @ params[f'query_{p}_weight']
        attention = _softmax(keys @ query / scale)
        context = np.einsum('nl,nlh->nh', attention, values)
        deltas[:, i] = DELTA_SCALE * np.tanh(context @ params[f'head_{p}_weight'] + params[f'head_{p}_bias'][0])
        tape.queries[p] = query
        tape.attention[p] = attention
        tape.contexts[p] = context
    _check_finite("delta", deltas, sequence_id)
    tape.deltas = deltas
    coefficients = params.omega * (1.0 + deltas)
    full_weights = np.zeros((len(stack), len(MODALITIES)), dtype=np.float64)
    for i, m in enumerate(params.modalities):
        full_weights[:, MODALITIES.index(m)] = weights[:, i]
    logger.trace("Modulated %d frames: mean coefficients %s", len(stack), coefficients.mean(axis=0))
    return ModulatorOutput(coefficients, deltas, full_weights, tape)


def backward(tape: ModulatorTape, upstream: np.ndarray, grads: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """
    Reverse-mode gradients of the coefficients with respect to every parameter.

    Args:
        tape (ModulatorTape): Tape of a modulate call on the current parameters
        upstream (np.ndarray): (N, 3) gradients dL/dalpha, dL/dbeta, dL/dgamma per frame
        grads (dict[str, np.ndarray] | None): Buffer to accumulate into; a new one if None

    Returns:
        dict[str, np.ndarray]: Gradient per parameter name plus ``omega_alpha`` etc.

    Raises:
        StateError: If the tape is missing or the parameters changed since it was recorded
    """
    if tape is None or tape.deltas is None:
        raise StateError("backward needs the tape of a completed modulate call")
    params = tape.params
    if tape.version != params.version:
        raise StateError(f"Stale modulator tape (recorded at version {tape.version}, parameters at {params.version})")
    upstream = np.asarray(upstream, dtype=np.float64).reshape(-1, 3)
    if upstream.shape[0] != tape.deltas.shape[0]:
        raise ArgumentError(f"Upstream gradient covers {upstream.shape[0]} frames, tape has {tape.deltas.shape[0]}")
    if grads is None:
        grads = params.zero_gradients()

    scale = math.sqrt(params.hidden)
    d_keys = np.zeros_like(tape.keys)
    d_values = np.zeros_like(tape.values)
    for i, p in enumerate(COEFFICIENTS):
        g = upstream[:, i]
        delta = tape.deltas[:, i]
        grads[f'omega_{p}'] += np.sum(g * (1.0 + delta))
        # delta = 0.5 tanh(y)  =>  d delta / dy = 0.5 (1 - (2 delta)^2)
        d_y = g * params.omega[i] * DELTA_SCALE * (1.0 - (delta / DELTA_SCALE) ** 2)
        context = tape.contexts[p]
        grads[f'head_{p}_weight'] += context.T @ d_y
        grads[f'head_{p}_bias'] += d_y.sum()
        d_context = d_y[:, None] * params[f'head_{p}_weight'][None, :]
        attention = tape.attention[p]
        d_attention = np.einsum('nh,nlh->nl', d_context, tape.values)
        d_values += attention[:, :, None] * d_context[:, None, :]
        d_scores = _softmax_backward(attention, d_attention) / scale
        d_keys += d_scores[:, :, None] * tape.queries[p][None, None, :]
        d_query = np.einsum('nl,nlh->h', d_scores, tape.keys)
        grads[f'query_{p}'] += params[f'query_{p}_weight'] @ d_query
        grads[f'query_{p}_weight'] += np.outer(params[f'query_{p}'], d_query)

    grads['key_weight'] += np.einsum('nlh,nlk->hk', tape.sequence, d_keys)
    grads['value_weight'] += np.einsum('nlh,nlk->hk', tape.sequence, d_values)
    d_sequence = d_keys @ params['key_weight'].T + d_values @ params['value_weight'].T

    d_tokens = {m: d_sequence[:, j].copy() for j, m in enumerate(params.modalities)}
    d_fused = d_sequence[:, -1]
    d_out = d_fused * (1.0 - tape.fused ** 2)
    grads['fusion_out_weight'] += tape.mixed.T @ d_out
    grads['fusion_out_bias'] += d_out.sum(axis=0)
    d_mixed = d_out @ params['fusion_out_weight'].T

    weights = tape.fusion_weights
    d_weights = np.column_stack([np.sum(d_mixed * tape.tokens[m], axis=1) for m in params.modalities])
    d_logits = _softmax_backward(weights, d_weights)
    for j, m in enumerate(params.modalities):
        z = tape.tokens[m]
        d_tokens[m] += weights[:, j, None] * d_mixed
        grads[f'fusion_{m}_weight'] += z.T @ d_logits[:, j]
        grads[f'fusion_{m}_bias'] += d_logits[:, j].sum()
        d_tokens[m] += d_logits[:, j, None] * params[f'fusion_{m}_weight'][None, :]
        d_pre = d_tokens[m] * (1.0 - z ** 2)
        grads[f'proj_{m}_weight'] += tape.inputs[m].T @ d_pre
        grads[f'proj_{m}_bias'] += d_pre.sum(axis=0)
    return grads
