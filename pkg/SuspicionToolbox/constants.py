#!/usr/bin/python3
"""
Constants used throughout the SuspicionToolbox package
"""

NUM_CATEGORIES: int = 11

# Per-frame modality layout of the modulator input
VISUAL_DIM: int = 1408
CONF_DIM: int = NUM_CATEGORIES
TEMPORAL_DIM: int = 14
SPECTRUM_DIM: int = NUM_CATEGORIES
MODALITIES: tuple[str, ...] = ('visual', 'conf', 'temporal', 'spectrum')
MODALITY_DIMS: dict[str, int] = {
    'visual': VISUAL_DIM,
    'conf': CONF_DIM,
    'temporal': TEMPORAL_DIM,
    'spectrum': SPECTRUM_DIM,
}

# Temporal feature index layout
TEMPORAL_ACTIVE_COUNT: int = 0
TEMPORAL_PAST_COUNT: int = 1
TEMPORAL_PRESENCE_SLICE: slice = slice(2, 2 + NUM_CATEGORIES)
TEMPORAL_TIMESTAMP: int = 13

COEFFICIENTS: tuple[str, ...] = ('alpha', 'beta', 'gamma')
DEFAULT_HIDDEN: int = 64
DEFAULT_OMEGA: dict[str, float] = {'alpha': 0.05, 'beta': 1.0, 'gamma': 0.02}
DELTA_SCALE: float = 0.5

# Engine numerics
EXPONENT_FLOOR: float = -700.0
DECAY_MODES: tuple[str, ...] = ('literal',)

# Suspicion levels and localisation protocol
LEVELS: tuple[str, ...] = ('uncertain', 'suspicious', 'alert')
LEVEL_THRESHOLDS: tuple[float, float] = (0.3, 0.6)
LEVEL_CEILING: float = 1.0
IOU_THRESHOLDS: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7)

# Wave-aware loss
LAMBDA_MAGN: float = 0.5
LAMBDA_TREND: float = 0.3
HUBER_DELTA: float = 1.0
TREND_DEADZONE: float = 1e-4

# Anchor bank tolerances
ANCHOR_NORM_TOLERANCE: float = 1e-6
ANCHOR_RENORM_TOLERANCE: float = 1e-3

# Gradient check
GRADCHECK_STEP: float = 1e-5
GRADCHECK_RTOL: float = 1e-4
GRADCHECK_ATOL: float = 1e-7
GRADCHECK_SMALL: float = 1e-6

# On-disk formats
FLOAT32_LE: str = '<f4'
CURVE_CSV_HEADER: str = 'frame,raw,score'
CHECKPOINT_FORMAT_VERSION: str = '1.0'
CHECKPOINT_MANIFEST: str = 'checkpoint.json'
CHECKPOINT_DATA: str = 'params.f32'
DATASET_FORMAT: str = 'suspiciontoolbox-dataset'
DATASET_FORMAT_VERSION: str = '1.0'
CONFIG_VERSION: str = '1.0'

CONFIG_TEMPLATE = {
    "metadata": {
        "description": "SuspicionToolbox configuration",
        "config_version": CONFIG_VERSION
    },
    "log_level": "info", # Options: trace, debug, info, warning, error, critical, silent
    "seed": 0,
    "threads": 1,
    "modulator": {
        "hidden": DEFAULT_HIDDEN,
        "omega_alpha": DEFAULT_OMEGA['alpha'], # per-frame duration scale
        "omega_beta": DEFAULT_OMEGA['beta'],
        "omega_gamma": DEFAULT_OMEGA['gamma'], # per-frame decay
        "modalities": list(MODALITIES)
    },
    "loss": {
        "lambda_magn": LAMBDA_MAGN,
        "lambda_trend": LAMBDA_TREND,
        "huber_delta": HUBER_DELTA,
        "trend_deadzone": TREND_DEADZONE
    },
    "train": {
        "learning_rate": 1e-3,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
        "grad_clip_norm": 5.0,
        "epochs": 50,
        "batch": 1,
        "train_frac": 0.8,
        "train_base_values": False
    },
    "evaluation": {
        "thresholds": list(LEVEL_THRESHOLDS),
        "iou_thresholds": list(IOU_THRESHOLDS),
        "min_len": 1,
        "smooth_width": 0,
        "max_lag": 50
    },
    "synth": {
        "num_sequences": 100,
        "frames_per_sequence": 600,
        "fps": 30.0,
        "arrival_rate": 0.002, # events per frame and category, or a list of 11
        "mean_duration": 30.0, # frames, or a list of 11
        "distractor_rate": 0.0,
        "context_components": 3,
        "context_amplitude": 1.0,
        "visual_scale": 0.5,
        "feature_noise_std": 0.25,
        "anchor_dim": 64,
        "frequency_scale": 1.0,
        "misspecified_noise": 0.0
    }
}
