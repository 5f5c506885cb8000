#!/usr/bin/python3
"""
Feature container: per-frame modality features of one sequence on disk.

Layout::

    <dir>/manifest.json   {"sequence_id", "frames", "fps", "modalities": [{"name", "dim", "file"}]}
    <dir>/<modality>.f32  raw little-endian float32, row-major frames x dim
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .constants import FLOAT32_LE, MODALITIES, MODALITY_DIMS
from .errors import DataError
from .logger import get_logger
from .modulator import FeatureStack, FrameFeatureBundle

logger = get_logger(__name__)

MANIFEST_NAME = 'manifest.json'


@dataclass(frozen=True)
class FeatureContainer:
    """Loaded features of one sequence."""
    sequence_id: str
    fps: float
    features: FeatureStack

    @property
    def frames(self) -> int:
        return len(self.features)


def save_features(features, out_dir: str, sequence_id: str, fps: float) -> str:
    """
    Write a feature container.

    Args:
        features (FeatureStack | list[FrameFeatureBundle]): Features of every frame
        out_dir (str): Container directory, created if needed
        sequence_id (str): Id of the sequence
        fps (float): Frame rate

    Returns:
        str: Path of the manifest
    """
    if not isinstance(features, FeatureStack):
        features = FeatureStack.from_bundles(list(features))
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for name in MODALITIES:
        file_name = f"{name}.f32"
        np.ascontiguousarray(features[name], dtype=FLOAT32_LE).tofile(os.path.join(out_dir, file_name))
        entries.append({"name": name, "dim": MODALITY_DIMS[name], "file": file_name})
    manifest = {"sequence_id": sequence_id, "frames": len(features), "fps": fps, "modalities": entries}
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest_path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    logger.debug("Wrote %d frames of features for '%s' to %s", len(features), sequence_id, out_dir)
    return manifest_path


def _read_manifest(path: str) -> tuple[str, dict]:
    manifest_path = os.path.join(path, MANIFEST_NAME) if os.path.isdir(path) else path
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error("Cannot read feature manifest %s", manifest_path)
        raise DataError(f"Cannot read feature manifest {manifest_path}: {e}")
    if not isinstance(manifest, dict):
        raise DataError(f"Feature manifest {manifest_path} must be a JSON object")
    for key in ('frames', 'modalities', 'fps', 'sequence_id'):
        if key not in manifest:
            raise DataError(f"Feature manifest {manifest_path}: missing field '{key}'")
    frames = manifest['frames']
    if isinstance(frames, bool) or not isinstance(frames, int) or frames < 1:
        raise DataError(f"Feature manifest {manifest_path}: frames must be a positive integer")
    return manifest_path, manifest


def _read_modality(manifest_path: str, entry: dict, frames: int) -> np.ndarray:
    name, dim = entry['name'], entry['dim']
    data_path = os.path.join(os.path.dirname(os.path.abspath(manifest_path)), entry['file'])
    expected = 4 * frames * dim
    try:
        found = os.path.getsize(data_path)
    except OSError as e:
        raise DataError(f"Cannot read feature file {data_path}: {e}")
    if found != expected:
        logger.error("Feature file %s has the wrong size", data_path)
        raise DataError(f"Feature file {data_path}: expected {expected} bytes, found {found}")
    values = np.fromfile(data_path, dtype=FLOAT32_LE).reshape(frames, dim)
    finite = np.isfinite(values)
    if not np.all(finite):
        frame, column = (int(i) for i in np.argwhere(~finite)[0])
        raise DataError(f"Feature file {data_path}: non-finite value at frame {frame}, column {column} ({name})")
    return values.astype(np.float64)


def load_feature_container(path: str) -> FeatureContainer:
    """
    Load and validate a feature container.

    Args:
        path (str): Container directory or manifest path

    Returns:
        FeatureContainer: Sequence id, fps and the stacked features

    Raises:
        DataError: On a missing or unknown modality, a wrong dimension, a wrong
            byte count, or a non-finite value
    """
    manifest_path, manifest = _read_manifest(path)
    entries = {}
    for entry in manifest['modalities']:
        if not isinstance(entry, dict) or not {'name', 'dim', 'file'} <= set(entry):
            raise DataError(f"Feature manifest {manifest_path}: modality entries need name, dim and file")
        if entry['name'] not in MODALITY_DIMS:
            raise DataError(f"Feature manifest {manifest_path}: unknown modality '{entry['name']}'")
        if entry['dim'] != MODALITY_DIMS[entry['name']]:
            raise DataError(f"Feature manifest {manifest_path}: modality '{entry['name']}' must have dim "
                            f"{MODALITY_DIMS[entry['name']]}, got {entry['dim']}")
        entries[entry['name']] = entry
    missing = [m for m in MODALITIES if m not in entries]
    if missing:
        raise DataError(f"Feature manifest {manifest_path}: missing modality '{missing[0]}'")
    arrays = {m: _read_modality(manifest_path, entries[m], manifest['frames']) for m in MODALITIES}
    logger.debug("Loaded %d frames of features from %s", manifest['frames'], manifest_path)
    return FeatureContainer(str(manifest['sequence_id']), float(manifest['fps']), FeatureStack(arrays))


def load_features(path: str) -> list[FrameFeatureBundle]:
    """Load a feature container as one bundle per frame."""
    return load_feature_container(path).features.bundles()
