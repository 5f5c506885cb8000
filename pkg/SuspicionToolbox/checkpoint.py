#!/usr/bin/python3
"""
Modulator parameter checkpoints.

A checkpoint is a directory holding ``checkpoint.json`` (format version, width,
omega as JSON doubles, enabled modalities, parameter names and shapes) and
``params.f32`` with every parameter as little-endian float32 in the order of
``parameter_shapes``.
"""

import json
import os

import numpy as np
from packaging import version

from .constants import CHECKPOINT_DATA, CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MANIFEST, COEFFICIENTS, FLOAT32_LE
from .errors import DataError
from .logger import get_logger
from .modulator import ModulatorParams, parameter_shapes

logger = get_logger(__name__)


def save_checkpoint(params: ModulatorParams, directory: str) -> str:
    """
    Write parameters to a checkpoint directory.

    Args:
        params (ModulatorParams): Parameters to save
        directory (str): Target directory, created if needed

    Returns:
        str: Path of the written manifest
    """
    os.makedirs(directory, exist_ok=True)
    shapes = parameter_shapes(params.hidden)
    blob = np.concatenate([params[name].astype(FLOAT32_LE).ravel() for name, _ in shapes])
    blob.tofile(os.path.join(directory, CHECKPOINT_DATA))
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "hidden": params.hidden,
        "omega": {p: float(params.omega[i]) for i, p in enumerate(COEFFICIENTS)},
        "modalities": list(params.modalities),
        "parameters": [{"name": name, "shape": list(shape)} for name, shape in shapes],
        "data_file": CHECKPOINT_DATA,
    }
    manifest_path = os.path.join(directory, CHECKPOINT_MANIFEST)
    with open(manifest_path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    logger.info("Saved checkpoint with %d parameters to %s", blob.size, directory)
    return manifest_path


def _manifest_path(path: str) -> str:
    return os.path.join(path, CHECKPOINT_MANIFEST) if os.path.isdir(path) else path


def load_checkpoint(path: str) -> ModulatorParams:
    """
    Read parameters from a checkpoint directory (or its manifest path).

    Args:
        path (str): Checkpoint directory or manifest file

    Returns:
        ModulatorParams: Loaded parameters

    Raises:
        DataError: On a missing file, an unsupported format version, a shape
            listing that does not match the width, or a wrong byte count
    """
    manifest_path = _manifest_path(path)
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error("Cannot read checkpoint manifest %s", manifest_path)
        raise DataError(f"Cannot read checkpoint manifest {manifest_path}: {e}")

    for key in ('format_version', 'hidden', 'omega', 'modalities', 'parameters', 'data_file'):
        if key not in manifest:
            raise DataError(f"Checkpoint manifest {manifest_path}: missing field '{key}'")
    try:
        found = version.parse(str(manifest['format_version']))
    except version.InvalidVersion:
        raise DataError(f"Checkpoint manifest {manifest_path}: invalid format_version '{manifest['format_version']}'")
    supported = version.parse(CHECKPOINT_FORMAT_VERSION)
    if found.major != supported.major:
        raise DataError(f"Checkpoint format {found} is not supported (expected {supported.major}.x)")
    if found > supported:
        logger.warning("Checkpoint format %s is newer than %s, loading anyway", found, supported)

    hidden = manifest['hidden']
    if isinstance(hidden, bool) or not isinstance(hidden, int) or hidden < 1:
        raise DataError(f"Checkpoint manifest {manifest_path}: hidden must be a positive integer")
    shapes = parameter_shapes(hidden)
    listed = [(item.get('name'), tuple(item.get('shape', ()))) for item in manifest['parameters']]
    if listed != shapes:
        raise DataError(f"Checkpoint manifest {manifest_path}: parameter list does not match width {hidden}")
    try:
        omega = [float(manifest['omega'][p]) for p in COEFFICIENTS]
    except (KeyError, TypeError, ValueError):
        raise DataError(f"Checkpoint manifest {manifest_path}: omega must hold alpha, beta and gamma")

    data_path = os.path.join(os.path.dirname(os.path.abspath(manifest_path)), manifest['data_file'])
    expected = 4 * sum(int(np.prod(shape)) for _, shape in shapes)
    try:
        size = os.path.getsize(data_path)
    except OSError as e:
        raise DataError(f"Cannot read checkpoint data {data_path}: {e}")
    if size != expected:
        raise DataError(f"Checkpoint data {data_path}: expected {expected} bytes, found {size}")

    blob = np.fromfile(data_path, dtype=FLOAT32_LE).astype(np.float64)
    arrays = {}
    offset = 0
    for name, shape in shapes:
        count = int(np.prod(shape))
        arrays[name] = blob[offset:offset + count].reshape(shape)
        offset += count
    try:
        params = ModulatorParams(hidden, arrays, omega, manifest['modalities'])
    except ValueError as e:
        raise DataError(f"Checkpoint {manifest_path} holds invalid parameters: {e}")
    logger.debug("Loaded checkpoint %s (H=%d, omega=%s)", manifest_path, hidden, omega)
    return params
