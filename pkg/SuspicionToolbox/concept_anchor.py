#!/usr/bin/python3
"""
Concept-anchored mapping of frame embeddings onto the suspicious action concepts.

Each of the eleven concept definitions is represented by a fixed unit-norm text
embedding (an intention anchor). A frame embedding is mapped onto the 11-d
similarity spectrum of rescaled cosines (1 + cos) / 2 against the anchors.
Text and image encoders are external; the anchor bank is read from disk.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .constants import ANCHOR_NORM_TOLERANCE, ANCHOR_RENORM_TOLERANCE, FLOAT32_LE, NUM_CATEGORIES
from .errors import ArgumentError, DataError
from .event_model import load_categories
from .logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class AnchorBank:
    """Eleven unit-norm concept anchors aligned with the action category ids."""
    dim: int
    anchors: np.ndarray
    names: tuple[str, ...]
    definitions: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.anchors.shape != (NUM_CATEGORIES, self.dim):
            raise DataError(f"Anchor matrix must have shape ({NUM_CATEGORIES}, {self.dim}), got {self.anchors.shape}")
        if len(self.names) != NUM_CATEGORIES or len(self.definitions) != NUM_CATEGORIES:
            raise DataError(f"Anchor bank needs {NUM_CATEGORIES} names and definitions")
        norms = np.linalg.norm(self.anchors, axis=1)
        if np.any(np.abs(norms - 1.0) > ANCHOR_NORM_TOLERANCE):
            raise DataError(f"Anchor rows must have unit norm, found norms {np.round(norms, 6).tolist()}")

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, names=None, definitions=None) -> 'AnchorBank':
        """
        Build a bank from raw anchor rows, re-normalising rows that are almost unit norm.

        Args:
            matrix (np.ndarray): (11, D) anchor rows
            names (Sequence[str] | None): Labels, defaults to the bundled catalogue
            definitions (Sequence[str] | None): Definitions, defaults to the bundled catalogue

        Raises:
            DataError: If a row norm deviates from 1 by 1e-3 or more
        """
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != NUM_CATEGORIES:
            raise DataError(f"Anchor matrix must have {NUM_CATEGORIES} rows, got shape {matrix.shape}")
        norms = np.linalg.norm(matrix, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst >= ANCHOR_RENORM_TOLERANCE:
            raise DataError(f"Anchor row norms deviate from 1 by {worst:.3g}, more than {ANCHOR_RENORM_TOLERANCE}")
        if worst > ANCHOR_NORM_TOLERANCE:
            logger.warning("Re-normalising anchor rows (max norm deviation %.3g)", worst)
        matrix = matrix / norms[:, None]
        categories = load_categories()
        names = tuple(names) if names is not None else tuple(c.name for c in categories)
        definitions = tuple(definitions) if definitions is not None else tuple(c.definition for c in categories)
        return cls(matrix.shape[1], matrix, names, definitions)


@dataclass(frozen=True)
class SimilaritySpectrum:
    """Rescaled cosine similarity of one frame to each anchor, entries in [0, 1]."""
    values: np.ndarray


@dataclass(frozen=True)
class SimilarityReport:
    """Anchor-to-anchor cosine matrix with statistics over the off-diagonal entries."""
    matrix: np.ndarray
    mean: float
    std: float


def spectrum_batch(embeddings: np.ndarray, bank: AnchorBank) -> np.ndarray:
    """
    Similarity spectra of several frame embeddings.

    Args:
        embeddings (np.ndarray): (N, D) frame embeddings
        bank (AnchorBank): Anchor bank with dimension D

    Returns:
        np.ndarray: (N, 11) spectra in [0, 1]

    Raises:
        ArgumentError: On a dimension mismatch or an all-zero embedding
    """
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if embeddings.shape[1] != bank.dim:
        raise ArgumentError(f"Embedding dimension {embeddings.shape[1]} does not match anchor dimension {bank.dim}")
    norms = np.linalg.norm(embeddings, axis=1)
    if np.any(norms == 0):
        raise ArgumentError(f"Zero frame embedding at row {int(np.argmax(norms == 0))}")
    cosine = (embeddings / norms[:, None]) @ bank.anchors.T
    return np.clip((1.0 + cosine) / 2.0, 0.0, 1.0)


def spectrum(frame_embedding: np.ndarray, bank: AnchorBank) -> SimilaritySpectrum:
    """Similarity spectrum of one frame embedding."""
    frame_embedding = np.asarray(frame_embedding, dtype=np.float64)
    if frame_embedding.ndim != 1:
        raise ArgumentError(f"Expected a single embedding vector, got shape {frame_embedding.shape}")
    return SimilaritySpectrum(spectrum_batch(frame_embedding[None, :], bank)[0])


def similarity_matrix(bank: AnchorBank) -> SimilarityReport:
    """
    Cosine similarity between all anchor pairs.

    Returns:
        SimilarityReport: Symmetric matrix with unit diagonal, mean and population std of
        the 110 off-diagonal entries
    """
    matrix = bank.anchors @ bank.anchors.T
    matrix = (matrix + matrix.T) / 2.0
    np.fill_diagonal(matrix, 1.0)
    off_diagonal = matrix[~np.eye(NUM_CATEGORIES, dtype=bool)]
    report = SimilarityReport(matrix, float(off_diagonal.mean()), float(off_diagonal.std()))
    logger.debug("Anchor similarity: mean %.4f, std %.4f", report.mean, report.std)
    return report


def random_anchor_bank(dim: int, rng: np.random.Generator) -> AnchorBank:
    """
    Seeded synthetic bank of Gaussian unit rows (near-orthogonal for large ``dim``).

    Args:
        dim (int): Anchor dimension
        rng (np.random.Generator): Source of randomness
    """
    if dim < 1:
        raise ArgumentError(f"Anchor dimension must be positive, got {dim}")
    matrix = rng.standard_normal((NUM_CATEGORIES, dim))
    return AnchorBank.from_matrix(matrix / np.linalg.norm(matrix, axis=1, keepdims=True))


def save_anchor_bank(bank: AnchorBank, manifest_path: str) -> None:
    """
    Write an anchor bank as JSON manifest plus a little-endian float32 data file.

    The data file is placed next to the manifest and referenced relatively.
    """
    directory = os.path.dirname(os.path.abspath(manifest_path))
    data_file = os.path.splitext(os.path.basename(manifest_path))[0] + '.f32'
    bank.anchors.astype(FLOAT32_LE).tofile(os.path.join(directory, data_file))
    manifest = {
        "dim": bank.dim,
        "names": list(bank.names),
        "definitions": list(bank.definitions),
        "data_file": data_file,
    }
    with open(manifest_path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    logger.debug("Wrote anchor bank (dim %d) to %s", bank.dim, manifest_path)


def load_anchor_bank(manifest_path: str) -> AnchorBank:
    """
    Read an anchor bank written by save_anchor_bank (or produced by an external encoder).

    Raises:
        DataError: On a missing file, wrong byte count, or badly normalised rows
    """
    try:
        with open(manifest_path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read anchor manifest {manifest_path}: {e}")
    for key in ('dim', 'names', 'definitions', 'data_file'):
        if key not in manifest:
            raise DataError(f"Anchor manifest {manifest_path}: missing field '{key}'")
    dim = manifest['dim']
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise DataError(f"Anchor manifest {manifest_path}: dim must be a positive integer")
    data_path = os.path.join(os.path.dirname(os.path.abspath(manifest_path)), manifest['data_file'])
    expected = 4 * NUM_CATEGORIES * dim
    try:
        found = os.path.getsize(data_path)
    except OSError as e:
        raise DataError(f"Cannot read anchor data {data_path}: {e}")
    if found != expected:
        raise DataError(f"Anchor data {data_path}: expected {expected} bytes, found {found}")
    matrix = np.fromfile(data_path, dtype=FLOAT32_LE).astype(np.float64).reshape(NUM_CATEGORIES, dim)
    if not np.all(np.isfinite(matrix)):
        raise DataError(f"Anchor data {data_path} contains non-finite values")
    return AnchorBank.from_matrix(matrix, manifest['names'], manifest['definitions'])
