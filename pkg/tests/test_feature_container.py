import json

import numpy as np
import pytest

from SuspicionToolbox.errors import DataError
from SuspicionToolbox.feature_container import load_feature_container, load_features, save_features
from SuspicionToolbox.modulator import FeatureStack

from conftest import random_features


@pytest.fixture
def stored(tmp_path, rng):
    features = random_features(rng, 7)
    features = FeatureStack({m: v.astype(np.float32) for m, v in features.arrays.items()})
    save_features(features, str(tmp_path), 'clip', 25.0)
    return tmp_path, features


def test_round_trip_is_exact_for_float32(stored):
    directory, features = stored
    container = load_feature_container(str(directory))
    assert container.sequence_id == 'clip'
    assert container.fps == 25.0
    assert container.frames == 7
    for name, values in features.arrays.items():
        np.testing.assert_array_equal(container.features[name], values)
    bundles = load_features(str(directory / 'manifest.json'))
    assert len(bundles) == 7
    np.testing.assert_array_equal(bundles[4].temporal, features['temporal'][4])


def test_truncated_modality_file(stored):
    directory, _ = stored
    path = directory / 'conf.f32'
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(DataError, match=f"expected {4 * 7 * 11} bytes, found {4 * 7 * 11 - 8}"):
        load_feature_container(str(directory))


def test_wrong_dimension_is_named(stored):
    directory, _ = stored
    manifest = json.loads((directory / 'manifest.json').read_text(encoding='utf-8'))
    manifest['modalities'][0]['dim'] = 1407
    (directory / 'manifest.json').write_text(json.dumps(manifest), encoding='utf-8')
    with pytest.raises(DataError, match="'visual' must have dim 1408, got 1407"):
        load_feature_container(str(directory))


def test_non_finite_value_is_located(stored):
    directory, features = stored
    values = features['temporal'].copy()
    values[5, 3] = np.inf
    values.astype('<f4').tofile(str(directory / 'temporal.f32'))
    with pytest.raises(DataError, match='frame 5, column 3'):
        load_feature_container(str(directory))


def test_missing_modality(stored):
    directory, _ = stored
    manifest = json.loads((directory / 'manifest.json').read_text(encoding='utf-8'))
    manifest['modalities'] = [e for e in manifest['modalities'] if e['name'] != 'spectrum']
    (directory / 'manifest.json').write_text(json.dumps(manifest), encoding='utf-8')
    with pytest.raises(DataError, match="missing modality 'spectrum'"):
        load_feature_container(str(directory))


def test_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        load_feature_container(str(tmp_path))
