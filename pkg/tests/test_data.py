# -*- coding: utf-8 -*-
#
#  test_data.py
#  label_audit
#

import numpy as np
import pytest

from label_audit import data
from label_audit.errors import ArgumentError, FormatError, ValidationError


def _write_binary(path, n, d, features, labels, flags=1, num_classes=3):
    header = np.zeros(1, dtype=data._HEADER)
    header['magic'] = data.MAGIC
    header['version'] = data.VERSION
    header['n'] = n
    header['d'] = d
    header['num_classes'] = num_classes
    header['flags'] = flags
    with open(path, 'wb') as ostream:
        ostream.write(header.tobytes())
        ostream.write(np.asarray(features, dtype='<f4').tobytes())
        ostream.write(np.asarray(labels, dtype='<u4').tobytes())


def test_load_binary_in_file_order(tmp_path):
    path = str(tmp_path / 'two.lnf')
    features = [[1, 2, 3], [4, 5, 6]]
    _write_binary(path, 2, 3, features, [2, 0])

    dataset = data.load_features(path)
    assert dataset.features.shape == (2, 3)
    np.testing.assert_array_equal(dataset.features, features)
    np.testing.assert_array_equal(dataset.labels, [2, 0])
    np.testing.assert_array_equal(dataset.ids, [0, 1])
    assert dataset.true_labels is None


def test_binary_round_trip_is_byte_exact(tmp_path):
    path = str(tmp_path / 'two.lnf')
    _write_binary(path, 2, 3, [[1.5, -2, 3], [4, 5, 6.25]], [2, 0])
    again = str(tmp_path / 'again.lnf')
    data.save_features(data.load_features(path), again)
    assert open(path, 'rb').read() == open(again, 'rb').read()


def test_binary_round_trip_keeps_ids_and_truth(tmp_path):
    dataset = data.generate_synthetic(data.SynthSpec(num_classes=3, dim=4, per_class=5, seed=2))
    dataset = dataset.subset(np.arange(dataset.n)[::2])
    path = str(tmp_path / 'subset.lnf')
    data.save_features(dataset, path)

    loaded = data.load_features(path)
    np.testing.assert_array_equal(loaded.ids, dataset.ids)
    np.testing.assert_array_equal(loaded.true_labels, dataset.true_labels)
    np.testing.assert_array_equal(loaded.features, dataset.features.astype(np.float32))


def test_binary_rejects_bad_magic(tmp_path):
    path = tmp_path / 'bad.lnf'
    path.write_bytes(b'NOPE' + bytes(28))
    with pytest.raises(FormatError):
        data.load_features(str(path))


def test_binary_rejects_truncated_file(tmp_path):
    path = str(tmp_path / 'short.lnf')
    _write_binary(path, 3, 3, [[1, 2, 3], [4, 5, 6]], [0, 1])
    with pytest.raises(FormatError):
        data.load_features(path)


def test_binary_without_labels_is_format_error(tmp_path):
    path = str(tmp_path / 'unlabelled.lnf')
    _write_binary(path, 1, 2, [[1, 2]], [], flags=0)
    with pytest.raises(FormatError):
        data.load_features(path)


def test_binary_rejects_nan(tmp_path):
    path = str(tmp_path / 'nan.lnf')
    _write_binary(path, 1, 2, [[np.nan, 2]], [0])
    with pytest.raises(ValidationError):
        data.load_features(path)


def test_csv_label_out_of_range(tmp_path):
    path = tmp_path / 'eight.csv'
    path.write_text('id,label,f0,f1\n0,3,0.5,1.0\n1,8,0.25,2.0\n')
    with pytest.raises(ValidationError):
        data.load_features(str(path), 'csv', num_classes=8)


def test_csv_round_trip_preserves_values(tmp_path):
    dataset = data.generate_synthetic(data.SynthSpec(num_classes=3, dim=4, per_class=5, seed=1))
    path = str(tmp_path / 'd.csv')
    data.save_features(dataset, path, 'csv')
    loaded = data.load_features(path, 'csv', num_classes=3)
    np.testing.assert_array_equal(loaded.features, dataset.features)
    np.testing.assert_array_equal(loaded.labels, dataset.labels)
    np.testing.assert_array_equal(loaded.true_labels, dataset.true_labels)


def test_csv_bad_header(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('label,id,f0\n0,0,1.0\n')
    with pytest.raises(FormatError):
        data.load_features(str(path), 'csv')


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError):
        data.Dataset(features=np.zeros((2, 2)), labels=[0, 1], num_classes=2, ids=[5, 5])


def test_negative_ids_rejected(tmp_path):
    with pytest.raises(ValidationError):
        data.Dataset(features=np.zeros((2, 2)), labels=[0, 1], num_classes=2, ids=[3, -1])
    path = tmp_path / 'negative.csv'
    path.write_text('id,label,f0\n-7,0,1.0\n2,1,0.5\n')
    with pytest.raises(ValidationError):
        data.load_features(str(path), 'csv', num_classes=2)


def test_generate_synthetic_counts():
    dataset = data.generate_synthetic(data.SynthSpec(num_classes=8, dim=32, per_class=100))
    assert dataset.n == 800
    assert dataset.num_classes == 8
    np.testing.assert_array_equal(np.bincount(dataset.labels), [100] * 8)
    np.testing.assert_array_equal(dataset.labels, dataset.true_labels)


def test_generate_synthetic_is_deterministic():
    spec = data.SynthSpec(num_classes=4, dim=8, per_class=20, seed=7)
    a, b = data.generate_synthetic(spec), data.generate_synthetic(spec)
    assert a.features.tobytes() == b.features.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)


def test_more_classes_than_dimensions():
    means = data.class_means(data.SynthSpec(num_classes=6, dim=2, per_class=1, seed=3))
    np.testing.assert_allclose(np.linalg.norm(means, axis=1), 4.0)
    assert len(np.unique(means.round(9), axis=0)) == 6


def test_high_separation_is_one_nn_pure():
    spec = data.SynthSpec(num_classes=2, dim=8, per_class=200, separation=10.0, std=1.0, seed=5)
    dataset = data.generate_synthetic(spec)
    distance = np.linalg.norm(dataset.features[:, None] - dataset.features[None], axis=2)
    np.fill_diagonal(distance, np.inf)
    nearest = np.argmin(distance, axis=1)
    assert np.mean(dataset.labels[nearest] == dataset.labels) >= 0.99


def test_generate_splits_have_disjoint_ids():
    train, valid, test = data.generate_splits(
        data.SynthSpec(num_classes=3, dim=4, per_class=10, seed=1), 5, 6)
    assert (train.n, valid.n, test.n) == (30, 15, 18)
    all_ids = np.concatenate([train.ids, valid.ids, test.ids])
    assert len(np.unique(all_ids)) == len(all_ids)


def test_split_aux_counts():
    dataset = data.generate_synthetic(data.SynthSpec(num_classes=4, dim=3, per_class=250))
    remainder, aux = data.split_aux(dataset, 100, seed=0)
    assert (remainder.n, aux.n) == (900, 100)
    assert not np.intersect1d(remainder.ids, aux.ids).size
    assert isinstance(aux, data.AuxiliarySet)
    assert aux.disjoint


def test_split_aux_rejects_whole_dataset():
    dataset = data.generate_synthetic(data.SynthSpec(num_classes=4, dim=3, per_class=250))
    with pytest.raises(ArgumentError):
        data.split_aux(dataset, 1000, seed=0)


def test_split_aux_is_deterministic():
    dataset = data.generate_synthetic(data.SynthSpec(num_classes=4, dim=3, per_class=50))
    _, a = data.split_aux(dataset, 20, seed=9)
    _, b = data.split_aux(dataset, 20, seed=9)
    np.testing.assert_array_equal(a.ids, b.ids)


def test_auxiliary_set_must_be_disjoint(small_dataset):
    with pytest.raises(ArgumentError):
        data.AuxiliarySet.from_dataset(small_dataset.subset([0, 1]), audited=small_dataset)
    assert not data.AuxiliarySet.from_dataset(small_dataset).disjoint


def test_index_of_and_without_ids(small_dataset):
    np.testing.assert_array_equal(small_dataset.index_of([3, 1]), [3, 1])
    assert small_dataset.without_ids([0, 1, 2]).n == small_dataset.n - 3
    with pytest.raises(ArgumentError):
        small_dataset.index_of([1000])
