# -*- coding: utf-8 -*-
#
#  data.py
#  label_audit
#

"""
Datasets of feature vectors with observed (possibly noisy) labels, their
binary and CSV file formats, and a synthetic Gaussian-mixture generator.

Binary feature file, all fields little-endian::

    magic "LNF1" | version u32 | n u64 | d u64 | N u32 | flags u32
    n*d f32 features (row-major)
    n u32 labels          (flags bit 0)
    n u32 true labels     (flags bit 1)
    n u64 ids             (flags bit 2, only when ids are not 0..n-1)
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from label_audit import settings
from label_audit.errors import ArgumentError, FormatError, ValidationError

_log = logging.getLogger(__name__)

MAGIC = b'LNF1'
VERSION = 1

FLAG_LABELS = 1
FLAG_TRUE_LABELS = 2
FLAG_IDS = 4

_HEADER = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('n', '<u8'),
    ('d', '<u8'),
    ('num_classes', '<u4'),
    ('flags', '<u4'),
])

FORMATS = ('binary', 'csv')


def _frozen(array, dtype):
    array = np.array(array, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Rows of features with observed labels. Instances are immutable; every
    transformation returns a new dataset.
    """
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    ids: Optional[np.ndarray] = None
    true_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        features = np.asarray(self.features)
        if features.ndim != 2:
            raise ValidationError(f'features must be a matrix, got shape {features.shape}')
        n = features.shape[0]
        ids = np.arange(n) if self.ids is None else self.ids

        object.__setattr__(self, 'features', _frozen(features, np.float64))
        object.__setattr__(self, 'labels', _frozen(self.labels, np.int64))
        object.__setattr__(self, 'ids', _frozen(ids, np.int64))
        if self.true_labels is not None:
            object.__setattr__(self, 'true_labels', _frozen(self.true_labels, np.int64))
        self._validate()

    def _validate(self):
        n = self.features.shape[0]
        if self.num_classes < 1:
            raise ValidationError(f'num_classes must be positive, got {self.num_classes}')
        if not np.all(np.isfinite(self.features)):
            raise ValidationError('features contain NaN or Inf entries')

        columns = [('labels', self.labels), ('ids', self.ids)]
        if self.true_labels is not None:
            columns.append(('true_labels', self.true_labels))
        for name, column in columns:
            if column.shape != (n,):
                raise ValidationError(f'{name} has shape {column.shape}, expected ({n},)')

        for name, column in columns:
            if name == 'ids' or not n:
                continue
            if column.min() < 0 or column.max() >= self.num_classes:
                raise ValidationError(
                    f'{name} must lie in [0, {self.num_classes}), '
                    f'found {column.min()}..{column.max()}')

        if len(np.unique(self.ids)) != n:
            raise ValidationError('ids are not unique')
        if n and self.ids.min() < 0:
            raise ValidationError(f'ids must be non-negative, found {self.ids.min()}')

    # ------------------------------------------------------------------------ #

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def subset(self, index):
        """Rows selected by an integer index array or boolean mask."""
        index = np.asarray(index)
        return Dataset(
            features=self.features[index],
            labels=self.labels[index],
            num_classes=self.num_classes,
            ids=self.ids[index],
            true_labels=None if self.true_labels is None else self.true_labels[index],
        )

    def with_labels(self, labels):
        """The same rows carrying different observed labels."""
        return Dataset(
            features=self.features,
            labels=labels,
            num_classes=self.num_classes,
            ids=self.ids,
            true_labels=self.true_labels,
        )

    def with_features(self, features):
        """The same examples represented by different feature vectors."""
        return Dataset(
            features=features,
            labels=self.labels,
            num_classes=self.num_classes,
            ids=self.ids,
            true_labels=self.true_labels,
        )

    def without_ids(self, ids):
        keep = ~np.isin(self.ids, np.asarray(ids, dtype=np.int64))
        return self.subset(keep)

    def index_of(self, ids):
        """Row positions of the given ids."""
        ids = np.asarray(ids, dtype=np.int64)
        if not len(ids):
            return np.empty(0, dtype=np.int64)
        order = np.argsort(self.ids, kind='stable')
        sorted_ids = self.ids[order]
        pos = np.searchsorted(sorted_ids, ids)
        pos = np.clip(pos, 0, max(self.n - 1, 0))
        if self.n == 0 or np.any(sorted_ids[pos] != ids):
            missing = ids[(self.n == 0) | (sorted_ids[pos] != ids)]
            raise ArgumentError(f'ids not in dataset: {missing[:5].tolist()}')
        return order[pos]

    def label_errors(self):
        """Boolean mask of rows whose observed label differs from the truth."""
        if self.true_labels is None:
            raise ArgumentError('dataset carries no true labels')
        return self.labels != self.true_labels


@dataclass(frozen=True, eq=False)
class AuxiliarySet(Dataset):
    """
    A small trusted labelled set, id-disjoint from the dataset being
    audited. Its labels are treated as reference truth; disjoint records
    whether that was checked against an audited set.
    """
    disjoint: bool = field(default=False)

    def _validate(self):
        super()._validate()
        if self.n < 1:
            raise ValidationError('auxiliary set must hold at least one example')

    @classmethod
    def from_dataset(cls, dataset, audited=None):
        if audited is not None:
            overlap = np.intersect1d(dataset.ids, audited.ids)
            if len(overlap):
                raise ArgumentError(
                    f'auxiliary set shares {len(overlap)} ids with the audited set')
        return cls(
            features=dataset.features,
            labels=dataset.labels,
            num_classes=dataset.num_classes,
            ids=dataset.ids,
            true_labels=dataset.true_labels,
            disjoint=audited is not None,
        )


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of an isotropic Gaussian mixture with one blob per class."""
    num_classes: int = settings.SYNTH_CLASSES
    dim: int = settings.SYNTH_DIM
    per_class: int = settings.SYNTH_PER_CLASS
    separation: float = settings.SYNTH_SEPARATION
    std: float = settings.SYNTH_STD
    seed: int = 0

    def validate(self):
        if min(self.num_classes, self.dim, self.per_class) < 1:
            raise ArgumentError('class count, dimension and per-class count must be positive')
        if not (self.separation > 0 and self.std > 0):
            raise ArgumentError('separation and std must be positive')
        if self.seed < 0:
            raise ArgumentError('seed must be non-negative')
        return self


# ---------------------------------------------------------------------------- #
# Synthetic data


def class_means(spec):
    """
    Class c sits at separation * e_c for c < dim. Later classes cycle
    through the axes again under a random rotation, one per cycle.
    """
    means = np.zeros((spec.num_classes, spec.dim))
    for c in range(spec.num_classes):
        cycle, axis = divmod(c, spec.dim)
        direction = np.zeros(spec.dim)
        direction[axis] = 1.0
        if cycle:
            rotation_rng = np.random.default_rng([spec.seed, cycle])
            q, r = np.linalg.qr(rotation_rng.standard_normal((spec.dim, spec.dim)))
            q = q * np.sign(np.diag(r))
            direction = q @ direction
        means[c] = spec.separation * direction
    return means


def _sample(spec, means, per_class, rng, id_offset=0):
    n = spec.num_classes * per_class
    labels = np.repeat(np.arange(spec.num_classes), per_class)
    features = means[labels] + spec.std * rng.standard_normal((n, spec.dim))
    return Dataset(
        features=features,
        labels=labels,
        num_classes=spec.num_classes,
        ids=np.arange(id_offset, id_offset + n),
        true_labels=labels,
    )


def generate_synthetic(spec):
    """Draws spec.per_class points per class; a pure function of spec."""
    spec.validate()
    return _sample(spec, class_means(spec), spec.per_class,
                   np.random.default_rng(spec.seed))


def generate_splits(spec, valid_per_class=settings.SYNTH_VALID_PER_CLASS,
        test_per_class=settings.SYNTH_TEST_PER_CLASS):
    """
    Train, validation and test sets drawn around the same class means with
    independent noise and disjoint ids.
    """
    train = generate_synthetic(spec)
    means = class_means(spec)
    valid_seed, test_seed = np.random.SeedSequence(spec.seed).spawn(2)

    valid = _sample(spec, means, valid_per_class,
                    np.random.default_rng(valid_seed), id_offset=train.n)
    test = _sample(spec, means, test_per_class,
                   np.random.default_rng(test_seed), id_offset=train.n + valid.n)
    return train, valid, test


def split_aux(dataset, m, seed):
    """
    Samples m rows without replacement as the trusted auxiliary set and
    returns (remainder, auxiliary set). Row order is preserved in both.
    """
    if not 1 <= m < dataset.n:
        raise ArgumentError(f'auxiliary size must satisfy 1 <= m < n={dataset.n}, got {m}')

    rng = np.random.default_rng(seed)
    chosen = np.zeros(dataset.n, dtype=bool)
    chosen[rng.choice(dataset.n, size=m, replace=False)] = True

    remainder = dataset.subset(~chosen)
    aux = AuxiliarySet.from_dataset(dataset.subset(chosen), audited=remainder)
    return remainder, aux


# ---------------------------------------------------------------------------- #
# File formats


def load_features(path, format='binary', num_classes=None):
    """Loads a dataset from a binary (.lnf) or CSV feature file."""
    if not os.path.exists(path):
        raise ArgumentError(f'no such feature file: {path}')
    if format == 'binary':
        return _load_binary(path, num_classes)
    elif format == 'csv':
        return _load_csv(path, num_classes)
    raise ArgumentError(f'unknown feature format {format!r}')


def save_features(dataset, path, format='binary'):
    if format == 'binary':
        _save_binary(dataset, path)
    elif format == 'csv':
        _save_csv(dataset, path)
    else:
        raise ArgumentError(f'unknown feature format {format!r}')
    _log.debug('Wrote %d x %d features to %s', dataset.n, dataset.dim, path)


def guess_format(path):
    return 'csv' if path.lower().endswith('.csv') else 'binary'


def _load_binary(path, num_classes):
    with open(path, 'rb') as istream:
        raw = istream.read()

    if len(raw) < _HEADER.itemsize:
        raise FormatError(f'{path}: truncated header')
    header = np.frombuffer(raw, dtype=_HEADER, count=1)[0]
    if header['magic'] != MAGIC:
        raise FormatError(f'{path}: bad magic {bytes(header["magic"])!r}')
    if header['version'] != VERSION:
        raise FormatError(f'{path}: unsupported version {header["version"]}')

    n, d = int(header['n']), int(header['d'])
    flags = int(header['flags'])
    if not flags & FLAG_LABELS:
        raise FormatError(f'{path}: feature file carries no labels')
    if flags & ~(FLAG_LABELS | FLAG_TRUE_LABELS | FLAG_IDS):
        raise FormatError(f'{path}: unknown flag bits {flags:#x}')

    blocks = [('features', '<f4', n * d), ('labels', '<u4', n)]
    if flags & FLAG_TRUE_LABELS:
        blocks.append(('true_labels', '<u4', n))
    if flags & FLAG_IDS:
        blocks.append(('ids', '<u8', n))

    expected = _HEADER.itemsize + sum(np.dtype(t).itemsize * c for _, t, c in blocks)
    if len(raw) != expected:
        raise FormatError(f'{path}: expected {expected} bytes, found {len(raw)}')

    offset = _HEADER.itemsize
    arrays = {}
    for name, dtype, count in blocks:
        arrays[name] = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        offset += np.dtype(dtype).itemsize * count

    stored_classes = int(header['num_classes'])
    if num_classes is not None and num_classes != stored_classes:
        raise ValidationError(
            f'{path}: file declares {stored_classes} classes, expected {num_classes}')

    return Dataset(
        features=arrays['features'].reshape(n, d),
        labels=arrays['labels'],
        num_classes=stored_classes,
        ids=arrays.get('ids'),
        true_labels=arrays.get('true_labels'),
    )


def _save_binary(dataset, path):
    sequential = np.array_equal(dataset.ids, np.arange(dataset.n))
    flags = FLAG_LABELS
    if dataset.true_labels is not None:
        flags |= FLAG_TRUE_LABELS
    if not sequential:
        flags |= FLAG_IDS

    header = np.zeros(1, dtype=_HEADER)
    header['magic'] = MAGIC
    header['version'] = VERSION
    header['n'] = dataset.n
    header['d'] = dataset.dim
    header['num_classes'] = dataset.num_classes
    header['flags'] = flags

    with open(path, 'wb') as ostream:
        ostream.write(header.tobytes())
        ostream.write(dataset.features.astype('<f4').tobytes())
        ostream.write(dataset.labels.astype('<u4').tobytes())
        if dataset.true_labels is not None:
            ostream.write(dataset.true_labels.astype('<u4').tobytes())
        if not sequential:
            ostream.write(dataset.ids.astype('<u8').tobytes())


def _load_csv(path, num_classes):
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise FormatError(f'{path}: {e}') from e

    columns = list(frame.columns)
    if columns[:2] != ['id', 'label']:
        raise FormatError(f'{path}: header must start with id,label')
    has_truth = len(columns) > 2 and columns[2] == 'true_label'
    feature_columns = columns[3 if has_truth else 2:]
    if feature_columns != [f'f{i}' for i in range(len(feature_columns))]:
        raise FormatError(f'{path}: feature columns must be f0..f{{d-1}}')

    label_columns = ['id', 'label'] + (['true_label'] if has_truth else [])
    for column in label_columns:
        if not pd.api.types.is_integer_dtype(frame[column]):
            raise ValidationError(f'{path}: column {column!r} must hold integers')

    labels = frame['label'].to_numpy()
    true_labels = frame['true_label'].to_numpy() if has_truth else None
    if num_classes is None:
        num_classes = int(max(labels.max(initial=-1),
                              -1 if true_labels is None else true_labels.max(initial=-1))) + 1

    return Dataset(
        features=frame[feature_columns].to_numpy(dtype=np.float64),
        labels=labels,
        num_classes=num_classes,
        ids=frame['id'].to_numpy(),
        true_labels=true_labels,
    )


def _save_csv(dataset, path):
    frame = pd.DataFrame({'id': dataset.ids, 'label': dataset.labels})
    if dataset.true_labels is not None:
        frame['true_label'] = dataset.true_labels
    features = pd.DataFrame(
        dataset.features, columns=[f'f{i}' for i in range(dataset.dim)])
    frame = pd.concat([frame, features], axis=1)
    frame.to_csv(path, index=False, float_format='%.17g')
