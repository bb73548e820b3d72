# -*- coding: utf-8 -*-
#
#  noise.py
#  label_audit
#

"""
Simulated human label noise: uniform flips, systematic ambiguity through a
class derangement, and concentrated flips of a dense cluster to a target
class (a label-poisoning attack). Every injection returns a report of what
it changed, the ground truth for detection metrics.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from label_audit import settings
from label_audit.errors import ArgumentError, FormatError
from label_audit.util import floor_count

_log = logging.getLogger(__name__)

KINDS = ('uniform', 'ambiguity', 'concentrated')

REPORT_COLUMNS = ['id', 'original_label', 'corrupted_label']


def cyclic_derangement(num_classes):
    """h(i) = (i + 1) mod N."""
    return tuple((i + 1) % num_classes for i in range(num_classes))


def check_derangement(mapping, num_classes):
    mapping = tuple(int(c) for c in mapping)
    if len(mapping) != num_classes or sorted(mapping) != list(range(num_classes)):
        raise ArgumentError(f'mapping {mapping} is not a permutation of 0..{num_classes - 1}')
    fixed = [i for i, c in enumerate(mapping) if i == c]
    if fixed:
        raise ArgumentError(f'mapping has fixed points at classes {fixed}')
    return mapping


def _check_rate(rate):
    if not 0 < rate <= 1:
        raise ArgumentError(f'noise rate must lie in (0, 1], got {rate}')


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = 'uniform'
    rate: float = settings.NOISE_RATE
    mapping: Optional[Tuple[int, ...]] = None
    source_class: Optional[int] = None
    target_class: Optional[int] = None
    seed: int = 0

    def validate(self, num_classes):
        if self.kind not in KINDS:
            raise ArgumentError(f'unknown noise kind {self.kind!r}; choose from {KINDS}')
        _check_rate(self.rate)
        if self.kind == 'ambiguity' and self.mapping is not None:
            check_derangement(self.mapping, num_classes)
        if self.kind == 'concentrated':
            if self.source_class is None or self.target_class is None:
                raise ArgumentError('concentrated noise needs a source and a target class')
            if self.source_class == self.target_class:
                raise ArgumentError('target class must differ from source class')
            for c in (self.source_class, self.target_class):
                if not 0 <= c < num_classes:
                    raise ArgumentError(f'class {c} outside 0..{num_classes - 1}')
        return self


@dataclass(frozen=True, eq=False)
class NoiseReport:
    """Which examples were corrupted, and from which label to which."""
    ids: np.ndarray
    original_labels: np.ndarray
    corrupted_labels: np.ndarray
    spec: Optional[NoiseSpec] = None

    def __post_init__(self):
        for name in ('ids', 'original_labels', 'corrupted_labels'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if not (self.ids.shape == self.original_labels.shape == self.corrupted_labels.shape):
            raise ArgumentError('noise report columns differ in length')
        if np.any(self.original_labels == self.corrupted_labels):
            raise ArgumentError('noise report lists an unchanged label')

    @property
    def count(self):
        return len(self.ids)

    def __len__(self):
        return self.count

    def corrupted_mask(self, ids):
        """Boolean mask over ids marking the corrupted ones."""
        return np.isin(np.asarray(ids), self.ids)


def _apply(dataset, index, new_labels, spec):
    index = np.asarray(index, dtype=np.int64)
    labels = dataset.labels.copy()
    original = labels[index]
    labels[index] = new_labels
    report = NoiseReport(
        ids=dataset.ids[index],
        original_labels=original,
        corrupted_labels=np.asarray(new_labels, dtype=np.int64),
        spec=spec,
    )
    _log.info('Corrupted %d of %d labels (%s)', report.count, dataset.n, spec.kind)
    return dataset.with_labels(labels), report


def inject_uniform(dataset, rate, seed):
    """Flips floor(rate * n) random labels, each to a random other class."""
    if dataset.num_classes < 2:
        raise ArgumentError('uniform noise needs at least two classes')
    _check_rate(rate)
    spec = NoiseSpec(kind='uniform', rate=rate, seed=seed)

    rng = np.random.default_rng(seed)
    count = floor_count(rate, dataset.n)
    index = np.sort(rng.choice(dataset.n, size=count, replace=False))
    offsets = rng.integers(1, dataset.num_classes, size=count)
    new_labels = (dataset.labels[index] + offsets) % dataset.num_classes
    return _apply(dataset, index, new_labels, spec)


def inject_ambiguity(dataset, rate, mapping=None, seed=0):
    """
    Within each class c, relabels floor(rate * |c|) random members to
    mapping[c]. The mapping must be a derangement.
    """
    _check_rate(rate)
    if mapping is None:
        mapping = cyclic_derangement(dataset.num_classes)
    mapping = check_derangement(mapping, dataset.num_classes)
    spec = NoiseSpec(kind='ambiguity', rate=rate, mapping=mapping, seed=seed)

    rng = np.random.default_rng(seed)
    picked, new_labels = [], []
    for c in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == c)
        count = floor_count(rate, len(members))
        chosen = np.sort(rng.choice(members, size=count, replace=False))
        picked.append(chosen)
        new_labels.append(np.full(count, mapping[c]))

    index = np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)
    order = np.argsort(index, kind='stable')
    return _apply(dataset, index[order], np.concatenate(new_labels)[order], spec)


def density(features, n_neighbours=settings.DENSITY_NEIGHBOURS, chunk_size=1024):
    """Mean Euclidean distance from each row to its n nearest other rows."""
    n = len(features)
    k = min(n_neighbours, n - 1)
    if k < 1:
        return np.zeros(n)

    result = np.empty(n)
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        dist = cdist(features[start:stop], features)
        dist[np.arange(stop - start), np.arange(start, stop)] = np.inf
        nearest = np.partition(dist, k - 1, axis=1)[:, :k]
        result[start:stop] = nearest.mean(axis=1)
    return result


def inject_concentrated(dataset, rate, source_class, target_class, seed=0):
    """
    Flips the floor(rate * n) source-class points nearest to the densest
    source-class point, all to target_class. Distance ties go to the
    smaller id.
    """
    _check_rate(rate)
    spec = NoiseSpec(kind='concentrated', rate=rate, source_class=source_class,
                     target_class=target_class, seed=seed)
    spec.validate(dataset.num_classes)

    count = floor_count(rate, dataset.n)
    members = np.flatnonzero(dataset.labels == source_class)
    if len(members) < count:
        raise ArgumentError(
            f'class {source_class} has {len(members)} members, {count} needed')
    if count == 0:
        return _apply(dataset, [], [], spec)

    features = dataset.features[members]
    ids = dataset.ids[members]

    spread = density(features)
    densest = np.lexsort((ids, spread))[0]
    distance = cdist(features[densest:densest + 1], features)[0]
    nearest = np.lexsort((ids, distance))[:count]

    index = np.sort(members[nearest])
    return _apply(dataset, index, np.full(count, target_class), spec)


def inject(dataset, spec):
    """Applies the noise model described by spec."""
    spec.validate(dataset.num_classes)
    if spec.kind == 'uniform':
        return inject_uniform(dataset, spec.rate, spec.seed)
    elif spec.kind == 'ambiguity':
        return inject_ambiguity(dataset, spec.rate, spec.mapping, spec.seed)
    return inject_concentrated(dataset, spec.rate, spec.source_class,
                               spec.target_class, spec.seed)


def replay(dataset, report):
    """Re-applies a report's label flips to the clean dataset."""
    index = dataset.index_of(report.ids)
    if np.any(dataset.labels[index] != report.original_labels):
        raise ArgumentError('report does not match the dataset it is replayed on')
    labels = dataset.labels.copy()
    labels[index] = report.corrupted_labels
    return dataset.with_labels(labels)


# ---------------------------------------------------------------------------- #


def save_report(report, path):
    frame = pd.DataFrame({
        'id': report.ids,
        'original_label': report.original_labels,
        'corrupted_label': report.corrupted_labels,
    })
    frame.to_csv(path, index=False)


def load_report(path):
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f'{path}: {e}') from e
    if list(frame.columns) != REPORT_COLUMNS:
        raise FormatError(f'{path}: header must be {",".join(REPORT_COLUMNS)}')
    return NoiseReport(
        ids=frame['id'].to_numpy(),
        original_labels=frame['original_label'].to_numpy(),
        corrupted_labels=frame['corrupted_label'].to_numpy(),
    )
