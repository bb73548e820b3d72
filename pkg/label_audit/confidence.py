# -*- coding: utf-8 -*-
#
#  confidence.py
#  label_audit
#

"""
Label-quality scores computed from a model's predicted probabilities:
self-confidence, normalized margin and confidence-weighted entropy. Lower
scores flag likelier label errors.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from label_audit import trainer
from label_audit.errors import ArgumentError
from label_audit.scores import ScoreTable
from label_audit.util import map_chunks

_log = logging.getLogger(__name__)

# Stands in for +inf when the prediction is one-hot (zero entropy).
MAX_SCORE = float(np.finfo(np.float64).max)

_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class ProbRecord:
    id: int
    label: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, 'probs', probs)
        if probs.ndim != 1 or not 0 <= self.label < len(probs):
            raise ArgumentError(f'record {self.id}: label {self.label} outside the probability vector')
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > _TOLERANCE:
            raise ArgumentError(f'record {self.id}: probabilities do not form a distribution')

    @property
    def num_classes(self):
        return len(self.probs)


def self_confidence(record):
    return float(record.probs[record.label])


def normalized_margin(record):
    if record.num_classes < 2:
        raise ArgumentError('normalized margin needs at least two classes')
    others = np.delete(record.probs, record.label)
    return float(record.probs[record.label] - others.max())


def normalized_entropy(probs):
    """Entropy divided by log N, with 0 log 0 = 0; lies in [0, 1]."""
    probs = np.asarray(probs, dtype=np.float64)
    return entr(probs).sum(axis=-1) / np.log(probs.shape[-1])


def confidence_weighted_entropy(record):
    if record.num_classes < 2:
        raise ArgumentError('confidence-weighted entropy needs at least two classes')
    entropy = normalized_entropy(record.probs)
    if entropy <= 0:
        return MAX_SCORE
    return float(record.probs[record.label] / entropy)


# ---------------------------------------------------------------------------- #
# Batched scoring


def _batch_scores(probs, labels, method):
    rows = np.arange(len(labels))
    own = probs[rows, labels]
    if method == 'sc':
        return own
    if method == 'nm':
        others = probs.copy()
        others[rows, labels] = -np.inf
        return own - others.max(axis=1)

    entropy = normalized_entropy(probs)
    with np.errstate(divide='ignore', invalid='ignore'):
        scores = own / entropy
    degenerate = entropy <= 0
    if np.any(degenerate):
        _log.warning('%d records have one-hot predictions; scored at the maximum',
                     int(degenerate.sum()))
    return np.where(degenerate, MAX_SCORE, scores)


def score_confidence(dataset, checkpoint, method, threads=1):
    """Scores every row of dataset with method in {sc, nm, ce}."""
    if method not in ('sc', 'nm', 'ce'):
        raise ArgumentError(f'not a confidence method: {method!r}')
    if method != 'sc' and dataset.num_classes < 2:
        raise ArgumentError(f'{method} needs at least two classes')

    def chunk(start, stop):
        probs = trainer.predict_proba_batch(checkpoint, dataset.features[start:stop])
        return _batch_scores(probs, dataset.labels[start:stop], method)

    parts = map_chunks(chunk, dataset.n, threads)
    scores = np.concatenate(parts) if parts else np.empty(0)
    return ScoreTable(method=method, ids=dataset.ids, scores=scores)
