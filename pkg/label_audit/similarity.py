# -*- coding: utf-8 -*-
#
#  similarity.py
#  label_audit
#

"""
Similarity-based error detection and rectification over penultimate
features. Each audited example is compared with its k most similar
examples of a trusted auxiliary set; the share of those neighbours that
agree with its label is its score, low scores are ranked first, and a
prefix of the ranking is relabelled by the neighbours' majority (the Mode
rule) or removed.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from label_audit import settings, trainer
from label_audit.errors import ArgumentError, FormatError, UndefinedSimilarityError
from label_audit.heap_cache import NeighbourCache
from label_audit.scores import ScoreTable, rank_suspicious
from label_audit.util import ceil_count, map_chunks

__all__ = [
    'SimilarityMeasure', 'NeighborSet', 'RectifyConfig', 'AuditResult',
    'knn', 'knn_batch', 'label_agreement_score', 'rank_suspicious',
    'mode_rectify', 'score_similarity', 'audit', 'save_log', 'load_log',
]

_log = logging.getLogger(__name__)

MEASURES = ('cos', 'dot')
ACTIONS = ('rectify', 'remove')
DECISIONS = ('rectified', 'removed', 'kept')

LOG_COLUMNS = ['id', 'old_label', 'new_label', 'score', 'decision']


@dataclass(frozen=True)
class SimilarityMeasure:
    kind: str = 'cos'

    def __post_init__(self):
        if self.kind not in MEASURES:
            raise ArgumentError(f'unknown similarity {self.kind!r}; choose from {MEASURES}')

    @classmethod
    def from_method(cls, method):
        """'sim-cos' -> cos, 'sim-dot' -> dot."""
        if not method.startswith('sim-'):
            raise ArgumentError(f'not a similarity method: {method!r}')
        return cls(method[len('sim-'):])

    @property
    def method(self):
        return f'sim-{self.kind}'

    def prepare(self, features):
        """Rows ready for a plain dot product: unit-normalised under cos."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if self.kind == 'dot':
            return features
        norms = np.linalg.norm(features, axis=1)
        if np.any(norms == 0):
            raise UndefinedSimilarityError(
                f'cosine similarity undefined for {int(np.sum(norms == 0))} zero feature vectors')
        return features / norms[:, None]

    def __call__(self, a, b):
        return float(self.prepare(a)[0] @ self.prepare(b)[0])


@dataclass(frozen=True, eq=False)
class NeighborSet:
    """The k auxiliary neighbours of one query, most similar first."""
    query_id: int
    ids: np.ndarray
    similarities: np.ndarray
    labels: np.ndarray

    @property
    def k(self):
        return len(self.ids)


@dataclass(frozen=True)
class RectifyConfig:
    k: int = settings.N_NEIGHBOURS
    p: float = settings.NOISE_RATE
    tau: float = settings.MODE_THRESHOLD
    action: str = 'rectify'

    def validate(self, m=None):
        if self.k < 1 or (m is not None and self.k > m):
            raise ArgumentError(f'k must satisfy 1 <= k <= m, got k={self.k}, m={m}')
        if not 0 < self.p <= 1:
            raise ArgumentError(f'p must lie in (0, 1], got {self.p}')
        if not 0 < self.tau <= 1:
            raise ArgumentError(f'tau must lie in (0, 1], got {self.tau}')
        if self.action not in ACTIONS:
            raise ArgumentError(f'unknown action {self.action!r}; choose from {ACTIONS}')
        return self


# ---------------------------------------------------------------------------- #
# Neighbour search


def _select(query_id, similarities, k, aux_ids, aux_labels, cache):
    """Exact top-k of one similarity row, ties to the smaller aux id."""
    if k < len(similarities):
        threshold = -np.partition(-similarities, k - 1)[k - 1]
        candidates = np.flatnonzero(similarities >= threshold)
    else:
        candidates = np.arange(len(similarities))

    heap = cache.get_heap(query_id)
    positions = {}
    for c in candidates:
        aux_id = int(aux_ids[c])
        positions[aux_id] = c
        cache.add(query_id, aux_id, float(similarities[c]))

    kept = [positions[aux_id] for _, aux_id in heap.get_contents()]
    return NeighborSet(
        query_id=int(query_id),
        ids=aux_ids[kept],
        similarities=similarities[kept],
        labels=aux_labels[kept],
    )


def knn_batch(queries, query_ids, aux, k, measure, threads=1):
    """
    NeighborSets of every query row against the auxiliary set, whose
    features must already live in the same space as the queries.
    """
    if not 1 <= k <= aux.n:
        raise ArgumentError(f'k must satisfy 1 <= k <= m={aux.n}, got {k}')
    queries = measure.prepare(queries) if len(queries) else np.empty((0, aux.dim))
    reference = measure.prepare(aux.features)
    query_ids = np.asarray(query_ids, dtype=np.int64)

    def chunk(start, stop):
        cache = NeighbourCache(k)
        similarities = queries[start:stop] @ reference.T
        sets = [_select(query_ids[start + i], row, k, aux.ids, aux.labels, cache)
                for i, row in enumerate(similarities)]
        return sets, cache

    parts = map_chunks(chunk, len(queries), threads, chunk_size=256)
    seen = sum(cache.n_seen for _, cache in parts)
    if seen:
        mean = sum(cache.get_mean() * cache.n_seen for _, cache in parts) / seen
        _log.debug('Mean candidate %s similarity %.4f', measure.kind, mean)
    return [s for sets, _ in parts for s in sets]


def knn(query, aux, k, measure, query_id=-1):
    """The k auxiliary examples most similar to a single query vector."""
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1 or len(query) != aux.dim:
        raise ArgumentError(f'query must be a vector of dimension {aux.dim}')
    return knn_batch(query[None, :], [query_id], aux, k, measure)[0]


# ---------------------------------------------------------------------------- #
# Scoring and rectification


def label_agreement_score(neighbours, label):
    """Share of neighbours carrying the given label."""
    return float(np.mean(neighbours.labels == label))


def mode_rectify(neighbours, label, tau):
    """
    The most frequent neighbour label (smallest class on ties) if its
    share strictly exceeds tau; otherwise the current label.
    """
    counts = np.bincount(neighbours.labels)
    winner = int(np.argmax(counts))
    if counts[winner] / neighbours.k > tau:
        return winner
    return int(label)


def _mapped(dataset, aux, checkpoint):
    if checkpoint is None:
        return dataset, aux
    return (dataset.with_features(trainer.penultimate_batch(checkpoint, dataset.features)),
            aux.with_features(trainer.penultimate_batch(checkpoint, aux.features)))


def score_similarity(dataset, aux, checkpoint, k, measure, threads=1):
    """
    Label-agreement scores of every row of dataset. Features go through the
    checkpoint's penultimate layer first; pass checkpoint=None when both
    sets already hold penultimate features.
    """
    dataset, aux = _mapped(dataset, aux, checkpoint)
    neighbours = knn_batch(dataset.features, dataset.ids, aux, k, measure, threads)
    scores = np.array([label_agreement_score(ns, y)
                       for ns, y in zip(neighbours, dataset.labels)])
    return ScoreTable(method=measure.method, ids=dataset.ids, scores=scores), neighbours


@dataclass(frozen=True, eq=False)
class AuditResult:
    dataset: object
    scores: ScoreTable
    log: pd.DataFrame
    neighbours: dict


def audit(dataset, aux, checkpoint, cfg=RectifyConfig(), measure=SimilarityMeasure(), threads=1):
    """
    Detects and rectifies (or removes) suspected label errors in dataset.
    The first ceil(p * n) examples of the ascending score ranking are
    relabelled by the Mode rule or dropped; features and true labels are
    never touched.
    """
    cfg.validate(aux.n)
    scores, neighbours = score_similarity(dataset, aux, checkpoint, cfg.k, measure, threads)
    by_id = {ns.query_id: ns for ns in neighbours}

    ranking = rank_suspicious(scores.ids, scores.scores)
    prefix = ranking[:ceil_count(cfg.p, dataset.n)]
    index = dataset.index_of(prefix)
    prefix_scores = scores.aligned(prefix)

    old = dataset.labels[index]
    if cfg.action == 'remove':
        new = old.copy()
        decisions = np.full(len(prefix), 'removed')
        result = dataset.without_ids(prefix)
    else:
        new = np.array([mode_rectify(by_id[i], y, cfg.tau) for i, y in zip(prefix, old)],
                       dtype=np.int64)
        decisions = np.where(new != old, 'rectified', 'kept')
        labels = dataset.labels.copy()
        labels[index] = new
        result = dataset.with_labels(labels)

    log = pd.DataFrame({
        'id': prefix,
        'old_label': old,
        'new_label': new,
        'score': prefix_scores,
        'decision': decisions,
    }, columns=LOG_COLUMNS)
    _log.info('Audit with %s: %d of %d examples inspected, %d %s',
              measure.method, len(prefix), dataset.n,
              int(np.sum(decisions != 'kept')),
              'removed' if cfg.action == 'remove' else 'rectified')
    return AuditResult(dataset=result, scores=scores, log=log,
                       neighbours={i: by_id[i] for i in prefix})


def save_log(log, path):
    log.to_csv(path, index=False, float_format='%.17g')


def load_log(path):
    try:
        log = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FormatError(f'{path}: {e}') from e
    if list(log.columns) != LOG_COLUMNS:
        raise FormatError(f'{path}: header must be {",".join(LOG_COLUMNS)}')
    if not log['decision'].isin(DECISIONS).all():
        raise FormatError(f'{path}: unknown decision values')
    return log
