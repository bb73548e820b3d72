# -*- coding: utf-8 -*-
#
#  evaluation.py
#  label_audit
#

"""
Metrics and analyses for auditing runs: detection accuracy over ranking
prefixes, error reduction rate, retrain-and-test accuracy, Spearman
agreement between methods, similarity and feature-norm histograms, and an
empirical check of the same/different-label gradient kernel ratio.

Two conventions are ours, not standard definitions:

* detection accuracy at t is the precision of the top ceil(t * E) ranked
  ids, E being the number of injected errors;
* error reduction rate is (E_before - E_after) / E_before, counting label
  disagreements with the truth among surviving ids, so removed errors
  count as resolved.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import stats

from label_audit import plots, settings, trainer
from label_audit.data import split_aux
from label_audit.errors import ArgumentError, FormatError, UndefinedMetricError
from label_audit.scores import ScoreTable
from label_audit.similarity import RectifyConfig, audit, score_similarity
from label_audit.util import ceil_count, read_json, write_json

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectionCurve:
    method: str
    t: tuple
    accuracy: tuple

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.t, self.t[1:])):
            raise ArgumentError('t values must be strictly increasing')

    def mean(self):
        return float(np.mean(self.accuracy))

    def at(self, t):
        return self.accuracy[self.t.index(t)]


def _ranking_of(ranked):
    return ranked.ranking() if isinstance(ranked, ScoreTable) else np.asarray(ranked)


def detection_accuracy(ranking, noise, t):
    """Share of corrupted ids among the top ceil(t * E) of the ranking."""
    if not 0 < t <= 1:
        raise ArgumentError(f't must lie in (0, 1], got {t}')
    errors = noise.count
    if errors == 0:
        raise UndefinedMetricError('detection accuracy needs at least one injected error')
    size = ceil_count(t, errors)
    selected = _ranking_of(ranking)[:size]
    return float(np.isin(selected, noise.ids).sum() / size)


def detection_curve(ranking, noise, t_grid=settings.T_GRID, method=None):
    if method is None:
        method = ranking.method if isinstance(ranking, ScoreTable) else 'ranking'
    ranking = _ranking_of(ranking)
    return DetectionCurve(
        method=method,
        t=tuple(t_grid),
        accuracy=tuple(detection_accuracy(ranking, noise, t) for t in t_grid),
    )


def random_ranking(ids, seed):
    """A uniformly random ordering of ids, the chance baseline."""
    return np.random.default_rng(seed).permutation(np.asarray(ids, dtype=np.int64))


def mean_curve(curves, method=None):
    """Pointwise mean of curves sharing a t grid (e.g. across seeds)."""
    if not curves:
        raise ArgumentError('no curves to average')
    t = curves[0].t
    if any(c.t != t for c in curves):
        raise ArgumentError('curves do not share a t grid')
    return DetectionCurve(
        method=method or curves[0].method,
        t=t,
        accuracy=tuple(np.mean([c.accuracy for c in curves], axis=0).tolist()),
    )


# ---------------------------------------------------------------------------- #


def error_reduction_rate(before, after):
    """
    Relative drop in the number of wrong labels among surviving examples.
    At most 1, and 1 only when every surviving label is correct.
    """
    errors_before = int(before.label_errors().sum())
    if errors_before == 0:
        raise UndefinedMetricError('error reduction rate needs at least one wrong label before')
    if not np.all(np.isin(after.ids, before.ids)):
        raise ArgumentError('cleaned dataset contains ids absent from the original')
    errors_after = int(after.label_errors().sum())
    return (errors_before - errors_after) / errors_before


def retrained_accuracy(dataset, valid, test, cfg):
    """Trains on dataset and scores the selected checkpoint on test."""
    checkpoints = trainer.train(dataset, valid if valid is not None else dataset, cfg)
    chosen = trainer.best_checkpoint(checkpoints) if valid is not None else checkpoints[-1]
    return trainer.accuracy(chosen, test)


def retrain_delta(cleaned, test, cfg, baseline_acc, valid=None):
    """
    Test accuracy after retraining on the cleaned dataset, minus the
    baseline from the noisy one. Without a validation set the final epoch
    is used.
    """
    return retrained_accuracy(cleaned, valid, test, cfg) - baseline_acc


# ---------------------------------------------------------------------------- #


def _scores_of(ranked):
    """Per-id values whose ascending order is the ranking."""
    if isinstance(ranked, ScoreTable):
        return ranked.ids, np.where(np.isnan(ranked.scores), np.inf, ranked.scores)
    ranking = np.asarray(ranked, dtype=np.int64)
    return ranking, np.arange(len(ranking), dtype=np.float64)


def spearman(a, b):
    """
    Rank correlation of two score tables (or two id rankings) over the
    same ids; ties get average ranks.
    """
    ids_a, scores_a = _scores_of(a)
    ids_b, scores_b = _scores_of(b)
    if len(ids_a) < 2:
        raise ArgumentError('spearman needs at least two ids')
    if len(ids_a) != len(ids_b) or not np.array_equal(np.sort(ids_a), np.sort(ids_b)):
        raise ArgumentError('rankings cover different ids')

    order_a, order_b = np.argsort(ids_a), np.argsort(ids_b)
    ranks_a = stats.rankdata(scores_a[order_a])
    ranks_b = stats.rankdata(scores_b[order_b])
    if np.all(ranks_a == ranks_a[0]) or np.all(ranks_b == ranks_b[0]):
        raise UndefinedMetricError('spearman undefined for a constant ranking')
    return float(stats.pearsonr(ranks_a, ranks_b)[0])


def spearman_matrix(tables):
    """Symmetric method-by-method Spearman matrix with a unit diagonal."""
    methods = [t.method for t in tables]
    matrix = np.eye(len(tables))
    for i in range(len(tables)):
        for j in range(i + 1, len(tables)):
            try:
                value = spearman(tables[i], tables[j])
            except UndefinedMetricError:
                _log.warning('Spearman undefined for %s vs %s', methods[i], methods[j])
                value = float('nan')
            matrix[i, j] = matrix[j, i] = value
    return methods, matrix


# ---------------------------------------------------------------------------- #
# Histograms


@dataclass(frozen=True, eq=False)
class Histogram:
    label: str
    edges: np.ndarray
    counts: np.ndarray
    mean: float = float('nan')

    @property
    def total(self):
        return int(np.sum(self.counts))


@dataclass(frozen=True, eq=False)
class HistogramPair:
    name: str
    first: Histogram
    second: Histogram


def _histograms(name, labelled_values, bins):
    values = [np.asarray(v, dtype=np.float64).ravel() for _, v in labelled_values]
    everything = np.concatenate(values) if values else np.empty(0)
    if not len(everything):
        edges = np.empty(0)
        histograms = [Histogram(label, edges, np.empty(0, dtype=np.int64))
                      for label, _ in labelled_values]
        return HistogramPair(name, *histograms)

    low, high = float(everything.min()), float(everything.max())
    if low == high:
        edges = np.array([low, high])
        counts = [np.array([len(v)]) for v in values]
    else:
        edges = np.linspace(low, high, bins + 1)
        counts = [np.histogram(v, bins=edges)[0] for v in values]

    histograms = [Histogram(label, edges, c, float(np.mean(v)) if len(v) else float('nan'))
                  for (label, _), c, v in zip(labelled_values, counts, values)]
    return HistogramPair(name, *histograms)


def _corrupted_split(dataset, noise):
    corrupted = noise.corrupted_mask(dataset.ids)
    return corrupted, ~corrupted


def similarity_histograms(dataset, noise, checkpoint, measure, bins=settings.HISTOGRAM_BINS):
    """
    Similarities of every corrupted example to the clean examples of its
    true class, and to the clean examples of all other classes.
    """
    if dataset.true_labels is None:
        raise ArgumentError('similarity histograms need true labels')
    corrupted, clean = _corrupted_split(dataset, noise)
    features = dataset.features if checkpoint is None else \
        trainer.penultimate_batch(checkpoint, dataset.features)

    same, other = np.empty(0), np.empty(0)
    if corrupted.any() and clean.any():
        queries = measure.prepare(features[corrupted])
        reference = measure.prepare(features[clean])
        similarities = queries @ reference.T
        same_class = dataset.true_labels[corrupted][:, None] == dataset.true_labels[clean][None, :]
        same, other = similarities[same_class], similarities[~same_class]

    return _histograms(f'similarity-{measure.kind}',
                       [('true class', same), ('other classes', other)], bins)


def norm_histograms(dataset, noise, checkpoint, bins=settings.HISTOGRAM_BINS):
    """L2 norms of penultimate features, corrupted versus clean examples."""
    corrupted, clean = _corrupted_split(dataset, noise)
    features = dataset.features if checkpoint is None else \
        trainer.penultimate_batch(checkpoint, dataset.features)
    norms = np.linalg.norm(features, axis=1)
    return _histograms('feature-norm', [('corrupted', norms[corrupted]),
                                        ('clean', norms[clean])], bins)


# ---------------------------------------------------------------------------- #
# Kernel ratio


@dataclass(frozen=True)
class TheoryCheck:
    empirical_ratio: float
    analytic_ratio: float
    kernel_ratio: float
    mean_confidence: float
    same_pairs: int
    different_pairs: int


def _sample_pairs(n, pairs, rng):
    first = rng.integers(n, size=pairs)
    second = rng.integers(n - 1, size=pairs)
    second = second + (second >= first)
    return first, second


def residual_kernel_ratio(probs, labels, pairs, seed, features=None):
    """
    mean |<r_i, r_j>| over same-label pairs divided by the mean over
    different-label pairs, for randomly sampled pairs. With features, also
    the ratio of the full last-layer kernel <r_i, r_j><phi_i, phi_j>.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if pairs < 2 or len(labels) < 2:
        raise ArgumentError('need at least two examples and two pairs')

    first, second = _sample_pairs(len(labels), pairs, np.random.default_rng(seed))
    residuals = probs.copy()
    residuals[np.arange(len(labels)), labels] -= 1.0
    g = np.einsum('ia,ia->i', residuals[first], residuals[second])

    same = labels[first] == labels[second]
    if same.all() or not same.any():
        raise ArgumentError('sampled pairs do not cover both same- and different-label cases')
    ratio = float(np.mean(np.abs(g[same])) / np.mean(np.abs(g[~same])))

    kernel_ratio = float('nan')
    if features is not None:
        k = g * np.einsum('ik,ik->i', features[first], features[second])
        kernel_ratio = float(np.mean(np.abs(k[same])) / np.mean(np.abs(k[~same])))
    return ratio, kernel_ratio, int(same.sum()), int((~same).sum())


def theory_ratio_check(dataset, checkpoint, pairs=2000, seed=0):
    """
    Empirical |G_same| / |G_diff| over clean pairs of a trained model,
    reported next to the analytic N - 1.
    """
    clean = np.ones(dataset.n, dtype=bool) if dataset.true_labels is None \
        else ~dataset.label_errors()
    subset = dataset.subset(clean)
    probs = trainer.predict_proba_batch(checkpoint, subset.features)
    features = trainer.penultimate_batch(checkpoint, subset.features)
    ratio, kernel_ratio, n_same, n_diff = residual_kernel_ratio(
        probs, subset.labels, pairs, seed, features)
    return TheoryCheck(
        empirical_ratio=ratio,
        analytic_ratio=float(dataset.num_classes - 1),
        kernel_ratio=kernel_ratio,
        mean_confidence=float(np.mean(probs[np.arange(subset.n), subset.labels])),
        same_pairs=n_same,
        different_pairs=n_diff,
    )


# ---------------------------------------------------------------------------- #
# Hyperparameter studies


def sweep_aux_size(dataset, valid, checkpoint, noise, sizes, k, measure, seed, threads=1):
    """Detection accuracy at t = 1 for auxiliary sets of each size."""
    results = {}
    for m in sizes:
        _, aux = split_aux(valid, m, seed)
        table, _ = score_similarity(dataset, aux, checkpoint, min(k, m), measure, threads)
        results[m] = detection_accuracy(table, noise, 1.0)
    return results


def sweep_k(dataset, aux, checkpoint, noise, ks, measure, threads=1):
    """Detection accuracy at t = 1 for each neighbour count."""
    results = {}
    for k in ks:
        if k > aux.n:
            _log.warning('Skipping k=%d larger than the auxiliary set (%d)', k, aux.n)
            continue
        table, _ = score_similarity(dataset, aux, checkpoint, k, measure, threads)
        results[k] = detection_accuracy(table, noise, 1.0)
    return results


def sweep_tau(dataset, aux, checkpoint, taus, k, p, measure, threads=1):
    """Error reduction rate of rectification for each Mode threshold."""
    results = {}
    for tau in taus:
        cfg = RectifyConfig(k=k, p=p, tau=tau, action='rectify')
        outcome = audit(dataset, aux, checkpoint, cfg, measure, threads)
        results[tau] = error_reduction_rate(dataset, outcome.dataset)
    return results


# ---------------------------------------------------------------------------- #
# Report


@dataclass(eq=False)
class AuditReport:
    curves: List[DetectionCurve] = field(default_factory=list)
    error_reduction_rate: Optional[float] = None
    test_accuracy: Dict[str, float] = field(default_factory=dict)
    spearman_methods: List[str] = field(default_factory=list)
    spearman: Optional[np.ndarray] = None
    histograms: List[HistogramPair] = field(default_factory=list)
    theory: Optional[dict] = None
    notes: Dict[str, str] = field(default_factory=lambda: {
        'detection_accuracy': 'precision of the top ceil(t*E) ranked ids, E = injected errors',
        'error_reduction_rate': '(E_before - E_after) / E_before over surviving ids',
    })

    def to_json(self):
        def histogram(h):
            return {'label': h.label, 'edges': h.edges.tolist(),
                    'counts': np.asarray(h.counts).tolist(), 'mean': h.mean, 'total': h.total}

        return {
            'detection_curves': [
                {'method': c.method, 't': list(c.t), 'accuracy': list(c.accuracy)}
                for c in self.curves
            ],
            'error_reduction_rate': self.error_reduction_rate,
            'test_accuracy': dict(self.test_accuracy),
            'spearman': {
                'methods': list(self.spearman_methods),
                'matrix': None if self.spearman is None else self.spearman.tolist(),
            },
            'histograms': [
                {'name': p.name, 'first': histogram(p.first), 'second': histogram(p.second)}
                for p in self.histograms
            ],
            'theory': self.theory,
            'conventions': dict(self.notes),
        }

    @classmethod
    def from_json(cls, doc):
        def histogram(h):
            return Histogram(h['label'], np.asarray(h['edges'], dtype=np.float64),
                             np.asarray(h['counts'], dtype=np.int64),
                             float('nan') if h.get('mean') is None else h['mean'])

        matrix = doc.get('spearman', {}).get('matrix')
        return cls(
            curves=[DetectionCurve(c['method'], tuple(c['t']), tuple(c['accuracy']))
                    for c in doc.get('detection_curves', [])],
            error_reduction_rate=doc.get('error_reduction_rate'),
            test_accuracy=dict(doc.get('test_accuracy', {})),
            spearman_methods=list(doc.get('spearman', {}).get('methods', [])),
            spearman=None if matrix is None else np.array(matrix, dtype=np.float64),
            histograms=[HistogramPair(p['name'], histogram(p['first']), histogram(p['second']))
                        for p in doc.get('histograms', [])],
            theory=doc.get('theory'),
        )


def write_report(out_dir, report):
    """
    Writes the report JSON, one CSV per figure and one SVG per figure under
    out_dir. Returns the path of the JSON document.
    """
    figure_dir = os.path.join(out_dir, settings.FIGURE_DIR)
    os.makedirs(figure_dir, exist_ok=True)

    path = os.path.join(out_dir, settings.REPORT_FILE)
    write_json(report.to_json(), path)

    if report.curves:
        rows = [(c.method, t, a) for c in report.curves for t, a in zip(c.t, c.accuracy)]
        pd.DataFrame(rows, columns=['method', 't', 'accuracy']).to_csv(
            os.path.join(figure_dir, 'detection_curves.csv'), index=False, float_format='%.17g')
        plots.plot_curves(report.curves, os.path.join(figure_dir, 'detection_curves.svg'))

    for pair in report.histograms:
        rows = []
        for histogram in (pair.first, pair.second):
            edges = histogram.edges
            for i, count in enumerate(histogram.counts):
                rows.append((histogram.label, edges[i], edges[i + 1], int(count)))
        pd.DataFrame(rows, columns=['series', 'low', 'high', 'count']).to_csv(
            os.path.join(figure_dir, f'{pair.name}.csv'), index=False, float_format='%.17g')
        plots.plot_histogram_pair(pair, os.path.join(figure_dir, f'{pair.name}.svg'))

    if report.spearman is not None:
        pd.DataFrame(report.spearman, index=report.spearman_methods,
                     columns=report.spearman_methods).to_csv(
            os.path.join(figure_dir, 'spearman.csv'), float_format='%.17g', na_rep='nan')
        plots.plot_spearman(report.spearman_methods, report.spearman,
                            os.path.join(figure_dir, 'spearman.svg'))

    _log.info('Report written to %s', path)
    return path


def read_report(path):
    try:
        return AuditReport.from_json(read_json(path))
    except (KeyError, TypeError) as e:
        raise FormatError(f'{path}: not an audit report ({e})') from e
