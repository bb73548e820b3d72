# -*- coding: utf-8 -*-
#
#  gradients.py
#  label_audit
#

"""
Closed-form last-layer gradients of the softmax cross-entropy loss and the
gradient-based influence scores built on them: influence functions (with a
LiSSA inverse-Hessian solver), gradient dot product, gradient cosine and
TracIn.

For a head u = W phi, the loss gradient w.r.t. W is the outer product
r phi^T of the residual r = softmax(u) - onehot(y) with the penultimate
feature phi, so every inner product between two gradients factors as
<r_a, r_b> <phi_a, phi_b>. The bias is left out of all gradient math.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from tqdm import tqdm

from label_audit import settings, trainer
from label_audit.errors import ArgumentError, SolverError, UndefinedScoreError
from label_audit.scores import ScoreTable
from label_audit.util import map_chunks

_log = logging.getLogger(__name__)

_RESIDUAL_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class LastLayerGradient:
    """The gradient r (x) phi of one example, kept in factored form."""
    id: int
    residual: np.ndarray
    feature: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'residual', np.asarray(self.residual, dtype=np.float64))
        object.__setattr__(self, 'feature', np.asarray(self.feature, dtype=np.float64))

    @property
    def norm(self):
        return float(np.linalg.norm(self.residual) * np.linalg.norm(self.feature))

    def matrix(self):
        """The explicit N x h_eff gradient."""
        return np.outer(self.residual, self.feature)

    def __neg__(self):
        return LastLayerGradient(self.id, -self.residual, self.feature)


@dataclass(frozen=True, eq=False)
class GradientBatch:
    """Factored gradients of many examples: one residual and feature row each."""
    ids: np.ndarray
    residuals: np.ndarray
    features: np.ndarray

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, i):
        return LastLayerGradient(int(self.ids[i]), self.residuals[i], self.features[i])

    def norms(self):
        return np.linalg.norm(self.residuals, axis=1) * np.linalg.norm(self.features, axis=1)

    def total(self):
        """Sum of all gradients as an N x h_eff matrix."""
        return self.residuals.T @ self.features


def _residuals(probs, labels):
    residuals = np.array(probs, dtype=np.float64)
    residuals[np.arange(len(labels)), labels] -= 1.0
    return residuals


def last_layer_gradient(checkpoint, x, label, id=0):
    """Gradient of the cross-entropy of (x, label) w.r.t. the head weights."""
    if not 0 <= label < checkpoint.num_classes:
        raise ArgumentError(f'label {label} outside 0..{checkpoint.num_classes - 1}')
    feature = trainer.penultimate(checkpoint, x)
    probs = trainer.predict_proba(checkpoint, x)
    return LastLayerGradient(id, _residuals(probs[None, :], [label])[0], feature)


def gradients_for(dataset, checkpoint):
    """Factored last-layer gradients of every row of dataset."""
    features = trainer.penultimate_batch(checkpoint, dataset.features)
    probs = trainer.predict_proba_batch(checkpoint, dataset.features)
    residuals = _residuals(probs, dataset.labels)
    if len(residuals) and np.max(np.abs(residuals.sum(axis=1))) > _RESIDUAL_TOLERANCE:
        raise ArgumentError('softmax residuals do not sum to zero')
    return GradientBatch(ids=dataset.ids, residuals=residuals, features=features)


# ---------------------------------------------------------------------------- #
# Pairwise scores


def grad_dot(a, b):
    return float(np.dot(a.residual, b.residual) * np.dot(a.feature, b.feature))


def grad_cos(a, b):
    norm = a.norm * b.norm
    if norm == 0:
        raise UndefinedScoreError(f'cosine undefined for a zero gradient ({a.id}, {b.id})')
    return float(np.clip(grad_dot(a, b) / norm, -1.0, 1.0))


def tracin(a_checkpoints, b_checkpoints, rates):
    """sum_t eta_t <g_t(a), g_t(b)> over matching epochs."""
    if not (len(a_checkpoints) == len(b_checkpoints) == len(rates)):
        raise ArgumentError('TracIn needs one gradient per epoch and one rate per epoch')
    return float(sum(lr * grad_dot(a, b)
                     for a, b, lr in zip(a_checkpoints, b_checkpoints, rates)))


def influence_function(a, b, solve, n):
    """-(1/n) g_a^T H^-1 g_b, with solve(v) approximating H^-1 v."""
    if n < 1:
        raise ArgumentError('training size must be positive')
    return float(-np.vdot(a.matrix(), solve(b.matrix())) / n)


# ---------------------------------------------------------------------------- #
# Hessian and LiSSA


@dataclass(frozen=True)
class LissaConfig:
    damping: float = settings.LISSA_DAMPING
    # None: estimated from the operator's largest eigenvalue.
    scale: Optional[float] = settings.LISSA_SCALE
    depth: int = settings.LISSA_DEPTH
    repeats: int = settings.LISSA_REPEATS
    seed: int = 0
    # Rows sampled per Hessian-vector product; None uses every row.
    batch_size: Optional[int] = None

    def validate(self):
        if self.depth < 1 or self.repeats < 1:
            raise ArgumentError('LiSSA depth and repeats must be at least 1')
        if self.damping < 0:
            raise ArgumentError('LiSSA damping must be non-negative')
        if self.scale is not None and self.scale <= 0:
            raise ArgumentError('LiSSA scale must be positive')
        if self.batch_size is not None and self.batch_size < 1:
            raise ArgumentError('LiSSA batch size must be positive')
        return self


class LastLayerHessian(object):
    """
    Damped Hessian of the mean cross-entropy w.r.t. the head weights W:
    (1/n) sum_i (diag(p_i) - p_i p_i^T) (x) phi_i phi_i^T + damping I.
    Exact for a linear softmax head.
    """
    def __init__(self, features, probs, damping=settings.LISSA_DAMPING):
        self._features = np.asarray(features, dtype=np.float64)
        self._probs = np.asarray(probs, dtype=np.float64)
        self.damping = damping

    @classmethod
    def at(cls, checkpoint, dataset, damping=settings.LISSA_DAMPING):
        return cls(trainer.penultimate_batch(checkpoint, dataset.features),
                   trainer.predict_proba_batch(checkpoint, dataset.features),
                   damping)

    @property
    def shape(self):
        return self._probs.shape[1], self._features.shape[1]

    def hvp(self, v, rng=None, batch_size=None):
        features, probs = self._features, self._probs
        if batch_size is not None and batch_size < len(features):
            rng = rng if rng is not None else np.random.default_rng()
            rows = rng.choice(len(features), size=batch_size, replace=False)
            features, probs = features[rows], probs[rows]

        projected = features @ v.T
        weighted = probs * projected
        curvature = weighted - probs * weighted.sum(axis=1, keepdims=True)
        return curvature.T @ features / len(features) + self.damping * v

    def operator(self, batch_size=None):
        return lambda v, rng: self.hvp(v, rng, batch_size)

    def dense(self):
        """The explicit (N h) x (N h) matrix, row-major over W."""
        num_classes, h = self.shape
        jacobians = (np.einsum('sa,ab->sab', self._probs, np.eye(num_classes))
                     - np.einsum('sa,sb->sab', self._probs, self._probs))
        dense = np.einsum('sab,si,sj->aibj', jacobians, self._features, self._features)
        dense = dense.reshape(num_classes * h, num_classes * h) / len(self._features)
        return dense + self.damping * np.eye(num_classes * h)

    def largest_eigenvalue(self, iterations=50, seed=0):
        """Power-iteration estimate of the damped operator's top eigenvalue."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.shape)
        v /= np.linalg.norm(v)
        value = 0.0
        for _ in range(iterations):
            w = self.hvp(v)
            value = float(np.linalg.norm(w))
            if value == 0:
                break
            v = w / value
        return value


def lissa_hvp_inverse(v, cfg, hvp):
    """
    Estimates H^-1 v by the recursion h_j = v + h_{j-1} - H h_{j-1} / scale
    started at h_1 = v, averaged over repeats and divided by scale. hvp(u,
    rng) multiplies by the damped Hessian, possibly on a random batch.
    """
    cfg.validate()
    if cfg.scale is None:
        raise ArgumentError('LiSSA scale must be set or estimated before solving')
    v = np.asarray(v, dtype=np.float64)
    limit = settings.LISSA_DIVERGENCE * max(np.linalg.norm(v), np.finfo(float).tiny)

    estimate = np.zeros_like(v)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.repeats)
    for stream in tqdm(streams, desc='lissa', disable=None, leave=False):
        rng = np.random.default_rng(stream)
        current = v.copy()
        for step in range(1, cfg.depth):
            current = v + current - hvp(current, rng) / cfg.scale
            if not np.linalg.norm(current) <= limit:
                raise SolverError(
                    f'LiSSA diverged at step {step}; increase the scale (now {cfg.scale})')
        estimate += current / cfg.scale
    return estimate / cfg.repeats


def make_solver(hessian, cfg):
    """A function v -> H^-1 v using LiSSA on the given Hessian."""
    scale = cfg.scale
    if scale is None:
        scale = 1.5 * hessian.largest_eigenvalue(seed=cfg.seed)
        _log.info('LiSSA scale estimated at %.4g', scale)
    cfg = LissaConfig(damping=cfg.damping, scale=scale, depth=cfg.depth,
                      repeats=cfg.repeats, seed=cfg.seed, batch_size=cfg.batch_size)
    operator = hessian.operator(cfg.batch_size)
    return lambda v: lissa_hvp_inverse(v, cfg, operator)


# ---------------------------------------------------------------------------- #
# Theory of the residual kernel


def theory_kernel_values(alpha, num_classes):
    """
    G for a same-label and a different-label pair of a model predicting
    alpha on the labelled class and eps = (1 - alpha)/(N - 1) elsewhere,
    and the ratio |G_same| / |G_diff|, which is N - 1.
    """
    if num_classes < 2:
        raise ArgumentError('need at least two classes')
    if not 1.0 / num_classes < alpha < 1.0:
        raise ArgumentError(f'alpha must lie in (1/N, 1), got {alpha}')
    eps = (1.0 - alpha) / (num_classes - 1)
    g_same = (1.0 - alpha) ** 2 + eps ** 2 * (num_classes - 1)
    g_diff = -eps ** 2 * num_classes
    return g_same, g_diff, abs(g_same) / abs(g_diff)


def theory_table(alphas, class_counts):
    rows = []
    for num_classes in class_counts:
        for alpha in alphas:
            if not 1.0 / num_classes < alpha < 1.0:
                continue
            g_same, g_diff, ratio = theory_kernel_values(alpha, num_classes)
            rows.append({'num_classes': num_classes, 'alpha': alpha,
                         'g_same': g_same, 'g_diff': g_diff, 'ratio': ratio})
    return rows


def empirical_g(a, b):
    """<r_a, r_b> for two probability records with their observed labels."""
    if a.num_classes != b.num_classes:
        raise ArgumentError('records disagree on the number of classes')
    r_a = _residuals(a.probs[None, :], [a.label])[0]
    r_b = _residuals(b.probs[None, :], [b.label])[0]
    return float(np.dot(r_a, r_b))


# ---------------------------------------------------------------------------- #
# Aggregation over a reference set


def _normalised(batch):
    r_norm = np.linalg.norm(batch.residuals, axis=1)
    f_norm = np.linalg.norm(batch.features, axis=1)
    zero = (r_norm == 0) | (f_norm == 0)
    with np.errstate(divide='ignore', invalid='ignore'):
        residuals = batch.residuals / r_norm[:, None]
        features = batch.features / f_norm[:, None]
    residuals[zero] = 0.0
    features[zero] = 0.0
    return GradientBatch(batch.ids, residuals, features), zero


def _bilinear(batch, matrix, threads):
    """<g_i, M> for every gradient in batch."""
    def chunk(start, stop):
        return np.einsum('ia,ia->i', batch.residuals[start:stop] @ matrix,
                         batch.features[start:stop])
    parts = map_chunks(chunk, len(batch), threads)
    return np.concatenate(parts) if parts else np.empty(0)


def aggregate_influence(train, reference, method, rates=None, solve=None,
        n_train=None, threads=1):
    """
    Scores each training gradient by the sum of its pairwise scores with
    every reference gradient. train and reference are GradientBatch objects,
    or for tracin, per-epoch lists of them with the matching rates. A more
    negative score marks a likelier label error.
    """
    if method == 'tracin':
        if rates is None or not (len(train) == len(reference) == len(rates)):
            raise ArgumentError('TracIn needs matching per-epoch gradients and rates')
        if not len(rates):
            raise ArgumentError('TracIn needs at least one epoch')
        if not len(reference[0]):
            raise ArgumentError('reference set is empty')
        scores = sum(lr * _bilinear(t, r.total(), threads)
                     for t, r, lr in zip(train, reference, rates))
        return ScoreTable(method=method, ids=train[0].ids, scores=scores)

    if not len(reference):
        raise ArgumentError('reference set is empty')

    if method == 'gd':
        scores = _bilinear(train, reference.total(), threads)
    elif method == 'gc':
        reference, zero_ref = _normalised(reference)
        if np.any(zero_ref):
            _log.warning('Skipping %d zero reference gradients', int(zero_ref.sum()))
        normalised, zero = _normalised(train)
        scores = _bilinear(normalised, reference.total(), threads)
        if np.any(zero):
            _log.warning('%d training gradients are zero; cosine undefined', int(zero.sum()))
            scores[zero] = np.nan
    elif method == 'if':
        if solve is None or n_train is None:
            raise ArgumentError('influence functions need a solver and the training size')
        scores = -_bilinear(train, solve(reference.total()), threads) / n_train
    else:
        raise ArgumentError(f'not a gradient method: {method!r}')
    return ScoreTable(method=method, ids=train.ids, scores=scores)


def score_gradients(dataset, aux, checkpoints, method, lissa=LissaConfig(), threads=1,
        selection=settings.CHECKPOINT_SELECTION):
    """
    End-to-end gradient scoring of dataset against the auxiliary set.
    IF, GD and GC use the selected checkpoint; TracIn sums epochs up to it.
    """
    best = trainer.select_checkpoint(checkpoints, selection)
    if method == 'tracin':
        epochs = [c for c in checkpoints if c.epoch <= best.epoch]
        train = [gradients_for(dataset, c) for c in epochs]
        reference = [gradients_for(aux, c) for c in epochs]
        return aggregate_influence(train, reference, method,
                                   rates=[c.learning_rate for c in epochs], threads=threads)

    train = gradients_for(dataset, best)
    reference = gradients_for(aux, best)
    if method == 'if':
        hessian = LastLayerHessian.at(best, dataset, lissa.damping)
        return aggregate_influence(train, reference, method, solve=make_solver(hessian, lissa),
                                   n_train=dataset.n, threads=threads)
    return aggregate_influence(train, reference, method, threads=threads)
