# -*- coding: utf-8 -*-
#
#  trainer.py
#  label_audit
#

"""
A small classifier -- an optional one-layer tanh/relu encoder under a
softmax head -- trained with AdamW (or plain gradient descent), snapshotted
every epoch. Its penultimate features, probabilities and last-layer
gradients feed every scoring method.

Checkpoint file, little-endian::

    magic "LNCK" | version u32 | epoch u32 | learning rate f64 |
    validation accuracy f64 | d u64 | h u64 | N u64 | activation u32 | pad u32
    f64 encoder weights (d*h) | encoder bias (h) | head weights (N*h_eff) |
    head bias (N)
"""

import glob
import logging
import os
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.special import log_softmax, softmax
from tqdm import tqdm

from label_audit import settings
from label_audit.errors import ArgumentError, FormatError, TrainingError

_log = logging.getLogger(__name__)

ACTIVATIONS = ('tanh', 'relu')
OPTIMIZERS = ('adamw', 'sgd')
SCHEDULES = ('constant', 'linear')
SELECTIONS = ('best', 'last')

MAGIC = b'LNCK'
VERSION = 1

_HEADER = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('epoch', '<u4'),
    ('learning_rate', '<f8'),
    ('val_accuracy', '<f8'),
    ('d', '<u8'),
    ('h', '<u8'),
    ('num_classes', '<u8'),
    ('activation', '<u4'),
    ('pad', '<u4'),
])


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = settings.HIDDEN_DIM
    activation: str = settings.ACTIVATION
    epochs: int = settings.EPOCHS
    batch_size: int = settings.BATCH_SIZE
    learning_rate: float = settings.LEARNING_RATE
    lr_schedule: str = settings.LR_SCHEDULE
    # Explicit per-epoch rates; overrides learning_rate and lr_schedule.
    schedule: Optional[Tuple[float, ...]] = None
    weight_decay: float = settings.WEIGHT_DECAY
    betas: Tuple[float, float] = settings.BETAS
    eps: float = settings.ADAM_EPS
    optimizer: str = settings.OPTIMIZER
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ArgumentError('epochs must be at least 1')
        if self.batch_size < 1:
            raise ArgumentError('batch size must be at least 1')
        if self.hidden_dim < 0:
            raise ArgumentError('hidden dim must be non-negative')
        if self.activation not in ACTIVATIONS:
            raise ArgumentError(f'unknown activation {self.activation!r}')
        if self.optimizer not in OPTIMIZERS:
            raise ArgumentError(f'unknown optimizer {self.optimizer!r}')
        if self.lr_schedule not in SCHEDULES:
            raise ArgumentError(f'unknown learning-rate schedule {self.lr_schedule!r}')
        rates = self.learning_rates()
        if len(rates) != self.epochs or min(rates) <= 0:
            raise ArgumentError('need one positive learning rate per epoch')
        return self

    def learning_rates(self):
        """eta_t for t = 1..T."""
        if self.schedule is not None:
            return tuple(float(r) for r in self.schedule)
        if self.lr_schedule == 'linear':
            return tuple(self.learning_rate * (1 - t / self.epochs) for t in range(self.epochs))
        return (float(self.learning_rate),) * self.epochs

    def with_seed(self, seed):
        return replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class ModelCheckpoint:
    encoder_weights: np.ndarray
    encoder_bias: np.ndarray
    head_weights: np.ndarray
    head_bias: np.ndarray
    epoch: int
    learning_rate: float
    val_accuracy: float = float('nan')
    activation: str = settings.ACTIVATION

    def __post_init__(self):
        for name in ('encoder_weights', 'encoder_bias', 'head_weights', 'head_bias'):
            array = np.array(getattr(self, name), dtype=np.float64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if self.encoder_weights.shape != (self.input_dim, self.hidden_dim):
            raise ArgumentError('encoder weights must be d x h')
        if self.encoder_bias.shape != (self.hidden_dim,):
            raise ArgumentError('encoder bias must have length h')
        if self.head_weights.shape != (self.num_classes, self.feature_dim):
            raise ArgumentError(
                f'head weights must be N x h_eff = {self.num_classes} x {self.feature_dim}')
        if self.head_bias.shape != (self.num_classes,):
            raise ArgumentError('head bias must have length N')

    @property
    def input_dim(self):
        return self.encoder_weights.shape[0]

    @property
    def hidden_dim(self):
        return self.encoder_weights.shape[1]

    @property
    def feature_dim(self):
        return self.hidden_dim if self.hidden_dim else self.input_dim

    @property
    def num_classes(self):
        return self.head_weights.shape[0]

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in (
            self.encoder_weights, self.encoder_bias, self.head_weights, self.head_bias))


# ---------------------------------------------------------------------------- #
# Forward pass


def _activate(pre, activation):
    if activation == 'tanh':
        return np.tanh(pre)
    return np.maximum(pre, 0.0)


def _check_inputs(checkpoint, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != checkpoint.input_dim:
        raise ArgumentError(
            f'input has dimension {x.shape[-1]}, model expects {checkpoint.input_dim}')
    return x


def penultimate_batch(checkpoint, features):
    """Rows of penultimate features; the raw input when h = 0."""
    x = _check_inputs(checkpoint, np.atleast_2d(features))
    if not checkpoint.hidden_dim:
        return x.copy()
    return _activate(x @ checkpoint.encoder_weights + checkpoint.encoder_bias,
                     checkpoint.activation)


def penultimate(checkpoint, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ArgumentError('penultimate() takes a single input vector')
    return penultimate_batch(checkpoint, x[None, :])[0]


def logits_batch(checkpoint, features):
    phi = penultimate_batch(checkpoint, features)
    return phi @ checkpoint.head_weights.T + checkpoint.head_bias


def predict_proba_batch(checkpoint, features):
    return softmax(logits_batch(checkpoint, features), axis=1)


def predict_proba(checkpoint, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ArgumentError('predict_proba() takes a single input vector')
    return predict_proba_batch(checkpoint, x[None, :])[0]


def accuracy(checkpoint, dataset):
    """Share of rows whose predicted class equals the observed label."""
    if not dataset.n:
        return float('nan')
    predicted = np.argmax(logits_batch(checkpoint, dataset.features), axis=1)
    return float(np.mean(predicted == dataset.labels))


def cross_entropy(checkpoint, dataset):
    """Mean cross-entropy of the observed labels."""
    log_p = log_softmax(logits_batch(checkpoint, dataset.features), axis=1)
    return float(-np.mean(log_p[np.arange(dataset.n), dataset.labels]))


# ---------------------------------------------------------------------------- #
# Training


def _init_params(d, h, num_classes, rng):
    h_eff = h if h else d
    return {
        'encoder_weights': rng.standard_normal((d, h)) * np.sqrt(2.0 / (d + h)) if h else np.zeros((d, 0)),
        'encoder_bias': np.zeros(h),
        'head_weights': rng.standard_normal((num_classes, h_eff)) * np.sqrt(2.0 / (num_classes + h_eff)),
        'head_bias': np.zeros(num_classes),
    }


def _snapshot(params, epoch, lr, activation, val_accuracy=float('nan')):
    return ModelCheckpoint(epoch=epoch, learning_rate=lr, val_accuracy=val_accuracy,
                           activation=activation, **params)


def loss_and_grads(params, x, labels, activation):
    """Mean cross-entropy over a batch and its gradient for every parameter."""
    h = params['encoder_weights'].shape[1]
    if h:
        hidden = _activate(x @ params['encoder_weights'] + params['encoder_bias'], activation)
    else:
        hidden = x
    logits = hidden @ params['head_weights'].T + params['head_bias']
    log_p = log_softmax(logits, axis=1)

    rows = np.arange(len(labels))
    loss = -np.mean(log_p[rows, labels])

    residual = np.exp(log_p)
    residual[rows, labels] -= 1.0
    residual /= len(labels)

    grads = {
        'head_weights': residual.T @ hidden,
        'head_bias': residual.sum(axis=0),
        'encoder_weights': np.zeros_like(params['encoder_weights']),
        'encoder_bias': np.zeros_like(params['encoder_bias']),
    }
    if h:
        d_hidden = residual @ params['head_weights']
        if activation == 'tanh':
            d_pre = d_hidden * (1.0 - hidden ** 2)
        else:
            d_pre = d_hidden * (hidden > 0)
        grads['encoder_weights'] = x.T @ d_pre
        grads['encoder_bias'] = d_pre.sum(axis=0)
    return loss, grads


class _AdamW(object):
    """Adam with weight decay decoupled from the gradient, on weight matrices."""
    _decayed = ('encoder_weights', 'head_weights')

    def __init__(self, params, betas, eps, weight_decay):
        self._beta1, self._beta2 = betas
        self._eps = eps
        self._weight_decay = weight_decay
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}
        self._step = 0

    def step(self, params, grads, lr):
        self._step += 1
        c1 = 1 - self._beta1 ** self._step
        c2 = 1 - self._beta2 ** self._step
        for key, grad in grads.items():
            self._m[key] = self._beta1 * self._m[key] + (1 - self._beta1) * grad
            self._v[key] = self._beta2 * self._v[key] + (1 - self._beta2) * grad ** 2
            if key in self._decayed:
                params[key] -= lr * self._weight_decay * params[key]
            params[key] -= lr * (self._m[key] / c1) / (np.sqrt(self._v[key] / c2) + self._eps)


class _SGD(object):
    def __init__(self, weight_decay):
        self._weight_decay = weight_decay

    def step(self, params, grads, lr):
        for key, grad in grads.items():
            params[key] -= lr * (grad + self._weight_decay * params[key])


def train(dataset, valid, cfg=ModelConfig()):
    """
    Trains on dataset and returns one checkpoint per epoch, each carrying
    its accuracy on valid. Deterministic given cfg.seed.
    """
    cfg.validate()
    if dataset.dim != valid.dim or dataset.num_classes != valid.num_classes:
        raise ArgumentError('training and validation sets differ in dimension or classes')
    if not dataset.n:
        raise ArgumentError('cannot train on an empty dataset')

    rng = np.random.default_rng(cfg.seed)
    params = _init_params(dataset.dim, cfg.hidden_dim, dataset.num_classes, rng)
    if cfg.optimizer == 'adamw':
        optimizer = _AdamW(params, cfg.betas, cfg.eps, cfg.weight_decay)
    else:
        optimizer = _SGD(cfg.weight_decay)

    x, labels = dataset.features, dataset.labels
    checkpoints = []
    rates = cfg.learning_rates()
    for epoch in tqdm(range(1, cfg.epochs + 1), desc='training', disable=None, leave=False):
        lr = rates[epoch - 1]
        order = rng.permutation(dataset.n)
        for start in range(0, dataset.n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(params, x[batch], labels[batch], cfg.activation)
            if not np.isfinite(loss):
                raise TrainingError(epoch)
            optimizer.step(params, grads, lr)

        checkpoint = _snapshot(params, epoch, lr, cfg.activation)
        if not checkpoint.is_finite():
            raise TrainingError(epoch, f'non-finite weights after epoch {epoch}')
        train_loss = cross_entropy(checkpoint, dataset)
        if not np.isfinite(train_loss):
            raise TrainingError(epoch)

        checkpoint = replace(checkpoint, val_accuracy=accuracy(checkpoint, valid))
        checkpoints.append(checkpoint)
        _log.info('epoch %d: lr %.3g, train loss %.4f, valid acc %.4f',
                  epoch, lr, train_loss, checkpoint.val_accuracy)

    return checkpoints


def best_checkpoint(checkpoints):
    """Highest validation accuracy; the earliest epoch wins ties."""
    if not checkpoints:
        raise ArgumentError('no checkpoints to choose from')
    return max(checkpoints, key=lambda c: (c.val_accuracy, -c.epoch))


def select_checkpoint(checkpoints, which=settings.CHECKPOINT_SELECTION):
    """The best-on-validation checkpoint, or the last epoch's."""
    if which not in SELECTIONS:
        raise ArgumentError(f'unknown checkpoint selection {which!r}; choose from {SELECTIONS}')
    if which == 'last':
        if not checkpoints:
            raise ArgumentError('no checkpoints to choose from')
        return max(checkpoints, key=lambda c: c.epoch)
    return best_checkpoint(checkpoints)


# ---------------------------------------------------------------------------- #
# Checkpoint files


def checkpoint_filename(epoch):
    return f'epoch_{epoch:03}.ckpt'


def save_checkpoint(checkpoint, path):
    header = np.zeros(1, dtype=_HEADER)
    header['magic'] = MAGIC
    header['version'] = VERSION
    header['epoch'] = checkpoint.epoch
    header['learning_rate'] = checkpoint.learning_rate
    header['val_accuracy'] = checkpoint.val_accuracy
    header['d'] = checkpoint.input_dim
    header['h'] = checkpoint.hidden_dim
    header['num_classes'] = checkpoint.num_classes
    header['activation'] = ACTIVATIONS.index(checkpoint.activation)

    with open(path, 'wb') as ostream:
        ostream.write(header.tobytes())
        for array in (checkpoint.encoder_weights, checkpoint.encoder_bias,
                      checkpoint.head_weights, checkpoint.head_bias):
            ostream.write(array.astype('<f8').tobytes())


def load_checkpoint(path):
    with open(path, 'rb') as istream:
        raw = istream.read()
    if len(raw) < _HEADER.itemsize:
        raise FormatError(f'{path}: truncated checkpoint header')
    header = np.frombuffer(raw, dtype=_HEADER, count=1)[0]
    if header['magic'] != MAGIC:
        raise FormatError(f'{path}: bad magic {bytes(header["magic"])!r}')
    if header['version'] != VERSION:
        raise FormatError(f'{path}: unsupported version {header["version"]}')
    if header['activation'] >= len(ACTIVATIONS):
        raise FormatError(f'{path}: unknown activation code {header["activation"]}')

    d, h, num_classes = int(header['d']), int(header['h']), int(header['num_classes'])
    h_eff = h if h else d
    shapes = [(d, h), (h,), (num_classes, h_eff), (num_classes,)]
    expected = _HEADER.itemsize + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(raw) != expected:
        raise FormatError(f'{path}: expected {expected} bytes, found {len(raw)}')

    arrays, offset = [], _HEADER.itemsize
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(raw, dtype='<f8', count=count, offset=offset).reshape(shape))
        offset += 8 * count

    return ModelCheckpoint(
        encoder_weights=arrays[0],
        encoder_bias=arrays[1],
        head_weights=arrays[2],
        head_bias=arrays[3],
        epoch=int(header['epoch']),
        learning_rate=float(header['learning_rate']),
        val_accuracy=float(header['val_accuracy']),
        activation=ACTIVATIONS[int(header['activation'])],
    )


def save_checkpoints(checkpoints, directory):
    """Replaces any epoch checkpoints already in directory."""
    os.makedirs(directory, exist_ok=True)
    for stale in glob.glob(os.path.join(directory, 'epoch_*.ckpt')):
        os.remove(stale)
    for checkpoint in checkpoints:
        save_checkpoint(checkpoint, os.path.join(directory, checkpoint_filename(checkpoint.epoch)))


def load_checkpoints(directory):
    """All epoch checkpoints in a directory, in epoch order."""
    paths = sorted(glob.glob(os.path.join(directory, 'epoch_*.ckpt')))
    if not paths:
        raise ArgumentError(f'no checkpoints found in {directory}')
    return sorted((load_checkpoint(p) for p in paths), key=lambda c: c.epoch)
