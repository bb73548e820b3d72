# -*- coding: utf-8 -*-
#
#  conftest.py
#  label_audit
#

import numpy as np
import pytest

from label_audit import data, noise, trainer


def make_checkpoint(d=5, h=4, num_classes=3, seed=0, scale=0.5, activation='tanh'):
    """A random untrained model, for tests that need one without training."""
    rng = np.random.default_rng(seed)
    h_eff = h if h else d
    return trainer.ModelCheckpoint(
        encoder_weights=rng.standard_normal((d, h)) * scale,
        encoder_bias=rng.standard_normal(h) * scale,
        head_weights=rng.standard_normal((num_classes, h_eff)) * scale,
        head_bias=rng.standard_normal(num_classes) * scale,
        epoch=1,
        learning_rate=1e-3,
        activation=activation,
    )


def make_dataset(n=40, d=5, num_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(num_classes, size=n)
    return data.Dataset(features=rng.standard_normal((n, d)), labels=labels,
                        num_classes=num_classes, true_labels=labels)


@pytest.fixture
def small_dataset():
    return make_dataset()


@pytest.fixture(scope='session')
def synthetic_splits():
    """The default eight-class mixture: 4000 train, 2000 valid, 2000 test."""
    return data.generate_splits(data.SynthSpec(num_classes=8, dim=32, per_class=500, seed=16))


@pytest.fixture(scope='session')
def noisy_run(synthetic_splits):
    """10% uniform noise, an auxiliary set of 1000 and a model trained on the noise."""
    clean, valid, test = synthetic_splits
    noisy, report = noise.inject_uniform(clean, 0.10, seed=16)
    _, aux = data.split_aux(valid, 1000, seed=16)
    checkpoints = trainer.train(noisy, valid, trainer.ModelConfig(seed=16))
    return noisy, aux, report, checkpoints


@pytest.fixture(scope='session')
def clean_model(synthetic_splits):
    """A confident model trained on the noise-free training split."""
    clean, valid, _ = synthetic_splits
    checkpoints = trainer.train(clean, valid, trainer.ModelConfig(learning_rate=1e-2, seed=16))
    return trainer.best_checkpoint(checkpoints)
