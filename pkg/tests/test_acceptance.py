# -*- coding: utf-8 -*-
#
#  test_acceptance.py
#  label_audit
#
#  Scaled-down reproductions of the detection and rectification protocol on
#  synthetic data. Run with: pytest -m slow
#

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from label_audit import data, evaluation, noise, settings, similarity
from label_audit.experiments.detection_protocol import prepare, score_methods
from label_audit.similarity import RectifyConfig, SimilarityMeasure

pytestmark = pytest.mark.slow


@pytest.fixture(scope='module')
def runs():
    return [prepare(seed) for seed in settings.SEEDS]


@pytest.fixture(scope='module')
def separable_runs():
    synth = data.SynthSpec(separation=10.0)
    return [prepare(seed, synth=synth) for seed in settings.SEEDS]


def _random_curve(run):
    return evaluation.detection_curve(evaluation.random_ranking(run.noisy.ids, run.seed),
                                      run.report, method='random')


def _mean_curves(runs, method, k=settings.N_NEIGHBOURS):
    curves = [evaluation.detection_curve(score_methods(run, [method], k)[0], run.report)
              for run in runs]
    return (evaluation.mean_curve(curves, method),
            evaluation.mean_curve([_random_curve(run) for run in runs], 'random'))


def test_similarity_detection_beats_random(runs):
    assert all(run.noisy.n == 4000 and run.aux.n == 1000 for run in runs)
    assert all(run.report.count == 400 for run in runs)
    sim, random = _mean_curves(runs, 'sim-cos')
    assert sim.at(1.0) >= 0.80
    assert sim.at(1.0) >= 5 * random.at(1.0)
    assert all(s >= r for s, r in zip(sim.accuracy, random.accuracy))


def _mean_err(runs):
    rates = []
    for run in runs:
        outcome = similarity.audit(run.noisy, run.aux, run.best,
                                   RectifyConfig(k=100, p=0.10, tau=0.8, action='rectify'))
        rates.append(evaluation.error_reduction_rate(run.noisy, outcome.dataset))
    return float(np.mean(rates))


def test_rectification_reduces_errors(runs):
    assert _mean_err(runs) >= 0.5


def test_rectification_on_separable_data(separable_runs):
    for run in separable_runs:
        distance = cdist(run.clean.features, run.clean.features, 'sqeuclidean')
        np.fill_diagonal(distance, np.inf)
        nearest = np.argmin(distance, axis=1)
        assert np.mean(run.clean.labels[nearest] == run.clean.labels) >= 0.99
    assert _mean_err(separable_runs) >= 0.9


def test_residual_kernel_ratio_of_confident_model(synthetic_splits, clean_model):
    clean, _, _ = synthetic_splits
    check = evaluation.theory_ratio_check(clean, clean_model, pairs=2000, seed=0)
    assert check.mean_confidence >= 0.9
    assert check.analytic_ratio == 7.0
    assert 3.5 <= check.empirical_ratio <= 14


def test_corrupted_points_resemble_their_true_class(runs):
    differences = []
    for run in runs:
        pair = evaluation.similarity_histograms(run.noisy, run.report, run.best,
                                                SimilarityMeasure('cos'))
        assert pair.first.total and pair.second.total
        differences.append(pair.first.mean - pair.second.mean)
    assert np.mean(differences) > 0


@pytest.mark.xfail(strict=False, reason='directional claim; not guaranteed on toy data')
def test_corrupted_points_have_smaller_features(runs):
    differences = []
    for run in runs:
        pair = evaluation.norm_histograms(run.noisy, run.report, run.best)
        differences.append(pair.first.mean - pair.second.mean)
    assert np.mean(differences) < 0


@pytest.mark.xfail(strict=False, reason='directional claim; not guaranteed on toy data')
def test_dot_similarity_gains_less_with_two_classes():
    def advantage(synth):
        runs = [prepare(seed, synth=synth, noise_spec=noise.NoiseSpec(rate=0.1), aux_size=400)
                for seed in settings.SEEDS]
        sim, random = _mean_curves(runs, 'sim-dot')
        return sim.mean() - random.mean()

    binary = advantage(data.SynthSpec(num_classes=2, per_class=2000))
    eight = advantage(data.SynthSpec(num_classes=8, per_class=500))
    assert binary < eight
