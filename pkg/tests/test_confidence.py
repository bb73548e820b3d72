# -*- coding: utf-8 -*-
#
#  test_confidence.py
#  label_audit
#

import numpy as np
import pytest

from conftest import make_checkpoint, make_dataset
from label_audit import confidence, trainer
from label_audit.confidence import ProbRecord
from label_audit.errors import ArgumentError

P = (0.7, 0.2, 0.1)


def test_self_confidence():
    assert confidence.self_confidence(ProbRecord(0, 0, P)) == pytest.approx(0.7, abs=1e-9)
    assert confidence.self_confidence(ProbRecord(0, 2, [0.25] * 4)) == pytest.approx(0.25)
    assert confidence.self_confidence(ProbRecord(0, 1, [0, 1, 0])) == 1.0


def test_normalized_margin():
    assert confidence.normalized_margin(ProbRecord(0, 0, P)) == pytest.approx(0.5, abs=1e-9)
    assert confidence.normalized_margin(ProbRecord(0, 0, (0.2, 0.7, 0.1))) == \
        pytest.approx(-0.5, abs=1e-9)
    assert confidence.normalized_margin(ProbRecord(0, 1, [0, 1, 0])) == 1.0


def test_single_class_is_rejected():
    with pytest.raises(ArgumentError):
        confidence.normalized_margin(ProbRecord(0, 0, [1.0]))
    with pytest.raises(ArgumentError):
        confidence.confidence_weighted_entropy(ProbRecord(0, 0, [1.0]))


def test_confidence_weighted_entropy():
    assert confidence.confidence_weighted_entropy(ProbRecord(0, 3, [0.2] * 5)) == \
        pytest.approx(0.2, abs=1e-9)
    entropy = -sum(p * np.log(p) for p in P) / np.log(3)
    assert entropy == pytest.approx(0.72985, abs=1e-5)
    assert confidence.confidence_weighted_entropy(ProbRecord(0, 0, P)) == \
        pytest.approx(0.7 / entropy, abs=1e-9)
    assert confidence.confidence_weighted_entropy(ProbRecord(0, 0, P)) == \
        pytest.approx(0.9591, abs=1e-4)


def test_one_hot_entropy_scores_maximum():
    assert confidence.confidence_weighted_entropy(ProbRecord(0, 1, [0, 1, 0])) == \
        confidence.MAX_SCORE


def test_invalid_distribution():
    with pytest.raises(ArgumentError):
        ProbRecord(0, 0, [0.5, 0.6])
    with pytest.raises(ArgumentError):
        ProbRecord(0, 3, [0.5, 0.5])


def test_scores_invariant_to_permuting_other_classes():
    p = np.array([0.1, 0.5, 0.15, 0.25])
    q = p[[0, 1, 3, 2]]
    for score in (confidence.self_confidence, confidence.normalized_margin,
                  confidence.confidence_weighted_entropy):
        assert score(ProbRecord(0, 1, p)) == pytest.approx(score(ProbRecord(0, 1, q)), abs=1e-12)


def test_relabelling_to_argmax_never_lowers_scores():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p = rng.dirichlet(np.ones(5))
        label = rng.integers(5)
        best = int(np.argmax(p))
        for score in (confidence.self_confidence, confidence.normalized_margin,
                      confidence.confidence_weighted_entropy):
            assert score(ProbRecord(0, best, p)) >= score(ProbRecord(0, label, p))


def test_entropy_bounds():
    rng = np.random.default_rng(0)
    h = confidence.normalized_entropy(rng.dirichlet(np.ones(6), size=100))
    assert np.all((h >= 0) & (h <= 1 + 1e-12))


@pytest.mark.parametrize('method,score', [
    ('sc', confidence.self_confidence),
    ('nm', confidence.normalized_margin),
    ('ce', confidence.confidence_weighted_entropy),
])
def test_batch_scores_match_records(method, score):
    dataset = make_dataset(n=30)
    checkpoint = make_checkpoint()
    table = confidence.score_confidence(dataset, checkpoint, method)
    probs = trainer.predict_proba_batch(checkpoint, dataset.features)
    expected = [score(ProbRecord(i, y, p)) for i, y, p in zip(dataset.ids, dataset.labels, probs)]
    np.testing.assert_allclose(table.scores, expected, rtol=1e-12)
    assert table.method == method


def test_threads_do_not_change_scores():
    dataset = make_dataset(n=1500)
    checkpoint = make_checkpoint()
    one = confidence.score_confidence(dataset, checkpoint, 'ce', threads=1)
    four = confidence.score_confidence(dataset, checkpoint, 'ce', threads=4)
    np.testing.assert_array_equal(one.scores, four.scores)
