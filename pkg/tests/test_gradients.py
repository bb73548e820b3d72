# -*- coding: utf-8 -*-
#
#  test_gradients.py
#  label_audit
#

import numpy as np
import pytest
from scipy.special import log_softmax

from conftest import make_checkpoint, make_dataset
from label_audit import gradients, trainer
from label_audit.confidence import ProbRecord
from label_audit.errors import ArgumentError, SolverError, UndefinedScoreError
from label_audit.gradients import LastLayerGradient, LissaConfig


def _random_gradient(rng, num_classes=4, h=6, id=0):
    probs = rng.dirichlet(np.ones(num_classes))
    label = rng.integers(num_classes)
    residual = probs.copy()
    residual[label] -= 1.0
    return LastLayerGradient(id, residual, rng.standard_normal(h))


def test_residual_by_hand():
    checkpoint = trainer.ModelCheckpoint(np.zeros((1, 0)), np.zeros(0), np.zeros((3, 1)),
                                         np.log([0.7, 0.2, 0.1]), epoch=1, learning_rate=1e-3)
    g = gradients.last_layer_gradient(checkpoint, [2.0], 0)
    np.testing.assert_allclose(g.residual, [-0.3, 0.2, 0.1], atol=1e-12)
    np.testing.assert_allclose(g.feature, [2.0])


def test_confident_prediction_has_zero_gradient():
    g = LastLayerGradient(0, np.zeros(3), np.ones(4))
    assert g.norm == 0
    np.testing.assert_array_equal(g.matrix(), np.zeros((3, 4)))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    for trial in range(100):
        checkpoint = make_checkpoint(d=4, h=3, num_classes=3, seed=trial, scale=1.0)
        x = rng.standard_normal(4)
        label = int(rng.integers(3))
        analytic = gradients.last_layer_gradient(checkpoint, x, label).matrix()

        phi = trainer.penultimate(checkpoint, x)
        numeric = np.zeros_like(analytic)
        for index in np.ndindex(analytic.shape):
            for sign in (1, -1):
                weights = np.array(checkpoint.head_weights)
                weights[index] += sign * 1e-5
                loss = -log_softmax(weights @ phi + checkpoint.head_bias)[label]
                numeric[index] += sign * loss / 2e-5
        error = np.linalg.norm(numeric - analytic) / np.linalg.norm(analytic)
        assert error <= 1e-5


def test_norm_is_product_of_norms():
    rng = np.random.default_rng(1)
    for _ in range(20):
        g = _random_gradient(rng)
        assert g.norm == pytest.approx(np.linalg.norm(g.matrix()), rel=1e-12)


def test_factored_dot_matches_flattened():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = _random_gradient(rng), _random_gradient(rng)
        assert gradients.grad_dot(a, b) == pytest.approx(
            float(a.matrix().ravel() @ b.matrix().ravel()), abs=1e-10)


def test_self_dot_and_orthogonal_residuals():
    rng = np.random.default_rng(3)
    a = _random_gradient(rng)
    assert gradients.grad_dot(a, a) == pytest.approx(
        np.dot(a.residual, a.residual) * np.dot(a.feature, a.feature))
    b = LastLayerGradient(1, np.array([1.0, -1.0, 0.0]), rng.standard_normal(6))
    c = LastLayerGradient(2, np.array([1.0, 1.0, -2.0]), rng.standard_normal(6))
    assert gradients.grad_dot(b, c) == 0.0


def test_cosine_identities():
    rng = np.random.default_rng(4)
    a, b = _random_gradient(rng), _random_gradient(rng)
    assert gradients.grad_cos(a, a) == pytest.approx(1.0)
    assert gradients.grad_cos(a, -a) == pytest.approx(-1.0)
    scaled = LastLayerGradient(b.id, b.residual, 7.5 * b.feature)
    assert gradients.grad_cos(a, scaled) == pytest.approx(gradients.grad_cos(a, b), abs=1e-12)


def test_cosine_of_zero_gradient():
    rng = np.random.default_rng(5)
    with pytest.raises(UndefinedScoreError):
        gradients.grad_cos(_random_gradient(rng), LastLayerGradient(1, np.zeros(4), np.ones(6)))


def test_tracin_identities():
    rng = np.random.default_rng(6)
    a = [_random_gradient(rng) for _ in range(3)]
    b = [_random_gradient(rng) for _ in range(3)]
    rates = [0.1, 0.05, 0.01]
    assert gradients.tracin(a[:1], b[:1], rates[:1]) == 0.1 * gradients.grad_dot(a[0], b[0])
    assert gradients.tracin(a, b, [2 * r for r in rates]) == \
        pytest.approx(2 * gradients.tracin(a, b, rates))
    zero = [LastLayerGradient(0, np.zeros(4), np.zeros(6))] * 3
    assert gradients.tracin(zero, zero, rates) == 0.0
    with pytest.raises(ArgumentError):
        gradients.tracin(a, b[:2], rates)


def test_influence_with_identity_hessian():
    rng = np.random.default_rng(7)
    a, b = _random_gradient(rng), _random_gradient(rng)
    assert gradients.influence_function(a, b, lambda v: v, 50) == \
        pytest.approx(-gradients.grad_dot(a, b) / 50, abs=1e-10)


def _tiny_hessian(damping=0.1, seed=0):
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((40, 4)) * 0.5
    probs = rng.dirichlet(np.ones(3), size=40)
    return gradients.LastLayerHessian(features, probs, damping)


def test_hvp_matches_dense():
    hessian = _tiny_hessian()
    v = np.random.default_rng(1).standard_normal((3, 4))
    np.testing.assert_allclose(hessian.hvp(v).ravel(), hessian.dense() @ v.ravel(), atol=1e-12)


def test_lissa_matches_dense_solve():
    hessian = _tiny_hessian()
    v = np.random.default_rng(2).standard_normal((3, 4))
    scale = 1.5 * np.linalg.eigvalsh(hessian.dense()).max()
    solution = gradients.lissa_hvp_inverse(
        v, LissaConfig(damping=0.1, scale=scale, depth=500), hessian.operator())
    exact = np.linalg.solve(hessian.dense(), v.ravel())
    assert np.linalg.norm(solution.ravel() - exact) <= 1e-2 * np.linalg.norm(exact)


def test_solver_with_estimated_scale():
    hessian = _tiny_hessian()
    v = np.random.default_rng(3).standard_normal((3, 4))
    solve = gradients.make_solver(hessian, LissaConfig(damping=0.1, depth=2000))
    exact = np.linalg.solve(hessian.dense(), v.ravel())
    assert np.linalg.norm(solve(v).ravel() - exact) <= 1e-2 * np.linalg.norm(exact)


def test_lissa_identity_and_base_case():
    identity = gradients.LastLayerHessian(np.zeros((5, 2)), np.full((5, 3), 1 / 3), damping=1.0)
    v = np.arange(6.0).reshape(3, 2)
    np.testing.assert_allclose(
        gradients.lissa_hvp_inverse(v, LissaConfig(damping=1.0, scale=1.0, depth=50),
                                    identity.operator()), v, atol=1e-6)
    np.testing.assert_array_equal(
        gradients.lissa_hvp_inverse(v, LissaConfig(scale=4.0, depth=1), identity.operator()),
        v / 4.0)


def test_lissa_divergence():
    hessian = _tiny_hessian()
    scale = 0.1 * np.linalg.eigvalsh(hessian.dense()).max()
    with pytest.raises(SolverError):
        gradients.lissa_hvp_inverse(np.ones((3, 4)), LissaConfig(scale=scale, depth=1000),
                                    hessian.operator())


def test_self_influence_is_not_positive():
    hessian = _tiny_hessian()
    solve = lambda v: np.linalg.solve(hessian.dense(), v.ravel()).reshape(v.shape)  # noqa: E731
    rng = np.random.default_rng(8)
    for _ in range(10):
        a = _random_gradient(rng, num_classes=3, h=4)
        assert gradients.influence_function(a, a, solve, 40) <= 0


@pytest.mark.parametrize('num_classes', [2, 3, 8, 100])
@pytest.mark.parametrize('alpha', [0.5, 0.9, 0.99])
def test_kernel_ratio_is_classes_minus_one(num_classes, alpha):
    if alpha <= 1 / num_classes:
        pytest.skip('alpha must exceed chance')
    _, _, ratio = gradients.theory_kernel_values(alpha, num_classes)
    assert ratio == pytest.approx(num_classes - 1, abs=1e-12 * num_classes)


def test_kernel_values_by_hand():
    g_same, g_diff, ratio = gradients.theory_kernel_values(0.93, 8)
    assert g_same == pytest.approx(0.0056, abs=1e-12)
    assert g_diff == pytest.approx(-0.0008, abs=1e-12)
    assert ratio == pytest.approx(7.0, abs=1e-9)


def test_kernel_values_reject_chance_alpha():
    with pytest.raises(ArgumentError):
        gradients.theory_kernel_values(0.5, 2)


def _idealised(label, alpha, num_classes):
    probs = np.full(num_classes, (1 - alpha) / (num_classes - 1))
    probs[label] = alpha
    return ProbRecord(0, label, probs)


@pytest.mark.parametrize('num_classes,alpha', [(8, 0.93), (3, 0.9), (2, 0.99), (100, 0.5)])
def test_empirical_g_reproduces_idealised_values(num_classes, alpha):
    g_same, g_diff, _ = gradients.theory_kernel_values(alpha, num_classes)
    a, b = _idealised(0, alpha, num_classes), _idealised(1, alpha, num_classes)
    assert gradients.empirical_g(a, a) == pytest.approx(g_same, abs=1e-12)
    assert gradients.empirical_g(a, b) == pytest.approx(g_diff, abs=1e-12)


def test_empirical_g_term_by_term():
    rng = np.random.default_rng(9)
    p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
    k = 2
    expected = (p[k] - 1) * (q[k] - 1) + sum(p[j] * q[j] for j in range(5) if j != k)
    assert gradients.empirical_g(ProbRecord(0, k, p), ProbRecord(1, k, q)) == \
        pytest.approx(expected, abs=1e-12)
    one_hot = ProbRecord(0, 1, [0, 1, 0])
    assert gradients.empirical_g(one_hot, one_hot) == 0.0


def test_aggregate_single_reference_equals_pairwise():
    dataset = make_dataset(n=10)
    checkpoint = make_checkpoint()
    train = gradients.gradients_for(dataset, checkpoint)
    reference = gradients.gradients_for(dataset.subset([4]), checkpoint)
    table = gradients.aggregate_influence(train, reference, 'gd')
    expected = [gradients.grad_dot(train[i], reference[0]) for i in range(len(train))]
    np.testing.assert_allclose(table.scores, expected, atol=1e-12)

    table = gradients.aggregate_influence(train, reference, 'gc')
    expected = [gradients.grad_cos(train[i], reference[0]) for i in range(len(train))]
    np.testing.assert_allclose(table.scores, expected, atol=1e-12)


def test_aggregate_zero_reference_scores_zero():
    dataset = make_dataset(n=10)
    train = gradients.gradients_for(dataset, make_checkpoint())
    zero = gradients.GradientBatch(np.arange(3), np.zeros((3, 3)), np.zeros((3, 4)))
    np.testing.assert_array_equal(gradients.aggregate_influence(train, zero, 'gd').scores, 0)
    np.testing.assert_array_equal(
        gradients.aggregate_influence([train], [zero], 'tracin', rates=[0.1]).scores, 0)


def test_aggregate_empty_reference():
    dataset = make_dataset(n=10)
    train = gradients.gradients_for(dataset, make_checkpoint())
    empty = gradients.GradientBatch(np.empty(0, dtype=np.int64), np.empty((0, 3)),
                                    np.empty((0, 4)))
    with pytest.raises(ArgumentError):
        gradients.aggregate_influence(train, empty, 'gd')


def test_tracin_with_one_checkpoint_is_scaled_gd():
    dataset = make_dataset(n=20)
    checkpoint = make_checkpoint()
    train = gradients.gradients_for(dataset, checkpoint)
    reference = gradients.gradients_for(make_dataset(n=8, seed=1), checkpoint)
    gd = gradients.aggregate_influence(train, reference, 'gd')
    tracin = gradients.aggregate_influence([train], [reference], 'tracin', rates=[0.01])
    np.testing.assert_array_equal(tracin.scores, 0.01 * gd.scores)


def test_influence_with_identity_solver_is_scaled_gd():
    dataset = make_dataset(n=20)
    checkpoint = make_checkpoint()
    train = gradients.gradients_for(dataset, checkpoint)
    reference = gradients.gradients_for(make_dataset(n=8, seed=1), checkpoint)
    gd = gradients.aggregate_influence(train, reference, 'gd')
    influence = gradients.aggregate_influence(train, reference, 'if',
                                              solve=lambda v: v, n_train=20)
    np.testing.assert_allclose(influence.scores, -gd.scores / 20, atol=1e-10)


def test_residuals_sum_to_zero():
    batch = gradients.gradients_for(make_dataset(n=30), make_checkpoint())
    np.testing.assert_allclose(batch.residuals.sum(axis=1), 0, atol=1e-12)


def test_gd_scores_flag_corrupted_points(noisy_run):
    noisy, aux, report, checkpoints = noisy_run
    table = gradients.score_gradients(noisy, aux, checkpoints, 'gd')
    corrupted = report.corrupted_mask(table.ids)
    assert table.scores[corrupted].mean() < table.scores[~corrupted].mean()


def test_gradient_threads_do_not_change_scores(noisy_run):
    noisy, aux, _, checkpoints = noisy_run
    one = gradients.score_gradients(noisy, aux, checkpoints, 'gc', threads=1)
    four = gradients.score_gradients(noisy, aux, checkpoints, 'gc', threads=4)
    np.testing.assert_allclose(one.scores, four.scores, rtol=0, atol=1e-12)
