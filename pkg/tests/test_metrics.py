import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphabridge import metrics as M
from alphabridge.densities import Gaussian, grid_gaussians
from alphabridge.nets import MlpSpec, constant_net, mlp_forward

VAR = 2e-4


def test_kde_single_coincident_kernel():
    x = np.array([[0.3, -0.4]])
    assert M.kde_loglik(x, x, VAR) == pytest.approx(np.log(1 / (2 * np.pi * VAR)), abs=1e-12)
    assert np.log(1 / (2 * np.pi * VAR)) == pytest.approx(6.679, abs=1e-3)


def test_kde_far_field_floor():
    s = np.zeros((3, 2))
    x = np.array([[100 * np.sqrt(VAR), 0.0]])
    assert M.kde_loglik(s, x, VAR) == M.LL_FLOOR


def test_kde_rejects_empty():
    with pytest.raises(ValueError):
        M.kde_loglik(np.zeros((0, 2)), np.zeros((1, 2)), VAR)


def test_kde_true_samples_close_to_exact_loglik():
    mix = grid_gaussians()
    rng = np.random.default_rng(0)
    samples, held = mix.sample(5000, rng), mix.sample(5000, rng)
    exact = float(np.mean(mix.logpdf(held)))
    assert abs(M.kde_loglik(samples, held, VAR) - exact) < 0.5


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kde_exchangeable(seed):
    rng = np.random.default_rng(seed)
    s, x = rng.standard_normal((40, 2)) * 0.05, rng.standard_normal((30, 2)) * 0.05
    base = M.kde_loglik(s, x, VAR)
    perm = M.kde_loglik(s[rng.permutation(40)], x[rng.permutation(30)], VAR)
    assert perm == pytest.approx(base, rel=1e-12)


# classifier and score ---------------------------------------------------------------------


def test_classifier_reaches_full_accuracy_on_lattice():
    clf = M.mode_classifier_for(5, 2.0, VAR)
    mix = grid_gaussians()
    x = mix.sample(2000, np.random.default_rng(5))
    pred = np.argmax(mlp_forward(clf, x).data, axis=1)
    assert np.array_equal(pred, M.nearest_mode(x, mix.means))


def test_classifier_single_class():
    x = np.random.default_rng(0).standard_normal((20, 2))
    clf = M.train_mode_classifier(x, np.full(20, 3), 5, np.random.default_rng(1))
    assert np.all(np.argmax(mlp_forward(clf, x).data, axis=1) == 3)


def test_classifier_deterministic():
    mix = grid_gaussians(2, 2.0, VAR)
    x = mix.sample(200, np.random.default_rng(0))
    y = M.nearest_mode(x, mix.means)
    a = M.train_mode_classifier(x, y, 4, np.random.default_rng(3), hidden=(16, 16))
    b = M.train_mode_classifier(x, y, 4, np.random.default_rng(3), hidden=(16, 16))
    assert all(np.array_equal(u, v) for u, v in zip(a.arrays().values(), b.arrays().values()))


def test_classifier_signals_failure():
    x = np.zeros((4, 2))  # identical inputs with different labels cannot be separated
    with pytest.raises(RuntimeError):
        M.train_mode_classifier(x, np.array([0, 1, 0, 1]), 2, np.random.default_rng(0), hidden=(4,), max_iters=50)


def test_is_uniform_conditional_is_zero():
    clf = constant_net(MlpSpec(2, (4,), 25))
    assert M.inception_score(clf, np.zeros((10, 2))) == pytest.approx(0.0, abs=1e-12)


def test_is_confident_single_class_uses_floor():
    clf = constant_net(MlpSpec(2, (4,), 25))
    clf.biases[-1].data[0] = 100.0
    expect = np.log(1 / 25) + (24 / 25) * np.log(1e12)
    assert M.inception_score(clf, np.zeros((10, 2))) == pytest.approx(expect, rel=1e-9)
    assert expect == pytest.approx(23.307, abs=1e-3)


def test_is_true_data_reference():
    clf = M.mode_classifier_for(5, 2.0, VAR)
    x = grid_gaussians().sample(5000, np.random.default_rng(9))
    score = M.inception_score(clf, x)
    assert 0.0 < score < np.log(1 / 25) + (24 / 25) * np.log(1e12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_is_nonnegative(seed):
    rng = np.random.default_rng(seed)
    clf = constant_net(MlpSpec(2, (4,), 5))
    clf.weights[-1].data = rng.standard_normal((4, 5))
    clf.weights[0].data = rng.standard_normal((2, 4))
    assert M.inception_score(clf, rng.standard_normal((50, 2))) >= 0.0


# mode coverage --------------------------------------------------------------------------


def test_coverage_exact_centers():
    c = grid_gaussians().means
    assert M.mode_coverage(c, c, 0.01, 1) == 25
    assert M.mode_coverage(np.tile(c[3], (100, 1)), c, 0.01, 1) == 1


def test_coverage_true_data():
    mix = grid_gaussians()
    x = mix.sample(5000, np.random.default_rng(0))
    assert M.mode_coverage(x, mix.means, 4 * np.sqrt(VAR), 20) == 25


def test_coverage_rejects_bad_radius():
    with pytest.raises(ValueError):
        M.mode_coverage(np.zeros((1, 2)), np.zeros((1, 2)), 0.0, 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.integers(1, 30), st.integers(1, 30))
def test_coverage_monotone(seed, r1, r2, k1, k2):
    mix = grid_gaussians()
    x = mix.means[np.random.default_rng(seed).integers(0, 25, 300)] + np.random.default_rng(seed).normal(0, 0.2, (300, 2))
    lo, hi = sorted((r1, r2))
    assert M.mode_coverage(x, mix.means, lo, k1) <= M.mode_coverage(x, mix.means, hi, k1)
    a, b = sorted((k1, k2))
    assert M.mode_coverage(x, mix.means, lo, b) <= M.mode_coverage(x, mix.means, lo, a) <= 25


def test_evaluator_on_true_data():
    ev = M.Evaluator.for_lattice()
    kde, score, modes = ev.evaluate(grid_gaussians().sample(5000, np.random.default_rng(1)))
    assert modes == 25 and score > 10 and kde > 1.5


# variance study ---------------------------------------------------------------------------


def test_variance_study_equilibrium():
    q = Gaussian([0.0], [1.0])
    rep = M.variance_study((0.0, 1.0), q, [0.3, 0.7], 200, np.random.default_rng(4))
    assert np.all(rep.variances["R"]["mu"] == 0) and np.all(rep.variances["R"]["sigma"] == 0)
    assert rep.clamp_hits == 0
    # F with unit weights: -(1/(1-alpha)) * score(x), score = (x, x^2 - 1); same stream as the study
    rng = np.random.default_rng(4)
    for i, a in enumerate([0.3, 0.7]):
        x = q.sample(200, rng)[:, 0]
        rng.standard_normal((200, 1))
        expect = np.var(np.column_stack([x, x * x - 1]) / (1 - a), axis=0, ddof=1)
        np.testing.assert_allclose([rep.variances["F"]["mu"][i], rep.variances["F"]["sigma"][i]], expect, rtol=1e-10)


def test_variance_report_rows_and_nonnegative():
    rep = M.variance_study((3.0, 1.0), Gaussian([0.0], [1.0]), [0.1, 0.3, 0.5, 0.7, 0.9], 100, np.random.default_rng(0))
    rows = rep.rows()
    assert len(rows) == 2 * 3 * 5
    assert all(r[3] >= 0 for r in rows)
    assert {r[1] for r in rows} == set(M.ESTIMATORS) and {r[2] for r in rows} == set(M.PARAMS)


@pytest.mark.xfail(
    strict=True,
    reason="ratio weights are heavy-tailed: 100-trial variances of two seeds differ by more than 5x in most pairs",
)
def test_variance_study_seed_sanity_band():
    q = Gaussian([0.0], [1.0])
    alphas = [0.1, 0.3, 0.5, 0.7, 0.9]
    a = M.variance_study((1.0, 1.0), q, alphas, 100, np.random.default_rng(1))
    b = M.variance_study((1.0, 1.0), q, alphas, 100, np.random.default_rng(2))
    for e in M.ESTIMATORS:
        for p in M.PARAMS:
            ratio = a.variances[e][p] / b.variances[e][p]
            assert np.all((ratio < 5) & (ratio > 0.2)), (e, p)


def test_variance_study_needs_two_trials():
    with pytest.raises(ValueError):
        M.variance_study((1.0, 1.0), Gaussian([0.0], [1.0]), [0.5], 1, np.random.default_rng(0))
