import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphabridge import densities as D
from alphabridge.densities import Gaussian, GaussianMixture

STD = Gaussian([0.0], [1.0])


def g1(mu, var):
    return Gaussian([mu], [var])


def test_standard_normal_mode():
    assert D.logpdf(STD, 0.0)[0] == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)


def test_degenerate_mixture_equals_component():
    mix = GaussianMixture([0.5, 0.5], [[0.0], [0.0]], [1.0, 1.0])
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(mix.logpdf(x), STD.logpdf(x), atol=1e-14)


def test_lattice_density_normalizes():
    mix = D.grid_gaussians()
    # integrate each component's neighbourhood on a fine grid; tails beyond 8 sigma are negligible
    s = np.sqrt(2e-4)
    u = np.linspace(-8 * s, 8 * s, 401)
    h = u[1] - u[0]
    total = 0.0
    for c in mix.means:
        xx, yy = np.meshgrid(c[0] + u, c[1] + u)
        p = np.exp(mix.logpdf(np.column_stack([xx.ravel(), yy.ravel()])))
        total += p.sum() * h * h
    assert abs(total - 1.0) < 1e-4


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        Gaussian([0.0, 0.0], [1.0, 1.0]).logpdf(np.zeros((3, 3)))


def test_mixture_weights_validated():
    with pytest.raises(ValueError):
        GaussianMixture([0.5, 0.6], [[0.0], [1.0]], [1.0, 1.0])
    with pytest.raises(ValueError):
        GaussianMixture([], np.zeros((0, 1)), [])


def test_sample_moments():
    x = D.sample(STD, 10**6, np.random.default_rng(0))
    assert abs(x.mean()) < 0.005 and abs(x.var() - 1.0) < 0.01


def test_sample_degenerate_weights():
    mix = GaussianMixture([1.0, 0.0], [[-5.0], [5.0]], [0.01, 0.01])
    _, labels = mix.sample_with_labels(1000, np.random.default_rng(0))
    assert (labels == 0).all()


def test_sample_deterministic():
    mix = D.grid_gaussians()
    a = D.sample(mix, 100, np.random.default_rng(7))
    b = D.sample(mix, 100, np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_sample_rejects_empty():
    with pytest.raises(ValueError):
        D.sample(STD, 0, np.random.default_rng(0))


# closed forms -------------------------------------------------------------------------------


def test_kl_identity():
    assert D.kl_gaussian(STD, STD) == 0.0


def test_kl_shifted_mean():
    p = g1(3.0, 1.0)
    assert D.kl_gaussian(p, STD) == pytest.approx(4.5, abs=1e-14)
    # quadrature cross-check of the same integral
    x = np.linspace(-12, 15, 2**15 + 1)
    lp, lq = p.logpdf(x), STD.logpdf(x)
    kl = np.trapezoid(np.exp(lp) * (lp - lq), x)
    assert kl == pytest.approx(4.5, abs=1e-9)


def test_kl_scaled_variance():
    assert D.kl_gaussian(g1(0.0, 4.0), STD) == pytest.approx((4 - 1 - np.log(4)) / 2, abs=1e-14)


@given(st.floats(0.01, 0.99))
def test_alpha_div_identical_is_zero(alpha):
    assert abs(D.alpha_div_gaussian(g1(0.3, 2.0), g1(0.3, 2.0), alpha)) < 1e-14


def test_alpha_div_half_closed_form():
    # log integral at alpha = 1/2: -(1/8) * 9 for unit variances
    v = D.alpha_div_gaussian(g1(3.0, 1.0), STD, 0.5)
    assert v == pytest.approx(4 * (1 - np.exp(-9 / 8)), abs=1e-14)
    grid = D.quadrature_grid(g1(3.0, 1.0), STD)
    assert D.alpha_div_quadrature(g1(3.0, 1.0).logpdf, STD.logpdf, 0.5, grid) == pytest.approx(v, abs=1e-10)


def test_alpha_div_small_alpha_gives_reverse_direction_kl():
    p = g1(3.0, 1.0)
    assert abs(D.alpha_div_gaussian(p, STD, 1e-6) - D.kl_gaussian(STD, p)) < 1e-4


def test_alpha_div_rejects_bad_alpha():
    with pytest.raises(ValueError):
        D.alpha_div_gaussian(STD, STD, 1.0)


def test_power_integral_not_integrable():
    # blend alpha*var_q + (1-alpha)*var_p must stay positive; negative variances cannot be built
    with pytest.raises(ValueError):
        g1(0.0, -1.0)


@settings(max_examples=50, deadline=None)
@given(
    st.floats(-3, 3), st.floats(0.3, 3), st.floats(-3, 3), st.floats(0.3, 3), st.floats(0.05, 0.95)
)
def test_closed_form_matches_quadrature(m1, v1, m2, v2, alpha):
    p, q = g1(m1, v1), g1(m2, v2)
    grid = D.quadrature_grid(p, q)
    quad = D.alpha_div_quadrature(p.logpdf, q.logpdf, alpha, grid)
    assert abs(quad - D.alpha_div_gaussian(p, q, alpha)) < 1e-8


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(0.2, 5), st.floats(0.01, 0.99))
def test_alpha_div_nonnegative(m, v, alpha):
    d = D.alpha_div_gaussian(g1(m, v), STD, alpha)
    assert d >= 0.0
    if m != 0.0 or v != 1.0:
        assert d > 0.0 or abs(m) < 1e-7 and abs(v - 1) < 1e-7


def test_alpha_div_continuous_in_alpha():
    p = g1(3.0, 1.0)
    for a in np.linspace(0.01, 0.98, 200):
        assert abs(D.alpha_div_gaussian(p, STD, a) - D.alpha_div_gaussian(p, STD, a + 1e-4)) < 1e-2


def test_quadrature_zero_for_identical():
    grid = D.quadrature_grid(STD)
    assert abs(D.alpha_div_quadrature(STD.logpdf, STD.logpdf, 0.3, grid)) < 1e-10


def test_quadrature_near_one_gives_forward_direction_kl():
    p = g1(3.0, 1.0)
    grid = D.quadrature_grid(p, STD)
    assert abs(D.alpha_div_quadrature(p.logpdf, STD.logpdf, 1 - 1e-6, grid) - D.kl_gaussian(p, STD)) < 1e-4


def test_quadrature_detects_coarse_grid():
    p = g1(3.0, 0.01)
    with pytest.raises(ValueError):
        D.alpha_div_quadrature(p.logpdf, STD.logpdf, 0.5, np.linspace(-8, 8, 9))
    with pytest.raises(ValueError):
        D.alpha_div_quadrature(p.logpdf, STD.logpdf, 0.5, np.linspace(-8, 8, 10))


def test_quadrature_gradient_matches_finite_difference_of_closed_form():
    h = 1e-5
    for alpha in (0.1, 0.5, 0.9):
        g = D.alpha_div_grad_quadrature(3.0, 1.0, STD, alpha)
        dmu = (D.alpha_div_gaussian(g1(3 + h, 1.0), STD, alpha) - D.alpha_div_gaussian(g1(3 - h, 1.0), STD, alpha)) / (2 * h)
        dsig = (D.alpha_div_gaussian(g1(3.0, (1 + h) ** 2), STD, alpha) - D.alpha_div_gaussian(g1(3.0, (1 - h) ** 2), STD, alpha)) / (2 * h)
        np.testing.assert_allclose(g, [dmu, dsig], rtol=1e-7)


# log-ratio ------------------------------------------------------------------------------------


def test_log_ratio_equal_densities():
    x = np.linspace(-4, 4, 9)
    assert np.all(D.optimal_log_ratio(STD, STD, x) == 0.0)


def test_log_ratio_midpoint():
    assert D.optimal_log_ratio(STD, g1(3.0, 1.0), 1.5)[0] == pytest.approx(0.0, abs=1e-14)


def test_log_ratio_at_origin():
    assert D.optimal_log_ratio(STD, g1(3.0, 1.0), 0.0)[0] == pytest.approx(4.5, abs=1e-14)


def test_log_ratio_tensor_matches_numpy():
    q, p = Gaussian([0.0, 1.0], [1.0, 2.0]), Gaussian([0.5, 0.0], [0.5, 1.0])
    x = np.random.default_rng(0).standard_normal((10, 2))
    np.testing.assert_allclose(D.gaussian_log_ratio(q, p)(x).data, D.optimal_log_ratio(q, p, x), atol=1e-12)


def test_mixture_logpdf_tensor_matches_numpy():
    mix = D.grid_gaussians(3, 1.0, 0.05)
    x = np.random.default_rng(1).standard_normal((20, 2))
    np.testing.assert_allclose(mix.logpdf_tensor(x).data, mix.logpdf(x), rtol=1e-12)
