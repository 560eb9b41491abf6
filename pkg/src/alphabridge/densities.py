"""Gaussian and Gaussian-mixture densities, closed-form divergences and a
trapezoid quadrature oracle for 1-D densities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad

LOG_2PI = float(np.log(2.0 * np.pi))
QUAD_POINTS = 2**15 + 1


@dataclass(frozen=True)
class Gaussian:
    """Diagonal Gaussian; ``var`` is per-dimension."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.broadcast_to(np.asarray(self.var, dtype=np.float64), mean.shape).copy()
        if (var <= 0).any():
            raise ValueError("Gaussian variance must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def logpdf(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        r = (x - self.mean) ** 2 / self.var
        return -0.5 * (r.sum(axis=1) + np.log(self.var).sum() + self.dim * LOG_2PI)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + np.sqrt(self.var) * rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of isotropic Gaussians: ``means`` is (K, d), ``variances`` is (K,)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        mu = np.asarray(self.means, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        var = np.broadcast_to(np.asarray(self.variances, dtype=np.float64), w.shape).copy()
        if w.size < 1 or mu.shape[0] != w.size:
            raise ValueError("mixture needs one mean per weight and at least one component")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if (var <= 0).any():
            raise ValueError("component variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def component_logpdf(self, x) -> np.ndarray:
        """(n, K) matrix of log N(x_i; mu_k, var_k I)."""
        x = _as_points(x, self.dim)
        d2 = ((x[:, None, :] - self.means[None]) ** 2).sum(axis=2)
        return -0.5 * (d2 / self.variances + self.dim * (np.log(self.variances) + LOG_2PI))

    def logpdf(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logsumexp(self.component_logpdf(x) + logw, axis=1)

    def logpdf_tensor(self, x: ad.Tensor) -> ad.Tensor:
        """Differentiable in ``x`` (the mixture parameters are constants)."""
        x = ad.tensor(x)
        diff = ad.reshape(x, (x.shape[0], 1, self.dim)) - self.means[None]
        d2 = ad.sum(ad.square(diff), axis=2)
        with np.errstate(divide="ignore"):
            logw = np.log(np.maximum(self.weights, 1e-300))
        const = logw - 0.5 * self.dim * (np.log(self.variances) + LOG_2PI)
        return ad.logsumexp(d2 * (-0.5 / self.variances) + const, axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample_with_labels(n, rng)[0]

    def sample_with_labels(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        # inverse CDF over the component weights, then a Gaussian draw
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        labels = np.searchsorted(cdf, rng.random(n), side="right")
        labels = np.minimum(labels, self.n_components - 1)
        eps = rng.standard_normal((n, self.dim))
        x = self.means[labels] + np.sqrt(self.variances[labels])[:, None] * eps
        return x, labels


def grid_gaussians(grid: int = 5, spacing: float = 2.0, var: float = 2e-4) -> GaussianMixture:
    """Equal-weight isotropic mixture on a centred ``grid x grid`` lattice."""
    offs = (np.arange(grid) - (grid - 1) / 2.0) * spacing
    means = np.array([(a, b) for a in offs for b in offs])
    k = grid * grid
    return GaussianMixture(np.full(k, 1.0 / k), means, np.full(k, var))


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if dim == 1 else x[None, :]
    if x.shape[1] != dim:
        raise ValueError(f"points have dimension {x.shape[1]}, distribution has {dim}")
    return x


def logpdf(dist, x) -> np.ndarray:
    return dist.logpdf(x)


def sample(dist, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return dist.sample(n, rng)


# closed forms --------------------------------------------------------------------


def kl_gaussian(p: Gaussian, q: Gaussian) -> float:
    """KL(p || q) for diagonal Gaussians."""
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    r = p.var / q.var
    return float(0.5 * np.sum(r - 1.0 - np.log(r) + (p.mean - q.mean) ** 2 / q.var))


def log_power_integral(p: Gaussian, q: Gaussian, alpha: float) -> float:
    """log of the integral of p^alpha q^(1-alpha) for diagonal Gaussians."""
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    blend = alpha * q.var + (1.0 - alpha) * p.var
    if (blend <= 0).any():
        raise ValueError("p^alpha q^(1-alpha) is not integrable for this alpha")
    quad = alpha * (1.0 - alpha) * (p.mean - q.mean) ** 2 / blend
    logdet = (1.0 - alpha) * np.log(p.var) + alpha * np.log(q.var) - np.log(blend)
    return float(np.sum(0.5 * logdet - 0.5 * quad))


def alpha_div_gaussian(p: Gaussian, q: Gaussian, alpha: float) -> float:
    """D_alpha[p || q] = (1 - int p^a q^(1-a)) / (a (1 - a)), alpha in (0, 1)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return float(-np.expm1(log_power_integral(p, q, alpha)) / (alpha * (1.0 - alpha)))


def _trapz(y: np.ndarray, h: float) -> float:
    return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))


def quadrature_grid(*dists: Gaussian, n: int = QUAD_POINTS, width: float = 8.0) -> np.ndarray:
    lo = min(float(d.mean[0] - width * np.sqrt(d.var[0])) for d in dists)
    hi = max(float(d.mean[0] + width * np.sqrt(d.var[0])) for d in dists)
    return np.linspace(lo, hi, n)


def _alpha_div_on_grid(lp: np.ndarray, lq: np.ndarray, alpha: float, h: float) -> float:
    # p - p^a q^(1-a) keeps the 1 - integral difference accurate near the KL limits
    y = np.exp(lp) - np.exp(alpha * lp + (1.0 - alpha) * lq)
    return _trapz(y, h) / (alpha * (1.0 - alpha))


def alpha_div_quadrature(p_logpdf: Callable, q_logpdf: Callable, alpha: float, grid: np.ndarray) -> float:
    """Trapezoid rule for D_alpha on a uniform 1-D grid (odd point count).

    The estimate is recomputed on every other grid point; a change above
    1e-8, or either density losing more than 1e-6 of its mass, means the
    grid is too coarse or too narrow.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size < 5 or grid.size % 2 == 0:
        raise ValueError("grid needs an odd number of points (>= 5)")
    h = float(grid[1] - grid[0])
    lp = np.asarray(p_logpdf(grid), dtype=np.float64).ravel()
    lq = np.asarray(q_logpdf(grid), dtype=np.float64).ravel()
    for name, lv in (("p", lp), ("q", lq)):
        mass = _trapz(np.exp(lv), h)
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"quadrature grid misses {name}: integrated mass {mass:.6g}")
    fine = _alpha_div_on_grid(lp, lq, alpha, h)
    coarse = _alpha_div_on_grid(lp[::2], lq[::2], alpha, 2 * h)
    if abs(fine - coarse) > 1e-8 * max(1.0, abs(fine)):
        raise ValueError(f"quadrature grid too coarse (refinement changed estimate by {abs(fine - coarse):.3g})")
    return fine


def alpha_div_grad_quadrature(mu: float, sigma: float, q: Gaussian, alpha: float, n: int = QUAD_POINTS) -> np.ndarray:
    """Quadrature of d/d(mu, sigma) D_alpha[N(mu, sigma^2) || q] for 1-D q.

    Uses -(1/(1-alpha)) int p^alpha q^(1-alpha) d/dtheta log p dx.
    """
    p = Gaussian([mu], [sigma**2])
    x = quadrature_grid(p, q, n=n, width=12.0)
    h = float(x[1] - x[0])
    lp = p.logpdf(x)
    lq = q.logpdf(x)
    w = np.exp(alpha * lp + (1.0 - alpha) * lq)
    r = (x - mu) / sigma
    s_mu = r / sigma
    s_sigma = (r * r - 1.0) / sigma
    return np.array([-_trapz(w * s_mu, h), -_trapz(w * s_sigma, h)]) / (1.0 - alpha)


def optimal_log_ratio(q, p, x) -> np.ndarray:
    """f*(x) = log q(x) - log p(x), the optimum of the GAN discriminator."""
    return q.logpdf(x) - p.logpdf(x)


# differentiable location-scale family used by the estimator tests -------------------


class LocScaleGaussian:
    """1-D model p_theta = N(mu, sigma^2) with trainable (mu, sigma).

    With ``replicas=n`` each parameter is an (n, 1) leaf holding n copies of
    the same value, so the gradient of a summed loss gives one gradient per
    sample.
    """

    def __init__(self, mu: float, sigma: float, replicas: int | None = None):
        shape = (replicas, 1) if replicas else (1,)
        self.mu = ad.param(np.full(shape, float(mu)))
        self.sigma = ad.param(np.full(shape, float(sigma)))
        self.replicas = replicas

    @property
    def params(self) -> dict[str, ad.Tensor]:
        return {"mu": self.mu, "sigma": self.sigma}

    def frozen(self) -> Gaussian:
        return Gaussian([float(self.mu.data.ravel()[0])], [float(self.sigma.data.ravel()[0]) ** 2])

    def log_prob(self, x) -> ad.Tensor:
        """Per-sample log N(x; mu, sigma^2) for x of shape (n, 1); returns (n,)."""
        x = ad.tensor(x)
        r = (x - self.mu) / self.sigma
        out = -0.5 * ad.square(r) - ad.log(self.sigma) - 0.5 * LOG_2PI
        return ad.reshape(out, (x.shape[0],))

    def generate(self, z) -> ad.Tensor:
        """Pathwise sample mu + sigma * z for z of shape (n, 1)."""
        return self.mu + self.sigma * ad.tensor(z)


def gaussian_log_ratio(q: Gaussian, p: Gaussian) -> Callable[[ad.Tensor], ad.Tensor]:
    """Exact f*(x) = log q(x) - log p(x) as a function differentiable in x."""

    def f(x) -> ad.Tensor:
        x = ad.tensor(x)
        lq = ad.sum(ad.square(x - q.mean) * (-0.5 / q.var), axis=1) - 0.5 * np.sum(np.log(q.var))
        lp = ad.sum(ad.square(x - p.mean) * (-0.5 / p.var), axis=1) - 0.5 * np.sum(np.log(p.var))
        return lq - lp

    return f
