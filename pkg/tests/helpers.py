"""Shared oracles for the test suite."""

from __future__ import annotations

import numpy as np


def fd_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = fn(x)
        x[i] = old - h
        fm = fn(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b) -> float:
    """Max-norm error relative to the max-norm of the reference."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8))


def standard_error(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return x.std(axis=0, ddof=1) / np.sqrt(x.shape[0])


def twin_samples(mu: float, sigma: float, alpha: float, n: int, seed: int, gamma: float | None = None):
    """Per-sample F and R gradient estimates (n, 2) w.r.t. (mu, sigma) for
    p = N(mu, sigma^2) against q = N(0, 1) with the exact log-ratio; adds the
    combined estimate when ``gamma`` is given."""
    from alphabridge.bridge import grad_alpha_combined, grad_alpha_forward_est, grad_alpha_reverse_est
    from alphabridge.densities import Gaussian, LocScaleGaussian, gaussian_log_ratio

    q = Gaussian([0.0], [1.0])
    rng = np.random.default_rng(seed)
    x = q.sample(n, rng)
    z = rng.standard_normal((n, 1))
    model = LocScaleGaussian(mu, sigma, replicas=n)
    ratio = gaussian_log_ratio(q, model.frozen())
    est_f = grad_alpha_forward_est(model.params, model.log_prob, ratio, x, alpha, per_sample=True)
    est_r = grad_alpha_reverse_est(model.params, model.generate, ratio, z, alpha, per_sample=True)
    out = {"F": est_f, "R": est_r}
    if gamma is not None:
        out["combined"] = grad_alpha_combined(est_f, est_r, gamma)
    return {k: np.hstack([e.per_sample["mu"], e.per_sample["sigma"]]) for k, e in out.items()}, out, (x, z)


def within_se(samples: np.ndarray, target, k: float = 3.0) -> bool:
    mean = samples.mean(axis=0)
    return bool(np.all(np.abs(mean - np.asarray(target)) <= k * standard_error(samples)))
