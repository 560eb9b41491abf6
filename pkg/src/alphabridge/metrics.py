"""Evaluation of 2-D generators (Parzen log-likelihood, classifier score,
mode coverage) and the single-sample variance study of the twin estimators."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .bridge import grad_alpha_combined, grad_alpha_forward_est, grad_alpha_reverse_est
from .densities import LOG_2PI, Gaussian, GaussianMixture, gaussian_log_ratio, grid_gaussians, LocScaleGaussian
from .nets import MlpParams, MlpSpec, init, mlp_forward
from .schedules import ScheduleSpec, gamma_at

LL_FLOOR = -1000.0
PROB_FLOOR = 1e-12
ESTIMATORS = ("F", "R", "combined")
PARAMS = ("mu", "sigma")


@dataclass
class MetricsRow:
    iter: int
    step: str  # "I", "II", "III" or "baseline"
    alpha: float
    gamma: float
    loss_g: float
    loss_d: float
    kde_ll: float
    is_score: float
    modes: int


# Parzen window log-likelihood -------------------------------------------------------


def kde_loglik(samples, data, kernel_var: float, chunk: int = 512) -> float:
    """Mean over ``data`` of log (1/n) sum_j N(x; s_j, kernel_var I), floored per point."""
    s = np.asarray(samples, dtype=np.float64)
    x = np.asarray(data, dtype=np.float64)
    if s.size == 0 or x.size == 0:
        raise ValueError("kde_loglik needs non-empty samples and data")
    if kernel_var <= 0:
        raise ValueError("kernel variance must be positive")
    n, d = s.shape
    const = -np.log(n) - 0.5 * d * (LOG_2PI + np.log(kernel_var))
    s2 = np.sum(s * s, axis=1)
    out = np.empty(x.shape[0])
    for i in range(0, x.shape[0], chunk):
        xb = x[i : i + chunk]
        d2 = np.sum(xb * xb, axis=1)[:, None] - 2.0 * xb @ s.T + s2[None, :]
        np.maximum(d2, 0.0, out=d2)
        out[i : i + chunk] = logsumexp(d2 * (-0.5 / kernel_var), axis=1) + const
    return float(np.mean(np.maximum(out, LL_FLOOR)))


# mode classifier and the classifier score ---------------------------------------------


def nearest_mode(x, centers) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d2 = ((x[:, None, :] - np.asarray(centers)[None]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _log_softmax(logits: ad.Tensor) -> ad.Tensor:
    return logits - ad.logsumexp(logits, axis=1, keepdims=True)


def train_mode_classifier(
    x,
    labels,
    n_classes: int,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = (64, 64, 64, 64),
    lr: float = 3e-3,
    max_iters: int = 3000,
) -> MlpParams:
    """Full-batch cross-entropy training until every training point is classified correctly."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    net = init(MlpSpec(x.shape[1], hidden, n_classes), rng)
    if np.unique(labels).size <= 1:
        # nothing to separate: bias the output toward the single label
        net.biases[-1].data[int(labels[0]) if labels.size else 0] = 10.0
        return net
    onehot = np.eye(n_classes)[labels]
    state = ad.AdamState(lr=lr, beta1=0.9)
    for it in range(max_iters):
        logits = mlp_forward(net, x)
        if it % 25 == 0 and np.array_equal(np.argmax(logits.data, axis=1), labels):
            return net
        loss = -ad.mean(ad.sum(_log_softmax(logits) * onehot, axis=1))
        _, g = ad.value_and_grad(loss, net.named)
        ad.adam_step(net.named, g, state)
    if np.array_equal(np.argmax(mlp_forward(net, x).data, axis=1), labels):
        return net
    raise RuntimeError(f"mode classifier did not reach 100% training accuracy in {max_iters} iterations")


def class_probs(classifier: MlpParams, x) -> np.ndarray:
    return np.exp(_log_softmax(mlp_forward(classifier, x)).data)


def inception_score(classifier: MlpParams, samples) -> float:
    """E_x KL(uniform || p(y|x)), with p(y|x) floored at 1e-12 (no exponential)."""
    p = np.maximum(class_probs(classifier, samples), PROB_FLOOR)
    k = p.shape[1]
    kl = np.sum((np.log(1.0 / k) - np.log(p)) / k, axis=1)
    return float(np.mean(kl))


@lru_cache(maxsize=8)
def mode_classifier_for(grid: int, spacing: float, var: float, n: int = 10_000, seed: int = 0) -> MlpParams:
    """Classifier trained on ``n`` samples of the lattice mixture; cached per process."""
    mix = grid_gaussians(grid, spacing, var)
    rng = np.random.default_rng([seed, 104729])
    x = mix.sample(n, rng)
    return train_mode_classifier(x, nearest_mode(x, mix.means), mix.n_components, rng)


# mode coverage -----------------------------------------------------------------------


def mode_coverage(samples, centers, radius: float, min_count: int) -> int:
    """Number of centers with at least ``min_count`` samples inside ``radius``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    s = np.asarray(samples, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    if s.size == 0:
        return 0
    d2 = ((s[:, None, :] - c[None]) ** 2).sum(axis=2)
    counts = np.sum(d2 <= radius * radius, axis=0)
    return int(np.sum(counts >= min_count))


@dataclass
class Evaluator:
    """Bundles the ground truth, held-out data and classifier for metric rows."""

    data: GaussianMixture
    classifier: MlpParams
    held_out: np.ndarray
    n_samples: int = 5000
    kernel_var: float = 2e-4
    radius: float = 4.0 * float(np.sqrt(2e-4))
    min_count: int = 20

    @classmethod
    def for_lattice(cls, grid=5, spacing=2.0, var=2e-4, n_samples=5000, seed=0) -> Evaluator:
        mix = grid_gaussians(grid, spacing, var)
        held = mix.sample(n_samples, np.random.default_rng([seed, 15485863]))
        return cls(mix, mode_classifier_for(grid, spacing, var), held, n_samples, var, 4.0 * float(np.sqrt(var)))

    def coverage(self, samples) -> int:
        return mode_coverage(samples, self.data.means, self.radius, self.min_count)

    def evaluate(self, samples) -> tuple[float, float, int]:
        """(kde_ll, is, modes) for generator samples."""
        return (
            kde_loglik(samples, self.held_out, self.kernel_var),
            inception_score(self.classifier, samples),
            self.coverage(samples),
        )


# variance study ------------------------------------------------------------------------


@dataclass
class VarianceReport:
    alphas: np.ndarray
    trials: int
    # variances[estimator][param] -> array over alphas
    variances: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    gammas: np.ndarray | None = None
    clamp_hits: int = 0

    def rows(self) -> list[tuple[float, str, str, float]]:
        out = []
        for i, a in enumerate(self.alphas):
            for est in ESTIMATORS:
                for p in PARAMS:
                    out.append((float(a), est, p, float(self.variances[est][p][i])))
        return out


def single_sample_estimates(
    mu: float, sigma: float, q: Gaussian, alpha: float, gamma: float, trials: int, rng: np.random.Generator
) -> tuple[dict[str, np.ndarray], int]:
    """(trials, 2) arrays of 1-sample gradient estimates w.r.t. (mu, sigma) per estimator.

    Each trial draws one data point for F and one independent noise draw for R;
    the combined estimate mixes the two. Also returns the clamp hit count.
    """
    x = q.sample(trials, rng)
    z = rng.standard_normal((trials, 1))
    model = LocScaleGaussian(mu, sigma, replicas=trials)
    ratio = gaussian_log_ratio(q, model.frozen())
    est_f = grad_alpha_forward_est(model.params, model.log_prob, ratio, x, alpha, per_sample=True)
    est_r = grad_alpha_reverse_est(model.params, model.generate, ratio, z, alpha, per_sample=True)
    est_c = grad_alpha_combined(est_f, est_r, gamma)
    out = {
        name: np.hstack([e.per_sample["mu"], e.per_sample["sigma"]])
        for name, e in (("F", est_f), ("R", est_r), ("combined", est_c))
    }
    return out, est_c.clamp_hits


def variance_study(
    p_spec: tuple[float, float],
    q_spec: Gaussian,
    alphas,
    trials: int,
    rng: np.random.Generator,
    schedule: ScheduleSpec | None = None,
) -> VarianceReport:
    """Sample variance (ddof=1) over ``trials`` single-sample estimates for each alpha."""
    if trials < 2:
        raise ValueError("trials must be >= 2")
    schedule = schedule or ScheduleSpec()
    alphas = np.asarray(alphas, dtype=np.float64)
    gammas = np.array([gamma_at(float(a), schedule) for a in alphas])
    var = {e: {p: np.zeros(alphas.size) for p in PARAMS} for e in ESTIMATORS}
    mu, sigma = p_spec
    hits = 0
    for i, (a, g) in enumerate(zip(alphas, gammas)):
        est, h = single_sample_estimates(mu, sigma, q_spec, float(a), float(g), trials, rng)
        hits += h
        for e in ESTIMATORS:
            v = est[e].var(axis=0, ddof=1)
            var[e]["mu"][i], var[e]["sigma"][i] = v
    return VarianceReport(alphas, trials, var, gammas, hits)
