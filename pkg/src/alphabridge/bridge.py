"""Losses and gradient estimators bridging maximum likelihood and
reverse-KL adversarial learning through the alpha-divergence.

Convention throughout: ``f(x) = log q(x) - log p(x)`` (data over model), the
fixed point of the GAN discriminator. Ratio weights are always written
through f: ``(p/q)^alpha = exp(-alpha f)`` and ``(q/p)^(1-alpha) = exp((1-alpha) f)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .densities import LOG_2PI
from .nets import EncoderParams, MlpParams, encoder_forward, input_gradient_expr, mlp_forward, scalar_out

LogRatio = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class BridgeHyper:
    sigma2: float = 1e-4  # observation noise of the semi-implicit surrogate
    clamp: float = 10.0  # bound on |exponent| of every ratio weight
    batch_size: int = 50
    gp_gamma: float = 10.0

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.clamp <= 0:
            raise ValueError("clamp must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.gp_gamma < 0:
            raise ValueError("gp_gamma must be non-negative")


@dataclass
class GradEstimate:
    grads: dict[str, np.ndarray]
    n: int
    kind: str  # "F", "R", "combined" or "practical"
    per_sample: dict[str, np.ndarray] | None = None
    clamp_hits: int = 0
    value: float = float("nan")  # value of the surrogate loss, when one exists

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.grads.values()])


def clamped_exp(a: np.ndarray, bound: float) -> tuple[np.ndarray, int]:
    hits = int(np.count_nonzero(np.abs(a) > bound))
    return np.exp(np.clip(a, -bound, bound)), hits


def _finish(loss: Tensor, params: Mapping[str, Tensor], n: int, kind: str, per_sample: bool, hits: int) -> GradEstimate:
    """Gradients of a summed surrogate. With replicated (per-sample) leaves the
    leaf gradients are the per-sample contributions themselves."""
    _, g = ad.value_and_grad(loss, params)
    if per_sample:
        ps = {k: v.reshape(n, -1) for k, v in g.items()}
        means = {k: v.mean(axis=0).reshape(params[k].shape[1:]) for k, v in ps.items()}
        return GradEstimate(means, n, kind, ps, hits)
    return GradEstimate({k: v / n for k, v in g.items()}, n, kind, None, hits)


# forward / reverse twin estimators -------------------------------------------------


def grad_alpha_forward_est(
    params: Mapping[str, Tensor],
    log_lik: Callable[[np.ndarray], Tensor],
    log_ratio: LogRatio,
    x: np.ndarray,
    alpha: float,
    clamp: float = 10.0,
    per_sample: bool = False,
) -> GradEstimate:
    """Data-side estimate of grad D_alpha:
    mean over x ~ q of  -(1/(1-alpha)) exp(-alpha f(x)) grad log p(x).

    ``log_lik(x)`` returns per-sample log p (or its ELBO surrogate) as a
    function of ``params``; ``log_ratio`` must not depend on ``params``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    f = log_ratio(ad.tensor(x)).data
    w, hits = clamped_exp(-alpha * f, clamp)
    terms = log_lik(x) * (-w / (1.0 - alpha))
    return _finish(ad.sum(terms), params, x.shape[0], "F", per_sample, hits)


def grad_alpha_reverse_est(
    params: Mapping[str, Tensor],
    generate: Callable[[np.ndarray], Tensor],
    log_ratio: LogRatio,
    z: np.ndarray,
    alpha: float,
    clamp: float = 10.0,
    per_sample: bool = False,
) -> GradEstimate:
    """Model-side (pathwise) estimate of grad D_alpha:
    mean over z of  -exp((1-alpha) f(x)) [d G/d theta]^T grad_x f(x),  x = G(z).

    Built as the gradient of -sg(w) f(G(z)); ``log_ratio`` is differentiated
    in its input only.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    z = np.asarray(z, dtype=np.float64)
    x = generate(z)
    f = log_ratio(x)
    w, hits = clamped_exp((1.0 - alpha) * f.data, clamp)
    return _finish(ad.sum(f * (-w)), params, z.shape[0], "R", per_sample, hits)


def grad_alpha_combined(est_f: GradEstimate, est_r: GradEstimate, gamma: float) -> GradEstimate:
    """(1 - gamma) * est_f + gamma * est_r."""
    if est_f.grads.keys() != est_r.grads.keys():
        raise ValueError("estimates address different parameters")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    grads = {}
    for k, gf in est_f.grads.items():
        gr = est_r.grads[k]
        if gf.shape != gr.shape:
            raise ValueError(f"shape mismatch for {k}: {gf.shape} vs {gr.shape}")
        grads[k] = (1.0 - gamma) * gf + gamma * gr
    per = None
    if est_f.per_sample is not None and est_r.per_sample is not None and est_f.n == est_r.n:
        per = {k: (1.0 - gamma) * est_f.per_sample[k] + gamma * est_r.per_sample[k] for k in grads}
    return GradEstimate(grads, min(est_f.n, est_r.n), "combined", per, est_f.clamp_hits + est_r.clamp_hits)


# losses ------------------------------------------------------------------------------


def disc_logit(disc: MlpParams | LogRatio) -> LogRatio:
    """Log-ratio callable from either a discriminator net or an exact oracle."""
    if isinstance(disc, MlpParams):
        return lambda x: scalar_out(disc, x)
    return disc


def _ratio_and_input_grad(disc: MlpParams | LogRatio, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(disc, MlpParams):
        return scalar_out(disc, x).data, input_gradient_expr(disc, x).data
    xt = ad.param(x)
    f = disc(xt)
    return f.data, ad.grad(ad.sum(f), [xt])[0]


def surrogate_log_joint(gen: MlpParams, x, z, sigma2: float) -> Tensor:
    """Per-sample log N(x; G(z), sigma2 I) + log N(z; 0, I)."""
    x = np.asarray(x, dtype=np.float64)
    z = ad.tensor(z)
    d = x.shape[1]
    r = ad.sum(ad.square(x - mlp_forward(gen, z)), axis=1)
    log_pz = -0.5 * np.sum(z.data**2, axis=1) - 0.5 * z.shape[1] * LOG_2PI
    return r * (-0.5 / sigma2) + (log_pz - 0.5 * d * (LOG_2PI + np.log(sigma2)))


def posterior_sample(enc: EncoderParams, x, eps: np.ndarray) -> np.ndarray:
    """z ~ q_phi(z|x) as constants (no gradient to phi)."""
    mu, logsig = encoder_forward(enc, x)
    return mu.data + np.exp(logsig.data) * eps


def elbo_loss(gen: MlpParams, enc: EncoderParams, x, sigma2: float, eps: np.ndarray) -> Tensor:
    """Negative ELBO of the surrogate N(x | G(z), sigma2 I) p(z), averaged over the batch.

    z = mu_phi(x) + sigma_phi(x) * eps; the KL(q_phi(z|x) || N(0, I)) term is analytic.
    """
    x = np.asarray(x, dtype=np.float64)
    mu, logsig = encoder_forward(enc, x)
    z = mu + ad.exp(logsig) * eps
    d = x.shape[1]
    rec = ad.sum(ad.square(x - mlp_forward(gen, z)), axis=1) * (0.5 / sigma2) + 0.5 * d * (LOG_2PI + np.log(sigma2))
    kl = 0.5 * ad.sum(ad.square(mu) + ad.exp(2.0 * logsig) - 1.0 - 2.0 * logsig, axis=1)
    return ad.mean(rec + kl)


def disc_loss(disc: MlpParams | LogRatio, x_real, x_fake) -> Tensor:
    """Negated GAN objective: mean softplus(-f(x_real)) + mean softplus(f(x_fake))."""
    if len(x_real) == 0 or len(x_fake) == 0:
        raise ValueError("empty batch")
    f = disc_logit(disc)
    return ad.mean(ad.softplus(-f(ad.tensor(x_real)))) + ad.mean(ad.softplus(f(ad.tensor(x_fake))))


def rkl_gen_loss(gen: MlpParams | Callable[[np.ndarray], Tensor], disc: MlpParams | LogRatio, z) -> Tensor:
    """mean of -f(G(z)); its pathwise gradient is the reverse-KL gradient.

    ``gen`` may be a network or any callable z -> x.
    """
    x = mlp_forward(gen, z) if isinstance(gen, MlpParams) else gen(z)
    return ad.mean(-disc_logit(disc)(x))


def gp_penalty(disc: MlpParams, x_real, gp_gamma: float) -> Tensor:
    """(gamma/2) * mean |grad_x f(x)|^2 on real samples, differentiable in the weights."""
    g = input_gradient_expr(disc, x_real)
    return ad.mean(ad.sum(ad.square(g), axis=1)) * (0.5 * gp_gamma)


# the practical alpha-bridge generator gradient ---------------------------------------


def practical_bridge_grad(
    gen: MlpParams,
    enc: EncoderParams,
    disc: MlpParams | LogRatio,
    x: np.ndarray,
    z: np.ndarray,
    alpha: float,
    gamma: float,
    hyper: BridgeHyper,
    eps: np.ndarray,
) -> GradEstimate:
    """Generator gradient with the discriminator standing in for the log-ratio.

    Term 1 (data side): (1-gamma)/(1-alpha) * mean -exp(-alpha f(x)) grad log p~(x, z),
    z ~ q_phi(z|x). Term 2 (model side): gamma * mean -exp((1-alpha) f(x')) J_G^T grad_x f(x'),
    x' = G(z). The input gradient of f is evaluated explicitly and pulled back
    through the generator as a vector-Jacobian product.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    params = gen.named
    loss = ad.tensor(0.0)
    hits = 0
    if gamma < 1.0:
        f_real = disc_logit(disc)(ad.tensor(x)).data
        w1, h1 = clamped_exp(-alpha * f_real, hyper.clamp)
        zq = posterior_sample(enc, x, eps)
        log_joint = surrogate_log_joint(gen, x, zq, hyper.sigma2)
        loss = loss + ad.mean(log_joint * (-w1)) * ((1.0 - gamma) / (1.0 - alpha))
        hits += h1
    if gamma > 0.0:
        x_fake = mlp_forward(gen, z)
        f_fake, gx = _ratio_and_input_grad(disc, x_fake.data)
        w2, h2 = clamped_exp((1.0 - alpha) * f_fake, hyper.clamp)
        loss = loss + ad.mean(ad.sum(x_fake * (-w2[:, None] * gx), axis=1)) * gamma
        hits += h2
    v, g = ad.value_and_grad(loss, params)
    return GradEstimate(g, x.shape[0], "practical", None, hits, v)


def cycle_form_loss(
    gen: MlpParams,
    enc: EncoderParams,
    disc: MlpParams | LogRatio,
    x: np.ndarray,
    z: np.ndarray,
    alpha: float,
    gamma: float,
    hyper: BridgeHyper,
    eps: np.ndarray,
) -> Tensor:
    """Single objective whose generator gradient equals :func:`practical_bridge_grad`:

    (1-gamma)/(1-alpha) * mean exp(-alpha f(x)) |x - G(z_q)|^2 / (2 sigma2)
    + gamma * mean -exp((1-alpha) f(sg(x'))) f(x'),   x' = G(z).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    f = disc_logit(disc)
    w1, _ = clamped_exp(-alpha * f(ad.tensor(x)).data, hyper.clamp)
    zq = posterior_sample(enc, x, eps)
    sq = ad.sum(ad.square(x - mlp_forward(gen, zq)), axis=1)
    cyc = ad.mean(sq * (w1 / (2.0 * hyper.sigma2))) * ((1.0 - gamma) / (1.0 - alpha))
    x_fake = mlp_forward(gen, z)
    f_fake = f(x_fake)
    w2, _ = clamped_exp((1.0 - alpha) * f(ad.stop_gradient(x_fake)).data, hyper.clamp)
    adv = ad.mean(f_fake * (-w2)) * gamma
    return cyc + adv
