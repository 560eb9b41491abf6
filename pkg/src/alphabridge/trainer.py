"""Three-step alpha-bridge training on 2-D data, the baseline trainers, the
forgetting probe, and the 1-D Gaussian-mixture comparison study."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .bridge import BridgeHyper, disc_loss, elbo_loss, gp_penalty, practical_bridge_grad, rkl_gen_loss
from .densities import GaussianMixture
from .metrics import Evaluator, MetricsRow
from .nets import (
    EncoderParams,
    MlpParams,
    MlpSpec,
    frozen,
    frozen_encoder,
    init,
    init_encoder,
    load_arrays,
    mlp_forward,
    save_arrays,
    spectral_normalize,
)
from .schedules import ScheduleSpec, schedule_at

Sink = Callable[[MetricsRow], None]
BASELINES = ("MLE", "RKL-SN", "RKL-GP", "FR", "FRw", "FRw3")
ROLES = ("disc", "gen", "enc")


@dataclass(frozen=True)
class TrainConfig:
    step1: int = 2000
    step2: int = 2000
    step3: int = 6000
    batch_size: int = 50
    lr: float = 2e-4
    beta1: float = 0.1
    beta2: float = 0.999
    adam_eps: float = 1e-8
    regularizer: str = "sn"  # "sn", "gp" or "none" (discriminator)
    disc_steps: int = 1
    update_order: tuple[str, ...] = ROLES
    z_dim: int = 2
    hidden: tuple[int, ...] = (400, 400, 400, 400)
    # fresh generator moments whenever its objective changes: Step-I moments sit at the
    # 1/sigma2 scale of the ELBO and would shrink reverse-KL steps for ~10^4 iterations
    reset_gen_optimizer: bool = True
    cadence: int = 500
    seed: int = 0
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    hyper: BridgeHyper = field(default_factory=BridgeHyper)

    def __post_init__(self):
        object.__setattr__(self, "update_order", tuple(self.update_order))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in ("step1", "step2", "step3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.step1 + self.step2 + self.step3 < 1:
            raise ValueError("at least one training iteration is required")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError("beta1 must lie in [0, 1)")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError("beta2 must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")
        if self.regularizer not in ("sn", "gp", "none"):
            raise ValueError("regularizer must be one of sn, gp, none")
        if self.disc_steps < 1:
            raise ValueError("disc_steps must be >= 1")
        if sorted(self.update_order) != sorted(ROLES):
            raise ValueError(f"update_order must be a permutation of {ROLES}")
        if self.z_dim < 1 or not self.hidden:
            raise ValueError("z_dim must be >= 1 and hidden non-empty")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")

    @property
    def total_iters(self) -> int:
        return self.step1 + self.step2 + self.step3


# state and checkpoints ---------------------------------------------------------------


@dataclass
class TrainState:
    gen: MlpParams
    enc: EncoderParams
    disc: MlpParams
    opt_gen: ad.AdamState
    opt_enc: ad.AdamState
    opt_disc: ad.AdamState
    rng: np.random.Generator
    iteration: int = 0
    last_losses: tuple[float, float] = (float("nan"), float("nan"))

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for pre, arrs in (("gen/", self.gen.arrays()), ("enc/", self.enc.arrays()), ("disc/", self.disc.arrays())):
            out.update({pre + k: v for k, v in arrs.items()})
        for pre, opt in (("adam_gen/", self.opt_gen), ("adam_enc/", self.opt_enc), ("adam_disc/", self.opt_disc)):
            out.update({f"{pre}m/{k}": v for k, v in opt.m.items()})
            out.update({f"{pre}v/{k}": v for k, v in opt.v.items()})
        return out

    def save(self, path, extra: dict | None = None) -> None:
        meta = {
            "iteration": self.iteration,
            "adam_t": [self.opt_gen.t, self.opt_enc.t, self.opt_disc.t],
            "rng": self.rng.bit_generator.state,
            "last_losses": list(self.last_losses),
            **(extra or {}),
        }
        save_arrays(path, self.arrays(), meta)

    @classmethod
    def load(cls, path, config: TrainConfig, data_dim: int) -> TrainState:
        """Rebuild a state saved by :meth:`save` for the same architecture."""
        if not Path(path).exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        arrays, meta = load_arrays(path)
        state = init_state(config, data_dim)

        def sub(prefix):
            return {k[len(prefix) :]: v for k, v in arrays.items() if k.startswith(prefix)}

        state.gen.load_arrays(sub("gen/"))
        state.enc.load_arrays(sub("enc/"))
        state.disc.load_arrays(sub("disc/"))
        for pre, opt, t in zip(("adam_gen/", "adam_enc/", "adam_disc/"), state.optimizers(), meta["adam_t"]):
            opt.m, opt.v, opt.t = sub(pre + "m/"), sub(pre + "v/"), int(t)
        state.rng.bit_generator.state = meta["rng"]
        state.iteration = int(meta["iteration"])
        state.last_losses = tuple(meta.get("last_losses", (float("nan"),) * 2))
        return state

    def optimizers(self) -> tuple[ad.AdamState, ad.AdamState, ad.AdamState]:
        return self.opt_gen, self.opt_enc, self.opt_disc

    def reset_gen_optimizer(self) -> None:
        o = self.opt_gen
        self.opt_gen = ad.AdamState(lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)


def init_state(config: TrainConfig, data_dim: int) -> TrainState:
    """All three networks are always built, in a fixed order, so every trainer
    consumes the seeded stream identically."""
    rng = np.random.default_rng(config.seed)
    gen = init(MlpSpec(config.z_dim, config.hidden, data_dim), rng)
    enc = init_encoder(data_dim, config.hidden, config.z_dim, rng)
    reg = "sn" if config.regularizer == "sn" else "none"
    disc = init(MlpSpec(data_dim, config.hidden, 1, regularizer=reg), rng)

    def opt():
        return ad.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)

    return TrainState(gen, enc, disc, opt(), opt(), opt(), rng)


class TrainingAborted(RuntimeError):
    """Raised when a loss or gradient stops being finite; carries the last good state."""

    def __init__(self, message: str, state: TrainState, step: str):
        super().__init__(message)
        self.state = state
        self.step = step
        self.last_finite_iter = state.iteration


# one iteration ---------------------------------------------------------------------------


def _grads(loss: ad.Tensor, params) -> tuple[float, dict]:
    return ad.value_and_grad(loss, params)


def _disc_update(state: TrainState, cfg: TrainConfig, x: np.ndarray, z: np.ndarray) -> float:
    disc = state.disc
    x_fake = mlp_forward(frozen(state.gen), z).data
    if disc.u is not None:
        spectral_normalize(disc)
    loss = disc_loss(disc, x, x_fake)
    if cfg.regularizer == "gp":
        loss = loss + gp_penalty(disc, x, cfg.hyper.gp_gamma)
    v, g = _grads(loss, disc.named)
    ad.adam_step(disc.named, g, state.opt_disc)
    return v


def _gen_update(state: TrainState, cfg: TrainConfig, mode: str, x, z, eps, alpha: float, gamma: float) -> float:
    gen, hyper = state.gen, cfg.hyper
    enc, disc = frozen_encoder(state.enc), frozen(state.disc)
    if mode == "bridge":
        est = practical_bridge_grad(gen, enc, disc, x, z, alpha, gamma, hyper, eps)
        v, g = est.value, est.grads
    else:
        if mode == "mle":
            loss = elbo_loss(gen, enc, x, hyper.sigma2, eps)
        elif mode == "rkl":
            loss = rkl_gen_loss(gen, disc, z)
        elif mode == "fr":
            loss = elbo_loss(gen, enc, x, hyper.sigma2, eps) + rkl_gen_loss(gen, disc, z)
        elif mode == "frw":
            fkl = elbo_loss(gen, enc, x, hyper.sigma2, eps) * (1.0 - gamma) if gamma < 1.0 else None
            rkl = rkl_gen_loss(gen, disc, z) * gamma if gamma > 0.0 else None
            loss = fkl + rkl if fkl is not None and rkl is not None else (fkl if fkl is not None else rkl)
        else:
            raise ValueError(f"unknown generator mode {mode!r}")
        v, g = _grads(loss, gen.named)
    ad.adam_step(gen.named, g, state.opt_gen)
    return v


def _enc_update(state: TrainState, cfg: TrainConfig, x, eps) -> None:
    loss = elbo_loss(frozen(state.gen), state.enc, x, cfg.hyper.sigma2, eps)
    _, g = _grads(loss, state.enc.named)
    ad.adam_step(state.enc.named, g, state.opt_enc)


def train_iteration(state: TrainState, cfg: TrainConfig, data, mode: str, alpha: float, gamma: float) -> None:
    """One iteration: draw a batch, then update the three networks in ``cfg.update_order``."""
    rng, b = state.rng, cfg.batch_size
    x = data.sample(b, rng)
    z = rng.standard_normal((b, cfg.z_dim))
    eps = rng.standard_normal((b, cfg.z_dim))
    eps_enc = rng.standard_normal((b, cfg.z_dim))
    loss_g = loss_d = float("nan")
    for role in cfg.update_order:
        if role == "disc":
            for k in range(cfg.disc_steps):
                if k == 0:
                    xd, zd = x, z
                else:
                    xd, zd = data.sample(b, rng), rng.standard_normal((b, cfg.z_dim))
                loss_d = _disc_update(state, cfg, xd, zd)
        elif role == "gen":
            loss_g = _gen_update(state, cfg, mode, x, z, eps, alpha, gamma)
        else:
            _enc_update(state, cfg, x, eps_enc)
    state.iteration += 1
    state.last_losses = (loss_g, loss_d)


# phases ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class Phase:
    tag: str  # row label: "I", "II", "III" or "baseline"
    mode: str  # "mle", "bridge", "rkl", "fr" or "frw"
    iters: int
    schedule_iters: int | None = None  # length of the alpha sweep (defaults to iters)


def generator_samples(gen: MlpParams, n: int, z_dim: int, seed: int, iteration: int) -> np.ndarray:
    """Evaluation draws use their own stream so metrics never perturb training."""
    z = np.random.default_rng([seed, 2, iteration]).standard_normal((n, z_dim))
    return mlp_forward(frozen(gen), z).data


def _emit(state: TrainState, cfg: TrainConfig, tag: str, alpha: float, gamma: float, sink, evaluator) -> None:
    if sink is None:
        return
    kde = score = float("nan")
    modes = -1
    if evaluator is not None:
        samples = generator_samples(state.gen, evaluator.n_samples, cfg.z_dim, cfg.seed, state.iteration)
        kde, score, modes = evaluator.evaluate(samples)
    g, d = state.last_losses
    sink(MetricsRow(state.iteration, tag, alpha, gamma, g, d, kde, score, modes))


def run_phase(state: TrainState, cfg: TrainConfig, data, phase: Phase, sink: Sink | None = None, evaluator=None) -> None:
    if phase.iters == 0:
        return
    if cfg.reset_gen_optimizer and state.opt_gen.t > 0:
        state.reset_gen_optimizer()
    sched = None
    if phase.mode in ("bridge", "frw"):
        sched = replace(cfg.schedule, num_iters=max(phase.schedule_iters or phase.iters, 2))
    for k in range(1, phase.iters + 1):
        if sched is not None:
            alpha, gamma = schedule_at(k, sched)
        else:
            alpha, gamma = {"mle": (0.0, 0.0), "rkl": (1.0, 1.0), "fr": (float("nan"), float("nan"))}[phase.mode]
        try:
            train_iteration(state, cfg, data, phase.mode, alpha, gamma)
        except ad.NonFiniteError as err:
            raise TrainingAborted(f"non-finite value in step {phase.tag} at iteration {state.iteration + 1}: {err}", state, phase.tag) from err
        if state.iteration % cfg.cadence == 0 or k == phase.iters:
            _emit(state, cfg, phase.tag, alpha, gamma, sink, evaluator)


def run_phases(cfg: TrainConfig, data, phases, sink=None, evaluator=None, checkpoint_dir=None, state=None) -> TrainState:
    state = state or init_state(cfg, data.dim)
    for i, ph in enumerate(phases, start=1):
        run_phase(state, cfg, data, ph, sink, evaluator)
        if checkpoint_dir is not None:
            state.save(Path(checkpoint_dir) / f"step{i}.bin", {"step": ph.tag})
    return state


def bridge_phases(cfg: TrainConfig) -> list[Phase]:
    return [Phase("I", "mle", cfg.step1), Phase("II", "bridge", cfg.step2), Phase("III", "rkl", cfg.step3)]


def run_alpha_bridge(cfg: TrainConfig, data, sink: Sink | None = None, evaluator=None, checkpoint_dir=None) -> TrainState:
    """Step I: maximum likelihood via the ELBO surrogate with discriminator pretraining.
    Step II: alpha swept from 0+ to 1- with the practical bridge gradient.
    Step III: reverse-KL refinement. The encoder follows the ELBO throughout."""
    return run_phases(cfg, data, bridge_phases(cfg), sink, evaluator, checkpoint_dir)


def baseline_phases(kind: str, cfg: TrainConfig) -> tuple[TrainConfig, list[Phase]]:
    n = cfg.total_iters
    if kind == "MLE":
        return cfg, [Phase("baseline", "mle", n)]
    if kind == "RKL-SN":
        return replace(cfg, regularizer="sn"), [Phase("baseline", "rkl", n)]
    if kind == "RKL-GP":
        return replace(cfg, regularizer="gp"), [Phase("baseline", "rkl", n)]
    if kind == "FR":
        return cfg, [Phase("baseline", "fr", n)]
    if kind == "FRw":
        return cfg, [Phase("baseline", "frw", n)]
    if kind == "FRw3":
        return cfg, [Phase("I", "mle", cfg.step1), Phase("II", "frw", cfg.step2), Phase("III", "rkl", cfg.step3)]
    raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")


def run_baseline(kind: str, cfg: TrainConfig, data, sink: Sink | None = None, evaluator=None, checkpoint_dir=None) -> TrainState:
    """Single-objective baselines over the same total iteration budget
    (FRw3 keeps the three-step layout with the loss-weighted middle step)."""
    cfg, phases = baseline_phases(kind, cfg)
    return run_phases(cfg, data, phases, sink, evaluator, checkpoint_dir)


# forgetting probe ------------------------------------------------------------------------


def forgetting_probe(
    cfg: TrainConfig,
    data,
    checkpoint,
    evaluator: Evaluator,
    mode: str = "rkl",
    iters: int = 200,
    every: int = 20,
    sink: Sink | None = None,
) -> list[tuple[int, int]]:
    """Coverage trace [(k, modes)] at k = 0, every, 2*every, ... while training from a
    Step-I checkpoint with pure reverse KL (``mode="rkl"``) or with the opening
    iterations of Step II (``mode="bridge"``, using the configured Step-II schedule)."""
    state = TrainState.load(checkpoint, cfg, data.dim)
    if cfg.reset_gen_optimizer:
        state.reset_gen_optimizer()
    start = state.iteration

    def cov():
        return evaluator.coverage(generator_samples(state.gen, evaluator.n_samples, cfg.z_dim, cfg.seed, start))

    trace = [(0, cov())]
    sched = replace(cfg.schedule, num_iters=max(cfg.step2, iters, 2))
    tag = f"probe-{mode}"
    for k in range(1, iters + 1):
        alpha, gamma = schedule_at(k, sched) if mode == "bridge" else (1.0, 1.0)
        try:
            train_iteration(state, cfg, data, mode, alpha, gamma)
        except ad.NonFiniteError as err:
            raise TrainingAborted(str(err), state, tag) from err
        if k % every == 0:
            trace.append((k, cov()))
            if sink is not None:
                g, d = state.last_losses
                sink(MetricsRow(state.iteration, tag, alpha, gamma, g, d, float("nan"), float("nan"), trace[-1][1]))
    return trace


# 1-D mixture comparison -----------------------------------------------------------------


@dataclass(frozen=True)
class Gmm1dConfig:
    """Trainable 1-D mixture fitted with exact densities (no networks)."""

    n_components: int = 2
    target_means: tuple[float, ...] = (6.0, -1.0, 1.0)
    target_sigmas: tuple[float, ...] = (0.3, 0.3, 0.3)
    step1: int = 1000
    step2: int = 1000
    step3: int = 1000
    batch_size: int = 256
    lr: float = 0.02
    beta1: float = 0.5
    beta2: float = 0.999
    init_scale: float = 3.0  # initial means ~ N(0, init_scale^2)
    tolerance: float = 0.3
    clamp: float = 10.0
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)

    def __post_init__(self):
        object.__setattr__(self, "target_means", tuple(float(m) for m in self.target_means))
        object.__setattr__(self, "target_sigmas", tuple(float(s) for s in self.target_sigmas))
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if len(self.target_means) != len(self.target_sigmas) or not self.target_means:
            raise ValueError("target_means and target_sigmas must be non-empty and of equal length")
        if any(s <= 0 for s in self.target_sigmas):
            raise ValueError("target_sigmas must be positive")
        if min(self.step1, self.step2, self.step3) < 0 or self.step1 + self.step2 + self.step3 < 1:
            raise ValueError("step counts must be >= 0 with a positive total")
        if self.batch_size < 1 or self.lr < 0 or self.tolerance <= 0 or self.clamp <= 0:
            raise ValueError("batch_size, lr, tolerance and clamp must be positive")

    def target(self) -> GaussianMixture:
        k = len(self.target_means)
        return GaussianMixture(np.full(k, 1.0 / k), np.array(self.target_means), np.array(self.target_sigmas) ** 2)


GMM1D_METHODS = ("alpha-bridge", "FR", "FRw", "FRw3")


class Gmm1dModel:
    """p(x) = sum_k softmax(logits)_k N(x; means_k, exp(log_sigmas_k)^2)."""

    def __init__(self, logits, means, log_sigmas):
        self.logits = ad.param(np.asarray(logits, dtype=np.float64))
        self.means = ad.param(np.asarray(means, dtype=np.float64))
        self.log_sigmas = ad.param(np.asarray(log_sigmas, dtype=np.float64))

    @property
    def params(self) -> dict[str, ad.Tensor]:
        return {"logits": self.logits, "means": self.means, "log_sigmas": self.log_sigmas}

    def weights(self) -> np.ndarray:
        w = np.exp(self.logits.data - self.logits.data.max())
        return w / w.sum()

    def mixture(self) -> GaussianMixture:
        w = self.weights()
        return GaussianMixture(w / w.sum(), self.means.data.copy(), np.exp(2.0 * self.log_sigmas.data))

    def log_prob(self, x: np.ndarray) -> ad.Tensor:
        """Per-sample log density, differentiable in the mixture parameters."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
        logw = self.logits - ad.logsumexp(self.logits, axis=0)
        r = (x - self.means) / ad.exp(self.log_sigmas)
        comp = -0.5 * ad.square(r) - self.log_sigmas - 0.5 * np.log(2.0 * np.pi)
        return ad.logsumexp(comp + logw, axis=1)


def _log_ratio_at(target: GaussianMixture, model: GaussianMixture, x: ad.Tensor) -> ad.Tensor:
    """f(x) = log q(x) - log p(x) with both densities held fixed, differentiable in x."""
    return target.logpdf_tensor(ad.reshape(x, (-1, 1))) - model.logpdf_tensor(ad.reshape(x, (-1, 1)))


def _per_component(model: Gmm1dModel, eps: np.ndarray):
    """Reparameterized draws x_k = mean_k + sigma_k * eps for every component k, (n, K)."""
    return model.means + ad.exp(model.log_sigmas) * eps[:, None]


def gmm1d_losses(model: Gmm1dModel, target: GaussianMixture, x: np.ndarray, eps: np.ndarray, clamp: float):
    """Return closures building the forward-KL, reverse-KL and alpha-divergence surrogates
    on one shared batch. Component choice is summed out so every term is pathwise."""
    frozen_p = model.mixture()
    w = ad.exp(model.logits - ad.logsumexp(model.logits, axis=0))
    n, k = eps.shape[0], model.means.shape[0]

    def fkl():
        return -ad.mean(model.log_prob(x))

    def draws():
        xs = _per_component(model, eps)
        f = ad.reshape(_log_ratio_at(target, frozen_p, ad.reshape(xs, (n * k,))), (n, k))
        return f

    def rkl():
        # E_p[-f(x)] with the density in f frozen; gradient equals that of KL(p || q)
        return ad.sum(ad.mean(-draws(), axis=0) * w)

    def forward_alpha(alpha):
        f = target.logpdf(x) - frozen_p.logpdf(x)
        wt = np.exp(np.clip(-alpha * f, -clamp, clamp))
        return ad.mean(model.log_prob(x) * wt) * (-1.0 / (1.0 - alpha))

    def reverse_alpha(alpha):
        # -(1/(1-alpha)) E_p[exp((1-alpha) f)], pathwise in x and in the weights
        h = ad.exp(ad.clip(draws() * (1.0 - alpha), -clamp, clamp))
        return ad.sum(ad.mean(h, axis=0) * w) * (-1.0 / (1.0 - alpha))

    return fkl, rkl, forward_alpha, reverse_alpha


def _gmm1d_phase_plan(method: str, cfg: Gmm1dConfig) -> list[tuple[str, int]]:
    n = cfg.step1 + cfg.step2 + cfg.step3
    if method == "alpha-bridge":
        return [("fkl", cfg.step1), ("bridge", cfg.step2), ("rkl", cfg.step3)]
    if method == "FR":
        return [("fr", n)]
    if method == "FRw":
        return [("frw", n)]
    if method == "FRw3":
        return [("fkl", cfg.step1), ("frw", cfg.step2), ("rkl", cfg.step3)]
    raise ValueError(f"unknown method {method!r}; expected one of {GMM1D_METHODS}")


def matched_modes(model: GaussianMixture, truth: GaussianMixture, tolerance: float) -> int:
    """Number of true components with some model mean within ``tolerance``."""
    d = np.abs(model.means[:, 0][:, None] - truth.means[:, 0][None])
    return int(np.sum(d.min(axis=0) <= tolerance))


def train_gmm1d(method: str, cfg: Gmm1dConfig, seed: int, trace: list | None = None, sink: Sink | None = None) -> Gmm1dModel:
    """Fit the mixture with one of GMM1D_METHODS. ``sink`` receives a row at the end
    of every phase (kde_ll holds the exact mean held-out log-likelihood)."""
    rng = np.random.default_rng(seed)
    target = cfg.target()
    k = cfg.n_components
    model = Gmm1dModel(np.zeros(k), rng.standard_normal(k) * cfg.init_scale, np.zeros(k))
    opt = ad.AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    held = target.sample(2000, np.random.default_rng([seed, 15485863]))
    step = 0
    for phase, (mode, iters) in enumerate(_gmm1d_phase_plan(method, cfg), start=1):
        sched = replace(cfg.schedule, num_iters=max(iters, 2))
        alpha, gamma = {"fkl": (0.0, 0.0), "rkl": (1.0, 1.0)}.get(mode, (float("nan"), float("nan")))
        value = float("nan")
        for it in range(1, iters + 1):
            x = target.sample(cfg.batch_size, rng)[:, 0]
            eps = rng.standard_normal(cfg.batch_size)
            fkl, rkl, fwd, rev = gmm1d_losses(model, target, x, eps, cfg.clamp)
            if mode == "fkl":
                loss = fkl()
            elif mode == "rkl":
                loss = rkl()
            elif mode == "fr":
                loss = fkl() + rkl()
            elif mode == "frw":
                _, gamma = schedule_at(it, sched)
                loss = fkl() * (1.0 - gamma) + rkl() * gamma
            else:
                alpha, gamma = schedule_at(it, sched)
                loss = fwd(alpha) * (1.0 - gamma) + rev(alpha) * gamma
            value, g = ad.value_and_grad(loss, model.params)
            ad.adam_step(model.params, g, opt)
            step += 1
        if trace is not None:
            trace.append((mode, model.means.data.copy(), np.exp(model.log_sigmas.data), model.weights()))
        if sink is not None and iters > 0:
            mix = model.mixture()
            ll = float(np.mean(mix.logpdf(held)))
            sink(MetricsRow(step, f"{phase}:{mode}", alpha, gamma, float(value), float("nan"), ll, float("nan"), matched_modes(mix, target, cfg.tolerance)))
    return model


def gmm1d_success(model: GaussianMixture, truth: GaussianMixture, tolerance: float = 0.3) -> bool:
    """Every model component sits within ``tolerance`` of a distinct true mean,
    with its standard deviation within a factor 2 of that component's."""
    m_mu = model.means[:, 0]
    m_sd = np.sqrt(model.variances)
    t_mu = truth.means[:, 0]
    t_sd = np.sqrt(truth.variances)

    def ok(i, j):
        return abs(m_mu[i] - t_mu[j]) <= tolerance and 0.5 <= m_sd[i] / t_sd[j] <= 2.0

    # small K: search assignments of model components to distinct truth components
    def assign(i, used):
        if i == len(m_mu):
            return True
        return any(j not in used and ok(i, j) and assign(i + 1, used | {j}) for j in range(len(t_mu)))

    return assign(0, frozenset())


def gmm1d_suite(method: str, cfg: Gmm1dConfig, seeds) -> list[bool]:
    target = cfg.target()
    return [gmm1d_success(train_gmm1d(method, cfg, s).mixture(), target, cfg.tolerance) for s in seeds]
