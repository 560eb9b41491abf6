"""Fully connected networks used as generator, discriminator, encoder and
mode classifier, plus spectral normalization and checkpoint serialization."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LOGSIG_MIN, LOGSIG_MAX = -10.0, 5.0


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int
    activation: str = "lrelu"
    regularizer: str = "none"  # or "sn"
    slope: float = ad.LEAKY_SLOPE

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.in_dim < 1 or self.out_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer sizes must be positive")
        if self.activation not in ("lrelu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.regularizer not in ("none", "sn"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim, *self.hidden, self.out_dim]


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list[Tensor]  # (fan_in, fan_out)
    biases: list[Tensor]
    u: list[np.ndarray] | None = None  # power-iteration state, one fan_out vector per layer
    v: list[np.ndarray] | None = None

    @property
    def named(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        out = {k: t.data for k, t in self.named.items()}
        if self.u is not None:
            for i, (u, v) in enumerate(zip(self.u, self.v)):
                out[f"u{i}"] = u
                out[f"v{i}"] = v
        return out

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for k, t in self.named.items():
            t.data = np.array(arrays[k], dtype=np.float64)
        if self.u is not None:
            self.u = [np.array(arrays[f"u{i}"]) for i in range(len(self.u))]
            self.v = [np.array(arrays[f"v{i}"]) for i in range(len(self.v))]

    def copy(self) -> MlpParams:
        p = MlpParams(
            self.spec,
            [ad.param(w.data) for w in self.weights],
            [ad.param(b.data) for b in self.biases],
            None if self.u is None else [u.copy() for u in self.u],
            None if self.v is None else [v.copy() for v in self.v],
        )
        return p


def frozen(params: MlpParams) -> MlpParams:
    """View sharing the current values as constants (spectral-norm state included),
    so losses built on it do not backpropagate into these weights."""
    return MlpParams(
        params.spec,
        [ad.tensor(w.data) for w in params.weights],
        [ad.tensor(b.data) for b in params.biases],
        params.u,
        params.v,
    )


def _unit(x: np.ndarray) -> np.ndarray:
    return x / max(float(np.linalg.norm(x)), 1e-12)


def init(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """He-normal weights N(0, 2/fan_in), zero biases."""
    sizes = spec.sizes
    weights, biases = [], []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        weights.append(ad.param(rng.standard_normal((fi, fo)) * np.sqrt(2.0 / fi)))
        biases.append(ad.param(np.zeros(fo)))
    u = v = None
    if spec.regularizer == "sn":
        u = [_unit(rng.standard_normal(fo)) for fo in sizes[1:]]
        v = [_unit(w.data @ ui) for w, ui in zip(weights, u)]
    return MlpParams(spec, weights, biases, u, v)


def spectral_normalize(params: MlpParams, n_iter: int = 1) -> list[float]:
    """Advance the persistent power iteration; returns the sigma estimates.

    For W of shape (fan_in, fan_out): v <- W u / |W u|, u <- W^T v / |W^T v|,
    sigma = v^T W u. The forward pass divides each weight by this sigma.
    """
    if params.u is None:
        raise ValueError("network was not built with spectral normalization")
    sigmas = []
    for i, w in enumerate(params.weights):
        u = params.u[i]
        for _ in range(n_iter):
            v = _unit(w.data @ u)
            u = _unit(w.data.T @ v)
        params.u[i], params.v[i] = u, v
        sigmas.append(float(v @ w.data @ u))
    return sigmas


def _sn_weight(w: Tensor, u: np.ndarray, v: np.ndarray) -> Tensor:
    # W / sigma with sigma = v^T W u; d sigma / dW = v u^T
    sigma = float(v @ w.data @ u)
    wd = w.data

    def vjp(g):
        return (g / sigma - (np.sum(g * wd) / sigma**2) * np.outer(v, u),)

    return ad.custom_op(wd / sigma, (w,), vjp, "spectral_norm")


def effective_weights(params: MlpParams) -> list[Tensor]:
    """Weights as used in the forward pass (divided by sigma under SN, with
    the gradient flowing through sigma and u, v held constant)."""
    if params.u is None:
        return list(params.weights)
    return [_sn_weight(w, u, v) for w, u, v in zip(params.weights, params.u, params.v)]


def _activate(spec: MlpSpec, a: Tensor) -> Tensor:
    return ad.leaky_relu(a, spec.slope) if spec.activation == "lrelu" else ad.tanh(a)


def mlp_forward(params: MlpParams, x, final_activation: bool = False) -> Tensor:
    """Affine/activation stack; the last layer is affine unless ``final_activation``."""
    x = ad.tensor(x)
    if x.ndim != 2 or x.shape[1] != params.spec.in_dim:
        raise ValueError(f"expected input (n, {params.spec.in_dim}), got {x.shape}")
    ws = effective_weights(params)
    h = x
    last = len(ws) - 1
    for i, (w, b) in enumerate(zip(ws, params.biases)):
        h = h @ w + b
        if i < last or final_activation:
            h = _activate(params.spec, h)
    return h


def scalar_out(params: MlpParams, x) -> Tensor:
    """(n,) output of a network with out_dim 1."""
    y = mlp_forward(params, x)
    return ad.reshape(y, (y.shape[0],))


def input_gradient_expr(params: MlpParams, x) -> Tensor:
    """Expression for the input gradient of a scalar-output piecewise-linear net.

    Activation slopes are read off the forward pass and frozen, so the value
    equals the reverse-mode input gradient while the expression stays
    differentiable in the weights (valid almost everywhere).
    """
    spec = params.spec
    if spec.activation != "lrelu":
        raise ValueError("input_gradient_expr needs a piecewise-linear activation")
    if spec.out_dim != 1:
        raise ValueError("input_gradient_expr needs a scalar-output network")
    xd = np.asarray(ad.tensor(x).data)
    ws = effective_weights(params)
    masks = []
    h = xd
    for w, b in zip(ws[:-1], params.biases[:-1]):
        a = h @ w.data + b.data
        d = np.where(a > 0, 1.0, spec.slope)
        masks.append(d)
        h = a * d
    g = ad.tensor(np.ones((xd.shape[0], 1))) @ ws[-1].T
    for w, d in zip(reversed(ws[:-1]), reversed(masks)):
        g = (g * d) @ w.T
    return g


# encoder -------------------------------------------------------------------------


@dataclass
class EncoderParams:
    """Shared trunk (every layer activated) and two linear heads for mu and log sigma."""

    trunk: MlpParams
    mu_head: MlpParams
    logsig_head: MlpParams

    @property
    def named(self) -> dict[str, Tensor]:
        out = {}
        for pre, p in (("trunk.", self.trunk), ("mu.", self.mu_head), ("logsig.", self.logsig_head)):
            out.update({pre + k: t for k, t in p.named.items()})
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.named.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for k, t in self.named.items():
            t.data = np.array(arrays[k], dtype=np.float64)


def frozen_encoder(enc: EncoderParams) -> EncoderParams:
    return EncoderParams(frozen(enc.trunk), frozen(enc.mu_head), frozen(enc.logsig_head))


def init_encoder(in_dim: int, hidden: tuple[int, ...], z_dim: int, rng: np.random.Generator) -> EncoderParams:
    trunk = init(MlpSpec(in_dim, hidden[:-1], hidden[-1]), rng)
    mu = init(MlpSpec(hidden[-1], (), z_dim), rng)
    logsig = init(MlpSpec(hidden[-1], (), z_dim), rng)
    return EncoderParams(trunk, mu, logsig)


def encoder_forward(enc: EncoderParams, x) -> tuple[Tensor, Tensor]:
    """(mu, log sigma) of q(z|x); log sigma is clamped to [-10, 5]."""
    h = mlp_forward(enc.trunk, x, final_activation=True)
    mu = mlp_forward(enc.mu_head, h)
    logsig = ad.clip(mlp_forward(enc.logsig_head, h), LOGSIG_MIN, LOGSIG_MAX)
    return mu, logsig


def reparameterize(mu: Tensor, logsig: Tensor, eps: np.ndarray) -> Tensor:
    return mu + ad.exp(logsig) * eps


# serialization -------------------------------------------------------------------

_MAGIC = b"ABCK0001"


def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    """Flat little-endian float64 blob preceded by a JSON header.

    Layout: 8-byte magic, uint64 header length, UTF-8 JSON header, data.
    """
    entries, offset = [], 0
    blobs = []
    for name, a in arrays.items():
        a = np.ascontiguousarray(a, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size
        blobs.append(a.tobytes())
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + n])
    data = np.frombuffer(raw[16 + n :], dtype="<f8")
    out = {}
    for e in header["arrays"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        out[e["name"]] = data[e["offset"] : e["offset"] + size].reshape(e["shape"]).astype(np.float64)
    return out, header["meta"]


def constant_net(spec: MlpSpec, value: float = 0.0) -> MlpParams:
    """Zero weights with the output bias set to ``value``: f(x) == value."""
    sizes = spec.sizes
    ws = [ad.param(np.zeros((fi, fo))) for fi, fo in zip(sizes[:-1], sizes[1:])]
    bs = [ad.param(np.zeros(fo)) for fo in sizes[1:]]
    bs[-1].data = np.full(sizes[-1], float(value))
    return MlpParams(spec, ws, bs)
