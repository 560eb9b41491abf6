import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphabridge import autodiff as ad
from alphabridge.nets import MlpSpec, init, input_gradient_expr, mlp_forward, scalar_out

from helpers import fd_grad, rel_err


def test_square_value_and_grad():
    x = ad.param(3.0)
    y = x * x
    assert y.item() == 9.0
    (g,) = ad.grad(y, [x])
    assert g == 6.0


def test_product_rule():
    x, y = ad.param(2.0), ad.param(5.0)
    gx, gy = ad.grad(x * y, [x, y])
    assert (gx, gy) == (5.0, 2.0)


def test_non_scalar_seed_rejected():
    x = ad.param(np.ones(3))
    with pytest.raises(ValueError):
        ad.grad(x * 2.0, [x])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_in_forward_raises():
    x = ad.param(np.array([1.0, 0.0]))
    with pytest.raises(ad.NonFiniteError):
        ad.log(x)
    with pytest.raises(ad.NonFiniteError):
        x / 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_in_backward_raises():
    x = ad.param(np.array([0.0]))
    y = ad.sum(ad.sqrt(x))  # value 0, derivative infinite
    with pytest.raises(ad.NonFiniteError):
        ad.grad(y, [x])


def test_unreachable_leaf_gets_zero():
    x, y = ad.param(np.ones(2)), ad.param(np.ones(3))
    gx, gy = ad.grad(ad.sum(x), [x, y])
    assert np.array_equal(gx, np.ones(2)) and np.array_equal(gy, np.zeros(3))


def test_shared_subexpression_accumulates():
    x = ad.param(2.0)
    a = x * 3.0
    (g,) = ad.grad(a * a + a, [x])
    assert g == pytest.approx(2 * 6.0 * 3.0 + 3.0)


# stop-gradient -------------------------------------------------------------------------


def test_stop_gradient_value():
    assert ad.stop_gradient(ad.param(4.0)).item() == 4.0


def test_stop_gradient_one_free_factor():
    x = ad.param(4.0)
    (g,) = ad.grad(ad.stop_gradient(x) * x, [x])
    assert g == 4.0


def test_stop_gradient_blocks_all_paths():
    x = ad.param(4.0)
    (g,) = ad.grad(ad.square(ad.stop_gradient(x)), [x])
    assert g == 0.0


# per-op finite differences ---------------------------------------------------------------

UNARY = {
    "exp": lambda a: ad.exp(a * 0.5),
    "log": lambda a: ad.log(ad.square(a) + 0.5),
    "sqrt": lambda a: ad.sqrt(ad.square(a) + 0.5),
    "sigmoid": ad.sigmoid,
    "softplus": ad.softplus,
    "tanh": ad.tanh,
    "lrelu": ad.leaky_relu,
    "square": ad.square,
    "pow3": lambda a: a**3,
    "neg": lambda a: -a,
    "sum0": lambda a: ad.sum(a, axis=0),
    "mean1": lambda a: ad.mean(a, axis=1, keepdims=True),
    "logsumexp": lambda a: ad.logsumexp(a, axis=1),
    "logsumexp_keep": lambda a: ad.logsumexp(a, axis=0, keepdims=True),
    "reshape": lambda a: ad.reshape(a, (-1,)),
    "transpose": lambda a: a.T,
    "getitem": lambda a: a[1:, :2],
    "clip": lambda a: ad.clip(a, -0.7, 0.9),
}
BINARY = {
    "add_bcast": lambda a, b: a + b[0],
    "sub": lambda a, b: a - b,
    "mul_bcast": lambda a, b: a * b[:1],
    "div": lambda a, b: a / (ad.square(b) + 1.0),
    "matmul": lambda a, b: a @ b.T,
    "concat": lambda a, b: ad.concat([a, b], axis=1),
}


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(sorted(UNARY) + sorted(BINARY)), st.integers(0, 2**31 - 1))
def test_ops_match_finite_differences(name, seed):
    rng = np.random.default_rng(seed)
    a0, b0 = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    if name == "clip":
        # keep every entry away from the clamp kinks
        a0 = np.where(np.abs(a0 + 0.7) < 1e-3, a0 + 0.01, a0)
        a0 = np.where(np.abs(a0 - 0.9) < 1e-3, a0 + 0.01, a0)
    if name == "lrelu":
        a0 = np.where(np.abs(a0) < 1e-3, 0.1, a0)
    if name in UNARY:
        op = UNARY[name]
        w = rng.standard_normal(op(ad.tensor(a0)).shape)

        def f(a):
            return float(np.sum(op(ad.tensor(a)).data * w))

        a = ad.param(a0)
        (g,) = ad.grad(ad.sum(op(a) * w), [a])
        assert rel_err(g, fd_grad(f, a0)) < 1e-5
    else:
        op = BINARY[name]
        w = rng.standard_normal(op(ad.tensor(a0), ad.tensor(b0)).shape)
        a, b = ad.param(a0), ad.param(b0)
        ga, gb = ad.grad(ad.sum(op(a, b) * w), [a, b])
        fa = fd_grad(lambda x: float(np.sum(op(ad.tensor(x), ad.tensor(b0)).data * w)), a0)
        fb = fd_grad(lambda x: float(np.sum(op(ad.tensor(a0), ad.tensor(x)).data * w)), b0)
        assert rel_err(ga, fa) < 1e-5 and rel_err(gb, fb) < 1e-5


def test_ops_do_not_mutate_inputs():
    rng = np.random.default_rng(0)
    a0 = rng.standard_normal((3, 4))
    a = ad.param(a0)
    keep = a.data.copy()
    out = ad.sum(ad.leaky_relu(a) * ad.exp(a) + ad.logsumexp(a, axis=1)[:, None])
    ad.grad(out, [a])
    assert np.array_equal(a.data, keep)


def _mlp_loss(params, x):
    return ad.sum(ad.square(scalar_out(params, x)))


def test_mlp_against_finite_differences():
    rng = np.random.default_rng(1)
    net = init(MlpSpec(2, (16, 16), 1), rng)
    x = rng.standard_normal((5, 2))
    grads = ad.grad(_mlp_loss(net, x), net.weights + net.biases)
    for leaf, g in zip(net.weights + net.biases, grads):
        def f(v, leaf=leaf):
            old = leaf.data
            leaf.data = v
            try:
                return float(_mlp_loss(net, x).data)
            finally:
                leaf.data = old

        assert rel_err(g, fd_grad(f, leaf.data)) < 1e-5


def test_graph_evaluation_is_deterministic():
    rng = np.random.default_rng(2)
    net = init(MlpSpec(2, (8,), 1), rng)
    x = rng.standard_normal((4, 2))
    g1 = ad.grad(_mlp_loss(net, x), net.weights)
    g2 = ad.grad(_mlp_loss(net, x), net.weights)
    assert all(np.array_equal(a, b) for a, b in zip(g1, g2))


# explicit input gradient -------------------------------------------------------------------


def test_input_gradient_linear():
    net = init(MlpSpec(3, (), 1), np.random.default_rng(0))
    g = input_gradient_expr(net, np.ones((2, 3)))
    assert np.array_equal(g.data, np.tile(net.weights[0].data[:, 0], (2, 1)))


def test_input_gradient_negative_region():
    rng = np.random.default_rng(0)
    net = init(MlpSpec(2, (5,), 1), rng)
    net.biases[0].data = np.full(5, -100.0)  # every preactivation negative
    g = input_gradient_expr(net, rng.standard_normal((3, 2))).data
    expect = 0.2 * net.weights[0].data @ net.weights[1].data[:, 0]
    np.testing.assert_allclose(g, np.tile(expect, (3, 1)), rtol=1e-14)


@pytest.mark.parametrize("reg", ["none", "sn"])
def test_input_gradient_matches_finite_differences(reg):
    rng = np.random.default_rng(3)
    net = init(MlpSpec(2, (16, 16), 1, regularizer=reg), rng)
    x = rng.standard_normal((6, 2))
    g = input_gradient_expr(net, x).data
    fd = np.stack([fd_grad(lambda v: float(scalar_out(net, v[None]).data[0]), xi) for xi in x])
    assert rel_err(g, fd) < 1e-5


def test_input_gradient_equals_reverse_mode():
    rng = np.random.default_rng(4)
    net = init(MlpSpec(2, (16, 16), 1), rng)
    x = ad.param(rng.standard_normal((7, 2)))
    (g,) = ad.grad(ad.sum(scalar_out(net, x)), [x])
    np.testing.assert_allclose(input_gradient_expr(net, x.data).data, g, rtol=1e-12, atol=1e-14)


def test_input_gradient_is_differentiable_in_weights():
    rng = np.random.default_rng(5)
    net = init(MlpSpec(2, (8, 8), 1), rng)
    x = rng.standard_normal((4, 2))
    w = net.weights[1]

    def pen(v):
        old = w.data
        w.data = v
        try:
            return float(ad.sum(ad.square(input_gradient_expr(net, x))).data)
        finally:
            w.data = old

    (g,) = ad.grad(ad.sum(ad.square(input_gradient_expr(net, x))), [w])
    assert rel_err(g, fd_grad(pen, w.data)) < 1e-5


def test_input_gradient_rejects_smooth_activation():
    net = init(MlpSpec(2, (4,), 1, activation="tanh"), np.random.default_rng(0))
    with pytest.raises(ValueError):
        input_gradient_expr(net, np.zeros((1, 2)))


# Adam ----------------------------------------------------------------------------------------


def test_adam_zero_grad_keeps_params():
    p = {"w": ad.param(np.array([1.0, -2.0]))}
    ad.adam_step(p, {"w": np.zeros(2)}, ad.AdamState(lr=0.1))
    assert np.array_equal(p["w"].data, [1.0, -2.0])


def test_adam_first_step_by_hand():
    # m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps)
    p = {"w": ad.param(1.0)}
    st_ = ad.AdamState(lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8)
    ad.adam_step(p, {"w": np.array(1.0)}, st_)
    assert st_.t == 1
    assert p["w"].data == pytest.approx(1.0 - 1e-3 / (1.0 + 1e-8), abs=1e-15)


def test_adam_shape_mismatch():
    p = {"w": ad.param(np.zeros(3))}
    with pytest.raises(ValueError):
        ad.adam_step(p, {"w": np.zeros(2)}, ad.AdamState())


def test_adam_trajectories_bitwise_identical():
    def run():
        rng = np.random.default_rng(11)
        net = init(MlpSpec(2, (8,), 1), rng)
        opt = ad.AdamState(lr=1e-2)
        for _ in range(20):
            x = rng.standard_normal((5, 2))
            _, g = ad.value_and_grad(_mlp_loss(net, x), net.named)
            ad.adam_step(net.named, g, opt)
        return np.concatenate([t.data.ravel() for t in net.named.values()])

    assert np.array_equal(run(), run())


@given(st.floats(-10, 10), st.integers(1, 50))
def test_adam_second_moment_nonnegative(g, steps):
    p = {"w": ad.param(0.0)}
    s = ad.AdamState()
    for _ in range(steps):
        ad.adam_step(p, {"w": np.array(g)}, s)
    assert s.v["w"] >= 0 and s.t == steps
