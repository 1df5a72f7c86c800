import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import max_rel_error, numeric_grad
from sidefx.nn import (
    SELU_ALPHA,
    SELU_SCALE,
    Adam,
    Dense,
    Mlp,
    NumericalFault,
    bce_loss,
    init_weights,
    mlp_backward,
    mlp_forward,
    selu,
    selu_grad,
    sigmoid,
)


class TestSelu:
    def test_zero(self):
        assert selu(0.0) == 0.0

    def test_one(self):
        assert selu(1.0) == pytest.approx(1.0507010, abs=1e-7)

    def test_saturation(self):
        expected = SELU_SCALE * SELU_ALPHA * (math.exp(-20.0) - 1.0)
        assert selu(-20.0) == pytest.approx(expected, rel=1e-15)
        assert selu(-20.0) == pytest.approx(-1.7580993, abs=1e-7)

    def test_constants(self):
        assert SELU_ALPHA == pytest.approx(1.6732632, abs=1e-7)
        assert SELU_SCALE == pytest.approx(1.0507010, abs=1e-7)

    @pytest.mark.parametrize("fn, dfn", [(selu, selu_grad), (sigmoid, lambda x: sigmoid(x) * (1 - sigmoid(x)))])
    def test_derivative(self, fn, dfn):
        x = np.array([-3.0, -0.5, -1e-3, 1e-3, 0.7, 4.0])
        fd = (fn(x + 1e-6) - fn(x - 1e-6)) / 2e-6
        assert max_rel_error(dfn(x), fd) < 1e-6


def test_sigmoid_is_stable():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert out.tolist() == [0.0, 0.5, 1.0]


class TestInit:
    def test_lecun_variance(self):
        w = init_weights((1000, 100), "lecun_normal", np.random.default_rng(0))
        assert w.size == 10**5
        assert w.var() == pytest.approx(0.01, rel=0.1)

    def test_glorot_variance(self):
        w = init_weights((50, 50), "glorot_normal", np.random.default_rng(0))
        samples = np.concatenate([w.ravel()] + [
            init_weights((50, 50), "glorot_normal", np.random.default_rng(s)).ravel() for s in range(1, 40)
        ])
        assert samples.size == 10**5
        assert samples.var() == pytest.approx(0.02, rel=0.1)

    def test_same_seed_same_weights(self):
        a = init_weights((7, 3), "lecun_normal", np.random.default_rng(5))
        b = init_weights((7, 3), "lecun_normal", np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            init_weights((0, 3), "lecun_normal", np.random.default_rng(0))

    def test_biases_zero(self):
        mlp = Mlp.create([4, 5, 2], ["selu", "sigmoid"], "glorot_normal", np.random.default_rng(0))
        assert all(not layer.bias.any() for layer in mlp.layers)


class TestMlpForward:
    def test_identity_linear(self):
        mlp = Mlp([Dense(np.eye(3), np.zeros(3), "linear")])
        x = np.random.default_rng(0).normal(size=(4, 3))
        out, _ = mlp_forward(mlp, x)
        np.testing.assert_array_equal(out, x)

    def test_zero_weights_sigmoid(self):
        mlp = Mlp([Dense(np.zeros((5, 3)), np.zeros(5), "sigmoid")])
        out, _ = mlp_forward(mlp, np.ones((2, 3)))
        assert (out == 0.5).all()

    def test_dimension_mismatch(self):
        mlp = Mlp([Dense(np.zeros((5, 3)), np.zeros(5), "sigmoid")])
        with pytest.raises(ValueError):
            mlp_forward(mlp, np.ones((2, 4)))

    def test_layers_must_chain(self):
        with pytest.raises(ValueError, match="chain"):
            Mlp([Dense(np.zeros((5, 3)), np.zeros(5)), Dense(np.zeros((2, 4)), np.zeros(2))])


class TestMlpBackward:
    def test_linear_column_sums(self):
        w = np.random.default_rng(1).normal(size=(4, 3))
        mlp = Mlp([Dense(w, np.zeros(4), "linear")])
        _, cache = mlp_forward(mlp, np.ones((1, 3)))
        grad_in, _ = mlp_backward(mlp, cache, np.ones((1, 4)))
        np.testing.assert_allclose(grad_in[0], w.sum(axis=0))

    def test_zero_upstream(self):
        mlp = Mlp.create([3, 4, 2], ["selu", "sigmoid"], "lecun_normal", np.random.default_rng(0))
        _, cache = mlp_forward(mlp, np.ones((2, 3)))
        grad_in, grads = mlp_backward(mlp, cache, np.zeros((2, 2)))
        assert not grad_in.any()
        assert not any(a.any() for _, a in grads.named_arrays())

    def test_shape_mismatch(self):
        mlp = Mlp.create([3, 2], ["linear"], "lecun_normal", np.random.default_rng(0))
        _, cache = mlp_forward(mlp, np.ones((2, 3)))
        with pytest.raises(ValueError):
            mlp_backward(mlp, cache, np.zeros((2, 3)))


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(1, 16), min_size=2, max_size=4),
    st.lists(st.sampled_from(["selu", "sigmoid", "linear"]), min_size=3, max_size=3),
    st.integers(0, 2**32 - 1),
)
def test_mlp_gradient_check(sizes, acts, seed):
    rng = np.random.default_rng(seed)
    mlp = Mlp.create(sizes, acts[: len(sizes) - 1], "glorot_normal", rng)
    for layer in mlp.layers:
        layer.bias[:] = rng.normal(size=layer.bias.shape)
    x = rng.normal(size=(3, sizes[0]))
    upstream = rng.normal(size=(3, sizes[-1]))

    def loss():
        return float((mlp_forward(mlp, x)[0] * upstream).sum())

    _, cache = mlp_forward(mlp, x)
    grad_in, grads = mlp_backward(mlp, cache, upstream)
    # central differences carry roundoff of about 1e-16 * |loss| / eps; below 1e-6 * |loss|
    # a relative comparison only measures that noise
    floor = 1e-6 * max(1.0, abs(loss()))
    assert max_rel_error(grad_in, numeric_grad(loss, x), floor=floor) < 1e-4
    for (_, p), (_, g) in zip(mlp.named_arrays(), grads.named_arrays()):
        assert max_rel_error(g, numeric_grad(loss, p), floor=floor) < 1e-4


class TestBce:
    def test_half(self):
        loss, _ = bce_loss(np.full(7, 0.5), np.array([0, 1, 1, 0, 1, 0, 0]))
        assert loss == pytest.approx(math.log(2))

    def test_perfect(self):
        loss, _ = bce_loss(np.array([1.0, 0.0]), np.array([1, 0]))
        assert 0 < loss < 1e-6

    def test_formula(self):
        loss, grad = bce_loss(np.array([0.9, 0.1]), np.array([1, 0]))
        assert loss == pytest.approx(-math.log(0.9), rel=1e-12)
        assert loss == pytest.approx(0.10536, abs=1e-5)
        np.testing.assert_allclose(grad, [-1 / 0.9 / 2, 1 / 0.9 / 2])

    def test_gradient(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(0.05, 0.95, size=10)
        t = (rng.random(10) < 0.5).astype(float)
        _, grad = bce_loss(p, t)
        assert max_rel_error(grad, numeric_grad(lambda: bce_loss(p, t)[0], p)) < 1e-6

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=20))
    def test_nonnegative_and_minimised_at_target(self, pairs):
        p = np.array([a for a, _ in pairs])
        t = np.array([b for _, b in pairs], dtype=float)
        loss, _ = bce_loss(p, t)
        assert loss >= 0
        assert bce_loss(t, t)[0] <= loss + 1e-15


class TestAdam:
    def test_first_step(self):
        theta = {"w": np.array([0.0])}
        Adam().step(theta, {"w": np.array([1.0])})
        assert theta["w"][0] == pytest.approx(-0.001 / (1 + 1e-7), rel=1e-12)

    def test_zero_gradient(self):
        theta = {"w": np.array([0.3, -0.2])}
        Adam().step(theta, {"w": np.zeros(2)})
        np.testing.assert_array_equal(theta["w"], [0.3, -0.2])

    def test_two_equal_steps(self):
        theta = {"w": np.array([0.0])}
        opt = Adam()
        opt.step(theta, {"w": np.array([2.0])})
        first = theta["w"][0]
        opt.step(theta, {"w": np.array([2.0])})
        assert theta["w"][0] - first == pytest.approx(-0.001, rel=1e-6)
        assert opt.t == 2

    def test_defaults(self):
        opt = Adam()
        assert (opt.lr, opt.beta1, opt.beta2, opt.eps) == (1e-3, 0.9, 0.999, 1e-7)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
    def test_scale_equivariant_first_step(self, seed, c):
        g = np.random.default_rng(seed).normal(size=5)
        a, b = {"w": np.zeros(5)}, {"w": np.zeros(5)}
        Adam().step(a, {"w": g})
        Adam().step(b, {"w": c * g})
        np.testing.assert_array_equal(np.sign(a["w"]), np.sign(b["w"]))
        # |lr g/(|g|+eps) - lr cg/(|cg|+eps)| <= lr eps / min(|g|, |cg|)
        bound = 1e-3 * 1e-7 / np.minimum(np.abs(g), np.abs(c * g))
        assert (np.abs(a["w"] - b["w"]) <= bound * 1.001 + 1e-18).all()

    def test_non_finite_gradient(self):
        with pytest.raises(NumericalFault, match="f_w.layers\\[0\\].weight"):
            Adam().step({"f_w.layers[0].weight": np.zeros(2)}, {"f_w.layers[0].weight": np.array([1.0, np.nan])})
