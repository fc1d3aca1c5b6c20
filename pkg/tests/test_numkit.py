import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shapguard import numkit as nk


def test_add_componentwise():
    np.testing.assert_array_equal(nk.add(nk.Tensor([1.0, 2.0]), nk.Tensor([3.0, 4.0])).data, [4.0, 6.0])


def test_sigmoid_at_zero():
    assert nk.sigmoid(nk.Tensor(0.0)).item() == 0.5


def test_matmul_identity():
    v = np.array([0.3, -1.7, 2.5])
    np.testing.assert_array_equal(nk.matmul(nk.Tensor(np.eye(3)), nk.Tensor(v)).data, v)


def test_square_gradient():
    tape = nk.Tape()
    x = tape.leaf(3.0, "x")
    assert tape.backward(x * x)["x"] == pytest.approx(6.0)


def test_linear_gradient():
    tape = nk.Tape()
    w = tape.leaf([0.4, -0.9], "w")
    g = tape.backward(nk.sum_(w * np.array([1.0, 2.0])))
    np.testing.assert_allclose(g["w"], [1.0, 2.0])


def test_log_domain():
    with pytest.raises(nk.DomainError):
        nk.log(nk.Tensor([1.0, 0.0]))
    with pytest.raises(nk.DomainError):
        nk.log(nk.Tensor([-1.0]))


def test_division_by_zero():
    with pytest.raises(nk.DomainError):
        nk.div(nk.Tensor([1.0]), nk.Tensor([0.0]))


def test_shape_mismatch():
    with pytest.raises(nk.ShapeError):
        nk.add(nk.Tensor(np.ones(3)), nk.Tensor(np.ones(4)))
    with pytest.raises(nk.ShapeError):
        nk.matmul(nk.Tensor(np.ones((2, 3))), nk.Tensor(np.ones((4, 2))))


def test_backward_requires_scalar_and_single_use():
    tape = nk.Tape()
    x = tape.leaf([1.0, 2.0], "x")
    with pytest.raises(nk.TapeError, match="scalar"):
        tape.backward(x * 2.0)
    loss = nk.sum_(x)
    tape.backward(loss)
    with pytest.raises(nk.TapeError):
        tape.backward(loss)


def test_backward_rejects_foreign_loss():
    t1, t2 = nk.Tape(), nk.Tape()
    t1.leaf(1.0, "a")
    b = t2.leaf(2.0, "b")
    with pytest.raises(nk.TapeError):
        t1.backward(b * b)


def test_unreached_leaf_gets_zero_gradient():
    tape = nk.Tape()
    x = tape.leaf(2.0, "x")
    tape.leaf(np.ones(3), "unused")
    g = tape.backward(x * x)
    np.testing.assert_array_equal(g["unused"], np.zeros(3))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_forward_is_reported():
    with pytest.raises(nk.NonFiniteError):
        nk.mul(nk.Tensor([1e308]), nk.Tensor([1e308]))


# every primitive against the central-difference oracle on inputs in [-2, 2]
UNARY = {
    "sigmoid": nk.sigmoid,
    "tanh": nk.tanh,
    "neg": nk.neg,
    "log": lambda t: nk.log(t * t + 0.5),
    "abs": lambda t: nk.abs_(t + 0.05),
    "relu": lambda t: nk.relu(t + 0.05),
    "normalize": lambda t: nk.normalize(t * t + 0.1, axis=-1),
    "mean": lambda t: nk.mean(t, axis=0),
    "slice": lambda t: t[1:, ::2],
    "reshape": lambda t: t.reshape(-1),
}


def _offgrid(x):
    # keep kinks of abs/relu away from the finite-difference stencil
    return np.where(np.abs(x + 0.05) < 1e-3, x + 0.01, x)


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients_match_finite_differences(name):
    rng = np.random.default_rng(sum(map(ord, name)))
    x0 = _offgrid(rng.uniform(-2, 2, size=(3, 4)))
    weights = rng.normal(size=UNARY[name](nk.Tensor(x0)).shape)

    def loss(p):
        return nk.sum_(UNARY[name](p["x"]) * weights)

    tape = nk.Tape()
    analytic = tape.backward(loss({"x": tape.leaf(x0, "x")}))["x"]
    numeric = nk.numeric_gradient(lambda p: loss({"x": nk.Tensor(p["x"])}).item(), {"x": x0})["x"]
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


BINARY = {
    "add": nk.add,
    "sub": nk.sub,
    "mul": nk.mul,
    "div": lambda a, b: nk.div(a, b * b + 0.5),
    "matmul": lambda a, b: nk.matmul(a, b.reshape(4, 3)),
    "concat": lambda a, b: nk.concat([a, b], axis=1),
    "stack": lambda a, b: nk.stack([a, b], axis=0),
    "broadcast_add": lambda a, b: nk.add(a, b[0]),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradients_match_finite_differences(name):
    rng = np.random.default_rng(sum(map(ord, name)))
    params = {"a": rng.uniform(-2, 2, size=(3, 4)), "b": rng.uniform(-2, 2, size=(3, 4))}
    weights = rng.normal(size=BINARY[name](nk.Tensor(params["a"]), nk.Tensor(params["b"])).shape)

    def loss(a, b):
        return nk.sum_(BINARY[name](a, b) * weights)

    tape = nk.Tape()
    g = tape.backward(loss(tape.leaf(params["a"], "a"), tape.leaf(params["b"], "b")))
    num = nk.numeric_gradient(lambda p: loss(nk.Tensor(p["a"]), nk.Tensor(p["b"])).item(), params)
    for k in params:
        np.testing.assert_allclose(g[k], num[k], rtol=1e-4, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-2, 2)), arrays(np.float64, (2, 3), elements=st.floats(-2, 2)))
def test_gradient_linearity(x, w):
    """backward(L1 + L2) == backward(L1) + backward(L2)."""

    def grads(which):
        tape = nk.Tape()
        t = tape.leaf(x, "x")
        l1 = nk.sum_(nk.tanh(t) * w)
        l2 = nk.sum_(t * t)
        return tape.backward({"1": l1, "2": l2, "both": l1 + l2}[which])["x"]

    np.testing.assert_allclose(grads("both"), grads("1") + grads("2"), rtol=1e-12, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (5, 7), elements=st.floats(-2, 2)))
def test_forward_is_bitwise_deterministic(x):
    def run():
        t = nk.Tensor(x)
        return (nk.sum_(nk.sigmoid(t) * nk.tanh(t), axis=1) @ nk.Tensor(np.arange(5.0))).data

    assert run().tobytes() == run().tobytes()


def test_matmul_rows_independent_of_batch_size():
    rng = np.random.default_rng(0)
    A, W = rng.normal(size=(257, 33)), rng.normal(size=(33, 64))
    full = nk.matmul(nk.Tensor(A), nk.Tensor(W)).data
    for i in (0, 100, 256):
        assert full[i].tobytes() == nk.matmul(nk.Tensor(A[i : i + 1]), nk.Tensor(W)).data[0].tobytes()


@pytest.mark.parametrize("value", [np.float64(2.0), np.array(2.0), np.array([2.0])])
def test_numeric_gradient_handles_scalar_parameters(value):
    g = nk.numeric_gradient(lambda p: 3.0 * float(np.sum(p["b"])) ** 2, {"b": value})["b"]
    np.testing.assert_allclose(g, 12.0, rtol=1e-8)
