import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kareader import tensor as T
from kareader.gradcheck import grad_check, relative_error
from kareader.tensor import ShapeError, Tensor


def naive_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def central_diff(f, x, step=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = f(x)
        x[idx] = orig - step
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2 * step)
    return g


def test_softmax_single_element():
    for x in (-3.0, 0.0, 17.5):
        assert T.softmax(Tensor([x])).data.tolist() == [1.0]


def test_tanh_sigmoid_at_zero():
    assert T.tanh(Tensor(0.0)).item() == 0.0
    assert T.sigmoid(Tensor(0.0)).item() == 0.5


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (3, 2))
    np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, naive_matmul(a, b), atol=1e-15)


def test_shape_errors_name_the_op():
    with pytest.raises(ShapeError, match="matmul.*\\(2, 3\\).*\\(2, 2\\)"):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))
    with pytest.raises(ShapeError, match="add"):
        T.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    with pytest.raises(ShapeError, match="concat"):
        T.concat([Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 3)))], axis=0)


def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    T.sum_(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_sigmoid_dot_at_zero():
    x = np.array([0.3, -1.2, 2.0])
    w = Tensor(np.zeros(3), requires_grad=True)
    T.sigmoid(T.dot(w, Tensor(x))).backward()
    np.testing.assert_allclose(w.grad, 0.25 * x, atol=1e-15)


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        T.backward(T.tanh(x))


def test_gradients_accumulate_until_zeroed():
    x = Tensor(np.ones(2), requires_grad=True)
    T.sum_(x).backward()
    T.sum_(x).backward()
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])
    x.zero_grad()
    assert x.grad is None


def test_tape_visits_each_node_once_in_topological_order():
    x = Tensor(np.ones(2), requires_grad=True)
    y = T.tanh(x)
    z = T.add(T.mul(y, y), y)
    loss = T.sum_(z)
    order = T.tape(loss)
    assert len(order) == len({id(n) for n in order})
    pos = {id(n): i for i, n in enumerate(order)}
    for node in order:
        for p in node._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]


OPS = {
    "add": lambda a, b: T.add(a, b),
    "sub": lambda a, b: T.sub(a, b),
    "mul": lambda a, b: T.mul(a, b),
    "matmul": lambda a, b: T.matmul(a, T.transpose(b)),
    "linear": lambda a, b: T.linear(a, b),
    "concat0": lambda a, b: T.concat([a, b], axis=0),
    "concat1": lambda a, b: T.concat([a, b], axis=1),
    "stack": lambda a, b: T.stack([a, b], axis=1),
    "slice": lambda a, b: T.mul(a[1:, ::2], b[:2, 1:]),
    "take": lambda a, b: T.mul(T.take(a, [2, 0, 2]), T.take(b, [1, 1, 0])),
    "sum0": lambda a, b: T.mul(T.sum_(a, axis=0), T.mean(b, axis=0)),
    "tanh": lambda a, b: T.tanh(T.mul(a, b)),
    "sigmoid": lambda a, b: T.sigmoid(T.mul(a, b)),
    "exp": lambda a, b: T.exp(T.add(a, b)),
    "softmax0": lambda a, b: T.mul(T.softmax(a, axis=0), b),
    "softmax1": lambda a, b: T.mul(T.softmax(a, axis=1), b),
    "dot": lambda a, b: T.dot(T.reshape(a, (-1,)), T.reshape(b, (-1,))),
    "scale": lambda a, b: T.scale(T.mul(a, b), -2.5),
    "seg_softmax": lambda a, b: T.mul(T.segment_softmax(T.reshape(a, (-1,)), [0, 1, 0, 2, 1, 0, 2, 2, 0], 3),
                                      T.reshape(b, (-1,))),
    "seg_sum": lambda a, b: T.mul(T.segment_sum(a, [1, 0, 1], 3), T.tanh(b)),
    "log": lambda a, b: T.log(T.add(T.mul(a, a), T.exp(b))),
}


@pytest.mark.parametrize("name", sorted(OPS))
@pytest.mark.parametrize("seed", range(5))
def test_op_gradient_matches_central_differences(name, seed):
    rng = np.random.default_rng(seed)
    a0, b0 = rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3, 3))
    weights = rng.uniform(-1, 1, OPS[name](Tensor(a0), Tensor(b0)).shape)

    def f(a, b):
        return float(np.sum(OPS[name](Tensor(a), Tensor(b)).data * weights))

    a, b = Tensor(a0.copy(), requires_grad=True), Tensor(b0.copy(), requires_grad=True)
    T.sum_(T.mul(OPS[name](a, b), weights)).backward()
    num_a = central_diff(lambda x: f(x, b0), a0.copy())
    num_b = central_diff(lambda x: f(a0, x), b0.copy())
    assert relative_error(a.grad, num_a).max() < 1e-6
    assert relative_error(b.grad, num_b).max() < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_softmax_normalised(rows, cols, seed):
    x = np.random.default_rng(seed).uniform(-30, 30, (rows, cols))
    for axis in (0, 1):
        y = T.softmax(Tensor(x), axis=axis).data
        assert (y >= 0).all()
        np.testing.assert_allclose(y.sum(axis=axis), 1.0, atol=1e-9)


def test_masked_softmax_zeroes_masked_entries():
    y = T.softmax(Tensor([[1.0, 2.0, 3.0]]), axis=1, mask=[[True, True, False]]).data
    assert y[0, 2] == 0.0
    np.testing.assert_allclose(y[0, :2], np.exp([1, 2]) / np.exp([1, 2]).sum())


def test_dropout_rate_zero_and_eval_are_bit_identical():
    x = Tensor(np.random.default_rng(0).normal(size=(4, 5)))
    rng = np.random.default_rng(1)
    a = T.dropout(x, 0.0, rng).data
    b = T.dropout(x, 0.0, rng).data
    c = T.dropout(x, 0.5, rng, training=False).data
    assert a.tobytes() == b.tobytes() == c.tobytes() == x.data.tobytes()


def test_inverted_dropout_scaling():
    x = Tensor(np.ones(10000))
    y = T.dropout(x, 0.2, np.random.default_rng(0)).data
    assert set(np.unique(y)) <= {0.0, 1.25}
    assert abs(y.mean() - 1.0) < 0.03


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with T.no_grad():
        y = T.tanh(x)
    assert not y.requires_grad and y._parents == ()


def test_grad_check_quadratic_exact():
    W = Tensor(np.random.default_rng(0).uniform(-1, 1, (3, 4)), requires_grad=True)
    report = grad_check(lambda: T.sum_(T.mul(W, W)), {"W": W}, step=1e-5, tol=1e-8)
    assert report.passed
    W.zero_grad()
    T.sum_(T.mul(W, W)).backward()
    np.testing.assert_allclose(W.grad, 2 * W.data, atol=1e-15)


def test_grad_check_flags_corrupted_backward_rule():
    rng = np.random.default_rng(0)
    W = Tensor(rng.uniform(-1, 1, (2, 3)), requires_grad=True)
    v = Tensor(rng.uniform(-1, 1, (3,)), requires_grad=True)

    def bad_tanh(x):
        y = np.tanh(x.data)
        # derivative off by a factor of two
        return T._make(y, (x,), lambda g: (2.0 * g * (1.0 - y * y),), "bad_tanh")

    def loss():
        return T.sum_(bad_tanh(T.matmul(W, v)))

    report = grad_check(loss, {"W": W, "v": v}, tol=1e-4)
    assert set(report.failed) == {"W", "v"}


def test_grad_check_rejects_non_finite_loss():
    W = Tensor(np.array([0.0]), requires_grad=True)
    with pytest.raises(FloatingPointError), np.errstate(divide="ignore"):
        grad_check(lambda: T.sum_(T.log(W)), {"W": W})
