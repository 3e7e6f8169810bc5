import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from epban import tensor as T
from epban.errors import ContractError, DegenerateInputError, ShapeError
from epban.gradcheck import check_gradients
from epban.tensor import Tensor, no_grad


def test_matmul_identity_and_hand_oracle():
    eye = Tensor(np.eye(3))
    assert np.array_equal(T.matmul(eye, eye).data, np.eye(3))
    out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[0.0], [1.0]]))
    assert np.array_equal(out.data, [[2.0], [4.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_matmul_gradcheck(rng):
    errs = check_gradients(T.matmul, [rng.uniform(-1, 1, (4, 5)), rng.uniform(-1, 1, (5, 3))])
    assert max(errs) < 1e-4


def test_softmax_closed_forms():
    assert np.allclose(T.softmax(Tensor(np.full(4, 2.0)), axis=0).data, 0.25, atol=1e-12)
    out = T.softmax(Tensor([0.0, np.log(3.0)]), axis=0).data
    assert np.allclose(out, [0.25, 0.75], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(x, c):
    a = T.softmax(Tensor(x), axis=1).data
    b = T.softmax(Tensor(x + c), axis=1).data
    assert np.all((a >= 0) & (a <= 1))
    assert np.allclose(a.sum(axis=1), 1.0, atol=1e-6)
    assert np.max(np.abs(a - b)) < 1e-6


def test_stddev_all_examples():
    assert T.stddev_all(Tensor(np.full((3, 3), 2.5))).item() == 0.0
    assert T.stddev_all(Tensor([1.0, 2.0, 3.0, 4.0])).item() == pytest.approx(np.sqrt(1.25), abs=1e-9)


def test_stddev_all_per_slice_and_homogeneous(rng):
    x = rng.normal(size=(4, 3, 3))
    s = T.stddev_all(Tensor(x), batch_axes=(0,)).data
    assert np.allclose(s, x.reshape(4, -1).std(axis=1), atol=1e-12)
    s7 = T.stddev_all(Tensor(7 * x), batch_axes=(0,)).data
    assert np.max(np.abs(s7 / (7 * s) - 1)) < 1e-6


def test_stddev_all_needs_two_elements():
    with pytest.raises(DegenerateInputError):
        T.stddev_all(Tensor(np.ones((3, 1))), batch_axes=(0,))


def test_backward_examples():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((2, 3)))

    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    assert np.array_equal(x.grad, [2.0, 4.0, 6.0])
    loss.backward()
    assert np.array_equal(x.grad, [4.0, 8.0, 12.0])


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2).backward()


def test_shared_subexpression_accumulates_once_per_path():
    x = Tensor([3.0], requires_grad=True)
    y = x * x
    (y + y * x).sum().backward()
    # d/dx (x^2 + x^3) = 2x + 3x^2
    assert x.grad[0] == pytest.approx(6 + 27)


def test_no_grad_builds_no_graph():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = x * 2
    assert not y.requires_grad and not y._parents


def test_relu_definition():
    assert np.array_equal(T.relu(Tensor([-2.0, 3.0])).data, [0.0, 3.0])


def test_broadcast_gradients_reduce_to_operand_shape(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4,)), requires_grad=True)
    (a * b).sum().backward()
    assert b.grad.shape == (4,)
    assert np.allclose(b.grad, a.data.sum(axis=0))


def test_determinism(rng):
    x = rng.normal(size=(2, 5, 5))

    def run():
        t = Tensor(x, requires_grad=True)
        out = T.softmax(t / (T.stddev_all(t, batch_axes=(0,), keepdims=True) + 1e-8), axis=-2)
        (out * out).sum().backward()
        return out.data, t.grad

    (o1, g1), (o2, g2) = run(), run()
    assert np.array_equal(o1, o2) and np.array_equal(g1, g2)


@pytest.mark.parametrize("name", ["add", "mul", "div", "sigmoid", "exp", "sqrt"])
def test_elementwise_gradcheck(name, rng):
    fn = getattr(T, name)
    if name in ("add", "mul", "div"):
        arrays_ = [rng.uniform(-1, 1, (3, 4)), rng.uniform(0.5, 1.5, (3, 4))]
    elif name == "sqrt":
        arrays_ = [rng.uniform(0.5, 1.5, (3, 4))]
    else:
        arrays_ = [rng.uniform(-1, 1, (3, 4))]
    assert max(check_gradients(fn, arrays_)) < 1e-4


def test_dtype_policy():
    assert Tensor(np.ones(2, dtype=np.float32)).dtype == np.float32
    assert Tensor([1.0], dtype="f32").dtype == np.float32
    assert Tensor(np.ones(2, dtype=np.int64)).dtype == np.float64
    with pytest.raises(ValueError):
        Tensor([1.0], dtype="f16")
