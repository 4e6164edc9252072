import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from smallwav.tensor import (
    NumericError,
    Rng,
    ShapeError,
    Tensor,
    add,
    attention_core,
    clamp_min,
    conv1d,
    gelu,
    layer_norm,
    matmul,
    mul,
    softmax,
    square,
    tlog,
    tmean,
    transpose,
    tsum,
)

from helpers import close, fd_check


# ---------------------------------------------------------------------------
# worked examples with independently derived expectations


def test_matmul_small_example():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0], [6.0]])
    out = matmul(a, b)
    assert out.data.tolist() == [[17.0], [39.0]]


def test_softmax_two_logits():
    # exp(0) = 1 and exp(ln 2) = 2, so the masses are 1/3 and 2/3.
    out = softmax(Tensor([0.0, np.log(2.0)]))
    assert close(out.data, [1.0 / 3.0, 2.0 / 3.0])


def test_gelu_at_one_matches_quadrature():
    # Independent oracle: integrate the standard normal pdf up to 1.
    pdf = lambda t: np.exp(-0.5 * t * t) / np.sqrt(2.0 * np.pi)
    phi1, _ = quad(pdf, -np.inf, 1.0)
    out = gelu(Tensor([1.0]))
    assert close(out.data, [1.0 * phi1])
    assert abs(float(out.data[0]) - 0.841344746) < 1e-6


def test_layer_norm_two_values():
    x = Tensor([[1.0, 3.0]])
    out = layer_norm(x, Tensor([1.0, 1.0]), Tensor([0.0, 0.0]))
    assert close(out.data, [[-1.0, 1.0]], rtol=1e-4)


def test_conv1d_stride_two():
    x = Tensor([[1.0, 2.0, 3.0, 4.0]])
    k = Tensor([[[1.0, 1.0]]])
    out = conv1d(x, k, stride=2)
    assert out.data.tolist() == [[3.0, 7.0]]


def test_conv1d_output_length_formula():
    rng = np.random.default_rng(0)
    for length, width, stride in [(10, 3, 1), (10, 3, 2), (17, 5, 3), (8, 8, 2)]:
        x = Tensor(rng.standard_normal((2, length)))
        k = Tensor(rng.standard_normal((3, 2, width)))
        out = conv1d(x, k, stride=stride)
        assert out.shape == (3, (length - width) // stride + 1)


def test_backward_sum_of_squares():
    x = Tensor([1.0, 2.0], requires_grad=True)
    tsum(square(x)).backward()
    assert x.grad.tolist() == [2.0, 4.0]


# ---------------------------------------------------------------------------
# contracts and tape semantics


def test_matmul_rejects_mismatched_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_conv1d_rejects_short_signal():
    with pytest.raises(ShapeError):
        conv1d(Tensor(np.ones((1, 3))), Tensor(np.ones((1, 1, 4))), stride=1)


def test_conv1d_rejects_channel_mismatch():
    with pytest.raises(ShapeError):
        conv1d(Tensor(np.ones((2, 8))), Tensor(np.ones((1, 3, 2))), stride=1)


def test_attention_rejects_bad_head_count():
    q = Tensor(np.ones((4, 6)))
    with pytest.raises(ShapeError):
        attention_core(q, q, q, n_heads=4)


def test_attention_rejects_integer_inputs():
    q = Tensor(np.ones((2, 4)))
    bad = Tensor(np.ones((2, 4)))
    bad.data = np.ones((2, 4), dtype=np.int8)
    with pytest.raises(TypeError):
        attention_core(bad, q, q, n_heads=2)


def test_log_rejects_nonpositive():
    with pytest.raises(NumericError):
        tlog(Tensor([1.0, 0.0]))


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        mul(x, 2.0).backward()


def test_grads_accumulate_until_cleared():
    x = Tensor([3.0], requires_grad=True)
    loss = tsum(square(x))
    loss.backward()
    first = x.grad.copy()
    tsum(square(x)).backward()
    assert close(x.grad, 2.0 * first)
    x.zero_grad()
    assert x.grad is None


def test_detach_blocks_gradient():
    x = Tensor([2.0], requires_grad=True)
    tsum(mul(x.detach(), x)).backward()
    # d/dx of detach(x) * x is detach(x), not 2x.
    assert close(x.grad, [2.0])


def test_no_tape_without_requires_grad():
    x = Tensor(np.ones((3, 3)))
    out = matmul(x, x)
    assert out._backward is None and out._parents == ()


def test_float32_stays_float32():
    x = Tensor(np.ones((2, 3), dtype=np.float32), requires_grad=True)
    w = Tensor(np.ones((3, 3), dtype=np.float32), requires_grad=True)
    out = gelu(add(matmul(x, w), 0.5))
    assert out.dtype == np.float32
    loss = tmean(square(out))
    assert loss.dtype == np.float32
    loss.backward()
    assert x.grad.dtype == np.float32


def test_broadcast_add_bias_column():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.array([[1.0], [2.0]]), requires_grad=True)
    tsum(add(x, b)).backward()
    assert b.grad.tolist() == [[3.0], [3.0]]
    assert x.grad.tolist() == [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]


def test_getitem_rows_backward():
    x = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    tsum(x[:2]).backward()
    expect = np.zeros((4, 3))
    expect[:2] = 1.0
    assert x.grad.tolist() == expect.tolist()


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.floats(min_value=-30, max_value=30, allow_nan=False),
        min_size=1,
        max_size=8,
    )
)
def test_softmax_rows_are_distributions(logits):
    out = softmax(Tensor(np.asarray(logits))).data
    assert np.all(out >= 0)
    assert abs(out.sum() - 1.0) < 1e-9


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.floats(min_value=-30, max_value=30, allow_nan=False),
        min_size=2,
        max_size=8,
    ),
    st.floats(min_value=-50, max_value=50, allow_nan=False),
)
def test_softmax_shift_invariance(logits, shift):
    x = np.asarray(logits)
    a = softmax(Tensor(x)).data
    b = softmax(Tensor(x + shift)).data
    assert close(a, b, rtol=1e-9, floor=1e-12)


def test_attention_uniform_when_query_is_zero():
    # Zero queries give flat scores, so the output is the mean of v rows.
    rng = np.random.default_rng(3)
    v = rng.standard_normal((5, 8))
    out = attention_core(
        Tensor(np.zeros((5, 8))), Tensor(rng.standard_normal((5, 8))), Tensor(v), n_heads=2
    )
    assert close(out.data, np.tile(v.mean(axis=0), (5, 1)))


# ---------------------------------------------------------------------------
# finite-difference spot checks (the acceptance suite runs the full sweep)


def _fd_cases():
    r = np.random.default_rng(7)
    yield "matmul", lambda a, b: matmul(a, b), [r.standard_normal((3, 4)), r.standard_normal((4, 2))], None
    yield "add_broadcast", lambda a, b: add(a, b), [r.standard_normal((3, 4)), r.standard_normal((3, 1))], None
    yield "mul", lambda a, b: mul(a, b), [r.standard_normal((2, 5)), r.standard_normal((2, 5))], None
    yield "sum_axis", lambda a: tsum(a, axis=0), [r.standard_normal((3, 4))], None
    yield "mean", lambda a: tmean(a), [r.standard_normal((4, 3))], None
    yield "square", square, [r.standard_normal((3, 3))], None
    yield "log", tlog, [r.uniform(0.2, 3.0, (3, 4))], None
    yield "clamp_min", lambda a: clamp_min(a, 0.5), [r.uniform(0.7, 2.0, (6,))], None
    yield "softmax", lambda a: softmax(a, axis=-1), [r.standard_normal((3, 5))], None
    yield "gelu", gelu, [r.standard_normal((4, 4))], None
    yield "transpose", transpose, [r.standard_normal((3, 5))], None
    yield "slice", lambda a: a[1:3], [r.standard_normal((5, 4))], None
    yield "layer_norm", layer_norm, [r.standard_normal((4, 6)), r.uniform(0.5, 1.5, 6), r.standard_normal(6)], None
    yield "conv1d", lambda x, k: conv1d(x, k, stride=2), [r.standard_normal((2, 12)), r.standard_normal((3, 2, 4))], None
    yield "attention", lambda q, k, v: attention_core(q, k, v, 2), [r.standard_normal((4, 6)) for _ in range(3)], None


@pytest.mark.parametrize("name,forward,arrays,mask", list(_fd_cases()), ids=lambda c: c if isinstance(c, str) else "")
def test_gradients_match_finite_differences(name, forward, arrays, mask):
    ok, worst = fd_check(forward, arrays, grad_mask=mask)
    assert ok, f"{name}: worst elementwise gap {worst:.3e}"


# ---------------------------------------------------------------------------
# random streams


def test_rng_is_reproducible():
    a = Rng(42).normal((4, 4))
    b = Rng(42).normal((4, 4))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, Rng(43).normal((4, 4)))


def test_rng_children_are_independent_of_draw_order():
    root = Rng(7)
    c0 = root.child(0).normal(8)
    # Drawing from the root before splitting must not disturb children.
    root2 = Rng(7)
    root2.normal(100)
    assert np.array_equal(c0, root2.child(0).normal(8))
    assert not np.array_equal(c0, root2.child(1).normal(8))


def test_rng_permutation_covers_range():
    p = Rng(5).permutation(10)
    assert sorted(p.tolist()) == list(range(10))
