import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgtpp.tensor import (
    DomainError,
    Parameter,
    ShapeError,
    Tensor,
    TapeError,
    apply,
    backward,
    checkpoint,
    finite_difference_check,
    ops,
    recording,
)


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        o = flat[i]
        flat[i] = o + eps
        up = f()
        flat[i] = o - eps
        down = f()
        flat[i] = o
        gf[i] = (up - down) / (2 * eps)
    return g


def check_vjp(build, *shapes, seed=0, positive=False, tol=1e-5):
    """Compare analytic and central-difference gradients of sum(build(*params) * w)."""
    rng = np.random.default_rng(seed)
    params = []
    for i, s in enumerate(shapes):
        v = rng.uniform(0.5, 1.5, size=s) if positive else rng.normal(size=s)
        params.append(Parameter(f"p{i}", v))
    out_shape = build(*params).shape
    w = rng.normal(size=out_shape)

    def loss():
        return float(np.sum(build(*params).value * w))

    with recording():
        out = ops.sum(ops.mul(build(*params), w))
        backward(out)
    for p in params:
        num = numeric_grad(loss, p.value)
        err = np.abs(p.grad - num) / (np.abs(p.grad) + np.abs(num) + 1e-8)
        assert err.max() < tol, (p.name, err.max())


PRIMITIVES = {
    "matmul": (lambda a, b: ops.matmul(a, b), [(3, 4), (4, 2)], False),
    "matmul_batched": (lambda a, b: ops.matmul(a, b), [(2, 3, 4), (4, 2)], False),
    "matmul_vec": (lambda a, b: ops.matmul(a, b), [(3, 4), (4,)], False),
    "transpose": (lambda a: ops.transpose(a), [(3, 2)], False),
    "reshape": (lambda a: ops.reshape(a, (6,)), [(3, 2)], False),
    "add_bcast": (lambda a, b: ops.add(a, b), [(3, 2), (2,)], False),
    "sub_bcast": (lambda a, b: ops.sub(a, b), [(3, 1), (3, 4)], False),
    "mul_bcast": (lambda a, b: ops.mul(a, b), [(2, 3), (1, 3)], False),
    "scale": (lambda a: ops.scale(a, -2.5), [(4,)], False),
    "tanh": (lambda a: ops.tanh(a), [(5,)], False),
    "cos": (lambda a: ops.cos(a), [(5,)], False),
    "exp": (lambda a: ops.exp(a), [(5,)], False),
    "log": (lambda a: ops.log(a), [(5,)], True),
    "square": (lambda a: ops.square(a), [(5,)], False),
    "softplus": (lambda a: ops.softplus(a), [(5,)], False),
    "softmax": (lambda a: ops.softmax(a), [(2, 4)], False),
    "sum_axis": (lambda a: ops.sum(a, axis=1), [(3, 4)], False),
    "mean": (lambda a: ops.mean(a, axis=0), [(3, 4)], False),
    "dot": (lambda a, b: ops.dot(a, b), [(3, 4), (3, 4)], False),
    "concat": (lambda a, b: ops.concat([a, b], axis=0), [(2, 3), (1, 3)], False),
    "gather": (lambda a: ops.gather(a, np.array([[0, 2], [2, 2]])), [(3, 2)], False),
    "scatter_rows": (lambda a, b: ops.scatter_rows(a, np.array([2, 0]), b), [(3, 2), (2, 2)], False),
    "segment_sum": (lambda a: ops.segment_sum(a, np.array([1, 0, 1, 1]), 3), [(4, 2)], False),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_vjp_matches_central_differences(name):
    build, shapes, positive = PRIMITIVES[name]
    check_vjp(build, *shapes, positive=positive)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from(sorted(PRIMITIVES)))
def test_primitive_vjp_property(seed, name):
    build, shapes, positive = PRIMITIVES[name]
    check_vjp(build, *shapes, seed=seed, positive=positive)


def test_attention_vjp():
    mask = np.array([[True, True, True], [True, True, False]])

    def build(q, k, v):
        return ops.attention(q, k, v, mask, mask, exclude_self=True)

    check_vjp(build, (2, 3, 4), (2, 3, 4), (2, 3, 4))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_softmax_is_a_distribution(xs):
    y = ops.softmax(np.array(xs)).value
    assert np.all(y >= 0)
    assert abs(y.sum() - 1.0) < 1e-12


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        ops.matmul(np.ones((2, 3)), np.ones((4, 2)))


def test_add_shape_error():
    with pytest.raises(ShapeError, match="add"):
        ops.add(np.ones((2, 3)), np.ones((4,)))


def test_log_domain_error():
    with pytest.raises(DomainError):
        ops.log(np.array([1.0, 0.0]))


def test_backward_requires_scalar_root():
    p = Parameter("p", np.ones(3))
    with recording():
        y = ops.scale(p, 2.0)
        with pytest.raises(TapeError):
            backward(y)


def test_tape_consumed_once():
    p = Parameter("p", np.ones(3))
    with recording():
        y = ops.sum(ops.square(p))
        backward(y)
        with pytest.raises(TapeError):
            backward(y)
    assert np.allclose(p.grad, 2.0)


def test_unrecorded_root_rejected():
    y = ops.sum(Tensor(np.ones(3)))
    with pytest.raises(TapeError):
        backward(y)


def test_grads_accumulate_across_uses():
    p = Parameter("p", np.array([1.0, 2.0]))
    with recording():
        y = ops.add(ops.sum(ops.mul(p, 3.0)), ops.sum(ops.square(p)))
        backward(y)
    assert np.allclose(p.grad, 3.0 + 2 * p.value)


def test_no_record_outside_recording_block():
    p = Parameter("p", np.ones(2))
    y = ops.sum(ops.square(p))
    assert y.tape is None


def test_apply_dispatch():
    a = np.arange(6.0).reshape(2, 3)
    assert np.allclose(apply("matmul", a, np.eye(3)).value, a)
    assert np.allclose(apply("tanh", a).value, np.tanh(a))
    with pytest.raises(ValueError):
        apply("nope", a)


def test_gradcheck_quadratic_exact():
    w = Parameter("w", np.array([0.3, -1.2, 2.0, 0.7]))
    err = finite_difference_check(lambda: ops.scale(ops.sum(ops.square(w)), 0.5), [w], 1e-5)
    assert err < 1e-8


def test_gradcheck_constant_loss_passes():
    w = Parameter("w", np.ones(4))
    err = finite_difference_check(lambda: ops.add(ops.sum(ops.mul(w, 0.0)), 3.0), [w], 1e-5)
    assert err == 0.0


def test_gradcheck_rejects_bad_epsilon():
    w = Parameter("w", np.ones(2))
    with pytest.raises(ValueError):
        finite_difference_check(lambda: ops.sum(w), [w], 1e-2)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"a": rng.normal(size=(3, 4)), "b": np.array(2.5), "c": rng.normal(size=(5,))}
    path = tmp_path / "x.hgtpp"
    checkpoint.save(path, tensors, {"model": "HGDHE", "d": 4})
    back, meta = checkpoint.load(path)
    assert meta == {"model": "HGDHE", "d": 4}
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == np.shape(tensors[k])
        assert np.array_equal(back[k], tensors[k])
    assert path.read_bytes().startswith(b"HGTPP1")


def test_checkpoint_bytes_deterministic():
    t = {"x": np.arange(4.0)}
    assert checkpoint.dumps(t, {"b": 1, "a": 2}) == checkpoint.dumps(t, {"a": 2, "b": 1})


def test_checkpoint_bad_magic():
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"NOPE" + b"\0" * 20)


def test_checkpoint_truncated_payload():
    blob = checkpoint.dumps({"x": np.arange(4.0)})
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-8])
