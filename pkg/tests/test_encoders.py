import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgtpp.encoders import (
    BipartiteEncoderParams,
    HomogeneousEncoderParams,
    clique_decompose,
    encode_bipartite,
    encode_homogeneous,
    encode_pairwise,
)
from hgtpp.tensor import Parameter, backward, ops, recording


def softplus(x):
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def random_params(rng, d, scale=1.0):
    mats = {n: scale * rng.normal(size=(d, d)) for n in ("W_Q", "W_K", "W_V", "W_s")}
    return HomogeneousEncoderParams.from_arrays(**mats, W_o=rng.normal(size=(d, 1)), b_o=np.array(rng.normal()))


def straight_line_side(p, xs, peers, exclude_self, kv=None):
    """Column-vector equations with explicit loops; returns (mean softplus, d list).

    ``kv`` supplies W_K and W_V when keys come from the other side of a
    bipartite hyperedge; queries and the readout always use ``p``.
    """
    kv = p if kv is None else kv
    WQ, Ws, Wo, bo = (t.value for t in (p.W_Q, p.W_s, p.W_o, p.b_o))
    WK, WV = kv.W_K.value, kv.W_V.value
    ds, total = [], 0.0
    for i, vi in enumerate(xs):
        js = [j for j in range(len(peers)) if not (exclude_self and j == i)]
        e = [float((WQ.T @ vi) @ (WK.T @ peers[j])) for j in js]
        m = max(e)
        a = [math.exp(x - m) for x in e]
        z = sum(a)
        acc = np.zeros(len(vi))
        for aj, j in zip(a, js):
            acc = acc + (aj / z) * (WV.T @ peers[j])
        di = np.tanh(acc)
        s = Ws @ vi
        o = float(Wo[:, 0] @ ((di - s) ** 2)) + float(bo)
        total += softplus(o)
        ds.append(di)
    return total / len(xs), ds


@pytest.mark.parametrize("seed", range(100))
def test_homogeneous_matches_straight_line(seed):
    rng = np.random.default_rng(seed)
    d, k = 4, int(rng.integers(2, 6))
    p = random_params(rng, d, 0.5)
    xs = [rng.normal(size=d) for _ in range(k)]
    res = encode_homogeneous(p, xs)
    want, ds = straight_line_side(p, xs, xs, True)
    assert abs(res.score.item() - want) < 1e-12
    assert np.allclose(res.dynamic.value, np.array(ds), atol=1e-12)


@pytest.mark.parametrize("seed", range(100))
def test_bipartite_matches_straight_line(seed):
    rng = np.random.default_rng(1000 + seed)
    d = 4
    k, k2 = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    p = BipartiteEncoderParams(random_params(rng, d, 0.5), random_params(rng, d, 0.5))
    left = [rng.normal(size=d) for _ in range(k)]
    right = [rng.normal(size=d) for _ in range(k2)]
    res = encode_bipartite(p, left, right)
    sl, dl = straight_line_side(p.left, left, right, False, kv=p.right)
    sr, dr = straight_line_side(p.right, right, left, False, kv=p.left)
    assert abs(res.score.item() - (sl + sr)) < 1e-12
    assert np.allclose(res.dynamic.value, np.array(dl + dr), atol=1e-12)


def zero_params(d):
    z = np.zeros((d, d))
    return HomogeneousEncoderParams.from_arrays(W_Q=z, W_K=z, W_V=z, W_s=z, W_o=np.zeros((d, 1)), b_o=np.array(0.0))


def test_zero_homogeneous_is_log2():
    res = encode_homogeneous(zero_params(4), [np.zeros(4)] * 3)
    assert abs(res.score.item() - math.log(2)) < 1e-15


def test_zero_bipartite_is_two_log2():
    p = BipartiteEncoderParams(zero_params(4), zero_params(4))
    assert abs(encode_bipartite(p, [np.zeros(4)], [np.zeros(4)] * 2).score.item() - 2 * math.log(2)) < 1e-15


def test_single_peer_attention_weight_is_one():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 2, 4))
    m = np.ones((1, 2), bool)
    out = ops.attention(x, x, x, m, m, exclude_self=True)
    assert np.allclose(out.alpha[0, 0, 1], 1.0) and np.allclose(out.alpha[0, 1, 0], 1.0)
    one = np.ones((1, 1), bool)
    cross = ops.attention(x[:, :1], x[:, 1:], x[:, 1:], one, one, exclude_self=False)
    assert np.allclose(cross.alpha, 1.0)


@pytest.mark.parametrize("seed", range(100))
def test_homogeneous_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    p = random_params(rng, 4)
    xs = [rng.normal(size=4) for _ in range(k)]
    perm = rng.permutation(k)
    a = encode_homogeneous(p, xs)
    b = encode_homogeneous(p, [xs[i] for i in perm])
    assert abs(a.score.item() - b.score.item()) < 1e-9
    assert np.allclose(a.dynamic.value[perm], b.dynamic.value, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_bipartite_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    k, k2 = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    p = BipartiteEncoderParams(random_params(rng, 4), random_params(rng, 4))
    left = [rng.normal(size=4) for _ in range(k)]
    right = [rng.normal(size=4) for _ in range(k2)]
    a = encode_bipartite(p, left, right).score.item()
    b = encode_bipartite(p, [left[i] for i in rng.permutation(k)], [right[i] for i in rng.permutation(k2)]).score.item()
    assert abs(a - b) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_scores_positive(seed):
    rng = np.random.default_rng(seed)
    # moderate scale: softplus underflows to 0.0 in float64 below about -745
    p = random_params(rng, 4)
    xs = [2 * rng.normal(size=4) for _ in range(3)]
    assert encode_homogeneous(p, xs).score.item() > 0
    assert encode_pairwise(xs[0], xs[1]).item() > 0


def test_every_member_gets_gradient():
    rng = np.random.default_rng(5)
    p = random_params(rng, 4)
    xs = [Parameter(f"v{i}", rng.normal(size=4)) for i in range(4)]
    with recording():
        backward(encode_homogeneous(p, xs).score)
    for x in xs:
        assert np.abs(x.grad).max() > 1e-8


def test_homogeneous_errors():
    p = random_params(np.random.default_rng(0), 4)
    with pytest.raises(ValueError):
        encode_homogeneous(p, [np.ones(4)])
    with pytest.raises(ValueError):
        encode_homogeneous(p, [np.ones(4), np.ones(3)])


def test_bipartite_errors():
    rng = np.random.default_rng(0)
    p = BipartiteEncoderParams(random_params(rng, 4), random_params(rng, 4))
    with pytest.raises(ValueError):
        encode_bipartite(p, [], [np.ones(4)])
    with pytest.raises(ValueError):
        encode_bipartite(p, [np.ones(3)], [np.ones(4)])


def test_pairwise_examples():
    assert abs(encode_pairwise(np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])).item() - math.log(2)) < 1e-15
    e = np.array([1.0, 0, 0, 0])
    assert abs(encode_pairwise(e, e).item() - 1.313262) < 1e-6
    v1, v2 = np.array([0.3, 0.1]), np.array([0.2, 0.5])
    vals = [encode_pairwise(c * v1, c * v2).item() for c in (0.5, 1.0, 2.0)]
    assert vals[0] < vals[1] < vals[2]
    with pytest.raises(ValueError):
        encode_pairwise(np.ones(3), np.ones(4))


def test_clique_decompose():
    assert clique_decompose({1, 2, 3}) == [(1, 2), (1, 3), (2, 3)]
    assert clique_decompose({1, 2}) == [(1, 2)]
    assert len(clique_decompose(range(5))) == 10
    with pytest.raises(ValueError):
        clique_decompose({4})
