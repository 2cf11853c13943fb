"""Hyperedge scorers: self-attention (homogeneous), cross-attention (bipartite)
and the pairwise dot-product scorer used by the clique-decomposed baselines.

All scorers work on padded batches: ``X`` has shape (B, K, d) and ``mask``
(B, K) marks real members.  Weight conventions follow the column-vector
equations, so ``W_Qᵀ v`` for a row ``v`` is ``v @ W_Q`` and ``W_s v`` is
``v @ W_sᵀ``.
"""
import itertools
from dataclasses import dataclass, fields

import numpy as np

from .tensor import Parameter, Tensor, as_tensor, ops, uniform_init


@dataclass
class HomogeneousEncoderParams:
    W_Q: Tensor
    W_K: Tensor
    W_V: Tensor
    W_s: Tensor
    W_o: Tensor
    b_o: Tensor

    @classmethod
    def init(cls, d, rng, prefix="enc."):
        mats = {n: Parameter(prefix + n, uniform_init(rng, (d, d), d)) for n in ("W_Q", "W_K", "W_V", "W_s")}
        return cls(**mats, W_o=Parameter(prefix + "W_o", uniform_init(rng, (d, 1), d)),
                   b_o=Parameter(prefix + "b_o", np.zeros(())))

    @classmethod
    def from_arrays(cls, **arrays):
        return cls(**{k: as_tensor(v) for k, v in arrays.items()})

    @property
    def d(self):
        return self.W_Q.shape[0]

    def parameters(self):
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class BipartiteEncoderParams:
    left: HomogeneousEncoderParams
    right: HomogeneousEncoderParams

    @classmethod
    def init(cls, d, rng, prefix="enc."):
        return cls(HomogeneousEncoderParams.init(d, rng, prefix + "left."),
                   HomogeneousEncoderParams.init(d, rng, prefix + "right."))

    @property
    def d(self):
        return self.left.d

    def parameters(self):
        return self.left.parameters() + self.right.parameters()


@dataclass
class EncodeResult:
    score: Tensor
    dynamic: Tensor  # one row d_i^h per member (left rows first for bipartite)


def _readout(p, X, D, mask):
    """Per-set mean of softplus(W_oᵀ (d_i - W_s v_i)^2 + b_o) over real members."""
    static = ops.matmul(X, ops.transpose(p.W_s))
    o = ops.matmul(ops.square(ops.sub(D, static)), p.W_o)
    o = ops.add(ops.reshape(o, mask.shape), p.b_o)
    counts = mask.sum(axis=1, keepdims=True).astype(np.float64)
    weights = np.where(mask, 1.0 / np.maximum(counts, 1.0), 0.0)
    return ops.sum(ops.mul(ops.softplus(o), weights), axis=1)


def score_homogeneous(p, X, mask):
    """Scores (B,) and dynamic embeddings (B, K, d) for padded homogeneous sets."""
    X = as_tensor(X)
    mask = np.asarray(mask, dtype=bool)
    if X.ndim != 3 or X.shape[2] != p.d:
        raise ValueError(f"embedding batch shape {X.shape} does not match d={p.d}")
    if np.any(mask.sum(axis=1) < 2):
        raise ValueError("homogeneous hyperedges need at least 2 members")
    Q = ops.matmul(X, p.W_Q)
    K = ops.matmul(X, p.W_K)
    V = ops.matmul(X, p.W_V)
    D = ops.tanh(ops.attention(Q, K, V, mask, mask, exclude_self=True))
    return _readout(p, X, D, mask), D


def score_bipartite(p, XL, maskL, XR, maskR):
    """Scores (B,) and dynamic embeddings for both sides of padded bipartite sets."""
    XL, XR = as_tensor(XL), as_tensor(XR)
    maskL = np.asarray(maskL, dtype=bool)
    maskR = np.asarray(maskR, dtype=bool)
    for X in (XL, XR):
        if X.ndim != 3 or X.shape[2] != p.d:
            raise ValueError(f"embedding batch shape {X.shape} does not match d={p.d}")
    if np.any(maskL.sum(axis=1) < 1) or np.any(maskR.sum(axis=1) < 1):
        raise ValueError("bipartite hyperedges need a nonempty left and right side")
    L, R = p.left, p.right
    QL, KL, VL = ops.matmul(XL, L.W_Q), ops.matmul(XL, L.W_K), ops.matmul(XL, L.W_V)
    QR, KR, VR = ops.matmul(XR, R.W_Q), ops.matmul(XR, R.W_K), ops.matmul(XR, R.W_V)
    DL = ops.tanh(ops.attention(QL, KR, VR, maskL, maskR, exclude_self=False))
    DR = ops.tanh(ops.attention(QR, KL, VL, maskR, maskL, exclude_self=False))
    score = ops.add(_readout(L, XL, DL, maskL), _readout(R, XR, DR, maskR))
    return score, DL, DR


def score_pairwise(Xa, Xb):
    """softplus(v_aᵀ v_b) row by row."""
    return ops.softplus(ops.dot(Xa, Xb))


def _stack(vectors):
    rows = [ops.reshape(as_tensor(v), (1, -1)) for v in vectors]
    return ops.concat(rows, axis=0)


def encode_homogeneous(params, embeddings):
    """Score one hyperedge from the list of its members' embeddings."""
    if len(embeddings) < 2:
        raise ValueError(f"need at least 2 member embeddings, got {len(embeddings)}")
    dims = {np.shape(as_tensor(v).value)[-1] for v in embeddings}
    if dims != {params.d}:
        raise ValueError(f"embedding dimensions {sorted(dims)} do not match d={params.d}")
    X = _stack(embeddings)
    k = X.shape[0]
    score, D = score_homogeneous(params, ops.reshape(X, (1, k, params.d)), np.ones((1, k), bool))
    return EncodeResult(ops.reshape(score, ()), ops.reshape(D, (k, params.d)))


def encode_bipartite(params, left, right):
    if not left or not right:
        raise ValueError("bipartite hyperedges need a nonempty left and right side")
    dims = {np.shape(as_tensor(v).value)[-1] for v in list(left) + list(right)}
    if dims != {params.d}:
        raise ValueError(f"embedding dimensions {sorted(dims)} do not match d={params.d}")
    d = params.d
    XL, XR = _stack(left), _stack(right)
    k, k2 = XL.shape[0], XR.shape[0]
    score, DL, DR = score_bipartite(params, ops.reshape(XL, (1, k, d)), np.ones((1, k), bool),
                                    ops.reshape(XR, (1, k2, d)), np.ones((1, k2), bool))
    dyn = ops.concat([ops.reshape(DL, (k, d)), ops.reshape(DR, (k2, d))], axis=0)
    return EncodeResult(ops.reshape(score, ()), dyn)


def encode_pairwise(v1, v2):
    v1, v2 = as_tensor(v1), as_tensor(v2)
    if v1.shape != v2.shape:
        raise ValueError(f"pairwise embeddings differ in shape: {v1.shape} vs {v2.shape}")
    return score_pairwise(v1, v2)


def clique_decompose(h):
    """All unordered node pairs of ``h`` in canonical (sorted) order."""
    nodes = sorted(set(h))
    if len(nodes) < 2:
        raise ValueError(f"clique decomposition needs at least 2 nodes, got {len(nodes)}")
    return list(itertools.combinations(nodes, 2))
