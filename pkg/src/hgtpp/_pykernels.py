"""Pure numpy versions of the hot kernels.

Shapes follow the padded-set layout used by the encoders: ``B`` independent
sets, each with up to ``Kq`` query members and ``Kk`` key members of width
``d``.  Masks mark the real members; padded rows produce zeros.
"""
import numpy as np


def attention_forward(q, k, v, qmask, kmask, exclude_self):
    scores = np.matmul(q, np.swapaxes(k, 1, 2))
    valid = qmask[:, :, None] & kmask[:, None, :]
    if exclude_self:
        kq = min(q.shape[1], k.shape[1])
        eye = np.zeros((q.shape[1], k.shape[1]), dtype=bool)
        eye[np.arange(kq), np.arange(kq)] = True
        valid = valid & ~eye[None, :, :]
    scores = np.where(valid, scores, -np.inf)
    top = scores.max(axis=2, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    w = np.where(valid, np.exp(scores - top), 0.0)
    norm = w.sum(axis=2, keepdims=True)
    alpha = np.divide(w, norm, out=np.zeros_like(w), where=norm > 0)
    out = np.matmul(alpha, v)
    return out, alpha


def attention_backward(grad, q, k, v, alpha):
    dv = np.matmul(np.swapaxes(alpha, 1, 2), grad)
    dalpha = np.matmul(grad, np.swapaxes(v, 1, 2))
    de = alpha * (dalpha - (dalpha * alpha).sum(axis=2, keepdims=True))
    dq = np.matmul(de, k)
    dk = np.matmul(np.swapaxes(de, 1, 2), q)
    return dq, dk, dv


def index_add_rows(n_rows, idx, src):
    out = np.zeros((n_rows,) + src.shape[1:], dtype=np.float64)
    np.add.at(out, idx, src)
    return out
