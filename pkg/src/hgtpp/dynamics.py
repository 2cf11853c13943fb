"""Node embedding dynamics: temporal drift, history aggregation and
interaction update.

Embeddings are rows of a (num_nodes, d) state matrix.  Equations are written
for column vectors (``W v``); with row vectors that is ``v @ Wᵀ``.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter, Tensor, as_tensor, ops, uniform_init

# State transitions start near gain*I so repeated updates keep node identity;
# the other inputs start small and are learned in.
IDENTITY_GAIN = 3.0
CROSS_SCALE = 0.1


@dataclass
class DynamicsParams:
    """Weights of the enabled stages; disabled stages hold ``None``."""

    W0: Tensor = None
    b0: Tensor = None
    W1: Tensor = None
    omega: Tensor = None
    theta: Tensor = None
    W2: Tensor = None
    Theta: Tensor = None
    W3: Tensor = None
    W4: Tensor = None
    W5: Tensor = None
    b1: Tensor = None

    @classmethod
    def init(cls, d, rng, drift=True, history=True, update=True, prefix="dyn."):
        p = cls()

        def mat(name):
            return Parameter(prefix + name, CROSS_SCALE * uniform_init(rng, (d, d), d))

        def carry(name):
            w = CROSS_SCALE * uniform_init(rng, (d, d), d) + IDENTITY_GAIN * np.eye(d)
            return Parameter(prefix + name, w)

        def zeros(name):
            return Parameter(prefix + name, np.zeros(d))

        if drift or history:
            p.W0, p.b0 = carry("W0"), zeros("b0")
        if drift:
            p.W1 = mat("W1")
            # log-spaced frequencies cover durations from ~1 to ~1000 time units
            p.omega = Parameter(prefix + "omega", 1.0 / 10.0 ** np.linspace(0.0, 3.0, d))
            p.theta = zeros("theta")
        if history:
            p.W2 = mat("W2")
            p.Theta = Parameter(prefix + "Theta", uniform_init(rng, (d, d), d))
        if update:
            p.W3 = carry("W3")
            if drift:
                p.W4 = mat("W4")
            p.W5, p.b1 = mat("W5"), zeros("b1")
        return p

    @classmethod
    def from_arrays(cls, **arrays):
        return cls(**{k: as_tensor(v) for k, v in arrays.items()})

    @property
    def drift(self):
        return self.W1 is not None

    @property
    def history(self):
        return self.W2 is not None

    @property
    def update(self):
        return self.W5 is not None

    @property
    def evolves(self):
        """True when embeddings change between events (drift or history)."""
        return self.W0 is not None

    def parameters(self):
        return [v for v in vars(self).values() if v is not None]


@dataclass
class NodeState:
    node: int
    embedding: np.ndarray
    last_time: float = 0.0


def time_features(t, omega, theta):
    """Φ(t) = cos(ω t + θ), one row per entry of ``t``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("time features need nonnegative durations")
    if t.ndim == 0:
        return ops.cos(ops.add(ops.mul(float(t), omega), theta))
    return ops.cos(ops.add(ops.mul(t[:, None], omega), theta))


def _lin(x, W):
    return ops.matmul(x, ops.transpose(W))


class HistoryWindow:
    """The last ``size`` events of one node universe, oldest first."""

    def __init__(self, size):
        if size < 1:
            raise ValueError("history window needs room for at least one event")
        self.size = size
        self.events = deque(maxlen=size)

    def __len__(self):
        return len(self.events)

    def push(self, nodes, t):
        if self.events and t < self.events[-1][1]:
            raise ValueError("history window events must arrive in time order")
        self.events.append((np.unique(np.asarray(nodes, dtype=np.int64)), float(t)))

    def clear(self):
        self.events.clear()

    def incidence(self, num_nodes):
        H = np.zeros((num_nodes, len(self.events)))
        for j, (nodes, _) in enumerate(self.events):
            H[nodes, j] = 1.0
        return H

    def propagation(self, rows):
        """Rows of D_v^-1/2 H D_e^-1 Hᵀ D_v^-1/2 restricted to the window's nodes.

        Returns (P, cols): P[i, j] couples node ``rows[i]`` to node ``cols[j]``.
        Nodes outside the window get all-zero rows.
        """
        rows = np.asarray(rows, dtype=np.int64)
        if not self.events:
            return np.zeros((rows.size, 0)), np.zeros(0, dtype=np.int64)
        members = [n for n, _ in self.events]
        flat = np.concatenate(members)
        edge = np.repeat(np.arange(len(members)), [m.size for m in members])
        cols, pos = np.unique(flat, return_inverse=True)
        H = np.zeros((cols.size, len(members)))
        H[pos, edge] = 1.0
        dv = H.sum(axis=1)
        de = H.sum(axis=0)
        Hn = H / np.sqrt(dv)[:, None]
        where = np.searchsorted(cols, rows)
        hit = (where < cols.size) & (cols[np.minimum(where, cols.size - 1)] == rows)
        P = np.zeros((rows.size, cols.size))
        if hit.any():
            P[hit] = (Hn[where[hit]] / de[None, :]) @ Hn.T
        return P, cols


def history_aggregate(window, X, Theta, rows=None):
    """One hypergraph convolution layer over the window, for the requested rows.

    ``X`` holds v(t_v^p+) for every node.  Defaults to all nodes.
    """
    X = as_tensor(X)
    if rows is None:
        rows = np.arange(X.shape[0])
    P, cols = window.propagation(rows)
    if cols.size == 0:
        return Tensor(np.zeros((len(rows), X.shape[1])))
    return ops.matmul(ops.matmul(P, ops.gather(X, cols)), Theta)


def embeddings_at(params, prev, vs, elapsed):
    """Batched v(t) = tanh(W0 v_prev + W1 Φ(elapsed) + W2 v^s + b0).

    ``prev`` (F, d) are the post-interaction embeddings, ``vs`` (F, d) the
    aggregated history rows (ignored without history aggregation) and
    ``elapsed`` (F,) the durations t - t_v^p.  With neither drift nor history
    the embedding stays at ``prev``.
    """
    if not params.evolves:
        return as_tensor(prev)
    pre = ops.add(_lin(prev, params.W0), params.b0)
    if params.drift:
        pre = ops.add(pre, _lin(time_features(elapsed, params.omega, params.theta), params.W1))
    if params.history:
        pre = ops.add(pre, _lin(vs, params.W2))
    return ops.tanh(pre)


def embedding_at(state, vs, t, params):
    """v(t) for a single node from its state and aggregated history vector."""
    if t < state.last_time:
        raise ValueError(f"time {t} precedes the node's last interaction {state.last_time}")
    prev = np.asarray(state.embedding, dtype=np.float64)[None, :]
    vs_row = ops.reshape(as_tensor(vs), (1, -1)) if vs is not None else None
    out = embeddings_at(params, prev, vs_row, np.array([t - state.last_time]))
    return ops.reshape(out, (-1,))


def updated_embeddings(params, prev, elapsed, dmean):
    """Batched v(t+) = tanh(W3 v_prev + W4 Φ(elapsed) + W5 d + b1)."""
    pre = ops.add(_lin(prev, params.W3), params.b1)
    if params.W4 is not None:
        pre = ops.add(pre, _lin(time_features(elapsed, params.omega, params.theta), params.W4))
    return ops.tanh(ops.add(pre, _lin(dmean, params.W5)))


def interaction_update(state, dynamic, t, params):
    """New NodeState after an interaction at ``t``.

    ``dynamic`` lists the node's dynamic embeddings from the L concurrent
    events it took part in; their mean drives the update.
    """
    if len(dynamic) == 0:
        raise ValueError("interaction update needs at least one dynamic embedding")
    if t < state.last_time:
        raise ValueError(f"time {t} precedes the node's last interaction {state.last_time}")
    rows = ops.concat([ops.reshape(as_tensor(dv), (1, -1)) for dv in dynamic], axis=0)
    dmean = ops.mean(rows, axis=0)
    prev = np.asarray(state.embedding, dtype=np.float64)[None, :]
    new = updated_embeddings(params, prev, np.array([t - state.last_time]),
                             ops.reshape(dmean, (1, -1)))
    return NodeState(state.node, ops.reshape(new, (-1,)).value.copy(), float(t))


@dataclass
class NodeTable:
    """Per-node state of one node universe.

    ``emb`` is the (num_nodes, d) matrix of v(t_v^p+) as a Tensor so gradients
    flow through updates made inside the current segment.  ``touched`` marks
    nodes that have left their initial embedding.
    """

    initial: Tensor
    emb: Tensor = None
    last: np.ndarray = None
    touched: np.ndarray = None
    window: HistoryWindow = None
    window_size: int = 128
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.window = HistoryWindow(self.window_size)
        self.reset()

    @property
    def num_nodes(self):
        return self.initial.shape[0]

    def reset(self):
        n = self.num_nodes
        self.last = np.zeros(n)
        self.touched = np.zeros(n, dtype=bool)
        self.window.clear()
        self.emb = None
        self.detach()

    def detach(self):
        """Cut the graph: keep values, restart gradient flow at this point.

        Untouched rows stay tied to the learnable initial embeddings.
        """
        keep = self.touched[:, None].astype(np.float64)
        values = self.initial.value if self.emb is None else self.emb.value
        self.emb = ops.add(Tensor(values * keep), ops.mul(self.initial, 1.0 - keep))

    def state(self, node):
        return NodeState(int(node), self.emb.value[node].copy(), float(self.last[node]))
