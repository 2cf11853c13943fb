"""Model registry: every named model of the baseline grid is one
:class:`HyperedgeModel` assembled from feature flags.

A candidate hyperedge is a tuple of node ids for homogeneous models and a
pair ``(left_ids, right_ids)`` for bipartite ones.
"""
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import tpp
from .dynamics import DynamicsParams, NodeTable, embeddings_at, history_aggregate, updated_embeddings
from .encoders import (
    BipartiteEncoderParams,
    HomogeneousEncoderParams,
    score_bipartite,
    score_homogeneous,
    score_pairwise,
)
from .seeding import rng_for
from .tensor import Parameter, Tensor, ops, uniform_init

# name: (temporal drift, history aggregation, interaction update, hyperedge, bipartite)
MODEL_FLAGS = OrderedDict([
    ("RHE", (False, False, False, True, False)),
    ("RDHE", (False, False, True, True, False)),
    ("DE-drift", (True, False, False, False, False)),
    ("DE", (True, False, True, False, False)),
    ("DHE-drift", (True, False, False, True, False)),
    ("DHE", (True, False, True, True, False)),
    ("HGDHE-hist", (True, True, False, True, False)),
    ("HGDHE", (True, True, True, True, False)),
    ("BDE", (True, False, True, False, True)),
    ("BDHE", (True, False, True, True, True)),
    ("HGBDHE", (True, True, True, True, True)),
])
MODEL_NAMES = tuple(MODEL_FLAGS)
RAYLEIGH_MODELS = ("RHE", "RDHE")

# Rayleigh intensities vanish at t = t_h^p; keep log λ finite there
MIN_ELAPSED = 1e-9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    name: str
    d: int = 64
    temporal_drift: bool = True
    history_aggregation: bool = True
    interaction_update: bool = True
    hyperedge: bool = True
    bipartite: bool = False
    intensity_family: str = "neural"

    @classmethod
    def for_name(cls, name, d=64):
        if name not in MODEL_FLAGS:
            raise ConfigError(f"unknown model {name!r}; valid names: {', '.join(MODEL_NAMES)}")
        td, hg, iu, he, bp = MODEL_FLAGS[name]
        family = "rayleigh" if name in RAYLEIGH_MODELS else "neural"
        return cls(name, d, td, hg, iu, he, bp, family)

    def validate(self):
        if self.name not in MODEL_FLAGS:
            raise ConfigError(f"unknown model {self.name!r}; valid names: {', '.join(MODEL_NAMES)}")
        flags = (self.temporal_drift, self.history_aggregation, self.interaction_update,
                 self.hyperedge, self.bipartite)
        if flags != MODEL_FLAGS[self.name]:
            raise ConfigError(f"flags {flags} do not match the {self.name} row {MODEL_FLAGS[self.name]}")
        expected = "rayleigh" if self.name in RAYLEIGH_MODELS else "neural"
        if self.intensity_family != expected:
            raise ConfigError(f"{self.name} uses the {expected} intensity family")
        if self.d < 1:
            raise ConfigError("embedding size must be positive")
        return self


def expected_parameter_names(config):
    """The parameter manifest implied by a config's enabled stages."""
    sides = ["left.", "right."] if config.bipartite else [""]
    names = []
    for s in sides:
        names.append(s + "emb")
        if config.temporal_drift or config.history_aggregation:
            names += [s + "dyn.W0", s + "dyn.b0"]
        if config.temporal_drift:
            names += [s + "dyn.W1", s + "dyn.omega", s + "dyn.theta"]
        if config.history_aggregation:
            names += [s + "dyn.W2", s + "dyn.Theta"]
        if config.interaction_update:
            names.append(s + "dyn.W3")
            if config.temporal_drift:
                names.append(s + "dyn.W4")
            names += [s + "dyn.W5", s + "dyn.b1"]
    if config.hyperedge:
        enc = ["W_Q", "W_K", "W_V", "W_s", "W_o", "b_o"]
        if config.bipartite:
            names += ["enc.left." + n for n in enc] + ["enc.right." + n for n in enc]
        else:
            names += ["enc." + n for n in enc]
    return names


class Side:
    """Dynamics parameters plus node state for one node universe."""

    def __init__(self, prefix, num_nodes, config, rng, history_size):
        d = config.d
        self.prefix = prefix
        self.initial = Parameter(prefix + "emb", uniform_init(rng, (num_nodes, d), d))
        self.dyn = DynamicsParams.init(d, rng, config.temporal_drift, config.history_aggregation,
                                       config.interaction_update, prefix=prefix + "dyn.")
        self.table = NodeTable(self.initial, window_size=history_size)

    @property
    def num_nodes(self):
        return self.initial.shape[0]

    def parameters(self):
        return [self.initial] + self.dyn.parameters()

    def embed(self, nodes, times):
        """Embeddings v(t) for parallel arrays of node ids and times."""
        nodes = np.asarray(nodes, dtype=np.int64)
        table = self.table
        if nodes.size and (nodes.min() < 0 or nodes.max() >= self.num_nodes):
            raise KeyError(f"node id out of range for {self.num_nodes} nodes")
        if not self.dyn.evolves:
            return ops.gather(table.emb, nodes)
        uniq, inv = np.unique(nodes, return_inverse=True)
        prev = ops.gather(table.emb, uniq)
        vs = history_aggregate(table.window, table.emb, self.dyn.Theta, uniq) if self.dyn.history else None
        elapsed = np.asarray(times, dtype=np.float64) - table.last[nodes]
        if np.any(elapsed < 0):
            raise ValueError("embedding requested before a node's last interaction")
        # the W0/W2 part is shared by every time slot of a node
        p = self.dyn
        base = ops.add(ops.matmul(prev, ops.transpose(p.W0)), p.b0)
        if vs is not None:
            base = ops.add(base, ops.matmul(vs, ops.transpose(p.W2)))
        pre = ops.gather(base, inv)
        if p.drift:
            from .dynamics import time_features
            phi = time_features(elapsed, p.omega, p.theta)
            pre = ops.add(pre, ops.matmul(phi, ops.transpose(p.W1)))
        return ops.tanh(pre)

    def apply_updates(self, involved, contrib_nodes, contrib_rows, t):
        table = self.table
        if self.dyn.update and len(contrib_nodes):
            uniq, inv, counts = np.unique(contrib_nodes, return_inverse=True, return_counts=True)
            dmean = ops.mul(ops.segment_sum(contrib_rows, inv, uniq.size), (1.0 / counts)[:, None])
            prev = ops.gather(table.emb, uniq)
            new = updated_embeddings(self.dyn, prev, t - table.last[uniq], dmean)
            table.emb = ops.scatter_rows(table.emb, uniq, new)
            table.touched[uniq] = True
        table.last[np.asarray(involved, dtype=np.int64)] = t


class _Layout:
    """Row bookkeeping for evaluating C candidates at T times on one side."""

    def __init__(self, members, T, evolving):
        self.members = members
        self.k = np.array([len(m) for m in members], dtype=np.int64)
        self.start = np.concatenate([[0], np.cumsum(self.k)[:-1]]).astype(np.int64)
        self.flat = np.array([v for m in members for v in m], dtype=np.int64)
        self.total = int(self.k.sum())
        self.T = T
        self.evolving = evolving
        self.cand_of_member = np.repeat(np.arange(len(members)), self.k)

    def rows(self, times):
        """Node ids and times for every embedding row that must be computed."""
        if not self.evolving:
            return self.flat, np.zeros(self.total)
        nodes = np.tile(self.flat, self.T)
        t = times.T[:, self.cand_of_member].reshape(-1)
        return nodes, t

    def row_index(self, c, j, m):
        base = j * self.total if self.evolving else 0
        return base + self.start[c] + m

    def padded(self):
        """Index (C*T, Kmax) into the embedding rows plus the member mask."""
        C, T = len(self.members), self.T
        b = np.arange(C * T)
        c_of_b, j_of_b = b // T, b % T
        kmax = int(self.k.max())
        m = np.arange(kmax)
        mask = m[None, :] < self.k[c_of_b][:, None]
        base = (j_of_b * self.total if self.evolving else 0)
        idx = np.asarray(base)[..., None] + self.start[c_of_b][:, None] + m[None, :]
        idx = np.broadcast_to(idx, mask.shape)
        return np.where(mask, idx, 0), mask


class HyperedgeModel:
    """An assembled model: parameters, per-side node state and the intensity λ_h(t)."""

    def __init__(self, config, num_nodes, seed=0, num_right=None, history_size=128):
        config.validate()
        if num_nodes < 1 or (not config.bipartite and num_nodes < 2):
            raise ConfigError("need at least 2 nodes")
        if config.bipartite and not num_right:
            raise ConfigError("bipartite models need the right node count")
        self.config = config
        rng = rng_for(seed, "init")
        if config.bipartite:
            self.sides = [Side("left.", num_nodes, config, rng, history_size),
                          Side("right.", num_right, config, rng, history_size)]
        else:
            self.sides = [Side("", num_nodes, config, rng, history_size)]
        self.encoder = None
        if config.hyperedge:
            cls = BipartiteEncoderParams if config.bipartite else HomogeneousEncoderParams
            self.encoder = cls.init(config.d, rng)
        params = [p for s in self.sides for p in s.parameters()]
        if self.encoder is not None:
            params += self.encoder.parameters()
        self.params = OrderedDict((p.name, p) for p in params)

    # ---- bookkeeping -------------------------------------------------
    @property
    def name(self):
        return self.config.name

    @property
    def rayleigh(self):
        return self.config.intensity_family == "rayleigh"

    @property
    def bipartite(self):
        return self.config.bipartite

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self):
        return OrderedDict((k, p.value.copy()) for k, p in self.params.items())

    def load_state_dict(self, arrays):
        missing = set(self.params) ^ set(arrays)
        if missing:
            raise ConfigError(f"parameter set mismatch: {sorted(missing)}")
        for k, p in self.params.items():
            if tuple(arrays[k].shape) != p.shape:
                raise ConfigError(f"shape mismatch for {k}: {arrays[k].shape} vs {p.shape}")
            p.value = np.array(arrays[k], dtype=np.float64)
        self.reset_state()

    def reset_state(self):
        for s in self.sides:
            s.table.reset()

    def detach(self):
        for s in self.sides:
            s.table.detach()

    def split(self, h):
        """Per-side member tuples of a candidate."""
        if self.bipartite:
            left, right = h
            return [tuple(left), tuple(right)]
        return [tuple(h)]

    def anchor_time(self, h):
        """t_h^p: the latest last-interaction time over the candidate's nodes."""
        return max(float(s.table.last[list(m)].max()) for s, m in zip(self.sides, self.split(h)))

    def size(self, h):
        return sum(len(m) for m in self.split(h))

    # ---- intensity -----------------------------------------------------
    def intensities(self, cands, times, collect=(), pair_detail=False):
        """λ_h at the given times for every candidate.

        ``times`` is (C, T).  Returns ``(lam, contributions)`` where ``lam`` is a
        (C, T) Tensor and ``contributions`` maps side index to
        ``(node_ids, rows)``: the dynamic embeddings at the last time slot of
        each candidate listed in ``collect`` (the interaction-update inputs).
        """
        times = np.asarray(times, dtype=np.float64)
        C, T = times.shape
        if C != len(cands):
            raise ValueError("times must have one row per candidate")
        per_side = [[] for _ in self.sides]
        for h in cands:
            for i, m in enumerate(self.split(h)):
                per_side[i].append(m)
        if self.rayleigh:
            return self._rayleigh(cands, per_side, times, collect)
        layouts = [_Layout(members, T, s.dyn.evolves) for s, members in zip(self.sides, per_side)]
        embs = []
        for s, lay in zip(self.sides, layouts):
            nodes, t = lay.rows(times)
            embs.append(s.embed(nodes, t))
        if self.config.hyperedge:
            return self._hyperedge(layouts, embs, C, T, collect)
        return self._pairwise(layouts, embs, C, T, collect, pair_detail)

    def _hyperedge(self, layouts, embs, C, T, collect):
        contrib = {}
        if self.bipartite:
            (iL, mL), (iR, mR) = layouts[0].padded(), layouts[1].padded()
            score, DL, DR = score_bipartite(self.encoder, ops.gather(embs[0], iL), mL,
                                            ops.gather(embs[1], iR), mR)
            dyn = [(DL, layouts[0]), (DR, layouts[1])]
        else:
            idx, mask = layouts[0].padded()
            score, D = score_homogeneous(self.encoder, ops.gather(embs[0], idx), mask)
            dyn = [(D, layouts[0])]
        if collect:
            for side, (D, lay) in enumerate(dyn):
                K = D.shape[1]
                flat, nodes = [], []
                for c in collect:
                    b = c * T + (T - 1)
                    for m in range(lay.k[c]):
                        flat.append(b * K + m)
                        nodes.append(lay.members[c][m])
                rows = ops.gather(ops.reshape(D, (-1, D.shape[2])), np.array(flat, dtype=np.int64))
                contrib[side] = (np.array(nodes, dtype=np.int64), rows)
        return ops.reshape(score, (C, T)), contrib

    def _pairs(self, layouts, c):
        if self.bipartite:
            kl, kr = layouts[0].k[c], layouts[1].k[c]
            return [(a, b) for a in range(kl) for b in range(kr)]
        k = layouts[0].k[c]
        if k < 2:
            raise ValueError("pairwise models need hyperedges with at least 2 nodes")
        return [(a, b) for a in range(k) for b in range(a + 1, k)]

    def _pairwise(self, layouts, embs, C, T, collect, pair_detail):
        la, lb = layouts[0], layouts[-1]
        ea, eb = embs[0], embs[-1]
        ra, rb, item = [], [], []
        pair_lists = [self._pairs(layouts, c) for c in range(C)]
        for c, pairs in enumerate(pair_lists):
            for j in range(T):
                for a, b in pairs:
                    ra.append(la.row_index(c, j, a))
                    rb.append(lb.row_index(c, j, b))
                    item.append(c * T + j)
        ra, rb, item = (np.array(x, dtype=np.int64) for x in (ra, rb, item))
        lam_pairs = score_pairwise(ops.gather(ea, ra), ops.gather(eb, rb))
        if pair_detail:
            return ops.reshape(lam_pairs, (-1,)), (ra, rb, item)
        log_lam = ops.segment_sum(ops.log(lam_pairs), item, C * T)
        lam = ops.reshape(ops.exp(log_lam), (C, T))
        contrib = {}
        if collect:
            nodes = {0: [], 1: []}
            rows = {0: [], 1: []}
            for c in collect:
                j = T - 1
                for a, b in pair_lists[c]:
                    na, nb = la.members[c][a], lb.members[c][b]
                    if self.bipartite:
                        nodes[0].append(na), rows[0].append(("b", lb.row_index(c, j, b)))
                        nodes[1].append(nb), rows[1].append(("a", la.row_index(c, j, a)))
                    else:
                        nodes[0] += [na, nb]
                        rows[0] += [("b", lb.row_index(c, j, b)), ("a", la.row_index(c, j, a))]
            for side in range(len(self.sides)):
                src = {"a": ea, "b": eb}
                parts = [ops.gather(src[tag], np.array([r for t2, r in rows[side] if t2 == tag], dtype=np.int64))
                         for tag in ("a", "b")]
                order_nodes = [n for n, (t2, _) in zip(nodes[side], rows[side]) if t2 == "a"] + \
                              [n for n, (t2, _) in zip(nodes[side], rows[side]) if t2 == "b"]
                contrib[side] = (np.array(order_nodes, dtype=np.int64), ops.concat(parts, axis=0))
        return lam, contrib

    def _rayleigh(self, cands, per_side, times, collect):
        # f evaluated on the (piecewise constant) embeddings at t_h^p
        C, T = times.shape
        layouts = [_Layout(members, 1, False) for members in per_side]
        embs = [s.embed(lay.flat, np.zeros(lay.total)) for s, lay in zip(self.sides, layouts)]
        f, contrib = self._hyperedge(layouts, embs, C, 1, collect)
        anchors = np.array([self.anchor_time(h) for h in cands])
        elapsed = np.maximum(times - anchors[:, None], MIN_ELAPSED)
        return ops.mul(f, elapsed), contrib

    def rayleigh_scale(self, cands):
        """f(v(t_h^p)) for each candidate (Rayleigh models only)."""
        times = np.zeros((len(cands), 1))
        per_side = [[] for _ in self.sides]
        for h in cands:
            for i, m in enumerate(self.split(h)):
                per_side[i].append(m)
        layouts = [_Layout(members, 1, False) for members in per_side]
        embs = [s.embed(lay.flat, np.zeros(lay.total)) for s, lay in zip(self.sides, layouts)]
        f, _ = self._hyperedge(layouts, embs, len(cands), 1, ())
        return ops.reshape(f, (len(cands),)), times

    def rayleigh_integral(self, cands, t_from, t_to):
        """∫ λ over [t_from, t_to] in closed form, one entry per candidate."""
        f, _ = self.rayleigh_scale(cands)
        anchors = np.array([self.anchor_time(h) for h in cands])
        a = np.maximum(t_from - anchors, 0.0)
        b = np.maximum(t_to - anchors, 0.0)
        return ops.mul(f, 0.5 * (b * b - a * a))

    def intensity(self, h, t):
        """λ_h(t) as a scalar Tensor."""
        lam, _ = self.intensities([h], np.array([[float(t)]]))
        return ops.reshape(lam, ())

    # ---- state evolution -------------------------------------------------
    def advance(self, events, t, contributions):
        """Apply the interaction update for events sharing timestamp ``t``."""
        for i, s in enumerate(self.sides):
            members = [self.split(h)[i] for h in events]
            involved = np.unique(np.concatenate([np.asarray(m, dtype=np.int64) for m in members]))
            nodes, rows = contributions.get(i, (np.zeros(0, dtype=np.int64), None))
            s.apply_updates(involved, nodes, rows, t)
            for m in members:
                s.table.window.push(m, t)

    def observe(self, events, t):
        """Consume a group of concurrent events: score them at ``t`` and update state."""
        if not events:
            return
        _, contrib = self.intensities(events, np.full((len(events), 1), float(t)),
                                      collect=range(len(events)) if self.config.interaction_update else ())
        self.advance(events, t, contrib)

    # ---- duration --------------------------------------------------------
    def expected_duration(self, h, horizon_factor=20.0, grid=256, median_gap=1.0):
        """Expected time to the next occurrence of ``h`` measured from t_h^p."""
        if self.rayleigh:
            f, _ = self.rayleigh_scale([h])
            return tpp.rayleigh_expected_duration(float(f.value[0]))
        t_p = self.anchor_time(h)
        offsets = np.linspace(0.0, horizon_factor * median_gap, grid)
        times = (t_p + offsets)[None, :]
        if self.config.hyperedge:
            lam, _ = self.intensities([h], times)
            return tpp.duration_from_grid(offsets, lam.value[0])
        # clique-decomposed: average the per-pair expected durations
        lam_pairs, (_, _, item) = self.intensities([h], times, pair_detail=True)
        n_pairs = lam_pairs.shape[0] // grid
        per_pair = lam_pairs.value.reshape(grid, n_pairs).T
        return float(np.mean([tpp.duration_from_grid(offsets, row) for row in per_pair]))


def assemble(config, num_nodes, seed=0, num_right=None, history_size=128, d=64):
    """Build a model from a ModelConfig or a model name (``d`` applies to names only)."""
    if isinstance(config, str):
        config = ModelConfig.for_name(config, d=d)
    return HyperedgeModel(config, num_nodes, seed=seed, num_right=num_right, history_size=history_size)
