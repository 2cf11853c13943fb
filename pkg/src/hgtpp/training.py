"""Segmented maximum-likelihood training with Monte-Carlo survival terms and
negative hyperedge sampling."""
import math
from dataclasses import dataclass, field

import numpy as np

from . import tpp
from .seeding import rng_for
from .tensor import backward, ops, recording

MAX_ATTEMPTS = 100


class DivergenceError(RuntimeError):
    """The training loss became non-finite."""


@dataclass
class TrainConfig:
    lr: float = 0.001
    segment: int = 128
    negatives: int = 20
    mc_samples: int = 20
    epochs: int = 100
    seed: int = 0
    eval_negatives: int = None
    best_by_val: bool = True
    val_mae: bool = True
    duration_grid: int = 256
    clip: float = None  # max global gradient norm per segment; None disables

    def validate(self):
        if not self.lr >= 0 or not math.isfinite(self.lr):
            raise ValueError(f"learning rate must be a finite nonnegative number, got {self.lr}")
        for name in ("segment", "mc_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.mc_samples < 2:
            raise ValueError("need at least 2 Monte-Carlo samples")
        if self.negatives < 0 or self.epochs < 0:
            raise ValueError("negatives and epochs must be nonnegative")
        if self.clip is not None and not self.clip > 0:
            raise ValueError(f"clip must be positive, got {self.clip}")
        return self

    @property
    def test_negatives(self):
        return self.negatives if self.eval_negatives is None else self.eval_negatives


class SizeDistribution:
    """Categorical distribution over hyperedge sizes."""

    def __init__(self, sizes, probs):
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.probs = np.asarray(probs, dtype=np.float64)
        if self.sizes.size == 0 or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("size distribution must be nonempty and sum to 1")
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0

    def sample(self, rng):
        return int(self.sizes[np.searchsorted(self._cdf, rng.random(), side="right")])

    def pmf(self, k):
        hit = self.sizes == k
        return float(self.probs[hit][0]) if hit.any() else 0.0

    def as_dict(self):
        return {int(k): float(p) for k, p in zip(self.sizes, self.probs)}


def fit_size_distribution(events, side=None):
    """Empirical size frequencies; ``side`` picks 0 (left) or 1 (right) of bipartite events."""
    if len(events) == 0:
        raise ValueError("cannot fit a size distribution to an empty split")
    sizes = np.array([len(h if side is None else h[side]) for h in events])
    values, counts = np.unique(sizes, return_counts=True)
    return SizeDistribution(values, counts / counts.sum())


def sample_negative_homogeneous(h, num_nodes, dist, rng, max_attempts=MAX_ATTEMPTS):
    """A corrupted hyperedge sharing about half its nodes with ``h``; ``None`` if every draw collided."""
    target = tuple(sorted(set(int(v) for v in h)))
    if num_nodes <= len(target):
        raise ValueError("node universe must be larger than the hyperedge")
    inside_set = set(target)
    outside = [v for v in range(num_nodes) if v not in inside_set]
    for _ in range(max_attempts):
        k = dist.sample(rng)
        s = min(-(-k // 2), len(target))
        if k - s > len(outside):
            raise ValueError(f"cannot draw {k - s} outside nodes from {len(outside)}")
        inside = _subset(target, s, rng)
        extra = _subset(outside, k - s, rng)
        neg = tuple(sorted(inside + extra))
        if neg != target:
            return neg
    return None


def _subset(pool, k, rng):
    """Uniform random k-subset of ``pool`` (partial Fisher-Yates)."""
    pool = list(pool)
    n = len(pool)
    if k == 0:
        return []
    draws = rng.random(k)
    for i in range(k):
        j = i + int(draws[i] * (n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]


def sample_negative_bipartite(h, universe_sizes, dists, rng, side=None, max_attempts=MAX_ATTEMPTS):
    """Keep one side of ``h`` and replace the other by a random subset of its universe."""
    if side is None:
        side = int(rng.integers(2))
    left, right = (tuple(sorted(set(x))) for x in h)
    fixed = (left, right)
    n = universe_sizes[side]
    for _ in range(max_attempts):
        k = dists[side].sample(rng)
        if k > n:
            raise ValueError(f"cannot draw {k} nodes from a side with {n}")
        new = tuple(sorted(_subset(range(n), k, rng)))
        neg = (left, new) if side == 1 else (new, right)
        if neg != fixed:
            return neg
    return None


class NegativeSampler:
    """Draws negatives for a dataset's events using fitted size distributions."""

    def __init__(self, train_events, num_nodes, num_right=0, bipartite=False):
        self.bipartite = bipartite
        self.num_nodes, self.num_right = num_nodes, num_right
        if bipartite:
            self.dists = (fit_size_distribution(train_events, 0), fit_size_distribution(train_events, 1))
        else:
            self.dists = fit_size_distribution(train_events)
        self.skipped = 0

    def draw(self, h, count, rng):
        """Up to ``count`` negatives; draws that cannot be satisfied are skipped and counted."""
        out = []
        for _ in range(count):
            try:
                if self.bipartite:
                    neg = sample_negative_bipartite(h, (self.num_nodes, self.num_right), self.dists, rng)
                else:
                    neg = sample_negative_homogeneous(h, self.num_nodes, self.dists, rng)
            except ValueError:
                neg = None
            if neg is None:
                self.skipped += 1
            else:
                out.append(neg)
        return out


def group_events(events, times):
    """Consecutive runs of equal timestamps as ``(t, [hyperedges])``, in stream order."""
    times = np.asarray(times, dtype=np.float64)
    if times.size and np.any(np.diff(times) < 0):
        raise ValueError("timestamps must be nondecreasing")
    groups = []
    for h, t in zip(events, times):
        if groups and groups[-1][0] == t:
            groups[-1][1].append(h)
        else:
            groups.append((float(t), [h]))
    return groups


def make_segments(groups, size):
    """Consecutive runs of whole groups holding at least ``size`` events (the last may hold fewer)."""
    segments, cur, n = [], [], 0
    for g in groups:
        cur.append(g)
        n += len(g[1])
        if n >= size:
            segments.append(cur)
            cur, n = [], 0
    if cur:
        segments.append(cur)
    return segments


@dataclass
class SegmentLoss:
    total: object
    positive: list = field(default_factory=list)
    survival: list = field(default_factory=list)
    t_last: float = 0.0

    @property
    def num_events(self):
        return len(self.positive)


def group_loss(model, t_prev, t, events, negatives, mc_samples, mc_rng):
    """Per-event (−log λ_pos, survival) Tensors for one group of concurrent events; advances the state."""
    if t < t_prev:
        raise ValueError(f"timestamp {t} precedes {t_prev}")
    cands, owner, pos_index = [], [], []
    for e, (h, negs) in enumerate(zip(events, negatives)):
        pos_index.append(len(cands))
        cands.append(h)
        owner.append(e)
        cands.extend(negs)
        owner.extend([e] * len(negs))
    owner = np.array(owner)
    C = len(cands)
    collect = pos_index if model.config.interaction_update else ()
    if model.rayleigh:
        lam, contrib = model.intensities(cands, np.full((C, 1), t), collect=collect)
        lam_t = ops.reshape(lam, (C,))
        surv_c = model.rayleigh_integral(cands, t_prev, t)
    else:
        if t > t_prev:
            s = tpp.sample_times(t_prev, t, mc_samples, mc_rng)
        else:
            s = np.full(mc_samples, t)
        w = np.append(tpp.mc_weights(s), 0.0)
        times = np.broadcast_to(np.append(s, t), (C, mc_samples + 1))
        lam, contrib = model.intensities(cands, times, collect=collect)
        lam_t = ops.reshape(ops.matmul(lam, np.eye(mc_samples + 1)[:, -1]), (C,))
        surv_c = ops.matmul(lam, w)
    # per-event sums of the candidates' survival terms
    surv = ops.segment_sum(surv_c, owner, len(events))
    neg_log = ops.scale(ops.log(ops.gather(lam_t, np.array(pos_index))), -1.0)
    pos_terms = [ops.gather(neg_log, i) for i in range(len(events))]
    surv_terms = [ops.gather(surv, i) for i in range(len(events))]
    model.advance(events, t, contrib)
    return pos_terms, surv_terms


def segment_loss(model, groups, t_prev, sampler, negatives, mc_samples, sampler_rng, mc_rng):
    """Summed loss over a run of event groups, advancing the model state through them."""
    pos, surv = [], []
    for t, events in groups:
        negs = [sampler.draw(h, negatives, sampler_rng) if negatives else [] for h in events]
        p, s = group_loss(model, t_prev, t, events, negs, mc_samples, mc_rng)
        pos += p
        surv += s
        t_prev = t
    terms = [ops.add(a, b) for a, b in zip(pos, surv)]
    total = terms[0]
    for term in terms[1:]:
        total = ops.add(total, term)
    return SegmentLoss(total, pos, surv, t_prev)


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_gradients(params, max_norm):
    """Rescale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if norm > max_norm:
        for p in params:
            p.grad *= max_norm / norm
    return norm


@dataclass
class TrainResult:
    trace: list
    best_epoch: int
    best_state: dict
    best_val_mrr: float


def run_epoch(model, groups, sampler, config, on_segment=None):
    """One pass over the training groups from a fresh state; returns the mean per-event loss."""
    model.reset_state()
    # identical negatives and MC samples every epoch, so lr=0 gives a flat trace
    sampler_rng = rng_for(config.seed, "sampler")
    mc_rng = rng_for(config.seed, "mc")
    opt = on_segment
    total, count, t_prev = 0.0, 0, 0.0
    for seg in make_segments(groups, config.segment):
        model.zero_grad()
        with recording():
            model.detach()
            loss = segment_loss(model, seg, t_prev, sampler, config.negatives, config.mc_samples,
                                sampler_rng, mc_rng)
            value = loss.total.item()
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss {value} in segment ending at t={loss.t_last}")
            backward(loss.total)
        if config.clip is not None:
            norm = clip_gradients(model.parameters(), config.clip)
            if not math.isfinite(norm):
                raise DivergenceError(f"non-finite gradient in segment ending at t={loss.t_last}")
        if opt is not None:
            opt()
        total += value
        count += loss.num_events
        t_prev = loss.t_last
    return total / max(count, 1)


def train(model, train_events, train_times, val_events, val_times, config, sampler=None,
          evaluate=None, log=None):
    """Fit ``model``; returns a :class:`TrainResult` with the per-epoch trace.

    ``evaluate(model)`` is called after every epoch with the state positioned at
    the end of the training split and must return a Metrics-like object.
    """
    config.validate()
    if len(train_events) == 0:
        raise ValueError("training split is empty")
    groups = group_events(train_events, train_times)
    if sampler is None:
        sampler = NegativeSampler(train_events, model.sides[0].num_nodes,
                                  model.sides[-1].num_nodes if model.bipartite else 0, model.bipartite)
    adam = Adam(model.parameters(), lr=config.lr)
    trace = []
    best = (-1.0, 0, model.state_dict())
    for epoch in range(1, config.epochs + 1):
        loss = run_epoch(model, groups, sampler, config, on_segment=adam.step)
        mrr, mae = float("nan"), float("nan")
        if evaluate is not None and len(val_events):
            m = evaluate(model)
            mrr, mae = m.mrr, m.mae
        trace.append((epoch, loss, mrr, mae))
        if log is not None:
            log(f"epoch {epoch}: train_loss={loss:.6f} val_mrr={mrr:.4f} val_mae={mae:.4f}")
        score = mrr if (config.best_by_val and math.isfinite(mrr)) else float(epoch)
        if score > best[0]:
            best = (score, epoch, model.state_dict())
    if config.epochs:
        model.load_state_dict(best[2])
    return TrainResult(trace, best[1], best[2], best[0] if config.best_by_val else float("nan"))
