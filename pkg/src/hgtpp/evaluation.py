"""Interaction type and duration prediction, MRR/MAE metrics and size buckets."""
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import tpp
from .tensor import no_recording
from .training import group_events

BUCKETS = (("k=2", 2, 2), ("3<=k<=4", 3, 4), ("5<=k<=8", 5, 8), ("k>=9", 9, None))


def bucket_of(k):
    for name, lo, hi in BUCKETS:
        if k >= lo and (hi is None or k <= hi):
            return name
    raise ValueError(f"no size bucket for k={k}")


@dataclass
class RankResult:
    event: int
    rank: int
    candidates: int

    def __post_init__(self):
        if not 0 <= self.rank < self.candidates:
            raise ValueError(f"rank {self.rank} outside [0, {self.candidates})")


@dataclass
class Metrics:
    mrr: float
    mae: float
    count: int
    buckets: dict = field(default_factory=dict)  # name -> (mrr, mae, count)
    ranks: list = field(default_factory=list)


def rank_of(true_score, negative_scores):
    """Pessimistic 0-based rank: negatives scoring above or level with the true edge."""
    neg = np.asarray(negative_scores, dtype=np.float64)
    return int(np.sum(neg > true_score) + np.sum(neg == true_score))


def mrr(ranks):
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("no ranks to average")
    return float(np.mean(1.0 / (ranks + 1.0)))


def mae(predicted, truth):
    predicted, truth = np.asarray(predicted, float), np.asarray(truth, float)
    if predicted.size == 0:
        raise ValueError("no durations to average")
    return float(np.mean(np.abs(predicted - truth)))


def random_scorer_mrr(negatives):
    """Expected MRR when the true rank is uniform over 0..negatives."""
    return float(np.mean(1.0 / np.arange(1, negatives + 2)))


def predict_type(model, h, t, negatives, event=0):
    """Rank the true hyperedge against ``negatives`` by intensity at ``t``."""
    with no_recording():
        cands = [h] + list(negatives)
        lam, _ = model.intensities(cands, np.full((len(cands), 1), float(t)))
    lam = lam.value[:, 0]
    return RankResult(event, rank_of(lam[0], lam[1:]), len(cands))


def predict_duration(model, h, horizon_factor=20.0, grid=256, median_gap=1.0):
    """Expected delay until ``h`` occurs, measured from its anchor time t_h^p."""
    with no_recording():
        return model.expected_duration(h, horizon_factor=horizon_factor, grid=grid, median_gap=median_gap)


def summarize(ranks, sizes, predicted=None, truth=None):
    ranks = np.asarray(ranks, dtype=np.int64)
    sizes = np.asarray(sizes, dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("empty evaluation split")
    have_mae = predicted is not None and len(predicted) == ranks.size
    predicted = np.asarray(predicted, float) if have_mae else None
    truth = np.asarray(truth, float) if have_mae else None
    buckets = {}
    names = np.array([bucket_of(int(k)) for k in sizes])
    for name, _, _ in BUCKETS:
        sel = names == name
        if sel.any():
            b_mae = mae(predicted[sel], truth[sel]) if have_mae else float("nan")
            buckets[name] = (mrr(ranks[sel]), b_mae, int(sel.sum()))
    return Metrics(mrr(ranks), mae(predicted, truth) if have_mae else float("nan"), int(ranks.size),
                   buckets, ranks.tolist())


def evaluate_stream(model, events, times, sampler, negatives, rng, durations=True,
                    duration_grid=256, median_gap=1.0, horizon_factor=20.0, scorer=None):
    """Score each event against fresh negatives, then consume it as history.

    The model state must already reflect everything before ``events``.
    ``scorer(cands, t)`` may replace the model's intensities (oracle stubs).
    """
    if len(events) == 0:
        raise ValueError("empty evaluation split")
    ranks, sizes, pred, truth = [], [], [], []
    idx = 0
    with no_recording():
        for t, group in group_events(events, times):
            cands, starts = [], []
            for h in group:
                negs = sampler.draw(h, negatives, rng)
                starts.append((len(cands), len(negs)))
                cands.append(h)
                cands.extend(negs)
            if scorer is not None:
                lam = np.asarray(scorer(cands, t), dtype=np.float64)
            else:
                lam = model.intensities(cands, np.full((len(cands), 1), t))[0].value[:, 0]
            for h, (s, n) in zip(group, starts):
                ranks.append(rank_of(lam[s], lam[s + 1:s + 1 + n]))
                sizes.append(model.size(h) if model is not None else len(h))
                if durations and model is not None:
                    pred.append(model.expected_duration(h, horizon_factor=horizon_factor,
                                                        grid=duration_grid, median_gap=median_gap))
                    truth.append(t - model.anchor_time(h))
                idx += 1
            if model is not None:
                model.observe(group, t)
    return summarize(ranks, sizes, pred if durations else None, truth if durations else None)


def metrics_csv(rows, time_scale=1.0):
    """CSV text for ``[(model_name, Metrics), ...]``; ``mae_original`` undoes time scaling."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "mrr", "mae", "mae_original", "count"])
    for name, m in rows:
        w.writerow([name, _fmt(m.mrr), _fmt(m.mae), _fmt(m.mae * time_scale), m.count])
    return buf.getvalue()


def buckets_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "bucket", "mrr", "mae", "count"])
    for name, m in rows:
        for b, _, _ in BUCKETS:
            if b in m.buckets:
                r, a, n = m.buckets[b]
                w.writerow([name, b, _fmt(r), _fmt(a), n])
    return buf.getvalue()


def metrics_table(rows):
    """Aligned text table: one line per model with MRR (percent) and MAE."""
    lines = [("Model", "MRR", "MAE")]
    for name, m in rows:
        lines.append((name, f"{100 * m.mrr:.2f}", "n/a" if math.isnan(m.mae) else f"{m.mae:.4f}"))
    widths = [max(len(r[i]) for r in lines) for i in range(3)]
    out = []
    for r in lines:
        out.append(r[0].ljust(widths[0]) + "  " + r[1].rjust(widths[1]) + "  " + r[2].rjust(widths[2]))
    return "\n".join(out) + "\n"


def _fmt(x):
    return "nan" if math.isnan(x) else repr(float(x))


# re-exported for callers that only need the numeric helper
expected_duration_numeric = tpp.expected_duration_numeric
