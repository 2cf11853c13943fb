import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgtpp import data, evaluation as ev
from hgtpp.models import assemble
from hgtpp.seeding import rng_for
from hgtpp.tensor import no_recording
from hgtpp.training import NegativeSampler


def test_rank_rules():
    assert ev.rank_of(5.0, [1.0, 2.0, 4.9]) == 0
    assert ev.rank_of(0.1, np.linspace(1, 2, 20)) == 20
    assert ev.rank_of(1.0, [1.0, 0.5, 2.0]) == 2  # ties count against the true edge
    assert 1.0 / (ev.rank_of(0.1, np.linspace(1, 2, 20)) + 1) == 1 / 21


def test_rank_result_bounds():
    with pytest.raises(ValueError):
        ev.RankResult(0, 3, 3)
    assert ev.RankResult(0, 2, 3).rank == 2


def test_random_scorer_closed_form():
    harmonic = sum(1.0 / r for r in range(1, 22))
    assert abs(ev.random_scorer_mrr(20) - harmonic / 21) < 1e-15
    assert abs(ev.random_scorer_mrr(20) - 0.1754) < 0.002
    rng = np.random.default_rng(0)
    ranks = [ev.rank_of(rng.random(), rng.random(20)) for _ in range(2000)]
    assert abs(ev.mrr(ranks) - 0.1754) < 0.02


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_mrr_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    scores = [rng.normal(size=8) for _ in range(30)]
    a = ev.mrr([ev.rank_of(s[0], s[1:]) for s in scores])
    b = ev.mrr([ev.rank_of(math.exp(s[0]) * 3 + 1, np.exp(s[1:]) * 3 + 1) for s in scores])
    assert a == b and 0 < a <= 1


def test_metric_errors_and_mae():
    with pytest.raises(ValueError):
        ev.mrr([])
    with pytest.raises(ValueError):
        ev.mae([], [])
    assert ev.mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ev.mae([1.0, 4.0], [2.0, 2.0]) == 1.5


def test_buckets_partition():
    assert [ev.bucket_of(k) for k in (2, 3, 4, 5, 8, 9, 40)] == \
        ["k=2", "3<=k<=4", "3<=k<=4", "5<=k<=8", "5<=k<=8", "k>=9", "k>=9"]
    m = ev.summarize([0, 1, 2, 0, 5], [2, 3, 9, 6, 2], [1.0] * 5, [1.5] * 5)
    assert sum(b[2] for b in m.buckets.values()) == m.count == 5
    assert m.buckets["k=2"] == pytest.approx((0.5 * (1 + 1 / 6), 0.5, 2))
    assert m.mae == 0.5


def constant_model(c, name="DHE", n=6):
    m = assemble(name, n, seed=0, d=4)
    m.encoder.W_o.value[:] = 0.0
    m.encoder.b_o.value = np.array(math.log(math.expm1(c)))  # softplus(b_o) = c
    return m


def test_rayleigh_duration_closed_form():
    m = assemble("RHE", 4, seed=0, d=4)
    with no_recording():
        f = m.rayleigh_scale([(0, 1)])[0].value[0]
    got = ev.predict_duration(m, (0, 1))
    assert abs(got - math.sqrt(math.pi / (2 * f))) < 1e-12


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_constant_intensity_duration(c):
    m = constant_model(c)
    got = ev.predict_duration(m, (0, 1), horizon_factor=40.0, grid=4096, median_gap=1.0)
    assert abs(got - 1 / c) / (1 / c) < 0.02


def test_doubling_intensity_halves_duration():
    a = ev.predict_duration(constant_model(1.0), (0, 1), 40.0, 4096)
    b = ev.predict_duration(constant_model(2.0), (0, 1), 40.0, 4096)
    assert abs(b - a / 2) < 1e-3


def small_stream(seed=0):
    spec = dict(mode="planted", process="poisson", num_nodes=8, hyperedges=[[0, 1], [2, 3, 4], [5, 6, 7]],
                rate=1.0, horizon=40)
    return data.scale_times(data.generate_synthetic(spec, rng_for(seed, "simulate")))


def test_perfect_and_random_scorers():
    ds = small_stream()
    truth = dict(zip(ds.times.tolist(), ds.events))
    sampler = NegativeSampler(ds.events, ds.num_nodes)
    perfect = ev.evaluate_stream(None, ds.events, ds.times, sampler, 10, rng_for(0, "eval"), durations=False,
                                 scorer=lambda c, t: [float(h == truth[float(t)]) for h in c])
    assert perfect.mrr == 1.0
    noise = np.random.default_rng(0)
    rnd = ev.evaluate_stream(None, ds.events, ds.times, sampler, 10, rng_for(0, "eval"), durations=False,
                             scorer=lambda c, t: noise.random(len(c)))
    assert 0.1 < rnd.mrr < 0.5


def test_evaluate_stream_model_metrics():
    ds = small_stream()
    sampler = NegativeSampler(ds.events, ds.num_nodes)
    m = assemble("HGDHE", ds.num_nodes, seed=0, d=4)
    res = ev.evaluate_stream(m, ds.events[:30], ds.times[:30], sampler, 5, rng_for(0, "eval"))
    assert res.count == 30 and 0 < res.mrr <= 1 and res.mae >= 0
    assert sum(b[2] for b in res.buckets.values()) == 30
    assert m.sides[0].table.last.max() == ds.times[29]
    with pytest.raises(ValueError):
        ev.evaluate_stream(m, [], [], sampler, 5, rng_for(0, "eval"))


def test_streaming_causality():
    ds = small_stream()
    sampler = NegativeSampler(ds.events, ds.num_nodes)

    def ranks(events):
        m = assemble("DHE", ds.num_nodes, seed=0, d=4)
        return ev.evaluate_stream(m, events, ds.times[:20], sampler, 5, rng_for(0, "eval"), durations=False).ranks

    base = ranks(ds.events[:20])
    changed = ds.events[:15] + [(0, 7)] * 5
    assert ranks(changed)[:15] == base[:15]


def test_predict_type_matches_stream_rank():
    m = constant_model(1.0)
    r = ev.predict_type(m, (0, 1), 0.5, [(2, 3), (1, 4)])
    assert r.rank == 2 and r.candidates == 3  # all tied, pessimistic


def test_csv_and_table_outputs():
    m = ev.summarize([0, 1], [2, 3], [1.0, 2.0], [1.0, 1.0])
    text = ev.metrics_csv([("HGDHE", m)], time_scale=10.0)
    lines = text.strip().split("\n")
    assert lines[0] == "model,mrr,mae,mae_original,count"
    assert lines[1].split(",")[0] == "HGDHE" and float(lines[1].split(",")[3]) == 5.0
    b = ev.buckets_csv([("HGDHE", m)]).strip().split("\n")
    assert b[0] == "model,bucket,mrr,mae,count" and len(b) == 3
    table = ev.metrics_table([("HGDHE", m), ("DE", ev.summarize([1], [2]))])
    assert "75.00" in table and "n/a" in table
