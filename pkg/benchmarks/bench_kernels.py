"""Compare the Cython kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--epoch]

Prints one row per kernel with the best-of-``repeat`` time for each backend,
the speedup, and the max absolute difference between the two outputs.
"""
import argparse
import timeit

import numpy as np

from hgtpp import kernels


def attention_inputs(batch, k, d, seed=0):
    rng = np.random.default_rng(seed)
    q, kk, v = (rng.normal(size=(batch, k, d)) for _ in range(3))
    sizes = rng.integers(2, k + 1, size=batch)
    mask = np.arange(k)[None, :] < sizes[:, None]
    return q, kk, v, mask


def attention_cases(batch, d):
    q, k, v, mask = attention_inputs(batch, 5, d)
    fwd = lambda: kernels.attention_forward(q, k, v, mask, mask, True)  # noqa: E731
    _, alpha = fwd()
    grad = np.random.default_rng(1).normal(size=q.shape)
    bwd = lambda: kernels.attention_backward(grad, q, k, v, alpha)  # noqa: E731
    return [(f"attention_forward b={batch} k=5 d={d}", fwd), (f"attention_backward b={batch} k=5 d={d}", bwd)]


def cases():
    # one event with 10 negatives is the common training call; the large batch shows BLAS-bound scaling
    rng = np.random.default_rng(2)
    idx = rng.integers(0, 500, size=20000)
    src = rng.normal(size=(20000, 64))
    scatter = lambda: kernels.index_add_rows(500, idx, src, (64,))  # noqa: E731
    return attention_cases(11, 16) + attention_cases(2048, 64) + [("index_add_rows n=20000 d=64", scatter)]


def first_array(out):
    return out[0] if isinstance(out, tuple) else out


def epoch_case():
    from hgtpp import data
    from hgtpp.models import assemble
    from hgtpp.seeding import rng_for
    from hgtpp.training import NegativeSampler, TrainConfig, group_events, run_epoch

    spec = dict(num_nodes=10, hyperedges=[[0, 1], [2, 3, 4], [5, 6, 7, 8]], rate=1.0, horizon=60)
    ds = data.scale_times(data.generate_synthetic(spec, rng_for(0, "simulate")))
    groups = group_events(ds.events, ds.times)
    sampler = NegativeSampler(ds.events, ds.num_nodes)
    cfg = TrainConfig(segment=32, negatives=10, mc_samples=10)

    def run():
        m = assemble("HGDHE", ds.num_nodes, seed=0, d=32)
        return np.array(run_epoch(m, groups, sampler, cfg))

    return (f"HGDHE epoch d=32, {len(ds)} events", run)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5, help="timing repeats, best is kept (default: 5)")
    ap.add_argument("--epoch", action="store_true", help="also time one full training epoch (default: off)")
    args = ap.parse_args()
    try:
        kernels.use_backend("cython")
    except ImportError:
        print("Cython extension not built; run: python3 setup.py build_ext --inplace")
        return 1
    todo = cases() + ([epoch_case()] if args.epoch else [])
    print(f"{'kernel':40s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in todo:
        row = {}
        for backend in ("cython", "python"):
            kernels.use_backend(backend)
            out = first_array(fn())
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            row[backend] = (best, np.asarray(out))
        diff = float(np.abs(row["cython"][1] - row["python"][1]).max())
        c, p = row["cython"][0] * 1e3, row["python"][0] * 1e3
        print(f"{name:40s} {c:10.2f} {p:10.2f} {p / c:8.2f} {diff:9.1e}")
    kernels.use_backend("cython")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
