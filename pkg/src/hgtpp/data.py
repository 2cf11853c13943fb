"""Corpus ingestion, preprocessing, synthetic generation and statistics."""
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import tpp

MODES = ("planted", "clique-confusable")
PROCESSES = ("poisson", "hawkes", "rayleigh")

# octahedron K_{2,2,2}: antipodal pairs (0,5), (1,4), (2,3) are the only non-edges.
# Both face families cover all 12 edges exactly once.
CONFUSABLE_A = ((0, 1, 2), (0, 3, 4), (1, 3, 5), (2, 4, 5))
CONFUSABLE_B = ((0, 1, 3), (0, 2, 4), (1, 2, 5), (3, 4, 5))


class DataError(ValueError):
    """Malformed corpus or invalid generator spec."""


@dataclass
class Dataset:
    """A time-sorted hyperedge stream with dense node ids.

    Homogeneous events are sorted node-id tuples; bipartite events are pairs of
    such tuples (left ids and right ids live in separate spaces).
    ``node_ids[i]`` is the original id of dense node ``i``.
    """

    events: list
    times: np.ndarray
    node_ids: np.ndarray
    right_ids: np.ndarray = None
    bipartite: bool = False
    name: str = ""
    time_scale: float = 1.0
    notes: dict = field(default_factory=dict)

    @property
    def num_nodes(self):
        return int(self.node_ids.size)

    @property
    def num_right(self):
        return 0 if self.right_ids is None else int(self.right_ids.size)

    def __len__(self):
        return len(self.events)

    def equals(self, other):
        """Bitwise equality of ids, events and times."""
        if self.bipartite != other.bipartite or self.events != other.events:
            return False
        same = lambda a, b: (a is None and b is None) or (a is not None and b is not None and a.dtype == b.dtype
                                                          and np.array_equal(a, b))
        return (np.array_equal(self.times.view(np.int64), other.times.view(np.int64))
                and same(self.node_ids, other.node_ids) and same(self.right_ids, other.right_ids))

    def subset(self, rng):
        return self.events[rng.start:rng.stop], self.times[rng.start:rng.stop]

    def without_singletons(self):
        """Copy without single-node events (homogeneous only); returns (dataset, dropped)."""
        if self.bipartite:
            return self, 0
        keep = [i for i, h in enumerate(self.events) if len(h) >= 2]
        dropped = len(self.events) - len(keep)
        if not dropped:
            return self, 0
        return replace(self, events=[self.events[i] for i in keep], times=self.times[keep]), dropped


@dataclass(frozen=True)
class Split:
    train: range
    val: range
    test: range


def _remap(original):
    """Dense ids by sorted original id."""
    ids = np.unique(np.asarray(original, dtype=np.int64))
    return ids, {int(v): i for i, v in enumerate(ids)}


def _sorted_stream(events, times):
    times = np.asarray(times, dtype=np.float64)
    order = np.argsort(times, kind="stable")
    return [events[i] for i in order], times[order]


def _read_lines(path):
    with open(path) as f:
        return f.read().splitlines()


def _parse_number(text, kind, path, lineno):
    try:
        return kind(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: expected a number, got {text!r}") from None


def _parse_time(text, path, lineno):
    t = _parse_number(text.strip(), float, path, lineno)
    if not math.isfinite(t):
        raise DataError(f"{path}:{lineno}: non-finite timestamp {text!r}")
    return t


def simplex_paths(prefix):
    """The file triple for a corpus prefix (a directory holding one corpus also works)."""
    if os.path.isdir(prefix):
        found = [f[: -len("-nverts.txt")] for f in sorted(os.listdir(prefix)) if f.endswith("-nverts.txt")]
        if len(found) != 1:
            raise DataError(f"{prefix}: expected exactly one *-nverts.txt file, found {len(found)}")
        prefix = os.path.join(prefix, found[0])
    return prefix + "-nverts.txt", prefix + "-simplices.txt", prefix + "-times.txt"


def load_simplex_corpus(nverts_path, simplices_path, times_path, name=None):
    nverts = [_parse_number(s.strip(), int, nverts_path, i + 1) for i, s in enumerate(_read_lines(nverts_path))
              if s.strip()]
    simplices = [_parse_number(s.strip(), int, simplices_path, i + 1)
                 for i, s in enumerate(_read_lines(simplices_path)) if s.strip()]
    times = [_parse_time(s, times_path, i + 1) for i, s in enumerate(_read_lines(times_path)) if s.strip()]
    if len(nverts) != len(times):
        raise DataError(f"{nverts_path}: {len(nverts)} events but {len(times)} timestamps")
    if sum(nverts) != len(simplices):
        raise DataError(f"{simplices_path}: expected {sum(nverts)} node ids, found {len(simplices)}")
    if any(n < 1 for n in nverts):
        raise DataError(f"{nverts_path}: every event needs at least one node")
    ids, pos = _remap(simplices)
    events, k, dups = [], 0, 0
    for n in nverts:
        members = sorted({pos[v] for v in simplices[k:k + n]})
        dups += n - len(members)
        events.append(tuple(members))
        k += n
    events, times = _sorted_stream(events, times)
    name = name or os.path.basename(nverts_path)[: -len("-nverts.txt")]
    return Dataset(events, times, ids, name=name, notes={"duplicates_removed": dups})


def load_simplex_prefix(prefix):
    return load_simplex_corpus(*simplex_paths(prefix))


def _split_record(line):
    sep = "\t" if "\t" in line else "|"
    return [p.strip() for p in line.split(sep)]


def load_bipartite_corpus(path, name=None):
    """One event per line: ``time<TAB>left ids<TAB>right ids`` (``|`` also accepted), ids comma-separated."""
    records, dups = [], 0
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = _split_record(line)
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        t = _parse_time(parts[0], path, lineno)
        sides = []
        for text in parts[1:]:
            ids = [_parse_number(x.strip(), int, path, lineno) for x in text.split(",") if x.strip()]
            if not ids:
                raise DataError(f"{path}:{lineno}: empty side")
            dups += len(ids) - len(set(ids))
            sides.append(sorted(set(ids)))
        records.append((t, sides[0], sides[1]))
    left_ids, lpos = _remap([v for _, l, _ in records for v in l])
    right_ids, rpos = _remap([v for _, _, r in records for v in r])
    events = [(tuple(sorted(lpos[v] for v in l)), tuple(sorted(rpos[v] for v in r))) for _, l, r in records]
    events, times = _sorted_stream(events, [t for t, _, _ in records])
    name = name or os.path.splitext(os.path.basename(path))[0]
    return Dataset(events, times, left_ids, right_ids, bipartite=True, name=name,
                   notes={"duplicates_removed": dups})


def load_dataset(path, bipartite=False):
    """A bipartite events file or a simplex corpus (prefix or directory)."""
    if bipartite:
        if os.path.isdir(path):
            files = sorted(f for f in os.listdir(path) if f.endswith(".tsv") or f.endswith(".txt"))
            if len(files) != 1:
                raise DataError(f"{path}: expected exactly one bipartite events file")
            path = os.path.join(path, files[0])
        return load_bipartite_corpus(path)
    return load_simplex_prefix(path)


def format_time(t):
    """Shortest text that parses back to the same float."""
    t = float(t)
    if t.is_integer() and abs(t) < 2 ** 53:
        return str(int(t))
    return repr(t)


def _original_times(ds):
    return ds.times * ds.time_scale if ds.time_scale != 1.0 else ds.times


def save_simplex_corpus(ds, prefix):
    if ds.bipartite:
        raise DataError("a bipartite dataset cannot be written as a simplex corpus")
    d = os.path.dirname(prefix)
    if d:
        os.makedirs(d, exist_ok=True)
    paths = (prefix + "-nverts.txt", prefix + "-simplices.txt", prefix + "-times.txt")
    with open(paths[0], "w") as f:
        f.writelines(f"{len(h)}\n" for h in ds.events)
    with open(paths[1], "w") as f:
        f.writelines(f"{int(ds.node_ids[v])}\n" for h in ds.events for v in h)
    with open(paths[2], "w") as f:
        f.writelines(format_time(t) + "\n" for t in _original_times(ds))
    return paths


def save_bipartite_corpus(ds, path):
    if not ds.bipartite:
        raise DataError("not a bipartite dataset")
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as f:
        for (left, right), t in zip(ds.events, _original_times(ds)):
            lt = ",".join(str(int(ds.node_ids[v])) for v in left)
            rt = ",".join(str(int(ds.right_ids[v])) for v in right)
            f.write(f"{format_time(t)}\t{lt}\t{rt}\n")
    return path


def median_gap(times):
    gaps = np.diff(np.asarray(times, dtype=np.float64))
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        raise DataError("need at least 2 distinct timestamps")
    return float(np.median(gaps))


def scale_times(ds):
    """Divide timestamps by the median positive interevent gap."""
    factor = median_gap(ds.times)
    return replace(ds, times=ds.times / factor, time_scale=ds.time_scale * factor)


def split(ds_or_n):
    n = ds_or_n if isinstance(ds_or_n, int) else len(ds_or_n)
    if n < 4:
        raise DataError(f"need at least 4 events to split, got {n}")
    a, b = n // 2, (3 * n) // 4
    return Split(range(0, a), range(a, b), range(b, n))


# ---- synthetic streams -------------------------------------------------

def _make_intensity(process, spec, rate):
    if process == "poisson":
        return tpp.ConstantIntensity(rate)
    if process == "hawkes":
        return tpp.HawkesIntensity(rate, float(spec.get("alpha", 0.5)), float(spec.get("decay", 1.0)))
    if process == "rayleigh":
        return _RenewalRayleigh(rate)
    raise DataError(f"unknown process {process!r}; choose from {', '.join(PROCESSES)}")


class _RenewalRayleigh:
    """Rayleigh intensity that restarts its clock at each accepted event."""

    def __init__(self, alpha):
        self.alpha = float(alpha)
        self.t_p = 0.0

    def __call__(self, t):
        return self.alpha * np.maximum(np.asarray(t, dtype=float) - self.t_p, 0.0)

    def upper_bound(self, a, b):
        return self.alpha * max(b - self.t_p, 0.0)

    def observe(self, t):
        self.t_p = float(t)


def planted_hyperedges(num_nodes, count, sizes, rng):
    """``count`` distinct random node sets with sizes drawn uniformly from ``sizes``."""
    seen, out = set(), []
    limit = 1000 * max(count, 1)
    while len(out) < count:
        limit -= 1
        if limit < 0:
            raise DataError("could not draw enough distinct planted hyperedges")
        k = int(rng.choice(sizes))
        if k > num_nodes:
            raise DataError(f"hyperedge size {k} exceeds {num_nodes} nodes")
        h = tuple(sorted(int(v) for v in rng.choice(num_nodes, k, replace=False)))
        if h not in seen:
            seen.add(h)
            out.append(h)
    return out


def generate_synthetic(spec, rng):
    """Simulate independent per-hyperedge point processes by thinning.

    ``spec`` keys: ``mode`` (planted | clique-confusable), ``process``
    (poisson | hawkes | rayleigh), ``num_nodes``, ``horizon``, ``rate`` (or a
    list ``rates``), ``hyperedges`` (explicit list), ``count`` and ``sizes``
    for random planting, ``alpha``/``decay`` for Hawkes, ``copies`` for the
    clique-confusable mode.
    """
    mode = spec.get("mode", "planted")
    process = spec.get("process", "poisson")
    if mode not in MODES:
        raise DataError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}")
    if process not in PROCESSES:
        raise DataError(f"unknown process {process!r}; choose from {', '.join(PROCESSES)}")
    horizon = float(spec.get("horizon", 100.0))
    if not horizon > 0:
        raise DataError("horizon must be positive")
    if mode == "clique-confusable":
        copies = int(spec.get("copies", 1))
        num_nodes = 6 * copies
        edges = [tuple(v + 6 * c for v in h) for c in range(copies) for h in CONFUSABLE_A]
    else:
        num_nodes = int(spec.get("num_nodes", 10))
        if num_nodes < 2:
            raise DataError("need at least 2 nodes")
        if "hyperedges" in spec:
            edges = [tuple(sorted(set(int(v) for v in h))) for h in spec["hyperedges"]]
            if any(len(h) < 2 or max(h) >= num_nodes or min(h) < 0 for h in edges):
                raise DataError("planted hyperedges need >= 2 valid node ids")
        else:
            edges = planted_hyperedges(num_nodes, int(spec.get("count", 5)),
                                       [int(k) for k in spec.get("sizes", [2, 3])], rng)
    rates = spec.get("rates")
    if rates is None:
        rates = [float(spec.get("rate", 1.0))] * len(edges)
    if len(rates) != len(edges):
        raise DataError(f"{len(rates)} rates for {len(edges)} hyperedges")
    if any(r < 0 for r in rates):
        raise DataError("rates must be nonnegative")
    events, times = [], []
    for h, r in zip(edges, rates):
        if r == 0:
            continue
        ts = tpp.simulate_thinning(_make_intensity(process, spec, r), 0.0, horizon, rng)
        events += [h] * len(ts)
        times += ts
    events, times = _sorted_stream(events, times)
    ds = Dataset(events, times, np.arange(num_nodes, dtype=np.int64), name=spec.get("name", f"synthetic-{mode}"))
    ds.notes["planted"] = edges
    if mode == "clique-confusable":
        ds.notes["alternative"] = [tuple(v + 6 * c for v in h) for c in range(copies) for h in CONFUSABLE_B]
    return ds


def projection(edges):
    """Pairwise projection (set of sorted node pairs) of a hyperedge family."""
    out = set()
    for h in edges:
        h = sorted(h)
        out.update((a, b) for i, a in enumerate(h) for b in h[i + 1:])
    return out


# ---- statistics --------------------------------------------------------

@dataclass
class Stats:
    name: str
    num_nodes: int
    num_right: object
    num_events: int
    num_hyperedges: int
    num_right_hyperedges: object


def stats(ds):
    if ds.bipartite:
        return Stats(ds.name, ds.num_nodes, ds.num_right, len(ds),
                     len({h[0] for h in ds.events}), len({h[1] for h in ds.events}))
    return Stats(ds.name, ds.num_nodes, None, len(ds), len(set(ds.events)), None)


def stats_table(rows):
    """Aligned text in the shape |V|, |V'|, |E(T)|, |H|, |H'|."""
    head = ("Dataset", "|V|", "|V'|", "|E(T)|", "|H|", "|H'|")
    fmt = lambda x: "N/A" if x is None else f"{x:,}"
    lines = [head] + [(s.name, fmt(s.num_nodes), fmt(s.num_right), fmt(s.num_events),
                       fmt(s.num_hyperedges), fmt(s.num_right_hyperedges)) for s in rows]
    widths = [max(len(r[i]) for r in lines) for i in range(len(head))]
    return "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
                     for r in lines) + "\n"
