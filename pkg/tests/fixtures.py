"""Deterministic synthetic corpora shared by the test modules."""
import numpy as np

from hgtpp import data

ENRON_SHAPE = (143, 10883, 1542)


def enron_shaped(seed=143):
    """Simplex stream with 143 nodes, 10,883 events and 1,542 distinct hyperedges.

    Sizes skew small like e-mail recipient lists and repeat counts are heavy
    tailed; every node takes part in at least one hyperedge. Original ids are
    sparse so remapping is exercised.
    """
    n, count, distinct = ENRON_SHAPE
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges, seen = [], set()
    # first cover every node with pairs and triples
    i = 0
    while i < n:
        k = min(int(rng.choice([2, 3])), n - i) if n - i > 3 else n - i
        h = tuple(sorted(int(v) for v in order[i:i + k]))
        edges.append(h)
        seen.add(h)
        i += k
    sizes = [2, 3, 4, 5, 6, 8]
    probs = np.array([0.55, 0.2, 0.1, 0.07, 0.05, 0.03])
    while len(edges) < distinct:
        k = int(rng.choice(sizes, p=probs))
        h = tuple(sorted(int(v) for v in rng.choice(n, k, replace=False)))
        if h not in seen:
            seen.add(h)
            edges.append(h)
    weights = 1.0 / np.arange(1, distinct + 1) ** 0.9
    extra = rng.choice(distinct, size=count - distinct, p=weights / weights.sum())
    picks = np.concatenate([np.arange(distinct), extra])
    rng.shuffle(picks)
    gaps = rng.geometric(0.002, size=count) - 1  # some zero gaps give concurrent events
    times = (9.1e8 + np.cumsum(gaps)).astype(np.float64)
    node_ids = np.sort(rng.choice(10 ** 5, size=n, replace=False)).astype(np.int64)
    return data.Dataset([edges[j] for j in picks], times, node_ids, name="email-Enron-shaped")
