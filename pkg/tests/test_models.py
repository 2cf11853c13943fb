import math

import numpy as np
import pytest

from hgtpp.models import (
    MODEL_NAMES,
    MODEL_FLAGS,
    ConfigError,
    ModelConfig,
    assemble,
    expected_parameter_names,
)
from hgtpp.tensor import no_recording

GOLDEN = {
    "RHE": ["emb", "enc.*"],
    "RDHE": ["emb", "dyn.W3", "dyn.W5", "dyn.b1", "enc.*"],
    "DE-drift": ["emb", "dyn.W0", "dyn.b0", "dyn.W1", "dyn.omega", "dyn.theta"],
    "DE": ["emb", "dyn.W0", "dyn.b0", "dyn.W1", "dyn.omega", "dyn.theta", "dyn.W3", "dyn.W4", "dyn.W5", "dyn.b1"],
    "DHE-drift": ["emb", "dyn.W0", "dyn.b0", "dyn.W1", "dyn.omega", "dyn.theta", "enc.*"],
    "DHE": ["emb", "dyn.W0", "dyn.b0", "dyn.W1", "dyn.omega", "dyn.theta", "dyn.W3", "dyn.W4", "dyn.W5",
            "dyn.b1", "enc.*"],
    "HGDHE-hist": ["emb", "dyn.W0", "dyn.b0", "dyn.W1", "dyn.omega", "dyn.theta", "dyn.W2", "dyn.Theta", "enc.*"],
    "HGDHE": ["emb", "dyn.W0", "dyn.b0", "dyn.W1", "dyn.omega", "dyn.theta", "dyn.W2", "dyn.Theta", "dyn.W3",
              "dyn.W4", "dyn.W5", "dyn.b1", "enc.*"],
}
ENC = ["W_Q", "W_K", "W_V", "W_s", "W_o", "b_o"]


def expand(names, bipartite=False):
    out = []
    for n in names:
        if n == "enc.*":
            out += ["enc.left." + e for e in ENC] + ["enc.right." + e for e in ENC] if bipartite \
                else ["enc." + e for e in ENC]
        else:
            out.append(n)
    return set(out)


def build(name, n=6, d=4, seed=0):
    cfg = ModelConfig.for_name(name, d=d)
    return assemble(cfg, n, seed=seed, num_right=5 if cfg.bipartite else None)


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_parameter_manifest_homogeneous(name):
    m = build(name)
    assert set(m.params) == expand(GOLDEN[name])
    assert list(m.params) == expected_parameter_names(m.config)


@pytest.mark.parametrize("name,base", [("BDE", "DE"), ("BDHE", "DHE"), ("HGBDHE", "HGDHE")])
def test_parameter_manifest_bipartite(name, base):
    m = build(name)
    sides = {s + n for s in ("left.", "right.") for n in GOLDEN[base] if n != "enc.*"}
    enc = expand(["enc.*"], True) if "enc.*" in GOLDEN[base] else set()
    assert set(m.params) == sides | enc


def test_flag_rows():
    assert MODEL_FLAGS["RHE"] == (False, False, False, True, False)
    assert MODEL_FLAGS["HGDHE"] == (True, True, True, True, False)
    assert len(MODEL_NAMES) == 11
    rhe = ModelConfig.for_name("RHE")
    assert rhe.intensity_family == "rayleigh"
    assert ModelConfig.for_name("HGDHE").intensity_family == "neural"


def test_config_errors():
    with pytest.raises(ConfigError):
        ModelConfig.for_name("TGN")
    with pytest.raises(ConfigError):
        ModelConfig("DHE", 4, True, True, True, True, False).validate()
    with pytest.raises(ConfigError):
        ModelConfig("DHE", 4, True, False, True, True, False, "rayleigh").validate()
    with pytest.raises(ConfigError):
        assemble("HGDHE", 1)
    with pytest.raises(ConfigError):
        assemble("BDHE", 4)


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_intensity_positive(name):
    m = build(name)
    cands = [((0, 1), (2,)), ((3,), (0, 4))] if m.bipartite else [(0, 1), (2, 3, 4)]
    with no_recording():
        m.observe([cands[0]], 1.0)
        lam = m.intensities(cands, np.array([[1.5, 2.0], [1.5, 2.0]]))[0].value
    assert np.all(lam > 0) and np.all(np.isfinite(lam))


def test_unknown_node_rejected():
    m = build("DHE")
    with pytest.raises((KeyError, IndexError, ValueError)):
        m.intensity((0, 99), 1.0)


@pytest.mark.parametrize("name", ["RHE", "RDHE"])
def test_rayleigh_vanishes_at_anchor(name):
    m = build(name)
    with no_recording():
        m.observe([(0, 1)], 2.0)
        f = m.rayleigh_scale([(0, 1)])[0].value[0]
        at = m.intensity((0, 1), 2.0).item()
        later = m.intensity((0, 1), 3.5).item()
    assert at <= f * 1e-9
    assert abs(later - 1.5 * f) < 1e-12


def test_de_is_product_of_pairwise_scores():
    m = build("DE")
    h = (0, 2, 5)
    side = m.sides[0]
    with no_recording():
        m.observe([(0, 1), (2, 5)], 1.0)
        t = 1.7
        emb = side.embed(np.array(h), np.full(3, t)).value
        want = 1.0
        for a in range(3):
            for b in range(a + 1, 3):
                want *= math.log1p(math.exp(emb[a] @ emb[b]))
        got = m.intensity(h, t).item()
    assert abs(got - want) < 1e-12 * want


def test_de_equal_scores_cube():
    m = build("DE-drift", d=4)
    side = m.sides[0]
    side.initial.value[:] = 0.3
    m.reset_state()
    with no_recording():
        s = m.intensities([(0, 1)], np.array([[0.5]]))[0].value[0, 0]
        cube = m.intensities([(0, 1, 2)], np.array([[0.5]]))[0].value[0, 0]
    assert abs(cube - s ** 3) < 1e-12


def test_rdhe_piecewise_constant():
    m = build("RDHE")
    side = m.sides[0]
    with no_recording():
        m.observe([(0, 1)], 1.0)
        a = side.embed(np.array([0, 1, 2]), np.full(3, 1.2)).value
        b = side.embed(np.array([0, 1, 2]), np.full(3, 4.9)).value
        m.observe([(1, 2)], 5.0)
        c = side.embed(np.array([0, 1, 2]), np.full(3, 5.5)).value
    assert np.array_equal(a, b)
    assert np.array_equal(a[0], c[0]) and not np.array_equal(a[1], c[1])


def test_drift_only_ignores_event_participation():
    m = build("DHE-drift")
    probe = [(0, 1), (2, 3, 4)]
    events = [((0, 1), 1.0), ((2, 3), 2.0), ((1, 4), 3.0), ((0, 5), 4.0)]

    def run(order):
        m.reset_state()
        with no_recording():
            for h, t in order:
                m.observe([h], t)
            return m.intensities(probe, np.full((2, 1), 4.5))[0].value

    base = run(events)
    # same nodes and last-interaction times, different co-participants
    swapped = [((0, 1), 1.0), ((2, 3), 2.0), ((4, 1), 3.0), ((5, 0), 4.0)]
    assert np.array_equal(base, run(swapped))


def test_hgdhe_hist_keeps_initial_state_but_advances_time():
    m = build("HGDHE-hist")
    side = m.sides[0]
    init = side.initial.value.copy()
    with no_recording():
        m.observe([(0, 1)], 2.0)
    assert np.array_equal(side.table.emb.value, init)
    assert side.table.last[0] == 2.0


def test_state_dict_round_trip_and_mismatch():
    a, b = build("HGDHE", seed=1), build("HGDHE", seed=2)
    b.load_state_dict(a.state_dict())
    with no_recording():
        x = a.intensity((0, 1, 2), 0.5).item()
        y = b.intensity((0, 1, 2), 0.5).item()
    assert x == y
    with pytest.raises(ConfigError):
        b.load_state_dict(build("DHE").state_dict())
    with pytest.raises(ConfigError):
        b.load_state_dict(build("HGDHE", d=8).state_dict())


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_expected_duration_positive(name):
    m = build(name)
    h = ((0, 1), (2,)) if m.bipartite else (0, 1, 2)
    with no_recording():
        m.observe([h], 1.0)
        dur = m.expected_duration(h, horizon_factor=20.0, grid=256, median_gap=1.0)
    assert dur > 0 and math.isfinite(dur)
