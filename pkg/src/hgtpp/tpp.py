"""Point-process mathematics: survival, event density, Monte-Carlo survival
estimation, expected durations and Ogata thinning.

Intensities are plain objects that are callable on numpy arrays of times.
Optional methods add capabilities:

``integral(a, b)``
    closed-form ∫_a^b λ(τ) dτ, used by :func:`survival` when present.
``upper_bound(a, b)``
    a value λ_max with λ(t) <= λ_max on [a, b], required by thinning.
``observe(t)``
    notify a history-dependent intensity that an event happened at ``t``.
"""
import math

import numpy as np
from scipy.integrate import trapezoid

DEFAULT_GRID = 256


class ConstantIntensity:
    def __init__(self, rate):
        if rate < 0:
            raise ValueError("rate must be nonnegative")
        self.rate = float(rate)

    def __call__(self, t):
        return np.full(np.shape(t), self.rate) if np.ndim(t) else self.rate

    def integral(self, a, b):
        return self.rate * (b - a)

    def upper_bound(self, a, b):
        return self.rate


class RayleighIntensity:
    """λ(t) = α (t - t_p) for t >= t_p."""

    def __init__(self, alpha, t_p=0.0):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)
        self.t_p = float(t_p)

    def __call__(self, t):
        return self.alpha * np.maximum(np.asarray(t, dtype=float) - self.t_p, 0.0)

    def integral(self, a, b):
        a = max(a - self.t_p, 0.0)
        b = max(b - self.t_p, 0.0)
        return 0.5 * self.alpha * (b * b - a * a)

    def upper_bound(self, a, b):
        return self.alpha * max(b - self.t_p, 0.0)


class HawkesIntensity:
    """Self-exciting intensity μ + α Σ β exp(-β (t - t_i)) over observed events."""

    def __init__(self, mu, alpha, decay):
        if mu < 0 or alpha < 0 or decay <= 0:
            raise ValueError("need mu >= 0, alpha >= 0, decay > 0")
        if alpha >= 1:
            raise ValueError(f"unstable Hawkes process: branching ratio {alpha} >= 1")
        self.mu, self.alpha, self.decay = float(mu), float(alpha), float(decay)
        self.history = []

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.mu)
        for ti in self.history:
            dt = t - ti
            out = out + np.where(dt >= 0, self.alpha * self.decay * np.exp(-self.decay * np.maximum(dt, 0)), 0.0)
        return out if out.ndim else float(out)

    def upper_bound(self, a, b):
        # the kernel only decays between events, so λ(a+) bounds the interval
        lam = self.mu
        for ti in self.history:
            if ti <= a:
                lam += self.alpha * self.decay * math.exp(-self.decay * (a - ti))
        return lam

    def observe(self, t):
        self.history.append(float(t))

    def stationary_rate(self):
        return self.mu / (1.0 - self.alpha)


class FunctionIntensity:
    """Adapter for an arbitrary vectorized callable, with an optional bound."""

    def __init__(self, fn, bound=None):
        self.fn = fn
        self.bound = bound

    def __call__(self, t):
        return self.fn(t)

    def upper_bound(self, a, b):
        if self.bound is None:
            raise ValueError("intensity declares no upper bound")
        return self.bound(a, b) if callable(self.bound) else float(self.bound)


def integrated_intensity(intensity, t_from, t_to, grid=DEFAULT_GRID):
    if t_from > t_to:
        raise ValueError(f"interval start {t_from} is after its end {t_to}")
    if t_from == t_to:
        return 0.0
    if hasattr(intensity, "integral"):
        return float(intensity.integral(t_from, t_to))
    ts = np.linspace(t_from, t_to, grid)
    return float(trapezoid(np.asarray(intensity(ts), dtype=float), ts))


def survival(intensity, t_from, t_to, grid=DEFAULT_GRID):
    """exp(-∫_{t_from}^{t_to} λ)."""
    return math.exp(-integrated_intensity(intensity, t_from, t_to, grid))


def event_probability(intensity, t, t_p, grid=DEFAULT_GRID):
    """Density λ(t) S(t) of the first event after ``t_p`` occurring at ``t``."""
    if t < t_p:
        raise ValueError(f"event time {t} precedes anchor {t_p}")
    return float(intensity(t)) * survival(intensity, t_p, t, grid)


def mc_weights(samples):
    """Weights w with Σ w_j λ(s_j) equal to Σ_{j>=2} (s_j - s_{j-1}) λ(s_j).

    ``samples`` must be sorted ascending along the last axis.
    """
    samples = np.asarray(samples, dtype=float)
    w = np.zeros_like(samples)
    w[..., 1:] = np.diff(samples, axis=-1)
    return w


def sample_times(t_prev, t_i, n, rng):
    if n < 2:
        raise ValueError(f"need at least 2 Monte-Carlo samples, got {n}")
    if not t_prev < t_i:
        raise ValueError(f"empty sampling interval [{t_prev}, {t_i}]")
    return np.sort(rng.uniform(t_prev, t_i, size=n))


def mc_log_survival(intensity, t_prev, t_i, n, rng):
    """Monte-Carlo estimate of ∫_{t_prev}^{t_i} λ from ``n`` sorted uniform samples."""
    s = sample_times(t_prev, t_i, n, rng)
    return float(np.dot(mc_weights(s), np.asarray(intensity(s), dtype=float)))


def rayleigh_expected_duration(alpha):
    """Mean first-event delay for λ(t) = α (t - t_p): sqrt(π / (2α))."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return math.sqrt(math.pi / (2.0 * alpha))


def expected_duration_numeric(intensity, t_p, horizon_factor=20.0, grid=512, median_gap=1.0):
    """Trapezoidal E[t - t_p] under p(t) = λ(t) S(t), truncated and renormalized.

    The window is [t_p, t_p + horizon_factor * median_gap].
    """
    if grid < 16:
        raise ValueError("grid must have at least 16 points")
    if horizon_factor <= 0 or median_gap <= 0:
        raise ValueError("horizon must be positive")
    ts = np.linspace(t_p, t_p + horizon_factor * median_gap, grid)
    lam = np.asarray(intensity(ts), dtype=float)
    return duration_from_grid(ts - t_p, lam)


def duration_from_grid(offsets, lam):
    """Renormalized mean offset given intensities on an ascending grid of offsets."""
    steps = np.diff(offsets)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * steps)])
    p = lam * np.exp(-cum)
    mass = trapezoid(p, offsets)
    if mass < 1e-6:
        raise ValueError(f"estimated probability mass {mass:.3g} on the window is too small")
    return float(trapezoid(offsets * p, offsets) / mass)


def simulate_thinning(intensity, t_from, t_to, rng):
    """Ogata thinning on [t_from, t_to]; calls ``intensity.observe`` on accepted events."""
    if not hasattr(intensity, "upper_bound"):
        raise ValueError("thinning needs an intensity with a declared upper bound")
    observe = getattr(intensity, "observe", None)
    events = []
    t = float(t_from)
    while True:
        bound = float(intensity.upper_bound(t, t_to))
        if bound <= 0:
            break
        t += rng.exponential(1.0 / bound)
        if t > t_to:
            break
        if rng.uniform() * bound <= float(intensity(t)):
            events.append(t)
            if observe is not None:
                observe(t)
    return events
