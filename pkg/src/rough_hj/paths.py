"""Driving signals: piecewise-linear interpolants and the path families used in the experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

PATH_FAMILIES = ("BrownianSample", "TakagiLike", "RandomWalkPair", "SquareWavePair", "ExplicitSamples")

# increment laws for RandomWalkPair, each normalized to unit second moment
DISTRIBUTIONS = {
    "rademacher": {"symmetric": True, "abs_min": 1.0, "abs_max": 1.0},
    "uniform": {"symmetric": True, "abs_min": 0.0, "abs_max": math.sqrt(3.0)},
}


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    knot_times: np.ndarray
    knot_values: np.ndarray  # shape (K, M)

    def __post_init__(self):
        t = np.array(self.knot_times, dtype=float)
        v = np.array(self.knot_values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a path needs at least two knots")
        if v.shape[0] != t.size:
            raise ValueError("knot_times and knot_values differ in length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knot_times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("non-finite knot data")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knot_times", t)
        object.__setattr__(self, "knot_values", v)

    @property
    def dimension(self) -> int:
        return self.knot_values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.knot_times[-1])

    def component(self, i: int) -> PiecewiseLinearPath:
        return PiecewiseLinearPath(self.knot_times, self.knot_values[:, i])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.stack([np.interp(t, self.knot_times, self.knot_values[:, i])
                        for i in range(self.dimension)], axis=-1)
        return out[..., 0] if self.dimension == 1 else out

    def slopes(self) -> np.ndarray:
        d = np.diff(self.knot_values, axis=0) / np.diff(self.knot_times)[:, None]
        return d[:, 0] if self.dimension == 1 else d

    def total_variation(self, direction=None) -> float:
        inc = np.diff(self.knot_values, axis=0)
        if direction is not None:
            return float(np.sum(np.abs(inc @ np.asarray(direction, dtype=float))))
        return float(np.sum(np.linalg.norm(inc, axis=1)))

    def sup_distance(self, other: PiecewiseLinearPath, horizon: float | None = None) -> float:
        """sup over [0, horizon] of |self - other|; exact for piecewise-linear paths."""
        horizon = min(self.horizon, other.horizon) if horizon is None else horizon
        t = np.union1d(self.knot_times, other.knot_times)
        t = np.union1d(t[t <= horizon], [horizon])
        diff = np.asarray(self(t)) - np.asarray(other(t))
        return float(np.max(np.abs(diff)))

    def shifted(self, offset) -> PiecewiseLinearPath:
        return PiecewiseLinearPath(self.knot_times, self.knot_values + np.asarray(offset, dtype=float))

    def restricted(self, t0: float, t1: float) -> PiecewiseLinearPath:
        inner = self.knot_times[(self.knot_times > t0) & (self.knot_times < t1)]
        t = np.concatenate([[t0], inner, [t1]])
        vals = self(t)
        return PiecewiseLinearPath(t, vals)

    def to_csv(self, path) -> None:
        from .cli_io import write_csv

        cols = [self.knot_times] + [self.knot_values[:, i] for i in range(self.dimension)]
        names = ["t"] + [f"w{i + 1}" for i in range(self.dimension)]
        write_csv(path, names, cols)

    @classmethod
    def from_csv(cls, path) -> PiecewiseLinearPath:
        from .cli_io import read_csv

        header, data = read_csv(path)
        if header[0] != "t":
            raise ValueError("path CSV must start with column 't'")
        return cls(data[:, 0], data[:, 1:])


def line(slope: float = 1.0, horizon: float = 1.0) -> PiecewiseLinearPath:
    return PiecewiseLinearPath([0.0, horizon], [0.0, slope * horizon])


def tent(height: float = 1.0, half_width: float = 1.0, start: float = 0.0,
         horizon: float | None = None) -> PiecewiseLinearPath:
    """0 up to ``start``, linear up to ``height`` and back down over ``2 half_width``."""
    t = [start, start + half_width, start + 2.0 * half_width]
    v = [0.0, height, 0.0]
    if start > 0.0:
        t = [0.0] + t
        v = [0.0] + v
    if horizon is not None and horizon > t[-1]:
        t.append(horizon)
        v.append(0.0)
    return PiecewiseLinearPath(t, v)


# ---------------------------------------------------------------------------
# interpolation and monotone decomposition


def interpolate(samples, horizon: float, step: float) -> PiecewiseLinearPath:
    """Piecewise-linear interpolant with knots at k * step, k = 0..ceil(T / step).

    ``samples`` is either a callable t -> W(t) or a ``(times, values)`` pair;
    sample lists are read at the knots by linear interpolation, so a list that
    already contains every knot is reproduced exactly there.
    """
    if step <= 0:
        raise ValueError("interpolation step must be positive")
    if horizon < step:
        raise ValueError("horizon must be at least one step")
    k = int(math.ceil(horizon / step - 1e-9))
    knots = step * np.arange(k + 1)
    if callable(samples):
        vals = np.array([np.atleast_1d(np.asarray(samples(t), dtype=float)) for t in knots])
    else:
        times, values = samples
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if knots[-1] > times[-1] + 1e-12 or knots[0] < times[0] - 1e-12:
            raise ValueError("samples do not cover the interpolation knots")
        vals = np.stack([np.interp(knots, times, values[:, i]) for i in range(values.shape[1])], axis=1)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite sample value")
    return PiecewiseLinearPath(knots, vals)


@dataclass(frozen=True)
class MonotoneSegment:
    start_time: float
    end_time: float
    increment: float

    def __post_init__(self):
        if not self.end_time > self.start_time:
            raise ValueError("segment end must follow its start")

    @property
    def direction(self) -> int:
        return int(np.sign(self.increment))

    @property
    def rate(self) -> float:
        return self.increment / (self.end_time - self.start_time)


def monotone_segments(path: PiecewiseLinearPath) -> list[MonotoneSegment]:
    """Maximal runs of knot intervals on which a scalar path is increasing, decreasing or flat."""
    if path.dimension != 1:
        raise ValueError("monotone segments need a scalar path")
    t = path.knot_times
    w = path.knot_values[:, 0]
    inc = np.diff(w)
    sgn = np.sign(inc).astype(int)
    segs: list[MonotoneSegment] = []
    start = 0
    for i in range(1, inc.size + 1):
        if i == inc.size or sgn[i] != sgn[start]:
            segs.append(MonotoneSegment(float(t[start]), float(t[i]), float(w[i] - w[start])))
            start = i
    return segs


# ---------------------------------------------------------------------------
# moduli of continuity


@dataclass(frozen=True, eq=False)
class ModulusTable:
    lags: np.ndarray
    values: np.ndarray
    horizon: float
    clamped: bool = False

    def __call__(self, s):
        lags = np.concatenate([[0.0], self.lags])
        vals = np.concatenate([[0.0], self.values])
        return np.interp(s, lags, vals)


def modulus_table(path: PiecewiseLinearPath, horizon: float, lag_grid, refine: int = 64) -> ModulusTable:
    """omega_{W,T}(s) = max |W(t) - W(t')| over |t - t'| <= s, t, t' on [0, T].

    Evaluated on a uniform grid ``refine`` times finer than the smallest lag.
    """
    lag_grid = np.asarray(lag_grid, dtype=float)
    if lag_grid.size == 0:
        raise ValueError("empty lag grid")
    if np.any(lag_grid <= 0) or np.any(lag_grid > horizon + 1e-12):
        raise ValueError("lags must lie in (0, T]")
    h = float(lag_grid.min()) / refine
    m = int(math.ceil(horizon / h))
    t = np.linspace(0.0, horizon, m + 1)
    w = np.asarray(path(t), dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    max_shift = min(m, int(math.floor(lag_grid.max() / (horizon / m) + 1e-9)))
    lags = np.sort(lag_grid)
    shifts = np.minimum(np.floor(lags / (horizon / m) + 1e-9).astype(int), max_shift)
    if w.shape[1] == 1:
        # oscillation over sliding windows; edge-clamped windows are sub-windows, so the max is exact
        col = w[:, 0]
        vals = np.array([float(np.max(maximum_filter1d(col, k + 1, mode="nearest")
                                      - minimum_filter1d(col, k + 1, mode="nearest"))) if k > 0 else 0.0
                         for k in shifts])
        return ModulusTable(lags, np.maximum.accumulate(vals), float(horizon))
    per_shift = np.zeros(max_shift + 1)
    for k in range(1, max_shift + 1):
        per_shift[k] = np.max(np.linalg.norm(w[k:] - w[:-k], axis=1))
    running = np.maximum.accumulate(per_shift)
    return ModulusTable(lags, running[shifts], float(horizon))


def chi_inverse(table: ModulusTable, r_grid=None) -> ModulusTable:
    """Inverse of s -> s * omega(s) on the table's range.

    The result is stored as a ModulusTable whose ``lags`` are r-values and
    ``values`` the inverse; ``clamped`` is set when requested r exceed the
    representable range (those queries return the largest lag).
    """
    if np.all(table.values == 0):
        raise ValueError("modulus identically zero; s * omega(s) is not invertible")
    lags = np.concatenate([[0.0], table.lags])
    g = lags * np.concatenate([[0.0], table.values])
    if r_grid is None:
        r_grid = g[1:]
    r_grid = np.asarray(r_grid, dtype=float)
    clamped = bool(np.any(r_grid > g[-1] * (1 + 1e-12)))
    out = np.array([_invert_monotone(lags, table.values, r) for r in np.minimum(r_grid, g[-1])])
    return ModulusTable(r_grid, out, table.horizon, clamped)


def chi(table: ModulusTable, r: float) -> tuple[float, bool]:
    """chi(r) and a flag telling whether r was clamped to the representable range."""
    lags = np.concatenate([[0.0], table.lags])
    top = lags[-1] * table.values[-1]
    return _invert_monotone(lags, table.values, min(r, top)), r > top * (1 + 1e-12)


def _invert_monotone(lags, values, r, iters: int = 200):
    omega = np.concatenate([[0.0], values])

    def g(s):
        return s * np.interp(s, lags, omega)

    if r <= 0:
        return 0.0
    lo, hi = 0.0, float(lags[-1])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) < r:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# path families


@dataclass(frozen=True)
class PathFamilySpec:
    family: str
    theta: float = 0.5
    depth: int = 10
    eta: float = 2.0**-6
    mu: float = 1.0
    seed: int = 0
    x1: str = "rademacher"
    x2: str = "rademacher"
    samples: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.family not in PATH_FAMILIES:
            raise ValueError(f"unknown path family {self.family!r}")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.family == "RandomWalkPair":
            random_walk_ratio_bound(self.x1, self.x2)

    def to_config(self) -> dict:
        return {
            "family": self.family, "theta": self.theta, "depth": self.depth, "eta": self.eta,
            "mu": self.mu, "seed": self.seed, "x1": self.x1, "x2": self.x2,
        }


def random_walk_ratio_bound(x1: str, x2: str) -> float:
    """Declared bound on |X2 / X1|; raises when the pair violates the random-walk assumptions."""
    for name in (x1, x2):
        if name not in DISTRIBUTIONS:
            raise ValueError(f"unknown increment distribution {name!r}")
    d1, d2 = DISTRIBUTIONS[x1], DISTRIBUTIONS[x2]
    if not d1["symmetric"]:
        raise ValueError("X1 must satisfy P(X1 > 0) = P(X1 < 0)")
    if d1["abs_min"] <= 0.0:
        raise ValueError("|X2 / X1| is unbounded: X1 is not bounded away from 0")
    return d2["abs_max"] / d1["abs_min"]


def _draw(rng: np.random.Generator, name: str, size: int) -> np.ndarray:
    if name == "rademacher":
        return np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return math.sqrt(3.0) * (2.0 * rng.random(size) - 1.0)


def takagi_like(theta: float, depth: int, horizon: float = 1.0) -> PiecewiseLinearPath:
    """Self-affine path built by base-4 refinement, knots at 2**-depth (horizon a whole number).

    Each interval with increment D splits into four with increments
    (a, a, -b, a) * D where 3a - b = 1 and 3a + b = 4**theta, so the
    variation at 4-adic level j is exactly 4**(j theta) per unit time; for
    theta = 1/2 every 4-adic interpolant has slopes of magnitude eta**-theta.
    """
    a = (1.0 + 4.0**theta) / 6.0
    b = (4.0**theta - 1.0) / 2.0
    mult = np.array([a, a, -b, a])
    levels = (depth + 1) // 2
    n_units = int(round(horizon))
    if abs(n_units - horizon) > 1e-12 or n_units < 1:
        raise ValueError("TakagiLike horizon must be a positive integer")
    inc = np.ones(n_units)
    for _ in range(levels):
        inc = (inc[:, None] * mult[None, :]).ravel()
    values = np.concatenate([[0.0], np.cumsum(inc)])
    times = np.linspace(0.0, horizon, values.size)
    fine = PiecewiseLinearPath(times, values)
    if 2 * levels == depth:
        return fine
    return interpolate((times, values), horizon, 2.0**-depth)


def square_wave_pair(mu: float, eta: float, horizon: float) -> tuple[PiecewiseLinearPath, PiecewiseLinearPath]:
    """W1 with slope +-mu on blocks of 2 eta (period 4 eta), W2 with slope +-mu on blocks of eta."""
    k = int(math.ceil(horizon / eta - 1e-9))
    t = eta * np.arange(k + 1)
    idx = np.arange(k)
    s1 = np.where((idx // 2) % 2 == 0, mu, -mu)
    s2 = np.where(idx % 2 == 0, mu, -mu)
    w1 = np.concatenate([[0.0], np.cumsum(s1 * eta)])
    w2 = np.concatenate([[0.0], np.cumsum(s2 * eta)])
    return PiecewiseLinearPath(t, w1), PiecewiseLinearPath(t, w2)


def random_walk_pair(spec: PathFamilySpec, horizon: float,
                     rng: np.random.Generator | None = None) -> tuple[PiecewiseLinearPath, PiecewiseLinearPath]:
    rng = rng_for(spec.seed) if rng is None else rng
    k = int(math.ceil(horizon / spec.eta - 1e-9))
    x1 = _draw(rng, spec.x1, k)
    x2 = _draw(rng, spec.x2, k)
    t = spec.eta * np.arange(k + 1)
    step = math.sqrt(spec.eta)
    w1 = np.concatenate([[0.0], np.cumsum(step * x1)])
    w2 = np.concatenate([[0.0], np.cumsum(step * x2)])
    return PiecewiseLinearPath(t, w1), PiecewiseLinearPath(t, w2)


def brownian_sample(eta: float, horizon: float, seed: int) -> PiecewiseLinearPath:
    k = int(math.ceil(horizon / eta - 1e-9))
    rng = rng_for(seed)
    inc = rng.standard_normal(k) * math.sqrt(eta)
    return PiecewiseLinearPath(eta * np.arange(k + 1), np.concatenate([[0.0], np.cumsum(inc)]))


def gen_path(spec: PathFamilySpec, horizon: float):
    """One path, or a pair for RandomWalkPair/SquareWavePair."""
    if spec.family == "BrownianSample":
        return brownian_sample(spec.eta, horizon, spec.seed)
    if spec.family == "TakagiLike":
        return takagi_like(spec.theta, spec.depth, horizon)
    if spec.family == "RandomWalkPair":
        return random_walk_pair(spec, horizon)
    if spec.family == "SquareWavePair":
        return square_wave_pair(spec.mu, spec.eta, horizon)
    times, values = spec.samples
    return interpolate((times, values), horizon, spec.eta)


# ---------------------------------------------------------------------------
# unbounded-variation diagnostics


@dataclass
class VariationReport:
    theta: float
    bounds: tuple[float, float]
    ratios: dict  # eta -> array of ratios over the t-grid
    passed: bool

    def extremes(self) -> tuple[float, float]:
        allr = np.concatenate([np.asarray(r) for r in self.ratios.values()])
        return float(allr.min()), float(allr.max())


def variation_check(generator: Callable[[float], PiecewiseLinearPath], theta: float, eta_list,
                    direction=1.0, bounds: tuple[float, float] = (0.5, 2.0),
                    t_grid=None) -> VariationReport:
    """Ratios  int_0^t |dW^eta . xi| / (eta**-theta t)  for each eta and t, checked against ``bounds``."""
    xi = np.atleast_1d(np.asarray(direction, dtype=float))
    ratios = {}
    for eta in eta_list:
        path = generator(eta)
        ts = path.knot_times
        inc = np.diff(path.knot_values, axis=0) @ xi
        cum = np.concatenate([[0.0], np.cumsum(np.abs(inc))])
        grid = np.asarray(t_grid if t_grid is not None else ts[1:], dtype=float)
        grid = grid[(grid > 0) & (grid <= ts[-1] + 1e-12)]
        integral = np.interp(grid, ts, cum)
        ratios[float(eta)] = integral / (eta**-theta * grid)
    lo, hi = bounds
    passed = all(np.all((r >= lo) & (r <= hi)) for r in ratios.values())
    return VariationReport(theta, bounds, ratios, bool(passed))
