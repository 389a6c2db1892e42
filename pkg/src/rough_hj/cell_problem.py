"""Effective Hamiltonians of periodic media and the consistency condition.

H-bar(p) is the constant for which H(p + v'(y), y) = H-bar(p) has a periodic
solution v. Two PDE routes compute it on the unit cell:

LargeTime
    w_t + H(p + w_y, y) = 0 from w = 0; -w(T) / T -> H-bar(p). With
    ``richardson`` the estimate is the increment quotient
    -(w(T) - w(T/2)) / (T/2), which removes the O(1/T) corrector bias.
VanishingDiscount
    gamma v + H(p + v', y) = 0 marched to steady state; -gamma v -> H-bar(p)
    as gamma -> 0 (Richardson: 2 lambda(gamma/2) - lambda(gamma)).

The effective Hamiltonian of -H is always obtained by rerunning on the
negated spec.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .grid_solver import Grid1D, GridFunction, SchemeConfig, default_scheme, evolve_with_stats
from .hamiltonians import (
    HamiltonianSpec,
    LegendreTable,
    PotentialSpec,
    combine,
    discrete_convex,
    eikonal_plus_forcing,
    legendre_transform,
)
from .paths import rng_for

METHODS = ("LargeTime", "VanishingDiscount")


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class CellConfig:
    method: str = "LargeTime"
    gamma: float = 0.25
    T: float = 4.0
    n: int = 256
    tol: float = 1e-7
    richardson: bool = True
    max_doublings: int = 8
    flux: str | None = None  # None: Engquist-Osher for monotone kinetics, Lax-Friedrichs otherwise
    cfl: float = 0.9
    strict: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown cell method {self.method!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.T < 1.0:
            raise ValueError("horizon T must be >= 1")
        if self.n < 32:
            raise ValueError("cell grid needs n >= 32")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")

    def scheme(self, spec: HamiltonianSpec) -> SchemeConfig:
        if self.flux is None:
            return default_scheme(spec, cfl=self.cfl)
        return SchemeConfig(flux=self.flux, cfl=self.cfl)


@dataclass
class CellResult:
    value: float
    residual: float
    converged: bool
    horizon: float
    history: list = field(default_factory=list)


def _large_time(spec: HamiltonianSpec, p: float, config: CellConfig) -> CellResult:
    grid = Grid1D(1.0, config.n)
    scheme = config.scheme(spec)
    w = GridFunction.affine(grid, p)
    w, stats = evolve_with_stats(spec, 1.0, 1, w, config.T / 2.0, scheme)
    alpha = stats.alpha
    t_prev = config.T / 2.0
    t_next = config.T
    history = []
    prev_est = None
    result = None
    for _ in range(config.max_doublings + 1):
        w_new, stats = evolve_with_stats(spec, 1.0, 1, w, t_next - t_prev, scheme, alpha)
        alpha = stats.alpha
        if config.richardson:
            rate = -(w_new.values - w.values) / (t_next - t_prev)
        else:
            rate = -w_new.values / t_next
        est = float(np.mean(rate))
        osc = float(np.max(rate) - np.min(rate))
        cauchy = abs(est - prev_est) if prev_est is not None else math.inf
        residual = max(osc, cauchy) if config.richardson else max(cauchy, osc)
        history.append((t_next, est, residual))
        result = CellResult(est, residual, residual < config.tol, t_next, history)
        if result.converged:
            return result
        prev_est = est
        w, t_prev, t_next = w_new, t_next, 2.0 * t_next
    return result


def _vanishing_discount(spec: HamiltonianSpec, p: float, config: CellConfig) -> CellResult:
    grid = Grid1D(1.0, config.n)
    scheme = config.scheme(spec)
    gamma = config.gamma
    v = GridFunction.affine(grid, p)
    history = []
    prev = None
    result = None
    for _ in range(config.max_doublings + 1):
        # march gamma v + H(p + v') = 0 until the contraction e^{-gamma t} is below tol
        horizon = math.log(1e3 / config.tol) / gamma
        v, _ = evolve_with_stats(spec, 1.0, 1, v, horizon, scheme, discount=gamma)
        lam = -gamma * v.values
        est = float(np.mean(lam))
        osc = float(np.max(lam) - np.min(lam))
        if prev is not None:
            value = 2.0 * est - prev if config.richardson else est
            cauchy = abs(est - prev)
            history.append((gamma, value, cauchy))
            result = CellResult(value, cauchy, cauchy < config.tol, horizon, history)
            if result.converged:
                return result
        else:
            history.append((gamma, est, osc))
            result = CellResult(est, max(osc, math.inf), False, horizon, history)
        prev = est
        gamma *= 0.5
    return result


def effective_result(spec: HamiltonianSpec, p: float, config: CellConfig | None = None) -> CellResult:
    config = CellConfig() if config is None else config
    if config.method == "LargeTime":
        res = _large_time(spec, float(p), config)
    else:
        res = _vanishing_discount(spec, float(p), config)
    if config.strict and not res.converged:
        raise NonConvergence(f"cell problem at p = {p} did not converge: residual {res.residual:.3g}")
    return res


def effective_value(spec: HamiltonianSpec, p: float, config: CellConfig | None = None) -> tuple[float, float]:
    """(lambda, residual) for the cell problem at slope p."""
    res = effective_result(spec, p, config)
    return res.value, res.residual


# ---------------------------------------------------------------------------
# tables


@dataclass(eq=False)
class EffectiveTable:
    p_grid: np.ndarray
    hbar: np.ndarray
    neg_hbar: np.ndarray
    residual: np.ndarray
    flagged: np.ndarray
    convex: bool
    spec_convex: bool
    config: dict = field(default_factory=dict)
    _conjugate: LegendreTable | None = field(default=None, repr=False)

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.neg_hbar + self.hbar)

    def __call__(self, p):
        """Piecewise-linear interpolant of H-bar."""
        return np.interp(p, self.p_grid, self.hbar)

    def conjugate(self) -> LegendreTable:
        """Conjugate of the interpolated H-bar, computed once per table."""
        if self._conjugate is None:
            self._conjugate = legendre_transform(self.p_grid, self.hbar)
        return self._conjugate

    def to_csv(self, path) -> None:
        from .cli_io import write_csv

        write_csv(path, ["p", "hbar", "neg_hbar", "gap", "residual"],
                  [self.p_grid, self.hbar, self.neg_hbar, self.gap, self.residual])

    @classmethod
    def exact(cls, p_grid, hbar_values, convex: bool | None = None) -> EffectiveTable:
        """Table from known values; -H is taken as consistent with zero residual."""
        p = np.asarray(p_grid, dtype=float)
        h = np.asarray(hbar_values, dtype=float)
        conv = discrete_convex(h) if convex is None else convex
        zeros = np.zeros_like(p)
        return cls(p, h, -h, zeros, zeros.astype(bool), conv, conv)


def _job(args):
    spec, p, config = args
    res = effective_result(spec, p, config)
    return res.value, res.residual, res.converged


def effective_table(spec: HamiltonianSpec, p_grid, config: CellConfig | None = None,
                    workers: int = 1) -> EffectiveTable:
    """H-bar and (-H)-bar on ``p_grid``; points whose residual misses the tolerance are flagged."""
    config = CellConfig() if config is None else config
    loose = CellConfig(**{**asdict(config), "strict": False})
    p_grid = np.asarray(p_grid, dtype=float)
    jobs = [(spec, p, loose) for p in p_grid] + [(spec.negated(), p, loose) for p in p_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_job, jobs))
    else:
        out = [_job(j) for j in jobs]
    m = p_grid.size
    hbar = np.array([o[0] for o in out[:m]])
    neg = np.array([o[0] for o in out[m:]])
    res = np.maximum([o[1] for o in out[:m]], [o[1] for o in out[m:]])
    flagged = ~(np.array([o[2] for o in out[:m]]) & np.array([o[2] for o in out[m:]]))
    scale = 1.0 + np.max(np.abs(hbar))
    convex = discrete_convex(hbar, tol=max(1e-9, 4.0 * float(np.max(res))) * scale)
    cfg = asdict(config)
    return EffectiveTable(p_grid, hbar, neg, res, flagged, convex, spec.is_convex(), cfg)


@dataclass
class ConsistencyReport:
    gaps: np.ndarray
    thresholds: np.ndarray
    max_gap: float
    worst_p: float
    passed: bool
    exceeds: bool  # some gap beyond its threshold: the condition fails detectably
    factor: float

    def summary(self) -> dict:
        return {"max_gap": self.max_gap, "worst_p": self.worst_p, "passed": self.passed,
                "exceeds": self.exceeds, "factor": self.factor}


def consistency_check(table: EffectiveTable, factor: float = 3.0, atol: float = 1e-9) -> ConsistencyReport:
    """gap(p) = |(-H)-bar(p) + H-bar(p)| against ``factor`` times the solver residual (plus ``atol``)."""
    gaps = table.gap
    thr = factor * table.residual + atol
    i = int(np.argmax(gaps - thr))
    j = int(np.argmax(gaps))
    passed = bool(np.all(gaps <= thr))
    return ConsistencyReport(gaps, thr, float(gaps[j]), float(table.p_grid[i] if not passed else table.p_grid[j]),
                             passed, not passed, factor)


# ---------------------------------------------------------------------------
# closed forms


def hbar_quadrature(q: float, potential: PotentialSpec, p: float, n: int = 1 << 15) -> float:
    """H-bar for H = |p|**q + V(y) in one dimension.

    H-bar(p) = max V when |p| <= int (max V - V)**(1/q); otherwise the
    unique lambda > max V with |p| = int (lambda - V)**(1/q).
    """
    y = (np.arange(n) + 0.5) / n
    v = potential.value(y)
    vmax = float(np.max(np.concatenate([v, potential.value(np.arange(n) / n)])))

    def width(lam):
        return float(np.mean(np.maximum(lam - v, 0.0) ** (1.0 / q)))

    a = abs(p)
    if a <= width(vmax):
        return vmax
    hi = vmax + 1.0
    while width(hi) < a:
        hi = vmax + 2.0 * (hi - vmax)
    return float(brentq(lambda lam: width(lam) - a, vmax, hi, xtol=1e-14, rtol=1e-14))


def littlecell_constant(xi1: float, xi2: float) -> float:
    """sgn(xi1) |xi2|: the effective constant of xi1 H(p, y) + xi2 f(y) with H >= 0, H(0, .) = 0, max f = -min f = 1."""
    if xi1 == 0:
        raise ValueError("xi1 must be nonzero")
    return math.copysign(abs(xi2), xi1)


# ---------------------------------------------------------------------------
# oscillation lower bound


@dataclass
class OscfReport:
    b: np.ndarray
    xi_star: np.ndarray
    mu: float
    y_pair: tuple[float, float]
    checks: list
    passed: bool


def oscf_lower_bound(f, samples=None, n_random: int = 0, seed: int = 0, p: float = 0.0,
                     config: CellConfig | None = None) -> OscfReport:
    """(b, xi*, mu) from the pair y1, y2 maximizing |f(y1) - f(y2)|, then checks

        H-bar(p, xi) >= b . xi + mu |xi . xi*|

    for the cell Hamiltonian |p| + f(y) . xi at the given (or ``n_random``
    random unit) directions xi.
    """
    profiles = list(f) if isinstance(f, (list, tuple)) else [f]
    config = CellConfig(n=128, tol=1e-6) if config is None else config
    # the pair is searched on the cell nodes, where the discrete bound is exact
    y = np.arange(config.n) / config.n
    vals = np.stack([pr.value(y) for pr in profiles], axis=1)
    diff = np.linalg.norm(vals[:, None, :] - vals[None, :, :], axis=2)
    i, j = np.unravel_index(int(np.argmax(diff)), diff.shape)
    if diff[i, j] <= 1e-12:
        raise ValueError("forcing is numerically constant")
    b = 0.5 * (vals[i] + vals[j])
    xi_star = (vals[i] - vals[j]) / diff[i, j]
    mu = 0.5 * float(diff[i, j])
    dirs = [] if samples is None else [np.atleast_1d(np.asarray(s, dtype=float)) for s in samples]
    rng = rng_for(seed)
    for _ in range(n_random):
        d = rng.standard_normal(len(profiles))
        dirs.append(d / np.linalg.norm(d))
    checks = []
    for xi in dirs:
        spec = eikonal_plus_forcing(combine(xi, profiles), xi1=1.0, xi2=1.0)
        lam, res = effective_value(spec, p, config)
        bound = float(b @ xi + mu * abs(xi @ xi_star))
        checks.append((xi.tolist(), lam, bound, lam >= bound - max(res, config.tol) - 1e-9))
    passed = all(c[3] for c in checks)
    return OscfReport(b, xi_star, mu, (float(y[i]), float(y[j])), checks, passed)
