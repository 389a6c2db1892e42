"""Explicit monotone schemes for u_t +- H(Du, x / eps) = 0 on a periodic 1-D grid.

A grid function is stored as ``slope * x + values`` with periodic ``values``,
so affine data such as ``p x`` evolve exactly without a periodic seam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .hamiltonians import KIND_TABLE, HamiltonianSpec

FLUXES = ("LaxFriedrichs", "EngquistOsherConvex")
_FLUX_CODE = {"LaxFriedrichs": 0, "EngquistOsherConvex": 1}

STATUS_OK = 0
STATUS_CEILING = 1
STATUS_BUDGET = 2


class CFLViolation(ValueError):
    def __init__(self, dt: float, admissible: float):
        super().__init__(f"time step {dt:.6g} exceeds the admissible step {admissible:.6g}")
        self.dt = dt
        self.admissible = admissible


class SolverAbort(RuntimeError):
    def __init__(self, message: str, status: int, time_reached: float = float("nan")):
        super().__init__(message)
        self.status = status
        self.time_reached = time_reached


@dataclass(frozen=True)
class Grid1D:
    length: float
    n: int

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("grid needs at least 8 cells")
        if not self.length > 0:
            raise ValueError("domain length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.n)

    def circle_distance(self, a, b):
        d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % self.length
        return np.minimum(d, self.length - d)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """u(x_j) = slope * x_j + values[j], with ``values`` periodic on the grid."""

    grid: Grid1D
    values: np.ndarray
    slope: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or not math.isfinite(self.slope):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid1D, func, slope: float = 0.0) -> GridFunction:
        """Sample ``func`` at the nodes; ``slope`` is removed so the remainder is stored periodic."""
        x = grid.x
        return cls(grid, np.asarray(func(x), dtype=float) - slope * x, slope)

    @classmethod
    def affine(cls, grid: Grid1D, slope: float, offset: float = 0.0) -> GridFunction:
        return cls(grid, np.full(grid.n, float(offset)), float(slope))

    def full(self) -> np.ndarray:
        return self.slope * self.grid.x + self.values

    def gradients(self) -> np.ndarray:
        """Forward differences (u_{j+1} - u_j) / dx, periodic."""
        return self.slope + (np.roll(self.values, -1) - self.values) / self.grid.dx

    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.gradients())))

    def with_values(self, values, slope: float | None = None) -> GridFunction:
        return GridFunction(self.grid, values, self.slope if slope is None else slope)

    def __add__(self, c: float) -> GridFunction:
        return self.with_values(self.values + c)

    def __sub__(self, other) -> np.ndarray:
        """Nodewise difference of full values."""
        if isinstance(other, GridFunction):
            return self.full() - other.full()
        return self.full() - other

    def sup_distance(self, other: GridFunction) -> float:
        return float(np.max(np.abs(self - other)))

    def to_csv(self, path) -> None:
        from .cli_io import write_csv

        write_csv(path, ["x", "u"], [self.grid.x, self.full()])


@dataclass(frozen=True)
class SchemeConfig:
    flux: str = "LaxFriedrichs"
    cfl: float = 0.9
    gradient_ceiling: float = 1e8
    alpha: float = 0.0  # initial dissipation; raised as needed, never lowered
    max_steps: int = 50_000_000
    split_medium: bool = False  # Strang: half medium shift, kinetic step, half shift

    def __post_init__(self):
        if self.flux not in FLUXES:
            raise ValueError(f"unknown numerical flux {self.flux!r}")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("CFL number must lie in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


def default_scheme(spec: HamiltonianSpec, **kw) -> SchemeConfig:
    """Engquist-Osher for monotone kinetic profiles, Lax-Friedrichs otherwise."""
    flux = "EngquistOsherConvex" if spec.kinetic_monotone else "LaxFriedrichs"
    return SchemeConfig(flux=flux, **kw)


def gradient_envelope(c0: float, horizon: float, eta: float, lip0: float) -> float:
    """exp(c0 T / eta) (L + 1), the ceiling used to abort runaway gradients."""
    return math.exp(min(c0 * horizon / eta, 700.0)) * (lip0 + 1.0)


# ---------------------------------------------------------------------------
# compiled stencils


@njit(cache=True)
def _kin(r, kind, q, xs, ys):
    if kind == 0:
        return r**q
    if kind == 1:
        return r
    last = xs.size - 1
    if r >= xs[last]:
        return ys[last] + (r - xs[last])
    for i in range(last):
        if r <= xs[i + 1]:
            return ys[i] + (ys[i + 1] - ys[i]) * (r - xs[i]) / (xs[i + 1] - xs[i])
    return ys[last]


@njit(cache=True)
def _kin_slope(radius, kind, q, table_slope):
    if kind == 0:
        if q > 1.0:
            return q * radius ** (q - 1.0)
        return 1.0
    if kind == 1:
        return 1.0
    return table_slope


@njit(cache=True)
def _medium_lip(med, dx):
    n = med.size
    best = 0.0
    for j in range(n):
        jm = j - 1 if j > 0 else n - 1
        d = abs(med[j] - med[jm]) / dx
        if d > best:
            best = d
    return best


@njit(cache=True)
def _capped_dt(dt, radius, lmed, kw, kind, q, table_slope, flux, dx, cfl):
    # the medium can raise gradients by dt * lmed within one step; halve dt until
    # the CFL condition also holds at the predicted radius
    if lmed == 0.0 or kw == 0.0:
        return dt
    for _ in range(200):
        need = abs(kw) * _kin_slope(radius + dt * lmed, kind, q, table_slope)
        if flux == 1:
            need *= 2.0
        if need * dt <= cfl * dx:
            break
        dt *= 0.5
    return dt


@njit(cache=True)
def _evolve_row(v, slope, dx, med, kw, kind, q, xs, ys, table_slope, flux,
                t_total, cfl, alpha, ceiling, max_steps, discount=0.0):
    n = v.size
    pm = np.empty(n)
    pp = np.empty(n)
    kin = np.empty(n)
    lmed = _medium_lip(med, dx)
    t = 0.0
    steps = 0
    status = 0
    while t < t_total:
        if steps >= max_steps:
            status = 2
            break
        radius = 0.0
        for j in range(n):
            jm = j - 1 if j > 0 else n - 1
            pm[j] = slope + (v[j] - v[jm]) / dx
            a = abs(pm[j])
            if a > radius:
                radius = a
        for j in range(n):
            jp = j + 1 if j < n - 1 else 0
            pp[j] = pm[jp]
        if radius > ceiling:
            status = 1
            break
        need = abs(kw) * _kin_slope(radius, kind, q, table_slope)
        if flux == 1:
            need *= 2.0
        if need > alpha:
            alpha = need
        remaining = t_total - t
        if alpha > 0.0 or discount > 0.0:
            dt = cfl / (alpha / dx + discount)
        else:
            dt = remaining
        dt = _capped_dt(min(dt, remaining), radius, lmed, kw, kind, q, table_slope, flux, dx, cfl)
        if dt >= remaining * (1.0 - 1e-13):
            dt = remaining
        k0 = kw * _kin(0.0, kind, q, xs, ys)
        for j in range(n):
            a = pm[j]
            b = pp[j]
            if flux == 0:
                kin[j] = kw * _kin(abs(0.5 * (a + b)), kind, q, xs, ys) - 0.5 * alpha * (b - a)
            elif kw >= 0.0:
                kin[j] = kw * (_kin(max(a, 0.0), kind, q, xs, ys) + _kin(max(-b, 0.0), kind, q, xs, ys)) - k0
            else:
                kin[j] = kw * (_kin(max(-a, 0.0), kind, q, xs, ys) + _kin(max(b, 0.0), kind, q, xs, ys)) - k0
        for j in range(n):
            v[j] = v[j] - dt * (kin[j] + med[j] + discount * v[j])
        if dt == remaining:
            t = t_total
        else:
            t += dt
        steps += 1
    return alpha, steps, status, t


@njit(cache=True)
def _evolve_row_strang(v, slope, dx, med, kw, kind, q, xs, ys, table_slope, flux,
                       t_total, cfl, alpha, ceiling, max_steps):
    # the medium term is applied as exact half shifts around each kinetic step
    n = v.size
    zero = np.zeros(n)
    lmed = _medium_lip(med, dx)
    t = 0.0
    steps = 0
    status = 0
    while t < t_total:
        if steps >= max_steps:
            status = 2
            break
        radius = 0.0
        for j in range(n):
            jm = j - 1 if j > 0 else n - 1
            a = abs(slope + (v[j] - v[jm]) / dx)
            if a > radius:
                radius = a
        need = abs(kw) * _kin_slope(radius, kind, q, table_slope)
        if flux == 1:
            need *= 2.0
        if need > alpha:
            alpha = need
        remaining = t_total - t
        dt = cfl * dx / alpha if alpha > 0.0 else remaining
        dt = _capped_dt(min(dt, remaining), radius, lmed, kw, kind, q, table_slope, flux, dx, cfl)
        if dt >= remaining * (1.0 - 1e-13):
            dt = remaining
        for j in range(n):
            v[j] -= 0.5 * dt * med[j]
        alpha, _, st, _ = _evolve_row(v, slope, dx, zero, kw, kind, q, xs, ys, table_slope, flux,
                                      dt, 1.0, max(alpha, 1e-300), ceiling, 1)
        for j in range(n):
            v[j] -= 0.5 * dt * med[j]
        if st != 0:
            status = st
            break
        if dt == remaining:
            t = t_total
        else:
            t += dt
        steps += 1
    return alpha, steps, status, t


@njit(cache=True)
def _evolve_rows(vals, slope, dx, base_med, med_w, kw_arr, kind, q, xs, ys, table_slope, flux,
                 strang, t_total, cfl, ceiling, max_steps):
    rows = vals.shape[0]
    statuses = np.zeros(rows, dtype=np.int64)
    med = np.empty(vals.shape[1])
    for i in range(rows):
        for j in range(vals.shape[1]):
            med[j] = med_w[i] * base_med[j]
        v = vals[i]
        if strang:
            _, _, st, _ = _evolve_row_strang(v, slope, dx, med, kw_arr[i], kind, q, xs, ys, table_slope,
                                             flux, t_total, cfl, 0.0, ceiling, max_steps)
        else:
            _, _, st, _ = _evolve_row(v, slope, dx, med, kw_arr[i], kind, q, xs, ys, table_slope, flux,
                                      t_total, cfl, 0.0, ceiling, max_steps)
        statuses[i] = st
    return statuses


# ---------------------------------------------------------------------------
# Python entry points


@dataclass
class SolveStats:
    steps: int = 0
    alpha: float = 0.0
    status: int = STATUS_OK
    time_reached: float = 0.0
    lipschitz: list = field(default_factory=list)


def _kinetic_args(spec: HamiltonianSpec):
    kind, q, xs, ys = spec.kinetic_code()
    xs = np.ascontiguousarray(xs, dtype=float)
    ys = np.ascontiguousarray(ys, dtype=float)
    table_slope = 1.0
    if kind == KIND_TABLE:
        table_slope = float(max(1.0, np.max(np.abs(np.diff(ys) / np.diff(xs)))))
    return kind, float(q), xs, ys, table_slope


def _check_flux(spec: HamiltonianSpec, config: SchemeConfig):
    if config.flux == "EngquistOsherConvex" and not spec.kinetic_monotone:
        raise ValueError("Engquist-Osher flux needs a kinetic profile nondecreasing in |p|")


def signed_spec(spec: HamiltonianSpec, sign: int) -> HamiltonianSpec:
    return spec.signed(int(sign))


def admissible_dt(spec: HamiltonianSpec, sign: int, u: GridFunction, config: SchemeConfig) -> float:
    s = signed_spec(spec, sign)
    radius = float(np.max(np.abs(u.gradients())))
    need = s.dp_bound(radius) * (2.0 if config.flux == "EngquistOsherConvex" else 1.0)
    alpha = max(need, config.alpha)
    return math.inf if alpha == 0.0 else config.cfl * u.grid.dx / alpha


def _evolve(spec, eps, sign, u0: GridFunction, t, config: SchemeConfig, alpha0=None, discount: float = 0.0):
    if t < 0:
        raise ValueError("evolution time must be nonnegative")
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_flux(spec, config)
    s = signed_spec(spec, sign)
    kind, q, xs, ys, table_slope = _kinetic_args(s)
    med = np.ascontiguousarray(s.medium(u0.grid.x / eps), dtype=float)
    v = np.array(u0.values, dtype=float)
    alpha = config.alpha if alpha0 is None else max(alpha0, config.alpha)
    stats = SolveStats()
    if t == 0:
        stats.alpha = alpha
        return u0, stats
    code = _FLUX_CODE[config.flux]
    if config.split_medium:
        alpha, steps, status, reached = _evolve_row_strang(
            v, float(u0.slope), u0.grid.dx, med, float(s.kinetic_weight), kind, q, xs, ys, table_slope,
            code, float(t), config.cfl, float(alpha), config.gradient_ceiling, config.max_steps)
    else:
        alpha, steps, status, reached = _evolve_row(
            v, float(u0.slope), u0.grid.dx, med, float(s.kinetic_weight), kind, q, xs, ys, table_slope,
            code, float(t), config.cfl, float(alpha), config.gradient_ceiling, config.max_steps,
            float(discount))
    stats.steps, stats.alpha, stats.status, stats.time_reached = int(steps), float(alpha), int(status), float(reached)
    if status == STATUS_CEILING:
        raise SolverAbort(f"gradient ceiling {config.gradient_ceiling:.3g} exceeded at t = {reached:.6g}",
                          status, reached)
    if status == STATUS_BUDGET:
        raise SolverAbort(f"step budget {config.max_steps} exhausted at t = {reached:.6g}", status, reached)
    return GridFunction(u0.grid, v, u0.slope), stats


def step(spec: HamiltonianSpec, eps: float, sign: int, u: GridFunction, dt: float,
         config: SchemeConfig | None = None) -> GridFunction:
    """One explicit update of u_t + sign H(Du, x / eps) = 0; rejects steps beyond the CFL limit."""
    config = SchemeConfig() if config is None else config
    if dt <= 0:
        raise ValueError("time step must be positive")
    adm = admissible_dt(spec, sign, u, config)
    if dt > adm * (1.0 + 1e-12):
        raise CFLViolation(dt, adm)
    out, stats = _evolve(spec, eps, sign, u, dt, config)
    return out


def evolve(spec: HamiltonianSpec, eps: float, sign: int, u0: GridFunction, t: float,
           config: SchemeConfig | None = None) -> GridFunction:
    """S^eps_sign(t) u0 by explicit steps, the last one shortened to land on t."""
    config = SchemeConfig() if config is None else config
    out, _ = _evolve(spec, eps, sign, u0, t, config)
    return out


def evolve_with_stats(spec, eps, sign, u0, t, config=None, alpha0=None, discount: float = 0.0):
    """``evolve`` returning (state, SolveStats); ``discount`` adds a term gamma u to the equation."""
    config = SchemeConfig() if config is None else config
    if discount and config.split_medium:
        raise ValueError("discounting is not combined with the split medium step")
    return _evolve(spec, eps, sign, u0, t, config, alpha0, discount)


def evolve_checkpoints(spec, eps, sign, u0: GridFunction, times, config=None) -> list[GridFunction]:
    """States at each of the increasing ``times``."""
    config = SchemeConfig() if config is None else config
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("checkpoint times must be nonnegative and increasing")
    out = []
    u, t_prev, alpha = u0, 0.0, config.alpha
    for t in times:
        u, stats = _evolve(spec, eps, sign, u, t - t_prev, config, alpha)
        alpha = stats.alpha
        out.append(u)
        t_prev = t
    return out


def evolve_rows(spec: HamiltonianSpec, eps: float, values: np.ndarray, slope: float, grid: Grid1D,
                kinetic_weights, medium_weights, medium, t: float, config: SchemeConfig | None = None):
    """Advance many independent rows in place, row i solving

        u_t + kw_i K(|Du|) + mw_i m(x / eps) = 0,

    with ``medium`` the callable m. Returns per-row status codes.
    """
    config = SchemeConfig() if config is None else config
    _check_flux(spec, config)
    kind, q, xs, ys, table_slope = _kinetic_args(spec)
    base = np.ascontiguousarray(medium(grid.x / eps), dtype=float)
    kw = np.ascontiguousarray(kinetic_weights, dtype=float)
    mw = np.ascontiguousarray(medium_weights, dtype=float)
    if values.shape != (kw.size, grid.n) or mw.shape != kw.shape:
        raise ValueError("row weights and values disagree in shape")
    return _evolve_rows(values, float(slope), grid.dx, base, mw, kw, kind, q, xs, ys, table_slope,
                        _FLUX_CODE[config.flux], bool(config.split_medium), float(t), config.cfl,
                        config.gradient_ceiling, config.max_steps)


# ---------------------------------------------------------------------------
# finite speed of propagation


@dataclass
class FiniteSpeedReport:
    speed: float
    radius: float
    time: float
    inner_radius: float
    lhs: float
    rhs: float
    slack: float
    passed: bool


def finite_speed_check(spec: HamiltonianSpec, eps: float, sign: int, u1: GridFunction, u2: GridFunction,
                       radius: float, t: float, center: float = 0.0,
                       config: SchemeConfig | None = None, samples: int = 8) -> FiniteSpeedReport:
    """Compare max over B_{R - L t} of (U1 - U2)(t) with max over B_R of (u1 - u2).

    L is the largest |D_p H| over the gradients met along both evolutions
    (sampled at ``samples`` intermediate times); balls are taken on the
    periodic circle. The slack is 2 dx times the Lipschitz bound.
    """
    config = SchemeConfig() if config is None else config
    grid = u1.grid
    times = t * np.arange(1, samples + 1) / samples
    path1 = evolve_checkpoints(spec, eps, sign, u1, times, config)
    path2 = evolve_checkpoints(spec, eps, sign, u2, times, config)
    lip = max(s.lipschitz() for s in [u1, u2] + path1 + path2)
    speed = spec.dp_bound(lip)
    inner = radius - speed * t
    if inner < 0:
        raise ValueError("t exceeds R / L; the inner ball is empty")
    w1, w2 = path1[-1], path2[-1]
    d = grid.circle_distance(grid.x, center)
    lhs = float(np.max((w1 - w2)[d <= inner]))
    rhs = float(np.max((u1 - u2)[d <= radius]))
    slack = 2.0 * grid.dx * max(lip, 1.0)
    return FiniteSpeedReport(speed, radius, t, inner, lhs, rhs, slack, lhs <= rhs + slack)


def propagation_front(diff: np.ndarray, grid: Grid1D, center: float, tol: float = 1e-10) -> float:
    """Largest circle distance from ``center`` at which |diff| exceeds ``tol``."""
    d = grid.circle_distance(grid.x, center)
    mask = np.abs(diff) > tol
    return float(d[mask].max()) if mask.any() else 0.0
