"""Optimization-based oracles.

* ``hopf_lax``: Lax-Oleinik semigroups of an x-independent convex Hamiltonian
  given by a sampled table.
* ``distance_function``: the action-minimizing distance L(x, y) of a convex
  Hamiltonian with a periodic metric factor.
* ``control_value`` / ``blowup_candidate``: the control formula for
  u_t + |Du| + f(x / eps) dW = 0 and the zig-zag trajectories that make it blow up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .grid_solver import GridFunction
from .hamiltonians import HamiltonianSpec, LegendreTable, PotentialSpec, discrete_convex
from .paths import PiecewiseLinearPath, rng_for

# ---------------------------------------------------------------------------
# Hopf-Lax


def _periodic_eval(u0: GridFunction, y: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolant of u0 at arbitrary points (affine part kept exactly)."""
    g = u0.grid
    pos = (y / g.dx) % g.n
    i = np.floor(pos).astype(np.int64) % g.n
    w = pos - np.floor(pos)
    v = u0.values
    return u0.slope * y + (1.0 - w) * v[i] + w * v[(i + 1) % g.n]


def _conjugate_pieces(conjugate: LegendreTable):
    """Breakpoints (slopes of G) and conjugate values there for a piecewise-linear G."""
    p, g = conjugate.source_grid, conjugate.source_values
    s = np.diff(g) / np.diff(p)
    return s, s * p[:-1] - g[:-1]


def hopf_lax(conjugate: LegendreTable, u0: GridFunction, t: float, sign: int,
             breakpoints: bool = True, with_flag: bool = False):
    """Lax-Oleinik semigroup of u_t + sign G(Du) = 0, G the table behind ``conjugate``.

    sign +1:  u(x) = min_y [u0(y) + t G*((x - y) / t)]
    sign -1:  u(x) = max_y [u0(y) - t G*((y - x) / t)]

    G is the piecewise-linear interpolant of the table, so G* is piecewise
    linear in z. The optimization runs over grid offsets ``y = x - k dx`` and,
    with ``breakpoints``, over the kinks of G* (u0 interpolated linearly there),
    which makes the formula exact for affine u0. Either way the update is a
    min (max) over a fixed family of positive averages of u0, hence monotone,
    constant-commuting and an L-infinity contraction.

    With ``with_flag`` the result is paired with a truncation flag, set when the
    optimum sits on the edge of the conjugate's finite domain.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if t < 0:
        raise ValueError("time must be nonnegative")
    if not discrete_convex(conjugate.source_values, 1e-9 * (1.0 + np.max(np.abs(conjugate.source_values)))):
        raise ValueError("Hopf-Lax needs a convex table")
    if t == 0:
        return (u0, False) if with_flag else u0
    grid = u0.grid
    slopes, kink_vals = _conjugate_pieces(conjugate)
    zlo, zhi = float(slopes[0]), float(slopes[-1])
    k_lo = int(math.ceil(t * zlo / grid.dx - 1e-9))
    k_hi = int(math.floor(t * zhi / grid.dx + 1e-9))
    z_grid = grid.dx * np.arange(k_lo, k_hi + 1) / t
    g_star, _ = _eval_conjugate(conjugate, z_grid)
    z = z_grid
    vals = g_star
    if breakpoints:
        z = np.concatenate([z_grid, slopes])
        vals = np.concatenate([g_star, kink_vals])
    x = grid.x
    edge = np.isclose(z, zlo) | np.isclose(z, zhi)
    out = np.empty(grid.n)
    flag = False
    chunk = max(1, 2_000_000 // max(z.size, 1))
    for start in range(0, grid.n, chunk):
        xs = x[start:start + chunk, None]
        if sign == 1:
            cand = _periodic_eval(u0, xs - t * z[None, :]) + t * vals[None, :]
            idx = np.argmin(cand, axis=1)
        else:
            cand = _periodic_eval(u0, xs + t * z[None, :]) - t * vals[None, :]
            idx = np.argmax(cand, axis=1)
        out[start:start + chunk] = cand[np.arange(cand.shape[0]), idx]
        flag = flag or bool(np.any(edge[idx]))
    result = GridFunction(grid, out - u0.slope * x, u0.slope)
    return (result, flag) if with_flag else result


def _eval_conjugate(conjugate: LegendreTable, z):
    from .hamiltonians import _conjugate

    return _conjugate(conjugate.source_grid, conjugate.source_values, np.asarray(z, dtype=float), 1e-12)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class TrajectoryGrid:
    times: np.ndarray
    positions: np.ndarray
    speed_cap: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        g = np.asarray(self.positions, dtype=float)
        if t.shape != g.shape or t.ndim != 1 or t.size < 2:
            raise ValueError("times and positions must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", g)
        if self.speed_cap is not None and self.max_speed() > self.speed_cap * (1.0 + 1e-9):
            raise ValueError(f"trajectory speed {self.max_speed():.6g} exceeds the cap {self.speed_cap}")

    def max_speed(self) -> float:
        return float(np.max(np.abs(np.diff(self.positions) / np.diff(self.times))))

    def __call__(self, s):
        return np.interp(s, self.times, self.positions)

    def to_csv(self, path) -> None:
        from .cli_io import write_csv

        write_csv(path, ["s", "gamma"], [self.times, self.positions])


# ---------------------------------------------------------------------------
# distance function


@dataclass
class DistanceResult:
    value: float
    trajectory: TrajectoryGrid
    straight_line: float
    c0: float
    C0: float
    exponent: float
    lower_ok: bool
    upper_ok: bool
    converged: bool

    @property
    def passed(self) -> bool:
        return self.lower_ok and self.upper_ok and self.converged


def metric_factor(spec: HamiltonianSpec, y):
    """a(y) = 1 + V(y), the weight multiplying the Lagrangian."""
    return 1.0 + spec.potential_weight * spec.potential.value(y)


def lagrangian_constants(spec: HamiltonianSpec) -> tuple[float, float, float]:
    """(c0, C0, q') with c0 |v|^q' <= H*(v, y) <= C0 |v|^q'."""
    q = spec.q
    if q <= 1.0:
        raise ValueError("the distance function needs q > 1")
    qp = q / (q - 1.0)
    kappa = (q - 1.0) * q ** (-qp)
    lo, hi = spec.potential.scaled(spec.potential_weight).extrema()
    if 1.0 + lo <= 0:
        raise ValueError("metric factor 1 + V must stay positive")
    return (1.0 + lo) * kappa, (1.0 + hi) * kappa, qp


def metric_hamiltonian(spec: HamiltonianSpec, p, y):
    """H(p, y) = a(y)**(1 - q) |p|**q, the Hamiltonian whose conjugate is a(y) K*(|v|)."""
    return metric_factor(spec, y) ** (1.0 - spec.q) * np.abs(p) ** spec.q


def _action_and_grad(interior, x, y, ds, eps, spec, kappa, qp):
    gam = np.concatenate([[x], interior, [y]])
    u = np.diff(gam) / ds
    mid = 0.5 * (gam[:-1] + gam[1:])
    a = metric_factor(spec, mid / eps)
    da = spec.potential_weight * spec.potential.derivative(mid / eps) / eps
    au = np.abs(u)
    k = kappa * au**qp
    dk = kappa * qp * au ** (qp - 1.0) * np.sign(u)
    value = float(np.sum(ds * a * k))
    g_right = ds * 0.5 * da * k + a * dk  # d term_j / d gamma_{j+1}
    g_left = ds * 0.5 * da * k - a * dk  # d term_j / d gamma_j
    grad = g_right[:-1] + g_left[1:]
    return value, grad


def distance_function(spec: HamiltonianSpec, x: float, y: float, n_steps: int = 256, restarts: int = 4,
                      eps: float = 1.0, seed: int = 0, max_iter: int = 2000) -> DistanceResult:
    """L(x, y) = inf over gamma(0)=x, gamma(1)=y of  int_0^1 a(gamma/eps) K*(|gamma'|) ds.

    K* is the conjugate of r**q, a = 1 + V the medium. The action is a
    midpoint sum over ``n_steps`` uniform steps, minimized by L-BFGS from the
    straight line and ``restarts`` randomly perturbed starts; the best value
    wins, ties going to the lowest start index.
    """
    c0, C0, qp = lagrangian_constants(spec)
    kappa = (spec.q - 1.0) * spec.q ** (-qp)
    s = np.linspace(0.0, 1.0, n_steps + 1)
    ds = 1.0 / n_steps
    line = x + s * (y - x)
    dist = abs(y - x)
    straight, _ = _action_and_grad(line[1:-1], x, y, ds, eps, spec, kappa, qp)
    if dist == 0.0:
        traj = TrajectoryGrid(s, line)
        return DistanceResult(0.0, traj, 0.0, c0, C0, qp, True, True, True)
    rng = rng_for(seed)
    starts = [line[1:-1]]
    bump = np.sin(np.pi * s[1:-1])
    for _ in range(restarts):
        amp = rng.uniform(-0.5, 0.5) * max(dist, eps)
        starts.append(line[1:-1] + amp * bump)
    best_val, best_path, converged = straight, line, False
    for start in starts:
        res = minimize(_action_and_grad, start, args=(x, y, ds, eps, spec, kappa, qp), jac=True,
                       method="L-BFGS-B", options={"maxiter": max_iter, "gtol": 1e-10, "ftol": 1e-15})
        if res.fun < best_val - 1e-15:
            best_val = float(res.fun)
            best_path = np.concatenate([[x], res.x, [y]])
        converged = converged or bool(res.success)
    scale = dist**qp
    lower_ok = best_val >= c0 * scale * (1.0 - 1e-9)
    upper_ok = best_val <= C0 * scale * (1.0 + 1e-9)
    traj = TrajectoryGrid(s, best_path)
    return DistanceResult(best_val, traj, straight, c0, C0, qp, lower_ok, upper_ok, converged and upper_ok)


def distance_residual(spec: HamiltonianSpec, x: float, y: float, h: float = 1e-3, **kw) -> float:
    """|H(D_x L, x) - (q' - 1) L| by a central difference in x."""
    lp = distance_function(spec, x + h, y, **kw).value
    lm = distance_function(spec, x - h, y, **kw).value
    l0 = distance_function(spec, x, y, **kw).value
    _, _, qp = lagrangian_constants(spec)
    grad = (lp - lm) / (2.0 * h)
    return float(abs(metric_hamiltonian(spec, grad, x) - (qp - 1.0) * l0))


def geodesic_energy_q2(spec: HamiltonianSpec, x: float, y: float, n: int = 20001, eps: float = 1.0) -> float:
    """Closed form for q = 2 in one dimension: L = (int_x^y sqrt(a))**2 / 4."""
    if spec.q != 2.0:
        raise ValueError("closed form holds for q = 2")
    z = np.linspace(x, y, n)
    root = np.sqrt(metric_factor(spec, z / eps))
    integral = np.trapezoid(root, z) if hasattr(np, "trapezoid") else np.trapz(root, z)
    return float(integral**2 / 4.0)


# ---------------------------------------------------------------------------
# control formula


def _as_profiles(f) -> list[PotentialSpec]:
    return list(f) if isinstance(f, (list, tuple)) else [f]


def control_value(f, path: PiecewiseLinearPath, eps: float, trajectory: TrajectoryGrid,
                  substeps: int = 8) -> float:
    """int_0^t f(gamma_s / eps) . W'(s) ds on [trajectory.times[0], trajectory.times[-1]].

    The integration grid merges path knots and trajectory knots, each piece
    subdivided ``substeps`` times; f is sampled at piece midpoints and W' is
    constant on each piece. Trajectories faster than 1 are rejected.
    """
    if trajectory.max_speed() > 1.0 + 1e-9:
        raise ValueError(f"trajectory speed {trajectory.max_speed():.6g} exceeds 1")
    profiles = _as_profiles(f)
    if len(profiles) != path.dimension:
        raise ValueError("forcing and path dimensions differ")
    t0, t1 = trajectory.times[0], trajectory.times[-1]
    if t1 > path.horizon + 1e-12:
        raise ValueError("trajectory runs past the path horizon")
    kt = path.knot_times
    knots = np.union1d(trajectory.times, kt[(kt > t0) & (kt < t1)])
    frac = np.arange(substeps) / substeps
    fine = np.concatenate([knots[:-1, None] + frac[None, :] * np.diff(knots)[:, None]], axis=0).ravel()
    fine = np.append(fine, knots[-1])
    mids = 0.5 * (fine[:-1] + fine[1:])
    inc = np.asarray(path(fine[1:])) - np.asarray(path(fine[:-1]))
    if inc.ndim == 1:
        inc = inc[:, None]
    gam = trajectory(mids) / eps
    fvals = np.stack([p.value(gam) for p in profiles], axis=1)
    return float(np.sum(fvals * inc))


@dataclass
class BlowupCandidate:
    trajectory: TrajectoryGrid
    value: float
    y0: float
    direction: float
    delta: float
    segments: int
    boundary_term: float
    max_nu: float


def blowup_candidate(f: PotentialSpec, path: PiecewiseLinearPath, eps: float, eta: float, t: float,
                     x: float = 0.0, nu: float = 0.1, sigma: float | None = None,
                     substeps: int = 8) -> BlowupCandidate:
    """Zig-zag trajectory around the point of steepest forcing.

    gamma / eps = y0 +- delta alpha((s - k eta) / eta) p on each full step of
    the path, the sign following sign(f'(y0) W'), then a straight run to x.
    ``delta = nu eps**((sigma - 1)+)``; ``nu`` beyond the speed cap is rejected.
    """
    if path.dimension != 1:
        raise ValueError("blow-up candidates use a scalar forcing and path")
    if sigma is None:
        sigma = math.log(eta) / math.log(eps)
    pos = max(sigma - 1.0, 0.0)
    max_nu = eta / (2.0 * eps * eps**pos)
    if nu > max_nu * (1.0 + 1e-12):
        raise ValueError(f"nu = {nu:.6g} breaks the speed cap; the largest admissible value is {max_nu:.6g}")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    yy = np.arange(4096) / 4096
    d = f.derivative(yy)
    j = int(np.argmax(np.abs(d)))
    y0 = float(yy[j])
    if abs(d[j]) <= 1e-12:
        raise ValueError("forcing is numerically constant")
    p = float(np.sign(d[j]))
    xi = float(d[j]) * p
    delta = nu * eps**pos
    r_rel = (abs(x) + eps * abs(y0)) / t
    n_seg = int(math.floor((t - r_rel * t) / eta + 1e-9))
    while n_seg > 0 and abs(x - eps * y0) > (t - n_seg * eta) * (1.0 + 1e-12):
        n_seg -= 1
    times = [0.0]
    pos_list = [eps * y0]
    for k in range(n_seg):
        a, b = k * eta, (k + 1) * eta
        slope_sign = np.sign(xi * (float(path(b)) - float(path(a))))
        peak = eps * (y0 + slope_sign * delta * p)
        times += [a + 0.5 * eta, b]
        pos_list += [peak, eps * y0]
    if t - n_seg * eta > 1e-15:
        times.append(t)
        pos_list.append(x)
    else:
        pos_list[-1] = x
    traj = TrajectoryGrid(np.array(times), np.array(pos_list), speed_cap=1.0)
    value = control_value(f, path, eps, traj, substeps)
    boundary = float(f.value(np.array(y0))) * (float(path(t)) - float(path(0.0)))
    return BlowupCandidate(traj, value, y0, p, delta, n_seg, boundary, max_nu)
