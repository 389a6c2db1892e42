"""The eight acceptance criteria, each at its stated size and tolerance."""

import time

import numpy as np

from rough_hj.cell_problem import CellConfig, consistency_check, effective_table, effective_value, hbar_quadrature
from rough_hj.experiments import blowup_experiment, donsker_experiment, rate_sweep, stability_experiment
from rough_hj.grid_solver import Grid1D, GridFunction, SchemeConfig, default_scheme, evolve, finite_speed_check
from rough_hj.hamiltonians import cosine, eikonal, eikonal_plus_forcing, legendre_transform, make_lty, \
    power_plus_potential
from rough_hj.paths import PiecewiseLinearPath, interpolate, line
from rough_hj.variational import hopf_lax

QUAD = power_plus_potential(2.0, cosine(1.0))


def test_effective_constant_exactness(record_criterion):
    worst, slowest = 0.0, 0.0
    for xi1 in (1.0, -1.0):
        for xi2 in (0.5, 1.0, 2.0):
            start = time.time()
            lam, _ = effective_value(eikonal_plus_forcing(cosine(1.0), xi1, xi2), 0.0, CellConfig(n=256))
            slowest = max(slowest, time.time() - start)
            target = np.copysign(xi2, xi1)
            worst = max(worst, abs(lam - target) / abs(target))
    ok = worst <= 0.02 and slowest < 30.0
    assert record_criterion(1, "effective constant sgn(xi1)|xi2|", ok,
                            f"max rel err {worst:.2e}, slowest point {slowest:.2f}s")


def test_quadrature_oracle(record_criterion):
    spec = power_plus_potential(1.0, cosine(1.0))
    p = np.linspace(-2.0, 2.0, 33)
    start = time.time()
    table = effective_table(spec, p, CellConfig(n=256))
    elapsed = time.time() - start
    oracle = np.array([hbar_quadrature(1.0, cosine(1.0), x) for x in p])
    rel = np.abs(table.hbar - oracle) / np.abs(oracle)
    flat = np.abs(p) <= 1.0
    ok = float(rel.max()) <= 0.02 and elapsed < 300.0
    assert record_criterion(2, "H-bar of |p| + cos vs quadrature, 33 points", ok,
                            f"max rel err {rel.max():.2e}, flat piece max |H-bar - 1| "
                            f"{np.max(np.abs(table.hbar[flat] - 1.0)):.2e}, {elapsed:.0f}s")


def test_consistency_condition(record_criterion):
    p = np.linspace(-2.0, 2.0, 17)
    cfg = CellConfig(n=128, tol=1e-7)
    start = time.time()
    convex = consistency_check(effective_table(QUAD, p, cfg))
    lty2 = consistency_check(effective_table(make_lty(0.2), p, cfg))
    lty5 = consistency_check(effective_table(make_lty(0.5), p, cfg))
    elapsed = time.time() - start
    ok = convex.passed and lty2.exceeds and lty5.passed and elapsed < 600.0
    assert record_criterion(3, "consistency: convex holds, LTY 0.2 fails, LTY 0.5 holds", ok,
                            f"gaps {convex.max_gap:.1e} / {lty2.max_gap:.3f} at p={lty2.worst_p:.3g} / "
                            f"{lty5.max_gap:.1e}, {elapsed:.0f}s")


def test_homogenization_convergence(record_criterion):
    eps = [2.0**-k for k in range(3, 8)]
    # the signal extends past T so W^eta keeps the exact optimal step
    rep = rate_sweep(QUAD, line(1.0, 2.0), lambda x: np.sin(2 * np.pi * x), 1.0, eps, "optimal")
    ok = rep.passed and rep.runtime < 900.0
    assert record_criterion(4, "rate sweep eps 2^-3..2^-7", ok,
                            "errors " + ", ".join(f"{e:.4f}" for e in rep.errors)
                            + f"; inversions {rep.inversions}, slope {rep.slope:.2f}, {rep.runtime:.0f}s")


def test_blowup_scaling(record_criterion):
    rep = blowup_experiment(theta=0.5, sigma=1.0, t=1.0, eps_list=[2.0**-k for k in range(4, 9)])
    ok = rep.passed and rep.runtime < 600.0
    assert record_criterion(5, "blow-up scaling eps^(1/2) sup u", ok,
                            "scaled " + ", ".join(f"{s:.3f}" for s in rep.scaled)
                            + f"; ratio {rep.stability_ratio:.2f}, control consistent {rep.consistent}")


def test_donsker_convergence(record_criterion):
    rep = donsker_experiment(eps=2.0**-10, eta=2.0**-5, n_samples=2000, times=(0.25, 0.5, 1.0), seed=0)
    ok = rep.passed and rep.runtime < 1200.0
    assert record_criterion(6, "Donsker coupling and KS at t=1", ok,
                            f"KS(t=1) {rep.ks_u[-1]:.3f}, C {rep.fitted_C:.3f}, "
                            f"coverage {rep.coverage:.3f}, {rep.runtime:.0f}s")


# ---------------------------------------------------------------------------
# criterion 7: 200 seeded random cases per property

CASES = 200
GRID = Grid1D(1.0, 128)
SPECS = [QUAD, eikonal(cosine(0.5)), make_lty(0.2)]
FIXED_ALPHA = 150.0  # above 2 max|D_p H| for every datum drawn below, so both inputs share one operator
QUAD_TABLE = legendre_transform(np.linspace(-4, 4, 81), np.linspace(-4, 4, 81) ** 2)


def _smooth(c):
    x = GRID.x
    return c[0] * np.sin(2 * np.pi * x) + c[1] * np.cos(2 * np.pi * x) + 0.5 * c[2] * np.sin(4 * np.pi * x) \
        + 0.5 * c[3] * np.cos(6 * np.pi * x)


def _contraction(rng):
    spec = SPECS[rng.integers(3)]
    sign = int(rng.choice([1, -1]))
    flux = "EngquistOsherConvex" if spec.kinetic_monotone and rng.random() < 0.5 else "LaxFriedrichs"
    cfg = SchemeConfig(flux=flux, alpha=FIXED_ALPHA)
    u1 = GridFunction(GRID, _smooth(rng.uniform(-1, 1, 4)))
    u2 = GridFunction(GRID, _smooth(rng.uniform(-1, 1, 4)))
    w1, w2 = evolve(spec, 0.5, sign, u1, 0.05, cfg), evolve(spec, 0.5, sign, u2, 0.05, cfg)
    return w1.sup_distance(w2) <= u1.sup_distance(u2) + 1e-12


def _monotonicity(rng):
    spec = SPECS[rng.integers(3)]
    sign = int(rng.choice([1, -1]))
    cfg = default_scheme(spec, alpha=FIXED_ALPHA)
    base = _smooth(rng.uniform(-1, 1, 4))
    lift = rng.uniform(0, 0.5)
    u1 = GridFunction(GRID, base)
    u2 = GridFunction(GRID, base + lift * (1 + np.cos(2 * np.pi * GRID.x)) / 2)
    return bool(np.all(evolve(spec, 0.5, sign, u1, 0.05, cfg).full()
                       <= evolve(spec, 0.5, sign, u2, 0.05, cfg).full() + 1e-12))


def _commutation(rng):
    spec = SPECS[rng.integers(3)]
    sign = int(rng.choice([1, -1]))
    shift = rng.uniform(-100, 100)
    u = GridFunction(GRID, _smooth(rng.uniform(-1, 1, 4)))
    a = evolve(spec, 0.5, sign, u + shift, 0.05)
    b = evolve(spec, 0.5, sign, u, 0.05)
    return bool(np.max(np.abs(a.full() - b.full() - shift)) <= 1e-12 * (1 + abs(shift)))


def _finite_speed(rng):
    u1 = GridFunction(GRID, _smooth(rng.uniform(-1, 1, 4)))
    u2 = GridFunction(GRID, _smooth(rng.uniform(-1, 1, 4)))
    radius = rng.uniform(0.2, 0.5)
    lip = max(u1.lipschitz(), u2.lipschitz(), 1.0)
    t = 0.25 * radius / QUAD.dp_bound(3 * lip + 2)
    return finite_speed_check(QUAD, 0.5, 1, u1, u2, radius, t, rng.uniform(0, 1)).passed


def _semigroup(rng):
    a, b, c = rng.uniform(-1, 1, 3)
    x = GRID.x
    u0 = GridFunction(GRID, a * np.sin(2 * np.pi * x) + b * np.cos(4 * np.pi * x) + c * np.abs(np.sin(np.pi * x)))
    t, s = rng.uniform(0.01, 0.2, 2)
    sign = int(rng.choice([1, -1]))
    once = hopf_lax(QUAD_TABLE, u0, t + s, sign)
    twice = hopf_lax(QUAD_TABLE, hopf_lax(QUAD_TABLE, u0, t, sign), s, sign)
    return once.sup_distance(twice) <= GRID.dx * max(u0.lipschitz(), 1.0)


def _biconjugation(rng):
    a, b, c, k = rng.uniform(0.1, 3.0), rng.uniform(-2, 2), rng.uniform(0, 2), rng.uniform(-1, 1)
    p = np.linspace(-4, 4, 81)
    g = a * p**2 + b * p + c * np.abs(p - k)
    slopes = np.diff(g) / np.diff(p)
    star = legendre_transform(p, g, slopes)
    back = legendre_transform(slopes, star.values, p)
    return bool(np.max(np.abs(back.values - g)) <= 1e-9 * (1 + np.max(np.abs(g))))


def _path_round_trip(rng, tmp):
    m = int(rng.integers(2, 13))
    values = rng.uniform(-5, 5, m)
    w = PiecewiseLinearPath(np.linspace(0.0, rng.uniform(0.1, 3.0), m), values)
    w.to_csv(tmp)
    back = PiecewiseLinearPath.from_csv(tmp)
    same = np.array_equal(back.knot_times, w.knot_times) and np.array_equal(back.knot_values, w.knot_values)
    unit = PiecewiseLinearPath(np.arange(m, dtype=float), values)
    again = interpolate((unit.knot_times, unit.knot_values), float(m - 1), 1.0)
    return same and bool(np.max(np.abs(again.knot_values - unit.knot_values)) <= 1e-12)


def test_solver_property_suite(record_criterion, tmp_path):
    props = {
        "contraction": _contraction,
        "monotonicity": _monotonicity,
        "constant commutation": _commutation,
        "finite speed": _finite_speed,
        "Hopf-Lax semigroup": _semigroup,
        "Legendre biconjugation": _biconjugation,
        "path round trip": lambda rng: _path_round_trip(rng, tmp_path / "w.csv"),
    }
    start = time.time()
    failures = {}
    for k, (name, prop) in enumerate(props.items()):
        rng = np.random.default_rng(1000 + k)
        failures[name] = sum(not prop(rng) for _ in range(CASES))
    elapsed = time.time() - start
    ok = all(v == 0 for v in failures.values()) and elapsed < 300.0
    detail = ", ".join(f"{n} {v}/{CASES}" for n, v in failures.items())
    assert record_criterion(7, "solver properties, failures per 200 cases", ok, f"{detail}, {elapsed:.0f}s")


def test_stability_estimates(record_criterion):
    # Lipschitz data with kinks; each bump of height h ends at the horizon
    rep = stability_experiment(QUAD, 0.25, lambda x: -np.abs(x - 0.5), 1.0, line(1.0, 1.0),
                               heights=(0.1, 0.05, 0.025), checkpoints=(0.25, 0.5, 0.75, 1.0))
    assert record_criterion(8, "stability in the signal and equicontinuity", rep.passed,
                            "C(h) " + ", ".join(f"{c:.4f}" for c in rep.constants)
                            + f" (ratio {rep.constant_ratio:.2f}); C2 "
                            + ", ".join(f"{c:.3f}" for c in rep.c2) + f" (ratio {rep.c2_ratio:.3f})")
