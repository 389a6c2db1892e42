import json

import numpy as np
import pytest

from rough_hj.cell_problem import EffectiveTable
from rough_hj.cli_io import file_sha256
from rough_hj.grid_solver import Grid1D, GridFunction, SchemeConfig, default_scheme, evolve
from rough_hj.hamiltonians import constant, cosine, eikonal, power_plus_potential
from rough_hj.paths import PiecewiseLinearPath, brownian_sample, interpolate, line, tent
from rough_hj.pathwise import (
    PathwiseAbort,
    equicontinuity_constants,
    lipschitz_growth_trace,
    solve_homogenized,
    solve_pathwise,
    spatial_modulus,
    stability_check,
)

GRID = Grid1D(1.0, 128)
QUAD = power_plus_potential(2.0, cosine(1.0))
P = np.linspace(-6, 6, 49)
PARABOLA = EffectiveTable.exact(P, P**2)


def _sin(grid=GRID, amp=1.0 / (2 * np.pi)):
    return GridFunction.from_function(grid, lambda x: amp * np.sin(2 * np.pi * x))


def test_line_path_is_a_single_forward_solve():
    u0 = _sin()
    rec = solve_pathwise(QUAD, 0.25, line(1.0, 0.4), u0, [0.4])
    direct = evolve(QUAD, 0.25, 1, u0, 0.4, default_scheme(QUAD))
    assert rec.final.sup_distance(direct) < 1e-12
    assert len(rec.segments) == 1 and rec.segments[0].sign == 1


def test_descending_line_runs_backward():
    u0 = _sin()
    rec = solve_pathwise(QUAD, 0.25, line(-1.0, 0.4), u0)
    assert rec.final.sup_distance(evolve(QUAD, 0.25, -1, u0, 0.4, default_scheme(QUAD))) < 1e-12


def test_flat_piece_is_identity():
    u0 = _sin()
    rec = solve_pathwise(QUAD, 0.25, PiecewiseLinearPath([0.0, 1.0], [0.3, 0.3]), u0)
    assert rec.final is u0 and rec.segments[0].sign == 0


@pytest.mark.parametrize("p", [-1.0, 0.5, 2.0])
def test_tent_cancels_on_affine_data(p):
    u0 = GridFunction.affine(GRID, p, 0.1)
    rec = solve_pathwise(power_plus_potential(2.0, constant()), 1.0, tent(1.0, 1.0), u0)
    assert rec.final.sup_distance(u0) < 1e-12
    np.testing.assert_allclose(rec.state_at(1.0).full(), p * GRID.x + 0.1 - p**2, atol=1e-12)


def test_tent_is_irreversible_for_hat():
    g = Grid1D(1.0, 256)
    u0 = GridFunction.from_function(g, lambda x: np.maximum(0.0, 0.2 - np.abs(x - 0.5)))
    rec = solve_pathwise(eikonal(), 1.0, tent(0.1, 0.1), u0)
    # erosion then dilation by a flat interval of radius 0.1 truncates the hat at height 0.1
    exact = np.minimum(u0.full(), 0.1)
    assert rec.final.sup_distance(u0) > 0.09
    # same first-order kink smearing as the Engquist-Osher vs Hopf-Lax comparison
    assert np.max(np.abs(rec.final.full() - exact)) <= 2.5 * g.dx


def test_checkpoints_recorded():
    rec = solve_pathwise(QUAD, 0.25, tent(0.5, 0.5), _sin(), [0.0, 0.25, 0.5, 1.0])
    assert rec.times == [0.0, 0.25, 0.5, 1.0]
    with pytest.raises(KeyError):
        rec.state_at(0.3)
    with pytest.raises(ValueError):
        solve_pathwise(QUAD, 0.25, tent(0.5, 0.5), _sin(), [0.5, 0.25])


def test_grid_must_hold_whole_cells():
    with pytest.raises(ValueError):
        solve_pathwise(QUAD, 0.3, line(1.0, 0.1), _sin())


def test_abort_names_the_piece():
    cfg = SchemeConfig(gradient_ceiling=1.5)
    u0 = _sin(amp=0.2)
    path = PiecewiseLinearPath([0.0, 0.01, 0.02, 2.0], [0.0, 0.002, 0.0, 1.98])
    with pytest.raises(PathwiseAbort) as err:
        solve_pathwise(QUAD, 0.25, path, u0, config=cfg)
    assert err.value.segment_index >= 1


@pytest.mark.parametrize("p", [-1.5, 0.0, 0.75])
def test_homogenized_affine_solution(p):
    b = brownian_sample(2.0**-8, 1.0, seed=2)
    w = interpolate((b.knot_times, b.knot_values), 1.0, 2.0**-4)
    u0 = GridFunction.affine(GRID, p, 0.0)
    cps = [0.25, 0.5, 1.0]
    rec = solve_homogenized(PARABOLA, w, u0, cps)
    for t in cps:
        expected = p * GRID.x - p**2 * (float(w(t)) - float(w(0.0)))
        np.testing.assert_allclose(rec.state_at(t).full(), expected, atol=1e-10)


def test_homogenized_tent_stays_bounded():
    u0 = _sin()
    rec = solve_homogenized(PARABOLA, tent(1.0, 1.0), u0)
    assert rec.final.sup_distance(u0) <= 2 * u0.lipschitz() * 12.0 * 1.0


def test_homogenized_rejects_inconsistent_table():
    tab = EffectiveTable.exact(P, P**2)
    tab.neg_hbar = -tab.hbar + 0.1
    with pytest.raises(ValueError, match="inconsistent"):
        solve_homogenized(tab, line(1.0, 0.1), _sin())


def test_homogenized_interpolation_levels_are_stable():
    b = brownian_sample(2.0**-10, 1.0, seed=4)
    u0 = _sin(Grid1D(1.0, 256))
    for eta in (2.0**-4, 2.0**-5, 2.0**-6):
        w1 = interpolate((b.knot_times, b.knot_values), 1.0, eta)
        w2 = interpolate((b.knot_times, b.knot_values), 1.0, eta / 2)
        d = solve_homogenized(PARABOLA, w1, u0).final.sup_distance(solve_homogenized(PARABOLA, w2, u0).final)
        # Lip(u0) = 1, so the stability bound reads d <= C_L sup |W1 - W2| with C_L of order one
        assert d <= w1.sup_distance(w2)


def test_identical_paths_contract():
    u0, v0 = _sin(), _sin(amp=0.1)
    w = tent(0.3, 0.3)
    rep = stability_check(QUAD, u0, [(w, w)], eps=0.25, u0_second=v0)
    assert rep.differences[0] <= u0.sup_distance(v0) + 1e-10


def test_stability_constant_is_stable_under_halving():
    # kinked data and a bump that ends at the horizon: the peak loses a fixed multiple of h
    g = Grid1D(1.0, 256)
    u0 = GridFunction.from_function(g, lambda x: -g.circle_distance(x, 0.5))
    base = line(0.2, 1.0)
    pairs = []
    for h in (0.1, 0.05, 0.025):
        bump = tent(h, h / 2, 1.0 - h, 1.0)
        t = np.union1d(base.knot_times, bump.knot_times)
        pairs.append((base, PiecewiseLinearPath(t, base(t) + bump(t))))
    rep = stability_check(eikonal(cosine(0.5)), u0, pairs, eps=0.25)
    np.testing.assert_allclose(rep.perturbations, [0.1, 0.05, 0.025], rtol=1e-9)
    assert min(rep.constants) > 0 and rep.spread() < 2.0


def test_flat_eikonal_loses_a_fixed_fraction_of_the_bump():
    g = Grid1D(1.0, 256)
    u0 = GridFunction.from_function(g, lambda x: -g.circle_distance(x, 0.5))
    base = line(0.2, 1.0)
    consts = []
    for h in (0.1, 0.05):
        bump = tent(h, h / 2, 1.0 - h, 1.0)
        t = np.union1d(base.knot_times, bump.knot_times)
        consts += stability_check(eikonal(), u0, [(base, PiecewiseLinearPath(t, base(t) + bump(t)))], eps=1.0).constants
    # the bump erodes 1.5 h at net slope 3 over h / 2, then dilates 0.5 h; the peak of the
    # tent data ends 0.9 h lower than along the base path (base contributes 0.2 * h / 2 on the rise
    # and 0.2 * h / 2 on the fall)
    np.testing.assert_allclose(consts, 0.9, atol=0.02)


def test_spatial_modulus_of_affine_and_sine():
    u = GridFunction.affine(GRID, 2.0)
    np.testing.assert_allclose(spatial_modulus(u, [GRID.dx, 4 * GRID.dx]), [2 * GRID.dx, 8 * GRID.dx], rtol=1e-12)
    s = _sin()
    assert spatial_modulus(s, [0.5])[0] == pytest.approx(2 / (2 * np.pi), rel=1e-3)


def test_equicontinuity_constants_bounded():
    u0 = _sin()
    rec = solve_pathwise(QUAD, 0.25, tent(0.3, 0.3), u0, [0.15, 0.3, 0.45, 0.6])
    c2 = equicontinuity_constants(rec, u0.lipschitz(), [GRID.dx, 0.05, 0.1])
    assert np.all(c2 > 0) and c2.max() / c2.min() < 3.0


def test_constant_data_has_zero_lipschitz_trace():
    u0 = GridFunction(GRID, np.full(GRID.n, 2.0))
    rec = solve_pathwise(power_plus_potential(2.0, constant()), 1.0, tent(0.5, 0.5), u0)
    assert np.all(lipschitz_growth_trace(rec, 0.5).lipschitz == 0.0)


def test_lipschitz_growth_additive_envelope():
    b = brownian_sample(2.0**-10, 1.0, seed=4)
    g = Grid1D(1.0, 256)
    for eta in (2.0**-3, 2.0**-5):
        w = interpolate((b.knot_times, b.knot_values), 1.0, eta)
        rec = solve_pathwise(QUAD, 0.125, w, GridFunction(g, np.zeros(g.n)))
        rep = lipschitz_growth_trace(rec, eta)
        assert rep.additive_ok and rep.exponential_ok


def test_flat_medium_lipschitz_nonincreasing():
    b = brownian_sample(2.0**-8, 1.0, seed=9)
    w = interpolate((b.knot_times, b.knot_values), 1.0, 2.0**-4)
    rec = solve_pathwise(power_plus_potential(2.0, constant()), 1.0, w, _sin())
    assert lipschitz_growth_trace(rec, 2.0**-4).nonincreasing


def test_export_writes_checksummed_manifest(tmp_path):
    rec = solve_pathwise(QUAD, 0.25, tent(0.2, 0.2), _sin(), [0.2, 0.4])
    manifest = rec.export(tmp_path)
    assert json.loads((tmp_path / "manifest.json").read_text()) == manifest
    for name, entry in manifest["files"].items():
        assert file_sha256(tmp_path / name) == entry["sha256"]
    assert manifest["params"]["eps"] == 0.25
