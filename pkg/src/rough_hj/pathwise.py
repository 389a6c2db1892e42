"""Splitting along monotone pieces of a piecewise-linear signal.

On a piece where W increases by delta > 0 the solution advances by
S_+(delta); where it decreases, by S_-(|delta|). The inner solve time is the
signal increment, not wall time. Flat pieces leave the state unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cell_problem import EffectiveTable, consistency_check
from .grid_solver import GridFunction, SchemeConfig, SolverAbort, default_scheme, evolve_with_stats
from .hamiltonians import HamiltonianSpec, discrete_convex
from .paths import PiecewiseLinearPath, monotone_segments
from .variational import hopf_lax


class PathwiseAbort(RuntimeError):
    def __init__(self, message: str, segment_index: int):
        super().__init__(message)
        self.segment_index = segment_index


@dataclass
class SegmentInfo:
    index: int
    start: float
    end: float
    increment: float
    sign: int
    steps: int = 0


@dataclass
class PathwiseSolveRecord:
    times: list
    states: list
    segments: list
    lipschitz: list  # (time, discrete Lipschitz constant) after every piece
    params: dict = field(default_factory=dict)

    @property
    def final(self) -> GridFunction:
        return self.states[-1]

    def state_at(self, t: float) -> GridFunction:
        for tt, s in zip(self.times, self.states):
            if math.isclose(tt, t, rel_tol=0.0, abs_tol=1e-12):
                return s
        raise KeyError(f"no checkpoint at t = {t}")

    def export(self, directory) -> dict:
        """Write one ``x,u`` CSV per checkpoint plus ``manifest.json``; returns the manifest."""
        from .cli_io import file_sha256

        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        for k, (t, s) in enumerate(zip(self.times, self.states)):
            name = f"checkpoint_{k:04d}.csv"
            s.to_csv(out / name)
            files[name] = {"time": t, "sha256": file_sha256(out / name)}
        manifest = {
            "params": self.params,
            "segments": [vars(s) for s in self.segments],
            "lipschitz": [list(p) for p in self.lipschitz],
            "files": files,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def _schedule(path: PiecewiseLinearPath, checkpoints):
    """Monotone pieces split at the requested checkpoint times."""
    if path.dimension != 1:
        raise ValueError("splitting needs a scalar path")
    segs = monotone_segments(path)
    horizon = path.horizon
    if checkpoints is None:
        cps = np.array([s.end_time for s in segs])
    else:
        cps = np.asarray(checkpoints, dtype=float)
        if np.any(cps < 0) or np.any(cps > horizon + 1e-12) or np.any(np.diff(cps) <= 0):
            raise ValueError("checkpoints must be increasing and inside [0, T]")
    cuts = np.union1d([s.end_time for s in segs], cps)
    cuts = cuts[(cuts > 0) & (cuts <= cps.max() + 1e-12)] if cps.size else cuts[cuts > 0]
    pieces = []
    t_prev = 0.0
    for t in cuts:
        if t - t_prev <= 1e-15:
            continue
        inc = float(path(t)) - float(path(t_prev))
        pieces.append((t_prev, t, inc))
        t_prev = t
    return pieces, cps


def _run(advance, path, u0, checkpoints, params):
    pieces, cps = _schedule(path, checkpoints)
    times, states = [], []
    if cps.size and abs(cps[0]) <= 1e-15:
        times.append(0.0)
        states.append(u0)
    u = u0
    lip = [(0.0, u0.lipschitz())]
    infos = []
    for i, (a, b, inc) in enumerate(pieces):
        sign = int(np.sign(inc))
        steps = 0
        if sign != 0:
            try:
                u, steps = advance(u, sign, abs(inc))
            except SolverAbort as exc:
                raise PathwiseAbort(f"piece {i} on [{a:.6g}, {b:.6g}]: {exc}", i) from exc
        infos.append(SegmentInfo(i, a, b, inc, sign, steps))
        lip.append((b, u.lipschitz()))
        if np.any(np.isclose(cps, b, rtol=0.0, atol=1e-12)):
            times.append(b)
            states.append(u)
    return PathwiseSolveRecord(times, states, infos, lip, params)


def solve_pathwise(spec: HamiltonianSpec, eps: float, path: PiecewiseLinearPath, u0: GridFunction,
                   checkpoints=None, config: SchemeConfig | None = None) -> PathwiseSolveRecord:
    """u_t + H(Du, x / eps) W' = 0 by exact splitting along the monotone pieces of W."""
    config = default_scheme(spec) if config is None else config
    n_cells = u0.grid.length / eps
    if abs(n_cells - round(n_cells)) > 1e-9:
        raise ValueError("grid length must be a whole number of eps-cells")
    alpha = [config.alpha]  # carried across pieces so the dissipation never drops

    def advance(u, sign, dt):
        out, stats = evolve_with_stats(spec, eps, sign, u, dt, config, alpha[0])
        alpha[0] = stats.alpha
        return out, stats.steps

    params = {"kind": "pathwise", "eps": eps, "family": spec.family, "q": spec.q,
              "flux": config.flux, "cfl": config.cfl, "n": u0.grid.n, "length": u0.grid.length}
    return _run(advance, path, u0, checkpoints, params)


def _check_table(table: EffectiveTable, factor: float):
    report = consistency_check(table, factor=factor)
    if not report.passed:
        raise ValueError(
            f"effective table is inconsistent: (-H)-bar differs from -H-bar by {report.max_gap:.3g} "
            f"at p = {report.worst_p:.4g}; the homogenized equation is ill-posed for rough signals")
    scale = 1.0 + float(np.max(np.abs(table.hbar)))
    if not discrete_convex(table.hbar, 1e-9 * scale + 4.0 * float(np.max(table.residual))):
        raise ValueError("homogenized driver supports convex tables only")


def solve_homogenized(table: EffectiveTable, path: PiecewiseLinearPath, u0: GridFunction,
                      checkpoints=None, factor: float = 3.0) -> PathwiseSolveRecord:
    """u_t + H-bar(Du) W' = 0 with Hopf-Lax steps of the tabulated H-bar."""
    _check_table(table, factor)
    conj = table.conjugate()

    def advance(u, sign, dt):
        return hopf_lax(conj, u, dt, sign), 0

    params = {"kind": "homogenized", "table_points": int(table.p_grid.size),
              "p_min": float(table.p_grid[0]), "p_max": float(table.p_grid[-1]),
              "n": u0.grid.n, "length": u0.grid.length}
    return _run(advance, path, u0, checkpoints, params)


# ---------------------------------------------------------------------------
# stability estimates


@dataclass
class StabilityReport:
    perturbations: list  # sup |W1 - W2| per pair
    differences: list  # sup |u1 - u2| at the horizon per pair
    initial_gap: float
    constants: list  # (difference - initial gap) / (L**q' sup |W1 - W2|)
    C1: float
    exponent: float
    lipschitz: float

    def spread(self) -> float:
        c = [x for x in self.constants if x > 0]
        return max(c) / min(c) if c else 1.0


def _solver(model, eps):
    if isinstance(model, EffectiveTable):
        return lambda path, u0: solve_homogenized(model, path, u0, [path.horizon]).final
    if eps is None:
        raise ValueError("a Hamiltonian spec needs eps")
    return lambda path, u0: solve_pathwise(model, eps, path, u0, [path.horizon]).final


def stability_check(model, u0, path_pairs, eps: float | None = None, q: float = 2.0,
                    u0_second: GridFunction | None = None) -> StabilityReport:
    """Measure sup |u1 - u2| at the common horizon against sup |W1 - W2| for each path pair.

    ``model`` is a HamiltonianSpec (solved by splitting with ``eps``) or an
    EffectiveTable (solved by Hopf-Lax steps).
    """
    solve = _solver(model, eps)
    v0 = u0 if u0_second is None else u0_second
    qq = model.q if isinstance(model, HamiltonianSpec) and model.q > 1 else q
    qp = qq / (qq - 1.0)
    lip = max(u0.lipschitz(), v0.lipschitz(), 1e-12)
    init = u0.sup_distance(v0)
    perts, diffs, consts = [], [], []
    for w1, w2 in path_pairs:
        if abs(float(w1(0.0)) - float(w2(0.0))) > 1e-12:
            raise ValueError("paths of a pair must start at the same value")
        h = w1.sup_distance(w2)
        d = solve(w1, u0).sup_distance(solve(w2, v0))
        perts.append(h)
        diffs.append(d)
        consts.append((d - init) / (lip**qp * h) if h > 0 else 0.0)
    return StabilityReport(perts, diffs, init, consts, max(consts) if consts else 0.0, qp, lip)


def spatial_modulus(u: GridFunction, lags) -> np.ndarray:
    """max |u(x) - u(y)| over |x - y| <= s on the grid (full values, periodic part wrapped)."""
    full = u.full()
    g = u.grid
    ext = np.concatenate([full, u.slope * g.length + full])
    out = []
    for s in np.atleast_1d(lags):
        k = int(math.floor(s / g.dx + 1e-9))
        best = 0.0
        for j in range(1, min(k, g.n) + 1):
            best = max(best, float(np.max(np.abs(ext[j:j + g.n] - full))))
        out.append(best)
    return np.array(out)


def equicontinuity_constants(record: PathwiseSolveRecord, lip0: float, lags) -> np.ndarray:
    """C2 per checkpoint: max over lags s of modulus(s) / (L s)."""
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    return np.array([float(np.max(spatial_modulus(s, lags) / (lip0 * lags))) for s in record.states])


@dataclass
class GrowthReport:
    times: np.ndarray
    lipschitz: np.ndarray
    c0: float
    exponential_ok: bool
    additive_ok: bool
    nonincreasing: bool


def lipschitz_growth_trace(record: PathwiseSolveRecord, eta: float, lip0: float | None = None,
                           c0: float | None = None) -> GrowthReport:
    """Compare the Lipschitz trace with exp(c0 t / eta)(L0 + 1) and with L0 + 2 t / eta.

    Without ``c0`` the smallest c0 making the exponential envelope hold is fitted and reported.
    """
    t = np.array([p[0] for p in record.lipschitz])
    lip = np.array([p[1] for p in record.lipschitz])
    l0 = lip[0] if lip0 is None else lip0
    pos = t > 0
    ratios = np.log(np.maximum(lip[pos], 1e-300) / (l0 + 1.0)) * eta / t[pos]
    fitted = float(max(0.0, np.max(ratios))) if ratios.size else 0.0
    c = fitted if c0 is None else c0
    exp_ok = bool(np.all(lip <= np.exp(c * t / eta) * (l0 + 1.0) * (1 + 1e-9)))
    add_ok = bool(np.all(lip <= l0 + 2.0 * t / eta + 1e-9))
    nonincr = bool(np.all(np.diff(lip) <= 1e-9))
    return GrowthReport(t, lip, fitted, exp_ok, add_ok, nonincr)
