"""Hamiltonian families H(p, y) = a K(|p|) + b V(y) + c f(y) on a unit-periodic medium.

Four families are provided:

* ``PowerPlusPotential``  K(r) = r**q
* ``Eikonal``             K(r) = r
* ``EikonalPlusForcing``  K(r) = r, with a forcing profile f weighted by a signal slope
* ``LTYNonconvex``        K(r) = F(r), a piecewise-linear nonconvex profile, with
                          the sawtooth potential V_s

The weights (a, b, c) let one object describe both H and -H, and the cell
Hamiltonian xi1 H(p, y) + xi2 f(y) of a two-signal equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

FAMILIES = ("PowerPlusPotential", "Eikonal", "EikonalPlusForcing", "LTYNonconvex")
REPRESENTATIONS = ("FourierCoefficients", "NodeSamples", "SawtoothVs")

# kinetic kinds understood by the compiled stencils
KIND_POWER = 0
KIND_EIKONAL = 1
KIND_TABLE = 2


# ---------------------------------------------------------------------------
# periodic potentials


@dataclass(frozen=True)
class PotentialSpec:
    """A 1-periodic scalar profile.

    ``data`` depends on ``representation``:

    FourierCoefficients
        tuple of ``(k, a_k, b_k)`` giving ``a_k cos(2 pi k y) + b_k sin(2 pi k y)``;
        ``k = 0`` contributes the constant ``a_0``.
    NodeSamples
        values at ``y = j / n``, ``j = 0..n-1``, linearly interpolated.
    SawtoothVs
        the single parameter ``(s,)``.
    """

    representation: str = "FourierCoefficients"
    data: tuple = ()
    period: float = 1.0

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown potential representation {self.representation!r}")
        if self.period != 1.0:
            raise ValueError("potentials are normalized to period 1")
        if self.representation == "SawtoothVs":
            (s,) = self.data
            if not 0.0 < s < 1.0:
                raise ValueError("sawtooth parameter s must lie in (0, 1)")
        if self.representation == "NodeSamples":
            if len(self.data) < 2:
                raise ValueError("NodeSamples needs at least two values")
            if not np.all(np.isfinite(self.data)):
                raise ValueError("NodeSamples values must be finite")

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if self.representation == "FourierCoefficients":
            out = np.zeros_like(y)
            for k, a, b in self.data:
                if k == 0:
                    out = out + a
                    continue
                arg = 2.0 * np.pi * k * y
                out = out + a * np.cos(arg) + b * np.sin(arg)
            return out
        frac = y - np.floor(y)
        if self.representation == "SawtoothVs":
            (s,) = self.data
            return np.where(frac <= s, -frac / s, (frac - 1.0) / (1.0 - s))
        vals = np.asarray(self.data, dtype=float)
        n = vals.size
        pos = frac * n
        i = np.floor(pos).astype(int) % n
        w = pos - np.floor(pos)
        return (1.0 - w) * vals[i] + w * vals[(i + 1) % n]

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        if self.representation == "FourierCoefficients":
            out = np.zeros_like(y)
            for k, a, b in self.data:
                if k == 0:
                    continue
                arg = 2.0 * np.pi * k * y
                out = out + 2.0 * np.pi * k * (-a * np.sin(arg) + b * np.cos(arg))
            return out
        frac = y - np.floor(y)
        if self.representation == "SawtoothVs":
            (s,) = self.data
            return np.where(frac < s, -1.0 / s, 1.0 / (1.0 - s))
        vals = np.asarray(self.data, dtype=float)
        n = vals.size
        i = np.floor(frac * n).astype(int) % n
        return (vals[(i + 1) % n] - vals[i]) * n

    def __call__(self, y):
        return self.value(y)

    def extrema(self, resolution: int = 4096) -> tuple[float, float]:
        """(min, max) over one period."""
        if self.representation == "SawtoothVs":
            return -1.0, 0.0
        if self.representation == "NodeSamples":
            return float(np.min(self.data)), float(np.max(self.data))
        v = self.value(np.arange(resolution) / resolution)
        return float(v.min()), float(v.max())

    def scaled(self, factor: float) -> PotentialSpec:
        if self.representation == "FourierCoefficients":
            return replace(self, data=tuple((k, factor * a, factor * b) for k, a, b in self.data))
        if self.representation == "NodeSamples":
            return replace(self, data=tuple(factor * v for v in self.data))
        return node_samples(factor * self.value(np.arange(1024) / 1024))

    def is_constant(self, resolution: int = 4096, tol: float = 1e-12) -> bool:
        lo, hi = self.extrema(resolution)
        return hi - lo <= tol * max(1.0, abs(hi), abs(lo))


def fourier(*terms) -> PotentialSpec:
    return PotentialSpec("FourierCoefficients", tuple((int(k), float(a), float(b)) for k, a, b in terms))


def cosine(amplitude: float = 1.0, k: int = 1) -> PotentialSpec:
    return fourier((k, amplitude, 0.0))


def sine(amplitude: float = 1.0, k: int = 1) -> PotentialSpec:
    return fourier((k, 0.0, amplitude))


def constant(c: float = 0.0) -> PotentialSpec:
    return fourier((0, c, 0.0))


def sawtooth(s: float) -> PotentialSpec:
    return PotentialSpec("SawtoothVs", (float(s),))


def node_samples(values) -> PotentialSpec:
    return PotentialSpec("NodeSamples", tuple(float(v) for v in np.asarray(values).ravel()))


def combine(weights, profiles) -> PotentialSpec:
    """Linear combination sum_i w_i f_i, used to fold a vector forcing onto a direction."""
    weights = [float(w) for w in weights]
    if len(weights) != len(profiles):
        raise ValueError("weights and profiles differ in length")
    if all(p.representation == "FourierCoefficients" for p in profiles):
        terms = []
        for w, p in zip(weights, profiles):
            terms.extend((k, w * a, w * b) for k, a, b in p.data)
        return PotentialSpec("FourierCoefficients", tuple(terms))
    y = np.arange(1024) / 1024
    return node_samples(sum(w * p.value(y) for w, p in zip(weights, profiles)))


# ---------------------------------------------------------------------------
# the LTY kinetic profile


@dataclass(frozen=True)
class LTYParams:
    """Breakpoints of the nonconvex profile F.

    F is piecewise linear through (0, 0), (theta3, 1/3), (theta2, 1/2),
    (theta1, 1/3), rises with ``rise_slope`` until it reaches 1, then grows
    with slope 1.
    """

    s: float = 0.2
    theta3: float = 0.5
    theta2: float = 1.0
    theta1: float = 1.5
    rise_slope: float | None = None

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.rise_slope if self.rise_slope is not None else (1.0 / 3.0) / self.theta3
        r_one = self.theta1 + (2.0 / 3.0) / m
        xs = np.array([0.0, self.theta3, self.theta2, self.theta1, r_one])
        ys = np.array([0.0, 1.0 / 3.0, 0.5, 1.0 / 3.0, 1.0])
        return xs, ys


def lty_profile(params: LTYParams, r):
    xs, ys = params.knots()
    r = np.asarray(r, dtype=float)
    inner = np.interp(r, xs, ys)
    return np.where(r > xs[-1], ys[-1] + (r - xs[-1]), inner)


# ---------------------------------------------------------------------------
# Hamiltonian descriptor


@dataclass(frozen=True)
class HamiltonianSpec:
    family: str
    q: float = 2.0
    potential: PotentialSpec = field(default_factory=constant)
    forcing: PotentialSpec | None = None
    kinetic_weight: float = 1.0
    potential_weight: float = 1.0
    forcing_weight: float = 0.0
    lty: LTYParams | None = None
    growth_c: float = 1.0
    growth_C: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown Hamiltonian family {self.family!r}")
        if self.q < 1.0:
            raise ValueError("growth exponent q must be >= 1")
        if self.family in ("Eikonal", "EikonalPlusForcing") and self.q != 1.0:
            raise ValueError("eikonal families have q = 1")
        if self.family == "LTYNonconvex" and self.lty is None:
            raise ValueError("LTYNonconvex needs LTY parameters")
        if self.forcing_weight != 0.0 and self.forcing is None:
            raise ValueError("nonzero forcing weight without a forcing profile")

    # -- pieces ---------------------------------------------------------------

    def kinetic(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "LTYNonconvex":
            return lty_profile(self.lty, r)
        if self.family == "PowerPlusPotential":
            return r**self.q
        return r

    def kinetic_slope_bound(self, radius: float) -> float:
        """max |K'(r)| for 0 <= r <= radius."""
        if self.family == "PowerPlusPotential":
            return self.q * max(radius, 0.0) ** (self.q - 1.0) if self.q > 1.0 else 1.0
        if self.family == "LTYNonconvex":
            xs, ys = self.lty.knots()
            return float(max(1.0, np.max(np.abs(np.diff(ys) / np.diff(xs)))))
        return 1.0

    def medium(self, y):
        """The p-independent part b V(y) + c f(y)."""
        out = self.potential_weight * self.potential.value(y)
        if self.forcing is not None and self.forcing_weight != 0.0:
            out = out + self.forcing_weight * self.forcing.value(y)
        return out

    def eval(self, p, y):
        return self.kinetic_weight * self.kinetic(np.abs(p)) + self.medium(y)

    __call__ = eval

    def dp_bound(self, radius: float) -> float:
        return abs(self.kinetic_weight) * self.kinetic_slope_bound(radius)

    # -- structure --------------------------------------------------------------

    @property
    def kinetic_monotone(self) -> bool:
        """K nondecreasing on [0, inf), so H is even in p with extremum at p = 0."""
        return self.family != "LTYNonconvex"

    def is_convex(self) -> bool:
        return self.family != "LTYNonconvex" and self.kinetic_weight >= 0.0

    def negated(self) -> HamiltonianSpec:
        return replace(
            self,
            kinetic_weight=-self.kinetic_weight,
            potential_weight=-self.potential_weight,
            forcing_weight=-self.forcing_weight,
        )

    def signed(self, sign: int) -> HamiltonianSpec:
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        return self if sign == 1 else self.negated()

    def reflected(self) -> HamiltonianSpec:
        """H(p, -y) as a spec."""
        y = np.arange(1024) / 1024
        pot = node_samples(self.potential.value(-y))
        frc = None if self.forcing is None else node_samples(self.forcing.value(-y))
        return replace(self, potential=pot, forcing=frc)

    def kinetic_code(self) -> tuple[int, float, np.ndarray, np.ndarray]:
        """(kind, q, xs, ys) for the compiled stencils."""
        if self.family == "LTYNonconvex":
            xs, ys = self.lty.knots()
            return KIND_TABLE, 1.0, xs, ys
        empty = np.zeros(1)
        if self.family == "PowerPlusPotential":
            return KIND_POWER, float(self.q), empty, empty
        return KIND_EIKONAL, 1.0, empty, empty


def power_plus_potential(q: float = 2.0, potential: PotentialSpec | None = None) -> HamiltonianSpec:
    potential = constant() if potential is None else potential
    # H(0, y) >= -c forces min V >= -1 for any c <= 1; growth_check reports violations
    _, hi = potential.extrema()
    c = 1.0
    big_c = max(1.0, q, hi)
    return HamiltonianSpec("PowerPlusPotential", q=q, potential=potential, growth_c=c, growth_C=big_c)


def eikonal(potential: PotentialSpec | None = None) -> HamiltonianSpec:
    potential = constant() if potential is None else potential
    return HamiltonianSpec("Eikonal", q=1.0, potential=potential)


def eikonal_plus_forcing(forcing: PotentialSpec, xi1: float = 1.0, xi2: float = 1.0,
                         potential: PotentialSpec | None = None) -> HamiltonianSpec:
    """Cell Hamiltonian xi1 |p| + xi2 f(y) (+ xi1 V(y) if a potential is given)."""
    potential = constant() if potential is None else potential
    return HamiltonianSpec(
        "EikonalPlusForcing",
        q=1.0,
        potential=potential,
        forcing=forcing,
        kinetic_weight=float(xi1),
        potential_weight=float(xi1),
        forcing_weight=float(xi2),
    )


def make_lty(s: float, theta3: float = 0.5, theta2: float = 1.0, theta1: float = 1.5,
             rise_slope: float | None = None) -> HamiltonianSpec:
    if not 0.0 < s < 1.0:
        raise ValueError("LTY parameter s must lie in (0, 1)")
    if not 0.0 < theta3 < theta2 < theta1:
        raise ValueError("LTY breakpoints need 0 < theta3 < theta2 < theta1")
    if rise_slope is not None and rise_slope <= 0.0:
        raise ValueError("rise slope must be positive")
    params = LTYParams(s=s, theta3=theta3, theta2=theta2, theta1=theta1, rise_slope=rise_slope)
    return HamiltonianSpec("LTYNonconvex", q=1.0, potential=sawtooth(s), lty=params)


def growth_check(spec: HamiltonianSpec, p_max: float = 10.0, n: int = 201) -> bool:
    """Check c(|p|^q - 1) <= H <= C(|p|^q + 1) and |D_p H| <= C(|p|^(q-1) + 1) on a grid."""
    p = np.linspace(-p_max, p_max, n)[:, None]
    y = (np.arange(64) / 64)[None, :]
    h = spec.eval(p, y)
    r = np.abs(p) ** spec.q
    lower = spec.growth_c * (r - 1.0) <= h + 1e-12
    upper = h <= spec.growth_C * (r + 1.0) + 1e-12
    dp = abs(spec.kinetic_weight) * np.array(
        [spec.kinetic_slope_bound(abs(v)) for v in p.ravel()])
    slope_ok = dp <= spec.growth_C * (np.abs(p.ravel()) ** (spec.q - 1.0) + 1.0) + 1e-12
    return bool(lower.all() and upper.all() and slope_ok.all())


# ---------------------------------------------------------------------------
# Legendre transforms


@dataclass(frozen=True)
class LegendreTable:
    """Discrete conjugate G*(z) = max_p (z p - G(p)) on ``p_grid`` (the z-values).

    ``source_grid``/``source_values`` keep G so the conjugate can be evaluated
    at arbitrary z. ``truncated[i]`` marks z-values whose maximizer sits on the
    edge of the source grid, i.e. outside the effective domain.
    """

    p_grid: np.ndarray
    values: np.ndarray
    truncated: np.ndarray
    source_grid: np.ndarray
    source_values: np.ndarray
    domain: tuple[float, float]

    def evaluate(self, z, outside: str = "inf", tol: float = 1e-12):
        """Conjugate at arbitrary z; ``outside='inf'`` returns +inf off the domain."""
        z = np.asarray(z, dtype=float)
        val, trunc = _conjugate(self.source_grid, self.source_values, z.ravel(), tol)
        val = val.reshape(z.shape)
        if outside == "inf":
            val = np.where(trunc.reshape(z.shape), np.inf, val)
        elif outside != "extend":
            raise ValueError("outside must be 'inf' or 'extend'")
        return val

    def is_convex(self, tol: float = 1e-9) -> bool:
        ok = ~self.truncated
        return discrete_convex(self.values[ok], tol, self.p_grid[ok])

    def to_csv(self, path) -> None:
        from .cli_io import write_csv

        write_csv(path, ["p", "gstar"], [self.p_grid, self.values])


def _conjugate(p, g, z, tol, chunk: int = 2048):
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    vals = np.empty(z.size)
    trunc = np.zeros(z.size, dtype=bool)
    for start in range(0, z.size, chunk):
        zz = z[start:start + chunk, None]
        a = zz * p[None, :] - g[None, :]
        idx = np.argmax(a, axis=1)
        best = a[np.arange(a.shape[0]), idx]
        vals[start:start + chunk] = best
        if p.size > 2:
            interior = np.max(a[:, 1:-1], axis=1)
            scale = 1.0 + np.abs(best)
            trunc[start:start + chunk] = ((idx == 0) | (idx == p.size - 1)) & (best > interior + tol * scale)
        else:
            trunc[start:start + chunk] = True
    return vals, trunc


def legendre_transform(p_grid, g_values, z_grid=None, tol: float = 1e-12) -> LegendreTable:
    """Conjugate of G sampled on ``p_grid``.

    ``z_grid`` defaults to a symmetric uniform grid spanning the discrete slope range of G.
    Non-finite samples are rejected.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    g_values = np.asarray(g_values, dtype=float)
    if p_grid.shape != g_values.shape or p_grid.ndim != 1:
        raise ValueError("p_grid and values must be 1-D arrays of equal length")
    if not np.all(np.isfinite(g_values)):
        raise ValueError("non-finite values in G")
    if np.any(np.diff(p_grid) <= 0):
        raise ValueError("p_grid must be strictly increasing")
    if z_grid is None:
        slopes = np.diff(g_values) / np.diff(p_grid)
        zmax = float(np.max(np.abs(slopes))) if slopes.size else 1.0
        z_grid = np.linspace(-zmax, zmax, p_grid.size)
    z_grid = np.asarray(z_grid, dtype=float)
    vals, trunc = _conjugate(p_grid, g_values, z_grid, tol)
    inside = z_grid[~trunc]
    domain = (float(inside.min()), float(inside.max())) if inside.size else (np.nan, np.nan)
    return LegendreTable(z_grid, vals, trunc, p_grid, g_values, domain)


def discrete_convex(values, tol: float = 1e-9, grid=None) -> bool:
    """Nonnegative second differences; with ``grid``, nondecreasing slopes on that nonuniform grid."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return True
    if grid is None:
        return bool(np.all(v[2:] + v[:-2] - 2.0 * v[1:-1] >= -tol))
    slopes = np.diff(v) / np.diff(np.asarray(grid, dtype=float))
    return bool(np.all(np.diff(slopes) >= -tol))
