"""Command line entry point, flat key-value configuration, CSV and manifest I/O.

Exit codes: 0 when a run passes its checks, 2 when it completes but fails
them, 1 on any error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("rough_hj")

OUTPUT_ROOT_ENV = "ROUGH_HJ_OUTPUT"
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


# ---------------------------------------------------------------------------
# CSV and checksums


def write_csv(path, header, columns) -> None:
    """Comma-separated, LF line endings, 17 significant digits."""
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len(cols) != len(header):
        raise ValueError("header and columns disagree in length")
    if len({c.size for c in cols}) > 1:
        raise ValueError("columns must have equal length")
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return header, data


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# configuration


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


REQUIRED = object()

_COMMON = {"out": (str, ""), "seed": (int, 0), "workers": (int, 1)}

_HAMILTONIAN = {
    "family": (str, "PowerPlusPotential"),
    "q": (float, 2.0),
    "potential": (str, "cos"),
    "amplitude": (float, 1.0),
    "lty_s": (float, 0.2),
}

_TABLE = {"p_min": (float, -8.0), "p_max": (float, 8.0), "p_points": (int, 513), "cell_n": (int, 32),
          "cell_tol": (float, 1e-8), "method": (str, "LargeTime")}

_PATH = {"path": (str, "line"), "path_slope": (float, 1.0), "theta": (float, 0.5), "depth": (int, 10),
         "path_eta": (float, 2.0**-8), "path_file": (str, "")}

SCHEMAS = {
    "solve": {**_HAMILTONIAN, **_PATH, "eps": (float, REQUIRED), "horizon": (float, 1.0), "n": (int, 256),
              "u0": (str, "sin"), "checkpoints": (list, []), "flux": (str, "")},
    "effective": {**_HAMILTONIAN, **_TABLE, "p_points": (int, 33), "p_min": (float, -2.0), "p_max": (float, 2.0),
                  "cell_n": (int, 256), "cell_tol": (float, 1e-7)},
    "consistency": {**_HAMILTONIAN, **_TABLE, "family": (str, "LTYNonconvex"), "p_points": (int, 21),
                    "p_min": (float, 0.0), "p_max": (float, 2.0), "cell_n": (int, 128),
                    "cell_tol": (float, 1e-7), "factor": (float, 3.0)},
    "rate-sweep": {**_HAMILTONIAN, **_TABLE, **_PATH, "epsilon_list": (list, REQUIRED), "horizon": (float, 1.0),
                   "eta_rule": (str, "optimal"), "eta_scale": (float, 1.0), "beta": (float, 1.0 / 3.0), "holder": (float, 1.0),
                   "n_cell": (int, 32), "n_hom": (int, 256), "u0": (str, "sin")},
    "mild-sweep": {**_HAMILTONIAN, **_TABLE, **_PATH, "epsilon_list": (list, REQUIRED), "horizon": (float, 1.0),
                   "eta_rule": (str, REQUIRED), "eta_scale": (float, 1.0), "beta": (float, 1.0 / 3.0), "n_cell": (int, 32),
                   "n_hom": (int, 256), "u0": (str, "sin")},
    "blowup": {"theta": (float, 0.5), "sigma": (float, 1.0), "t": (float, 1.0),
               "epsilon_list": (list, [2.0**-k for k in range(4, 9)]), "mode": (str, "both"), "nu": (float, 0.1),
               "n_cell": (int, 32)},
    "donsker": {"eps": (float, 2.0**-10), "eta": (float, 2.0**-5), "samples": (int, 2000),
                "times": (list, [0.25, 0.5, 1.0]), "x1": (str, "rademacher"), "x2": (str, "uniform"),
                "n_cell": (int, 16), "ks_threshold": (float, 0.05), "coverage": (float, 0.99)},
    "square-wave": {"epsilon_list": (list, [2.0**-6, 2.0**-8, 2.0**-10]), "eta_exponent": (float, 0.5),
                    "mu_exponent": (float, -0.5), "horizon": (float, 1.0), "n_cell": (int, 32)},
    "distance": {**_HAMILTONIAN, "amplitude": (float, 0.1), "x": (float, 0.0), "y_list": (list, [0.25, 0.5, 1.0]),
                 "n_steps": (int, 256), "restarts": (int, 4)},
    "paths": {"family": (str, "TakagiLike"), "theta": (float, 0.5), "depth": (int, 10), "eta": (float, 2.0**-6),
              "mu": (float, 1.0), "x1": (str, "rademacher"), "x2": (str, "rademacher"), "horizon": (float, 1.0)},
}
SUBCOMMANDS = tuple(SCHEMAS) + ("verify",)


def _parse_float(text: str) -> float:
    text = text.strip()
    if "^" in text:  # 2^-7 shorthand
        base, expo = text.split("^", 1)
        return float(base) ** float(expo)
    return float(text)


def _coerce(key: str, kind, raw):
    if not isinstance(raw, str):
        return raw
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return _parse_float(raw)
        if kind is list:
            raw = raw.strip().strip("[]")
            return [_parse_float(x) for x in raw.split(",") if x.strip()]
        if kind is bool:
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(key, f"expected {kind.__name__}, got {raw!r}") from None
    return raw.strip()


def parse_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def parse_flags(args) -> dict:
    out = {}
    it = iter(args)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(tok, "expected --key value")
        key = tok[2:].replace("-", "_")
        try:
            out[key] = next(it)
        except StopIteration:
            raise ConfigError(key, "flag without a value") from None
    return out


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    out: Path
    seed: int
    defaults_used: list = field(default_factory=list)

    def snapshot(self) -> dict:
        return {"subcommand": self.subcommand, "seed": self.seed, "out": str(self.out), "params": self.params,
                "defaults_used": self.defaults_used}


def parse_config(subcommand: str, text: str = "", flags=None) -> RunConfig:
    """Validate file text plus flag overrides (flags win) against the subcommand's schema."""
    if subcommand not in SCHEMAS:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    schema = {**_COMMON, **SCHEMAS[subcommand]}
    raw = parse_text(text)
    if isinstance(flags, dict):
        raw.update(flags)
    elif flags:
        raw.update(parse_flags(flags))
    for key in raw:
        if key not in schema:
            raise ConfigError(key, f"unknown key for {subcommand}")
    params, defaults = {}, []
    for key, (kind, default) in schema.items():
        if key in raw:
            params[key] = _coerce(key, kind, raw[key])
        elif default is REQUIRED:
            raise ConfigError(key, f"required by {subcommand}")
        else:
            params[key] = default
            defaults.append(key)
    out = params.pop("out") or str(Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / subcommand)
    seed = params.pop("seed")
    return RunConfig(subcommand, params, Path(out), int(seed), defaults)


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_clock: float
    status: str
    checksums: dict

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(vars(self), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, directory) -> RunManifest:
        doc = json.loads((Path(directory) / "manifest.json").read_text())
        return cls(**doc)


def collect_checksums(directory) -> dict:
    root = Path(directory)
    return {str(p.relative_to(root)): file_sha256(p) for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


def verify_manifest(directory) -> list[str]:
    """Files whose checksum no longer matches; empty when the run directory is intact."""
    man = RunManifest.read(directory)
    bad = []
    for name, digest in man.checksums.items():
        p = Path(directory) / name
        if not p.is_file() or file_sha256(p) != digest:
            bad.append(name)
    return bad


# ---------------------------------------------------------------------------
# builders


def build_potential(name: str, amplitude: float):
    from .hamiltonians import constant, cosine, sine

    table = {"cos": cosine, "sin": sine}
    if name in ("zero", "none"):
        return constant()
    if name not in table:
        raise ConfigError("potential", f"expected cos, sin or zero, got {name!r}")
    return table[name](amplitude)


def build_hamiltonian(p: dict):
    from .hamiltonians import eikonal, make_lty, power_plus_potential

    pot = build_potential(p["potential"], p["amplitude"])
    fam = p["family"]
    if fam == "PowerPlusPotential":
        return power_plus_potential(p["q"], pot)
    if fam == "Eikonal":
        return eikonal(pot)
    if fam == "LTYNonconvex":
        return make_lty(p["lty_s"])
    raise ConfigError("family", f"unsupported Hamiltonian family {fam!r}")


def build_u0(name: str):
    funcs = {"sin": lambda x: np.sin(2 * np.pi * x), "cos": lambda x: np.cos(2 * np.pi * x),
             "zero": lambda x: np.zeros_like(x), "tent": lambda x: 0.5 - np.abs(x - np.floor(x) - 0.5)}
    if name not in funcs:
        raise ConfigError("u0", f"expected one of {sorted(funcs)}, got {name!r}")
    return funcs[name]


def build_path(p: dict, horizon: float, seed: int):
    from .paths import PiecewiseLinearPath, brownian_sample, interpolate, line, takagi_like

    kind = p["path"]
    if kind == "line":
        return line(p["path_slope"], horizon)
    if kind == "wave":
        return interpolate(lambda t: np.sin(2 * np.pi * t) / np.pi, horizon, p["path_eta"])
    if kind == "takagi":
        return takagi_like(p["theta"], p["depth"], horizon)
    if kind == "brownian":
        return brownian_sample(p["path_eta"], horizon, seed)
    if kind == "file":
        if not p["path_file"]:
            raise ConfigError("path_file", "required when path = file")
        return PiecewiseLinearPath.from_csv(p["path_file"])
    raise ConfigError("path", f"expected line, wave, takagi, brownian or file, got {kind!r}")


def _eta_rule(text: str, scale: float = 1.0):
    """'optimal', or an exponent a giving eta = scale * eps**a."""
    if text == "optimal":
        return text
    try:
        expo = _parse_float(text)
    except ValueError:
        raise ConfigError("eta_rule", f"expected 'optimal' or an exponent, got {text!r}") from None
    return lambda e: scale * e**expo


# ---------------------------------------------------------------------------
# subcommands; each returns (passed, summary)


def _table(spec, p: dict, workers: int):
    from .cell_problem import CellConfig, effective_table

    grid = np.linspace(p["p_min"], p["p_max"], p["p_points"])
    cfg = CellConfig(method=p["method"], n=p["cell_n"], tol=p["cell_tol"], strict=False)
    return effective_table(spec, grid, cfg, workers=workers)


def run_solve(cfg: RunConfig):
    from .grid_solver import Grid1D, GridFunction, SchemeConfig, default_scheme
    from .pathwise import solve_pathwise

    p = cfg.params
    spec = build_hamiltonian(p)
    path = build_path(p, p["horizon"], cfg.seed)
    grid = Grid1D(1.0, p["n"])
    u0 = GridFunction.from_function(grid, build_u0(p["u0"]))
    scheme = default_scheme(spec) if not p["flux"] else SchemeConfig(flux=p["flux"])
    cps = p["checkpoints"] or [path.horizon]
    rec = solve_pathwise(spec, p["eps"], path, u0, cps, scheme)
    rec.export(cfg.out / "solution")
    path.to_csv(cfg.out / "path.csv")
    return True, {"final_sup": float(np.max(np.abs(rec.final.full()))), "pieces": len(rec.segments)}


def run_effective(cfg: RunConfig):
    p = cfg.params
    table = _table(build_hamiltonian(p), p, cfg.params["workers"])
    table.to_csv(cfg.out / "effective.csv")
    ok = not bool(np.any(table.flagged))
    return ok, {"convex": table.convex, "flagged": int(np.sum(table.flagged)),
                "max_residual": float(np.max(table.residual))}


def run_consistency(cfg: RunConfig):
    from .cell_problem import consistency_check

    p = cfg.params
    table = _table(build_hamiltonian(p), p, p["workers"])
    table.to_csv(cfg.out / "consistency.csv")
    rep = consistency_check(table, p["factor"])
    # a detected gap is a finding, not a failure
    return True, rep.summary()


def _sweep_args(cfg: RunConfig):
    from .cell_problem import CellConfig, effective_table

    p = cfg.params
    spec = build_hamiltonian(p)
    table = effective_table(spec, np.linspace(p["p_min"], p["p_max"], p["p_points"]),
                            CellConfig(method=p["method"], n=p["cell_n"], tol=p["cell_tol"], strict=False),
                            workers=p["workers"])
    # the signal runs past T so W^eta can keep its exact step
    path = build_path(p, 2.0 * p["horizon"], cfg.seed)
    return spec, path, table


def run_rate_sweep(cfg: RunConfig):
    from .experiments import rate_sweep

    p = cfg.params
    spec, path, table = _sweep_args(cfg)
    rule = _eta_rule(p["eta_rule"], p["eta_scale"])
    rep = rate_sweep(spec, path, build_u0(p["u0"]), p["horizon"], p["epsilon_list"], rule,
                     p["beta"], p["holder"], n_cell=p["n_cell"], n_hom=p["n_hom"], table=table)
    rep.config.update(seed=cfg.seed, eta_rule=p["eta_rule"], eta_scale=p["eta_scale"])
    rep.write(cfg.out)
    return rep.passed, {"errors": rep.errors, "slope": rep.slope, "inversions": rep.inversions}


def run_mild_sweep(cfg: RunConfig):
    from .experiments import mild_sweep

    p = cfg.params
    spec, path, table = _sweep_args(cfg)
    rule = _eta_rule(p["eta_rule"], p["eta_scale"])
    rep = mild_sweep(spec, path, build_u0(p["u0"]), p["horizon"], p["epsilon_list"], rule,
                     p["beta"], n_cell=p["n_cell"], n_hom=p["n_hom"], table=table)
    rep.config.update(seed=cfg.seed, eta_rule=p["eta_rule"], eta_scale=p["eta_scale"])
    rep.write(cfg.out)
    # a gated coupling is reported, not failed
    return rep.passed or rep.assumption_violated, {"errors": rep.errors, "assumption_violated":
                                                   rep.assumption_violated}


def run_blowup(cfg: RunConfig):
    from .experiments import blowup_experiment

    p = cfg.params
    rep = blowup_experiment(None, p["theta"], p["sigma"], p["t"], p["epsilon_list"], p["mode"], p["nu"],
                            p["n_cell"])
    rep.write(cfg.out)
    return rep.passed, {"scaled": rep.scaled, "kappa": rep.kappa, "ratio": rep.stability_ratio}


def run_donsker(cfg: RunConfig):
    from .experiments import donsker_experiment

    p = cfg.params
    rep = donsker_experiment(p["eps"], p["eta"], p["samples"], tuple(p["times"]), cfg.seed, p["x1"], p["x2"],
                             n_cell=p["n_cell"], ks_threshold=p["ks_threshold"], coverage_target=p["coverage"])
    rep.write(cfg.out)
    return rep.passed, {"ks_u": rep.ks_u, "coverage": rep.coverage, "fitted_C": rep.fitted_C}


def run_square_wave(cfg: RunConfig):
    from .experiments import square_wave_experiment

    p = cfg.params
    ee, me = p["eta_exponent"], p["mu_exponent"]
    rep = square_wave_experiment(p["epsilon_list"], lambda e: e**ee, lambda h: h**me, p["horizon"],
                                 n_cell=p["n_cell"])
    rep.write(cfg.out)
    return rep.passed, {"deviation": rep.deviation, "constants": rep.constants}


def run_distance(cfg: RunConfig):
    from .variational import distance_function

    p = cfg.params
    spec = build_hamiltonian(p)
    ys = np.asarray(p["y_list"], dtype=float)
    res = [distance_function(spec, p["x"], y, p["n_steps"], p["restarts"], seed=cfg.seed) for y in ys]
    vals = np.array([r.value for r in res])
    ok = all(r.passed for r in res)
    write_csv(cfg.out / "distance.csv", ["y", "L", "straight_line", "lower_ok", "upper_ok"],
              [ys, vals, [r.straight_line for r in res], [r.lower_ok for r in res], [r.upper_ok for r in res]])
    return ok, {"values": vals.tolist()}


def run_paths(cfg: RunConfig):
    from .paths import PathFamilySpec, gen_path, modulus_table

    p = cfg.params
    fam = PathFamilySpec(p["family"], p["theta"], p["depth"], p["eta"], p["mu"], cfg.seed, p["x1"], p["x2"])
    out = gen_path(fam, p["horizon"])
    paths = out if isinstance(out, tuple) else (out,)
    summary = {"family": fam.to_config()}
    for i, w in enumerate(paths, 1):
        w.to_csv(cfg.out / f"path_{i}.csv")
        lags = np.geomspace(min(fam.eta, p["horizon"]) / 4, p["horizon"], 24)
        mod = modulus_table(w, p["horizon"], lags)
        write_csv(cfg.out / f"modulus_{i}.csv", ["lag", "omega"], [mod.lags, mod.values])
        summary[f"total_variation_{i}"] = w.total_variation()
    return True, summary


RUNNERS = {"solve": run_solve, "effective": run_effective, "consistency": run_consistency,
           "rate-sweep": run_rate_sweep, "mild-sweep": run_mild_sweep, "blowup": run_blowup,
           "donsker": run_donsker, "square-wave": run_square_wave, "distance": run_distance,
           "paths": run_paths}


def run(cfg: RunConfig) -> int:
    """Execute one run, write its manifest, return the exit status."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    passed, summary = RUNNERS[cfg.subcommand](cfg)
    (cfg.out / "summary.json").write_text(
        json.dumps({"passed": bool(passed), **summary}, indent=2, sort_keys=True, default=_plain) + "\n")
    man = RunManifest(cfg.snapshot(), __version__, time.time() - start, "pass" if passed else "fail",
                      collect_checksums(cfg.out))
    man.write(cfg.out)
    log.info("%s: %s (%s)", cfg.subcommand, man.status, cfg.out)
    return EXIT_PASS if passed else EXIT_FAIL


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rough-hj", description="Pathwise Hamilton-Jacobi experiments")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="flat key = value file; flags override it")
    parser.add_argument("--dir", help="run directory (verify only)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.subcommand == "verify":
            if not args.dir:
                raise ConfigError("dir", "required by verify")
            bad = verify_manifest(args.dir)
            for name in bad:
                log.error("checksum mismatch: %s", name)
            return EXIT_PASS if not bad else EXIT_FAIL
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(args.subcommand, text, rest)
        return run(cfg)
    except Exception as exc:  # every failure maps to exit 1 with its module context
        log.error("%s: %s", type(exc).__module__ + "." + type(exc).__name__, exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
