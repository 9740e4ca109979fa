"""Command-line entry point: build, analyze, normalize, curvature, verify."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .branch import analyze, distinguished_coefficient, extract_branch_data
from .builder import (RepresentationData, SurfaceMap, build_from_representation,
                      build_null_minimal, build_weierstrass_minimal, leading_terms, sphere_patch)
from .errors import CHECK_FAILURE, INVALID_INPUT, NUMERICAL_FAILURE, BranchGeoError, ConfigError
from .fields import DiskGrid
from .geometry import classify_branch_curvature
from .iohelpers import write_csv, write_json
from .jets import BiJet
from .normalize import beltrami_residual, build_normalizing_diffeo, normalized_components
from .suites import HEADER, SUITES, run_suite

SCHEMA_VERSION = 1
COMMANDS = ("build", "analyze", "normalize", "curvature", "verify")
DEFAULT_TOLERANCES = {
    "composition": 1e-6,      # max |a(c(w)) - w^(s+1)| on the half disk
    "beltrami": 1e-6,         # Beltrami residual with grid derivatives
    "reconstruction": 1e-6,   # |f_h(c(w)) - line integral of b_h|
    "c0_min": 0.5,            # lower bound for |c(w)/w| at 0
}
CONFIG_KEYS = {"schema_version", "command", "surface", "grid", "jet_order", "seed", "suite", "tolerances", "out"}
SURFACE_KINDS = ("weierstrass", "null", "pure", "sphere", "representation", "file")


@dataclass
class RunConfig:
    command: str
    surface: dict | None = None
    grid: dict = field(default_factory=dict)
    jet_order: int | None = None
    seed: int = 0
    suite: str | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out: Path = Path("out")
    base_dir: Path = Path(".")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return int(self.grid.get("n_r", 128)), int(self.grid.get("n_theta", 128))


# ------------------------------------------------------------------ config
def _complex(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError("complex values are [re, im] pairs", value=v)
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def load_config(args) -> RunConfig:
    raw = {}
    base = Path(".")
    if args.config:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found", path=str(path)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc.msg}", line=exc.lineno) from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}", found=raw.get("schema_version"))
        unknown = sorted(set(raw) - CONFIG_KEYS)
        if unknown:
            raise ConfigError("unknown config keys", keys=unknown)
        if raw.get("command", args.command) != args.command:
            raise ConfigError("config command differs from the command line", config=raw["command"])
        base = path.parent

    tol = dict(DEFAULT_TOLERANCES)
    extra = raw.get("tolerances", {})
    if set(extra) - set(DEFAULT_TOLERANCES):
        raise ConfigError("unknown tolerance names", names=sorted(set(extra) - set(DEFAULT_TOLERANCES)))
    tol.update({k: float(v) for k, v in extra.items()})

    grid = dict(raw.get("grid") or {})
    if args.grid:
        try:
            nr, nt = (int(x) for x in args.grid.split(","))
        except ValueError:
            raise ConfigError("--grid expects nr,ntheta", value=args.grid) from None
        grid.update(n_r=nr, n_theta=nt)
    if args.radius is not None:
        grid["radius"] = args.radius
    if "radius" in grid and not float(grid["radius"]) > 0:
        raise ConfigError("radius must be positive", radius=grid["radius"])

    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer", seed=seed)
    jet_order = args.jet_order if args.jet_order is not None else raw.get("jet_order")
    if jet_order is not None and (not isinstance(jet_order, int) or jet_order < 1):
        raise ConfigError("jet order must be a positive integer", jet_order=jet_order)

    out = Path(args.out) if args.out else Path(raw.get("out", "out"))
    cfg = RunConfig(args.command, raw.get("surface"), grid, jet_order, seed,
                    args.suite or raw.get("suite"), tol, out, base)
    if cfg.command == "verify":
        if cfg.suite is None:
            raise ConfigError("verify needs --suite", choices=sorted(SUITES) + ["all"])
        if cfg.suite not in SUITES and cfg.suite != "all":
            raise ConfigError(f"unknown suite {cfg.suite!r}", choices=sorted(SUITES) + ["all"])
    elif cfg.surface is None:
        raise ConfigError(f"{cfg.command} needs a config with a 'surface' entry")
    elif not isinstance(cfg.surface, dict) or cfg.surface.get("kind") not in SURFACE_KINDS:
        raise ConfigError("surface.kind must be one of " + ", ".join(SURFACE_KINDS))
    return cfg


# ----------------------------------------------------------------- surfaces
def _int(spec, key, default=None, lo=1):
    v = spec.get(key, default)
    if not isinstance(v, int) or v < lo:
        raise ConfigError(f"surface.{key} must be an integer >= {lo}", value=v)
    return v


def make_surface(cfg: RunConfig) -> SurfaceMap:
    spec = cfg.surface
    kind = spec["kind"]
    shape = cfg.grid_shape
    N = cfg.jet_order
    R = float(cfg.grid.get("radius", 1.0))
    if kind == "weierstrass":
        return build_weierstrass_minimal(_int(spec, "s"), _int(spec, "k"), float(spec.get("scale", 1.0)),
                                         _int(spec, "n", 3, 3), N, R, shape)
    if kind == "null":
        gs = [[_complex(c) for c in g] for g in spec.get("g", [])]
        if not gs:
            raise ConfigError("surface.g needs at least one coefficient list")
        return build_null_minimal(_int(spec, "s"), gs, N, R, shape)
    if kind == "pure":
        s, n = _int(spec, "s"), _int(spec, "n", 3, 3)
        order = N or 2 * s + 6
        re_lead, im_lead = leading_terms(s, order)
        comps = [re_lead, im_lead] + [BiJet.zeros(order)] * (n - 2)
        return SurfaceMap(comps, s, R, _grid(cfg, R), label=f"pure branch s={s}")
    if kind == "sphere":
        return sphere_patch(_int(spec, "s"), float(spec.get("t", 0.5)), N, float(cfg.grid.get("radius", 0.5)), shape)
    if kind == "representation":
        if "path" in spec:
            data_dict = _read_json(cfg.base_dir / spec["path"])
            base = (cfg.base_dir / spec["path"]).parent
        else:
            data_dict, base = spec.get("data"), cfg.base_dir
        if not isinstance(data_dict, dict):
            raise ConfigError("representation surfaces need 'data' or 'path'")
        try:
            data = RepresentationData.from_dict(data_dict, base_dir=base)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed representation data: {exc}") from None
        return build_from_representation(data, N, R, shape)
    # a SurfaceMap JSON written by `build`
    if "path" not in spec:
        raise ConfigError("file surfaces need a 'path'")
    try:
        f = SurfaceMap.from_dict(_read_json(cfg.base_dir / spec["path"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed surface map: missing {exc}") from None
    if N is not None and N != f.order:
        if N > f.order and not f.is_polynomial():
            raise ConfigError("cannot extend a non-polynomial map to a higher jet order", order=f.order)
        f = SurfaceMap([c.extend(N) if N > c.order else c.truncate(N) for c in f.components],
                       f.s, f.radius, f.grid, f.metric, f.label)
    if "radius" in cfg.grid or "n_r" in cfg.grid or f.grid is None:
        r = float(cfg.grid.get("radius", f.radius))
        f = f.with_radius(r, _grid(cfg, r))
    return f


def _grid(cfg: RunConfig, radius: float) -> DiskGrid:
    g = cfg.grid
    return DiskGrid(radius, *cfg.grid_shape, mode=g.get("mode", "polar"), rho=g.get("rho"), eps=g.get("eps"))


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"input file {path} not found", path=str(path)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg}", path=str(path)) from None


# ----------------------------------------------------------------- commands
def cmd_build(cfg: RunConfig) -> tuple[int, dict]:
    f = make_surface(cfg)
    paths = [write_json(cfg.out / "surface_map.json", f.to_dict()), f.sample().to_csv(cfg.out / "surface_samples.csv")]
    return 0, {"radius": f.radius, "order": f.order, "n": f.n, "s": f.s, "files": [str(p) for p in paths]}


def cmd_analyze(cfg: RunConfig) -> tuple[int, dict]:
    f = make_surface(cfg)
    rep = analyze(f).to_dict()
    path = write_json(cfg.out / "branch_report.json", rep)
    bad = rep["estimate"].get("status") == "fail" or not (rep["flags"]["frontal_ok"] and rep["flags"]["quasiregular_ok"])
    return (CHECK_FAILURE if bad else 0), {"report": str(path), "s": rep["s"], "iota": rep["iota"], "rho": rep["rho"]}


def cmd_normalize(cfg: RunConfig) -> tuple[int, dict]:
    f = make_surface(cfg)
    bd = extract_branch_data(f)
    dif = build_normalizing_diffeo(f, bd)
    varpi = distinguished_coefficient(bd)
    nc = normalized_components(f, bd, dif, seed=cfg.seed % 2 ** 32)
    tol = cfg.tolerances
    res = {"composition": dif.composition_residual(0.5),
           "roundtrip": dif.roundtrip_residual(0.5),
           "beltrami": float(beltrami_residual(dif, varpi.grid, "grid").values.max()),
           "beltrami_exact": float(beltrami_residual(dif, varpi.grid, "exact").values.max()),
           "reconstruction": nc.reconstruction_residual}
    c0 = dif.c0_at_zero
    checks = {"composition": bool(res["composition"] <= tol["composition"]),
              "beltrami": bool(res["beltrami"] <= tol["beltrami"]),
              "reconstruction": bool(res["reconstruction"] <= tol["reconstruction"]),
              "c0": bool(abs(c0) > tol["c0_min"])}
    report = {"s": f.s, "domain_radius": dif.domain_radius, "c0_at_zero": [c0.real, c0.imag],
              "c_jet_degree": dif.jet_degree.to_json(), "max_root_argument": dif.max_arg,
              "b_at_zero": [[complex(v).real, complex(v).imag] for v in nc.b_at_zero],
              "b_jets": [None if j is None else j.to_dict(tol=1e-14) for j in nc.b_jets],
              "residuals": res, "tolerances": tol, "checks": checks}
    paths = list(dif.to_csv(cfg.out)) + [nc.b_grid.to_csv(cfg.out / "normalized_b.csv"),
                                         write_json(cfg.out / "normalize_report.json", report)]
    status = 0 if all(checks.values()) else CHECK_FAILURE
    return status, {"residuals": res, "files": [str(p) for p in paths]}


def cmd_curvature(cfg: RunConfig) -> tuple[int, dict]:
    f = make_surface(cfg)
    rep = classify_branch_curvature(f)
    paths = rep.write(cfg.out)
    return (0 if rep.agrees else CHECK_FAILURE), {
        "predicted": rep.predicted, "empirical": rep.empirical, "growth_exponent": rep.growth_exponent,
        "files": [str(p) for p in paths]}


def cmd_verify(cfg: RunConfig) -> tuple[int, dict]:
    rows = run_suite(cfg.suite, cfg.seed)
    name = cfg.suite
    table = write_csv(cfg.out / f"verify_{name}.csv", HEADER, [c.row() for c in rows])
    summary = {"suite": name, "seed": cfg.seed, "passed": sum(c.passed for c in rows), "total": len(rows),
               "failed": [c.name for c in rows if not c.passed]}
    js = write_json(cfg.out / f"verify_{name}.json", {**summary, "rows": [dict(zip(HEADER, c.row())) for c in rows]})
    return (0 if not summary["failed"] else CHECK_FAILURE), {**summary, "files": [str(table), str(js)]}


HANDLERS = {"build": cmd_build, "analyze": cmd_analyze, "normalize": cmd_normalize,
            "curvature": cmd_curvature, "verify": cmd_verify}


def run(cfg: RunConfig) -> tuple[int, dict]:
    return HANDLERS[cfg.command](cfg)


# --------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="branchgeo", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration (schema_version 1)")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="seed for randomized suites (unsigned 64-bit)")
    p.add_argument("--suite", help="verification suite: " + ", ".join(sorted(SUITES)) + ", all")
    p.add_argument("--grid", help="grid resolution as nr,ntheta")
    p.add_argument("--radius", type=float, help="disk radius R")
    p.add_argument("--jet-order", dest="jet_order", type=int, help="jet truncation order N")
    return p


def _fail(exc_dict: dict, status: int, out: Path | None) -> int:
    exc_dict["exit_status"] = status
    text = json.dumps(exc_dict, sort_keys=True, default=str)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            write_json(out / "error.json", json.loads(text))
        except OSError:
            pass
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args)
        out = cfg.out
        status, summary = run(cfg)
    except BranchGeoError as exc:
        return _fail(exc.to_dict(), exc.exit_status, out)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        # LinAlgError subclasses ValueError, so it has to be caught first
        return _fail({"error": "numerical_failure", "message": str(exc)}, NUMERICAL_FAILURE, out)
    except ValueError as exc:
        return _fail({"error": "invalid_input", "message": str(exc)}, INVALID_INPUT, out)
    except Exception as exc:  # keep the error contract for anything unexpected
        return _fail({"error": "internal_error", "message": f"{type(exc).__name__}: {exc}"}, NUMERICAL_FAILURE, out)
    print(json.dumps({"command": cfg.command, "status": status, **summary}, sort_keys=True, default=str))
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
