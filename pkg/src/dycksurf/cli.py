"""Command-line interface: build the extremal surface, certify its
systole, run the area optimizations and capacity bounds, and export
machine-readable reports.

Exit codes: 0 success, 2 bad input, 3 computation failure, 4 a
certification check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass

from . import __version__, capacity, constants, hexopt, surface
from .capacity import CapacityError
from .geodesic import GeodesicError, enumerate_closed_geodesics, geodesics_to_json
from .hexopt import HexOptError
from .surface import SurfaceError

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_COMPUTE = 3
EXIT_CHECK_FAILED = 4


class BadInput(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    digits: int = 15
    lmax: float = 1.2
    mesh_h: float = 0.005
    tol: float = 1e-8
    budget: int = 400_000
    seed: int = 0
    fmt: str = "json"
    out: str | None = None

    def __post_init__(self):
        if self.digits < 15:
            raise BadInput("digits must be at least 15")
        if self.lmax <= 0:
            raise BadInput("lmax must be positive")
        if self.mesh_h <= 0:
            raise BadInput("mesh-h must be positive")
        if self.tol <= 0:
            raise BadInput("tol must be positive")
        if self.budget <= 0:
            raise BadInput("budget must be positive")
        if self.fmt not in ("json", "csv", "text"):
            raise BadInput(f"unknown format {self.fmt!r}")

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def load_config_file(path: str) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise BadInput(f"{path}:{ln}: expected 'key = value'")
            key, val = (x.strip() for x in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _CONFIG_FIELDS:
                raise BadInput(f"{path}:{ln}: unknown key {key!r}")
            out[key] = val
    return out


def build_config(args) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    flag_map = {
        "digits": getattr(args, "digits", None),
        "lmax": getattr(args, "lmax", None),
        "mesh_h": getattr(args, "mesh_h", None),
        "tol": getattr(args, "tol", None),
        "budget": getattr(args, "budget", None),
        "seed": getattr(args, "seed", None),
        "fmt": getattr(args, "format", None),
        "out": getattr(args, "out", None),
    }
    for key, val in flag_map.items():
        if val is not None:
            values[key] = val
    for key in ("digits", "budget", "seed"):
        if key in values:
            values[key] = int(values[key])
    for key in ("lmax", "mesh_h", "tol"):
        if key in values:
            values[key] = float(values[key])
    return RunConfig(**values)


# -- report plumbing ----------------------------------------------------


def _jsonable(value):
    if hasattr(value, "item"):  # numpy scalar
        return value.item()
    raise TypeError(f"not JSON serializable: {value!r}")


def _render(report: dict, cfg: RunConfig) -> str:
    if cfg.fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2,
                          default=_jsonable) + "\n"
    if cfg.fmt == "csv":
        rows = report.get("constants")
        if rows is None:
            raise BadInput("csv format is only defined for `constants`")
        lines = ["name,value,exact_form"]
        for r in rows:
            exact = (r["exact_form"] or "").replace(",", ";")
            lines.append(f"{r['name']},{r['value']},{exact}")
        return "\n".join(lines) + "\n"
    return _render_text(report)


def _render_text(report: dict, indent: int = 0) -> str:
    pad = "  " * indent
    lines = []
    for key in sorted(report):
        val = report[key]
        if isinstance(val, dict):
            lines.append(f"{pad}{key}:")
            lines.append(_render_text(val, indent + 1))
        elif isinstance(val, list):
            lines.append(f"{pad}{key}: {json.dumps(val)}")
        else:
            lines.append(f"{pad}{key}: {val}")
    return "\n".join(lines)


def _emit(report: dict, cfg: RunConfig) -> None:
    text = _render(report, cfg)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _base_report(cfg: RunConfig) -> dict:
    return {"version": __version__, "config_digest": cfg.digest()}


# -- subcommands --------------------------------------------------------


def cmd_constants(cfg: RunConfig, args) -> int:
    rows = []
    for name in constants.constant_names():
        value, exact = constants.named_constant(name, cfg.digits)
        rows.append({"name": name, "value": value, "exact_form": exact})
    report = _base_report(cfg)
    report["constants"] = rows
    _emit(report, cfg)
    return EXIT_OK


def cmd_build(cfg: RunConfig, args) -> int:
    s = surface.build_extremal_dyck()
    report = _base_report(cfg)
    report["surface"] = {
        "name": s.name,
        "faces": len(s.faces),
        "edges": s.n_edges,
        "vertices": s.n_vertices,
        "euler_characteristic": s.euler_characteristic,
        "orientable": s.orientable,
        "area": s.area,
        "gauss_bonnet_residual": s.gauss_bonnet_residual(),
        "cone_angles": sorted(round(a, 12) for a in s.vertex_angles
                              if abs(a - 2 * math.pi) > 1e-9),
    }
    _emit(report, cfg)
    return EXIT_OK


def cmd_systole(cfg: RunConfig, args) -> int:
    s = surface.build_extremal_dyck()
    res = enumerate_closed_geodesics(s, cfg.lmax, cfg.budget)
    report = _base_report(cfg)
    report["search"] = {"lmax": cfg.lmax, "complete": res.complete,
                       "count": len(res.paths)}
    report["geodesics"] = geodesics_to_json(res.paths)
    if not res.paths:
        report["message"] = f"no closed geodesic <= {cfg.lmax}"
        _emit(report, cfg)
        return EXIT_COMPUTE
    report["systole"] = res.paths[0].length
    _emit(report, cfg)
    return EXIT_OK if res.complete else EXIT_COMPUTE


def cmd_hexopt(cfg: RunConfig, args) -> int:
    p = constants.SurfaceParameters.paper()
    area = constants.constant_value("area_extremal")
    cert = hexopt.hexopt_certificate(p.h, p.theta, area)
    report = _base_report(cfg)
    report["hexopt"] = cert
    _emit(report, cfg)
    ok = all(c["margin"] >= 0.006 for c in cert["cases"].values())
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_capacity(cfg: RunConfig, args) -> int:
    report = _base_report(cfg)
    code = EXIT_OK
    target = args.target
    if target == "upper":
        res = capacity.flat_capacity_upper(mesh_check=args.mesh_check,
                                           mesh_h=cfg.mesh_h * 2)
        report["upper"] = {
            "closed_form": res.closed_form.value,
            "mesh": res.mesh.value if res.mesh else None,
            "consistent": res.consistent,
        }
        if not res.consistent:
            code = EXIT_CHECK_FAILED
    elif target == "lower":
        est = capacity.muetzel_bound(capacity.hyperbolic_collar_profile(),
                                     tol=cfg.tol)
        report["lower"] = {"value": est.value,
                          "error_estimate": est.error_estimate,
                          "romberg": est.meta["romberg"]}
    elif target == "fem":
        flat = capacity.fem_capacity(surface.build_collar_flat(),
                                     mesh_h=max(cfg.mesh_h, 0.06))
        chart = capacity.fermi_chart_annulus(
            capacity.hyperbolic_collar_profile())
        hyp = capacity.fem_capacity(chart, mesh_h=10.0)
        report["fem"] = {"flat_collar": flat.value,
                        "hyperbolic_chart": hyp.value}
    else:  # certify
        cert = capacity.separation_certificate(include_fem=args.fem)
        report["separation"] = cert
        if not cert["separated"]:
            code = EXIT_CHECK_FAILED
    _emit(report, cfg)
    return code


# -- verification pipeline ----------------------------------------------


def _check(checks: list, name: str, value, ok: bool, tolerance=None,
           provenance: str = "closed-form") -> bool:
    checks.append({"name": name, "value": value, "pass": bool(ok),
                   "tolerance": tolerance, "provenance": provenance})
    return bool(ok)


def run_pipeline(cfg: RunConfig, perturb_h: float = 0.0) -> tuple[dict, str | None]:
    """Build -> systole -> area -> hexopt -> capacity -> certificate.

    Returns the report and the name of the first failing stage (or None).
    """
    report = _base_report(cfg)
    checks: list[dict] = []
    first_fail: str | None = None

    def stage_fail(stage: str):
        nonlocal first_fail
        if first_fail is None:
            first_fail = stage

    p = constants.SurfaceParameters.paper()
    if perturb_h:
        p = dataclasses.replace(p, h=p.h + perturb_h)
    residuals = constants.check_defining_relations(p)
    worst = max(abs(r) for _, r in residuals)
    if not _check(checks, "defining-relation residuals", worst,
                  worst <= 1e-9, 1e-9):
        stage_fail("build")
        report["checks"] = checks
        report["first_failure"] = first_fail
        return report, first_fail

    s = surface.build_extremal_dyck(p)
    ok = s.euler_characteristic == -1 and not s.orientable
    ok &= abs(s.gauss_bonnet_residual()) <= 1e-9
    if not _check(checks, "topology and curvature bookkeeping",
                  s.gauss_bonnet_residual(), ok, 1e-9, "mesh"):
        stage_fail("build")

    area_mesh = s.area
    area_closed = constants.constant_value("area_extremal")
    area_direct = 2 * p.delta + 3 * p.h * math.sqrt(1 - 4 * p.h * p.h)
    ok = abs(area_closed - area_direct) <= 1e-12
    ok &= abs(area_mesh - area_closed) <= 1e-9
    if not _check(checks, "area (two closed forms and mesh)", area_mesh,
                  ok, 1e-12):
        stage_fail("area")

    res = enumerate_closed_geodesics(s, cfg.lmax, cfg.budget)
    if not res.paths:
        _check(checks, "systole search", None, False, None, "mesh")
        report["systole"] = {
            "message": f"no closed geodesic <= {cfg.lmax}",
            "complete": res.complete,
        }
        stage_fail("systole")
    else:
        sys_len = res.paths[0].length
        ok = res.complete and abs(sys_len - 1.0) <= 1e-6
        ok &= all(g.length > 1.0 - 1e-6 for g in res.paths)
        if not _check(checks, "unit systole certified", sys_len, ok, 1e-6,
                      "mesh"):
            stage_fail("systole")
        ratio = sys_len ** 2 / area_mesh
        ratio_closed = constants.constant_value("systolic_ratio_dyck")
        if not _check(checks, "systolic ratio", ratio,
                      abs(ratio - ratio_closed) <= 1e-6, 1e-6):
            stage_fail("systole")
        report["systole"] = {"value": res.paths[0].length,
                            "count": len(res.paths),
                            "complete": res.complete}

    hx = hexopt.minimize_hex((0.25, p.h, 0.25))
    closed_min = p.h * math.sqrt(1 - 4 * p.h * p.h)
    ok = abs(hx.area - closed_min) <= 1e-8
    ok &= abs(hx.angles[0] - p.theta) <= 1e-4
    ok &= abs(hx.angles[1] - (math.pi - 2 * p.theta)) <= 1e-4
    if not _check(checks, "hexagon minimum", hx.area, ok, 1e-8, "grid"):
        stage_fail("hexopt")
    tr = hexopt.optimize_mobius_tradeoff()
    ok = abs(tr.h_star - p.h) <= 1e-8 and abs(tr.residual) <= 1e-9
    if not _check(checks, "height tradeoff equilibrium", tr.h_star, ok, 1e-8):
        stage_fail("hexopt")
    cases = hexopt.case_bounds(p.h, area_closed)
    worst_margin = min(c.margin for c in cases.values())
    if not _check(checks, "alternative-decomposition margins", worst_margin,
                  worst_margin >= 0.006, 0.006):
        stage_fail("hexopt")

    upper = capacity.flat_capacity_upper(p, mesh_check=False)
    lower = capacity.muetzel_bound(capacity.hyperbolic_collar_profile(),
                                   tol=cfg.tol)
    ok = abs(upper.closed_form.value - 2.283093046469848) <= 1e-9
    if not _check(checks, "flat collar capacity upper",
                  upper.closed_form.value, ok, 1e-9):
        stage_fail("capacity")
    ok = abs(lower.value - 2.2946094708421385) <= 1e-9
    ok &= abs(lower.meta["romberg"] - lower.value) <= 1e-6
    if not _check(checks, "hyperbolic collar capacity lower", lower.value,
                  ok, 1e-9, "quadrature"):
        stage_fail("capacity")
    m_up = 2.29 - upper.closed_form.value
    m_lo = lower.value - 2.29
    if not _check(checks, "capacity separation margins", min(m_up, m_lo),
                  min(m_up, m_lo) >= 4e-3, 4e-3):
        stage_fail("certificate")

    report["area"] = area_mesh
    report["checks"] = checks
    report["first_failure"] = first_fail
    report["all_passed"] = first_fail is None
    return report, first_fail


def cmd_verify(cfg: RunConfig, args) -> int:
    report, first_fail = run_pipeline(cfg, perturb_h=args.perturb_h or 0.0)
    _emit(report, cfg)
    return EXIT_OK if first_fail is None else EXIT_CHECK_FAILED


def cmd_certify(cfg: RunConfig, args) -> int:
    report, first_fail = run_pipeline(cfg)
    p = constants.SurfaceParameters.paper()
    area = constants.constant_value("area_extremal")
    report["hexopt_certificate"] = hexopt.hexopt_certificate(
        p.h, p.theta, area)
    report["separation_certificate"] = capacity.separation_certificate()
    _emit(report, cfg)
    return EXIT_OK if first_fail is None else EXIT_CHECK_FAILED


def cmd_export(cfg: RunConfig, args) -> int:
    if not cfg.out:
        raise BadInput("export requires --out")
    target = args.target
    if target == "surface":
        surface.build_extremal_dyck().save_json(cfg.out)
    elif target == "annulus":
        surface.build_collar_flat().save_json(cfg.out)
    elif target == "geodesics":
        s = surface.build_extremal_dyck()
        res = enumerate_closed_geodesics(s, cfg.lmax, cfg.budget)
        with open(cfg.out, "w") as fh:
            json.dump(geodesics_to_json(res.paths), fh, indent=2,
                      sort_keys=True)
            fh.write("\n")
    elif target == "profile":
        prof = capacity.hyperbolic_collar_profile()
        ts = [prof.ell * i / 256 for i in range(256)]
        data = {"ell": prof.ell, "t": ts,
                "a": [prof.a(t) for t in ts],
                "b": [prof.b(t) for t in ts]}
        with open(cfg.out, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    # SUPPRESS defaults keep pre-subcommand flags from being clobbered by
    # the subparser's copy of the same option
    sup = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=sup,
                        help="flat key = value config file")
    common.add_argument("--digits", type=int, default=sup,
                        help="decimal digits (>= 15)")
    common.add_argument("--lmax", type=float, default=sup,
                        help="geodesic search cutoff")
    common.add_argument("--mesh-h", dest="mesh_h", type=float, default=sup,
                        help="distance-field mesh size")
    common.add_argument("--tol", type=float, default=sup,
                        help="quadrature tolerance")
    common.add_argument("--budget", type=int, default=sup,
                        help="unfolding step budget")
    common.add_argument("--seed", type=int, default=sup,
                        help="seed for randomized checks")
    common.add_argument("--format", choices=("json", "csv", "text"),
                        default=sup, help="output format (default json)")
    common.add_argument("--json", dest="format", action="store_const",
                        const="json", default=sup,
                        help="shorthand for --format json")
    common.add_argument("--out", default=sup,
                        help="write the report to this path")
    ap = argparse.ArgumentParser(
        prog="dycksurf", parents=[common],
        description="Extremal Dyck's surface: systole, area optimization "
                    "and collar capacity certificates.")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("constants", parents=[common],
                   help="constant registry with exact forms")
    sub.add_parser("build", parents=[common],
                   help="build the surface and report invariants")
    sub.add_parser("systole", parents=[common],
                   help="closed-geodesic search up to --lmax")
    sub.add_parser("hexopt", parents=[common],
                   help="hexagon/tradeoff/case certificates")
    cap = sub.add_parser("capacity", parents=[common],
                         help="collar capacity estimates")
    cap.add_argument("target", nargs="?", default="certify",
                     choices=("upper", "lower", "fem", "certify"))
    cap.add_argument("--mesh-check", action="store_true",
                     help="cross-check the closed form on the mesh")
    cap.add_argument("--fem", action="store_true",
                     help="include FEM values in the certificate")
    sub.add_parser("certify", parents=[common],
                   help="full machine-readable certificate")
    ver = sub.add_parser("verify", parents=[common],
                         help="run the whole pipeline and check")
    ver.add_argument("--perturb-h", dest="perturb_h", type=float,
                     default=0.0,
                     help="test hook: offset h to force a residual failure")
    exp = sub.add_parser("export", parents=[common],
                         help="write JSON artifacts")
    exp.add_argument("target",
                     choices=("surface", "annulus", "geodesics", "profile"))
    return ap


_HANDLERS = {
    "constants": cmd_constants,
    "build": cmd_build,
    "systole": cmd_systole,
    "hexopt": cmd_hexopt,
    "capacity": cmd_capacity,
    "certify": cmd_certify,
    "verify": cmd_verify,
    "export": cmd_export,
}


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    try:
        cfg = build_config(args)
    except (BadInput, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        return _HANDLERS[args.command](cfg, args)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (SurfaceError, GeodesicError, HexOptError, CapacityError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
