"""Command-line interface.

Every command reads a JSON config (a path, or ``-`` for stdin), validates it
against a fixed schema, and writes a JSON report that embeds the resolved
config and the package version.  Grids and traces go to CSV files in
``--out-dir``.  Exit codes: 0 success, 1 domain failure or failed check,
2 usage or schema error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import SpectraError
from .numkernel import ToleranceProfile

log = logging.getLogger("spectra")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
AUDIT_LIMIT = 1e-6


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# serialization


def dumps(obj, indent=2, _level=0):
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps([obj.real, obj.imag], indent, _level)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


# ---------------------------------------------------------------------------
# schema helpers


def _keys(block, allowed, where, required=()):
    if not isinstance(block, dict):
        raise SchemaError(f"{where}: expected an object")
    extra = set(block) - set(allowed)
    if extra:
        raise SchemaError(f"{where}: unknown keys {sorted(extra)}")
    missing = [k for k in required if k not in block]
    if missing:
        raise SchemaError(f"{where}: missing keys {missing}")
    return block


def _complex(v, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    raise SchemaError(f"{where}: expected a number or [re, im]")


def _complex_list(v, where):
    if not isinstance(v, list):
        raise SchemaError(f"{where}: expected a list")
    return [_complex(x, f"{where}[{i}]") for i, x in enumerate(v)]


def _number(v, where, integer=False, positive=False):
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if not ok or isinstance(v, bool):
        raise SchemaError(f"{where}: expected {'an integer' if integer else 'a number'}")
    if positive and v <= 0:
        raise SchemaError(f"{where}: must be positive")
    return v


def _bool(v, where):
    if not isinstance(v, bool):
        raise SchemaError(f"{where}: expected true or false")
    return v


def _tolerances(cfg):
    base = ToleranceProfile.from_env()
    if "tol" not in cfg:
        return base
    block = cfg["tol"]
    if not isinstance(block, dict):
        raise SchemaError("tol: expected an object")
    try:
        merged = dict(base.to_dict(), **block)
        return ToleranceProfile.from_dict(merged)
    except (ValueError, TypeError) as e:
        raise SchemaError(f"tol: {e}") from None


def _curve(block, tol, where="curve"):
    from .curve import build_curve, curve_from_inner_points

    _keys(block, ("a", "inner", "branched", "scale", "tol", "fit_residual"), where)
    branched = _bool(block.get("branched", False), f"{where}.branched")
    if ("a" in block) == ("inner" in block):
        raise SchemaError(f"{where}: give exactly one of 'a' or 'inner'")
    if "tol" in block:
        tol = _tolerances({"tol": block["tol"]})
    if "a" in block:
        return build_curve(_complex_list(block["a"], f"{where}.a"), branched, tol)
    scale = _number(block.get("scale", 1.0), f"{where}.scale", positive=True)
    return curve_from_inner_points(_complex_list(block["inner"], f"{where}.inner"), branched, scale, tol)


# ---------------------------------------------------------------------------
# commands


def cmd_curve_check(cfg, args):
    tol = _tolerances(cfg)
    _keys(cfg, ("curve", "tol"), "config", required=("curve",))
    try:
        curve = _curve(cfg["curve"], tol)
    except SpectraError as e:
        return {"valid": False, "reason": e.reason, "message": str(e)}, EXIT_DOMAIN
    return {
        "valid": True,
        "genus": curve.genus,
        "branched": curve.branched,
        "branch_points": [complex(z) for z in curve.finite_branch_points()],
        "rho_sign": curve.rho_sign,
        "curve": curve.to_spec(),
    }, EXIT_OK


def cmd_periodicity(cfg, args):
    from .periodicity import crosscheck, spectral_data
    from .differentials import period_table

    tol = _tolerances(cfg)
    _keys(cfg, ("curve", "c", "tau", "singular", "tol"), "config", required=("curve", "c", "tau"))
    c = _complex(cfg["c"], "c")
    tau = _complex(cfg["tau"], "tau")
    singular = _bool(cfg.get("singular", False), "singular") or args.singular
    curve = _curve(cfg["curve"], tol)
    report = crosscheck(curve, c, tau, singular=singular, jobs=args.jobs)
    out = report.to_json()
    if args.out_dir:
        sd = spectral_data(curve, c, tau, singular)
        tab = period_table(curve, [sd.theta0, sd.psi0], sd.homology, tol.quad_tol)
        rows = ["form,cycle,index,re,im"]
        for name, k in (("theta0", 0), ("psi0", 1)):
            for cyc, vals in (("A", tab.A_periods[k]), ("B", tab.B_periods[k])):
                for j, z in enumerate(vals):
                    rows.append(f"{name},{cyc},{j},{z.real:.17g},{z.imag:.17g}")
        _write(args.out_dir, "period_table.csv", "\n".join(rows) + "\n")
    ok = report.pass_p1 and (report.pass_p2 is not False)
    return out, EXIT_OK if ok else EXIT_DOMAIN


def cmd_search(cfg, args):
    from .periodicity import GENUS1_SEED, SearchSeed, newton_search

    tol = _tolerances(cfg)
    _keys(cfg, ("seed", "mode", "targets", "max_iter", "res_tol", "tol"), "config")
    seed = GENUS1_SEED
    if "seed" in cfg:
        s = _keys(cfg["seed"], ("inner", "c", "tau", "branched", "scale"), "seed", ("inner", "c", "tau"))
        seed = SearchSeed(
            tuple(_complex_list(s["inner"], "seed.inner")),
            _complex(s["c"], "seed.c"),
            _complex(s["tau"], "seed.tau"),
            _bool(s.get("branched", False), "seed.branched"),
            _number(s.get("scale", 1.0), "seed.scale", positive=True),
        )
    mode = cfg.get("mode", "P1")
    if mode not in ("P1", "P1&P2"):
        raise SchemaError("mode: expected 'P1' or 'P1&P2'")
    targets = cfg.get("targets")
    if targets is not None and not (isinstance(targets, list) and all(isinstance(t, int) for t in targets)):
        raise SchemaError("targets: expected a list of integers")
    res = newton_search(
        seed, targets, mode, tol,
        res_tol=_number(cfg.get("res_tol", 1e-10), "res_tol", positive=True),
        max_iter=_number(cfg.get("max_iter", 40), "max_iter", integer=True, positive=True),
    )
    if args.out_dir:
        _write(args.out_dir, "search_trace.csv", res.trace_csv())
    out = {
        "curve": res.curve.to_spec(),
        "solution": res.solution.to_json(),
        "targets": [int(t) for t in res.targets],
        "residual": res.residual,
        "verified_residual": res.verified_residual,
        "iterations": res.iterations,
    }
    return out, EXIT_OK


def cmd_lax(cfg, args):
    from . import laxflow as lf

    _keys(cfg, ("algebra", "xi0", "random", "flow", "flatness", "tol", "embed_grid"), "config")
    spec = lf.algebra_from_dict(cfg.get("algebra", {"signs": [1, -1]}))
    if ("xi0" in cfg) == ("random" in cfg):
        raise SchemaError("config: give exactly one of 'xi0' or 'random'")
    if "xi0" in cfg:
        xi0 = lf.LoopElement.from_dict(cfg["xi0"]).check(spec)
    else:
        r = _keys(cfg["random"], ("d", "seed", "norm"), "random", ("d",))
        xi0 = lf.random_loop(
            spec, _number(r["d"], "random.d", integer=True, positive=True),
            _number(r.get("seed", 0), "random.seed", integer=True),
            _number(r.get("norm", 1.0), "random.norm", positive=True),
        )
    ode_tol = _tolerances(cfg).ode_tol
    fl = _keys(cfg.get("flow", {}), ("extent", "n"), "flow")
    g = np.linspace(0.0, _number(fl.get("extent", 1.0), "flow.extent", positive=True),
                    _number(fl.get("n", 5), "flow.n", integer=True, positive=True))
    field = lf.evolve(spec, xi0, g, g, ode_tol, jobs=args.jobs)
    comm = lf.commutativity_defect(spec, xi0, g, g, ode_tol, jobs=args.jobs)
    fb = _keys(cfg.get("flatness", {}), ("base", "h", "nodes"), "flatness")
    base = _complex(fb.get("base", [0.3, 0.2]), "flatness.base")
    flat = lf.flatness_report(
        spec, xi0, (base.real, base.imag),
        _number(fb.get("h", 1e-3), "flatness.h", positive=True),
        _number(fb.get("nodes", 7), "flatness.nodes", integer=True, positive=True),
    )
    out = {
        "d": xi0.d,
        "norm": xi0.norm2(spec),
        "drift": field.drift,
        "invariant_defect": field.invariant_defect,
        "commutativity": comm,
        "flatness": flat,
        "xi0": xi0.to_dict(),
    }
    if args.out_dir:
        _write(args.out_dir, "lax_field.csv", field.to_csv())
    if args.embed:
        eg = _keys(cfg.get("embed_grid", {}), ("extent", "n"), "embed_grid")
        ge = np.linspace(0.0, _number(eg.get("extent", 1.0), "embed_grid.extent", positive=True),
                         _number(eg.get("n", 9), "embed_grid.n", integer=True, positive=True))
        frame = lf.integrate_frame(lf.LaxSource(spec, xi0), ge, ge, 1.0, ode_tol, args.jobs)
        img = lf.cartan_embed(spec, frame)
        out["embed"] = {"unitarity": frame.unitarity_defect, "plaquette": frame.plaquette_defect}
        if args.out_dir:
            _write(args.out_dir, "frame.csv", frame.to_csv())
            if spec.n == 2:
                rows = ["i,j,x,y,q0,q1,q2,q3"]
                for i, x in enumerate(ge):
                    for j, y in enumerate(ge):
                        a, b = img[i, j, 0, 0], img[i, j, 0, 1]
                        rows.append(f"{i},{j},{x:.17g},{y:.17g},{a.real:.17g},{a.imag:.17g},{b.real:.17g},{b.imag:.17g}")
                _write(args.out_dir, "s3_samples.csv", "\n".join(rows) + "\n")
    ok = (
        field.drift < 1e-8
        and comm < 1e-6
        and flat["max_maurer_cartan"] < 1e-6
        and flat["harmonicity"][0] < 1e-6
    )
    return out, EXIT_OK if ok else EXIT_DOMAIN


def _family(block, tau, jobs):
    from . import holonomy as hol
    from . import laxflow as lf

    kind = block.get("type")
    if kind == "vacuum":
        _keys(block, ("type", "n1", "n2", "phase"), "family")
        return hol.vacuum_family(tau, block.get("n1", 1), block.get("n2", 0), block.get("phase", 0.0))
    if kind == "homogeneous":
        _keys(block, ("type", "a0", "k"), "family", ("a0",))
        a0 = np.array([_complex_list(row, "family.a0") for row in block["a0"]])
        if a0.shape != (2, 2):
            raise SchemaError("family.a0: expected a 2x2 matrix")
        return hol.homogeneous_family(a0, _complex(block.get("k", 1.0), "family.k"), tau)
    if kind == "lax":
        _keys(block, ("type", "d", "seed", "norm"), "family")
        spec = lf.su2()
        xi0 = lf.random_loop(spec, block.get("d", 3), block.get("seed", 0), block.get("norm", 1.0))
        return hol.lax_group_family(spec, xi0, tau)
    raise SchemaError("family.type: expected 'vacuum', 'homogeneous' or 'lax'")


def cmd_holonomy(cfg, args):
    from . import holonomy as hol

    _keys(cfg, ("family", "tau", "scan", "audit", "tol"), "config", ("family", "tau"))
    tau = _complex(cfg["tau"], "tau")
    fam = _family(cfg["family"], tau, args.jobs)
    tol = min(1e-12, _tolerances(cfg).ode_tol)
    sc = _keys(cfg.get("scan", {}), ("n_r", "n_theta", "n_circle", "r_min", "r_max"), "scan")
    au = _keys(cfg.get("audit", {}), ("n_r", "n_theta", "n_circle"), "audit")
    mesh, circle = hol.default_grid(au.get("n_r", 64), au.get("n_theta", 64), au.get("n_circle", 256))
    audits = hol.symmetry_audit(fam, mesh.ravel(), circle, tol=tol, jobs=args.jobs)
    out = {"family": fam.name, "audits": audits}
    worst = max(v for k, v in audits.items() if k != "n_lambda")
    code = EXIT_OK if worst < AUDIT_LIMIT else EXIT_DOMAIN
    if fam.name == "lax":
        return out, code
    scan = hol.discriminant_scan(fam, tol=tol, jobs=args.jobs, **sc)
    out["scan"] = scan.to_dict()
    if args.out_dir:
        _write(args.out_dir, "scan.csv", scan.samples.to_csv())
    if args.fit:
        try:
            fit = hol.fit_empirical_curve(scan.branch_points, scan.branched_at_zero)
        except SpectraError as e:
            out["fit"] = {"valid": False, "reason": e.reason, "message": str(e)}
            return out, EXIT_DOMAIN
        out["fit"] = {"valid": True, "curve": fit.to_spec(), "genus": fit.curve.genus}
        out["empirical_periodicity"] = hol.empirical_periodicity(fam, fit, tol=tol, jobs=args.jobs)
        if args.out_dir:
            _write(args.out_dir, "fitted_curve.json", dumps({"curve": fit.to_spec()}))
    return out, code


COMMANDS = {
    "curve-check": cmd_curve_check,
    "periodicity": cmd_periodicity,
    "search": cmd_search,
    "lax": cmd_lax,
    "holonomy": cmd_holonomy,
}


# ---------------------------------------------------------------------------
# entry point


def _write(out_dir, name, text):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w") as fh:
        fh.write(text)


def _load(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise SchemaError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed JSON: {e}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="spectra", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="JSON config file, or - for stdin")
        sp.add_argument("-o", "--output", help="report path (default: stdout)")
        sp.add_argument("--out-dir", help="directory for CSV outputs")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads")
        if name == "periodicity":
            sp.add_argument("--singular", action="store_true", help="include the doubled-point conditions")
        if name == "lax":
            sp.add_argument("--embed", action="store_true", help="emit frame and S^3 samples")
        if name == "holonomy":
            sp.add_argument("--fit", action="store_true", help="fit the spectral curve and its periods")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    for flag in ("singular", "embed", "fit"):
        if not hasattr(args, flag):
            setattr(args, flag, False)
    if args.jobs < 1:
        print("spectra: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load(args.config)
        if not isinstance(cfg, dict):
            raise SchemaError("config must be a JSON object")
        body, code = COMMANDS[args.command](cfg, args)
    except SchemaError as e:
        print(f"spectra: schema error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SpectraError as e:
        body, code = {"error": e.reason, "message": str(e)}, EXIT_DOMAIN
    report = {
        "command": args.command,
        "version": __version__,
        "config": cfg,
        "tolerances": ToleranceProfile.from_env().to_dict(),
        "exit_code": code,
        "result": body,
    }
    text = dumps(report) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
