"""Config-driven experiment runner.

Verbs:
    fblab validate <config.json>
    fblab run <config.json> [-o outdir]
    fblab emit-plots <run-dir>
    fblab suite <dir-of-configs> [-o outdir]

Exit codes: 0 success, 1 config validation failure, 2 pipeline failure,
3 an in-config check failed.  Runs are deterministic: a fixed seed and a
fixed config reproduce byte-identical numeric columns (all floats are
written with 17 significant digits).
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .blowup import blowup_report
from .domain import BallRules, build_half_ball_mesh
from .fields import CallableField, PolynomialField, exact_remark_solution
from .functionals import (
    check_monneau_monotonicity,
    check_poincare,
    check_rellich_identities,
    check_trace_inequality,
    frequency_profile,
)
from .nodal import box_counting_dimension, classify_point, extract_nodal_set, stratify
from .polyalg import Poly, random_poly
from .polynomials import basis, combine
from .solver import ProblemSpec, check_max_principles, solve, weak_residual

FMT = "%.17g"


# ----------------------------------------------------------------------
# Config validation
# ----------------------------------------------------------------------

G_CATALOG = ("constant", "linear-trace", "exact-remark", "polynomial-trace", "custom")


def validate_config(cfg: dict) -> list[str]:
    errors = []

    def need(path, obj, key, types):
        if key not in obj:
            errors.append("%s.%s: missing" % (path, key))
            return None
        v = obj[key]
        if not isinstance(v, types):
            errors.append("%s.%s: expected %s" % (path, key, types))
            return None
        return v

    if cfg.get("version") != 1:
        errors.append("version: must be 1")
    prob = cfg.get("problem")
    if not isinstance(prob, dict):
        return errors + ["problem: missing section"]
    N = need("problem", prob, "N", int)
    if N is not None and N not in (1, 2):
        errors.append("problem.N: solver supports N in {1, 2}")
    a = need("problem", prob, "a", (int, float))
    if a is not None and not (-1.0 < a < 1.0):
        errors.append("problem.a: the weight exponent must lie in (-1, 1)")
    p = need("problem", prob, "p", (int, float))
    if p is not None and p < 2.0:
        errors.append("problem.p: p=%g rejected, the superlinear regime requires p >= 2" % p)
    for key in ("lambda_minus", "lambda_plus"):
        lam = need("problem", prob, key, (int, float))
        if lam is not None and lam < 0:
            errors.append("problem.%s: phase coefficients must be nonnegative" % key)
    g = prob.get("g")
    if not isinstance(g, dict) or g.get("catalog") not in G_CATALOG:
        errors.append("problem.g.catalog: must be one of %s" % (G_CATALOG,))
    elif g["catalog"] == "custom":
        expr = g.get("expression")
        if not isinstance(expr, str):
            errors.append("problem.g.expression: custom datum needs an expression string")
        else:
            try:
                _compile_expression(expr, prob.get("N", 1))
            except ValueError as exc:
                errors.append("problem.g.expression: %s" % exc)
    mesh = cfg.get("mesh")
    if not isinstance(mesh, dict):
        errors.append("mesh: missing section")
    else:
        lv = need("mesh", mesh, "radial_levels", int)
        if lv is not None and lv < 4:
            errors.append("mesh.radial_levels: need at least 4")
        res = need("mesh", mesh, "angular_resolution", int)
        if res is not None and res < 4:
            errors.append("mesh.angular_resolution: need at least 4")
        gr = mesh.get("grading", 2.0)
        if not isinstance(gr, (int, float)) or not math.isfinite(gr) or gr <= 0:
            errors.append("mesh.grading: must be finite and positive")
    ana = cfg.get("analysis", {})
    if not isinstance(ana, dict):
        errors.append("analysis: must be a table")
    else:
        seed = ana.get("seed", 0)
        if not isinstance(seed, int):
            errors.append("analysis.seed: must be an integer")
        for tol_key in ("tol",):
            pass
        for name, task in (ana.get("tasks") or {}).items():
            if not isinstance(task, dict):
                errors.append("analysis.tasks.%s: must be a table" % name)
    return errors


# ----------------------------------------------------------------------
# Restricted expression evaluation for custom data
# ----------------------------------------------------------------------

_ALLOWED_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp,
                  "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh}
_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name,
                  ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
                  ast.USub, ast.UAdd, ast.Load)


def _compile_expression(expr: str, N: int):
    """Arithmetic-only evaluator over x1..xN, y and whitelisted functions."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValueError("cannot parse: %s" % exc) from None
    names = {"x%d" % (i + 1) for i in range(N)} | {"y", "pi"}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError("construct %s is not allowed" % type(node).__name__)
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
                raise ValueError("only %s may be called" % sorted(_ALLOWED_FUNCS))
        if isinstance(node, ast.Name) and node.id not in names | set(_ALLOWED_FUNCS):
            raise ValueError("unknown name %r" % node.id)
    code = compile(tree, "<g>", "eval")

    def fn(pts):
        env = {"x%d" % (i + 1): pts[:, i] for i in range(N)}
        env["y"] = pts[:, N]
        env["pi"] = math.pi
        env.update(_ALLOWED_FUNCS)
        return np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float)

    return fn


def build_datum(gcfg: dict, N: int, a: float):
    cat = gcfg["catalog"]
    if cat == "constant":
        c = float(gcfg.get("value", 1.0))
        return CallableField(N, lambda pts: np.full(len(pts), c),
                             lambda pts: np.zeros_like(pts))
    if cat == "linear-trace":
        direction = np.asarray(gcfg.get("direction", [1.0] + [0.0] * (N - 1)), dtype=float)

        def val(pts):
            return pts[:, :N] @ direction

        def grad(pts):
            g = np.zeros_like(pts)
            g[:, :N] = direction
            return g

        return CallableField(N, val, grad)
    if cat == "exact-remark":
        return exact_remark_solution(N, a, int(gcfg.get("direction_index", 0)))
    if cat == "polynomial-trace":
        k = int(gcfg.get("degree", 2))
        B = basis(N, k, a)
        coeffs = gcfg.get("coefficients")
        if coeffs is None:
            coeffs = [1.0] + [0.0] * (len(B) - 1)
        if len(coeffs) != len(B):
            raise ValueError("polynomial-trace needs %d coefficients for degree %d"
                             % (len(B), k))
        return PolynomialField(combine(B, [float(c) for c in coeffs]))
    if cat == "custom":
        fn = _compile_expression(gcfg["expression"], N)

        def grad(pts, h=1e-6):
            out = np.zeros_like(pts)
            for ax in range(pts.shape[1]):
                dp = pts.copy()
                dm = pts.copy()
                dp[:, ax] += h
                dm[:, ax] -= h
                dm[:, -1] = np.maximum(dm[:, -1], 0.0)
                out[:, ax] = (fn(dp) - fn(dm)) / (dp[:, ax] - dm[:, ax])
            return out

        return CallableField(N, fn, grad)
    raise ValueError("unknown catalog entry %r" % cat)


# ----------------------------------------------------------------------
# Helpers
# ----------------------------------------------------------------------

def _radius_grid(spec_block, default_min=0.05, default_max=0.45, default_count=12):
    if isinstance(spec_block, list):
        return np.asarray(spec_block, dtype=float)
    spec_block = spec_block or {}
    lo = float(spec_block.get("min", default_min))
    hi = float(spec_block.get("max", default_max))
    n = int(spec_block.get("count", default_count))
    return np.geomspace(lo, hi, n)


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(FMT % v for v in row) + "\n")
    path.write_text(buf.getvalue())


def _json_dump(path: Path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True))


# ----------------------------------------------------------------------
# Run pipeline
# ----------------------------------------------------------------------

def run_config(cfg: dict, outdir: Path) -> dict:
    """Execute the declared pipeline; returns the summary dict."""
    t_start = time.time()
    outdir.mkdir(parents=True, exist_ok=True)
    prob = cfg["problem"]
    N, a, p = int(prob["N"]), float(prob["a"]), float(prob["p"])
    lam_m, lam_p = float(prob["lambda_minus"]), float(prob["lambda_plus"])
    g = build_datum(prob["g"], N, a)
    spec = ProblemSpec(N, a, p, lam_m, lam_p, g)
    mcfg = cfg["mesh"]
    mesh = build_half_ball_mesh(N, int(mcfg["radial_levels"]),
                                int(mcfg["angular_resolution"]),
                                float(mcfg.get("grading", 2.0)), a=a,
                                panel_order=mcfg.get("panel_order"))
    ana = cfg.get("analysis", {})
    seed = int(ana.get("seed", 0))
    rng = np.random.default_rng(seed)
    rcfg = ana.get("rules", {})
    rules = BallRules(N, a, int(rcfg.get("shells", 16)),
                      int(rcfg.get("angular_cells", 12)),
                      int(rcfg.get("order", 10)),
                      float(rcfg.get("grading", 2.0)))
    tasks = ana.get("tasks", {"solve": {}})
    summary = {"name": cfg.get("name", "run"), "checks": [], "tasks": {}}
    timings = {}

    def check(name, ok, detail):
        summary["checks"].append({"name": name, "ok": bool(ok), "detail": detail})

    u = None
    if "solve" in tasks or len(tasks) > 1 or "nodal" in tasks:
        t0 = time.time()
        scfg = tasks.get("solve", {})
        u = solve(spec, mesh, float(scfg.get("tol", 1e-10)),
                  int(scfg.get("max_iter", 200)))
        u.save(str(outdir / "solution"))
        timings["solve"] = time.time() - t0
        summary["tasks"]["solve"] = {
            "iterations": u.iterations, "residual": u.residual,
            "converged": u.converged,
        }
        if not u.converged:
            raise RuntimeError("solver did not converge: residual %g" % u.residual)
        if "max_iter_check" not in scfg:
            check("solver-converged", u.converged, {"residual": u.residual})

    if "exact_error" in tasks:
        exact = exact_remark_solution(N, a)
        pts = u.disc.node_coordinates()
        err = float(np.max(np.abs(u.values(pts) - exact.values(pts))))
        tol = float(tasks["exact_error"].get("linf_tol", 1e-3))
        summary["tasks"]["exact_error"] = {"linf": err, "tol": tol}
        check("exact-recovery", err <= tol, {"linf": err})

    if "max_principle" in tasks:
        rep = check_max_principles(u, spec)
        summary["tasks"]["max_principle"] = {
            "violations": rep.violations, "strict_sign": rep.strict_sign,
            "strict_margin": rep.strict_margin,
        }
        check("weak-max-principle", rep.ok, {"violations": rep.violations})
        if rep.strict_sign is not None:
            check("strict-sign", rep.strict_margin > 0.0,
                  {"margin": rep.strict_margin})

    if "profile" in tasks:
        pcfg = tasks["profile"]
        centers = pcfg.get("centers", [[0.0] * N])
        radii = _radius_grid(pcfg.get("radii"))
        coarse = BallRules(N, a, max(rules.shells // 2, 4), 8, 6, 2.0)
        rows = []
        for idx, x0 in enumerate(centers):
            prof = frequency_profile(u, spec, x0, radii, rules, coarse_rules=coarse)
            prof.to_csv(str(outdir / ("profile_%d.csv" % idx)))
            _json_dump(outdir / ("profile_%d.json" % idx), prof.metadata())
            eps = 10.0 * (prof.eps_disc or 0.0) + 1e-12
            worst = prof.monotone_violation
            rows.append({"center": x0, "order": prof.order, "limit": prof.limit,
                         "violation": worst, "eps_disc": eps})
            check("profile-%d-monotone" % idx, worst <= eps,
                  {"violation": worst, "eps_disc": eps})
            if "expect_order" in pcfg:
                check("profile-%d-order" % idx, prof.order == int(pcfg["expect_order"]),
                      {"order": prof.order, "limit": prof.limit})
        summary["tasks"]["profile"] = rows

    if "rellich" in tasks:
        rcfg2 = tasks["rellich"]
        radii = _radius_grid(rcfg2.get("radii"), 0.08, 0.45, 48)
        target = rcfg2.get("field", "solution")
        fld = exact_remark_solution(N, a) if target == "exact" else u
        rep = check_rellich_identities(fld, spec, radii, rules=rules)
        rep.to_csv(str(outdir / "rellich.csv"))
        tol = float(rcfg2.get("tol", 1e-3))
        worst = max(rep.max_interior("surface_residual"),
                    rep.max_interior("pohozaev_residual"))
        hp = rep.max_interior("hprime_residual")
        summary["tasks"]["rellich"] = {"identities": worst, "hprime": hp, "tol": tol}
        check("rellich-identities", worst <= tol, {"max_residual": worst})
        check("hprime-identity", hp <= tol, {"max_residual": hp})

    if "monneau" in tasks:
        mcfg2 = tasks["monneau"]
        x0 = mcfg2.get("center", [0.0] * N)
        k = int(mcfg2.get("degree", 1))
        est_radii = _radius_grid(mcfg2.get("estimation_radii"), 0.1, 0.4, 10)
        chk_radii = _radius_grid(mcfg2.get("check_radii"), 0.06, 0.35, 16)
        if "polynomial" in mcfg2:
            pk = combine(basis(N, k, a), mcfg2["polynomial"])
        else:
            from .blowup import fit_blowup
            pk = fit_blowup(u, spec, x0, k, est_radii, rules).poly
        C_hat = mcfg2.get("C_hat")
        rep = check_monneau_monotonicity(u, pk, x0, spec, est_radii, chk_radii,
                                         C_hat, rules)
        _write_csv(outdir / "monneau.csv", ["r", "M", "compensated"],
                   [rep.radii, rep.values, rep.compensated])
        summary["tasks"]["monneau"] = {"C_hat": rep.C_hat,
                                       "violations": len(rep.violations)}
        check("monneau-monotone", rep.ok, {"violations": rep.violations[:3]})

    if "blowup" in tasks:
        bcfg = tasks["blowup"]
        radii = _radius_grid(bcfg.get("radii"), 0.02, 0.3, 9)
        centers = bcfg.get("centers")
        if centers == "nodal" or centers is None:
            ns = extract_nodal_set(u)
            centers = ns.points[: int(bcfg.get("max_centers", 4))]
        rows = []
        for idx, x0 in enumerate(np.atleast_2d(np.asarray(centers, dtype=float))):
            rep = blowup_report(u, spec, x0, radii, rules)
            rep.save(str(outdir / ("blowup_%d.json" % idx)))
            rows.append({"center": list(map(float, x0)), "k": rep.k,
                         "gamma": rep.gamma, "flagged": rep.flagged})
            check("blowup-%d-accepted" % idx, not rep.flagged,
                  {"k": rep.k, "oscillation": rep.nondegeneracy.oscillation})
        summary["tasks"]["blowup"] = rows

    if "nodal" in tasks:
        ncfg = tasks["nodal"]
        ns = extract_nodal_set(u, ncfg.get("zero_band"))
        pts = ns.points
        summary["tasks"]["nodal"] = {"count": len(pts), "artifacts": ns.artifacts}
        _write_csv(outdir / "nodal_points.csv",
                   ["x%d" % (i + 1) for i in range(N)],
                   [pts[:, i] for i in range(N)])
        if ncfg.get("box_scales") and len(pts):
            dim, r2, counts = box_counting_dimension(pts, ncfg["box_scales"])
            summary["tasks"]["nodal"]["dimension"] = dim
            summary["tasks"]["nodal"]["r2"] = r2
            _write_csv(outdir / "box_counts.csv", ["eps", "count"],
                       [np.array([c[0] for c in counts]),
                        np.array([c[1] for c in counts])])
            if "expect_dimension" in ncfg:
                tol = float(ncfg.get("dimension_tol", 0.15))
                check("nodal-dimension", abs(dim - ncfg["expect_dimension"]) <= tol,
                      {"dimension": dim, "r2": r2})
        if ncfg.get("classify") and len(pts):
            radii = _radius_grid(ncfg.get("radii"), 0.03, 0.3, 8)
            cls = [classify_point(u, spec, x0, radii, rules)
                   for x0 in pts[: int(ncfg.get("max_classified", 12))]]
            strat = stratify(cls, N)
            strat.save(str(outdir / "nodal"))
            summary["tasks"]["nodal"]["kinds"] = {
                "regular": len(strat.regular), "singular": len(strat.singular),
                "unclassified": len(strat.unclassified),
            }
            check("stratification-consistent", not strat.inconsistencies,
                  {"problems": strat.inconsistencies})

    if "inequalities" in tasks:
        icfg = tasks["inequalities"]
        n_fields = int(icfg.get("fields", 10))
        degree = int(icfg.get("degree", 4))
        radii = _radius_grid(icfg.get("radii"), 0.2, 0.9, 4)
        rows = []
        from .polynomials import basis as _basis
        ok_all = True
        for fi in range(n_fields):
            if fi % 2 == 0:
                k = int(rng.integers(1, degree + 1))
                B = _basis(N, k, a)
                fld = PolynomialField(combine(B, rng.normal(size=len(B))))
            else:
                fld = PolynomialField(random_poly(N + 1, degree, rng))
            for r in radii:
                pc = check_poincare(fld, N, a, r, rules)
                tr = check_trace_inequality(fld, N, a, r, rules)
                ok_all = ok_all and pc["ok"]
                rows.append({"field": fi, "r": float(r), "poincare_margin": pc["margin"],
                             "trace_ratio": tr["ratio"]})
        summary["tasks"]["inequalities"] = {"cases": len(rows)}
        _write_csv(outdir / "inequalities.csv",
                   ["field", "r", "poincare_margin", "trace_ratio"],
                   [np.array([row[k2] for row in rows], dtype=float)
                    for k2 in ("field", "r", "poincare_margin", "trace_ratio")])
        check("poincare", ok_all, {"cases": len(rows)})

    manifest = {
        "config_sha256": hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
        "versions": {"fblab": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "python": sys.version.split()[0]},
        "seed": seed,
        "wall_time": time.time() - t_start,
        "timings": timings,
        "artifacts": sorted(p.name for p in outdir.iterdir()),
    }
    _json_dump(outdir / "manifest.json", manifest)
    summary["ok"] = all(c["ok"] for c in summary["checks"])
    _json_dump(outdir / "summary.json", summary)
    return summary


# ----------------------------------------------------------------------
# Plot-data emitter
# ----------------------------------------------------------------------

def emit_plot_data(rundir: Path) -> list[str]:
    """Tidy long-format CSVs from a completed run directory."""
    missing = []
    produced = []
    profs = sorted(rundir.glob("profile_*.csv"))
    if profs:
        rows = []
        for pf in profs:
            idx = pf.stem.split("_")[1]
            lines = pf.read_text().strip().splitlines()[1:]
            for ln in lines:
                r, D, H, G, Nf, Nt = ln.split(",")
                rows.append((idx, r, Nt))
        buf = io.StringIO()
        buf.write("series,r,perturbed_frequency\n")
        for idx, r, nt in rows:
            buf.write("%s,%s,%s\n" % (idx, r, nt))
        (rundir / "plot_frequency.csv").write_text(buf.getvalue())
        produced.append("plot_frequency.csv")
    blows = sorted(rundir.glob("blowup_*.json"))
    if blows:
        buf = io.StringIO()
        buf.write("series,r,monneau,trace_residual,h_ratio\n")
        for bf in blows:
            rec = json.loads(bf.read_text())
            idx = bf.stem.split("_")[1]
            for r, m, t, h in zip(rec["radii"], rec["monneau_tail"],
                                  rec["trace_sup_residuals"], rec["h_ratios"]):
                buf.write("%s,%s,%s,%s,%s\n"
                          % (idx, FMT % r, FMT % m, FMT % t, FMT % h))
        (rundir / "plot_blowup.csv").write_text(buf.getvalue())
        produced.append("plot_blowup.csv")
    if (rundir / "nodal.csv").exists():
        (rundir / "plot_nodal_scatter.csv").write_text((rundir / "nodal.csv").read_text())
        produced.append("plot_nodal_scatter.csv")
    if (rundir / "box_counts.csv").exists():
        lines = (rundir / "box_counts.csv").read_text().strip().splitlines()[1:]
        buf = io.StringIO()
        buf.write("log_inv_eps,log_count\n")
        for ln in lines:
            eps, cnt = map(float, ln.split(","))
            buf.write("%s,%s\n" % (FMT % math.log(1.0 / eps), FMT % math.log(cnt)))
        (rundir / "plot_box_fit.csv").write_text(buf.getvalue())
        produced.append("plot_box_fit.csv")
    if not produced:
        missing.append("no plottable artifacts found in %s" % rundir)
    if missing:
        raise FileNotFoundError("; ".join(missing))
    return produced


# ----------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------

def _load_config(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError("config %s is not valid JSON: %s" % (path, exc)) from None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fblab", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    pv = sub.add_parser("validate", help="validate a config file")
    pv.add_argument("config", type=Path)
    pr = sub.add_parser("run", help="run one experiment")
    pr.add_argument("config", type=Path)
    pr.add_argument("-o", "--output", type=Path, default=None)
    pe = sub.add_parser("emit-plots", help="write plot-ready CSVs for a run")
    pe.add_argument("rundir", type=Path)
    ps = sub.add_parser("suite", help="run every config in a directory")
    ps.add_argument("configdir", type=Path)
    ps.add_argument("-o", "--output", type=Path, default=None)
    args = parser.parse_args(argv)

    out_root = Path(os.environ.get("FBLAB_OUTPUT_ROOT", "runs"))

    if args.verb == "validate":
        try:
            cfg = _load_config(args.config)
        except ValueError as exc:
            print("invalid: %s" % exc)
            return 1
        errors = validate_config(cfg)
        if errors:
            for e in errors:
                print("invalid: %s" % e)
            return 1
        print("ok: %s" % args.config)
        return 0

    if args.verb == "run":
        try:
            cfg = _load_config(args.config)
            errors = validate_config(cfg)
        except ValueError as exc:
            print("invalid: %s" % exc)
            return 1
        if errors:
            for e in errors:
                print("invalid: %s" % e)
            return 1
        outdir = args.output or out_root / cfg.get("name", args.config.stem)
        try:
            summary = run_config(cfg, outdir)
        except Exception as exc:  # pipeline failure with module-level context
            print("pipeline failure: %s: %s" % (type(exc).__name__, exc))
            return 2
        for c in summary["checks"]:
            print("%-40s %s" % (c["name"], "PASS" if c["ok"] else "FAIL"))
        print("artifacts: %s" % outdir)
        return 0 if summary["ok"] else 3

    if args.verb == "emit-plots":
        try:
            produced = emit_plot_data(args.rundir)
        except FileNotFoundError as exc:
            print("missing: %s" % exc)
            return 2
        for name in produced:
            print("wrote %s" % name)
        return 0

    if args.verb == "suite":
        configs = sorted(args.configdir.glob("*.json"))
        if not configs:
            print("no configs in %s" % args.configdir)
            return 1
        out = args.output or out_root / "suite"
        rc = 0
        for cpath in configs:
            try:
                cfg = _load_config(cpath)
                errors = validate_config(cfg)
            except ValueError as exc:
                print("%s: invalid (%s)" % (cpath.name, exc))
                rc = max(rc, 1)
                continue
            if errors:
                print("%s: invalid (%s)" % (cpath.name, errors[0]))
                rc = max(rc, 1)
                continue
            try:
                summary = run_config(cfg, out / cfg.get("name", cpath.stem))
            except Exception as exc:
                print("%s: pipeline failure (%s)" % (cpath.name, exc))
                rc = max(rc, 2)
                continue
            status = "PASS" if summary["ok"] else "FAIL"
            print("%-40s %s" % (cpath.name, status))
            if not summary["ok"]:
                rc = max(rc, 3)
        return rc

    return 1


if __name__ == "__main__":
    sys.exit(main())
