"""Command line front end: verify, eval and extend.

Reports are JSON with a "schema" field, keys in a fixed order and floats
written with 17 significant digits, so identical flags give identical bytes.
Exit codes: 0 all checks pass, 1 a check failed, 2 usage or order-budget error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .jets import JetError, OrderBudgetError, default_order
from .models import ModelError, get_model, model_from_spec

SCHEMA = "tractor-report/1"


class UsageError(Exception):
    pass


# ---- serialization -------------------------------------------------------------------

def _fmt(x, indent=0):
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist(), indent)
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_fmt(v, indent + 1)}" for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(x, (list, tuple)):
        if not x:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in x):
            return "[" + ", ".join(_fmt(v) for v in x) + "]"
        return "[\n" + ",\n".join(pad + _fmt(v, indent + 1) for v in x) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj) -> str:
    return _fmt(obj) + "\n"


# ---- helpers ------------------------------------------------------------------------------

def _model(args):
    if args.spec:
        try:
            with open(args.spec) as fh:
                m = model_from_spec(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read spec: {exc}") from None
        if m.dim != args.dim and args.dim_given:
            raise UsageError(f"spec dimension {m.dim} differs from --dim {args.dim}")
        return m
    if not args.geometry:
        raise UsageError("one of --geometry or --spec is required")
    return get_model(args.geometry, args.dim)


def _point(args, m):
    if args.point is None:
        lo, hi = m.chart.box
        return np.full(m.dim, lo + 0.37 * (hi - lo))
    try:
        p = np.array([float(v) for v in args.point.split(",")])
    except ValueError:
        raise UsageError(f"bad --point {args.point!r}") from None
    if p.size != m.dim:
        raise UsageError(f"--point needs {m.dim} coordinates")
    if not m.chart.domain(p):
        raise UsageError(f"point {args.point} is outside the domain of {m.name}")
    return p


def _env(args, m):
    return {"dim": m.dim, "order": args.order, "seed": args.seed, "geometry": m.name,
            "version": __version__}


# ---- verify ---------------------------------------------------------------------------------

def cmd_verify(args):
    from .checks import required_order, run_checks, select
    m = _model(args)
    checks = select(m, args.suite)
    if not checks:
        raise UsageError(f"no checks apply to {m.name} with suite filter {args.suite!r}")
    need = required_order(checks)
    if args.order < need:
        raise OrderBudgetError(f"jet order {args.order} is below the budget of the selected "
                               f"checks; minimal required order is {need}")
    recs = run_checks(checks, m, args.seed, args.order)
    ok = all(r["pass"] for r in recs)
    report = {"schema": SCHEMA, "command": "verify", "suite": args.suite or "all",
              "environment": _env(args, m), "checks": recs, "pass": ok}
    if args.json:
        sys.stdout.write(dumps(report))
    else:
        for r in recs:
            flag = "PASS" if r["pass"] else "FAIL"
            sys.stdout.write(f"{flag} {r['id']:<40} {r['max_residual']:.3e} (tol {r['tolerance']:.0e})"
                             + (f"  {r['error']}" if "error" in r else "") + "\n")
        sys.stdout.write(f"{sum(r['pass'] for r in recs)}/{len(recs)} checks passed\n")
    return 0 if ok else 1


# ---- eval --------------------------------------------------------------------------------------

OBJECTS = ("g", "ginv", "Gamma", "Ric", "Sc", "J", "P", "W", "C", "B", "kappa", "sigma", "I",
           "I2", "N", "H", "Lo", "Fialkow")


def evaluate(m, p, name, order=None):
    """A named object at a point as a jet."""
    from .hypersurface import extrinsic, fialkow, normal_tractor
    from .tractor import i_squared, scale_tractor, tractor_curvature
    if name not in OBJECTS:
        raise UsageError(f"unknown object {name!r}; known: {', '.join(OBJECTS)}")
    k = order if order is not None else {"B": 4, "C": 3, "kappa": 3, "Fialkow": 4}.get(name, 2)
    s = m.suite(p, k)
    if name in ("g", "ginv", "Gamma", "Ric", "Sc", "J", "P", "W", "C", "B"):
        if name == "W" and m.dim < 4:
            return s.W_low * 0.0
        return getattr(s, name)
    if name == "kappa":
        return tractor_curvature(s)
    sg = m.sigma_jet(p, k)
    if name == "sigma":
        return sg
    if name == "I":
        return scale_tractor(sg, s).jet
    if name == "I2":
        return i_squared(sg, s)
    ext = extrinsic(s, sg)
    if name == "N":
        return normal_tractor(ext)
    if name == "H":
        return ext["H"]
    if name == "Lo":
        return ext["Lo"]
    return fialkow(s, ext)


def cmd_eval(args):
    m = _model(args)
    p = _point(args, m)
    J = evaluate(m, p, args.object, args.order if args.full else None)
    out = {"schema": SCHEMA, "command": "eval", "geometry": m.name, "dim": m.dim,
           "point": p.tolist(), "object": args.object, "value": np.asarray(J.value)}
    if args.full:
        out["order"] = J.order
        out["coefficients"] = J.c
    sys.stdout.write(dumps(out))
    return 0


# ---- extend ------------------------------------------------------------------------------------

def cmd_extend(args):
    from .boundary import residual_order, solve_extension
    from .hypersurface import AdaptedChart, lift, restrict
    from .models import boundary_guess, compile_expression
    m = _model(args)
    if m.sigma is None:
        raise UsageError(f"{m.name} has no defining density")
    L = args.target_order
    order = args.order if args.order_given else 2 * L + 3
    if args.point is None:
        guess = np.zeros(m.dim)
        guess[-1] = 0.5          # radial projections land on the pole, away from graph singularities
    else:
        guess = _point(args, m)
    q = boundary_guess(m, guess)
    chart = AdaptedChart(m.chart.metric, m.sigma, q, order, m.signature)
    f0fn = compile_expression(args.f0, m.dim)
    f0 = chart.pull(lambda X: X[0] * 0.0 + f0fn(X))
    f0 = lift(restrict(f0))
    st = solve_extension(chart, f0, args.w0, L)
    out = {"schema": SCHEMA, "command": "extend", "geometry": m.name, "dim": m.dim,
           "boundary_point": q.tolist(), "w0": args.w0, "h0": st.h0, "order": order,
           "target": L, "reached": st.reached,
           "coefficients": [float(c.value) for c in st.coeffs],
           "obstructed_at": st.obstructed_at,
           "obstruction": None if st.obstruction is None else float(st.obstruction.value),
           "free_parameter_at": st.free_parameter_at}
    if st.obstruction is None:
        ok, lead = residual_order(chart, st.solution, args.w0, st.reached)
        out["residual_order"] = {"order": st.reached, "verified": bool(ok)}
    sys.stdout.write(dumps(out))
    return 0


# ---- entry -------------------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="conftractor", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--geometry", help="catalog model name")
        p.add_argument("--spec", help="JSON geometry spec file")
        p.add_argument("--dim", type=int, default=None, help="dimension (default 4)")
        p.add_argument("--order", type=int, default=None,
                       help="jet order budget (default TRACTOR_DEFAULT_ORDER or 6)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", action="store_true", help="JSON report on stdout")
        p.add_argument("--point", help="comma separated coordinates")

    v = sub.add_parser("verify", help="run verification suites")
    common(v)
    v.add_argument("--suite", help="comma list of suites or check ids")
    e = sub.add_parser("eval", help="evaluate an object at a point")
    common(e)
    e.add_argument("object", help="one of " + ", ".join(OBJECTS))
    e.add_argument("--full", action="store_true", help="include all jet coefficients")
    x = sub.add_parser("extend", help="formal solution of I.D f = 0 off the zero locus")
    common(x)
    x.add_argument("--w0", type=float, default=0.3)
    x.add_argument("--target-order", type=int, default=5)
    x.add_argument("--f0", default="1 + 0.5*x2 - 0.3*x1*x3",
                   help="boundary data as an expression in x1..xd")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    args.dim_given = args.dim is not None
    args.dim = args.dim if args.dim is not None else 4
    args.order_given = args.order is not None
    if args.order is None:
        args.order = default_order()
    cmds = {"verify": cmd_verify, "eval": cmd_eval, "extend": cmd_extend}
    try:
        return cmds[args.command](args)
    except OrderBudgetError as exc:
        sys.stderr.write(f"order budget error: {exc}\n")
        return 2
    except (UsageError, ModelError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except JetError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
