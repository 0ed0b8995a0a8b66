"""Analytic model geometries, almost-Einstein scales and CFE residuals.

A model is a metric chart plus an optional defining density sigma (in the
chart's own scale) and a record of invariants it must reproduce.  The record
is checked by jet evaluation when the catalog is built.
"""

from __future__ import annotations

import ast
import functools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets
from .conformal import WeightedField, laplacian, rescale_metric
from .hypersurface import AdaptedChart, HypersurfaceData, restrict, surface_point
from .jets import Jet, JetError, contract, coordinates, rel_residual
from .riemann import CurvatureSuite, MetricChart
from .tractor import (connection_matrix, metric_matrix, scale_tractor, slots, tnabla,
                      tractor_curvature)


class ModelError(JetError):
    pass


class RegularityError(JetError):
    """K = W / sigma cannot be formed at a zero of sigma unless W vanishes."""


@dataclass
class ModelGeometry:
    name: str
    chart: MetricChart
    sigma: Optional[Callable] = None
    expected: dict = field(default_factory=dict)
    description: str = ""

    @property
    def dim(self):
        return self.chart.dim

    @property
    def signature(self):
        return self.chart.signature

    def suite(self, point, order):
        return self.chart.suite(point, order)

    def sigma_jet(self, point, order) -> Jet:
        if self.sigma is None:
            raise ModelError(f"model {self.name} has no defining density")
        X = coordinates(np.asarray(point, dtype=float), order)
        return _jetify(self.sigma(X), self.dim, order)

    def boundary_point(self, guess):
        """Newton projection of a guess onto the zero locus of sigma."""
        if self.sigma is None:
            raise ModelError(f"model {self.name} has no defining density")
        return surface_point(self.sigma, np.asarray(guess, dtype=float))


def _jetify(x, dim, order):
    if isinstance(x, Jet):
        return x.truncate(order)
    return Jet.constant(float(x), dim, order)


def _diag(entries, d, X):
    z = X[0] * 0.0
    return [[entries[i] if i == j else z for j in range(d)] for i in range(d)]


def _r2(X, start=0):
    out = X[0] * 0.0
    for x in X[start:]:
        out = out + x * x
    return out


def _eta_sq(X):
    return _r2(X, 1) - X[0] * X[0]


def _stereo(X):
    return 4.0 / (1.0 + _r2(X)) ** 2


# ---- catalog ---------------------------------------------------------------------------

def _flat(d):
    return lambda X: _diag([1.0] * d, d, X)


def _minkowski(d):
    return lambda X: _diag([-1.0] + [1.0] * (d - 1), d, X)


def _perturbation(d, amp=0.2):
    def metric(X):
        s = jets.sin(X[0] + 0.5 * X[1])
        rows = [[None] * d for _ in range(d)]
        for i in range(d):
            for j in range(d):
                h = X[i] * X[j] + (0.5 * s if i == j else 0.0) + 0.3 * X[(i + j) % d] * (i != j)
                rows[i][j] = (1.0 if i == j else 0.0) + amp * h
        return rows
    return metric


def _ellipsoid_axes(d):
    return np.array([1.0, 1.3, 0.8, 1.1, 0.9, 1.2][:d])


def _static_de_sitter(d):
    def metric(X):
        f = 1.0 - _r2(X, 1)
        z = X[0] * 0.0
        rows = [[z] * d for _ in range(d)]
        rows[0][0] = -f
        for i in range(1, d):
            for j in range(1, d):
                rows[i][j] = (1.0 if i == j else 0.0) + X[i] * X[j] / f
        return rows
    return metric


def _cylinder(d):
    # R x S^(d-1), the sphere in stereographic coordinates
    def metric(X):
        c = 4.0 / (1.0 + _r2(X, 1)) ** 2
        return _diag([-1.0 + 0.0 * X[0]] + [c] * (d - 1), d, X)
    return metric


def _product_omega(X):
    return 1.0 + 0.3 * X[0] * X[2] + 0.2 * X[1] * X[1] - 0.1 * X[3]


def _product_einstein(X):
    a = 4.0 / (1.0 + X[0] ** 2 + X[1] ** 2) ** 2
    b = 4.0 / (1.0 + X[2] ** 2 + X[3] ** 2) ** 2
    om = _product_omega(X)
    return _diag([om * om * a, om * om * a, om * om * b, om * om * b], 4, X)


def _catalog(d):
    eu = (1,) * d
    lo = (-1,) + (1,) * (d - 1)
    inside = lambda x: float(np.dot(x, x)) < 1.0
    spatial_inside = lambda x: float(np.dot(x[1:], x[1:])) < 1.0
    axes = _ellipsoid_axes(d)
    M = []

    def add(name, metric, sig, sigma=None, desc="", domain=None, box=(-0.5, 0.5), **exp):
        chart = MetricChart(name, d, sig, metric, domain or (lambda x: True), box)
        M.append(ModelGeometry(name, chart, sigma, exp, desc))

    add("flat", _flat(d), eu, desc="Euclidean space", Sc=0.0, J=0.0, conformally_flat=True)
    add("minkowski", _minkowski(d), lo, desc="Minkowski space", Sc=0.0, J=0.0,
        conformally_flat=True)
    add("sphere", lambda X: _diag([_stereo(X)] * d, d, X), eu, lambda X: 1.0 + 0.0 * X[0],
        "unit round sphere, stereographic chart, Einstein scale",
        Sc=float(d * (d - 1)), J=d / 2.0, I2=-1.0, zero_locus="empty",
        einstein=True, conformally_flat=True)
    add("sphere_sigma", _flat(d), eu, lambda X: 0.5 * (1.0 + _r2(X)),
        "flat chart with sigma = (1 + |x|^2)/2 (round sphere scale)",
        Sc=0.0, J=0.0, I2=-1.0, zero_locus="empty", einstein=True, conformally_flat=True)
    add("poincare_ball", lambda X: _diag([4.0 / (1.0 - _r2(X)) ** 2] * d, d, X), eu,
        lambda X: 1.0 + 0.0 * X[0], "Poincare ball metric, Einstein scale", domain=inside,
        Sc=-float(d * (d - 1)), J=-d / 2.0, I2=1.0, zero_locus="empty",
        einstein=True, conformally_flat=True)
    add("hyperbolic", _flat(d), eu, lambda X: 0.5 * (1.0 - _r2(X)),
        "flat ball compactification, sigma = (1 - |x|^2)/2",
        Sc=0.0, J=0.0, I2=1.0, eps=1, zero_locus="unit sphere", boundary_guess="radial",
        einstein=True, conformally_flat=True)
    add("upper_half", _flat(d), eu, lambda X: X[0] + 0.0,
        "upper half space, sigma = x1", box=(0.05, 0.6),
        Sc=0.0, J=0.0, I2=1.0, eps=1, zero_locus="x1 = 0", boundary_guess="first",
        einstein=True, conformally_flat=True)
    add("ricci_flat", _flat(d), eu, lambda X: 0.5 * _r2(X),
        "inversion compactification of flat space, sigma = |x|^2/2",
        Sc=0.0, J=0.0, I2=0.0, zero_locus="isolated point at the origin",
        einstein=True, conformally_flat=True)
    add("de_sitter", _minkowski(d), lo, lambda X: 0.5 * (1.0 + _eta_sq(X)),
        "de Sitter compactification on Minkowski, spacelike infinity",
        Sc=0.0, J=0.0, I2=-1.0, eps=-1, zero_locus="hyperboloid t^2 - |x|^2 = 1",
        boundary_guess="time", einstein=True, conformally_flat=True)
    add("anti_de_sitter", _minkowski(d), lo, lambda X: 0.5 * (1.0 - _eta_sq(X)),
        "anti-de Sitter compactification on Minkowski, timelike infinity",
        Sc=0.0, J=0.0, I2=1.0, eps=1, zero_locus="hyperboloid |x|^2 - t^2 = 1",
        boundary_guess="space", einstein=True, conformally_flat=True)
    add("perturbed", _perturbation(d), eu, lambda X: 1.0 + 0.0 * X[0],
        "non-Einstein perturbation of the flat metric", box=(-0.4, 0.4))
    add("ellipsoid", _flat(d), eu,
        lambda X: 0.5 * (1.0 - sum(x * x / (a * a) for x, a in zip(X, axes))),
        "flat chart with an ellipsoidal level set", Sc=0.0, J=0.0, eps=1, einstein=False,
        zero_locus="ellipsoid", boundary_guess="radial", conformally_flat=True)
    if d >= 3:
        add("static_de_sitter", _static_de_sitter(d), lo, lambda X: 1.0 + 0.0 * X[0],
            "static patch of de Sitter space, Killing field d/dt", domain=spatial_inside,
            Sc=float(d * (d - 1)), J=d / 2.0, I2=-1.0, zero_locus="empty", einstein=True,
            conformally_flat=True, static=True)
        add("einstein_cylinder", _cylinder(d), lo, None, "Lorentzian cylinder R x S^(d-1)",
            Sc=float((d - 1) * (d - 2)), conformally_flat=True)
    if d == 4:
        add("product_einstein", _product_einstein, eu, _product_omega,
            "rescaled S^2 x S^2 with its Einstein scale (Weyl curvature nonzero)",
            I2=-1.0 / 3.0, zero_locus="empty", einstein=True, conformally_flat=False)
    return {m.name: m for m in M}


def _probe_point(m):
    lo, hi = m.chart.box
    k = np.arange(m.dim)
    p = lo + (hi - lo) * (0.5 + 0.11 * np.cos(1.0 + 2.0 * k))
    return p


def verify_expected(m: ModelGeometry, point, order=4) -> dict:
    """Residuals of the model's invariants record at one point."""
    e = m.expected
    s = m.suite(point, order)
    out = {}
    if "Sc" in e:
        out["Sc"] = abs(float(s.Sc.value) - e["Sc"]) / max(1.0, abs(e["Sc"]))
    if "J" in e:
        out["J"] = abs(float(s.J.value) - e["J"]) / max(1.0, abs(e["J"]))
    if e.get("conformally_flat") and m.dim >= 4:
        out["W"] = float(np.abs(s.W.value).max())
    if e.get("conformally_flat"):
        out["kappa"] = float(np.abs(tractor_curvature(s).value).max())
    if "I2" in e and m.sigma is not None:
        from .tractor import i_squared
        out["I2"] = abs(float(i_squared(m.sigma_jet(point, order), s).value) - e["I2"])
    return out


def verify_eps(m: ModelGeometry, point) -> float:
    """|eps_measured - eps_expected| at the projection of point to the zero locus."""
    q = boundary_guess(m, point)
    s = m.suite(q, 1)
    sg = m.sigma_jet(q, 1)
    gr = sg.grad()
    n2 = float(np.einsum("ab,a,b->", s.ginv.value, gr.value, gr.value))
    return abs(float(np.sign(n2)) - m.expected["eps"])


def boundary_guess(m: ModelGeometry, point):
    """Project a sample point onto the zero locus along a model-specific direction."""
    p = np.array(point, dtype=float)
    how = m.expected.get("boundary_guess", "radial")
    if how == "radial":
        p = p / max(np.linalg.norm(p), 1e-3)
    elif how == "first":
        p[0] = 0.0
    elif how == "time":
        p[0] = math.sqrt(1.0 + float(np.dot(p[1:], p[1:])))
    elif how == "space":
        p[1:] = p[1:] / max(np.linalg.norm(p[1:]), 1e-3) * math.sqrt(1.0 + p[0] ** 2)
    return m.boundary_point(p)


@functools.lru_cache(maxsize=None)
def builtin_models(dim=4):
    """The model catalog in dimension dim, each record verified at a probe point."""
    if dim < 2:
        raise ModelError("models need dimension >= 2")
    cat = _catalog(dim)
    for m in cat.values():
        res = verify_expected(m, _probe_point(m), order=3)
        bad = {k: v for k, v in res.items() if v > 1e-9}
        if bad:
            raise ModelError(f"model {m.name} fails its invariants record: {bad}")
    return cat


def get_model(name, dim=4) -> ModelGeometry:
    cat = builtin_models(dim)
    if name not in cat:
        raise ModelError(f"unknown geometry {name!r}; known: {', '.join(sorted(cat))}")
    return cat[name]


def sample_points(m: ModelGeometry, n, rng, max_tries=1000):
    """Uniform points in the model's box that satisfy its domain predicate."""
    lo, hi = m.chart.box
    out = []
    tries = 0
    while len(out) < n:
        p = rng.uniform(lo, hi, m.dim)
        tries += 1
        if m.chart.domain(p):
            out.append(p)
        elif tries > max_tries:
            raise ModelError(f"could not sample the domain of {m.name}")
    return out


# ---- almost-Einstein checks ----------------------------------------------------------------

def scalar_curvature_relation(m: ModelGeometry, point, order=3) -> float:
    """|I^2 + 2 J^hat / d| with J^hat the J of sigma^-2 g (needs sigma != 0)."""
    from .tractor import i_squared
    g = m.chart.metric_jet(point, order)
    sg = m.sigma_jet(point, order)
    if abs(float(sg.value)) < 1e-8:
        raise ModelError("sigma vanishes at the point")
    I2 = i_squared(sg, CurvatureSuite(g, m.signature))
    hat = CurvatureSuite(rescale_metric(g, 1.0 / (sg * float(np.sign(sg.value)))), m.signature)
    return abs(float(I2.value) + 2.0 * float(hat.J.value) / m.dim)


# ---- Friedrich conformal field equations -----------------------------------------------------

@dataclass
class CFEResidualReport:
    point: tuple
    constant: float
    friedrich: dict
    tractor: dict
    agreement: dict
    errors: dict

    def max_friedrich(self):
        return max(self.friedrich.values()) if self.friedrich else 0.0

    def max_tractor(self):
        return max(self.tractor.values()) if self.tractor else 0.0

    def as_dict(self):
        return {"point": list(self.point), "constant": self.constant, "friedrich": self.friedrich,
                "tractor": self.tractor, "agreement": self.agreement, "errors": self.errors}


def _vmax(J):
    return float(np.max(np.abs(J.value))) if J.c.size else 0.0


def _skew_first3(T):
    perms = [((0, 1, 2), 1), ((1, 0, 2), -1), ((2, 1, 0), -1), ((0, 2, 1), -1),
             ((1, 2, 0), 1), ((2, 0, 1), 1)]
    rest = tuple(range(3, T.ndim))
    out = None
    for p, sgn in perms:
        t = T.transpose(*(p + rest)) * float(sgn)
        out = t if out is None else out + t
    return out / 6.0


def cfe_residuals(m: ModelGeometry, point, order=4, constant=None, w_tol=1e-12) -> CFEResidualReport:
    """Friedrich's six equations and the four tractor equations at a point.

    Friedrich side, with mu = grad sigma and rho = -(Delta + J) sigma / d:
      F1 nabla sigma - mu, F2 nabla mu + sigma P + rho g, F3 nabla rho - P mu,
      F4 2 sigma rho + |mu|^2 - c, F5 C-space with K = W / sigma, F6 div K.
    Tractor side: nabla I, I^2 - c, kappa I, the skew derivative of kappa.
    """
    point = tuple(float(x) for x in point)
    s = m.suite(point, order)
    d = m.dim
    sg = m.sigma_jet(point, order)
    mu = sg.grad()
    rho = -(laplacian(s, sg) + s.J * sg) / d
    mu_up = contract("ab,b->a", s.ginv, mu)
    I2 = 2 * sg * rho + contract("a,a->", mu_up, mu)
    c = float(m.expected.get("I2", I2.value)) if constant is None else float(constant)

    F = {}
    F["F1_dsigma"] = _vmax(s.nabla(sg, "") - mu)
    F2 = s.nabla(mu, "d") + s.P * sg + s.g * rho
    F3 = s.nabla(rho, "") - contract("ab,b->a", s.P, mu_up)
    F["F2_dmu"] = _vmax(F2)
    F["F3_drho"] = _vmax(F3)
    F["F4_norm"] = abs(float(I2.value) - c)

    I = scale_tractor(sg, s).jet
    A = {"T": connection_matrix(s)}
    dI = s.nabla(I, "T", A)
    kap = tractor_curvature(s)
    kI = contract("abXY,Y->abX", kap, I)
    h = metric_matrix(s)
    kL = contract("DX,bcXE->bcDE", h, kap)
    dk = s.nabla(kL, "ddSS", A)
    T = {"T1_nabla_I": _vmax(dI), "T2_norm": abs(float(I2.value) - c),
         "T3_kappa_I": _vmax(kI), "T4_bianchi": _vmax(_skew_first3(dk))}

    top, mid, bot = slots(dI, axis=1)
    agree = {"F1": _vmax(top - (s.nabla(sg, "") - mu)), "F2": _vmax(mid - F2),
             "F3": _vmax(bot - F3)}

    errors = {}
    flat_w = d < 4 or float(np.max(np.abs(s.W_low.c))) <= w_tol
    Wmu = contract("abcd,d->abc", s.W_low, mu_up)
    if abs(float(sg.value)) > 1e-10:
        F5 = -s.C - Wmu / sg
        K = s.W_low / sg
        F["F5_cspace"] = _vmax(F5)
        F["F6_divK"] = _vmax(contract("ed,eabcd->abc", s.ginv, s.nabla(K, "dddd")))
        # both ways: middle slot of kappa I is -sigma F5, and the contracted
        # Bianchi identity turns div K into (-(d-3) C - W mu / sigma) / sigma
        agree["F5"] = _vmax(kI[:, :, 1:d + 1] + sg * F5)
        via = (-(d - 3) * s.C - Wmu / sg) / sg
        agree["F6"] = abs(F["F6_divK"] - _vmax(via))
    elif flat_w:
        F["F5_cspace"] = _vmax(-s.C)
        F["F6_divK"] = 0.0
    else:
        errors["K"] = "sigma vanishes and W does not: regularity of W/sigma is unverifiable"
    return CFEResidualReport(point, c, F, T, agree, errors)


# ---- curved orbit decomposition ------------------------------------------------------------------

def _intrinsic_test_tractor(chart: AdaptedChart):
    Y = [restrict(c) for c in chart.coords[1:]]
    n = len(Y) + 2
    comps = [1.0 + 0.3 * Y[i % len(Y)] - 0.2 * Y[(i + 1) % len(Y)] * Y[i % len(Y)] + 0.1 * i
             for i in range(n)]
    return jets.stack(comps)


def orbit_checks(m: ModelGeometry, point, order=5) -> dict:
    """Hypersurface checks at a zero of sigma: N = I, umbilicity, W n, Fialkow, agreement."""
    chart = AdaptedChart(m.chart.metric, m.sigma, point, order, m.signature)
    hd = HypersurfaceData(chart)
    s = hd.suite
    I = scale_tractor(chart.sigma, s).jet
    c = abs(float(restrict(contract("X,X->", I, contract("XY,Y->X", metric_matrix(s), I))).value))
    out = {}
    out["N_equals_I"] = rel_residual(restrict(hd.N()), restrict(I) / math.sqrt(c))
    out["umbilic"] = _vmax(restrict(hd.ext["Lo"]))
    if m.dim >= 4:
        out["weyl_normal"] = _vmax(restrict(contract("abcd,d->abc", s.W, hd.ext["nup"])))
        out["fialkow"] = _vmax(hd.fialkow_bar())
        Vbar = _intrinsic_test_tractor(chart)
        lhs, _ = hd.gauss_terms(Vbar)
        dbar = tnabla(WeightedField(Vbar, 0.0, "T"), hd.intrinsic_suite).jet
        out["intrinsic_agreement"] = rel_residual(lhs, hd.to_ambient_on(dbar))
    return out


def curved_orbit_report(m: ModelGeometry, points, order=5, tol=1e-10) -> list:
    """Sign classification of sigma; hypersurface checks on its zero set."""
    if m.sigma is None:
        raise ModelError(f"model {m.name} has no defining density")
    out = []
    for p in points:
        p = np.asarray(p, dtype=float)
        sg = m.sigma_jet(p, 1)
        v = float(sg.value)
        cls = "+" if v > tol else "-" if v < -tol else "0"
        rec = {"point": p.tolist(), "class": cls, "sigma": v}
        if cls == "0":
            grad = sg.grad().value
            if float(np.max(np.abs(grad))) < 1e-8:
                rec["zero_type"] = "isolated"
                rec["skipped"] = "degenerate zero: d sigma vanishes, no hypersurface checks"
            else:
                rec["zero_type"] = "hypersurface"
                rec["checks"] = orbit_checks(m, p, order)
        out.append(rec)
    return out


# ---- geometry specs from JSON -----------------------------------------------------------------

_FUNCS = ("sin", "cos", "exp", "log", "sqrt", "sinh", "cosh")
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_CMPOPS = (ast.Lt, ast.LtE, ast.Gt, ast.GtE)


def _check_node(node, dim, allow_compare):
    if isinstance(node, ast.Expression):
        return _check_node(node.body, dim, allow_compare)
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check_node(node.left, dim, False)
        _check_node(node.right, dim, False)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        _check_node(node.operand, dim, False)
    elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        pass
    elif isinstance(node, ast.Name):
        if node.id in _CONSTS:
            return
        if not (node.id.startswith("x") and node.id[1:].isdigit() and 1 <= int(node.id[1:]) <= dim):
            raise ModelError(f"unknown identifier {node.id!r}")
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS) or node.keywords \
                or len(node.args) != 1:
            raise ModelError("only one-argument calls of " + ", ".join(_FUNCS) + " are allowed")
        _check_node(node.args[0], dim, False)
    elif allow_compare and isinstance(node, ast.Compare) and all(isinstance(o, _CMPOPS) for o in node.ops):
        _check_node(node.left, dim, False)
        for c in node.comparators:
            _check_node(c, dim, False)
    else:
        raise ModelError(f"unsupported syntax: {type(node).__name__}")


def _eval(node, env):
    if isinstance(node, ast.BinOp):
        a, b = _eval(node.left, env), _eval(node.right, env)
        op = node.op
        if isinstance(op, ast.Add):
            return a + b
        if isinstance(op, ast.Sub):
            return a - b
        if isinstance(op, ast.Mult):
            return a * b
        if isinstance(op, ast.Div):
            return a / b
        if isinstance(b, Jet):
            raise ModelError("exponents must not depend on the coordinates")
        if isinstance(a, Jet) and float(b).is_integer():
            return a ** int(b)
        return a ** b
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return _CONSTS[node.id] if node.id in _CONSTS else env[int(node.id[1:]) - 1]
    if isinstance(node, ast.Call):
        v = _eval(node.args[0], env)
        fn = node.func.id
        return getattr(jets, fn)(v) if isinstance(v, Jet) else float(getattr(np, fn)(v))
    if isinstance(node, ast.Compare):
        left = _eval(node.left, env)
        for op, c in zip(node.ops, node.comparators):
            right = _eval(c, env)
            ok = {ast.Lt: left < right, ast.LtE: left <= right,
                  ast.Gt: left > right, ast.GtE: left >= right}[type(op)]
            if not ok:
                return False
            left = right
        return True
    raise ModelError(f"cannot evaluate {type(node).__name__}")


def compile_expression(src, dim, allow_compare=False):
    """Parse an expression over x1..xd into a function of a coordinate list."""
    if isinstance(src, (int, float)):
        val = float(src)
        return lambda X: val
    try:
        tree = ast.parse(str(src).replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ModelError(f"cannot parse {src!r}: {exc.msg}") from None
    _check_node(tree, dim, allow_compare)
    return lambda X: _eval(tree.body, X)


def model_from_spec(doc) -> ModelGeometry:
    """Build a model from a JSON document or its parsed dict.

    Keys: name, dim, signature, metric (d x d expressions), optional sigma,
    domain (inequality strings), box [lo, hi] and expected (record).
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    try:
        name, d = str(doc["name"]), int(doc["dim"])
        rows = doc["metric"]
    except KeyError as exc:
        raise ModelError(f"geometry spec lacks {exc.args[0]!r}") from None
    sig = tuple(int(x) for x in doc.get("signature", [1] * d))
    if len(rows) != d or any(len(r) != d for r in rows) or len(sig) != d:
        raise ModelError("metric must be a d x d array and signature of length d")
    fns = [[compile_expression(e, d) for e in r] for r in rows]
    for i in range(d):
        for j in range(i):
            if str(rows[i][j]) != str(rows[j][i]):
                raise ModelError(f"metric entries ({i + 1},{j + 1}) and ({j + 1},{i + 1}) differ")

    def metric(X):
        z = X[0] * 0.0
        return [[z + f(X) for f in r] for r in fns]

    sigma = None
    if doc.get("sigma") is not None:
        sfn = compile_expression(doc["sigma"], d)
        sigma = lambda X: X[0] * 0.0 + sfn(X)
    conds = [compile_expression(c, d, allow_compare=True) for c in doc.get("domain", [])]
    domain = lambda x: all(bool(c(list(map(float, x)))) for c in conds)
    box = tuple(float(v) for v in doc.get("box", (-0.5, 0.5)))
    chart = MetricChart(name, d, sig, metric, domain, box)
    m = ModelGeometry(name, chart, sigma, dict(doc.get("expected", {})), doc.get("description", ""))
    if m.expected:
        p = _probe_point(m)
        if domain(p):
            bad = {k: v for k, v in verify_expected(m, p, order=3).items() if v > 1e-9}
            if bad:
                raise ModelError(f"spec {name} fails its invariants record: {bad}")
    return m

