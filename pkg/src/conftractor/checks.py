"""Verification suites run by the command line front end.

Each check has a descriptive id, an anchor naming the identity it tests, a
minimal jet order and an applicability test on the model.  A check samples
points with its own PCG64 stream derived from (seed, check id), so results do
not depend on scheduling.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jets
from .adjoint import (flat_conformal_generators, lie_derivative_tractor, prolongation_connection,
                      splitting_L, static_checks)
from .boundary import SL2Context, bracket_residuals, commutator_residual
from .conformal import (ConformalFactor, WeightedField, almost_einstein_op, j_law_residual,
                        rescale_metric, schouten_law_residual, weyl_invariance_residual,
                        yamabe_covariance_residual)
from .hypersurface import AdaptedChart, HypersurfaceData, invariance_residuals, restrict
from .jets import Jet, OrderBudgetError, contract, coordinates, rel_residual
from .models import (ModelGeometry, boundary_guess, cfe_residuals, orbit_checks, sample_points,
                     scalar_curvature_relation, verify_eps, verify_expected)
from .riemann import CurvatureSuite
from .tractor import (connection_matrix, dx_identity, hcontract, metric_matrix,
                      projector_table, projector_transport_residual, scale_tractor, thomas_d,
                      tnabla, tractor_transform, transform_matrix)

SUITES = ("curvature", "einstein", "conformal", "tractor", "boundary", "hypersurface", "orbit",
          "cfe", "killing", "static")


@dataclass(frozen=True)
class Check:
    id: str
    anchor: str
    min_order: int
    applies: Callable
    run: Callable          # (model, rng, order) -> (max residual, points sampled)
    tol: float = 1e-9
    points: int = 3

    @property
    def suite(self):
        return self.id.split(".", 1)[0]


def check_rng(seed, check_id):
    """The PCG64 stream of one check: SeedSequence(seed) spawned at crc32(id)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(check_id.encode()),))
    return np.random.Generator(np.random.PCG64(ss))


def _poly(X, rng, deg=2, amp=0.3):
    out = X[0] * 0.0 + rng.normal() * amp
    for x in X:
        out = out + rng.normal() * amp * x
    if deg >= 2:
        for i in range(len(X)):
            for j in range(i, len(X)):
                out = out + rng.normal() * amp * 0.5 * X[i] * X[j]
    return out


def _omega(X, rng):
    return jets.exp(_poly(X, rng, 2, 0.2))


def _vmax(J):
    return float(np.max(np.abs(J.value))) if J.c.size else 0.0


def _riemannian(m):
    return all(s > 0 for s in m.signature)


# ---- check bodies --------------------------------------------------------------------

def _record(m, rng, order):
    pts = sample_points(m, 20, rng)
    return max(max(verify_expected(m, p, order).values(), default=0.0) for p in pts), len(pts)


def _pure_trace(m, rng, order):
    r = 0.0
    pts = sample_points(m, 3, rng)
    for p in pts:
        s = m.suite(p, order)
        r = max(r, _vmax(s.P - s.g * (s.J / m.dim)), _vmax(s.C), _vmax(s.B) if m.dim >= 4 else 0.0)
    return r, len(pts)


def _eps(m, rng, order):
    pts = sample_points(m, 3, rng)
    return max(verify_eps(m, p) for p in pts), len(pts)


def _parallel(m, rng, order):
    pts = sample_points(m, 3, rng)
    r = 0.0
    for p in pts:
        s = m.suite(p, order)
        I = scale_tractor(m.sigma_jet(p, order), s)
        r = max(r, _vmax(tnabla(I, s).jet))
    return r, len(pts)


def _norm_constant(m, rng, order):
    from .tractor import i_squared
    pts = sample_points(m, 3, rng)
    c = m.expected["I2"]
    return max(abs(float(i_squared(m.sigma_jet(p, order), m.suite(p, order)).value) - c)
               for p in pts), len(pts)


def _scalar_relation(m, rng, order):
    pts = [p for p in sample_points(m, 6, rng) if abs(float(m.sigma_jet(p, 0).value)) > 1e-3][:3]
    return max((scalar_curvature_relation(m, p, order) for p in pts), default=0.0), len(pts)


def _ae_operator(m, rng, order):
    pts = sample_points(m, 3, rng)
    return max(_vmax(almost_einstein_op(m.suite(p, order), m.sigma_jet(p, order)))
               for p in pts), len(pts)


def _conformal_laws(m, rng, order):
    pts = sample_points(m, 2, rng)
    r = 0.0
    for p in pts:
        X = coordinates(p, order)
        g = m.chart.metric_jet(p, order)
        om = _omega(X, rng)
        r = max(r, schouten_law_residual(g, om), j_law_residual(g, om),
                weyl_invariance_residual(g, om))
    return r, len(pts)


def _yamabe(m, rng, order):
    pts = sample_points(m, 2, rng)
    r = 0.0
    for p in pts:
        X = coordinates(p, order)
        g = m.chart.metric_jet(p, order)
        r = max(r, yamabe_covariance_residual(g, _omega(X, rng), _poly(X, rng, 2)))
    return r, len(pts)


def _metricity(m, rng, order):
    pts = sample_points(m, 2, rng)
    r = 0.0
    for p in pts:
        s = m.suite(p, order)
        h = metric_matrix(s)
        r = max(r, _vmax(s.nabla(h, "SS", {"T": connection_matrix(s)})),
                projector_transport_residual(s))
    return r, len(pts)


def _projector_products(m, rng, order):
    p = sample_points(m, 1, rng)[0]
    s = m.suite(p, order)
    t = projector_table(s)
    d = m.dim
    want = {"XX": 0.0, "XY": 1.0, "YY": 0.0, "XZ": np.zeros(d), "YZ": np.zeros(d),
            "ZZ": s.g.value}
    return max(float(np.max(np.abs(t[k].value - want[k]))) for k in want), 1


def _intertwining(m, rng, order):
    """nabla-hat (M V) = M nabla V for the change-of-scale matrix M."""
    pts = sample_points(m, 2, rng)
    r = 0.0
    d = m.dim
    for p in pts:
        X = coordinates(p, order)
        g = m.chart.metric_jet(p, order)
        om = _omega(X, rng)
        s, sh = CurvatureSuite(g, m.signature), CurvatureSuite(rescale_metric(g, om), m.signature)
        cf = ConformalFactor(om)
        V = jets.stack([_poly(X, rng, 2) for _ in range(d + 2)])
        Vh = tractor_transform(WeightedField(V, 0.0, "T"), s, cf)
        lhs = tnabla(Vh, sh).jet
        rhs = contract("XY,aY->aX", transform_matrix(s, cf), tnabla(WeightedField(V, 0.0, "T"), s).jet)
        r = max(r, rel_residual(lhs, rhs))
    return r, len(pts)


def _thomas_d(m, rng, order):
    pts = sample_points(m, 1, rng)
    d = m.dim
    r = 0.0
    for p in pts:
        s = m.suite(p, order)
        X = coordinates(p, order)
        for w in (-1.0, 0.0, 0.7, 1 - d / 2):
            f = WeightedField(_poly(X, rng, 3), w)
            DD = thomas_d(thomas_d(f, s), s)
            r = max(r, _vmax(hcontract(DD.jet, 0, 1, s)) / max(1.0, _vmax(f.jet)))
            want = (d + 2 * w + 2) * (d + w) * f.jet
            r = max(r, rel_residual(dx_identity(f, s), want))
    return r, len(pts)


def _sl2(m, rng, order):
    pts = sample_points(m, 1, rng)
    r = 0.0
    for p in pts:
        s = m.suite(p, order)
        ctx = SL2Context(s, m.sigma_jet(p, order))
        X = coordinates(p, order)
        for w in (-2.0, -1.0, 0.0, 0.5, 1.0):
            f = WeightedField(_poly(X, rng, 3), w)
            r = max(r, max(bracket_residuals(ctx, f).values()), commutator_residual(ctx, f))
    return r, len(pts)


def _boundary_points(m, rng, n):
    return [boundary_guess(m, p) for p in sample_points(m, n, rng)]


def _gauss(m, rng, order):
    pts = _boundary_points(m, rng, 1)
    r = 0.0
    for q in pts:
        chart = AdaptedChart(m.chart.metric, m.sigma, q, order, m.signature)
        hd = HypersurfaceData(chart)
        Y = [c for c in chart.coords[1:]]
        Vbar = jets.stack([restrict(_poly(Y, rng, 2)) for _ in range(m.dim + 1)])
        r = max(r, hd.gauss_residual(Vbar))
    return r, len(pts)


def _hyp_invariance(m, rng, order):
    pts = _boundary_points(m, rng, 1)
    r = 0.0
    for q in pts:
        chart = AdaptedChart(m.chart.metric, m.sigma, q, order, m.signature)
        om = _omega(chart.coords, rng)
        r = max(r, max(invariance_residuals(chart, om).values()))
    return r, len(pts)


def _orbit(key):
    def run(m, rng, order):
        pts = _boundary_points(m, rng, 1)
        return max(orbit_checks(m, q, order)[key] for q in pts), len(pts)
    return run


def _cfe(part):
    def run(m, rng, order):
        pts = [p for p in sample_points(m, 6, rng) if abs(float(m.sigma_jet(p, 0).value)) > 1e-3][:2]
        out = 0.0
        for p in pts:
            rep = cfe_residuals(m, p, order)
            if rep.errors:
                return math.inf, len(pts)
            vals = {"friedrich": rep.friedrich, "tractor": rep.tractor, "agreement": rep.agreement}[part]
            out = max(out, max(vals.values()))
        return out, len(pts)
    return run


def _killing_flat(m, rng, order):
    p = sample_points(m, 1, rng)[0]
    s = m.suite(p, order)
    _, gens = flat_conformal_generators(coordinates(p, order))
    return max(prolongation_connection(splitting_L(k, s), s).max_abs() for k in gens), 1


def _killing_sphere(m, rng, order):
    p = sample_points(m, 1, rng)[0]
    s = m.suite(p, order)
    X = coordinates(p, order)
    I = scale_tractor(m.sigma_jet(p, order), s).jet
    names, gens = flat_conformal_generators(X)
    r = 0.0
    for n, k in zip(names, gens):
        if n.startswith("rotation"):
            comp, slot, _ = lie_derivative_tractor(k, I, s)
            r = max(r, _vmax(comp), _vmax(slot))
    return r, 1


def _static(m, rng, order):
    p = sample_points(m, 1, rng)[0]
    s = m.suite(p, order)
    k = Jet.constant(np.eye(m.dim)[0], m.dim, order)
    res = static_checks(k, m.sigma_jet(p, order), s)
    return max(res["KI"], res["simple"]), 1


# ---- registry -----------------------------------------------------------------------------------

def _has(key):
    return lambda m: key in m.expected


def _sig(m):
    return m.sigma is not None


def _einstein(m):
    return m.sigma is not None and m.expected.get("einstein", False)


def _hyp(m):
    return m.sigma is not None and "eps" in m.expected


def _hyp4(m):
    return _hyp(m) and m.dim >= 4


CHECKS = [
    Check("curvature.invariants_record", "model invariants record (Sc, J, I^2, W, kappa)", 3,
          lambda m: bool(m.expected), _record, points=20),
    Check("curvature.pure_trace_schouten", "constant curvature: P = (J/d) g, C = 0, B = 0", 4,
          lambda m: m.name in ("sphere", "poincare_ball", "flat", "minkowski", "static_de_sitter"),
          _pure_trace),
    Check("curvature.normal_sign", "causal type of the zero locus normal", 1, _has("eps"), _eps),
    Check("einstein.parallel_scale_tractor", "almost Einstein scale <=> parallel scale tractor", 3,
          lambda m: _sig(m) and m.expected.get("einstein", True), _parallel),
    Check("einstein.constant_norm", "I^2 constant for almost Einstein scales", 2,
          lambda m: _sig(m) and "I2" in m.expected, _norm_constant),
    Check("einstein.scalar_curvature_relation", "I^2 = -2 J^sigma / d off the zero locus", 2,
          _sig, _scalar_relation),
    Check("einstein.almost_einstein_operator", "trace-free (nabla nabla + P) sigma = 0", 2,
          _einstein, _ae_operator),
    Check("conformal.curvature_laws", "Schouten, J and Weyl laws under rescaling", 3,
          lambda m: True, _conformal_laws),
    Check("conformal.yamabe_covariance", "conformal Laplacian covariance", 3,
          lambda m: True, _yamabe),
    Check("tractor.metricity", "tractor metric and splitting transport are parallel", 2,
          lambda m: True, _metricity),
    Check("tractor.projector_products", "X, Y, Z inner product table", 0,
          lambda m: True, _projector_products),
    Check("tractor.scale_change_intertwining", "tractor connection intertwines the scale change", 3,
          lambda m: True, _intertwining),
    Check("tractor.thomas_d_identities", "D^A D_A = 0 and D^A X_A f = (d+2w+2)(d+w) f", 4,
          lambda m: True, _thomas_d),
    Check("boundary.sl2_relations", "I.D, sigma and h generate sl(2); [I.D, sigma] = I^2 h", 5,
          _sig, _sl2),
    Check("hypersurface.tractor_gauss_formula", "tractor Gauss formula with Fialkow term", 5,
          _hyp4, _gauss, tol=1e-8, points=1),
    Check("hypersurface.conformal_invariance", "trace-free second fundamental form, H law and N", 3,
          _hyp, _hyp_invariance, points=1),
    Check("orbit.normal_equals_scale_tractor", "N = I on the zero locus", 4,
          lambda m: _hyp(m) and _einstein(m), _orbit("N_equals_I"), points=1),
    Check("orbit.umbilic", "conformal infinity is totally umbilic", 4,
          lambda m: _hyp(m) and _einstein(m), _orbit("umbilic"), points=1),
    Check("orbit.weyl_normal", "W(., ., ., n) = 0 on conformal infinity", 4,
          lambda m: _hyp4(m) and _einstein(m), _orbit("weyl_normal"), points=1),
    Check("orbit.fialkow", "Fialkow tensor vanishes on conformal infinity", 4,
          lambda m: _hyp4(m) and _einstein(m), _orbit("fialkow"), points=1),
    Check("orbit.intrinsic_connection", "ambient connection preserves the intrinsic tractors", 5,
          lambda m: _hyp4(m) and _einstein(m), _orbit("intrinsic_agreement"), tol=1e-8, points=1),
    Check("cfe.friedrich", "Friedrich conformal field equations", 4, _einstein, _cfe("friedrich"),
          points=2),
    Check("cfe.tractor_system", "four-equation tractor system", 4, _einstein, _cfe("tractor"),
          points=2),
    Check("cfe.both_ways", "tractor slots reproduce the Friedrich residuals", 4, _einstein,
          _cfe("agreement"), points=2),
    Check("killing.flat_generators", "prolonged connection kills L(k) for conformal Killing k", 3,
          lambda m: m.name == "flat" and m.dim == 3, _killing_flat, points=1),
    Check("killing.sphere_rotations", "Lie derivative of I along rotations of the sphere", 3,
          lambda m: m.name == "sphere", _killing_sphere, points=1),
    Check("static.killing_scale", "K_A I^A = 0 and simplicity of K for a static Killing field", 3,
          lambda m: m.expected.get("static", False), _static, points=1),
]

CHECK_IDS = {c.id: c for c in CHECKS}


def select(model: ModelGeometry, suite_filter=None):
    """Applicable checks, optionally filtered by a comma list of suites or id prefixes."""
    pats = [p.strip() for p in suite_filter.split(",")] if suite_filter else None
    out = []
    for c in CHECKS:
        if pats and not any(c.id == p or c.suite == p or c.id.startswith(p + ".") for p in pats):
            continue
        if c.applies(model):
            out.append(c)
    return sorted(out, key=lambda c: c.id)


def required_order(checks) -> int:
    return max((c.min_order for c in checks), default=0)


def run_check(c: Check, model: ModelGeometry, seed, order) -> dict:
    if order < c.min_order:
        raise OrderBudgetError(f"check {c.id} needs jet order >= {c.min_order}")
    rng = check_rng(seed, c.id)
    try:
        res, n = c.run(model, rng, c.min_order)
        err = None
    except Exception as exc:          # reported, not raised: one bad check must not hide the rest
        res, n, err = math.inf, 0, f"{type(exc).__name__}: {exc}"
    ok = bool(np.isfinite(res) and res < c.tol)
    rec = {"id": c.id, "anchor": c.anchor, "points": int(n), "max_residual": float(res),
           "tolerance": c.tol, "pass": ok}
    if err:
        rec["error"] = err
    return rec


def run_checks(checks, model, seed, order, workers=4) -> list:
    with ThreadPoolExecutor(max_workers=workers) as ex:
        recs = list(ex.map(lambda c: run_check(c, model, seed, order), checks))
    return sorted(recs, key=lambda r: r["id"])
