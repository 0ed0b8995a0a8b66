"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary prints a
PASS/FAIL line for each criterion.
"""

import subprocess
import sys

import numpy as np
import pytest

from conftest import flat_metric, poly, random_metric
from conftractor import conformal as C
from conftractor import jets as J
from conftractor import tractor as T
from conftractor.adjoint import (flat_conformal_generators, killing_residual,
                                 lie_derivative_tractor, prolongation_connection, splitting_L)
from conftractor.boundary import (SL2Context, bracket_residuals, enveloping_residuals,
                                  interior_scale_residual, obstruction_ratio, residual_order,
                                  solve_extension, tangential_pk, tangentiality_residual)
from conftractor.conformal import ConformalFactor, WeightedField as WF
from conftractor.hypersurface import AdaptedChart, HypersurfaceData, invariance_residuals, restrict
from conftractor.jets import rel_residual
from conftractor.models import (boundary_guess, cfe_residuals, curved_orbit_report, get_model,
                                orbit_checks, sample_points)
from conftractor.riemann import CurvatureSuite

pytestmark = pytest.mark.filterwarnings("error::RuntimeWarning")


def vmax(J_):
    return float(np.max(np.abs(J_.value)))


@pytest.mark.criterion(1, "curvature of the round sphere and the Poincare ball")
def test_constant_curvature_ground_truth(rng):
    sph, ball = get_model("sphere", 4), get_model("poincare_ball", 4)
    worst = 0.0
    for p in sample_points(sph, 20, rng):
        s = sph.suite(p, 4)
        worst = max(worst, abs(float(s.Sc.value) - 12) / 12, abs(float(s.J.value) - 2) / 2,
                    rel_residual(s.P, 0.5 * s.g), vmax(s.W), vmax(s.C), vmax(s.B))
    for p in sample_points(ball, 20, rng):
        s = ball.suite(p, 2)
        worst = max(worst, abs(float(s.Sc.value) + 12) / 12)
    assert worst < 1e-9, worst


@pytest.mark.criterion(2, "conformal transformation laws and d = 4 Maxwell covariance")
def test_transformation_laws(rng):
    worst = 0.0
    for d in (3, 4, 5):
        for _ in range(10):
            X = J.coordinates(rng.uniform(-0.3, 0.3, d), 3)
            g = random_metric(X, rng)
            om = J.exp(poly(X, rng, 2, 0.3))
            v = J.stack([poly(X, rng, 2) for _ in range(d)])
            F = J.stack([J.stack([poly(X, rng, 2) for _ in range(d)]) for _ in range(d)])
            F2 = F - F.T
            worst = max(worst, C.vector_law_residual(g, om, v), C.oneform_law_residual(g, om, v),
                        C.twotensor_law_residual(g, om, F), C.schouten_law_residual(g, om),
                        C.j_law_residual(g, om), C.divergence_law_residual(g, om, F2),
                        C.weyl_invariance_residual(g, om))
            if d == 4:
                worst = max(worst, max(C.maxwell_residuals(g, om, v).values()))
    assert worst < 1e-9, worst


@pytest.mark.criterion(3, "Yamabe operator covariance")
def test_yamabe_covariance(rng):
    worst = 0.0
    for d in (3, 4, 5):
        for _ in range(10):
            X = J.coordinates(rng.uniform(-0.3, 0.3, d), 3)
            worst = max(worst, C.yamabe_covariance_residual(random_metric(X, rng),
                                                            J.exp(poly(X, rng, 2, 0.3)),
                                                            poly(X, rng)))
    assert worst < 1e-9, worst


@pytest.mark.criterion(4, "tractor connection, metric, splitting table and Thomas-D identities")
def test_tractor_layer(rng):
    d = 4
    X = J.coordinates(rng.uniform(-0.3, 0.3, d), 5)
    g = random_metric(X, rng)
    s = CurvatureSuite(g)
    om = J.exp(poly(X, rng, 2, 0.3))
    cf = ConformalFactor(om)
    sh = CurvatureSuite(C.rescale_metric(g, om))
    V = J.stack([poly(X, rng) for _ in range(d + 2)])
    U = J.stack([poly(X, rng) for _ in range(d + 2)])
    # change of scale intertwines the connections
    Vh = T.tractor_transform(WF(V, 0, "T"), s, cf)
    r = [rel_residual(T.tnabla(Vh, sh).jet,
                      T.tractor_transform(T.tnabla(WF(V, 0, "T"), s), s, cf).jet)]
    # metricity: d h(U, V) = h(nabla U, V) + h(U, nabla V)
    dU = T.tnabla(WF(U, 0, "T"), s).jet
    dV = T.tnabla(WF(V, 0, "T"), s).jet
    r.append(rel_residual(T.hdot(U, V, s).grad(), T.hdot(dU.T, V, s) + T.hdot(dV.T, U, s)))
    # splitting table, exact
    tab = T.projector_table(s)
    assert float(tab["XY"].value) == 1.0
    for k in ("XX", "YY"):
        assert float(tab[k].value) == 0.0
    assert np.all(tab["XZ"].value == 0.0) and np.all(tab["YZ"].value == 0.0)
    assert np.abs(tab["ZZ"].value - s.g.value).max() < 1e-14     # g g^-1 g, roundoff only
    for w in (-1.0, 0.0, 0.7, 1 - d / 2):
        f = poly(X, rng)
        DD = T.thomas_d(T.thomas_d(WF(f, w), s), s)
        r.append(vmax(T.hcontract(DD.jet, 0, 1, s)) / max(1.0, vmax(f)))
        r.append(rel_residual(T.dx_identity(WF(f, w), s), (d + 2 * w + 2) * (d + w) * f))
    assert max(r) < 1e-9, r


@pytest.mark.criterion(5, "almost Einstein models and the sign of I^2")
def test_almost_einstein_models(rng):
    hyp = get_model("hyperbolic", 4)
    r = []
    for p in sample_points(hyp, 5, rng):
        s = hyp.suite(p, 3)
        sg = hyp.sigma_jet(p, 3)
        r.append(vmax(T.tnabla(T.scale_tractor(sg, s), s).jet))
        r.append(abs(float(T.i_squared(sg, s).value) - 1.0))
    sph = get_model("sphere_sigma", 4)
    rf = get_model("ricci_flat", 4)
    for p in sample_points(sph, 5, rng):
        r.append(abs(float(T.i_squared(sph.sigma_jet(p, 2), sph.suite(p, 2)).value) + 1.0))
    pts = sample_points(rf, 5, rng)
    for p in pts:
        r.append(abs(float(T.i_squared(rf.sigma_jet(p, 2), rf.suite(p, 2)).value)))
    assert max(r) < 1e-9, r
    rep = curved_orbit_report(rf, [np.zeros(4)] + pts)
    assert rep[0]["class"] == "0" and rep[0]["zero_type"] == "isolated"
    assert all(x["class"] == "+" for x in rep[1:])
    rep = curved_orbit_report(hyp, [np.zeros(4), np.array([0.9, 0.6, 0, 0])])
    assert [x["class"] for x in rep] == ["+", "-"]


@pytest.mark.criterion(6, "Paneitz operator: flat P4 = Laplacian squared, curved Box D f")
def test_paneitz(rng):
    r = []
    for d in (4, 5):
        s = CurvatureSuite(flat_metric(d, 4))
        X = J.coordinates(rng.uniform(-0.3, 0.3, d), 4)
        f = poly(X, rng, 4, 1.0)
        P4 = T.paneitz(WF(f, 2 - d / 2), s).jet
        r.append(abs(float(P4.value) - float(C.laplacian(s, C.laplacian(s, f)).value)))
    X = J.coordinates(np.zeros(4), 4)
    s = CurvatureSuite(flat_metric(4, 4))
    r2 = sum(x * x for x in X)
    r.append(abs(float(T.paneitz(WF(r2 * r2, 0.0), s).jet.value) - 192.0))
    assert max(r) < 1e-10, r
    X = J.coordinates(rng.uniform(-0.3, 0.3, 4), 4)
    s = CurvatureSuite(random_metric(X, rng))
    V = T.box(T.thomas_d(WF(poly(X, rng), 0.0), s), s).jet
    assert np.abs(V.value[:-1]).max() < 1e-8


@pytest.mark.criterion(7, "hypersurfaces: umbilic sphere, ellipsoid Gauss formula, invariance")
def test_hypersurface_suite(rng):
    flat = get_model("flat", 4).chart.metric
    sphere = lambda X: 0.5 * (sum(x * x for x in X) - 1)
    u = rng.normal(size=4)
    p = u / np.linalg.norm(u)
    hd = HypersurfaceData(AdaptedChart(flat, sphere, p, 5))
    assert vmax(restrict(hd.ext["Lo"])) < 1e-9
    assert vmax(restrict(hd.shape_form()[1:])) < 1e-9          # tangential derivative of N
    ell = get_model("ellipsoid", 4)
    q = boundary_guess(ell, rng.uniform(-0.5, 0.5, 4))
    chart = AdaptedChart(ell.chart.metric, ell.sigma, q, 5)
    hd = HypersurfaceData(chart)
    assert vmax(restrict(hd.ext["Lo"])) > 1e-2
    assert vmax(hd.fialkow_bar()) > 1e-2
    Vb = J.Jet(rng.normal(size=(5, J.ncoef(3, 5))) * 0.3, 3, 5)
    assert hd.gauss_residual(Vb) < 1e-8
    X = chart.coords
    om = J.exp(0.3 * X[0] * X[1] - 0.2 * X[2] ** 2 + 0.1 * X[3] + 0.25 * X[0] ** 2)
    assert invariance_residuals(chart, om)["Lo"] < 1e-9


@pytest.mark.criterion(8, "conformal infinity of the hyperbolic model")
def test_conformal_infinity(rng):
    hyp = get_model("hyperbolic", 4)
    for p in sample_points(hyp, 2, rng):
        res = orbit_checks(hyp, boundary_guess(hyp, p), order=5)
        assert res["N_equals_I"] < 1e-9 and res["weyl_normal"] < 1e-9, res
        assert res["fialkow"] < 1e-9 and res["umbilic"] < 1e-9, res
        assert res["intrinsic_agreement"] < 1e-8, res


@pytest.mark.criterion(9, "sl(2) relations, enveloping identities, interior identity")
def test_sl2(rng):
    worst = 0.0
    for name in ("hyperbolic", "anti_de_sitter"):
        m = get_model(name, 4)
        p = sample_points(m, 1, rng)[0]
        s = m.suite(p, 8)
        ctx = SL2Context(s, m.sigma_jet(p, 8))
        X = J.coordinates(p, 8)
        for w in (-2.0, -1.0, 0.0, 0.5, 1.0):
            f = WF(poly(X, rng, 3), w)
            worst = max(worst, max(bracket_residuals(ctx, f).values()))
            for k in (1, 2, 3):
                worst = max(worst, max(enveloping_residuals(ctx, f, k).values()))
    assert worst < 1e-9, worst
    m = get_model("hyperbolic", 4)
    p = sample_points(m, 1, rng)[0]
    X = J.coordinates(p, 5)
    res = interior_scale_residual(m.suite(p, 5), m.sigma_jet(p, 5), WF(poly(X, rng), 0.3))
    assert max(res.values()) < 1e-8, res


@pytest.fixture(scope="module")
def boundary_chart():
    d = 3
    hyp = get_model("hyperbolic", d)
    u = np.random.default_rng(5).normal(size=d)
    q = np.abs(u) / np.linalg.norm(u)
    return AdaptedChart(hyp.chart.metric, hyp.sigma, q, 13)


@pytest.mark.criterion(10, "tangential operators ignore sigma g")
def test_tangentiality(rng):
    d = 3
    hyp = get_model("hyperbolic", d)
    u = rng.normal(size=d)
    chart = AdaptedChart(hyp.chart.metric, hyp.sigma, np.abs(u) / np.linalg.norm(u), 8)
    ctx = SL2Context(chart.suite(), chart.sigma)
    X = chart.coords
    worst = 0.0
    for k in (1, 2, 3):
        f = WF(J.exp(0.3 * X[1] - 0.2 * X[2] * X[0]) + X[0] ** 2, (k - (d - 1)) / 2)
        for _ in range(5):
            g = J.cos(rng.normal() * X[1] + 0.3 * rng.normal() * X[0] * X[2]) + rng.normal() * X[2]
            worst = max(worst, tangentiality_residual(chart, ctx, f, g, k))
    assert worst < 1e-9, worst


@pytest.mark.criterion(11, "formal extension: generic weight and the critical obstruction")
def test_extension(boundary_chart, rng):
    ch = boundary_chart
    one = ch.sigma * 0 + 1.0
    st = solve_extension(ch, one, 0.3, 5)
    assert st.reached == 5
    assert residual_order(ch, st.solution, 0.3, 5)[0]
    ctx = SL2Context(ch.suite(), ch.sigma)
    X = ch.coords
    ratios = []
    for _ in range(5):
        f0 = (J.exp(0.3 * rng.normal() * X[1] + 0.2 * rng.normal() * X[2] ** 2)
              + rng.normal() * X[1] * X[2])
        st = solve_extension(ch, f0, 0.0, 3)
        assert st.obstructed_at == 1
        ratios.append(obstruction_ratio(st, restrict(tangential_pk(ctx, WF(f0, 0.0), 2).jet)))
    assert max(ratios) - min(ratios) < 1e-6, ratios


@pytest.mark.criterion(12, "Friedrich equations and the tractor system on compactifications")
def test_cfe(rng):
    for name in ("hyperbolic", "anti_de_sitter", "de_sitter"):
        m = get_model(name, 4)
        for p in sample_points(m, 2, rng):
            rep = cfe_residuals(m, p)
            assert not rep.errors
            assert rep.max_friedrich() < 1e-9 and rep.max_tractor() < 1e-9, rep.as_dict()
            assert max(rep.agreement.values()) < 1e-9, rep.agreement


@pytest.mark.criterion(13, "conformal Killing fields and the prolonged connection")
def test_conformal_killing(rng):
    d = 3
    p = rng.uniform(-0.4, 0.4, d)
    X = J.coordinates(p, 4)
    s = CurvatureSuite(flat_metric(d, 4))
    names, gens = flat_conformal_generators(X)
    assert len(gens) == 10
    for k in gens:
        assert prolongation_connection(splitting_L(k, s), s).max_abs() < 1e-9
        assert vmax(killing_residual(k, s)) < 1e-9
    bad = gens[0] + 0.3 * J.stack([X[0] * X[1], X[2] ** 2, X[0] * 0.0])
    assert prolongation_connection(splitting_L(bad, s), s).max_abs() > 1e-3
    sph = get_model("sphere", 3)
    ss = sph.suite(p, 4)
    I = T.scale_tractor(sph.sigma_jet(p, 4), ss).jet
    for n, k in zip(names, gens):
        if n.startswith("rotation"):
            comp, slot, status = lie_derivative_tractor(k, I, ss)
            assert status == "ok" and vmax(comp) < 1e-9 and vmax(slot) < 1e-9


@pytest.mark.criterion(14, "identical seeds give byte-identical CLI reports")
def test_determinism():
    cmd = [sys.executable, "-m", "conftractor", "verify", "--geometry", "hyperbolic", "--dim", "4",
           "--seed", "11", "--json", "--suite", "curvature,einstein,tractor"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and b'"schema": "tractor-report/1"' in a


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
