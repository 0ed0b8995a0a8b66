import numpy as np
import pytest

from conftest import flat_metric, poly, random_metric
from conftractor import conformal as C
from conftractor import jets as J
from conftractor.conformal import ConformalFactor, WeightedField as WF
from conftractor.models import get_model, sample_points
from conftractor.riemann import CurvatureSuite


def test_flat_laplacian_of_fundamental_solution():
    d = 4
    X = J.coordinates([0.3, -0.2, 0.5, 0.1], 3)
    r2 = sum(x * x for x in X)
    s = CurvatureSuite(flat_metric(d, 3))
    assert abs(float(C.laplacian(s, J.power(r2, 1 - d / 2)).value)) < 1e-12
    assert float(C.laplacian(s, r2).value) == pytest.approx(2 * d)


def test_yamabe_of_conformally_flat_metric(rng):
    # for g = Omega^2 delta, Y_g(Omega^{1-d/2} f) = Omega^{-1-d/2} lap f
    d = 5
    X = J.coordinates(rng.uniform(-0.3, 0.3, d), 3)
    om = J.exp(poly(X, rng, 2, 0.3))
    f = poly(X, rng, 3)
    flat = CurvatureSuite(flat_metric(d, 3))
    s = CurvatureSuite(C.rescale_metric(flat_metric(d, 3), om))
    w = 1 - d / 2
    lhs = C.yamabe(s, WF(om ** w * f, w)).jet
    rhs = om ** (-1 - d / 2) * C.laplacian(flat, f)
    assert J.rel_residual(lhs, rhs) < 1e-10


def test_more_laws(rng):
    for d in (3, 4):
        X = J.coordinates(rng.uniform(-0.3, 0.3, d), 3)
        g = random_metric(X, rng)
        om = J.exp(poly(X, rng, 2, 0.3))
        f = poly(X, rng)
        F = J.stack([J.stack([poly(X, rng, 2) for _ in range(d)]) for _ in range(d)])
        assert C.density_law_residual(g, om, f, 0.7) < 1e-12
        assert C.gradient_invariance_residual(g, om, f) < 1e-12
        assert C.twoform_skew_residual(g, om, F - F.T) < 1e-10
        assert C.almost_einstein_covariance_residual(g, om, f) < 1e-10


def test_almost_einstein_operator_on_models(rng):
    for name in ("hyperbolic", "sphere_sigma", "de_sitter"):
        m = get_model(name, 4)
        for p in sample_points(m, 2, rng):
            A = C.almost_einstein_op(m.suite(p, 3), m.sigma_jet(p, 3))
            assert np.abs(A.value).max() < 1e-10
    m = get_model("perturbed", 4)
    p = np.full(4, 0.1)
    X = J.coordinates(p, 3)
    A = C.almost_einstein_op(m.suite(p, 3), X[0] * 0 + 1.0)
    assert np.abs(A.value).max() > 1e-3


def test_weighted_field_algebra():
    X = J.coordinates([0.1, 0.2, 0.3], 2)
    a = WF(X[0], 1.0)
    b = WF(X[1], -0.5)
    v = WF(J.stack(X), 2.0, "u")
    assert (a * b).weight == 0.5
    assert (a * v).kinds == "u" and (a * v).weight == 3.0
    assert (2.0 * a).weight == 1.0
    assert (a + a).weight == 1.0
    with pytest.raises(J.JetError):
        a + b
    with pytest.raises(J.JetError):
        v * v
    with pytest.raises(J.JetError):
        WF(J.stack(X), 0.0, "")


def test_guards():
    X = J.coordinates([0.0, 0.0, 0.0], 3)
    s = CurvatureSuite(flat_metric(3, 3))
    with pytest.raises(J.JetError):
        ConformalFactor(X[0] - 1.0)
    with pytest.raises(J.JetError):
        C.yamabe(s, WF(X[0], 0.0))
    with pytest.raises(J.JetError):
        C.maxwell_residuals(flat_metric(3, 3), J.exp(X[0]), J.stack(X))
    with pytest.raises(J.JetError):
        C.retrivialize(WF(J.stack([X[0]] * 5), 0.0, "T"), ConformalFactor(J.exp(X[0])))
    cf = ConformalFactor(J.exp(X[1]))
    r = C.retrivialize(WF(X[0], 2.0), cf)
    assert J.rel_residual(r.jet, X[0] * J.exp(2 * X[1])) < 1e-13
    assert J.rel_residual(cf.upsilon, J.stack([X[0] * 0, X[0] * 0 + 1, X[0] * 0])) < 1e-13
