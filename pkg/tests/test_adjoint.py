import numpy as np
import pytest

from conftest import flat_metric, poly, random_metric
from conftractor import jets as J
from conftractor.adjoint import (AdjointTractor, adjoint_connection, adjoint_connection_slots,
                                 adjoint_from_matrix, adjoint_matrix, block_residual,
                                 flat_conformal_generators, fundamental_derivative,
                                 killing_residual, killing_system_residuals, lie_derivative_tractor,
                                 prolongation_connection, skew_residual, splitting_L, static_checks)
from conftractor.conformal import WeightedField as WF
from conftractor.models import get_model
from conftractor.riemann import CurvatureSuite
from conftractor.tractor import scale_tractor


def vmax(x):
    return float(np.max(np.abs(x.value)))


@pytest.fixture
def curved(rng):
    X = J.coordinates(rng.uniform(-0.3, 0.3, 4), 5)
    return X, CurvatureSuite(random_metric(X, rng))


def random_adjoint(X, rng):
    d = len(X)
    mu = J.stack([J.stack([poly(X, rng) for _ in range(d)]) for _ in range(d)])
    return AdjointTractor(poly(X, rng), J.stack([poly(X, rng) for _ in range(d)]),
                          mu - mu.T, J.stack([poly(X, rng) for _ in range(d)]))


def test_matrix_form(curved, rng):
    X, s = curved
    A = random_adjoint(X, rng)
    M = adjoint_matrix(A, s)
    assert skew_residual(M, s) < 1e-13 and block_residual(M, s) < 1e-13
    assert adjoint_from_matrix(M, s).residual(A) < 1e-13


def test_connection_two_ways(curved, rng):
    X, s = curved
    A = random_adjoint(X, rng)
    assert adjoint_connection(A, s).residual(adjoint_connection_slots(A, s)) < 1e-11
    with pytest.raises(J.JetError):
        adjoint_connection(adjoint_connection(A, s), s)


def test_flat_splitting_examples():
    d = 3
    X = J.coordinates([0.2, -0.1, 0.3], 3)
    s = CurvatureSuite(flat_metric(d, 3))
    names, gens = flat_conformal_generators(X)
    L = dict(zip(names, (splitting_L(k, s) for k in gens)))
    t = L["translation_0"]
    assert vmax(t.nu) == 0 and vmax(t.mu) == 0 and vmax(t.rho) == 0
    assert float(L["dilation"].nu.value) == pytest.approx(-1.0)
    assert vmax(L["dilation"].mu) < 1e-15
    r = L["rotation_01"]
    assert float(r.mu.value[0, 1]) == pytest.approx(1.0) and vmax(r.nu) == 0
    sc = L["special_conformal_0"]
    assert float(sc.nu.value) == pytest.approx(2 * 0.2)


def test_killing_system_on_sphere(rng):
    sph = get_model("sphere", 3)
    p = np.array([0.1, 0.2, -0.3])
    s = sph.suite(p, 5)
    X = J.coordinates(p, 5)
    _, gens = flat_conformal_generators(X)
    for k in gens:
        res = killing_system_residuals(k, s)
        assert max(vmax(v) for v in res.values()) < 1e-10
    bad = J.stack([X[0] ** 2, X[1] * 0, X[2] * X[0]])
    assert vmax(killing_system_residuals(bad, s)["dk"]) > 1e-2
    assert vmax(killing_residual(bad, s)) > 1e-2


def test_fundamental_derivative_kills_the_metric(curved, rng):
    X, s = curved
    A = random_adjoint(X, rng)
    assert vmax(fundamental_derivative(A, WF(s.g, 2.0, "dd"), s).jet) < 1e-12
    assert vmax(fundamental_derivative(A, WF(s.ginv, -2.0, "uu"), s).jet) < 1e-12


def test_fundamental_derivative_leibniz_and_linearity(curved, rng):
    X, s = curved
    A = random_adjoint(X, rng)
    f = WF(poly(X, rng), 0.7)
    v = WF(J.stack([poly(X, rng) for _ in range(4)]), -1.2, "u")
    lhs = fundamental_derivative(A, f * v, s).jet
    rhs = (fundamental_derivative(A, f, s).jet * v.jet
           + f.jet * fundamental_derivative(A, v, s).jet)
    assert J.rel_residual(lhs, rhs) < 1e-11
    h = poly(X, rng)
    V = WF(J.stack([poly(X, rng) for _ in range(6)]), 0.5, "T")
    assert J.rel_residual(fundamental_derivative(A * h, V, s).jet,
                          h * fundamental_derivative(A, V, s).jet) < 1e-11


def test_lie_derivative_agrees_with_fundamental_derivative(rng):
    sph = get_model("sphere", 3)
    p = np.array([0.3, -0.2, 0.1])
    s = sph.suite(p, 4)
    X = J.coordinates(p, 4)
    names, gens = flat_conformal_generators(X)
    V = J.stack([poly(X, rng) for _ in range(5)])
    for k in gens:
        comp, slot, status = lie_derivative_tractor(k, V, s)
        assert status == "ok"
        assert J.rel_residual(comp, slot) < 1e-11
        D = fundamental_derivative(splitting_L(k, s), WF(V, 0.0, "T"), s).jet
        assert J.rel_residual(comp, D) < 1e-11
    I = scale_tractor(sph.sigma_jet(p, 4), s).jet
    k = gens[names.index("special_conformal_1")]
    assert vmax(lie_derivative_tractor(k, I, s)[0]) > 1e-3      # not an isometry of the sphere


def test_lie_derivative_warns_off_killing(rng):
    X = J.coordinates([0.1, 0.2, 0.3], 3)
    s = CurvatureSuite(flat_metric(3, 3))
    bad = J.stack([X[0] ** 2, X[1], X[2]])
    with pytest.warns(UserWarning, match="not conformal Killing"):
        _, _, status = lie_derivative_tractor(bad, J.stack([X[0]] * 5), s)
    assert status == "warning"


def test_prolongation_detects_killing_fields(rng):
    m = get_model("static_de_sitter", 4)
    p = np.array([0.3, 0.1, -0.2, 0.25])
    s = m.suite(p, 4)
    X = J.coordinates(p, 4)
    dt = J.stack([X[0] * 0 + 1.0, X[0] * 0, X[0] * 0, X[0] * 0])
    assert prolongation_connection(splitting_L(dt, s), s).max_abs() < 1e-10
    res = static_checks(dt, m.sigma_jet(p, 4), s)
    assert max(res.values()) < 1e-10, res
    wrong = J.stack([X[0] * 0, X[0] * 0 + 1.0, X[0] * 0, X[0] * 0])
    assert prolongation_connection(splitting_L(wrong, s), s).max_abs() > 1e-3
