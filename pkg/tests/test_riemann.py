import numpy as np
import pytest

from conftest import poly, random_metric
from conftractor import jets as J
from conftractor.jets import rel_residual
from conftractor.riemann import (CurvatureSuite, MetricChart, as_metric, metric_inverse,
                                 order_budget, required_order)


def vmax(x):
    return float(np.max(np.abs(x.value)))


@pytest.mark.parametrize("d,r", [(3, 0.7), (4, 1.0), (5, 2.0)])
def test_sphere_of_radius_r(d, r):
    X = J.coordinates(np.linspace(-0.3, 0.4, d), 4)
    q = r * r + sum(x * x for x in X)
    f = 4 * r ** 4 / (q * q)
    s = CurvatureSuite(as_metric([[f if i == j else 0.0 for j in range(d)] for i in range(d)], d, 4))
    assert float(s.Sc.value) == pytest.approx(d * (d - 1) / r ** 2, rel=1e-12)
    assert rel_residual(s.P, s.g / (2 * r * r)) < 1e-12
    assert vmax(s.W) < 1e-12 and vmax(s.C) < 1e-12


def test_conformally_flat_scalar_curvature(rng):
    # g = e^{2 phi} delta: Sc = -e^{-2 phi} (2(d-1) lap phi + (d-2)(d-1) |dphi|^2)
    d = 4
    X = J.coordinates(rng.uniform(-0.3, 0.3, d), 3)
    phi = poly(X, rng, 3, 0.3)
    e2 = J.exp(2 * phi)
    s = CurvatureSuite(as_metric([[e2 if i == j else 0.0 for j in range(d)] for i in range(d)], d, 3))
    lap = sum(phi.partial(i).partial(i) for i in range(d))
    grad2 = sum(phi.partial(i) ** 2 for i in range(d))
    want = -(2 * (d - 1) * lap + (d - 2) * (d - 1) * grad2) / e2
    assert rel_residual(s.Sc, want) < 1e-11


def test_riemann_symmetries_and_bianchi(rng):
    d = 4
    X = J.coordinates(rng.uniform(-0.3, 0.3, d), 4)
    s = CurvatureSuite(random_metric(X, rng))
    R = s.R_low
    assert rel_residual(R, -R.transpose(1, 0, 2, 3)) < 1e-12
    assert rel_residual(R, -R.transpose(0, 1, 3, 2)) < 1e-12
    assert rel_residual(R, R.transpose(2, 3, 0, 1)) < 1e-12
    assert rel_residual(s.Ric, s.Ric.T) < 1e-12
    # divergence of the Einstein tensor vanishes
    G = s.Ric - 0.5 * s.Sc * s.g
    div = J.contract("ab,abc->c", s.ginv, s.nabla(G, "dd"))
    assert vmax(div) < 1e-10


def test_weyl_trace_free_and_divergence(rng):
    for d in (3, 4, 5):
        X = J.coordinates(rng.uniform(-0.3, 0.3, d), 4)
        s = CurvatureSuite(random_metric(X, rng))
        assert vmax(s.W.lin("abad->bd")) < 1e-12
        if d == 3:
            assert vmax(s.W) < 1e-12
        # nabla^d W_abcd = -(d-3) C_abc with C_abc = nabla_a P_bc - nabla_b P_ac
        dW = s.nabla(s.W_low, "dddd")
        divW = J.contract("ed,eabcd->abc", s.ginv, dW)
        assert rel_residual(divW, -(d - 3) * s.C) < 1e-10


def test_metric_inverse(rng):
    X = J.coordinates(rng.uniform(-0.3, 0.3, 3), 4)
    g = random_metric(X, rng)
    gi = metric_inverse(g)
    eye = J.contract("ab,bc->ac", g, gi)
    assert rel_residual(eye, np.eye(3)) < 1e-13


def test_order_budget():
    b = order_budget(6)
    assert b["R"] == 4 and b["C"] == 3 and b["B"] == 2 and b["Box_4"] == 0
    assert required_order("B") == 4 and required_order("Box_2", 1) == 5
    s = CurvatureSuite(as_metric(np.eye(3).tolist(), 3, 2))
    s.R
    with pytest.raises(J.OrderBudgetError):
        s.C


def test_suite_rejects_bad_metrics():
    with pytest.raises(J.JetError):
        CurvatureSuite(as_metric(np.eye(2).tolist(), 2, 3))
    with pytest.raises(J.JetError):
        CurvatureSuite(as_metric([[1, 0.1, 0], [0, 1, 0], [0, 0, 1]], 3, 2))
    with pytest.raises(J.JetError):
        CurvatureSuite(as_metric(np.eye(3).tolist(), 3, 2), signature=(-1, 1, 1))


def test_chart_domain():
    ch = MetricChart("half", 3, (1, 1, 1), lambda X: np.eye(3).tolist(), lambda x: x[2] > 0)
    assert ch.suite([0, 0, 1.0], 2).dim == 3
    with pytest.raises(J.JetError):
        ch.metric_jet([0, 0, -1.0], 2)
    with pytest.raises(J.JetError):
        ch.metric_jet([0, 0], 2)
