"""Curvature of an analytic metric from its jets at a point.

Conventions (coordinate frame, indices in array order):

* ``Gamma[i, j, k]``  = Gamma^i_jk, symmetric in j, k
* ``R[i, j, k, l]``   = R_ij^k_l with [nabla_i, nabla_j] w^k = R_ij^k_l w^l
* ``Ric[a, b]``       = R_ca^c_b, ``Sc`` = g^ab Ric_ab
* ``P``, ``J``        Schouten tensor and its trace, Ric = (d-2) P + J g
* ``W[a, b, c, d]``   = W_ab^c_d,  ``W_low`` all indices down
* ``C[a, b, c]``      = nabla_a P_bc - nabla_b P_ac
* ``B[a, b]``         = nabla^c C_cba + P^dc W_dacb

A derivative index is always prepended to the array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .jets import (Jet, JetError, OrderBudgetError, SingularJetError, contract,
                   coordinates)

_IDX = "bcdefghijklmnopqrstuvwxy"


def metric_inverse(g: Jet) -> Jet:
    """Jet-valued inverse of a symmetric matrix jet.

    The constant term is inverted by LU with partial pivoting; the higher
    coefficients follow from Newton-Schulz steps X <- X(2 - gX), each of which
    doubles the number of correct orders.
    """
    g0 = g.value
    d = g0.shape[0]
    det = np.linalg.det(g0)
    scale = max(1.0, float(np.max(np.abs(g0)))) ** d
    if not np.isfinite(det) or abs(det) <= 1e-12 * scale:
        raise SingularJetError(f"degenerate metric (det = {det:.3e})")
    x = Jet.constant(np.linalg.inv(g0), g.dim, g.order)
    eye = np.eye(d)
    good = 0
    while good < g.order:
        gx = contract("ij,jk->ik", g, x)
        x = contract("ij,jk->ik", x, 2 * eye - gx)
        good = 2 * good + 1
    return x


def christoffel(g: Jet, ginv: Optional[Jet] = None) -> Jet:
    """Gamma^i_jk = 1/2 g^il (g_lj,k + g_lk,j - g_jk,l)."""
    if ginv is None:
        ginv = metric_inverse(g)
    dg = g.grad()                       # dg[k, i, j] = d_k g_ij
    # lowered symbols Gamma_ljk
    low = 0.5 * (dg.transpose(1, 2, 0) + dg.transpose(1, 0, 2) - dg)
    return contract("il,ljk->ijk", ginv, low)


def riemann_tensor(Gamma: Jet) -> Jet:
    """R_ij^k_l = d_i G^k_jl - d_j G^k_il + G^k_im G^m_jl - G^k_jm G^m_il."""
    if Gamma.order < 1:
        raise OrderBudgetError("Riemann tensor needs Christoffel symbols of order >= 1")
    dG = Gamma.grad()                   # dG[i, k, j, l] = d_i G^k_jl
    t1 = dG.transpose(0, 2, 1, 3)
    gg = contract("kim,mjl->ijkl", Gamma, Gamma)
    half = t1 + gg
    return half - half.swap(0, 1)


def covariant_derivative(T: Jet, kinds: str, Gamma: Jet, conn: Optional[dict] = None) -> Jet:
    """Levi-Civita derivative of a component array, derivative index first.

    ``kinds`` has one character per axis of ``T``: 'u' upper tensor index,
    'd' lower tensor index, '.' an axis left untouched.  Extra bundle axes
    are handled through ``conn``: a map from kind character to a connection
    matrix jet ``A[a, X, Y]`` so that nabla_a V^X = d_a V^X + A_a^X_Y V^Y.
    The character 'S' is reserved for the dual of the bundle registered
    under 'T'.
    """
    if len(kinds) != T.ndim:
        raise JetError(f"valence mismatch: kinds {kinds!r} for array of rank {T.ndim}")
    out = T.grad()
    idx = _IDX[:T.ndim]
    for p, kind in enumerate(kinds):
        if kind == ".":
            continue
        src = idx[:p] + "z" + idx[p + 1:]
        x = idx[p]
        if kind == "u":
            out = out + contract(f"{x}az,{src}->a{idx}", Gamma, T)
        elif kind == "d":
            out = out - contract(f"za{x},{src}->a{idx}", Gamma, T)
        elif kind == "S":
            A = conn["T"]
            out = out - contract(f"az{x},{src}->a{idx}", A, T)
        elif conn is not None and kind in conn:
            out = out + contract(f"a{x}z,{src}->a{idx}", conn[kind], T)
        else:
            raise JetError(f"no connection registered for index kind {kind!r}")
    return out


class CurvatureSuite:
    """All curvature quantities of a metric jet, computed lazily."""

    def __init__(self, g: Jet, signature: Optional[Sequence[int]] = None):
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] != g.dim:
            raise JetError("metric jet must be a dim x dim array")
        if g.dim < 3:
            raise JetError("curvature suite needs dimension >= 3")
        if np.max(np.abs(g.c - g.c.swapaxes(0, 1))) > 1e-12 * max(1.0, np.max(np.abs(g.c))):
            raise JetError("metric jet is not symmetric")
        self.g = g
        self.dim = g.dim
        self.order = g.order
        if signature is not None:
            ev = np.linalg.eigvalsh(g.value)
            want = sorted(int(s) for s in signature)
            if sorted(int(np.sign(e)) for e in ev) != want:
                raise JetError("metric signature does not match the declared signature")
        self.signature = signature

    def _need(self, m, what):
        if self.order < m:
            raise OrderBudgetError(
                f"{what} needs metric jets of order >= {m}; have {self.order}")

    @cached_property
    def ginv(self):
        return metric_inverse(self.g)

    @cached_property
    def Gamma(self):
        self._need(1, "Christoffel symbols")
        return christoffel(self.g, self.ginv)

    @cached_property
    def R(self):
        self._need(2, "Riemann tensor")
        return riemann_tensor(self.Gamma)

    @cached_property
    def R_low(self):
        # R_abcd with the third index lowered
        return contract("ce,abed->abcd", self.g, self.R)

    @cached_property
    def Ric(self):
        return self.R.lin("cacb->ab")

    @cached_property
    def Sc(self):
        return contract("ab,ab->", self.ginv, self.Ric)

    @cached_property
    def J(self):
        return self.Sc / (2.0 * (self.dim - 1))

    @cached_property
    def P(self):
        return (self.Ric - self.J * self.g) / (self.dim - 2)

    @cached_property
    def P_up(self):
        # P_a^b
        return contract("ac,cb->ab", self.P, self.ginv)

    @cached_property
    def W_low(self):
        g, P = self.g, self.P
        t = (contract("ca,bd->abcd", g, P) - contract("cb,ad->abcd", g, P)
             + contract("db,ac->abcd", g, P) - contract("da,bc->abcd", g, P))
        return self.R_low - t

    @cached_property
    def W(self):
        return contract("ce,abed->abcd", self.ginv, self.W_low)

    @cached_property
    def dP(self):
        self._need(3, "derivative of the Schouten tensor")
        return self.nabla(self.P, "dd")

    @cached_property
    def C(self):
        dP = self.dP
        return dP - dP.swap(0, 1)

    @cached_property
    def B(self):
        self._need(4, "Bach tensor")
        dC = self.nabla(self.C, "ddd")             # dC[e, c, b, a]
        div = contract("ec,ecba->ab", self.ginv, dC)
        Pup = contract("dx,xc->dc", self.ginv, self.P_up)
        return div + contract("dc,dacb->ab", Pup, self.W_low)

    def nabla(self, T, kinds, conn=None):
        return covariant_derivative(T, kinds, self.Gamma, conn)

    def raise_index(self, T, axis):
        """Raise one lower tensor index with g^{-1}; the axis keeps its position."""
        idx = _IDX[:T.ndim]
        src = idx[:axis] + "z" + idx[axis + 1:]
        return contract(f"{idx[axis]}z,{src}->{idx}", self.ginv, T)

    def lower_index(self, T, axis):
        idx = _IDX[:T.ndim]
        src = idx[:axis] + "z" + idx[axis + 1:]
        return contract(f"{idx[axis]}z,{src}->{idx}", self.g, T)

    def norm2(self, v, kind="d"):
        m = self.ginv if kind == "d" else self.g
        return contract("ab,ab->", m, contract("a,b->ab", v, v))

    def dot(self, u, v, kind="d"):
        m = self.ginv if kind == "d" else self.g
        return contract("a,a->", contract("ab,b->a", m, v), u)


def curvature_suite(g: Jet, signature=None) -> CurvatureSuite:
    return CurvatureSuite(g, signature)


def order_budget(metric_order: int) -> dict:
    """Highest jet order available for each derived object."""
    m = metric_order
    out = {"Gamma": m - 1, "R": m - 2, "Ric": m - 2, "Sc": m - 2, "P": m - 2, "J": m - 2,
           "W": m - 2, "C": m - 3, "B": m - 4, "kappa": m - 3}
    for k in range(1, 4):
        out[f"Box_{2 * k}"] = m - (2 * k + 2)
    return out


def required_order(obj: str, out_order: int = 0) -> int:
    shift = {"Gamma": 1, "R": 2, "Ric": 2, "Sc": 2, "P": 2, "J": 2, "W": 2, "C": 3,
             "B": 4, "kappa": 3}
    if obj.startswith("Box_"):
        k = int(obj[4:]) // 2
        return out_order + 2 * k + 2
    return out_order + shift[obj]


@dataclass
class MetricChart:
    """An analytic metric in a chart.

    ``metric`` maps a list of coordinate jets to a (d, d) Jet.  ``domain``
    is a predicate on plain coordinate tuples; ``box`` is the sampling box
    (lo, hi) used for random points.
    """
    name: str
    dim: int
    signature: tuple
    metric: Callable
    domain: Callable = lambda x: True
    box: tuple = (-0.5, 0.5)

    def metric_jet(self, point, order) -> Jet:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dim,):
            raise JetError(f"point must have {self.dim} coordinates")
        if not self.domain(point):
            raise JetError(f"point {tuple(point)} is outside the domain of {self.name}")
        X = coordinates(point, order)
        return as_metric(self.metric(X), self.dim, order)

    def suite(self, point, order) -> CurvatureSuite:
        return CurvatureSuite(self.metric_jet(point, order), self.signature)


def as_metric(rows, dim, order) -> Jet:
    """Turn a nested list of jets/numbers into a (dim, dim) Jet."""
    if isinstance(rows, Jet):
        return rows
    from .jets import ncoef
    c = np.zeros((dim, dim, ncoef(dim, order)))
    for i in range(dim):
        for j in range(dim):
            e = rows[i][j]
            if isinstance(e, Jet):
                c[i, j] = e.truncate(order).c
            else:
                c[i, j, 0] = float(e)
    return Jet(c, dim, order)
