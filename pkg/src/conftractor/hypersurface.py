"""Conformal hypersurface calculus in adapted charts.

An :class:`AdaptedChart` straightens a level set {sigma = 0} so that in the
new coordinates (s, y1..y_{d-1}) the defining function is exactly ``s``.
Restricting a jet to Sigma then keeps the coefficients with no s-derivative,
and tangential tensor indices are simply the coordinate indices 1..d-1.

Sign conventions: eps = |n|^2 = +-1, and every upper/lower sign pair of the
hypersurface formulas is resolved as eps (upper sign <=> eps = +1).
"""

from __future__ import annotations

import numpy as np

from .conformal import ConformalFactor, rescale_metric
from .jets import (Jet, JetError, OrderBudgetError, contract, coordinates, ncoef,
                   rel_residual, space, taylor_residual)
from .riemann import CurvatureSuite, as_metric
from .tractor import from_slots, hdot, slots, tnabla, tractor_transform
from .conformal import WeightedField


class DegenerateHypersurfaceError(JetError):
    pass


# ---- restriction / extension along {x^0 = 0} --------------------------------

def _restrict_index(dim, order):
    sp = space(dim, order)
    lo = space(dim - 1, order)
    return np.array([sp.rank[(0,) + a] for a in lo.alphas])


def restrict(J: Jet) -> Jet:
    """Jet of J|_Sigma in the coordinates y (drops every s-derivative)."""
    idx = _restrict_index(J.dim, J.order)
    return Jet(J.c[..., idx], J.dim - 1, J.order)


def lift(Jb: Jet) -> Jet:
    """Extend a jet on Sigma to the collar, constant in s."""
    dim = Jb.dim + 1
    c = np.zeros(Jb.shape + (ncoef(dim, Jb.order),))
    c[..., _restrict_index(dim, Jb.order)] = Jb.c
    return Jet(c, dim, Jb.order)


def s_power(J: Jet, k: int) -> Jet:
    """s^k * J, exact: the order rises by k."""
    dim, m = J.dim, J.order
    out = np.zeros(J.shape + (ncoef(dim, m + k),))
    hi = space(dim, m + k)
    src = space(dim, m)
    for r, a in enumerate(src.alphas):
        b = (a[0] + k,) + a[1:]
        # at s = 0 all k s-derivatives must land on s^k
        out[..., hi.rank[b]] = J.c[..., r] * _falling(b[0], k)
    return Jet(out, dim, m + k)


def s_divide(J: Jet, k: int, tol=1e-10):
    """J / s^k when J vanishes to order k in s; returns (quotient, leftover)."""
    if J.order < k:
        raise OrderBudgetError(f"dividing by s^{k} needs jet order >= {k}")
    sp = space(J.dim, J.order)
    lo = space(J.dim, J.order - k)
    idx = np.array([sp.rank[(a[0] + k,) + a[1:]] for a in lo.alphas])
    fac = np.array([1.0 / _falling(a[0] + k, k) for a in lo.alphas])
    left = np.array([a[0] < k for a in sp.alphas])
    leftover = float(np.max(np.abs(J.c[..., left]))) if left.any() else 0.0
    return Jet(J.c[..., idx] * fac, J.dim, J.order - k), leftover


def _falling(n, k):
    out = 1
    for i in range(k):
        out *= n - i
    return float(out)


# ---- adapted charts ------------------------------------------------------------

class AdaptedChart:
    """Coordinates (s, y) near a point of {sigma = 0} in which sigma = s.

    ``metric`` and ``sigma`` are callables on a list of coordinate jets (as
    used by MetricChart).  The ambient coordinate with the largest partial of
    sigma at the point is traded for s; the remaining ones become y.
    """

    def __init__(self, metric, sigma, point, order, signature=None, tol=1e-8):
        p = np.asarray(point, dtype=float)
        d = p.size
        self.dim, self.order, self.signature = d, order, signature
        s0 = _as_jet(sigma(coordinates(p, 1)), d, 1)
        grad = s0.grad().value
        if abs(s0.value) > 1e-8 * max(1.0, np.abs(grad).max()):
            raise JetError(f"point is not on the hypersurface (sigma = {s0.value:.3e})")
        k = int(np.argmax(np.abs(grad)))
        if grad[k] == 0:
            raise DegenerateHypersurfaceError("d sigma vanishes at the point")
        self.axis = k
        K1 = order + 1
        q = np.concatenate([[0.0], np.delete(p, k)])
        self.point = q
        Q = coordinates(q, K1)
        S = Q[0]
        Phi = [None] * d
        rest = [i for i in range(d) if i != k]
        for j, i in enumerate(rest):
            Phi[i] = Q[j + 1]
        phi = S * 0.0 + p[k]
        # chord iteration: one more correct order per step
        for _ in range(K1 + 1):
            Phi[k] = phi
            phi = phi - (_as_jet(sigma(Phi), d, K1) - S) / grad[k]
        Phi[k] = phi
        res = taylor_residual(_as_jet(sigma(Phi), d, K1), S)
        if res > tol:
            raise JetError(f"straightening did not converge (residual {res:.3e})")
        self.Phi = Phi
        jac = [P.grad() for P in Phi]                 # jac[i][a] = d_a Phi^i
        Jm = Jet(np.stack([j.c for j in jac], axis=1), d, order)   # Jm[a, i]
        G = as_metric(metric(Phi), d, K1)
        self.g = contract("ai,ib->ab", Jm, contract("ij,bj->ib", G, Jm))
        self.jacobian = Jm
        self.sigma = S.truncate(order)
        self.coords = [c.truncate(order) for c in Q]

    def pull(self, fn):
        """A scalar function of ambient coordinates as a jet in this chart."""
        return _as_jet(fn(self.Phi), self.dim, self.order + 1).truncate(self.order)

    def suite(self):
        return CurvatureSuite(self.g, self.signature)

    def induced_metric(self):
        return restrict(self.g)[1:, 1:]


def _as_jet(x, dim, order):
    if isinstance(x, Jet):
        return x
    return Jet.constant(float(x), dim, order)


def surface_point(sigma, guess, iters=60):
    """Newton-project a point onto {sigma = 0} along the gradient."""
    x = np.asarray(guess, dtype=float).copy()
    d = x.size
    for _ in range(iters):
        J1 = _as_jet(sigma(coordinates(x, 1)), d, 1)
        grad = J1.grad().value
        val = J1.value
        if abs(val) < 1e-15:
            break
        x = x - val * grad / float(grad @ grad)
    return x


# ---- extrinsic data ------------------------------------------------------------

def conormal(suite: CurvatureSuite, sigma: Jet, tol=1e-10):
    """Unit conormal n = d sigma / |d sigma| in a collar, and eps = |n|^2."""
    ds = sigma.grad()
    q = contract("ab,ab->", suite.ginv, contract("a,b->ab", ds, ds))
    q0 = float(q.value)
    if abs(q0) <= tol * max(1.0, float(np.abs(ds.value).max()) ** 2):
        raise DegenerateHypersurfaceError("null conormal: the hypersurface is degenerate")
    eps = 1 if q0 > 0 else -1
    from .jets import sqrt
    return ds / sqrt(eps * q), eps


def second_fundamental(suite: CurvatureSuite, n: Jet, eps: int) -> dict:
    """L, trace-free part Lo, mean curvature H and the ambient form of gbar."""
    d = suite.dim
    nup = contract("ab,b->a", suite.ginv, n)
    dn = suite.nabla(n, "d")                              # dn[a, b] = nabla_a n_b
    L = dn - eps * contract("a,b->ab", n, contract("c,cb->b", nup, dn))
    gbar = suite.g - eps * contract("a,b->ab", n, n)
    H = contract("ab,ab->", suite.ginv, L) / (d - 1)
    Lo = L - H * gbar
    return {"L": L, "Lo": Lo, "H": H, "gbar": gbar, "n": n, "nup": nup, "eps": eps}


def extrinsic(suite, sigma):
    n, eps = conormal(suite, sigma)
    return second_fundamental(suite, n, eps)


def normal_tractor(ext: dict) -> Jet:
    n, H = ext["n"], ext["H"]
    return from_slots(0.0 * H, n, -H)


def tangential_projector(ext):
    """Pi_a^c = delta - eps n_a n^c as an array [a, c]."""
    d = ext["n"].shape[0]
    eye = Jet.constant(np.eye(d), ext["n"].dim, ext["n"].order)
    return eye - ext["eps"] * contract("a,c->ac", ext["n"], ext["nup"])


def shape_form(suite, ext) -> Jet:
    """Tangentially projected tractor derivative of N: array [a, B]."""
    N = normal_tractor(ext)
    dN = tnabla(WeightedField(N, 0.0, "T"), suite).jet
    return contract("ac,cB->aB", tangential_projector(ext), dN)


def fialkow(suite, ext) -> Jet:
    """Fialkow tensor as an ambient tangential two-tensor; needs d >= 4."""
    d = suite.dim
    m = d - 1
    if m - 2 == 0:
        raise JetError("the Fialkow tensor is not defined for surfaces in dimension 3")
    nup, Lo, gbar = ext["nup"], ext["Lo"], ext["gbar"]
    Wnn = contract("acbd,cd->ab", suite.W_low, contract("c,d->cd", nup, nup))
    Loup = contract("ac,cb->ab", suite.ginv, Lo)
    Lo2 = contract("ac,cb->ab", Lo, Loup)
    norm = contract("ab,ab->", Loup, Loup.T)
    return (Wnn + Lo2 - norm / (2 * (m - 1)) * gbar) / (m - 2)


def minimal_scale(sigma, suite, ext):
    """omega = -eps s H with s the normalized defining function; kills H on Sigma."""
    ds = sigma.grad()
    q = contract("ab,ab->", suite.ginv, contract("a,b->ab", ds, ds))
    from .jets import sqrt
    s = sigma / sqrt(ext["eps"] * q)
    return -ext["eps"] * s * ext["H"]


# ---- the N-perp isomorphism --------------------------------------------------------

def to_intrinsic(V: Jet, ext) -> Jet:
    """(sigma, mu, rho) -> (sigma, mu - eps H n sigma, rho + eps/2 H^2 sigma), ambient-indexed."""
    eps, H, n = ext["eps"], ext["H"], ext["n"]
    sg, mu, rho = slots(V)
    return from_slots(sg, mu - eps * contract("b,->b", n, H * sg),
                      rho + 0.5 * eps * H * H * sg)


def from_intrinsic(sg, mubar, rho, n, nup, H, eps):
    """Inverse of the isomorphism, on an adapted chart.

    ``mubar`` holds the tangential components (y-directions); the normal
    component is fixed by mu(n^sharp) = 0 before adding back eps H n sigma.
    All arguments must live on the same jet space (restricted or lifted).
    """
    mu0 = -contract("i,i->", nup[1:], mubar) / nup[0]
    k = min(mu0.order, mubar.order)
    mut = Jet(np.concatenate([mu0.truncate(k).c[None], mubar.truncate(k).c]), mubar.dim, k)
    mu = mut + eps * contract("b,->b", n, H * sg)
    return from_slots(sg, mu, rho - 0.5 * eps * H * H * sg)


def _restricted_ext(ext):
    return {k: (restrict(v) if isinstance(v, Jet) else v) for k, v in ext.items()}


def contorsion_apply(F: Jet, ginv_bar: Jet, Vbar: Jet) -> Jet:
    """S_a^B_C V^C for intrinsic V: slots (0, -F_ab sigma, F_a^c mu_c) per a."""
    sg, mu, _ = slots(Vbar)
    Fup = contract("ac,cb->ab", F, ginv_bar)
    top = 0.0 * sg * F[:, 0]
    mid = -contract("ab,->ab", F, sg)
    bot = contract("ac,c->a", Fup, mu)
    k = min(top.order, mid.order, bot.order)
    c = np.concatenate([top.truncate(k).c[:, None], mid.truncate(k).c, bot.truncate(k).c[:, None]],
                       axis=1)
    return Jet(c, Vbar.dim, k)


class HypersurfaceData:
    """Ambient and intrinsic data of Sigma = {s = 0} on an adapted chart."""

    def __init__(self, chart: AdaptedChart):
        self.chart = chart
        self.suite = chart.suite()
        self.ext = extrinsic(self.suite, chart.sigma)
        self.eps = self.ext["eps"]
        self.on = _restricted_ext(self.ext)

    @property
    def intrinsic_suite(self):
        if not hasattr(self, "_isuite"):
            if self.chart.dim - 1 < 3:
                raise JetError("intrinsic tractor calculus needs dim(Sigma) >= 3")
            self._isuite = CurvatureSuite(self.chart.induced_metric())
        return self._isuite

    def N(self):
        return normal_tractor(self.ext)

    def shape_form(self):
        return shape_form(self.suite, self.ext)

    def shape_form_formula(self):
        """(0, Lo_ab, -(1/(d-2)) div-bar Lo) on Sigma, tangential a."""
        d = self.chart.dim
        Lo = self.on["Lo"]
        Lob = Lo[1:, 1:]
        sb = self.intrinsic_suite
        div = contract("bc,abc->a", sb.ginv, sb.nabla(Lob, "dd").swap(0, 1))
        mid = Lo[1:, :]
        top = 0.0 * div
        bot = -div / (d - 2)
        k = min(mid.order, bot.order)
        c = np.concatenate([top.truncate(k).c[:, None], mid.truncate(k).c, bot.truncate(k).c[:, None]],
                           axis=1)
        return Jet(c, d - 1, k)

    def fialkow(self):
        return fialkow(self.suite, self.ext)

    def fialkow_bar(self):
        return restrict(self.fialkow())[1:, 1:]

    def lift_intrinsic(self, Vbar: Jet) -> Jet:
        """Ambient tractor field in the collar whose restriction corresponds to Vbar."""
        e = self.ext
        sg, mu, rho = slots(Vbar)
        return from_intrinsic(lift(sg), lift(mu), lift(rho), e["n"], e["nup"], e["H"], self.eps)

    def to_ambient_on(self, Vbar: Jet) -> Jet:
        """Image of an intrinsic tractor (leading axis) in ambient slots on Sigma."""
        e = self.on
        sg, mu, rho = slots(Vbar, axis=Vbar.ndim - 1) if Vbar.ndim > 1 else slots(Vbar)
        if Vbar.ndim > 1:
            # per tangential direction a
            outs = [from_intrinsic(sg[a], mu[a], rho[a], e["n"], e["nup"], e["H"], self.eps)
                    for a in range(Vbar.shape[0])]
            k = min(o.order for o in outs)
            return Jet(np.stack([o.truncate(k).c for o in outs]), Vbar.dim, k)
        return from_intrinsic(sg, mu, rho, e["n"], e["nup"], e["H"], self.eps)

    def gauss_terms(self, Vbar: Jet, s_sign=None):
        """LHS and RHS of the tractor Gauss formula on Sigma, tangential a."""
        eps = self.eps
        if s_sign is None:
            s_sign = -eps
        sb = self.intrinsic_suite
        V = self.lift_intrinsic(Vbar)
        lhs = restrict(tnabla(WeightedField(V, 0.0, "T"), self.suite).jet[1:])
        dbar = tnabla(WeightedField(Vbar, 0.0, "T"), sb).jet
        SV = contorsion_apply(self.fialkow_bar(), sb.ginv, Vbar)
        rhs_in = self.to_ambient_on(dbar + s_sign * SV)
        LL = self.shape_form()[1:]
        LV = restrict(hdot(LL.T, V, self.suite))       # L_aC V^C, [a]
        Non = restrict(self.N())
        rhs = rhs_in - eps * contract("a,B->aB", LV, Non)
        return lhs, rhs

    def gauss_residual(self, Vbar, s_sign=None):
        lhs, rhs = self.gauss_terms(Vbar, s_sign)
        return rel_residual(lhs, rhs)


# ---- conformal behaviour ----------------------------------------------------------

def rescaled(chart: AdaptedChart, omega: Jet) -> AdaptedChart:
    """A shallow copy of the chart carrying the metric omega^2 g."""
    new = object.__new__(AdaptedChart)
    new.__dict__.update(chart.__dict__)
    new.g = rescale_metric(chart.g, omega)
    return new


def invariance_residuals(chart: AdaptedChart, omega: Jet) -> dict:
    """Compare Lo, H and N in scales g and omega^2 g on Sigma."""
    hd = HypersurfaceData(chart)
    hh = HypersurfaceData(rescaled(chart, omega))
    cf = ConformalFactor(omega)
    e, eh = hd.ext, hh.ext
    U = cf.upsilon
    nU = contract("a,a->", e["nup"], U)
    Nt = tractor_transform(WeightedField(hd.N(), 0.0, "T"), hd.suite, cf).jet
    return {
        "Lo": rel_residual(restrict(eh["Lo"]), restrict(omega * e["Lo"])),
        "H": rel_residual(restrict(eh["H"]), restrict((e["H"] + nU) / omega)),
        "N": rel_residual(restrict(hh.N()), restrict(Nt)),
    }
