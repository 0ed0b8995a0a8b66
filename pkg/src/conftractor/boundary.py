"""The degenerate Laplacian I.D, its sl(2) calculus and the extension solver.

Fields are WeightedField instances trivialized in the active scale g of a
CurvatureSuite; sigma is the defining density in that scale.  The solver
works on an AdaptedChart, where sigma = s and division by sigma^l is an
exact shift of s-coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .conformal import WeightedField, laplacian, rescale_metric
from .hypersurface import AdaptedChart, extrinsic, lift, restrict, s_divide, s_power
from .jets import Jet, JetError, OrderBudgetError, contract, rel_residual, space
from .riemann import CurvatureSuite
from .tractor import (TractorConsistencyError, connection_matrix, hdot, i_squared,
                      scale_tractor, thomas_d)

_IDX = "bcdefghijklmnopqrstuvwxy"


class WeightError(JetError):
    pass


def i_dot_d(f: WeightedField, sigma: Jet, suite: CurvatureSuite) -> WeightedField:
    """I.D f expanded in the scale g (works on any tractor/tensor kinds)."""
    d, w = suite.dim, f.weight
    conn = {"T": connection_matrix(suite)} if "T" in f.kinds else None
    F = f.jet
    lapF = laplacian(suite, F, f.kinds, conn)
    dF = suite.nabla(F, f.kinds, conn)
    dsig = contract("ab,b->a", suite.ginv, sigma.grad())
    idx = _IDX[:F.ndim]
    grad_term = contract(f"a,a{idx}->{idx}", dsig, dF)
    lap_sig = laplacian(suite, sigma)
    out = (-sigma * lapF + (d + 2 * w - 2) * (grad_term - (w / d) * lap_sig * F)
           - (2 * w / d) * (d + w - 1) * sigma * suite.J * F)
    return WeightedField(out, w - 1, f.kinds)


def i_dot_d_slotwise(f: WeightedField, sigma: Jet, suite) -> WeightedField:
    """I^A D_A f from the scale tractor and the Thomas-D slots."""
    I = scale_tractor(sigma, suite).jet
    D = thomas_d(f, suite)
    ID = hdot(I, D.jet, suite)
    return WeightedField(ID, f.weight - 1, f.kinds)


class SL2Context:
    """x = sigma, y = -I.D / I^2, h = d + 2w on weighted fields.

    When I^2 vanishes identically (to tolerance) the contracted algebra is
    used, with y = -I.D.
    """

    def __init__(self, suite: CurvatureSuite, sigma: Jet, tol=1e-12):
        self.suite = suite
        self.sigma = sigma
        self.d = suite.dim
        self.I2 = i_squared(sigma, suite)
        self.contracted = float(np.max(np.abs(self.I2.c))) < tol
        if not self.contracted and abs(float(self.I2.value)) < tol:
            raise JetError("I^2 vanishes at the point but not identically; sl(2) form unavailable")

    def x(self, f: WeightedField) -> WeightedField:
        return WeightedField(self.sigma * f.jet, f.weight + 1, f.kinds)

    def y(self, f: WeightedField) -> WeightedField:
        g = i_dot_d(f, self.sigma, self.suite)
        if self.contracted:
            return WeightedField(-g.jet, g.weight, g.kinds)
        return WeightedField(-g.jet / self.I2, g.weight, g.kinds)

    def h(self, f: WeightedField) -> WeightedField:
        return WeightedField((self.d + 2 * f.weight) * f.jet, f.weight, f.kinds)

    def ydot(self, f, k):
        for _ in range(k):
            f = self.y(f)
        return f

    def xpow(self, f, k):
        for _ in range(k):
            f = self.x(f)
        return f


def bracket_residuals(ctx: SL2Context, f: WeightedField) -> dict:
    """[h,x] = 2x, [h,y] = -2y, [x,y] = h (or 0 when contracted) on f."""
    x, y, h = ctx.x, ctx.y, ctx.h
    hx = h(x(f)).jet - x(h(f)).jet
    hy = h(y(f)).jet - y(h(f)).jet
    xy = x(y(f)).jet - y(x(f)).jet
    want = 0.0 * f.jet if ctx.contracted else h(f).jet
    return {
        "hx": rel_residual(hx, 2 * x(f).jet),
        "hy": rel_residual(hy, -2 * y(f).jet),
        "xy": rel_residual(xy, want),
    }


def commutator_residual(ctx: SL2Context, f: WeightedField) -> float:
    """[I.D, sigma] f = I^2 (d + 2w) f."""
    s, su = ctx.sigma, ctx.suite
    lhs = i_dot_d(ctx.x(f), s, su).jet - s * i_dot_d(f, s, su).jet
    return rel_residual(lhs, ctx.I2 * (ctx.d + 2 * f.weight) * f.jet)


def enveloping_residuals(ctx: SL2Context, f: WeightedField, k: int) -> dict:
    """[x^k, y] = x^{k-1} k (h+k-1) and [x, y^k] = y^{k-1} k (h-k+1) on f."""
    if ctx.contracted:
        raise JetError("enveloping identities are stated for I^2 nonvanishing")
    x, y = ctx.x, ctx.y
    hf = ctx.d + 2 * f.weight
    lhs1 = ctx.xpow(y(f), k).jet - y(ctx.xpow(f, k)).jet
    rhs1 = k * (hf + k - 1) * ctx.xpow(f, k - 1).jet
    lhs2 = x(ctx.ydot(f, k)).jet - ctx.ydot(x(f), k).jet
    rhs2 = k * (hf - k + 1) * ctx.ydot(f, k - 1).jet
    return {"xk_y": rel_residual(lhs1, rhs1), "x_yk": rel_residual(lhs2, rhs2)}


def sigma_power_residual(ctx: SL2Context, f: WeightedField, alpha: float) -> float:
    """I.D(sigma^a f) - sigma^a I.D f = sigma^(a-1) a I^2 (d + 2w + a - 1) f.

    Non-integer alpha needs sigma > 0 at the point.
    """
    s, su = ctx.sigma, ctx.suite
    if float(alpha).is_integer() and alpha >= 1:
        sa, sa1 = s ** int(alpha), s ** int(alpha - 1)
    else:
        if float(s.value) <= 0:
            raise JetError("sigma^alpha needs sigma > 0 for non-integer alpha")
        sa, sa1 = s ** float(alpha), s ** float(alpha - 1)
    g = WeightedField(sa * f.jet, f.weight + alpha, f.kinds)
    lhs = i_dot_d(g, s, su).jet - sa * i_dot_d(f, s, su).jet
    rhs = alpha * (ctx.d + 2 * f.weight + alpha - 1) * sa1 * ctx.I2 * f.jet
    return rel_residual(lhs, rhs)


def interior_scale_residual(suite: CurvatureSuite, sigma: Jet, f: WeightedField) -> dict:
    """Compare I.D with -(Delta + 2w(d+w-1)/d J) in the metric sigma^-2 g.

    Densities are re-trivialized by f -> sigma^-w f.  When I^2 = +-1 the
    second entry checks the form -(Delta -+ ... ) written with s = d+w-1,
    n = d-1: -(Delta + eps s(n-s)) with eps the sign of I^2.
    """
    if float(sigma.value) <= 0:
        raise JetError("the interior scale needs sigma > 0")
    d, w = suite.dim, f.weight
    om = sigma.recip()
    sh = CurvatureSuite(rescale_metric(suite.g, om))
    fh = sigma ** (-w) * f.jet if w != 0 else f.jet
    lhs = sigma ** (1 - w) * i_dot_d(f, sigma, suite).jet if w != 1 else i_dot_d(f, sigma, suite).jet
    lap = laplacian(sh, fh)
    general = -(lap + (2 * w * (d + w - 1) / d) * sh.J * fh)
    out = {"general": rel_residual(lhs, general)}
    I2 = float(i_squared(sigma, suite).value)
    if abs(abs(I2) - 1) < 1e-9:
        s, n = d + w - 1, d - 1
        out["special"] = rel_residual(lhs, -(lap + np.sign(I2) * s * (n - s) * fh))
    return out


def robin_residual(chart: AdaptedChart, f: WeightedField) -> float:
    """On Sigma, I.D f = (d + 2w - 2)(n^a nabla_a f - w H f) when I^2 = +-1 exactly."""
    su = chart.suite()
    ext = extrinsic(su, chart.sigma)
    d, w = chart.dim, f.weight
    lhs = restrict(i_dot_d(f, chart.sigma, su).jet)
    dn = contract("a,a->", ext["nup"], f.jet.grad())
    rhs = restrict((d + 2 * w - 2) * (dn - w * ext["H"] * f.jet))
    return rel_residual(lhs, rhs)


def tangential_pk(ctx: SL2Context, f: WeightedField, k: int) -> WeightedField:
    """P_k = y^k on weight (k - n)/2 with n = d - 1."""
    n = ctx.d - 1
    if abs(f.weight - (k - n) / 2) > 1e-12:
        raise WeightError(f"P_{k} acts on weight {(k - n) / 2}, got {f.weight}")
    if ctx.contracted:
        raise JetError("P_k needs I^2 nonvanishing")
    return ctx.ydot(f, k)


def tangentiality_residual(chart: AdaptedChart, ctx: SL2Context, f: WeightedField,
                           g: Jet, k: int) -> float:
    """|P_k(f + sigma g) - P_k f| on Sigma."""
    fg = WeightedField(f.jet + ctx.sigma * g, f.weight, f.kinds)
    a = restrict(tangential_pk(ctx, fg, k).jet)
    b = restrict(tangential_pk(ctx, f, k).jet)
    return rel_residual(a, b)


# ---- the extension solver ------------------------------------------------------------

def _taylor_max(J: Jet, mask=None):
    """max |c_alpha / alpha!| (Taylor-normalized magnitude) over selected coefficients."""
    sp = space(J.dim, J.order)
    c = J.c / sp.factorial
    if mask is not None:
        c = c[..., mask]
    return float(np.max(np.abs(c))) if c.size else 0.0


def _divide_checked(J: Jet, k: int, tol: float):
    q, _ = s_divide(J, k)
    sp = space(J.dim, J.order)
    mask = np.array([a[0] < k for a in sp.alphas])
    scale = max(1.0, _taylor_max(J))
    left = _taylor_max(J, mask) if mask.any() else 0.0
    return q, left / scale


@dataclass
class ExtensionState:
    w0: float
    h0: float
    target: int
    coeffs: list = field(default_factory=list)        # f_i on Sigma, (d-1)-jets
    reached: int = 0
    obstruction: Optional[Jet] = None
    obstructed_at: Optional[int] = None
    free_parameter_at: Optional[int] = None
    leftovers: list = field(default_factory=list)
    solution: Optional[Jet] = None

    @property
    def critical(self):
        return self.obstructed_at is not None or self.free_parameter_at is not None


def critical_level(h0, tol=1e-6):
    """l = h0 - 2 when h0 is (within tol) an integer >= 2, else None."""
    r = round(h0)
    if abs(h0 - r) < tol and r >= 2:
        return int(r) - 2
    return None


def solve_extension(chart: AdaptedChart, f0: Jet, w0: float, target: int,
                    extension: Optional[Callable] = None, tol=1e-10,
                    obstruction_tol=1e-8) -> ExtensionState:
    """Solve I.D f = O(sigma^target) with f = f0 + sigma f1 + ... on an adapted chart.

    ``extension`` maps a field on Sigma to a collar field restricting to it;
    the default is constant in s.
    """
    if extension is None:
        extension = lift
    su = chart.suite()
    ctx = SL2Context(su, chart.sigma)
    if ctx.contracted:
        raise JetError("the extension solver needs I^2 nonvanishing near Sigma")
    d = chart.dim
    h0 = d + 2 * w0
    crit = critical_level(h0)
    st = ExtensionState(w0=w0, h0=h0, target=target, coeffs=[restrict(f0)])
    F = f0
    for l in range(target):
        need = l + 1
        r = ctx.y(WeightedField(F, w0, "")).jet
        if r.order < need:
            raise OrderBudgetError(
                f"jet order {chart.order} is too low to reach l = {target} (stopped at l = {l})")
        q, left = _divide_checked(r, l, tol)
        if left > tol:
            raise TractorConsistencyError(
                f"I.D f is not divisible by sigma^{l} (leftover {left:.3e})")
        st.leftovers.append(left)
        val = restrict(q)
        if crit is not None and l == crit:
            if _taylor_max(val) > obstruction_tol * max(1.0, _taylor_max(restrict(F))):
                st.obstruction = val
                st.obstructed_at = l
                st.reached = l
                st.solution = F
                return st
            st.free_parameter_at = l + 1
            fl = 0.0 * val
        else:
            fl = val / ((l + 1) * (h0 - l - 2))
        st.coeffs.append(fl)
        F = F + s_power(extension(fl), l + 1)
        st.reached = l + 1
    st.solution = F
    return st


def residual_order(chart: AdaptedChart, F: Jet, w0: float, l: int, tol=1e-9):
    """Does I.D F vanish to order l in sigma along Sigma?  Returns (ok, leading)."""
    su = chart.suite()
    r = i_dot_d(WeightedField(F, w0, ""), chart.sigma, su).jet
    if r.order < l:
        raise OrderBudgetError(f"need jet order >= {l} for I.D F, have {r.order}")
    q, left = _divide_checked(r, l, tol)
    return left <= tol, restrict(q)


def agreement_mod_s(F1: Jet, F2: Jet, l: int) -> float:
    """Taylor-normalized difference of the s-expansion coefficients of order <= l."""
    k = min(F1.order, F2.order)
    F1, F2 = F1.truncate(k), F2.truncate(k)
    sp = space(F1.dim, k)
    mask = np.array([a[0] <= l for a in sp.alphas])
    diff = Jet((F1.c - F2.c) * mask, F1.dim, k)
    scale = max(1.0, _taylor_max(F1), _taylor_max(F2))
    return _taylor_max(diff) / scale


def obstruction_ratio(state: ExtensionState, pk: Jet) -> float:
    """Ratio obstruction / P_{h0-1} f0 at the chart point."""
    if state.obstruction is None:
        raise JetError("no obstruction recorded")
    return float(state.obstruction.value) / float(pk.value)
