"""Conformal densities, rescalings and the scalar covariant operators.

Densities are always trivialized against the active metric g; under
g -> Omega^2 g a weight-w quantity is re-trivialized by Omega^w.  Tensor
indices are raised and lowered with the active metric, which stands in for
the conformal metric (weight +2 lower, -2 upper).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import Jet, JetError, contract, rel_residual
from .riemann import CurvatureSuite

_IDX = "bcdefghijklmnopqrstuvwxy"


@dataclass(frozen=True)
class WeightedField:
    """Jet components with a conformal weight and one kind char per axis.

    kinds: 'u' upper / 'd' lower tensor index, 'T' standard tractor index.
    """
    jet: Jet
    weight: float = 0.0
    kinds: str = ""

    def __post_init__(self):
        if len(self.kinds) != self.jet.ndim:
            raise JetError(f"kinds {self.kinds!r} do not match rank {self.jet.ndim}")

    @property
    def valence(self):
        return self.kinds.count("T")

    def __mul__(self, other):
        # scalar density times field: weights add
        if isinstance(other, WeightedField):
            if other.kinds and self.kinds:
                raise JetError("use an explicit contraction for tensor products")
            a, b = (self, other) if not self.kinds else (other, self)
            return WeightedField(b.jet * a.jet, a.weight + b.weight, b.kinds)
        return WeightedField(self.jet * other, self.weight, self.kinds)

    __rmul__ = __mul__

    def __add__(self, other):
        self._match(other)
        return WeightedField(self.jet + other.jet, self.weight, self.kinds)

    def __sub__(self, other):
        self._match(other)
        return WeightedField(self.jet - other.jet, self.weight, self.kinds)

    def __neg__(self):
        return WeightedField(-self.jet, self.weight, self.kinds)

    def _match(self, other):
        if abs(self.weight - other.weight) > 1e-12 or self.kinds != other.kinds:
            raise JetError(f"cannot combine weight {self.weight} {self.kinds!r} "
                           f"with weight {other.weight} {other.kinds!r}")


def density(jet, weight=0.0):
    return WeightedField(jet, weight, "")


class ConformalFactor:
    """A positive rescaling function Omega with Upsilon_a = Omega^-1 d_a Omega."""

    def __init__(self, omega: Jet):
        if np.any(omega.value <= 0):
            raise JetError("conformal factor must be positive")
        self.omega = omega
        self.upsilon = omega.grad() / omega

    def power(self, w):
        if w == 0:
            return 1.0
        return self.omega ** w


def rescale_metric(g: Jet, omega: Jet) -> Jet:
    if np.any(omega.value <= 0):
        raise JetError("conformal factor must be positive")
    return omega * omega * g


def retrivialize(f: WeightedField, cf: ConformalFactor) -> WeightedField:
    """Components of a weight-w tensor density in the scale Omega^2 g."""
    if "T" in f.kinds:
        raise JetError("tractor fields transform with tractor_transform")
    return WeightedField(f.jet * cf.power(f.weight), f.weight, f.kinds)


def gradient(f: Jet) -> Jet:
    return f.grad()


def laplacian(suite: CurvatureSuite, T: Jet, kinds: str = "", conn=None) -> Jet:
    """g^ab nabla_a nabla_b T (density-coupled; trivial coupling in the active scale)."""
    d1 = suite.nabla(T, kinds, conn)
    d2 = suite.nabla(d1, "d" + kinds, conn)
    idx = _IDX[:T.ndim]
    return contract(f"az,az{idx}->{idx}", suite.ginv, d2)


def yamabe(suite: CurvatureSuite, f: WeightedField) -> WeightedField:
    d = suite.dim
    if abs(f.weight - (1 - d / 2)) > 1e-12:
        raise JetError(f"Yamabe operator acts on weight {1 - d / 2}, got {f.weight}")
    out = laplacian(suite, f.jet, f.kinds) + (1 - d / 2) * suite.J * f.jet
    return WeightedField(out, -1 - d / 2, f.kinds)


def almost_einstein_op(suite: CurvatureSuite, sigma: Jet) -> Jet:
    """Trace-free part of nabla_(a nabla_b) sigma + P_ab sigma."""
    hess = suite.nabla(suite.nabla(sigma, ""), "d")
    t = 0.5 * (hess + hess.T) + suite.P * sigma
    tr = contract("ab,ab->", suite.ginv, t)
    return t - suite.g * (tr / suite.dim)


def hessian(suite: CurvatureSuite, f: Jet) -> Jet:
    return suite.nabla(suite.nabla(f, ""), "d")


# ---- transformation-law residuals -------------------------------------------
# Each takes the metric jet g, the factor Omega and field jets; both sides are
# computed independently (the left side from the rescaled metric's own suite).

def _pair(g, omega):
    cf = ConformalFactor(omega)
    return CurvatureSuite(g), CurvatureSuite(rescale_metric(g, omega)), cf


def _ups(s, cf):
    U = cf.upsilon
    Uup = contract("ab,b->a", s.ginv, U)
    U2 = contract("a,a->", Uup, U)
    return U, Uup, U2


def vector_law_residual(g, omega, v):
    """Hat-nabla v^b versus nabla v^b + Y_a v^b - Y^b v_a + Y.v delta_a^b."""
    s, sh, cf = _pair(g, omega)
    U, Uup, _ = _ups(s, cf)
    lhs = sh.nabla(v, "u")
    vlow = contract("ab,b->a", s.g, v)
    rhs = (s.nabla(v, "u") + contract("a,b->ab", U, v) - contract("b,a->ab", Uup, vlow)
           + contract("c,c->", U, v) * np.eye(g.dim))
    return rel_residual(lhs, rhs)


def oneform_law_residual(g, omega, w):
    s, sh, cf = _pair(g, omega)
    U, Uup, _ = _ups(s, cf)
    lhs = sh.nabla(w, "d")
    rhs = (s.nabla(w, "d") - contract("a,b->ab", U, w) - contract("b,a->ab", U, w)
           + contract("c,c->", Uup, w) * s.g)
    return rel_residual(lhs, rhs)


def twotensor_law_residual(g, omega, F):
    s, sh, cf = _pair(g, omega)
    U, Uup, _ = _ups(s, cf)
    lhs = sh.nabla(F, "dd")
    UF1 = contract("d,dc->c", Uup, F)        # Y^d F_dc
    UF2 = contract("d,bd->b", Uup, F)        # Y^d F_bd
    rhs = (s.nabla(F, "dd") - 2 * contract("a,bc->abc", U, F) - contract("b,ac->abc", U, F)
           - contract("c,ba->abc", U, F) + contract("ab,c->abc", s.g, UF1)
           + contract("ac,b->abc", s.g, UF2))
    return rel_residual(lhs, rhs)


def skew3(T):
    """Complete antisymmetrization over three index slots."""
    return (T - T.transpose(1, 0, 2) - T.transpose(2, 1, 0) - T.transpose(0, 2, 1)
            + T.transpose(1, 2, 0) + T.transpose(2, 0, 1)) / 6.0


def twoform_skew_residual(g, omega, F):
    s, sh, _ = _pair(g, omega)
    return rel_residual(skew3(sh.nabla(F, "dd")), skew3(s.nabla(F, "dd")))


def divergence_law_residual(g, omega, F):
    """Hat-nabla^b F_bc = Omega^-2 (nabla^b F_bc + (d-4) Y^d F_dc) for a two-form."""
    s, sh, cf = _pair(g, omega)
    U, Uup, _ = _ups(s, cf)
    d = g.dim
    lhs = contract("ab,abc->c", sh.ginv, sh.nabla(F, "dd"))
    div = contract("ab,abc->c", s.ginv, s.nabla(F, "dd"))
    rhs = (div + (d - 4) * contract("d,dc->c", Uup, F)) / (omega * omega)
    return rel_residual(lhs, rhs)


def maxwell_residuals(g, omega, u):
    """d = 4: F = nabla_[b u_c] has invariant skew derivative and rescaled divergence."""
    if g.dim != 4:
        raise JetError("Maxwell covariance holds in dimension 4")
    s, sh, _ = _pair(g, omega)
    F = 0.5 * (s.nabla(u, "d") - s.nabla(u, "d").T)
    Fh = 0.5 * (sh.nabla(u, "d") - sh.nabla(u, "d").T)
    r_exact = rel_residual(Fh, F)
    div = contract("ab,abc->c", s.ginv, s.nabla(F, "dd"))
    divh = contract("ab,abc->c", sh.ginv, sh.nabla(Fh, "dd"))
    r_div = rel_residual(divh, div / (omega * omega))
    r_bianchi = rel_residual(skew3(sh.nabla(Fh, "dd")), skew3(s.nabla(F, "dd")))
    return {"exact": r_exact, "divergence": r_div, "bianchi": r_bianchi}


def schouten_law_residual(g, omega):
    s, sh, cf = _pair(g, omega)
    U, _, U2 = _ups(s, cf)
    rhs = s.P - s.nabla(U, "d") + contract("a,b->ab", U, U) - 0.5 * s.g * U2
    return rel_residual(sh.P, rhs)


def j_law_residual(g, omega):
    s, sh, cf = _pair(g, omega)
    U, _, U2 = _ups(s, cf)
    divU = contract("ab,ab->", s.ginv, s.nabla(U, "d"))
    rhs = (s.J - divU + (1 - g.dim / 2) * U2) / (omega * omega)
    return rel_residual(sh.J, rhs)


def weyl_invariance_residual(g, omega):
    s, sh, _ = _pair(g, omega)
    return rel_residual(sh.W, s.W)


def density_law_residual(g, omega, tau, w):
    """Hat-nabla (Omega^w tau) = Omega^w (nabla tau + w Y tau)."""
    cf = ConformalFactor(omega)
    lhs = (cf.power(w) * tau).grad()
    rhs = cf.power(w) * (tau.grad() + w * cf.upsilon * tau)
    return rel_residual(lhs, rhs)


def gradient_invariance_residual(g, omega, f):
    s, sh, _ = _pair(g, omega)
    return rel_residual(sh.nabla(f, ""), s.nabla(f, ""))


def yamabe_covariance_residual(g, omega, f):
    s, sh, cf = _pair(g, omega)
    d = g.dim
    w = 1 - d / 2
    lhs = yamabe(sh, WeightedField(cf.power(w) * f, w)).jet
    rhs = cf.power(-1 - d / 2) * yamabe(s, WeightedField(f, w)).jet
    return rel_residual(lhs, rhs)


def almost_einstein_covariance_residual(g, omega, sigma):
    s, sh, cf = _pair(g, omega)
    return rel_residual(almost_einstein_op(sh, omega * sigma), omega * almost_einstein_op(s, sigma))
