"""Adjoint tractors, the conformal Killing prolongation and fundamental derivatives.

An adjoint tractor is stored by its slots in the scale g: nu (scalar), l^a
(vector), mu_ab (skew two-form; weight 2 as a tensor density, trivialized
by g) and rho_a (one-form).  As an endomorphism of standard tractors it acts
on the slot vectors of the tractor module (mu lower), i.e. the displayed
matrix [[-nu, -l_b, 0], [-rho^a, mu^a_b, l^a], [0, rho_b, nu]] conjugated by
diag(1, g, 1).  Slot arrays may carry leading axes (e.g. a derivative index).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .conformal import WeightedField
from .jets import Jet, JetError, contract, rel_residual
from .riemann import CurvatureSuite
from .tractor import connection_matrix, metric_matrix, slot_matrix, tractor_curvature

_IDX = "bcdefghijklmnopqrstuvwxy"
_LEAD = "pqrstu"


@dataclass
class AdjointTractor:
    nu: Jet
    l: Jet
    mu: Jet
    rho: Jet

    @property
    def lead(self):
        return self.nu.shape

    def __add__(self, o):
        return AdjointTractor(self.nu + o.nu, self.l + o.l, self.mu + o.mu, self.rho + o.rho)

    def __sub__(self, o):
        return AdjointTractor(self.nu - o.nu, self.l - o.l, self.mu - o.mu, self.rho - o.rho)

    def __mul__(self, f):
        return AdjointTractor(self.nu * f, _bmul(self.l, f), _bmul(self.mu, f), _bmul(self.rho, f))

    __rmul__ = __mul__

    def __neg__(self):
        return AdjointTractor(-self.nu, -self.l, -self.mu, -self.rho)

    def max_abs(self):
        return max(float(np.max(np.abs(x.value))) if x.c.size else 0.0
                   for x in (self.nu, self.l, self.mu, self.rho))

    def residual(self, o):
        return max(rel_residual(a, b) for a, b in
                   zip((self.nu, self.l, self.mu, self.rho), (o.nu, o.l, o.mu, o.rho)))


def _bmul(T, f):
    # scalar jet times tensor jet, broadcasting over trailing tensor axes
    if isinstance(f, Jet) and f.ndim < T.ndim:
        idx = _IDX[:T.ndim]
        return contract(f"{idx[:f.ndim]},{idx}->{idx}", f, T)
    return T * f


# ---- matrix form -------------------------------------------------------------------

def adjoint_matrix(A: AdjointTractor, suite: CurvatureSuite) -> Jet:
    """The endomorphism on slot vectors (mu lower); leading axes preserved."""
    d = suite.dim
    lead = A.lead
    n = len(lead)
    li = _LEAD[:n]
    l_low = contract(f"ab,{li}b->{li}a", suite.g, A.l)
    rho_up = contract(f"ab,{li}b->{li}a", suite.ginv, A.rho)
    mu_mixed = contract(f"{li}ab,bc->{li}ac", A.mu, suite.ginv)     # mu_a^c
    return slot_matrix({
        ("t", "t"): -A.nu, ("t", "m"): -A.l,
        ("m", "t"): -A.rho, ("m", "m"): mu_mixed, ("m", "b"): l_low,
        ("b", "m"): rho_up, ("b", "b"): A.nu,
    }, lead, d, suite.dim)


def adjoint_from_matrix(M: Jet, suite: CurvatureSuite) -> AdjointTractor:
    """Read the slots back from a matrix (last two axes are the tractor axes)."""
    d = suite.dim
    n = M.ndim - 2
    li = _LEAD[:n]
    pre = (slice(None),) * n
    nu = M[pre + (d + 1, d + 1)]
    l = -M[pre + (0, slice(1, d + 1))]
    rho = -M[pre + (slice(1, d + 1), 0)]
    mu = contract(f"{li}ac,cb->{li}ab", M[pre + (slice(1, d + 1), slice(1, d + 1))], suite.g)
    return AdjointTractor(nu, l, mu, rho)


def skew_residual(M: Jet, suite) -> float:
    """|h M + (h M)^T| for a matrix with leading axes."""
    H = metric_matrix(suite)
    n = M.ndim - 2
    li = _LEAD[:n]
    hM = contract(f"XZ,{li}ZY->{li}XY", H, M)
    return rel_residual(hM, -hM.swap(n, n + 1))


def block_residual(M: Jet, suite) -> float:
    """Entries that must vanish or be tied together for M to be of adjoint form."""
    d = suite.dim
    n = M.ndim - 2
    pre = (slice(None),) * n
    r = [float(np.max(np.abs(M[pre + (0, d + 1)].c))), float(np.max(np.abs(M[pre + (d + 1, 0)].c)))]
    r.append(rel_residual(M[pre + (0, 0)], -M[pre + (d + 1, d + 1)]))
    return max(r)


# ---- connections ---------------------------------------------------------------------

def adjoint_connection(A: AdjointTractor, suite: CurvatureSuite) -> AdjointTractor:
    """nabla_a L via the Leibniz rule on endomorphisms: d_a M + [A_a, M]."""
    if A.lead:
        raise JetError("adjoint_connection takes an undifferentiated adjoint tractor")
    M = adjoint_matrix(A, suite)
    C = connection_matrix(suite)
    dM = M.grad() + contract("aXZ,ZY->aXY", C, M) - contract("XZ,aZY->aXY", M, C)
    return adjoint_from_matrix(dM, suite)


def adjoint_connection_slots(A: AdjointTractor, suite: CurvatureSuite) -> AdjointTractor:
    """The explicit slot formula for nabla_a L (nu, l, mu, rho slots)."""
    g, P = suite.g, suite.P
    d = suite.dim
    l_low = contract("ab,b->a", g, A.l)
    mu_up = contract("ab,bc->ac", A.mu, suite.ginv)                 # mu_a^c
    eye = Jet.constant(np.eye(d), suite.dim, suite.order)
    dl = suite.nabla(A.l, "u") + mu_up + contract(",ab->ab", A.nu, eye)
    gr = contract("ab,c->abc", g, A.rho)
    dmu = (suite.nabla(A.mu, "dd") - (contract("ab,c->abc", P, l_low) - contract("ac,b->abc", P, l_low))
           + (gr - gr.swap(1, 2)))
    dnu = suite.nabla(A.nu, "") - contract("ab,b->a", P, A.l) - A.rho
    drho = (suite.nabla(A.rho, "d") - contract("ab,bc->ac", suite.P_up, A.mu)
            + contract(",ab->ab", A.nu, P))
    return AdjointTractor(dnu, dl, dmu, drho)


def prolongation_connection(A: AdjointTractor, suite: CurvatureSuite) -> AdjointTractor:
    """nabla~ L = nabla L + l^d kappa_d."""
    M = adjoint_matrix(A, suite)
    C = connection_matrix(suite)
    dM = M.grad() + contract("aXZ,ZY->aXY", C, M) - contract("XZ,aZY->aXY", M, C)
    K = tractor_curvature(suite)
    dM = dM + contract("d,daXY->aXY", A.l, K)
    return adjoint_from_matrix(dM, suite)


def splitting_L(k: Jet, suite: CurvatureSuite) -> AdjointTractor:
    """mu = -nabla_[a k_b], nu = -(1/d) div k, rho = nabla nu - P k."""
    d = suite.dim
    k_low = contract("ab,b->a", suite.g, k)
    dk = suite.nabla(k_low, "d")
    mu = -0.5 * (dk - dk.T)
    nu = -contract("ab,ab->", suite.ginv, dk) / d
    rho = suite.nabla(nu, "") - contract("ab,b->a", suite.P, k)
    return AdjointTractor(nu, k, mu, rho)


def killing_residual(k: Jet, suite: CurvatureSuite) -> Jet:
    """Trace-free symmetric part of nabla_a k_b."""
    k_low = contract("ab,b->a", suite.g, k)
    dk = suite.nabla(k_low, "d")
    s = 0.5 * (dk + dk.T)
    tr = contract("ab,ab->", suite.ginv, s)
    return s - suite.g * (tr / suite.dim)


def killing_system_residuals(k: Jet, suite: CurvatureSuite) -> dict:
    """The four prolonged conformal Killing equations for (k, nu, mu, rho).

    The auxiliary fields are defined from k by nu = div k / d,
    mu = nabla_[a k_b], rho = nabla nu + P k (so the first and third
    equations hold up to the Killing residual).
    """
    d = suite.dim
    g, P = suite.g, suite.P
    k_low = contract("ab,b->a", g, k)
    dk = suite.nabla(k_low, "d")
    nu = contract("ab,ab->", suite.ginv, dk) / d
    mu = 0.5 * (dk - dk.T)
    rho = suite.nabla(nu, "") + contract("ab,b->a", P, k)
    e1 = dk - (contract(",ab->ab", nu, g) + mu)
    Pk = contract("ab,c->abc", P, k_low)
    gr = contract("ab,c->abc", g, rho)
    Wk = contract("d,dabc->abc", k, suite.W_low)
    e2 = suite.nabla(mu, "dd") - (-(Pk - Pk.swap(1, 2)) - (gr - gr.swap(1, 2)) + Wk)
    e3 = suite.nabla(nu, "") - (rho - contract("ab,b->a", P, k))
    Ck = contract("c,cab->ab", k, suite.C)
    e4 = (suite.nabla(rho, "d")
          - (-contract("ac,bc->ab", suite.P_up, mu) - contract(",ab->ab", nu, P) - Ck))
    return {"dk": e1, "dmu": e2, "dnu": e3, "drho": e4}


# ---- fundamental derivative -------------------------------------------------------------

def fundamental_derivative(A: AdjointTractor, F: WeightedField, suite: CurvatureSuite) -> WeightedField:
    """D_L on a weighted tensor-tractor field ('u', 'd', 'T' kinds).

    Density part: l^a nabla_a + w nu.  Each upper tensor index gets
    +(mu_a^b + nu delta) contracted on the field, each lower index the
    negative of its transpose, each tractor index -L acting on it.
    """
    d = suite.dim
    T = F.jet
    n = T.ndim
    idx = _IDX[:n]
    conn = {"T": connection_matrix(suite)} if "T" in F.kinds else None
    out = contract(f"a,a{idx}->{idx}", A.l, suite.nabla(T, F.kinds, conn))
    if F.weight != 0:
        out = out + F.weight * A.nu * T
    eye = Jet.constant(np.eye(d), suite.dim, suite.order)
    B = contract("ab,bc->ac", A.mu, suite.ginv) + contract(",ab->ab", A.nu, eye)   # mu_a^c + nu delta
    M = adjoint_matrix(A, suite) if "T" in F.kinds else None
    for p, kind in enumerate(F.kinds):
        src = idx[:p] + "z" + idx[p + 1:]
        x = idx[p]
        if kind == "u":
            out = out + contract(f"z{x},{src}->{idx}", B, T)
        elif kind == "d":
            out = out - contract(f"{x}z,{src}->{idx}", B, T)
        elif kind == "T":
            out = out - contract(f"{x}z,{src}->{idx}", M, T)
        else:
            raise JetError(f"unsupported index kind {kind!r}")
    return WeightedField(out, F.weight, F.kinds)


def lie_derivative_tractor(k: Jet, V: Jet, suite: CurvatureSuite, tol=1e-9):
    """L_k V = k^b nabla_b V + K V with K = L(-k), and its slot form.

    Returns (composite, slot_form, status); status is "ok" for conformal
    Killing k and "warning" otherwise (the formulas are evaluated anyway).
    """
    d = suite.dim
    K = splitting_L(-k, suite)
    MK = adjoint_matrix(K, suite)
    A = {"T": connection_matrix(suite)}
    dV = suite.nabla(V, "T", A)
    composite = contract("b,bX->X", k, dV) + contract("XY,Y->X", MK, V)

    sg, mu_low, rho = V[0], V[1:d + 1], V[d + 1]
    mu = contract("ab,b->a", suite.ginv, mu_low)
    nu = K.nu
    dnu = suite.nabla(nu, "")
    dk = suite.nabla(k, "u")                                       # nabla_b k^a as [b, a]
    Lsig = contract("b,b->", k, suite.nabla(sg, "")) - nu * sg
    Lmu = (contract("b,ba->a", k, suite.nabla(mu, "u")) - contract("b,ba->a", mu, dk) + nu * mu)
    Lrho = contract("b,b->", k, suite.nabla(rho, "")) + nu * rho
    mid_up = Lmu - sg * contract("ab,b->a", suite.ginv, dnu)
    bot = Lrho + contract("a,a->", mu, dnu)
    mid = contract("ab,b->a", suite.g, mid_up)
    from .tractor import from_slots
    slot_form = from_slots(Lsig, mid, bot)
    res = float(np.max(np.abs(killing_residual(k, suite).value)))
    status = "ok" if res <= tol else "warning"
    if status == "warning":
        warnings.warn(f"lie_derivative_tractor: k is not conformal Killing (residual {res:.2e})",
                      stacklevel=2)
    return composite, slot_form, status


# ---- flat conformal algebra -------------------------------------------------------------

def flat_conformal_generators(X):
    """The (d+1)(d+2)/2 conformal Killing fields of flat R^d as vector jets.

    Order: translations, rotations (i < j), dilation, special conformal.
    """
    d = len(X)
    zero = X[0] * 0.0
    gens, names = [], []

    def vec(comps):
        k = min(c.order for c in comps)
        return Jet(np.stack([c.truncate(k).c for c in comps]), X[0].dim, k)

    for i in range(d):
        gens.append(vec([zero + (1.0 if j == i else 0.0) for j in range(d)]))
        names.append(f"translation_{i}")
    for i in range(d):
        for j in range(i + 1, d):
            comps = [zero] * d
            comps = list(comps)
            comps[i] = X[j]
            comps[j] = -X[i]
            gens.append(vec(comps))
            names.append(f"rotation_{i}{j}")
    gens.append(vec(list(X)))
    names.append("dilation")
    r2 = sum(x * x for x in X)
    for i in range(d):
        gens.append(vec([(r2 if j == i else zero) - 2 * X[i] * X[j] for j in range(d)]))
        names.append(f"special_conformal_{i}")
    return names, gens


# ---- static spacetime checks --------------------------------------------------------------

def static_checks(k: Jet, sigma: Jet, suite: CurvatureSuite) -> dict:
    """K_A I^A and the simplicity of K_AB = h_AC K^C_B (values at the point)."""
    from .tractor import scale_tractor
    d = suite.dim
    K = adjoint_matrix(splitting_L(-k, suite), suite).value
    h = metric_matrix(suite).value
    I = scale_tractor(sigma, suite).jet.value
    Klow = h @ K
    Xv = np.zeros(d + 2)
    Xv[d + 1] = 1.0
    KB = Xv @ h @ K                   # K_B = X^A K_AB
    KX = Klow @ Xv                    # K_CD X^D
    T = np.einsum("ab,c->abc", Klow, KX)
    alt = (T - T.transpose(1, 0, 2) - T.transpose(2, 1, 0) - T.transpose(0, 2, 1)
           + T.transpose(1, 2, 0) + T.transpose(2, 0, 1)) / 6.0
    scale = max(1.0, float(np.abs(Klow).max()) ** 2)
    return {"KI": float(abs(KB @ I)), "simple": float(np.abs(alt).max()) / scale,
            "KofI": float(np.abs(K @ I).max())}
