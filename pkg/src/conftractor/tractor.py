"""Standard tractors in slot form relative to the active scale g.

Each tractor index of length d+2 is stored as an "upper" slot vector
(sigma, mu_1..mu_d, rho), i.e. V = Y sigma + Z^a mu_a + X rho with mu lower.
Contractions of two tractor indices use the tractor metric
h = 2 sigma rho + g^ab mu_a mu_b.  For a weight-w tractor the slots carry
weights (w+1, w+1, w-1); in the active scale these weights only show up
when re-trivializing under Omega.
"""

from __future__ import annotations

import math

import numpy as np

from .conformal import ConformalFactor, WeightedField, laplacian
from .jets import Jet, JetError, concatenate, contract, ncoef, rel_residual
from .riemann import CurvatureSuite

_IDX = "bcdefghijklmnopqrstuvwxy"


class TractorConsistencyError(JetError):
    pass


# ---- slot bookkeeping --------------------------------------------------------

def slots(V: Jet, axis=0):
    """Split a tractor axis into (sigma, mu, rho); mu keeps the axis position."""
    n = V.shape[axis]
    take = lambda sl: V[(slice(None),) * axis + (sl,)]
    return take(0), take(slice(1, n - 1)), take(n - 1)


def from_slots(top: Jet, mid: Jet, bot: Jet) -> Jet:
    """Stack slot blocks along a new leading tractor axis."""
    k = min(top.order, mid.order, bot.order)
    c = np.concatenate([top.truncate(k).c[None], mid.truncate(k).c, bot.truncate(k).c[None]])
    return Jet(c, top.dim, k)


def slot_matrix(blocks: dict, lead: tuple, d: int, dim: int):
    """Assemble a (d+2)x(d+2) jet matrix (with leading axes) from slot blocks.

    Keys are pairs of 't' (sigma), 'm' (mu), 'b' (rho); block shapes are
    lead + (), lead + (d,) or lead + (d, d) accordingly.
    """
    k = min(b.order for b in blocks.values())
    c = np.zeros(tuple(lead) + (d + 2, d + 2, ncoef(dim, k)))
    sl = {"t": slice(0, 1), "m": slice(1, d + 1), "b": slice(d + 1, d + 2)}
    nl = len(lead)
    for (r, s), blk in blocks.items():
        arr = blk.truncate(k).c
        if r != "m":
            arr = np.expand_dims(arr, nl)
        if s != "m":
            arr = np.expand_dims(arr, nl + 1)
        c[(Ellipsis,) + (sl[r], sl[s], slice(None))] = arr
    return Jet(c, dim, k)


def _cache(suite):
    if not hasattr(suite, "_tractor"):
        suite._tractor = {}
    return suite._tractor


def connection_matrix(suite: CurvatureSuite) -> Jet:
    """A[a, X, Y] with nabla_a V = d_a V + A_a V on slot vectors (mu lower)."""
    cache = _cache(suite)
    if "A" not in cache:
        d = suite.dim
        eye = Jet.constant(np.broadcast_to(np.eye(d), (d, d)), suite.dim, suite.P.order)
        cache["A"] = slot_matrix({
            ("t", "m"): -eye,                                  # -mu_a
            ("m", "t"): suite.P,                               # P_ab sigma
            ("m", "m"): -suite.Gamma.transpose(1, 2, 0),       # -Gamma^c_ab mu_c
            ("m", "b"): suite.g,                               # g_ab rho
            ("b", "m"): -suite.P_up,                           # -P_a^b mu_b
        }, (d,), d, suite.dim)
    return cache["A"]


def metric_matrix(suite: CurvatureSuite) -> Jet:
    """h_XY on pairs of slot vectors."""
    cache = _cache(suite)
    if "H" not in cache:
        d = suite.dim
        one = Jet.constant(1.0, suite.dim, suite.order)
        cache["H"] = slot_matrix({("t", "b"): one, ("b", "t"): one, ("m", "m"): suite.ginv},
                                 (), d, suite.dim)
    return cache["H"]


def tnabla(F: WeightedField, suite: CurvatureSuite) -> WeightedField:
    """Coupled Levi-Civita / tractor connection; new lower index first."""
    out = suite.nabla(F.jet, F.kinds, {"T": connection_matrix(suite)})
    return WeightedField(out, F.weight, "d" + F.kinds)


def tlaplacian(F: WeightedField, suite: CurvatureSuite) -> Jet:
    return laplacian(suite, F.jet, F.kinds, {"T": connection_matrix(suite)})


def hcontract(T: Jet, ax1: int, ax2: int, suite: CurvatureSuite) -> Jet:
    """Contract two tractor axes of one array with the tractor metric."""
    n = T.ndim
    idx = list(_IDX[:n])
    idx[ax1], idx[ax2] = "X", "Y"
    out = "".join(c for c in idx if c not in "XY")
    return contract(f"XY,{''.join(idx)}->{out}", metric_matrix(suite), T)


def hdot(U: Jet, V: Jet, suite: CurvatureSuite) -> Jet:
    """h(U, V) contracting the first tractor axis of each."""
    HU = contract("XY,X" + _IDX[:U.ndim - 1] + "->Y" + _IDX[:U.ndim - 1], metric_matrix(suite), U)
    a = _IDX[:U.ndim - 1]
    b = _IDX[U.ndim - 1:U.ndim - 1 + V.ndim - 1]
    return contract(f"Y{a},Y{b}->{a}{b}", HU, V)


def tractor_metric(U: WeightedField, V: WeightedField, suite) -> WeightedField:
    if U.kinds != "T" or V.kinds != "T":
        raise JetError("tractor_metric takes two standard tractors")
    return WeightedField(hdot(U.jet, V.jet, suite), U.weight + V.weight, "")


def lower_tractor(V: Jet, suite, axis=0) -> Jet:
    """Covector components h_XY V^Y along one axis."""
    n = V.ndim
    idx = _IDX[:n]
    src = idx[:axis] + "Y" + idx[axis + 1:]
    dst = idx[:axis] + "X" + idx[axis + 1:]
    return contract(f"XY,{src}->{dst}", metric_matrix(suite), V)


# ---- splitting tractors --------------------------------------------------------

def projectors(suite: CurvatureSuite):
    """X^A, Y^A and Z^A_b (tensor index lowered) as slot vectors in scale g."""
    d, dim = suite.dim, suite.dim
    X = Jet.constant(np.eye(d + 2)[d + 1], dim, suite.order)
    Y = Jet.constant(np.eye(d + 2)[0], dim, suite.order)
    z = np.zeros((d, d + 2, ncoef(dim, suite.order)))
    z[:, 1:d + 1] = suite.g.c          # Z_b has mu_c = g_cb
    Z = Jet(z, dim, suite.order)
    return X, Y, Z


def projector_table(suite):
    """All pairings of X, Y, Z_b under h."""
    X, Y, Z = projectors(suite)
    return {
        "XX": hdot(X, X, suite), "XY": hdot(X, Y, suite), "YY": hdot(Y, Y, suite),
        "XZ": hdot(X, Z.T, suite), "YZ": hdot(Y, Z.T, suite), "ZZ": hdot(Z.T, Z.T, suite),
    }


def projector_transport_residual(suite):
    """nabla X = Z, nabla_a Z_b = -P_ab X - g_ab Y, nabla_a Y = P_a^b Z_b."""
    X, Y, Z = projectors(suite)
    A = {"T": connection_matrix(suite)}
    dX = suite.nabla(X, "T", A)
    dY = suite.nabla(Y, "T", A)
    dZ = suite.nabla(Z, "dT", A)
    rX = rel_residual(dX, Z)
    rY = rel_residual(dY, contract("ab,bX->aX", suite.P_up, Z))
    rZ = rel_residual(dZ, -contract("ab,X->abX", suite.P, X) - contract("ab,X->abX", suite.g, Y))
    return max(rX, rY, rZ)


def transformed_projectors(suite, cf: ConformalFactor):
    """X, Y, Z after the change of scale, written in g-slots."""
    X, Y, Z = projectors(suite)
    U = cf.upsilon
    U2 = contract("ab,ab->", suite.ginv, contract("a,b->ab", U, U))
    Zh = Z + contract("b,X->bX", U, X)
    Yh = Y - contract("b,bX->X", contract("bc,c->b", suite.ginv, U), Z) - 0.5 * U2 * X
    return X, Yh, Zh


# ---- change of scale -------------------------------------------------------------

def transform_matrix(suite, cf: ConformalFactor) -> Jet:
    """diag(Omega, Omega, 1/Omega) @ M(Upsilon) for slot vectors in scale g."""
    d = suite.dim
    U = cf.upsilon
    Uup = contract("ab,b->a", suite.ginv, U)
    U2 = contract("a,a->", Uup, U)
    om = cf.omega
    one = om * 0 + 1.0
    eye = Jet.constant(np.eye(d), suite.dim, suite.order)
    return slot_matrix({
        ("t", "t"): om,
        ("m", "t"): om * U, ("m", "m"): om * eye,
        ("b", "t"): -0.5 * U2 / om, ("b", "m"): -Uup / om, ("b", "b"): one / om,
    }, (), d, suite.dim)


def tractor_transform(F: WeightedField, suite, cf: ConformalFactor) -> WeightedField:
    """Components of a weighted tractor field in the scale Omega^2 g."""
    M = transform_matrix(suite, cf)
    V = F.jet
    n = V.ndim
    idx = _IDX[:n]
    for p, kind in enumerate(F.kinds):
        if kind != "T":
            continue
        src = idx[:p] + "Y" + idx[p + 1:]
        dst = idx[:p] + "X" + idx[p + 1:]
        V = contract(f"XY,{src}->{dst}", M, V)
    if F.weight != 0:
        V = V * cf.power(F.weight)
    return WeightedField(V, F.weight, F.kinds)


# ---- Thomas-D and friends ------------------------------------------------------

def thomas_d(F: WeightedField, suite: CurvatureSuite) -> WeightedField:
    """D_A F with slots ((d+2w-2) w F, (d+2w-2) nabla F, -(Delta F + w J F))."""
    d, w = suite.dim, F.weight
    c = d + 2 * w - 2
    grad = tnabla(F, suite).jet
    lap = tlaplacian(F, suite)
    top = (c * w) * F.jet
    bot = -(lap + w * suite.J * F.jet)
    return WeightedField(from_slots(top, c * grad, bot), w - 1, "T" + F.kinds)


def scale_tractor(sigma: Jet, suite) -> WeightedField:
    D = thomas_d(WeightedField(sigma, 1.0), suite)
    return WeightedField(D.jet / suite.dim, 0.0, "T")


def i_squared(sigma: Jet, suite) -> Jet:
    """|nabla sigma|^2 - (2/d) sigma (J + Delta) sigma."""
    grad = sigma.grad()
    lap = laplacian(suite, sigma)
    return (contract("ab,ab->", suite.ginv, contract("a,b->ab", grad, grad))
            - (2.0 / suite.dim) * sigma * (suite.J * sigma + lap))


def parallel_residual(sigma: Jet, suite) -> float:
    """max |nabla I| over slots (absolute)."""
    I = scale_tractor(sigma, suite)
    return float(np.max(np.abs(tnabla(I, suite).jet.value)))


def box(F: WeightedField, suite) -> WeightedField:
    """Delta + (1 - d/2) J with the tractor-coupled Laplacian, weight 1 - d/2."""
    d = suite.dim
    if abs(F.weight - (1 - d / 2)) > 1e-12:
        raise JetError(f"Box acts on weight {1 - d / 2}, got {F.weight}")
    out = tlaplacian(F, suite) + (1 - d / 2) * suite.J * F.jet
    return WeightedField(out, -1 - d / 2, F.kinds)


def _check_x_only(V: Jet, what, tol=1e-8):
    top, mid, bot = slots(V)
    scale = max(1.0, float(np.max(np.abs(bot.value))))
    bad = max(float(np.max(np.abs(top.value))), float(np.max(np.abs(mid.value)) if mid.c.size else 0.0))
    if bad > tol * scale:
        raise TractorConsistencyError(f"{what}: non-rho slots do not vanish ({bad:.3e})")
    return bot


def paneitz(f: WeightedField, suite) -> WeightedField:
    """P4 f from Box D_A f = -X_A P4 f, weight 2 - d/2."""
    d = suite.dim
    if abs(f.weight - (2 - d / 2)) > 1e-12:
        raise JetError(f"Paneitz operator acts on weight {2 - d / 2}, got {f.weight}")
    V = box(thomas_d(f, suite), suite)
    bot = _check_x_only(V.jet, "Paneitz")
    return WeightedField(-bot, -2 - d / 2, f.kinds)


def box2k(F: WeightedField, k: int, suite) -> WeightedField:
    """D^{A1}..D^{A(k-1)} Box D_{A(k-1)}..D_{A1} on weight k - d/2."""
    d = suite.dim
    if k < 1:
        raise JetError("k must be >= 1")
    if d % 2 == 0 and 2 * k >= d:
        raise JetError(f"Box_{2 * k} is unsupported in even dimension {d} (need 2k < d)")
    if abs(F.weight - (k - d / 2)) > 1e-12:
        raise JetError(f"Box_{2 * k} acts on weight {k - d / 2}, got {F.weight}")
    # composing the Thomas-D operators spends 4k - 2 orders before the cancellations
    need = max(2 * k + 2, 4 * k - 2)
    if min(suite.order, F.jet.order) < need:
        from .jets import OrderBudgetError
        raise OrderBudgetError(f"Box_{2 * k} needs metric and field jets of order >= {need}")
    V = F
    for _ in range(k - 1):
        V = thomas_d(V, suite)
    V = box(V, suite)
    for _ in range(k - 1):
        DV = thomas_d(V, suite)
        V = WeightedField(hcontract(DV.jet, 0, 1, suite), DV.weight, DV.kinds[2:])
    return V


def box2k_flat_constant(d: int, k: int) -> float:
    """c with Box_2k = c Delta^k on flat R^d, read off from x1^(2k) at the origin."""
    from .riemann import as_metric
    K = max(2 * k + 2, 4 * k - 2)
    s = CurvatureSuite(as_metric(np.eye(d).tolist(), d, K))
    x1 = Jet.constant(0.0, d, K)
    x1.c[..., 1] = 1.0
    val = float(box2k(WeightedField(x1 ** (2 * k), k - d / 2), k, s).jet.value)
    return val / math.factorial(2 * k)


def dx_identity(f: WeightedField, suite) -> Jet:
    """D^A (X_A f) computed slotwise."""
    X = projectors(suite)[0]
    idx = _IDX[:f.jet.ndim]
    Xf = contract(f"X,{idx}->X{idx}", X, f.jet)
    D = thomas_d(WeightedField(Xf, f.weight + 1, "T" + f.kinds), suite)
    return hcontract(D.jet, 0, 1, suite)


# ---- curvature -------------------------------------------------------------------

def tractor_curvature(suite: CurvatureSuite) -> Jet:
    """kappa[a, b, X, Y] acting on slot vectors (mu lower)."""
    cache = _cache(suite)
    if "kappa" not in cache:
        d = suite.dim
        C = suite.C
        Cup = contract("abf,fe->abe", C, suite.ginv)
        Wmix = contract("abcf,fe->abce", suite.W_low, suite.ginv)
        cache["kappa"] = slot_matrix({
            ("m", "t"): C, ("m", "m"): Wmix, ("b", "m"): -Cup,
        }, (d, d), d, suite.dim)
    return cache["kappa"]


def curvature_commutator(V: Jet, suite) -> Jet:
    """(nabla_a nabla_b - nabla_b nabla_a) V for a standard tractor field."""
    A = {"T": connection_matrix(suite)}
    d1 = suite.nabla(V, "T", A)
    d2 = suite.nabla(d1, "dT", A)
    return d2 - d2.swap(0, 1)


def einstein_obstruction_rank(kappa: Jet, tol=1e-9):
    """Rank and kernel dimension of kappa as a map from slot vectors to two-forms."""
    K = kappa.value
    n = K.shape[-1]
    M = K.reshape(-1, n)
    s = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    return rank, n - rank


def w_tractor(suite: CurvatureSuite) -> Jet:
    """W_ABCE as covector components (all tractor indices down)."""
    d = suite.dim
    if d < 4:
        raise JetError("the W-tractor normalization needs d >= 4")
    gi = suite.ginv
    up = lambda T, n: _raise_all(T, gi, n)
    Wu = up(suite.W_low, 4)
    Cu = up(suite.C, 3)
    Bu = up(suite.B, 2)
    E = np.zeros((d, d + 2))
    E[:, 1:d + 1] = np.eye(d)
    x = np.zeros(d + 2)
    x[0] = 1.0                      # X_A picks the sigma slot

    t_w = _embed(Wu, "abce,aA,bB,cC,eE->ABCE", E, E, E, E)
    # Z_A^a Z_B^b X_[C Z_E]^e C_abe
    zzxz = _embed(Cu, "abe,aA,bB,C,eE->ABCE", E, E, x, E)
    t_c1 = 0.5 * (zzxz - zzxz.transpose(0, 1, 3, 2))
    # X_[A Z_B]^b Z_C^c Z_E^e C_ceb
    xzzz = _embed(Cu, "ceb,A,bB,cC,eE->ABCE", x, E, E, E)
    t_c2 = 0.5 * (xzzz - xzzz.transpose(1, 0, 2, 3))
    # X_[A Z_B]^b X_[C Z_E]^e B_eb
    xzxz = _embed(Bu, "eb,A,bB,C,eE->ABCE", x, E, x, E)
    t_b = xzxz - xzxz.transpose(1, 0, 2, 3)
    t_b = 0.25 * (t_b - t_b.transpose(0, 1, 3, 2))
    return (d - 4) * (t_w - 2 * t_c1 - 2 * t_c2) + 4 * t_b


def _embed(T, subs, *consts):
    """Linear placement of a jet tensor into slot positions via constant maps."""
    ins, out = subs.split("->")
    first, *rest = ins.split(",")
    return Jet(np.einsum(f"{first}Z,{','.join(rest)}->{out}Z", T.c, *consts), T.dim, T.order)


def _raise_all(T, ginv, n):
    idx = _IDX[:n]
    for p in range(n):
        src = idx[:p] + "z" + idx[p + 1:]
        T = contract(f"{idx[p]}z,{src}->{idx}", ginv, T)
    return T
