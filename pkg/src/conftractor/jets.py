"""Truncated multivariate Taylor arithmetic ("jets").

A jet of order K at a point x0 stores every partial derivative
f_alpha = d^alpha f(x0) with |alpha| <= K.  Multi-indices are laid out in
graded-lexicographic order, so truncating to a lower order is a prefix slice
and differentiation is a pure re-index.  The multinomial (Leibniz) factors
live inside multiplication.

A ``Jet`` may carry a leading tensor shape: ``Jet.c`` has shape
``(*shape, ncoef)``.  Arithmetic broadcasts over the tensor shape and mixed
orders are truncated to the smaller one.  The module level ``jet_*``
functions are the strict scalar API (matching dim and order required).
"""

from __future__ import annotations

import itertools
import math
import os
from functools import lru_cache

import numpy as np

DEFAULT_TOL = 1e-9


class JetError(ValueError):
    pass


class SingularJetError(JetError):
    pass


class OrderBudgetError(JetError):
    """Raised when a computation needs more derivatives than the jets carry."""


class DomainError(JetError):
    pass


def default_order():
    return int(os.environ.get("TRACTOR_DEFAULT_ORDER", "6"))


def _compositions(deg, dim):
    if dim == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _compositions(deg - first, dim - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def multi_indices(dim, order):
    """All exponent tuples of total degree <= order, graded-lex ordered."""
    out = []
    for deg in range(order + 1):
        out.extend(_compositions(deg, dim))
    return tuple(out)


def ncoef(dim, order):
    return math.comb(dim + order, dim)


class JetSpace:
    """Index tables for jets of a given (dim, order); cached and shared."""

    def __init__(self, dim, order):
        self.dim = dim
        self.order = order
        self.alphas = multi_indices(dim, order)
        self.n = len(self.alphas)
        self.rank = {a: r for r, a in enumerate(self.alphas)}
        self.degree = np.array([sum(a) for a in self.alphas])
        self.factorial = np.array(
            [math.prod(math.factorial(e) for e in a) for a in self.alphas], dtype=float)
        self._pairs = None
        self._partial = {}

    @property
    def pairs(self):
        # (ia, ib, coef, starts): product terms sorted by output rank
        if self._pairs is None:
            ia, ib, cf, starts = [], [], [], []
            for g in self.alphas:
                starts.append(len(ia))
                for a in itertools.product(*(range(e + 1) for e in g)):
                    b = tuple(x - y for x, y in zip(g, a))
                    ia.append(self.rank[a])
                    ib.append(self.rank[b])
                    cf.append(math.prod(math.comb(x, y) for x, y in zip(g, a)))
            self._pairs = (np.array(ia), np.array(ib), np.array(cf, dtype=float),
                           np.array(starts))
        return self._pairs

    def partial_index(self, axis):
        if axis not in self._partial:
            e = [0] * self.dim
            e[axis] = 1
            lower = multi_indices(self.dim, self.order - 1)
            self._partial[axis] = np.array(
                [self.rank[tuple(x + y for x, y in zip(a, e))] for a in lower])
        return self._partial[axis]


@lru_cache(maxsize=None)
def space(dim, order):
    return JetSpace(dim, order)


def _letters(exclude):
    for ch in "ZYXWVUTSRQPONMLKJIHGFEDCBA":
        if ch not in exclude:
            return ch
    raise JetError("no free einsum letter")


class Jet:
    """Jet-valued array: coefficients ``c`` of shape ``(*shape, ncoef)``."""

    __slots__ = ("c", "dim", "order")
    __array_priority__ = 100

    def __init__(self, c, dim, order):
        c = np.asarray(c, dtype=float)
        if c.shape[-1] != ncoef(dim, order):
            raise JetError(f"coefficient axis {c.shape[-1]} does not match dim={dim}, order={order}")
        self.c = c
        self.dim = dim
        self.order = order

    # construction helpers
    @classmethod
    def zeros(cls, shape, dim, order):
        return cls(np.zeros(tuple(shape) + (ncoef(dim, order),)), dim, order)

    @classmethod
    def constant(cls, value, dim, order):
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (ncoef(dim, order),))
        c[..., 0] = value
        return cls(c, dim, order)

    @property
    def shape(self):
        return self.c.shape[:-1]

    @property
    def ndim(self):
        return self.c.ndim - 1

    @property
    def value(self):
        """Constant terms (the field values at the expansion point)."""
        return self.c[..., 0]

    def __repr__(self):
        return f"Jet(shape={self.shape}, dim={self.dim}, order={self.order})"

    def coeff(self, alpha):
        return self.c[..., space(self.dim, self.order).rank[tuple(alpha)]]

    def truncate(self, order):
        if order > self.order:
            raise OrderBudgetError(f"cannot raise jet order {self.order} to {order}")
        if order < 0:
            raise OrderBudgetError("negative jet order")
        if order == self.order:
            return self
        return Jet(self.c[..., :ncoef(self.dim, order)], self.dim, order)

    def copy(self):
        return Jet(self.c.copy(), self.dim, self.order)

    # tensor-shape manipulation
    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.c[idx + (slice(None),)], self.dim, self.order)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Jet(self.c.transpose(tuple(axes) + (self.ndim,)), self.dim, self.order)

    @property
    def T(self):
        return self.transpose()

    def swap(self, a, b):
        ax = list(range(self.ndim))
        ax[a], ax[b] = ax[b], ax[a]
        return self.transpose(ax)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Jet(self.c.reshape(tuple(shape) + (self.c.shape[-1],)), self.dim, self.order)

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(self.ndim))
        return Jet(self.c.sum(axis=axis), self.dim, self.order)

    def lin(self, subscripts):
        """Apply a linear index operation (trace, transpose, ...) via einsum."""
        ins, out = subscripts.split("->")
        ch = _letters(subscripts)
        return Jet(np.einsum(f"{ins}{ch}->{out}{ch}", self.c), self.dim, self.order)

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise JetError("jet dimension mismatch")
            k = min(self.order, other.order)
            return self.truncate(k), other.truncate(k)
        return None

    def __add__(self, other):
        pair = self._coerce(other)
        if pair is not None:
            a, b = pair
            return Jet(a.c + b.c, a.dim, a.order)
        other = np.asarray(other, dtype=float)
        c = np.broadcast_to(self.c, np.broadcast_shapes(self.c.shape, other.shape + (1,))).copy()
        c[..., 0] += other
        return Jet(c, self.dim, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.dim, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        pair = self._coerce(other)
        if pair is not None:
            a, b = pair
            return Jet(_cauchy(a.c, b.c, a.dim, a.order), a.dim, a.order)
        other = np.asarray(other, dtype=float)
        return Jet(self.c * other[..., None], self.dim, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.recip()
        other = np.asarray(other, dtype=float)
        return Jet(self.c / other[..., None], self.dim, self.order)

    def __rtruediv__(self, other):
        return self.recip() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            out = Jet.constant(np.ones(self.shape), self.dim, self.order)
            base = self
            while p:
                if p & 1:
                    out = out * base
                p >>= 1
                if p:
                    base = base * base
            return out
        return compose(self, "power", p)

    def recip(self):
        a0 = self.value
        if np.any(a0 == 0) or not np.all(np.isfinite(a0)):
            raise SingularJetError("reciprocal of a jet with zero constant term")
        # Newton: r <- r (2 - a r), exact to order 2^k - 1 after k steps
        r = Jet.constant(1.0 / a0, self.dim, self.order)
        good = 0
        while good < self.order:
            r = r * (2.0 - self * r)
            good = 2 * good + 1
        return r

    # differentiation
    def partial(self, axis):
        if self.order < 1:
            raise OrderBudgetError("partial derivative of an order-0 jet")
        if not 0 <= axis < self.dim:
            raise JetError(f"axis {axis} out of range for dim {self.dim}")
        idx = space(self.dim, self.order).partial_index(axis)
        return Jet(self.c[..., idx], self.dim, self.order - 1)

    def grad(self):
        """All first partials, derivative index prepended: shape (dim, *shape)."""
        if self.order < 1:
            raise OrderBudgetError("gradient of an order-0 jet")
        sp = space(self.dim, self.order)
        idx = np.stack([sp.partial_index(i) for i in range(self.dim)])
        c = self.c[..., idx]                      # (*shape, dim, n')
        c = np.moveaxis(c, -2, 0)
        return Jet(c, self.dim, self.order - 1)


def _cauchy(a, b, dim, order):
    ia, ib, cf, starts = space(dim, order).pairs
    prod = a[..., ia] * b[..., ib]
    prod *= cf
    return np.add.reduceat(prod, starts, axis=-1)


def contract(subscripts, a, b):
    """einsum-style contraction of two jet arrays (or a jet and an ndarray)."""
    ins, out = subscripts.split("->")
    sa, sb = ins.split(",")
    ch = _letters(subscripts)
    if isinstance(a, Jet) and isinstance(b, Jet):
        if a.dim != b.dim:
            raise JetError("jet dimension mismatch")
        k = min(a.order, b.order)
        a, b = a.truncate(k), b.truncate(k)
        ia, ib, cf, starts = space(a.dim, k).pairs
        ga = a.c[..., ia]
        gb = b.c[..., ib] * cf
        prod = np.einsum(f"{sa}{ch},{sb}{ch}->{out}{ch}", ga, gb, optimize=True)
        return Jet(np.add.reduceat(prod, starts, axis=-1), a.dim, k)
    if isinstance(a, Jet):
        return Jet(np.einsum(f"{sa}{ch},{sb}->{out}{ch}", a.c, np.asarray(b, float)), a.dim, a.order)
    if isinstance(b, Jet):
        return Jet(np.einsum(f"{sa},{sb}{ch}->{out}{ch}", np.asarray(a, float), b.c), b.dim, b.order)
    return np.einsum(subscripts, a, b)


def stack(jets, axis=0):
    jets = list(jets)
    k = min(j.order for j in jets)
    dim = jets[0].dim
    return Jet(np.stack([j.truncate(k).c for j in jets], axis=axis), dim, k)


def concatenate(jets, axis=0):
    jets = list(jets)
    k = min(j.order for j in jets)
    return Jet(np.concatenate([j.truncate(k).c for j in jets], axis=axis), jets[0].dim, k)


def min_order(*jets):
    return min(j.order for j in jets if isinstance(j, Jet))


# ---- analytic composition -------------------------------------------------

def _derivs(name, a0, K, p=None):
    """Array (K+1, *a0.shape) of f^(k)(a0) for the named function."""
    a0 = np.asarray(a0, dtype=float)
    out = np.empty((K + 1,) + a0.shape)
    if name == "exp":
        out[:] = np.exp(a0)
    elif name == "log":
        if np.any(a0 <= 0):
            raise DomainError("log of non-positive constant term")
        out[0] = np.log(a0)
        for k in range(1, K + 1):
            out[k] = (-1) ** (k - 1) * math.factorial(k - 1) / a0 ** k
    elif name in ("sqrt", "power"):
        p = 0.5 if name == "sqrt" else float(p)
        if np.any(a0 < 0) or (np.any(a0 == 0) and K > 0 and p != int(p)):
            raise DomainError(f"{name} needs a positive constant term")
        coef = 1.0
        for k in range(K + 1):
            out[k] = coef * a0 ** (p - k) if coef != 0 else 0.0
            coef *= p - k
    elif name in ("sin", "cos"):
        s, c = np.sin(a0), np.cos(a0)
        cyc = [s, c, -s, -c] if name == "sin" else [c, -s, -c, s]
        for k in range(K + 1):
            out[k] = cyc[k % 4]
    elif name in ("sinh", "cosh"):
        s, c = np.sinh(a0), np.cosh(a0)
        cyc = [s, c] if name == "sinh" else [c, s]
        for k in range(K + 1):
            out[k] = cyc[k % 2]
    else:
        raise JetError(f"unknown analytic function {name!r}")
    return out


ANALYTIC = ("exp", "log", "sqrt", "sin", "cos", "sinh", "cosh", "power")


def compose(a, name, p=None):
    """f(a) for a named analytic f: sum_k f^(k)(a0) u^k / k! with u = a - a0."""
    a0 = a.value
    d = _derivs(name, a0, a.order, p)
    u = a - a0
    # Horner in u
    out = Jet.constant(d[a.order] / math.factorial(a.order), a.dim, a.order)
    for k in range(a.order - 1, -1, -1):
        out = out * u + d[k] / math.factorial(k)
    return out


def exp(a):
    return compose(a, "exp") if isinstance(a, Jet) else np.exp(a)


def log(a):
    return compose(a, "log") if isinstance(a, Jet) else np.log(a)


def sqrt(a):
    return compose(a, "sqrt") if isinstance(a, Jet) else np.sqrt(a)


def sin(a):
    return compose(a, "sin") if isinstance(a, Jet) else np.sin(a)


def cos(a):
    return compose(a, "cos") if isinstance(a, Jet) else np.cos(a)


def sinh(a):
    return compose(a, "sinh") if isinstance(a, Jet) else np.sinh(a)


def cosh(a):
    return compose(a, "cosh") if isinstance(a, Jet) else np.cosh(a)


def power(a, p):
    return compose(a, "power", p) if isinstance(a, Jet) else np.power(a, p)


# ---- strict scalar API ----------------------------------------------------

def jet_const(c, dim, order):
    if order < 0:
        raise JetError("order must be non-negative")
    return Jet.constant(float(c), dim, order)


def jet_var(i, x0, dim, order):
    if not 0 <= i < dim:
        raise JetError(f"axis {i} out of range for dim {dim}")
    j = Jet.constant(float(x0), dim, order)
    if order >= 1:
        e = [0] * dim
        e[i] = 1
        j.c[space(dim, order).rank[tuple(e)]] = 1.0
    return j


def coordinates(point, order):
    """Coordinate jets x^i expanded at ``point``."""
    point = [float(p) for p in point]
    d = len(point)
    return [jet_var(i, p, d, order) for i, p in enumerate(point)]


def _check_pair(a, b):
    if a.dim != b.dim or a.order != b.order:
        raise JetError(f"jet mismatch: (dim {a.dim}, order {a.order}) vs (dim {b.dim}, order {b.order})")


def jet_add(a, b):
    _check_pair(a, b)
    return a + b


def jet_mul(a, b):
    _check_pair(a, b)
    return a * b


def jet_recip(a):
    return a.recip()


def jet_compose_analytic(name, a, p=None):
    return compose(a, name, p)


def jet_partial(a, i):
    return a.partial(i)


# ---- comparisons ----------------------------------------------------------

def as_array(x):
    if isinstance(x, Jet):
        return x.c
    return np.asarray(x, dtype=float)


def rel_residual(a, b=0.0):
    """max |a-b| / max(1, |a|, |b|) over all entries (jets compared coefficientwise).

    A plain number or array on either side is read as a constant jet.
    """
    if isinstance(a, Jet) and isinstance(b, Jet):
        k = min(a.order, b.order)
        a, b = a.truncate(k), b.truncate(k)
    elif isinstance(a, Jet) != isinstance(b, Jet):
        j, x = (a, b) if isinstance(a, Jet) else (b, a)
        x = Jet.constant(np.broadcast_to(np.asarray(x, dtype=float), j.shape), j.dim, j.order)
        a, b = j, x
    a, b = as_array(a), as_array(b)
    a, b = np.broadcast_arrays(a, b)
    if a.size == 0:
        return 0.0
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale))


def taylor_residual(a: Jet, b=0.0):
    """max |a-b| over Taylor coefficients (c_alpha / alpha!), scaled by max(1, |a|, |b|) globally.

    Suited to high-order jets, where derivative values grow like alpha!.
    """
    if isinstance(b, Jet):
        k = min(a.order, b.order)
        a, b = a.truncate(k), b.truncate(k)
        bc = b.c
    else:
        bc = np.asarray(b, dtype=float)[..., None] * np.eye(1, a.c.shape[-1])[0]
    f = space(a.dim, a.order).factorial
    ta, tb = a.c / f, bc / f
    ta, tb = np.broadcast_arrays(ta, tb)
    if ta.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(ta))), float(np.max(np.abs(tb))))
    return float(np.max(np.abs(ta - tb))) / scale


def close(a, b, tol=DEFAULT_TOL):
    return rel_residual(a, b) <= tol
