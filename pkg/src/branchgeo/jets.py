"""Truncated bivariate Taylor jets in z and zbar.

A jet of order N stores coefficients c[j, k] of z**j * conj(z)**k for j + k <= N.
Wirtinger derivatives, products, composition and the division/extension
calculus used near branch points all act exactly on these coefficients.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import convolve2d

from .errors import NonExtendable, NotDivisible, OrderTooLow, ZeroOrderJet

TAU_JET = 1e-12


def _triangle(order: int) -> np.ndarray:
    j, k = np.indices((order + 1, order + 1))
    return (j + k) <= order


class BiJet:
    """Coefficients of sum c_jk z^j zbar^k truncated at total degree ``order``."""

    __array_priority__ = 100

    def __init__(self, coeffs, order: int | None = None, real: bool = False):
        c = np.asarray(coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("coefficient array must be square")
        if order is None:
            order = c.shape[0] - 1
        if order < 0:
            raise ValueError("order must be non-negative")
        full = np.zeros((order + 1, order + 1), dtype=complex)
        m = min(order + 1, c.shape[0])
        full[:m, :m] = c[:m, :m]
        full[~_triangle(order)] = 0.0
        if real:
            full = 0.5 * (full + full.T.conj())
        self.order = int(order)
        self.coeffs = full
        self.real = bool(real)

    # constructors
    @classmethod
    def zeros(cls, order: int) -> "BiJet":
        return cls(np.zeros((order + 1, order + 1)), order, real=True)

    @classmethod
    def constant(cls, value, order: int) -> "BiJet":
        c = np.zeros((order + 1, order + 1), dtype=complex)
        c[0, 0] = value
        return cls(c, order, real=np.isreal(value))

    @classmethod
    def monomial(cls, j: int, k: int, order: int, coeff=1.0) -> "BiJet":
        c = np.zeros((order + 1, order + 1), dtype=complex)
        if j + k <= order:
            c[j, k] = coeff
        return cls(c, order)

    @classmethod
    def z(cls, order: int) -> "BiJet":
        return cls.monomial(1, 0, order)

    @classmethod
    def zbar(cls, order: int) -> "BiJet":
        return cls.monomial(0, 1, order)

    @classmethod
    def from_terms(cls, terms: dict, order: int, real: bool = False) -> "BiJet":
        c = np.zeros((order + 1, order + 1), dtype=complex)
        for (j, k), v in terms.items():
            if j + k <= order:
                c[j, k] += v
        return cls(c, order, real=real)

    @classmethod
    def holomorphic(cls, poly: Sequence[complex], order: int) -> "BiJet":
        """Jet of sum_j poly[j] z^j."""
        c = np.zeros((order + 1, order + 1), dtype=complex)
        for j, v in enumerate(poly[: order + 1]):
            c[j, 0] = v
        return cls(c, order)

    @classmethod
    def random(cls, order: int, rng: np.random.Generator, scale: float = 1.0,
               real: bool = False) -> "BiJet":
        c = rng.normal(size=(order + 1, order + 1)) + 1j * rng.normal(size=(order + 1, order + 1))
        return cls(scale * c, order, real=real)

    # basic algebra
    def _coerce(self, other) -> "BiJet":
        if isinstance(other, BiJet):
            return other
        if np.isscalar(other):
            return BiJet.constant(other, self.order)
        return NotImplemented

    def _real_scalar(self, x) -> bool:
        return np.isreal(x) and self.real

    def copy(self) -> "BiJet":
        out = BiJet.__new__(BiJet)
        out.order, out.coeffs, out.real = self.order, self.coeffs.copy(), self.real
        return out

    def truncate(self, order: int) -> "BiJet":
        order = min(order, self.order)
        return BiJet(self.coeffs[: order + 1, : order + 1], order, real=self.real)

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        n = min(self.order, o.order)
        c = self.coeffs[: n + 1, : n + 1] + o.coeffs[: n + 1, : n + 1]
        return BiJet(c, n, real=self.real and o.real)

    __radd__ = __add__

    def __neg__(self):
        return BiJet(-self.coeffs, self.order, real=self.real)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return BiJet(self.coeffs * other, self.order, real=self._real_scalar(other))
        if not isinstance(other, BiJet):
            return NotImplemented
        n = min(self.order, other.order)
        a = self.coeffs[: n + 1, : n + 1]
        b = other.coeffs[: n + 1, : n + 1]
        c = convolve2d(a, b)[: n + 1, : n + 1]
        return BiJet(c, n, real=self.real and other.real)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return self * (1.0 / other)
        if isinstance(other, BiJet):
            return self * other.reciprocal()
        return NotImplemented

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n: int):
        if not float(n).is_integer() or n < 0:
            return self.power(n)
        out = BiJet.constant(1.0, self.order)
        base = self
        n = int(n)
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # Wirtinger calculus
    def dz(self) -> "BiJet":
        if self.order == 0:
            raise ZeroOrderJet("cannot differentiate an order-0 jet")
        j = np.arange(1, self.order + 1)[:, None]
        return BiJet(j * self.coeffs[1:, :-1], self.order - 1)

    def dzbar(self) -> "BiJet":
        if self.order == 0:
            raise ZeroOrderJet("cannot differentiate an order-0 jet")
        k = np.arange(1, self.order + 1)[None, :]
        return BiJet(k * self.coeffs[:-1, 1:], self.order - 1)

    def times_monomial(self, j: int, k: int) -> "BiJet":
        """Exact product with z^j zbar^k; the order grows by j + k."""
        n = self.order + j + k
        out = np.zeros((n + 1, n + 1), dtype=complex)
        out[j:j + self.order + 1, k:k + self.order + 1] = self.coeffs
        return BiJet(out, n)

    def extend(self, order: int) -> "BiJet":
        """Same coefficients viewed at a higher order (for exact polynomials)."""
        if order <= self.order:
            return self.truncate(order)
        return BiJet(self.coeffs, order, real=self.real)

    def degree(self, tol: float = 0.0) -> int:
        j, k = np.nonzero(np.abs(self.coeffs) > tol)
        return int((j + k).max()) if j.size else -1

    def laplacian(self) -> "BiJet":
        return self.dz().dzbar() * 4.0

    def inverse_dzdzbar(self, times: int = 1) -> "BiJet":
        """Polynomial solution u of (d/dz d/dzbar)^times u = self with no pure terms."""
        c = self.coeffs
        n = self.order + 2 * times
        out = np.zeros((n + 1, n + 1), dtype=complex)
        j, k = np.indices(c.shape)
        fac = np.ones(c.shape)
        for t in range(1, times + 1):
            fac = fac * (j + t) * (k + t)
        out[times:, times:][: c.shape[0], : c.shape[1]] = c / fac
        return BiJet(out, n, real=self.real)

    def conj(self) -> "BiJet":
        return BiJet(self.coeffs.T.conj(), self.order, real=self.real)

    def re(self) -> "BiJet":
        return BiJet(0.5 * (self.coeffs + self.coeffs.T.conj()), self.order, real=True)

    def im(self) -> "BiJet":
        return BiJet(-0.5j * (self.coeffs - self.coeffs.T.conj()), self.order, real=True)

    def is_real(self, tol: float = TAU_JET) -> bool:
        return bool(np.max(np.abs(self.coeffs - self.coeffs.T.conj()), initial=0.0) <= tol)

    # values and derivatives at the origin
    @property
    def value(self) -> complex:
        return complex(self.coeffs[0, 0])

    def coeff(self, j: int, k: int) -> complex:
        if j + k > self.order:
            raise OrderTooLow(f"coefficient ({j},{k}) beyond order {self.order}")
        return complex(self.coeffs[j, k])

    def derivative_at_zero(self, nz: int, nzbar: int) -> complex:
        """d^(nz+nzbar) / dz^nz dzbar^nzbar at 0."""
        return math.factorial(nz) * math.factorial(nzbar) * self.coeff(nz, nzbar)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        n = self.order
        zp = np.stack([z ** j for j in range(n + 1)])
        zb = zp.conj()
        out = np.einsum("jk,j...,k...->...", self.coeffs, zp, zb)
        if self.real:
            return out.real
        return out

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def allclose(self, other: "BiJet", tol: float = 1e-10) -> bool:
        n = min(self.order, other.order)
        d = self.coeffs[: n + 1, : n + 1] - other.coeffs[: n + 1, : n + 1]
        return bool(np.max(np.abs(d)) <= tol)

    # series operations
    def power(self, p: float, root_at_zero: complex | None = None) -> "BiJet":
        """(self)**p for a jet with nonzero constant term.

        The branch is fixed by ``root_at_zero`` (value of the power at 0); the
        principal value is used otherwise.
        """
        c0 = self.value
        if abs(c0) <= TAU_JET:
            raise ValueError("power of a jet with vanishing constant term")
        u = self / c0 - 1.0
        lead = root_at_zero if root_at_zero is not None else c0 ** p
        out = BiJet.constant(1.0, self.order)
        term = BiJet.constant(1.0, self.order)
        binom = 1.0
        for n in range(1, self.order + 1):
            binom *= (p - n + 1) / n
            term = term * u
            out = out + term * binom
        return out * lead

    def reciprocal(self) -> "BiJet":
        c0 = self.value
        if abs(c0) <= TAU_JET:
            raise ValueError("reciprocal of a jet vanishing at 0")
        u = self / c0 - 1.0
        out = BiJet.constant(1.0, self.order)
        term = BiJet.constant(1.0, self.order)
        for _ in range(self.order):
            term = term * (-u)
            out = out + term
        return out / c0

    def compose(self, h: "BiJet") -> "BiJet":
        """self(h(z)) for a jet h with h(0) = 0."""
        if abs(h.value) > TAU_JET:
            raise ValueError("inner jet must vanish at 0")
        n = min(self.order, h.order)
        hh = h.truncate(n)
        hb = hh.conj()
        hp = [BiJet.constant(1.0, n)]
        hbp = [BiJet.constant(1.0, n)]
        for _ in range(n):
            hp.append(hp[-1] * hh)
            hbp.append(hbp[-1] * hb)
        acc = np.zeros((n + 1, n + 1), dtype=complex)
        for j in range(n + 1):
            for k in range(n + 1 - j):
                c = self.coeffs[j, k]
                if c != 0:
                    acc += c * (hp[j] * hbp[k]).coeffs
        return BiJet(acc, n, real=self.real)

    def formal_inverse(self) -> "BiJet":
        """Jet of the inverse map of a diffeomorphism germ fixing 0."""
        if abs(self.value) > TAU_JET:
            raise ValueError("map must fix the origin")
        if self.order < 1:
            raise OrderTooLow("inverse needs order >= 1")
        alpha, beta = self.coeffs[1, 0], self.coeffs[0, 1]
        det = abs(alpha) ** 2 - abs(beta) ** 2
        if abs(det) <= TAU_JET:
            raise ValueError("linear part is singular")
        n = self.order
        lin = BiJet.from_terms({(1, 0): alpha, (0, 1): beta}, n)
        rest = self - lin
        w = BiJet.z(n)

        def lin_inv(v: BiJet) -> BiJet:
            return (v * np.conj(alpha) - v.conj() * beta) / det

        c = lin_inv(w)
        for _ in range(n):
            c = lin_inv(w - rest.compose(c))
        return c

    # serialization
    def to_dict(self, tol: float = 0.0) -> dict:
        rows = []
        for j in range(self.order + 1):
            for k in range(self.order + 1 - j):
                v = self.coeffs[j, k]
                if abs(v) > tol:
                    rows.append([j, k, float(v.real), float(v.imag)])
        return {"order": self.order, "coeffs": rows}

    @classmethod
    def from_dict(cls, data: dict, real: bool = False) -> "BiJet":
        order = int(data["order"])
        c = np.zeros((order + 1, order + 1), dtype=complex)
        for j, k, re, im in data["coeffs"]:
            j, k = int(j), int(k)
            if j < 0 or k < 0 or j + k > order:
                raise ValueError(f"coefficient slot ({j},{k}) outside order {order}")
            c[j, k] = complex(re, im)
        return cls(c, order, real=real)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def __repr__(self):
        nz = int(np.count_nonzero(np.abs(self.coeffs) > TAU_JET))
        return f"BiJet(order={self.order}, nonzero={nz}, real={self.real})"


@total_ordering
@dataclass(frozen=True)
class ZOrder:
    """z-order of a jet; ``limited`` marks TruncationLimited(N+1), a lower bound."""

    value: int
    limited: bool = False

    def __lt__(self, other):
        other = other if isinstance(other, ZOrder) else ZOrder(int(other))
        return self.value < other.value

    def __eq__(self, other):
        if isinstance(other, ZOrder):
            return self.value == other.value and self.limited == other.limited
        return not self.limited and self.value == other

    def __hash__(self):
        return hash((self.value, self.limited))

    def __add__(self, other):
        other = other if isinstance(other, ZOrder) else ZOrder(int(other))
        return ZOrder(self.value + other.value, self.limited or other.limited)

    def __sub__(self, k: int):
        return ZOrder(self.value - int(k), self.limited)

    def __str__(self):
        return f">={self.value}" if self.limited else str(self.value)

    def to_json(self):
        return str(self) if self.limited else self.value


def ord_z(f: BiJet | Iterable[BiJet], tol: float = TAU_JET) -> ZOrder:
    """Smallest j with d^j f / dz^j (0) != 0; vector input takes the minimum."""
    if not isinstance(f, BiJet):
        return min(ord_z(g, tol) for g in f)
    pure = np.abs(f.coeffs[:, 0])
    hits = np.nonzero(pure > tol)[0]
    if hits.size == 0:
        return ZOrder(f.order + 1, limited=True)
    return ZOrder(int(hits[0]))


def in_class_C(f: BiJet, s: int, k: int, tol: float = TAU_JET) -> bool:
    """Membership in the ideal of jets whose coefficients with j <= s, j + m <= k vanish."""
    if k > f.order:
        raise OrderTooLow(f"class test up to order {k} needs a jet of order >= {k}")
    for j in range(min(s, k) + 1):
        if np.any(np.abs(f.coeffs[j, : k - j + 1]) > tol):
            return False
    return True


def _ratio_terms(f: BiJet, zbar_pow: int, z_pow: int, tol: float):
    """Split zbar^a f / z^b into its polynomial part and the non-polynomial slots.

    Returns (coefficient array of the polynomial part, order of that part,
    list of (degree, j, m) for nonzero slots that give non-polynomial terms).
    """
    n = f.order
    out_order = n + zbar_pow - z_pow
    if out_order < 0:
        raise OrderTooLow(f"jet of order {n} too short for division by z^{z_pow}")
    out = np.zeros((out_order + 1, out_order + 1), dtype=complex)
    bad = []
    for j in range(n + 1):
        for m in range(n + 1 - j):
            c = f.coeffs[j, m]
            if j >= z_pow:
                out[j - z_pow, m + zbar_pow] = c
            elif abs(c) > tol:
                bad.append((j + m + zbar_pow - z_pow, j, m))
    bad.sort()
    return out, out_order, bad


def divide_z_pow(f: BiJet, p: int, tol: float = TAU_JET) -> BiJet:
    """Jet of f / z^p; every coefficient with j < p must vanish."""
    out, order, bad = _ratio_terms(f, 0, p, tol)
    if bad:
        slots = [(j, m) for _, j, m in bad]
        raise NotDivisible(f"jet not divisible by z^{p}", slots=slots)
    return BiJet(out, order)


def extension_degree(f: BiJet, s: int, zbar_pow: int | None = None, tol: float = TAU_JET) -> ZOrder:
    """Largest k such that zbar^a f / z^s has a C^k extension (a defaults to s).

    A non-polynomial homogeneous term of degree d is C^(d-1,1) and no better,
    so the answer is the smallest such degree minus one. When no such term is
    present within the jet, the answer is limited by truncation.
    """
    a = s if zbar_pow is None else zbar_pow
    _, order, bad = _ratio_terms(f, a, s, tol)
    if not bad:
        return ZOrder(order, limited=True)
    return ZOrder(bad[0][0] - 1)


def conj_ratio_extend(e: BiJet, s: int, k: int | None = None, tol: float = TAU_JET) -> BiJet:
    """Order-k jet of the C^k extension of (zbar^s / z^s) e.

    Needs c_jm = 0 for all j < s with j + m <= k; ``k`` defaults to the jet order.
    """
    if k is None:
        k = e.order
    if k > e.order:
        raise OrderTooLow(f"extension to order {k} needs a jet of order >= {k}")
    out, order, bad = _ratio_terms(e, s, s, tol)
    for deg, j, m in bad:
        if deg <= k:
            raise NonExtendable(
                f"d^{j + m} e / dz^{j} dzbar^{m} (0) != 0 blocks a C^{k} extension",
                slot=[j, m], degree=deg)
    return BiJet(out, order).truncate(k)


def ratio_extend(f: BiJet, zbar_pow: int, z_pow: int, tol: float = TAU_JET) -> tuple[BiJet, ZOrder]:
    """Taylor jet of zbar^a f / z^b up to its smoothness degree, plus that degree."""
    out, order, bad = _ratio_terms(f, zbar_pow, z_pow, tol)
    if not bad:
        return BiJet(out, order), ZOrder(order, limited=True)
    deg = bad[0][0] - 1
    if deg < 0:
        raise NonExtendable("quotient is not continuous at 0", slot=list(bad[0][1:]), degree=bad[0][0])
    return BiJet(out, order).truncate(deg), ZOrder(deg)
