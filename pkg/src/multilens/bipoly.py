"""Dense bivariate polynomials in formally independent ``x`` and ``xbar``.

``coeffs[a, b]`` is the coefficient of ``x**a * xbar**b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import mpmath
import numpy as np
from scipy.signal import convolve2d

from .errors import DegreeOverflowError, ZeroPolynomialError

PRUNE_TOL = 1e-12
DEGREE_CAP = 512


class DegreeVector(NamedTuple):
    s: int  # degree in x
    t: int  # degree in xbar

    def __le__(self, other):
        return self.s <= other[0] and self.t <= other[1]

    def __ge__(self, other):
        return self.s >= other[0] and self.t >= other[1]

    def __lt__(self, other):
        return self <= other and tuple(self) != tuple(other)

    def __gt__(self, other):
        return self >= other and tuple(self) != tuple(other)

    def __add__(self, other):
        return DegreeVector(self.s + other[0], self.t + other[1])

    def __mul__(self, n):
        return DegreeVector(self.s * n, self.t * n)

    __rmul__ = __mul__

    def swapped(self) -> "DegreeVector":
        return DegreeVector(self.t, self.s)

    @property
    def is_zero_sentinel(self) -> bool:
        return self.s < 0


#: degree of the zero polynomial; compares below every real degree vector
ZERO_DEGREE = DegreeVector(-1, -1)


def to_mpc(v) -> mpmath.mpc:
    """Exact conversion of a Python, numpy (incl. long double) or mpmath scalar."""
    if isinstance(v, (mpmath.mpc, mpmath.mpf, int)):
        return mpmath.mpc(v)
    if isinstance(v, (np.floating, np.complexfloating, float, complex)):
        v = np.clongdouble(v)
        re, im = (mpmath.mpf(part.as_integer_ratio()[0]) / part.as_integer_ratio()[1]
                  for part in (v.real, v.imag))
        return mpmath.mpc(re, im)
    return mpmath.mpc(v)


def _array(values, dtype):
    """Array of ``dtype``; ``object`` means mpmath complex at working precision."""
    if np.dtype(dtype) == object:
        return np.vectorize(to_mpc, otypes=[object])(np.asarray(values, dtype=object))
    return np.asarray(values, dtype=dtype)


def _check_cap(shape, cap):
    if shape[0] - 1 > cap or shape[1] - 1 > cap:
        raise DegreeOverflowError(
            f"nominal degree {(shape[0] - 1, shape[1] - 1)} exceeds cap {cap}"
        )


@dataclass(frozen=True, eq=False)
class BiPoly:
    coeffs: np.ndarray
    cap: int = DEGREE_CAP

    def __post_init__(self):
        c = np.array(self.coeffs, ndmin=2, copy=True)
        if c.dtype not in (np.clongdouble, np.dtype(object)):
            c = c.astype(complex)
        if c.ndim != 2 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 2-D array")
        _check_cap(c.shape, self.cap)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction helpers
    @classmethod
    def const(cls, c, dtype=complex) -> "BiPoly":
        return cls(_array([[c]], dtype))

    @classmethod
    def x(cls, dtype=complex) -> "BiPoly":
        return cls(_array([[0], [1]], dtype))

    @classmethod
    def xbar(cls, dtype=complex) -> "BiPoly":
        return cls(_array([[0, 1]], dtype))

    @classmethod
    def monomial(cls, a: int, b: int, c=1.0) -> "BiPoly":
        m = np.zeros((a + 1, b + 1), dtype=complex)
        m[a, b] = c
        return cls(m)

    @property
    def dtype(self):
        return self.coeffs.dtype

    def astype(self, dtype) -> "BiPoly":
        return BiPoly(self.coeffs.astype(dtype), self.cap)

    @property
    def nominal_degree(self) -> DegreeVector:
        return DegreeVector(self.coeffs.shape[0] - 1, self.coeffs.shape[1] - 1)

    def norm(self) -> float:
        """Largest coefficient magnitude."""
        return float(np.abs(self.coeffs).max())

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.norm() <= tol

    def degree(self, prune_tol: float = PRUNE_TOL) -> DegreeVector:
        """Effective degree after discarding coefficients below
        ``prune_tol * norm``.  Raises ``ZeroPolynomialError`` for zero."""
        d = self.degree_or_sentinel(prune_tol)
        if d.is_zero_sentinel:
            raise ZeroPolynomialError("degree of the zero polynomial")
        return d

    def degree_or_sentinel(self, prune_tol: float = PRUNE_TOL) -> DegreeVector:
        mag = np.abs(self.coeffs)
        top = mag.max()
        if top == 0.0:
            return ZERO_DEGREE
        keep = mag > prune_tol * top
        rows = np.nonzero(keep.any(axis=1))[0]
        cols = np.nonzero(keep.any(axis=0))[0]
        return DegreeVector(int(rows[-1]), int(cols[-1]))

    def trim(self, prune_tol: float = PRUNE_TOL) -> "BiPoly":
        """Drop trailing rows/columns that are pure rounding dust."""
        d = self.degree_or_sentinel(prune_tol)
        if d.is_zero_sentinel:
            return BiPoly.const(0.0)
        return BiPoly(self.coeffs[: d.s + 1, : d.t + 1], self.cap)

    # arithmetic
    def __add__(self, other):
        if not isinstance(other, BiPoly):
            other = BiPoly.const(other, self.coeffs.dtype)
        s = max(self.coeffs.shape[0], other.coeffs.shape[0])
        t = max(self.coeffs.shape[1], other.coeffs.shape[1])
        out = np.zeros((s, t), dtype=np.result_type(self.coeffs, other.coeffs))
        out[: self.coeffs.shape[0], : self.coeffs.shape[1]] += self.coeffs
        out[: other.coeffs.shape[0], : other.coeffs.shape[1]] += other.coeffs
        return BiPoly(out, min(self.cap, other.cap))

    __radd__ = __add__

    def __neg__(self):
        return BiPoly(-self.coeffs, self.cap)

    def __sub__(self, other):
        return self + (-other if isinstance(other, BiPoly) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, BiPoly):
            return self.scale(other)
        cap = min(self.cap, other.cap)
        shape = (
            self.coeffs.shape[0] + other.coeffs.shape[0] - 1,
            self.coeffs.shape[1] + other.coeffs.shape[1] - 1,
        )
        _check_cap(shape, cap)
        if self.coeffs.dtype == object or other.coeffs.dtype == object:
            return BiPoly(_convolve_object(self.coeffs, other.coeffs), cap)
        return BiPoly(convolve2d(self.coeffs, other.coeffs), cap)

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, n: int):
        if int(n) != n or n < 1:
            raise ValueError("only positive integer powers are supported")
        n = int(n)
        result = None
        base = self
        while n:
            if n & 1:
                result = base if result is None else result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def scale(self, c) -> "BiPoly":
        return BiPoly(self.coeffs * _array(c, self.coeffs.dtype), self.cap)

    def conjugate(self) -> "BiPoly":
        """Conjugate every coefficient and swap the roles of x and xbar."""
        return BiPoly(np.conj(self.coeffs.T), self.cap)

    def __call__(self, x, xbar):
        return evaluate(self, x, xbar)

    def to_text(self) -> str:
        return dump(self)

    def __repr__(self):
        return f"BiPoly(nominal_degree={tuple(self.nominal_degree)})"


def _convolve_object(p, q):
    # convolve2d has no object-dtype path (used for mpmath coefficients)
    if p.size > q.size:
        p, q = q, p
    out = np.zeros((p.shape[0] + q.shape[0] - 1, p.shape[1] + q.shape[1] - 1), dtype=object)
    for (a, b), c in np.ndenumerate(p):
        if c != 0:
            out[a : a + q.shape[0], b : b + q.shape[1]] += c * q
    return out


def add(p: BiPoly, q: BiPoly) -> BiPoly:
    return p + q


def mul(p: BiPoly, q: BiPoly) -> BiPoly:
    return p * q


def pow(p: BiPoly, n: int) -> BiPoly:  # noqa: A001
    return p**n


def scale(p: BiPoly, c) -> BiPoly:
    return p.scale(c)


def conjugate(p: BiPoly) -> BiPoly:
    return p.conjugate()


def degree(p: BiPoly, prune_tol: float = PRUNE_TOL) -> DegreeVector:
    return p.degree(prune_tol)


def product(polys) -> BiPoly:
    out = BiPoly.const(1.0)
    for p in polys:
        out = out * p
    return out


def evaluate(p: BiPoly, x, xbar):
    """Nested Horner evaluation; ``x`` and ``xbar`` may be arrays.

    Arithmetic is carried out in the coefficient dtype.
    """
    c = p.coeffs
    x = _array(x, c.dtype)
    xbar = _array(xbar, c.dtype)
    acc = _array(np.zeros(np.broadcast(x, xbar).shape), c.dtype)
    for a in range(c.shape[0] - 1, -1, -1):
        row = np.zeros_like(acc)
        for b in range(c.shape[1] - 1, -1, -1):
            row = row * xbar + c[a, b]
        acc = acc * x + row
    # 0-d object arrays collapse to bare scalars under arithmetic
    acc = np.asarray(acc, dtype=c.dtype)
    return acc[()] if acc.ndim == 0 else acc


def dump(p: BiPoly) -> str:
    """Text table: one line per power of x, columns are powers of xbar."""

    def fmt(z):
        return f"{z.real:.17g}{z.imag:+.17g}i"

    return "\n".join(" ".join(fmt(z) for z in row) for row in p.coeffs)


def load(text: str) -> BiPoly:
    rows = []
    for line in text.strip().splitlines():
        rows.append([complex(tok.replace("i", "j")) for tok in line.split()])
    return BiPoly(np.array(rows, dtype=complex))
