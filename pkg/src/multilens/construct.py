"""Denominator clearing: from the lensing equation to the lensing polynomial.

With ``Q_1 = -sum m/(xbar - conj y)`` and, for later planes,
``Q_j = -sum m/(xbar - conj y + sum_i beta_ij conj(Q_i))``, every nested
fraction is cleared by multiplying through by products of conjugated
denominators.  Everything is kept polynomial: ``QD[j]`` stores the product
``Q_j * D_j`` directly, so no polynomial division is ever done.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .bipoly import PRUNE_TOL, BiPoly, DegreeVector, _array, evaluate, product
from .bounds import check_g, ek_ok
from .ensemble import Ensemble, as_complex
from .errors import DegenerateEnsembleError, DegreeMismatchError


@dataclass(frozen=True, eq=False)
class ClearedSystem:
    """Cleared polynomials, expressed in local coordinates.

    Construction happens in ``u = (x - shift) / scale``; ``ensemble`` and
    ``source`` are the local ensemble and source, and ``physical`` holds the
    originals.  ``P(u, conj u) = eta_local(u) * prod_j D[j](u, conj u)``.
    """

    A: tuple[tuple[BiPoly, ...], ...]
    D: tuple[BiPoly, ...]
    QD: tuple[BiPoly, ...]
    P: BiPoly
    Pbar: BiPoly
    Phat: BiPoly
    ensemble: Ensemble
    source: complex
    shift: complex = 0j
    scale: float = 1.0
    physical: Ensemble | None = None
    physical_source: complex | None = None

    def to_local(self, x):
        return (np.asarray(x) - self.shift) / self.scale

    def to_physical(self, u):
        return np.asarray(u) * self.scale + self.shift

    def eval_P(self, x, physical=True):
        u = self.to_local(x) if physical else np.asarray(x)
        return evaluate(self.P, u, np.conj(u))

    def eval_Pbar(self, x, physical=True):
        u = self.to_local(x) if physical else np.asarray(x)
        return evaluate(self.Pbar, u, np.conj(u))

    def eval_D(self, x, physical=True):
        u = self.to_local(x) if physical else np.asarray(x)
        ub = np.conj(u)
        return np.prod([evaluate(d, u, ub) for d in self.D], axis=0)


def normalization(ensemble: Ensemble) -> tuple[complex, float]:
    """Mass-weighted centroid and a length scale with max|y - c| <= scale."""
    ys = ensemble.all_positions()
    ms = np.concatenate([p.m for p in ensemble.planes])
    c = complex(np.sum(ms * ys) / np.sum(ms))
    spread = float(np.max(np.abs(ys - c)))
    scale = max(spread, float(np.sqrt(ms.sum())))
    return c, scale


def build_cleared_system(
    ensemble: Ensemble, w, normalize: bool = True, dtype=np.clongdouble
) -> ClearedSystem:
    """Clear denominators for source ``w``.

    Coefficients are accumulated in ``dtype`` (extended precision by
    default): P has high-order zeros at the obstruction points of the
    earlier planes, and near them double-precision coefficients cannot
    reproduce its value to better than about 1e-8 relative.
    """
    w = as_complex(w)
    if normalize:
        shift, scale = normalization(ensemble)
    else:
        shift, scale = 0j, 1.0
    local = ensemble.rescaled(shift, scale) if normalize else ensemble
    # The polynomial is built from parameters rescaled in the working dtype:
    # rounding them to double first would perturb P by ~1e-17 of its norm,
    # which swamps P near the obstruction points where it is tiny.
    cs = _array(shift, dtype)[()]
    sc = _array(scale, dtype)[()]
    wl = (_array(w, dtype)[()] - cs) / sc
    params = [
        (
            [_array(m, dtype)[()] / (sc * sc) for m in plane.masses],
            [(_array(y, dtype)[()] - cs) / sc for y in plane.positions],
        )
        for plane in ensemble.planes
    ]

    xb = BiPoly.xbar(dtype)
    one = BiPoly.const(1.0, dtype)
    A: list[tuple[BiPoly, ...]] = []
    D: list[BiPoly] = []
    QD: list[BiPoly] = []
    Dc: list[BiPoly] = []  # conjugates of D, reused
    QDc: list[BiPoly] = []
    for j, (masses, positions) in enumerate(params, start=1):
        if j == 1:
            Cj = one
            factors = tuple(xb - np.conj(y) for y in positions)
        else:
            Cj = product(Dc)
            # sum_i beta_ij * conj(QD_i) * prod_{k != i} conj(D_k)
            coupling = None
            for i in range(1, j):
                others = product(Dc[k - 1] for k in range(1, j) if k != i)
                term = (QDc[i - 1] * others).scale(local.beta(i, j))
                coupling = term if coupling is None else coupling + term
            factors = tuple(
                (xb - np.conj(y)) * Cj + coupling for y in positions
            )
        Dj = product(factors)
        if Dj.is_zero():
            raise DegenerateEnsembleError(f"D_{j} vanished identically")
        qd = None
        for ell, m in enumerate(masses):
            rest = product(f for k, f in enumerate(factors) if k != ell)
            term = (rest * Cj).scale(-m)
            qd = term if qd is None else qd + term
        A.append(factors)
        D.append(Dj)
        QD.append(qd)
        Dc.append(Dj.conjugate())
        QDc.append(qd.conjugate())

    x = BiPoly.x(dtype)
    Dall = product(D)
    Phat = (x - wl) * Dall
    P = Phat
    for ell in range(len(D)):
        others = product(D[i] for i in range(len(D)) if i != ell)
        P = P + QD[ell] * others
    if P.is_zero():
        raise DegenerateEnsembleError("lensing polynomial vanished identically")
    return ClearedSystem(
        A=tuple(A),
        D=tuple(D),
        QD=tuple(QD),
        P=P,
        Pbar=P.conjugate(),
        Phat=Phat,
        ensemble=local,
        source=complex(wl),
        shift=shift,
        scale=scale,
        physical=ensemble,
        physical_source=w,
    )


@dataclass(frozen=True)
class Prop1Report:
    degree_P: DegreeVector
    degree_Phat: DegreeVector
    expected: DegreeVector
    leading_row: float  # max |coeff| in row E, relative to norm
    leading_col: float  # max |coeff| in column O, relative to norm
    qd_below_d: tuple[bool, ...]

    @property
    def ok(self) -> bool:
        return self.degree_P == self.degree_Phat == self.expected


def verify_prop1(
    system: ClearedSystem,
    g: Sequence[int] | None = None,
    leading_tol: float = 1e-9,
) -> Prop1Report:
    """Check deg(P) == deg(Phat) == (E, O), raising DegreeMismatchError."""
    g = check_g(g if g is not None else system.ensemble.g)
    expected = DegreeVector(*ek_ok(g))
    dP = system.P.degree(PRUNE_TOL)
    dH = system.Phat.degree(PRUNE_TOL)
    if dH != expected:
        raise DegreeMismatchError(dH, expected, "Phat")
    if dP != expected:
        raise DegreeMismatchError(dP, expected, "P")
    c = np.abs(system.P.coeffs)
    top = c.max()
    row = float(c[dP.s, :].max() / top)
    col = float(c[:, dP.t].max() / top)
    if row <= leading_tol or col <= leading_tol:
        raise DegreeMismatchError(
            dP, expected, f"P (leading terms {row:.1e}, {col:.1e} below tolerance)"
        )
    qd_ok = tuple(
        qd.degree_or_sentinel() <= d.degree() for qd, d in zip(system.QD, system.D)
    )
    return Prop1Report(dP, dH, expected, row, col, qd_ok)


class LedgerRow(NamedTuple):
    plane: int
    g: int
    increment: DegreeVector
    total: DegreeVector
    # plane-index subsets whose g-products land in the x / xbar columns
    x_terms: tuple[tuple[int, ...], ...]
    xbar_terms: tuple[tuple[int, ...], ...]


def degree_ledger(g: Sequence[int]) -> list[LedgerRow]:
    """Plane-by-plane growth of deg(P) with unit masses and couplings.

    Row 1 is the base ``(1, g_1)``; each later plane adds
    ``(g_K * deg_xbar, g_K * deg_x)`` of the running total.
    """
    g = check_g(g)
    left: list[tuple[int, ...]] = [()]
    right: list[tuple[int, ...]] = [(1,)]
    total = DegreeVector(1, g[0])
    rows = [LedgerRow(1, g[0], total, total, ((),), ((1,),))]
    for k, gk in enumerate(g[1:], start=2):
        inc = DegreeVector(gk * total.t, gk * total.s)
        new_left = [r + (k,) for r in right]
        new_right = [l_ + (k,) for l_ in left]
        left += new_left
        right += new_right
        total = total + inc
        rows.append(LedgerRow(k, gk, inc, total, tuple(new_left), tuple(new_right)))
    return rows
