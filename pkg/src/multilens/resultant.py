"""Elimination of ``xbar`` from two bivariate polynomials.

The resultant is never expanded symbolically.  It is sampled on a circle
(one numeric Sylvester determinant per sample) and its coefficients are
recovered with an FFT.

Two arithmetics are offered.  Double precision is fast and fine for
well-separated roots.  Lensing polynomials of several planes have large
root clusters around the obstruction points, so the image finder uses the
ball-arithmetic variant (python-flint), which keeps a working precision of
``prec`` bits through the determinants, the transform and root isolation.
"""
from __future__ import annotations

from dataclasses import dataclass

import flint
import numpy as np
from numpy.polynomial import Polynomial

from .bipoly import PRUNE_TOL, BiPoly, to_mpc
from .errors import (
    CapExceededError,
    IllConditionedError,
    VanishingResultantError,
    ZeroPolynomialError,
)

SYLVESTER_CAP = 64
DYNAMIC_RANGE_CAP = 1e12
# absolute accuracy requested from ball root refinement
ROOT_TOL = 1e-17
# candidate sampling radii, tried in order; the best balanced one wins
RADII = (1.0, 0.5, 2.0, 0.25, 4.0)


def resultant_bound(p: BiPoly, q: BiPoly) -> int:
    """deg_x(p) deg_xbar(q) + deg_xbar(p) deg_x(q)."""
    dp = p.degree()
    dq = q.degree()
    return dp.s * dq.t + dp.t * dq.s


@dataclass(frozen=True, eq=False)
class SylvesterMatrix:
    """Sylvester matrix of ``p`` and ``q`` viewed as polynomials in xbar.

    ``entries[i, j]`` is a univariate polynomial in x, stored as an
    ascending coefficient vector along the last axis.
    """

    entries: np.ndarray  # (dim, dim, deg_x + 1)

    @classmethod
    def build(cls, p: BiPoly, q: BiPoly) -> "SylvesterMatrix":
        P = _trimmed(p)
        Q = _trimmed(q)
        n = P.shape[1] - 1
        m = Q.shape[1] - 1
        dim = n + m
        if dim == 0:
            raise ValueError("both polynomials are free of xbar")
        dx = max(P.shape[0], Q.shape[0])
        ent = np.zeros((dim, dim, dx), dtype=complex)
        for i in range(m):
            for k in range(n + 1):
                ent[i, i + k, : P.shape[0]] = P[:, n - k]
        for i in range(n):
            for k in range(m + 1):
                ent[m + i, i + k, : Q.shape[0]] = Q[:, m - k]
        return cls(ent)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def at(self, x) -> np.ndarray:
        """Numeric matrices at the points ``x`` (shape ``x.shape + (dim, dim)``)."""
        x = np.asarray(x, dtype=complex)
        powers = x[..., None] ** np.arange(self.entries.shape[2])
        return np.einsum("ijk,...k->...ij", self.entries, powers)


def _trimmed(p: BiPoly) -> np.ndarray:
    d = p.degree()
    return np.asarray(p.coeffs[: d.s + 1, : d.t + 1], dtype=complex)


@dataclass(frozen=True, eq=False)
class Elimination:
    """Resultant with respect to xbar, as a univariate polynomial in x."""

    poly: Polynomial
    bound: int
    radius: float
    dynamic_range: float
    sylvester_dim: int
    # ball-arithmetic coefficients (ascending, in x) when computed with prec
    exact: flint.acb_poly | None = None
    prec: int | None = None
    coef_error: np.ndarray | None = None  # bound on |c_k - mid(c_k)|

    @property
    def degree(self) -> int:
        return self.poly.degree()

    def __call__(self, x):
        return self.poly(x)

    def norm(self) -> float:
        return float(np.abs(self.poly.coef).max())

    def roots(self) -> np.ndarray:
        """All roots.  Raises ``IllConditionedError`` if ball arithmetic
        cannot isolate them at the working precision."""
        if self.exact is None:
            return self.poly.roots()
        with _precision(self.prec):
            # isolation alone leaves wide balls; ask for refinement first
            try:
                rts = self.exact.roots(tol=ROOT_TOL, maxprec=2 * self.prec)
            except ValueError:
                try:
                    rts = self.exact.roots(maxprec=2 * self.prec)
                except ValueError as exc:
                    raise IllConditionedError(
                        f"root isolation failed at {self.prec} bits"
                    ) from exc
            return np.array([complex(z.mid()) for z in rts], dtype=complex)

    def root_errors(self, roots) -> np.ndarray:
        """First-order uncertainty of each root from the coefficient balls.

        ``sum_k err_k |z|^k / |R'(z)|``: small for simple, well separated
        roots; large (or infinite) inside clusters, where more precision is
        needed before a root can be trusted.
        """
        roots = np.asarray(roots, dtype=complex)
        if self.exact is None or self.coef_error is None:
            return np.zeros(roots.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            powers = np.abs(roots)[:, None] ** np.arange(self.coef_error.size)
            spread = powers @ self.coef_error
        with _precision(self.prec):
            deriv = self.exact.derivative()
            slope = np.array([float(abs(deriv(flint.acb(z.real, z.imag)))) for z in roots])
        with np.errstate(divide="ignore", invalid="ignore"):
            out = spread / slope
        return np.where(np.isfinite(out), out, np.inf)


def resultant_eliminate(
    p: BiPoly,
    q: BiPoly,
    cap: int = SYLVESTER_CAP,
    radii=RADII,
    prune_tol: float = PRUNE_TOL,
    prec: int | None = None,
) -> Elimination:
    """Res_xbar(p, q) by evaluation and interpolation.

    With ``prec=None`` the work is done in double precision and the sampling
    radius is picked from ``radii`` by determinant balance.  Otherwise ball
    arithmetic at ``prec`` bits is used on the unit circle.
    """
    if p.is_zero() or q.is_zero():
        raise ZeroPolynomialError("cannot eliminate with a zero polynomial")
    if prec is not None:
        return _eliminate_ball(p, q, cap, prec)
    syl = SylvesterMatrix.build(p, q)
    if syl.dim > cap:
        raise CapExceededError(f"Sylvester dimension {syl.dim} exceeds cap {cap}")
    bound = resultant_bound(p, q)
    N = bound + 1
    roots_of_unity = np.exp(2j * np.pi * np.arange(N) / N)

    best = None
    for rho in radii:
        mats = syl.at(rho * roots_of_unity)
        dets = np.linalg.det(mats)
        # Hadamard bound: scale of the determinant if rows were orthogonal
        hadamard = np.prod(np.linalg.norm(mats, axis=-1), axis=-1)
        mags = np.abs(dets)
        rel = mags.max() / hadamard.max()
        lo = mags.min()
        spread = np.inf if lo == 0 else mags.max() / lo
        if best is None or spread < best[1]:
            best = (rho, spread, dets, rel)
        if spread < 1e4:
            break
    rho, spread, dets, rel = best
    if rel < 1e-12:
        raise VanishingResultantError(
            f"resultant vanishes identically (|det|/hadamard = {rel:.1e})"
        )
    if spread > DYNAMIC_RANGE_CAP:
        raise IllConditionedError(
            f"determinant samples span {spread:.1e} (> {DYNAMIC_RANGE_CAP:.0e})"
        )
    scaled = np.fft.fft(dets) / N  # coefficients of R(rho * z)
    keep = np.abs(scaled) > prune_tol * np.abs(scaled).max()
    top = int(np.nonzero(keep)[0][-1])
    poly = Polynomial(scaled[: top + 1], domain=[-rho, rho], window=[-1, 1])
    return Elimination(poly, bound, rho, float(spread), syl.dim)


class _precision:
    """Temporarily set the flint working precision (bits)."""

    def __init__(self, bits: int):
        self.bits = int(bits)

    def __enter__(self):
        self.saved = flint.ctx.prec
        flint.ctx.prec = self.bits

    def __exit__(self, *exc):
        flint.ctx.prec = self.saved


def _acb(z) -> flint.acb:
    z = to_mpc(z)
    # mpmath -> arb through exact (mantissa, exponent) pairs
    return flint.acb(flint.arb(z.real), flint.arb(z.imag))


def _columns(p: BiPoly) -> list[flint.acb_poly]:
    """x-polynomials multiplying xbar**0, xbar**1, ... (trimmed)."""
    d = p.degree()
    c = p.coeffs[: d.s + 1, : d.t + 1]
    return [flint.acb_poly([_acb(v) for v in c[:, b]]) for b in range(d.t + 1)]


def _eliminate_ball(p: BiPoly, q: BiPoly, cap: int, prec: int) -> Elimination:
    with _precision(prec):
        pc = _columns(p)
        qc = _columns(q)
        n = len(pc) - 1
        m = len(qc) - 1
        dim = n + m
        if dim == 0:
            raise ValueError("both polynomials are free of xbar")
        if dim > cap:
            raise CapExceededError(f"Sylvester dimension {dim} exceeds cap {cap}")
        bound = resultant_bound(p, q)
        N = bound + 1
        zero = flint.acb(0)
        dets = []
        for k in range(N):
            x = flint.acb.exp_pi_i(flint.acb(2 * k) / N)
            pv = [c(x) for c in pc]
            qv = [c(x) for c in qc]
            rows = []
            for i in range(m):
                rows.append([zero] * i + [pv[n - j] for j in range(n + 1)] + [zero] * (m - 1 - i))
            for i in range(n):
                rows.append([zero] * i + [qv[m - j] for j in range(m + 1)] + [zero] * (n - 1 - i))
            dets.append(flint.acb_mat(rows).det())
        # balls are rigorous: one sample that excludes zero proves R != 0
        if all(d.contains(0) for d in dets):
            raise VanishingResultantError(
                f"resultant is indistinguishable from zero at {prec} bits"
            )
        # inverse DFT, exact at this precision: c_j = (1/N) sum_k d_k w^-jk
        coef = []
        for j in range(N):
            acc = zero
            for k, d in enumerate(dets):
                acc += d * flint.acb.exp_pi_i(flint.acb(-2 * ((j * k) % N)) / N)
            coef.append(acc / N)
        mids = [c.mid() for c in coef]
        top = max(float(abs(c)) for c in mids)
        floor = top * 2.0 ** (-prec + 32)
        while len(mids) > 1 and float(abs(mids[-1])) <= floor:
            mids.pop()
        exact = flint.acb_poly(mids)
        approx = np.array([complex(c) for c in mids], dtype=complex)
        # what the midpoint polynomial may be off by, per power of x;
        # trimmed terms count in full
        err = [float(c.rad()) for c in coef]
        for k in range(len(mids), N):
            err[k] += float(abs(coef[k].mid()))
    return Elimination(Polynomial(approx), bound, 1.0, 1.0, dim, exact, prec,
                       np.array(err))
