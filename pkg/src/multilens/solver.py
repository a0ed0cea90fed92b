"""Finding every lensed image of a source.

Two independent routes are provided:

* ``find_images_resultant`` clears denominators, eliminates ``xbar`` from
  ``P`` and its conjugate and keeps the roots of the univariate resultant
  that actually solve the lensing equation;
* ``find_images_newton`` runs damped Newton on ``eta_w`` from a dense grid
  plus rings of seeds around every obstruction point.

``count_images`` runs both where the resultant is affordable and insists
they agree.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import mpmath
import numpy as np
from scipy.spatial import cKDTree

from .bounds import ek_ok, image_bound
from .construct import build_cleared_system
from .ensemble import Ensemble, as_complex, forward, partial_map
from .errors import (
    BoundViolationError,
    CapExceededError,
    IllConditionedError,
    MethodDisagreementError,
    NonGenericError,
    VanishingResultantError,
)
from .resultant import SYLVESTER_CAP, resultant_eliminate

log = logging.getLogger(__name__)

MAX_ELIMINATED_DEGREE = 200
# working precisions (bits) tried by the resultant path
PRECISION_LADDER = (128, 256, 512, 1024)


@dataclass(frozen=True)
class Tolerances:
    accept_rtol: float = 1e-8  # accept_tol = accept_rtol * (1 + |w|)
    cluster_tol: float = 1e-6
    degenerate_tol: float = 1e-8
    caustic_margin: float = 1e-3
    trace_tol: float = 1e-10

    def accept_tol(self, w) -> float:
        return self.accept_rtol * (1.0 + abs(w))


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class GridSpec:
    """Square grid of ``n x n`` nodes over ``center +- radius``."""

    n: int = 201
    radius: float | None = None
    center: complex = 0j
    ring_angles: int = 16
    ring_radii: tuple[float, ...] = (0.3, 0.1, 0.03, 0.01, 1e-3)

    def resolved(self, ensemble: Ensemble, w=0j) -> "GridSpec":
        if self.radius is not None:
            return self
        return replace(self, radius=covering_radius(ensemble, w))

    def nodes(self) -> np.ndarray:
        if self.radius is None:
            raise ValueError("unresolved grid radius")
        t = np.linspace(-self.radius, self.radius, self.n)
        return self.center + t[None, :] + 1j * t[:, None]


def covering_radius(ensemble: Ensemble, w=0j) -> float:
    """Radius of a disk about the origin containing every mass, ``w`` and
    every image: twice ``max|y| + |w| + sum m + 1``."""
    ymax = float(np.max(np.abs(ensemble.all_positions())))
    return 2.0 * (ymax + abs(w) + ensemble.total_mass() + 1.0)


@dataclass(frozen=True)
class ImageSolution:
    position: complex
    residual: float
    jac_det: float
    method: str  # "resultant", "newton" or "both"

    @property
    def parity(self) -> int:
        return 1 if self.jac_det > 0 else -1

    def to_dict(self) -> dict:
        return {
            "position": [self.position.real, self.position.imag],
            "residual": self.residual,
            "jac_det": self.jac_det,
            "parity": self.parity,
            "method": self.method,
        }


# --- Newton machinery --------------------------------------------------------

Residual = Callable[[np.ndarray], tuple]


def damped_newton(fun: Residual, seeds, stop_tol: float, max_iter: int = 60,
                  max_halvings: int = 12):
    """Vectorised damped Newton for ``f(x) = 0`` with ``f`` non-holomorphic.

    ``fun(x)`` returns ``(f, df/dx, df/dxbar, invalid_mask)``.  The step
    solves the real 2x2 linearisation; it is halved until ``|f|`` decreases.
    Seeds that stall keep their best iterate.  Returns ``(x, |f|)``.
    """
    x = np.asarray(seeds, dtype=complex).ravel().copy()
    f, a, b, bad = fun(x)
    r = np.abs(f)
    r[bad | ~np.isfinite(r)] = np.inf
    live = np.isfinite(r) & (r > stop_tol)
    for _ in range(max_iter):
        idx = np.nonzero(live)[0]
        if idx.size == 0:
            break
        fi, ai, bi = f[idx], a[idx], b[idx]
        det = np.abs(ai) ** 2 - np.abs(bi) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            step = (-fi * np.conj(ai) + bi * np.conj(fi)) / det
        t = np.ones(idx.size)
        pending = np.isfinite(step)
        live[idx[~pending]] = False
        for _h in range(max_halvings):
            if not pending.any():
                break
            sub = idx[pending]
            xn = x[sub] + t[pending] * step[pending]
            fn, an, bn, badn = fun(xn)
            rn = np.abs(fn)
            ok = ~badn & np.isfinite(rn) & (rn < r[sub])
            good = sub[ok]
            x[good] = xn[ok]
            f[good], a[good], b[good], r[good] = fn[ok], an[ok], bn[ok], rn[ok]
            pos = np.nonzero(pending)[0]
            pending[pos[ok]] = False
            t[pending] *= 0.5
        live[idx[pending]] = False  # no decrease found: stalled
        live &= r > stop_tol
    return x, r


def cluster(points, tol: float, scores=None) -> np.ndarray:
    """Indices of representatives, one per ``tol``-cluster (best score first)."""
    points = np.asarray(points, dtype=complex)
    if points.size == 0:
        return np.zeros(0, dtype=int)
    order = np.argsort(scores) if scores is not None else np.arange(points.size)
    tree = cKDTree(np.column_stack([points.real, points.imag]))
    taken = np.zeros(points.size, dtype=bool)
    reps = []
    for i in order:
        if taken[i]:
            continue
        reps.append(i)
        taken[tree.query_ball_point([points[i].real, points[i].imag], tol)] = True
    return np.array(reps, dtype=int)


def _rings(centers, angles: int, radii) -> np.ndarray:
    centers = np.asarray(centers, dtype=complex)
    if centers.size == 0:
        return np.zeros(0, dtype=complex)
    phase = np.exp(2j * np.pi * (np.arange(angles) + 0.5) / angles)
    offs = np.concatenate([r * phase for r in radii])
    return (centers[:, None] + offs[None, :]).ravel()


def _obstructions(ensemble: Ensemble, grid: GridSpec | None = None):
    """Obstruction points and the 1-based plane whose mass each one hits."""
    grid = (grid or GridSpec(n=81)).resolved(ensemble)
    pts = list(ensemble.planes[0].positions)
    planes = [1] * len(pts)
    for j in range(2, ensemble.K + 1):
        base = np.concatenate([grid.nodes().ravel(),
                               _rings(pts, grid.ring_angles, grid.ring_radii)])
        found = []
        for y in ensemble.planes[j - 1].positions:
            def fun(x, y=y, j=j):
                xj, p, q, bad = partial_map(ensemble, j, x)
                return xj - y, p, q, bad | ~np.isfinite(xj)

            tol = 1e-13 * (1 + abs(y))
            xs, r = damped_newton(fun, base, tol)
            ok = r < 1e-9 * (1 + abs(y))
            xs, r = xs[ok], r[ok]
            found.extend(xs[cluster(xs, 1e-7, r)])
        pts.extend(found)
        planes.extend([j] * len(found))
    return np.array(pts, dtype=complex), np.array(planes, dtype=int)


def obstruction_points(ensemble: Ensemble, grid: GridSpec | None = None) -> np.ndarray:
    """First-plane positions whose rays hit some mass.

    Plane 1 contributes its own mass positions; for later planes the
    equation ``x_j(x) = y_{j,l}`` is solved by multi-start Newton seeded on a
    coarse grid and around the obstruction points already found.
    """
    return _obstructions(ensemble, grid)[0]


def _pulled_back_rings(ensemble: Ensemble, pts, planes, angles, radii) -> np.ndarray:
    """Rings drawn in plane-j coordinates around each later-plane mass,
    mapped to plane 1 through the linearisation at the obstruction point.

    The map x -> x_j can stretch strongly, so plane-1 rings of fixed radius
    may miss images whose plane-j impact sits close to a mass.
    """
    offs = _rings([0j], angles, radii)
    out = []
    for j in range(2, ensemble.K + 1):
        xs = pts[planes == j]
        if xs.size == 0:
            continue
        _, p, q, _ = partial_map(ensemble, j, xs)
        det = np.abs(p) ** 2 - np.abs(q) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = (offs[None, :] * np.conj(p)[:, None]
                  - q[:, None] * np.conj(offs)[None, :]) / det[:, None]
        seeds = (xs[:, None] + dx).ravel()
        out.append(seeds[np.isfinite(seeds)])
    return np.concatenate(out) if out else np.zeros(0, dtype=complex)


def _eta_fun(ensemble: Ensemble, w):
    def fun(x):
        f, a, b, bad = forward(ensemble, x, w)
        return f, a, b, bad | ~np.isfinite(f)

    return fun


def _finalize(ensemble, w, xs, method, tol: Tolerances, polish=True):
    """Polish, verify and deduplicate candidate images."""
    xs = np.asarray(xs, dtype=complex)
    if xs.size == 0:
        return []
    fun = _eta_fun(ensemble, w)
    acc = tol.accept_tol(w)
    if polish:
        xs, r = damped_newton(fun, xs, 1e-4 * acc, max_iter=8)
    else:
        f, _, _, bad = fun(xs)
        r = np.where(bad, np.inf, np.abs(f))
    ok = r < acc
    xs, r = xs[ok], r[ok]
    reps = cluster(xs, tol.cluster_tol, r)
    xs, r = xs[reps], r[reps]
    _, a, b, _ = forward(ensemble, xs, w)
    det = np.abs(a) ** 2 - np.abs(b) ** 2
    out = [ImageSolution(complex(x), float(rr), float(d), method)
           for x, rr, d in zip(xs, r, det)]
    return sorted(out, key=lambda s: (s.position.real, s.position.imag))


def find_images_newton(ensemble: Ensemble, w, grid: GridSpec | None = None,
                       tol: Tolerances = DEFAULT_TOL, max_iter: int = 60):
    w = as_complex(w)
    grid = (grid or GridSpec()).resolved(ensemble, w)
    poles, planes = _obstructions(ensemble)
    seeds = np.concatenate([
        grid.nodes().ravel(),
        _rings(poles, grid.ring_angles, grid.ring_radii),
        _pulled_back_rings(ensemble, poles, planes, grid.ring_angles, grid.ring_radii),
        [w],
    ])
    acc = tol.accept_tol(w)
    xs, r = damped_newton(_eta_fun(ensemble, w), seeds, 1e-4 * acc, max_iter)
    keep = r < acc
    xs, r = xs[keep], r[keep]
    reps = cluster(xs, tol.cluster_tol, r)
    return _finalize(ensemble, w, xs[reps], "newton", tol)


def resultant_feasible(g, cap: int = SYLVESTER_CAP,
                       max_degree: int = MAX_ELIMINATED_DEGREE) -> bool:
    E, O = ek_ok(g)
    return E + O <= cap and E * E + O * O <= max_degree


@dataclass(frozen=True, eq=False)
class ResultantImages:
    images: list
    roots: np.ndarray  # all roots of the eliminated polynomial, physical coords
    degree: int
    bound: int


def find_images_resultant(ensemble: Ensemble, w, tol: Tolerances = DEFAULT_TOL,
                          cap: int = SYLVESTER_CAP, details: bool = False,
                          ladder=PRECISION_LADDER):
    """Images from the roots of Res_xbar(P, conj P).

    P and the resultant are computed in ball arithmetic, doubling the
    precision until two consecutive levels accept the same image set and
    leave the same number of roots uncertified by the coefficient balls.
    The resultant carries large root clusters at the obstruction points;
    genuine roots near them are perturbed by roughly ``eps**(1/k)`` and need
    many bits before they can be resolved.  Roots within the
    obstruction radius of a pole are dropped by the residual test.  Each
    surviving root is refined by at most eight Newton steps on ``eta_w`` and
    must not move by more than ``1e-4 * (1 + |x|)`` while doing so.
    """
    w = as_complex(w)
    fun = _eta_fun(ensemble, w)
    prev = None
    failure = None
    for prec in ladder:
        with mpmath.workprec(prec):
            system = build_cleared_system(ensemble, w, dtype=object)
        try:
            elim = resultant_eliminate(system.P, system.Pbar, cap=cap, prec=prec)
        except VanishingResultantError as exc:
            if prec == ladder[-1]:
                raise NonGenericError(
                    f"P and its conjugate share a factor: {exc}"
                ) from exc
            failure = exc
            continue
        try:
            local = elim.roots()
        except IllConditionedError as exc:
            failure = exc
            continue
        roots = system.to_physical(local)
        uncertain = int(np.sum(elim.root_errors(local) * system.scale > tol.cluster_tol))
        polished, _ = damped_newton(fun, roots, 1e-4 * tol.accept_tol(w), max_iter=8)
        moved = np.abs(polished - roots) <= 1e-4 * (1 + np.abs(roots))
        images = _finalize(ensemble, w, polished[moved], "resultant", tol, polish=False)
        current = (images, roots, elim, uncertain)
        same = prev is not None and len(prev[0]) == len(images) and hausdorff(
            [im.position for im in prev[0]], [im.position for im in images]
        ) < tol.cluster_tol
        if same and prev[3] == uncertain:
            break
        if same and prec == ladder[-1]:
            # images agree but clusters are still shrinking: keep the answer
            break
        prev = current
    else:
        raise IllConditionedError(
            f"resultant images did not stabilise up to {ladder[-1]} bits"
            + (f" ({failure})" if failure else "")
        )
    bad = [im for im in images if abs(im.jac_det) < tol.degenerate_tol]
    if bad:
        raise NonGenericError(
            "degenerate image found",
            {"min_abs_jac_det": min(abs(im.jac_det) for im in bad)},
        )
    if details:
        return ResultantImages(images, roots, elim.degree, elim.bound)
    return images


def hausdorff(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return math.inf
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


@dataclass
class CountReport:
    count: int
    bound: int
    images: list
    methods: dict = field(default_factory=dict)
    agreement: float | None = None  # Hausdorff distance between methods
    margins: dict = field(default_factory=dict)

    @property
    def slack(self) -> int:
        return self.bound - self.count

    @property
    def parities(self) -> list[int]:
        return [im.parity for im in self.images]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "bound": self.bound,
            "slack": self.slack,
            "methods": dict(self.methods),
            "agreement": self.agreement,
            "margins": dict(self.margins),
            "images": [im.to_dict() for im in self.images],
        }


def count_images(ensemble: Ensemble, w, grid: GridSpec | None = None,
                 tol: Tolerances = DEFAULT_TOL, use_resultant: bool | None = None,
                 check_generic: bool = True, caustics=None) -> CountReport:
    """Count images with every affordable method and check the bound.

    Raises ``NonGenericError`` (source on or near a caustic, or a
    degenerate image), ``MethodDisagreementError`` and
    ``BoundViolationError``.
    """
    from .caustics import genericity_check

    w = as_complex(w)
    g = ensemble.g
    bound = image_bound(g)
    grid = (grid or GridSpec()).resolved(ensemble, w)
    margins = {}
    if check_generic:
        gen = genericity_check(ensemble, w, caustics=caustics, tol=tol)
        margins.update(gen.margins)
        if not gen.passed:
            raise NonGenericError("source is not generic", gen.margins)

    newton = find_images_newton(ensemble, w, grid, tol)
    methods = {"newton": len(newton)}
    if use_resultant is None:
        use_resultant = resultant_feasible(g)
    res = None
    if use_resultant:
        try:
            res = find_images_resultant(ensemble, w, tol)
            methods["resultant"] = len(res)
        except (IllConditionedError, CapExceededError) as exc:
            methods["resultant"] = f"skipped: {exc}"
    else:
        methods["resultant"] = "skipped: beyond routing limits"

    images = newton
    agreement = None
    if res is not None:
        agreement = hausdorff([i.position for i in newton], [i.position for i in res])
        report = CountReport(len(newton), bound, newton, methods, agreement, margins)
        if len(res) != len(newton) or agreement > tol.cluster_tol:
            raise MethodDisagreementError(
                f"newton found {len(newton)}, resultant {len(res)}, "
                f"Hausdorff distance {agreement:.2e}",
                report,
            )
        images = [replace(im, method="both") for im in newton]

    dets = [abs(im.jac_det) for im in images]
    margins["min_abs_jac_det"] = min(dets) if dets else math.inf
    if check_generic and dets and min(dets) <= tol.degenerate_tol:
        raise NonGenericError("degenerate image found", margins)
    report = CountReport(len(images), bound, images, methods, agreement, margins)
    if report.count > bound:
        raise BoundViolationError(
            f"{report.count} images exceed the bound {bound}", report
        )
    return report
