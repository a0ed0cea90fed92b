"""Critical curves, caustics and the genericity test for a source.

Critical curves are the zero set of ``det Jac eta``.  They are located with
marching squares on a grid, every crossing is refined by bisection along its
grid edge, and the curve is then densified until consecutive caustic samples
are closer than half the caustic margin, so that distances measured to the
caustic polyline are trustworthy at that margin.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import find_contours

from .ensemble import Ensemble, as_complex, forward, jacobian_det_exact
from .errors import EmptyResultError
from .solver import DEFAULT_TOL, GridSpec, Tolerances

log = logging.getLogger(__name__)

BISECTION_STEPS = 80
MAX_SAMPLES = 200_000


@dataclass(frozen=True)
class CausticSample:
    critical_point: complex
    caustic_point: complex
    contour: int = 0
    det: float = 0.0  # det Jac eta at the critical point

    def to_dict(self) -> dict:
        return {
            "contour": self.contour,
            "critical_point": [self.critical_point.real, self.critical_point.imag],
            "caustic_point": [self.caustic_point.real, self.caustic_point.imag],
            "det": self.det,
        }


def _det(ensemble: Ensemble, x) -> np.ndarray:
    d = jacobian_det_exact(ensemble, x)
    # obstruction points are poles of the deflection, where det -> -inf
    return np.where(np.isfinite(d), d, -np.inf)


def _bisect(ensemble: Ensemble, lo, hi, trace_tol: float):
    """Vectorised bisection of det between ``lo`` (det < 0) and ``hi``."""
    lo = np.array(lo, dtype=complex)
    hi = np.array(hi, dtype=complex)
    mid = 0.5 * (lo + hi)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        d = _det(ensemble, mid)
        neg = d < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(np.abs(d) < trace_tol):
            break
    return mid, _det(ensemble, mid)


def _grad(ensemble: Ensemble, x) -> np.ndarray:
    """Gradient of det as a complex number (d/dRe + i d/dIm)."""
    h = 1e-6 * (1 + np.abs(x))
    gx = (_det(ensemble, x + h) - _det(ensemble, x - h)) / (2 * h)
    gy = (_det(ensemble, x + 1j * h) - _det(ensemble, x - 1j * h)) / (2 * h)
    return gx + 1j * gy


def _project(ensemble: Ensemble, x, trace_tol: float, steps: int = 20):
    """Move points onto det = 0 along the gradient (Newton in one direction)."""
    x = np.array(x, dtype=complex)
    d = _det(ensemble, x)
    for _ in range(steps):
        todo = np.abs(d) >= trace_tol
        if not todo.any():
            break
        g = _grad(ensemble, x[todo])
        step = d[todo] * g / np.maximum(np.abs(g) ** 2, 1e-300)
        x[todo] = x[todo] - step
        d[todo] = _det(ensemble, x[todo])
    return x, d


def _edge_points(contour: np.ndarray, nodes: np.ndarray):
    """Grid-edge endpoints bracketing each marching-squares vertex."""
    r, c = contour[:, 0], contour[:, 1]
    n = nodes.shape[0]
    on_row = np.isclose(r, np.round(r))
    r0 = np.where(on_row, np.round(r), np.floor(r)).astype(int)
    c0 = np.where(on_row, np.floor(c), np.round(c)).astype(int)
    r1 = np.where(on_row, r0, r0 + 1)
    c1 = np.where(on_row, c0 + 1, c0)
    r0, r1 = np.clip(r0, 0, n - 1), np.clip(r1, 0, n - 1)
    c0, c1 = np.clip(c0, 0, n - 1), np.clip(c1, 0, n - 1)
    return nodes[r0, c0], nodes[r1, c1]


def _densify(ensemble, crit, caus, closed, max_segment, trace_tol):
    """Insert projected midpoints until caustic steps are <= max_segment."""
    for _ in range(30):
        if len(crit) < 2:
            break
        nxt_crit = np.roll(crit, -1) if closed else crit[1:]
        nxt_caus = np.roll(caus, -1) if closed else caus[1:]
        base_crit = crit if closed else crit[:-1]
        base_caus = caus if closed else caus[:-1]
        long = np.abs(nxt_caus - base_caus) > max_segment
        # a step in the first plane this small cannot be split usefully
        long &= np.abs(nxt_crit - base_crit) > 1e-12 * (1 + np.abs(base_crit))
        if not long.any() or len(crit) > MAX_SAMPLES:
            break
        idx = np.nonzero(long)[0]
        mids, _ = _project(ensemble, 0.5 * (base_crit[idx] + nxt_crit[idx]), trace_tol)
        mid_caus = forward(ensemble, mids, derivatives=False)[0]
        ok = np.isfinite(mid_caus)
        idx, mids, mid_caus = idx[ok], mids[ok], mid_caus[ok]
        if idx.size == 0:
            break
        crit = np.insert(crit, idx + 1, mids)
        caus = np.insert(caus, idx + 1, mid_caus)
    return crit, caus


def trace_critical_and_caustics(
    ensemble: Ensemble,
    grid: GridSpec | None = None,
    tol: Tolerances = DEFAULT_TOL,
    max_segment: float | None = None,
) -> list[CausticSample]:
    """Sample every critical curve crossing the grid, with its caustic.

    Samples are ordered along each contour; ``contour`` numbers the curves.
    Raises ``EmptyResultError`` when det has no sign change on the grid.
    """
    grid = (grid or GridSpec()).resolved(ensemble)
    if max_segment is None:
        max_segment = 0.5 * tol.caustic_margin
    nodes = grid.nodes()
    det = _det(ensemble, nodes)
    # arctan keeps the zero set and tames the poles for interpolation
    field_ = np.arctan(det)
    contours = find_contours(field_, 0.0)
    samples: list[CausticSample] = []
    for k, cont in enumerate(contours):
        a, b = _edge_points(cont, nodes)
        da, db = _det(ensemble, a), _det(ensemble, b)
        lo = np.where(da < 0, a, b)
        hi = np.where(da < 0, b, a)
        valid = (np.minimum(da, db) < 0) & (np.maximum(da, db) >= 0)
        if not valid.any():
            continue
        crit, d = _bisect(ensemble, lo[valid], hi[valid], tol.trace_tol)
        good = np.abs(d) < tol.trace_tol
        if not good.all():
            log.debug("contour %d: %d crossings missed trace_tol", k, (~good).sum())
        crit = crit[good]
        if crit.size == 0:
            continue
        closed = bool(np.allclose(cont[0], cont[-1]))
        if closed and crit.size > 1 and crit[0] == crit[-1]:
            crit = crit[:-1]
        caus = forward(ensemble, crit, derivatives=False)[0]
        keep = np.isfinite(caus)
        crit, caus = _densify(ensemble, crit[keep], caus[keep], closed,
                              max_segment, tol.trace_tol)
        dets = _det(ensemble, crit)
        idx = len({s.contour for s in samples})
        samples.extend(
            CausticSample(complex(c), complex(w), idx, float(dd))
            for c, w, dd in zip(crit, caus, dets)
            if abs(dd) < tol.trace_tol
        )
    if not samples:
        raise EmptyResultError(
            "no critical curve crosses the grid (det Jac has no sign change)"
        )
    return samples


def caustic_polylines(samples: list[CausticSample]) -> list[np.ndarray]:
    """Caustic points grouped by contour, in tracing order."""
    groups: dict[int, list[complex]] = {}
    for s in samples:
        groups.setdefault(s.contour, []).append(s.caustic_point)
    return [np.array(v, dtype=complex) for _, v in sorted(groups.items())]


def distance_to_caustic(w, samples: list[CausticSample]) -> float:
    """Distance from ``w`` to the caustic, polylines joined in order."""
    w = as_complex(w)
    best = math.inf
    for pts in caustic_polylines(samples):
        if pts.size == 1:
            best = min(best, abs(pts[0] - w))
            continue
        # closed contours: include the segment back to the start
        p = pts
        q = np.roll(pts, -1)
        seg = q - p
        L2 = np.abs(seg) ** 2
        t = np.where(L2 > 0, ((w - p) * np.conj(seg)).real / np.where(L2 > 0, L2, 1), 0)
        t = np.clip(t, 0.0, 1.0)
        best = min(best, float(np.min(np.abs(p + t * seg - w))))
    return best


@dataclass
class GenericityReport:
    passed: bool
    margins: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "margins": dict(self.margins)}


def genericity_check(
    ensemble: Ensemble,
    w,
    caustics: list[CausticSample] | None = None,
    images=None,
    tol: Tolerances = DEFAULT_TOL,
    grid: GridSpec | None = None,
) -> GenericityReport:
    """Pass iff ``w`` keeps ``caustic_margin`` from the sampled caustic and
    every given image has ``|det Jac| > degenerate_tol``.  Never raises."""
    w = as_complex(w)
    margins: dict = {"caustic_margin": tol.caustic_margin}
    if caustics is None:
        try:
            caustics = trace_critical_and_caustics(ensemble, grid, tol)
        except EmptyResultError:
            caustics = []
    dist = distance_to_caustic(w, caustics) if caustics else math.inf
    margins["caustic_distance"] = dist
    passed = dist > tol.caustic_margin
    if images is not None:
        dets = [abs(im.jac_det) for im in images]
        m = min(dets) if dets else math.inf
        margins["min_abs_jac_det"] = m
        passed = passed and m > tol.degenerate_tol
    return GenericityReport(bool(passed), margins)
