"""Multiplane point-mass ensembles and the lensing map.

Points in every plane are plain Python ``complex`` numbers.  The lensing map
sends a first-plane position ``x`` to the source plane::

    x_1 = x
    x_i = x - sum_{j<i} beta[j, i] * alpha_j(x_j)
    eta(x) = x - sum_k alpha_k(x_k)
    alpha_i(z) = sum_l m[i, l] / (conj(z) - conj(y[i, l]))
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ObstructionError, StepError, UnsupportedError

#: relative obstruction radius: |x_i - y| < OBSTRUCTION_RTOL * (1 + |y|)
OBSTRUCTION_RTOL = 1e-10


def as_complex(value) -> complex:
    """Coerce a complex number or an ``(re, im)`` pair, rejecting NaN/Inf."""
    if isinstance(value, (tuple, list, np.ndarray)) and len(value) == 2:
        z = complex(float(value[0]), float(value[1]))
    else:
        z = complex(value)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"non-finite point {value!r}")
    return z


@dataclass(frozen=True)
class Plane:
    masses: tuple[float, ...]
    positions: tuple[complex, ...]

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        positions = tuple(as_complex(y) for y in self.positions)
        if len(masses) == 0:
            raise ValueError("a plane needs at least one mass")
        if len(masses) != len(positions):
            raise ValueError("masses and positions differ in length")
        for m in masses:
            if not (math.isfinite(m) and m > 0):
                raise ValueError(f"masses must be finite and positive, got {m}")
        if len(set(positions)) != len(positions):
            raise ValueError("positions within a plane must be distinct")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "positions", positions)

    @property
    def g(self) -> int:
        return len(self.masses)

    @property
    def m(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=complex)


@dataclass(frozen=True)
class Ensemble:
    """K lens planes plus the coupling table.

    ``betas[i - 2]`` holds ``(beta_{1,i}, ..., beta_{i-1,i})`` for plane
    ``i = 2..K`` (1-based plane numbers), so row lengths are 1, 2, ..., K-1.
    """

    planes: tuple[Plane, ...]
    betas: tuple[tuple[float, ...], ...] = field(default=())

    def __post_init__(self):
        planes = tuple(
            p if isinstance(p, Plane) else Plane(*p) for p in self.planes
        )
        if len(planes) == 0:
            raise ValueError("an ensemble needs at least one plane")
        betas = tuple(tuple(float(b) for b in row) for row in self.betas)
        K = len(planes)
        if len(betas) != K - 1:
            raise ValueError(f"expected {K - 1} beta rows, got {len(betas)}")
        for r, row in enumerate(betas):
            if len(row) != r + 1:
                raise ValueError(
                    f"beta row for plane {r + 2} must have {r + 1} entries"
                )
            for b in row:
                if not math.isfinite(b) or b == 0.0:
                    raise ValueError(f"betas must be finite and nonzero, got {b}")
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "betas", betas)

    @classmethod
    def single(cls, masses, positions) -> "Ensemble":
        return cls((Plane(tuple(masses), tuple(positions)),))

    @property
    def K(self) -> int:
        return len(self.planes)

    @property
    def g(self) -> tuple[int, ...]:
        return tuple(p.g for p in self.planes)

    def beta(self, j: int, i: int) -> float:
        """Coupling of plane ``j`` into plane ``i`` (1-based, j < i)."""
        if not 1 <= j < i <= self.K:
            raise IndexError(f"no beta_({j},{i}) for K={self.K}")
        return self.betas[i - 2][j - 1]

    def all_positions(self) -> np.ndarray:
        return np.concatenate([p.y for p in self.planes])

    def total_mass(self) -> float:
        return float(sum(sum(p.masses) for p in self.planes))

    def rescaled(self, shift: complex, scale: float) -> "Ensemble":
        """Ensemble seen in coordinates ``u = (x - shift) / scale``.

        The map is conjugated exactly: masses become ``m / scale**2`` and
        betas are unchanged, so ``eta_u(u) = (eta(x) - shift) / scale``.
        """
        s2 = scale * scale
        planes = tuple(
            Plane(
                tuple(m / s2 for m in p.masses),
                tuple((y - shift) / scale for y in p.positions),
            )
            for p in self.planes
        )
        return Ensemble(planes, self.betas)


@dataclass(frozen=True)
class RayTrace:
    impacts: tuple[complex, ...]
    source_hit: complex


def _obstruction_radius(y):
    return OBSTRUCTION_RTOL * (1.0 + abs(y))


def alpha(plane: Plane, impact) -> complex:
    """Bending angle of one plane at ``impact``."""
    z = as_complex(impact)
    total = 0j
    for ell, (m, y) in enumerate(zip(plane.masses, plane.positions), start=1):
        d = z - y
        if abs(d) < _obstruction_radius(y):
            raise ObstructionError(plane=1, mass=ell, distance=abs(d))
        total += m / d.conjugate()
    return total


def trace(ensemble: Ensemble, x) -> RayTrace:
    x = as_complex(x)
    impacts: list[complex] = []
    bends: list[complex] = []
    for i, plane in enumerate(ensemble.planes, start=1):
        xi = x
        for j in range(1, i):
            xi -= ensemble.beta(j, i) * bends[j - 1]
        try:
            a = alpha(plane, xi)
        except ObstructionError as exc:
            raise ObstructionError(i, exc.mass, exc.distance) from None
        impacts.append(xi)
        bends.append(a)
    return RayTrace(tuple(impacts), x - sum(bends))


def eval_eta_w(ensemble: Ensemble, w, x) -> complex:
    return trace(ensemble, x).source_hit - as_complex(w)


def eval_eta_unfurled(ensemble: Ensemble, w, x) -> complex:
    """Closed-form (non-recursive) lensing equation, K <= 3 only.

    Written out term by term as an independent cross-check of ``trace``.
    """
    K = ensemble.K
    if K > 3:
        raise UnsupportedError("unfurled form is only written out for K <= 3")
    x = as_complex(x)
    w = as_complex(w)
    xc = x.conjugate()

    def check(i, gap, ys):
        for ell, y in enumerate(ys, start=1):
            if abs(gap[ell - 1]) < _obstruction_radius(y):
                raise ObstructionError(i, ell, abs(gap[ell - 1]))

    p1 = ensemble.planes[0]
    gaps1 = [xc - y.conjugate() for y in p1.positions]
    check(1, gaps1, p1.positions)
    s1 = sum(m / d for m, d in zip(p1.masses, gaps1))
    # conjugate of the first-plane sum, used inside deeper denominators
    s1c = sum(m / (x - y) for m, y in zip(p1.masses, p1.positions))
    result = x - w - s1
    if K == 1:
        return result

    p2 = ensemble.planes[1]
    b12 = ensemble.beta(1, 2)
    gaps2 = [xc - y.conjugate() - b12 * s1c for y in p2.positions]
    check(2, gaps2, p2.positions)
    result -= sum(m / d for m, d in zip(p2.masses, gaps2))
    if K == 2:
        return result

    p3 = ensemble.planes[2]
    b13 = ensemble.beta(1, 3)
    b23 = ensemble.beta(2, 3)
    s2c = sum(
        m / (x - y - b12 * s1) for m, y in zip(p2.masses, p2.positions)
    )
    gaps3 = [xc - y.conjugate() - b13 * s1c - b23 * s2c for y in p3.positions]
    check(3, gaps3, p3.positions)
    result -= sum(m / d for m, d in zip(p3.masses, gaps3))
    return result


# --- vectorised evaluation -------------------------------------------------


def propagate(ensemble: Ensemble, x, derivatives=True):
    """Vectorised ray propagation through every plane.

    Returns ``(impacts, grads, bends, bend_grads, obstructed)``: ``impacts[i]``
    is ``x_{i+1}`` on the array ``x``, ``grads[i]`` its Wirtinger pair
    ``(d x_i/dx, d x_i/dxbar)``, ``bends[i]`` the bending angle at that
    plane with derivative pair ``bend_grads[i]``, and ``obstructed[i]`` the
    mask of rays passing within the obstruction radius of a mass there.
    """
    x = np.asarray(x, dtype=complex)
    impacts, grads, bends, bend_grads, obstructed = [], [], [], [], []
    for i, plane in enumerate(ensemble.planes, start=1):
        xi = x.copy()
        pi = np.ones_like(x)
        qi = np.zeros_like(x)
        for j in range(1, i):
            beta = ensemble.beta(j, i)
            xi = xi - beta * bends[j - 1]
            if derivatives:
                pi = pi - beta * bend_grads[j - 1][0]
                qi = qi - beta * bend_grads[j - 1][1]
        al = np.zeros_like(x)
        gam = np.zeros_like(x)
        hit = np.zeros(x.shape, dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for m, y in zip(plane.masses, plane.positions):
                d = xi - y
                hit |= np.abs(d) < _obstruction_radius(y)
                inv = 1.0 / np.conj(d)
                al = al + m * inv
                if derivatives:
                    gam = gam - m * inv * inv
        impacts.append(xi)
        obstructed.append(hit)
        grads.append((pi, qi))
        bends.append(al)
        # alpha depends on conj(x_i) only
        bend_grads.append((gam * np.conj(qi), gam * np.conj(pi)))
    return impacts, grads, bends, bend_grads, obstructed


def forward(ensemble: Ensemble, x, w=0j, derivatives=True):
    """Evaluate ``eta_w`` on an array together with its Wirtinger derivatives.

    Returns ``(f, a, b, obstructed)`` where ``a = d eta/dx``,
    ``b = d eta/d conj(x)`` and ``obstructed`` flags points closer than the
    obstruction radius to some mass along the ray.  Obstructed entries are
    NaN.  ``det Jac = |a|**2 - |b|**2``.
    """
    x = np.asarray(x, dtype=complex)
    _, _, bends, bend_grads, hits = propagate(ensemble, x, derivatives)
    obstructed = np.logical_or.reduce(hits)
    f = x - sum(bends) - w
    a = 1.0 - sum(g[0] for g in bend_grads)
    b = -sum(g[1] for g in bend_grads)
    if obstructed.any():
        f = np.where(obstructed, np.nan, f)
        a = np.where(obstructed, np.nan, a)
        b = np.where(obstructed, np.nan, b)
    return f, a, b, obstructed


def partial_map(ensemble: Ensemble, plane: int, x):
    """Impact on 1-based ``plane`` as a function of ``x``.

    Returns ``(x_plane, d/dx, d/dxbar, obstructed)`` where ``obstructed``
    only reflects masses in the planes before ``plane``.
    """
    impacts, grads, _, _, hits = propagate(ensemble, x)
    before = np.logical_or.reduce(hits[: plane - 1]) if plane > 1 else np.zeros(
        np.shape(x), dtype=bool
    )
    k = plane - 1
    return impacts[k], grads[k][0], grads[k][1], before


def jacobian_det_exact(ensemble: Ensemble, x) -> np.ndarray:
    """Vectorised ``det Jac eta`` from forward-mode Wirtinger derivatives."""
    _, a, b, _ = forward(ensemble, x)
    return np.abs(a) ** 2 - np.abs(b) ** 2


@dataclass(frozen=True)
class Jacobian:
    matrix: np.ndarray
    det: float
    analytic_det: float | None = None
    step: float = 0.0


def analytic_det_single_plane(ensemble: Ensemble, x) -> float:
    if ensemble.K != 1:
        raise UnsupportedError("analytic determinant is only for K = 1")
    x = as_complex(x)
    p = ensemble.planes[0]
    s = sum(m / (x - y).conjugate() ** 2 for m, y in zip(p.masses, p.positions))
    return 1.0 - abs(s) ** 2


def jacobian(ensemble: Ensemble, w, x, method="fd") -> Jacobian:
    """Real 2x2 Jacobian of ``eta_w`` at ``x``.

    ``method="fd"`` uses central differences with step
    ``eps**(1/3) * (1 + |x|)``; ``method="exact"`` uses forward-mode
    Wirtinger derivatives.  For K = 1 the closed-form determinant is attached
    in either case.
    """
    x = as_complex(x)
    w = as_complex(w)
    h = np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + abs(x))
    rt = trace(ensemble, x)
    for i, (xi, plane) in enumerate(zip(rt.impacts, ensemble.planes), start=1):
        for ell, y in enumerate(plane.positions, start=1):
            if abs(xi - y) < 10 * h:
                raise StepError(
                    f"x within 10*h of mass {ell} in plane {i} (h={h:.2e})"
                )
    if method == "fd":
        cols = []
        for dx in (h, 1j * h):
            fp = eval_eta_w(ensemble, w, x + dx)
            fm = eval_eta_w(ensemble, w, x - dx)
            d = (fp - fm) / (2 * h)
            cols.append((d.real, d.imag))
        mat = np.array(cols).T
        det = float(np.linalg.det(mat))
    elif method == "exact":
        _, a, b, _ = forward(ensemble, np.array([x]))
        a, b = a[0], b[0]
        # d/dRe = a + b, d/dIm = i(a - b)
        c1 = a + b
        c2 = 1j * (a - b)
        mat = np.array([[c1.real, c2.real], [c1.imag, c2.imag]])
        det = float(abs(a) ** 2 - abs(b) ** 2)
    else:
        raise ValueError(f"unknown method {method!r}")
    analytic = analytic_det_single_plane(ensemble, x) if ensemble.K == 1 else None
    return Jacobian(mat, det, analytic, h)


def make_ensemble(
    planes: Sequence[tuple[Sequence[float], Sequence]],
    betas: Sequence[Sequence[float]] = (),
) -> Ensemble:
    return Ensemble(
        tuple(Plane(tuple(m), tuple(y)) for m, y in planes),
        tuple(tuple(r) for r in betas),
    )
