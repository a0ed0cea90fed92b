"""Reference computations shared by the unit and acceptance tests."""
import mpmath
import numpy as np

from multilens.bipoly import BiPoly, evaluate
from multilens.construct import build_cleared_system
from multilens.ensemble import forward


def identity_error(ensemble, w, xs, *, dps=40, dtype=object):
    """Largest relative error of P = eta_w * prod D over the points ``xs``.

    ``P`` lives in local coordinates, where ``eta_local = eta / scale``.
    Obstructed points are skipped.
    """
    with mpmath.workdps(dps):
        s = build_cleared_system(ensemble, w, dtype=dtype)
        P = np.array(s.eval_P(xs), dtype=complex)
        D = np.array(s.eval_D(xs), dtype=complex)
    f, _, _, bad = forward(ensemble, np.asarray(xs, dtype=complex), w, derivatives=False)
    rhs = f / s.scale * D
    rel = np.abs(P - rhs) / np.abs(rhs)
    return float(np.max(rel[~bad])) if (~bad).any() else 0.0


def _partials(c):
    dx = c[1:, :] * np.arange(1, c.shape[0])[:, None] if c.shape[0] > 1 else np.zeros((1, 1))
    dy = c[:, 1:] * np.arange(1, c.shape[1])[None, :] if c.shape[1] > 1 else np.zeros((1, 1))
    return BiPoly(dx.astype(complex)), BiPoly(dy.astype(complex))


def brute_force_zeros(p, q, *, starts=4000, box=50.0, tol=1e-12, seed=0):
    """Common zeros of two bivariate polynomials in independent (x, y).

    Vectorised Newton on the 2x2 complex system from random starts.  A point
    counts as verified when it lies in the box ``|x|, |y| <= box`` and both
    residuals are below ``tol`` relative to the sum of absolute terms.
    """
    pdx, pdy = _partials(p.coeffs)
    qdx, qdy = _partials(q.coeffs)
    rng = np.random.default_rng(seed)
    r = 3.0 * rng.uniform(size=(2, starts)) ** 2
    x, y = r * np.exp(2j * np.pi * rng.uniform(size=(2, starts)))
    with np.errstate(all="ignore"):
        for _ in range(80):
            f1, f2 = evaluate(p, x, y), evaluate(q, x, y)
            a, b = evaluate(pdx, x, y), evaluate(pdy, x, y)
            c, d = evaluate(qdx, x, y), evaluate(qdy, x, y)
            det = a * d - b * c
            x = x - (f1 * d - b * f2) / det
            y = y - (a * f2 - c * f1) / det
        ok = np.isfinite(x) & np.isfinite(y) & (np.abs(x) <= box) & (np.abs(y) <= box)
        x, y = x[ok], y[ok]
        ax, ay = np.abs(x), np.abs(y)
        scale_p = evaluate(BiPoly(np.abs(p.coeffs)), ax, ay).real
        scale_q = evaluate(BiPoly(np.abs(q.coeffs)), ax, ay).real
        good = (np.abs(evaluate(p, x, y)) <= tol * scale_p) & (
            np.abs(evaluate(q, x, y)) <= tol * scale_q
        )
    found: list[tuple[complex, complex]] = []
    for u, v in zip(x[good], y[good]):
        if all(abs(u - a) + abs(v - b) > 1e-6 * (1 + abs(u) + abs(v)) for a, b in found):
            found.append((complex(u), complex(v)))
    return found


def resultant_residual(elimination, x) -> float:
    """|R(x)| relative to max(||R||, sum |c_k| |x|^k).

    Inside the unit disk this is the plain coefficient norm; outside it
    accounts for the growth of the monomials.
    """
    c = elimination.poly.convert().coef
    growth = float(np.sum(np.abs(c) * abs(x) ** np.arange(len(c))))
    return abs(elimination(x)) / max(float(np.abs(c).max()), growth)


def random_integer_pair(rng, maxdeg=3, coef=5):
    """Two integer-coefficient polynomials with degrees <= (maxdeg, maxdeg)
    and a nonvanishing resultant (hence coprime)."""
    from multilens.errors import VanishingResultantError
    from multilens.resultant import resultant_eliminate

    while True:
        s, t, v, w = (int(k) for k in rng.integers(1, maxdeg + 1, 4))
        p = BiPoly(rng.integers(-coef, coef + 1, (s + 1, t + 1)).astype(complex))
        q = BiPoly(rng.integers(-coef, coef + 1, (v + 1, w + 1)).astype(complex))
        if p.is_zero() or q.is_zero() or p.degree().t + q.degree().t == 0:
            continue
        try:
            el = resultant_eliminate(p, q, prec=128)
        except VanishingResultantError:
            continue
        return p, q, el
