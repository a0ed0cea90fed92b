"""Image-count bounds for multiplane point-mass ensembles.

All arithmetic is on Python integers, so nothing here can overflow or round.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

from .errors import InternalMismatchError


def check_g(g: Sequence[int]) -> tuple[int, ...]:
    """Validate a plane-size vector: non-empty, every entry an integer >= 1."""
    out = []
    for gi in g:
        if isinstance(gi, bool) or int(gi) != gi or gi < 1:
            raise ValueError(f"plane sizes must be integers >= 1, got {gi!r}")
        out.append(int(gi))
    if not out:
        raise ValueError("need at least one plane")
    return tuple(out)


def formal_coeffs(g: Sequence[int]) -> list[int]:
    """Coefficients of prod(1 + g_i Z), i.e. the elementary symmetric
    polynomials e_0..e_K of the plane sizes."""
    g = check_g(g)
    c = [1]
    for gi in g:
        c = [a + gi * b for a, b in zip(c + [0], [0] + c)]
    return c


def ek_ok(g: Sequence[int]) -> tuple[int, int]:
    """Even and odd coefficient sums of prod(1 + g_i Z).

    Computed twice, once from the coefficient list and once from F(1) and
    F(-1); the two must agree.
    """
    c = formal_coeffs(g)
    even = sum(c[0::2])
    odd = sum(c[1::2])
    f1 = reduce(operator.mul, (1 + gi for gi in g), 1)
    fm1 = reduce(operator.mul, (1 - gi for gi in g), 1)
    if (f1 + fm1) % 2 or (f1 - fm1) % 2:
        raise InternalMismatchError("F(1) and F(-1) differ in parity")
    closed = ((f1 + fm1) // 2, (f1 - fm1) // 2)
    if closed != (even, odd):
        raise InternalMismatchError(
            f"parity sums {(even, odd)} != closed form {closed}"
        )
    return even, odd


def image_bound(g: Sequence[int]) -> int:
    E, O = ek_ok(g)
    return E * E + O * O


def bezout_bound(g: Sequence[int]) -> int:
    E, O = ek_ok(g)
    return (E + O) ** 2


def reference_bounds(g: Sequence[int]) -> dict[str, int]:
    """Earlier special-case bounds, emitted only where their shape applies.

    ``khavinson_neumann`` is reported for reference and is never enforced.
    """
    g = check_g(g)
    K = len(g)
    out: dict[str, int] = {}
    if K == 1:
        out["witt"] = g[0] ** 2 + 1
        if g[0] >= 2:
            out["khavinson_neumann"] = 5 * (g[0] - 1)
    if all(gi == 1 for gi in g):
        out["petters_2K"] = 2 ** (2 * K - 1)
        # one mass in each of K planes, the earlier 2(2^{2(K-1)} - 1) count
        out["petters_1997"] = 2 * (2 ** (2 * (K - 1)) - 1)
    if K == 2 and g[0] == g[1]:
        n = g[0]
        out["two_cluster"] = 1 + 6 * n**2 + n**4
        out["petters_two_cluster"] = 2 ** (4 * n - 1) - 2
    return out


def linear_conjecture(g: Sequence[int]) -> int:
    """prod 5(g_i - 1): informational column only, an open question."""
    return reduce(operator.mul, (5 * (gi - 1) for gi in check_g(g)), 1)


@dataclass(frozen=True)
class BoundReport:
    g: tuple[int, ...]
    coeffs: tuple[int, ...]
    E: int
    O: int
    theorem1: int
    bezout: int
    specials: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "g": list(self.g),
            "coeffs": list(self.coeffs),
            "E": self.E,
            "O": self.O,
            "theorem1": self.theorem1,
            "bezout": self.bezout,
            "specials": dict(self.specials),
        }


def bound_report(g: Sequence[int]) -> BoundReport:
    g = check_g(g)
    E, O = ek_ok(g)
    return BoundReport(
        g=g,
        coeffs=tuple(formal_coeffs(g)),
        E=E,
        O=O,
        theorem1=E * E + O * O,
        bezout=(E + O) ** 2,
        specials=reference_bounds(g),
    )
