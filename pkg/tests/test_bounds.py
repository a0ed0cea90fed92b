import pytest
from hypothesis import given
from hypothesis import strategies as st

from multilens.bounds import (
    bezout_bound,
    bound_report,
    check_g,
    ek_ok,
    formal_coeffs,
    image_bound,
    linear_conjecture,
    reference_bounds,
)

g_vectors = st.lists(st.integers(1, 9), min_size=1, max_size=8)


@pytest.mark.parametrize(
    "g, E, O, bound",
    [([1], 1, 1, 2), ([2], 1, 2, 5), ([1, 1], 2, 2, 8), ([2, 2], 5, 4, 41), ([1, 1, 1], 4, 4, 32)],
)
def test_examples(g, E, O, bound):
    assert ek_ok(g) == (E, O)
    assert image_bound(g) == bound


def test_coeffs():
    assert formal_coeffs([2, 2]) == [1, 4, 4]
    assert formal_coeffs([1, 2, 3]) == [1, 6, 11, 6]


def test_bezout_two_two():
    assert bezout_bound([2, 2]) == 81


@pytest.mark.parametrize("bad", [[], [0], [-1], [1.5], [True]])
def test_rejects(bad):
    with pytest.raises(ValueError):
        check_g(bad)


def test_closed_forms():
    for g in range(1, 21):
        assert image_bound([g]) == g * g + 1
    for K in range(1, 13):
        assert image_bound([1] * K) == 2 ** (2 * K - 1)
    for n in range(1, 13):
        assert image_bound([n, n]) == 1 + 6 * n**2 + n**4


def test_reference_bounds():
    assert reference_bounds([3]) == {"witt": 10, "khavinson_neumann": 10}
    assert "khavinson_neumann" not in reference_bounds([1])
    r = reference_bounds([1, 1])
    assert r["petters_2K"] == 8 and r["two_cluster"] == 8
    assert reference_bounds([1, 2]) == {}


def test_linear_conjecture():
    assert linear_conjecture([2, 3]) == 50
    assert linear_conjecture([1, 3]) == 0


def test_report():
    rep = bound_report([2, 2])
    assert rep.theorem1 == 41 and rep.bezout == 81
    d = rep.to_dict()
    assert d["coeffs"] == [1, 4, 4] and d["g"] == [2, 2]


@given(g_vectors)
def test_bezout_gap(g):
    E, O = ek_ok(g)
    assert bezout_bound(g) - image_bound(g) == 2 * E * O > 0


@given(g_vectors)
def test_parity_sums(g):
    E, O = ek_ok(g)
    total = 1
    for gi in g:
        total *= 1 + gi
    assert E + O == total
    assert sum(formal_coeffs(g)) == total


@given(g_vectors, st.permutations(range(8)))
def test_order_invariant(g, perm):
    h = [g[i] for i in perm if i < len(g)]
    assert image_bound(h) == image_bound(g)
