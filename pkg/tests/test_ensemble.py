import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multilens.ensemble import (
    Ensemble,
    Plane,
    alpha,
    as_complex,
    eval_eta_unfurled,
    eval_eta_w,
    forward,
    jacobian,
    jacobian_det_exact,
    make_ensemble,
    trace,
)
from multilens.errors import ObstructionError, StepError, UnsupportedError

from .conftest import random_ensemble, random_points

PHI = (1 + math.sqrt(5)) / 2


class TestTypes:
    def test_as_complex_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            as_complex(complex(math.nan, 0))
        with pytest.raises(ValueError):
            as_complex(math.inf)

    @pytest.mark.parametrize(
        "masses, positions",
        [([], []), ([1.0], [0, 1]), ([0.0], [0]), ([-1.0], [0]), ([1, 1], [0, 0])],
    )
    def test_plane_invariants(self, masses, positions):
        with pytest.raises(ValueError):
            Plane(tuple(masses), tuple(positions))

    def test_beta_table_shape(self):
        p = Plane((1.0,), (0j,))
        with pytest.raises(ValueError):
            Ensemble((p, p), ())
        with pytest.raises(ValueError):
            Ensemble((p, p), ((1.0, 2.0),))
        with pytest.raises(ValueError):
            Ensemble((p, p), ((0.0,),))
        e = Ensemble((p, p, p), ((0.5,), (0.25, 0.75)))
        assert e.K == 3 and e.g == (1, 1, 1)
        assert e.beta(1, 2) == 0.5 and e.beta(1, 3) == 0.25 and e.beta(2, 3) == 0.75
        with pytest.raises(IndexError):
            e.beta(3, 2)


class TestAlpha:
    def test_examples(self):
        assert alpha(Plane((1.0,), (0j,)), 2) == pytest.approx(0.5)
        assert alpha(Plane((1.0, 1.0), (1, -1)), 0) == pytest.approx(0)
        assert alpha(Plane((2.0,), (1j,)), 0) == pytest.approx(-2j)

    def test_obstruction(self):
        with pytest.raises(ObstructionError):
            alpha(Plane((1.0,), (0j,)), 1e-12)

    def test_conjugate_symmetry(self, rng):
        for _ in range(50):
            g = rng.integers(1, 4)
            m = rng.uniform(0.1, 2, g)
            y = random_points(rng, g, 1.0)
            x = complex(random_points(rng, 1, 2.0)[0])
            p = Plane(tuple(m), tuple(y))
            pc = Plane(tuple(m), tuple(np.conj(y)))
            assert alpha(pc, x.conjugate()) == pytest.approx(alpha(p, x).conjugate(), rel=1e-13)


class TestTrace:
    def test_single_mass(self, single):
        assert trace(single, 2).source_hit == pytest.approx(1.5)
        assert trace(single, PHI).source_hit == pytest.approx(1.0, abs=1e-15)
        assert trace(single, 2).impacts == (2,)

    def test_obstructed(self, single):
        with pytest.raises(ObstructionError) as ei:
            trace(single, 0)
        assert ei.value.plane == 1 and ei.value.mass == 1

    def test_obstruction_reports_later_plane(self):
        e = make_ensemble([([1.0], [0]), ([1.0], [0.5])], [[1.0]])
        # x_2 = x - 1/conj(x) = 0.5 at x = 1.28077...
        x = (0.5 + math.sqrt(4.25)) / 2
        with pytest.raises(ObstructionError) as ei:
            trace(e, x)
        assert ei.value.plane == 2

    def test_recursion(self, rng):
        e = random_ensemble(rng, 3)
        x = 1.7 - 0.4j
        rt = trace(e, x)
        assert rt.impacts[0] == x
        for i in range(2, 4):
            expect = x - sum(
                e.beta(j, i) * alpha(e.planes[j - 1], rt.impacts[j - 1]) for j in range(1, i)
            )
            assert rt.impacts[i - 1] == pytest.approx(expect, rel=1e-15)
        bends = sum(alpha(p, xi) for p, xi in zip(e.planes, rt.impacts))
        assert rt.source_hit == pytest.approx(x - bends, rel=1e-15)

    def test_deterministic(self, rng):
        e = random_ensemble(rng, 3)
        assert trace(e, 0.3 + 0.9j) == trace(e, 0.3 + 0.9j)

    def test_eta_w(self, single):
        assert abs(eval_eta_w(single, 1, PHI)) < 1e-15
        assert abs(eval_eta_w(single, 1, 1 - PHI)) < 1e-15

    def test_far_field(self, rng):
        e = random_ensemble(rng, 2)
        x = 1e6 + 3e5j
        assert abs(eval_eta_w(e, 0, x) - x) <= e.total_mass() / abs(x) * 2


class TestUnfurled:
    def test_k1_agrees(self, rng):
        e = random_ensemble(rng, 1)
        for x in random_points(rng, 20):
            assert abs(eval_eta_unfurled(e, 0.1, x) - eval_eta_w(e, 0.1, x)) < 1e-14

    @pytest.mark.parametrize("K", [2, 3])
    def test_matches_recursive(self, rng, K):
        worst = 0.0
        for _ in range(1000):
            e = random_ensemble(rng, K)
            x = complex(random_points(rng, 1, 2.5)[0])
            w = complex(*rng.uniform(-1, 1, 2))
            try:
                a = eval_eta_w(e, w, x)
            except ObstructionError:
                continue
            b = eval_eta_unfurled(e, w, x)
            worst = max(worst, abs(a - b) / (1 + abs(x)))
        assert worst < 1e-12

    def test_k4_unsupported(self, rng):
        with pytest.raises(UnsupportedError):
            eval_eta_unfurled(random_ensemble(rng, 4), 0, 1)


class TestVectorised:
    def test_forward_matches_scalar(self, rng):
        e = random_ensemble(rng, 3)
        xs = random_points(rng, 200)
        f, a, b, bad = forward(e, xs, 0.2j)
        for x, fx in zip(xs[~bad], f[~bad]):
            assert fx == pytest.approx(eval_eta_w(e, 0.2j, x), rel=1e-12, abs=1e-12)

    def test_obstructed_is_nan(self, single):
        f, a, b, bad = forward(single, np.array([0j, 1 + 1j]))
        assert bad.tolist() == [True, False]
        assert np.isnan(f[0]) and np.isfinite(f[1])

    def test_wirtinger_against_fd(self, rng):
        e = random_ensemble(rng, 3)
        for x in random_points(rng, 30, 2.5):
            try:
                fd = jacobian(e, 0, x, method="fd")
                ex = jacobian(e, 0, x, method="exact")
            except (ObstructionError, StepError):
                continue
            assert ex.det == pytest.approx(fd.det, rel=1e-5, abs=1e-6)
            assert np.allclose(ex.matrix, fd.matrix, rtol=1e-5, atol=1e-6)


class TestJacobian:
    def test_einstein_ring(self, single):
        for t in np.linspace(0, 2 * np.pi, 7):
            j = jacobian(single, 0, np.exp(1j * t))
            assert abs(j.analytic_det) < 1e-15
            assert abs(j.det) < 1e-8

    def test_analytic_value(self, single):
        j = jacobian(single, 0, 3)
        assert j.analytic_det == pytest.approx(80 / 81, rel=1e-15)
        assert j.det == pytest.approx(80 / 81, rel=1e-8)

    def test_far_is_identity(self, rng):
        e = random_ensemble(rng, 3)
        assert jacobian(e, 0, 1e4 + 1e4j).det == pytest.approx(1.0, abs=1e-6)

    def test_fd_matches_analytic_k1(self, rng):
        worst = 0.0
        n = 0
        while n < 1000:
            e = random_ensemble(rng, 1)
            x = complex(random_points(rng, 1, 2.5)[0])
            try:
                j = jacobian(e, 0, x)
            except (ObstructionError, StepError):
                continue
            if abs(j.analytic_det) < 1e-3:
                continue  # near-critical: relative error meaningless
            worst = max(worst, abs(j.det - j.analytic_det) / abs(j.analytic_det))
            n += 1
        assert worst < 1e-6

    def test_step_error_near_mass(self, single):
        with pytest.raises(StepError):
            jacobian(single, 0, 1e-6)

    def test_exact_det_vectorised(self, single):
        xs = np.array([3.0 + 0j, 2j])
        assert np.allclose(jacobian_det_exact(single, xs), 1 - 1 / np.abs(xs) ** 4)


@given(
    st.floats(0.1, 2.0),
    st.complex_numbers(max_magnitude=1.0),
    st.complex_numbers(min_magnitude=0.05, max_magnitude=3.0),
)
def test_single_plane_det_formula(m, y, dx):
    e = Ensemble.single([m], [y])
    x = y + dx
    expect = 1 - m * m / abs(dx) ** 4
    got = float(jacobian_det_exact(e, np.array([x]))[0])
    assert got == pytest.approx(expect, rel=1e-9, abs=1e-9 * max(1, abs(expect)))
