import math

import numpy as np
import pytest

from multilens import solver
from multilens.construct import build_cleared_system
from multilens.ensemble import Ensemble, eval_eta_w, make_ensemble
from multilens.errors import (
    BoundViolationError,
    MethodDisagreementError,
    NonGenericError,
)
from multilens.solver import (
    GridSpec,
    ImageSolution,
    Tolerances,
    cluster,
    count_images,
    covering_radius,
    find_images_newton,
    find_images_resultant,
    hausdorff,
    obstruction_points,
    resultant_feasible,
)

from .conftest import random_ensemble

PHI = (1 + math.sqrt(5)) / 2


def positions(images):
    return np.sort_complex(np.array([im.position for im in images]))


class TestSingleMass:
    @pytest.mark.parametrize("finder", [find_images_resultant, find_images_newton])
    def test_golden_ratio(self, single, finder):
        ims = finder(single, 1.0)
        assert len(ims) == 2
        assert positions(ims) == pytest.approx([1 - PHI, PHI], abs=1e-12)
        assert all(im.residual < 1e-12 for im in ims)
        assert sorted(im.parity for im in ims) == [-1, 1]

    def test_einstein_ring_rejected(self, single):
        with pytest.raises(NonGenericError):
            count_images(single, 0)

    def test_resultant_einstein_ring(self, single):
        with pytest.raises(NonGenericError):
            find_images_resultant(single, 0)

    def test_count(self, single):
        rep = count_images(single, 1.0)
        assert rep.count == 2 == rep.bound and rep.slack == 0
        assert rep.methods == {"newton": 2, "resultant": 2}
        assert rep.agreement < 1e-12
        assert {im.method for im in rep.images} == {"both"}


class TestBinary:
    @pytest.mark.parametrize("w, n", [(0.0, 5), (0.05j, 5), (0.5, 3), (1.0, 3)])
    def test_counts(self, binary, w, n):
        rep = count_images(binary, w)
        assert rep.count == n
        assert rep.methods["resultant"] == n

    def test_parity_sum(self, binary):
        # index theorem for point lenses: n_plus - n_minus = 1 - (number of masses)
        for w in (0.0, 0.5, 1.0):
            rep = count_images(binary, w)
            assert sum(rep.parities) == 1 - 2


@pytest.mark.parametrize("g", [1, 2, 3])
def test_distant_source(rng, g, ):
    e = Ensemble.single(rng.uniform(0.1, 2, g), 0.5 * np.exp(2j * np.pi * rng.uniform(size=g)))
    w = 30 + 20j
    rep = count_images(e, w)
    assert rep.count == g + 1
    near_w = [im for im in rep.images if abs(im.position - w) < 1]
    assert len(near_w) == 1 and near_w[0].parity == 1
    others = [im for im in rep.images if im is not near_w[0]]
    assert all(im.parity == -1 for im in others)
    for im in others:
        assert min(abs(im.position - y) for y in e.planes[0].positions) < 0.2


class TestOracles:
    @pytest.mark.parametrize("K", [1, 2])
    def test_agree(self, rng, K):
        for _ in range(3):
            e = random_ensemble(rng, K, gmax=2)
            w = complex(*rng.uniform(-1, 1, 2))
            try:
                n = find_images_newton(e, w)
                r = find_images_resultant(e, w)
            except NonGenericError:
                continue
            assert len(n) == len(r)
            assert hausdorff([i.position for i in n], [i.position for i in r]) < 1e-6

    def test_images_are_zeros_of_P(self, rng):
        e = random_ensemble(rng, 2, gmax=2)
        w = 0.3 - 0.1j
        s = build_cleared_system(e, w)
        for im in find_images_newton(e, w):
            assert abs(eval_eta_w(e, w, im.position)) < Tolerances().accept_tol(w)
            assert abs(complex(s.eval_P(im.position))) < 1e-6 * s.P.norm()
            assert abs(complex(s.eval_Pbar(im.position))) < 1e-6 * s.P.norm()

    def test_details(self, single):
        d = find_images_resultant(single, 1.0, details=True)
        assert d.degree == 2 == d.bound
        assert len(d.images) == 2


class TestCountErrors:
    def fake(self, xs):
        return [ImageSolution(complex(x), 0.0, -1.0, "newton") for x in xs]

    def test_disagreement(self, single, monkeypatch):
        monkeypatch.setattr(solver, "find_images_resultant", lambda *a, **k: self.fake([PHI]))
        with pytest.raises(MethodDisagreementError) as ei:
            count_images(single, 1.0)
        assert ei.value.report.methods == {"newton": 2, "resultant": 1}

    def test_violation(self, single, monkeypatch):
        monkeypatch.setattr(solver, "find_images_newton", lambda *a, **k: self.fake([1, 2, 3]))
        with pytest.raises(BoundViolationError) as ei:
            count_images(single, 1.0, use_resultant=False)
        assert ei.value.report.count == 3 and ei.value.report.bound == 2

    def test_routing(self):
        assert resultant_feasible([1, 1, 1])
        assert resultant_feasible([3, 2])
        assert resultant_feasible([3, 3])
        assert not resultant_feasible([2, 2, 2])

    def test_skip_reported(self):
        e = make_ensemble(
            [([1.0, 0.5], [0.5, -0.5]), ([0.7, 0.3], [0.1j, -0.3]), ([0.4, 0.6], [0.2, 0.6j])],
            [[0.7], [0.5, 0.9]],
        )
        rep = count_images(e, 1.5 + 1.0j)
        assert rep.methods["resultant"].startswith("skipped")
        assert rep.count <= rep.bound


def test_strongly_stretched_image():
    # one image lands close to a second-plane mass where the map stretches
    # by ~35; plane-1 seed rings alone missed it
    e = make_ensemble([([1.0, 1.0, 1.0], [0.5, -0.5, 0.5j]), ([1.0] * 3, [0.1, 0.2j, -0.3])],
                      [[0.7]])
    rep = count_images(e, 2.5 + 1.5j)
    assert rep.count == rep.methods["resultant"] == 18
    x0 = -1.390934009264893 + 0.5577244612838959j
    assert min(abs(im.position - x0) for im in rep.images) < 1e-9


class TestHelpers:
    def test_hausdorff(self):
        assert hausdorff([], []) == 0
        assert hausdorff([0], []) == math.inf
        assert hausdorff([0, 1], [1.5]) == 1.5

    def test_cluster(self):
        reps = cluster(np.array([0, 1e-8, 1, 1 + 1e-7]), 1e-6, np.array([2, 1, 1, 3]))
        assert sorted(reps.tolist()) == [1, 2]

    def test_covering_radius(self, single):
        assert covering_radius(single, 1.0) == 2 * (0 + 1 + 1 + 1)
        g = GridSpec(n=5).resolved(single, 1.0)
        assert g.radius == 6 and g.nodes().shape == (5, 5)

    def test_obstruction_points_include_later_planes(self):
        e = make_ensemble([([1.0], [0]), ([1.0], [0.5])], [[1.0]])
        pts = obstruction_points(e)
        x = (0.5 + math.sqrt(4.25)) / 2
        assert np.min(np.abs(pts - 0)) < 1e-12
        assert np.min(np.abs(pts - x)) < 1e-9

    def test_deterministic(self, rng):
        e = random_ensemble(rng, 2, gmax=2)
        a = positions(find_images_newton(e, 0.2))
        b = positions(find_images_newton(e, 0.2))
        assert np.array_equal(a, b)
