import numpy as np
import pytest

from exceptions import RejectedInput
from oracles import inclusion_exclusion_hv
from pareto_core import (
    ParetoBuffer,
    buffer_insert,
    dominates,
    hypervolume,
    hypervolume_contribution,
    mc_hypervolume,
    pareto_filter,
    unsupported_points,
)


class TestDominance:
    def test_componentwise_with_one_strict(self):
        assert dominates((2, 3), (1, 3))

    def test_incomparable_both_ways(self):
        assert not dominates((1, 2), (2, 1))
        assert not dominates((2, 1), (1, 2))

    def test_equal_points_do_not_dominate(self):
        assert not dominates((2, 3), (2, 3))

    def test_dimension_mismatch(self):
        with pytest.raises(RejectedInput, match="dimension mismatch"):
            dominates((1, 2), (1, 2, 3))

    def test_rejected_input_is_a_value_error(self):
        with pytest.raises(ValueError):
            dominates((1, 2), (1,))


class TestParetoFilter:
    @pytest.mark.parametrize(
        "points, expected",
        [
            ([(1, 1), (2, 2)], {(2.0, 2.0)}),
            ([(1, 3), (3, 1)], {(1.0, 3.0), (3.0, 1.0)}),
            ([(1, 3), (3, 1), (2, 2), (1, 1)], {(1.0, 3.0), (3.0, 1.0), (2.0, 2.0)}),
        ],
    )
    def test_known_cases(self, points, expected):
        assert pareto_filter(points) == expected

    def test_empty(self):
        with pytest.raises(RejectedInput):
            pareto_filter([])

    def test_random_sets_are_exact(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            pts = [tuple(p) for p in rng.integers(0, 5, size=(15, 3)).astype(float)]
            front = pareto_filter(pts)
            for a in front:
                assert not any(dominates(b, a) for b in front)
            for p in set(pts) - front:
                assert any(dominates(a, p) for a in front)


class TestHypervolume:
    def test_single_box(self):
        assert hypervolume([(1, 1)], (0, 0)) == 1.0

    def test_two_dimensional_staircase(self):
        assert hypervolume([(1, 2), (2, 1)], (0, 0)) == pytest.approx(3.0, abs=1e-12)

    def test_three_dimensional_union(self):
        pts = [(2, 1, 1), (1, 2, 1), (1, 1, 2)]
        assert hypervolume(pts, (0, 0, 0)) == pytest.approx(4.0, abs=1e-12)

    def test_dominated_points_do_not_count(self):
        assert hypervolume([(2, 2), (1, 1)], (0, 0)) == hypervolume([(2, 2)], (0, 0))

    def test_empty_set(self):
        assert hypervolume([], (0, 0)) == 0.0

    def test_point_below_reference(self):
        with pytest.raises(RejectedInput, match="below the reference"):
            hypervolume([(1, -1)], (0, 0))

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_matches_inclusion_exclusion(self, k):
        rng = np.random.default_rng(100 + k)
        for _ in range(60):
            n = int(rng.integers(1, 13))
            pts = rng.uniform(0.0, 1.0, size=(n, k))
            exact = hypervolume(pts, np.zeros(k))
            brute = inclusion_exclusion_hv(pts, np.zeros(k))
            assert exact == pytest.approx(brute, rel=1e-9)


class TestContribution:
    def test_covered_point_contributes_nothing(self):
        assert hypervolume_contribution((1, 1), [(2, 2)], (0, 0)) == 0.0

    def test_knee_point(self):
        assert hypervolume_contribution((2, 2), [(1, 3), (3, 1)], (0, 0)) == pytest.approx(1.0)

    def test_point_already_in_set(self):
        # contribution is measured against the set without a
        assert hypervolume_contribution((2, 2), [(2, 2)], (0, 0)) == pytest.approx(4.0)


class TestBuffer:
    def test_insert_accept_reject_prune(self):
        buf = ParetoBuffer.empty((0, 0))
        buf, d1 = buffer_insert(buf, (1, 1), step=0)
        buf, d2 = buffer_insert(buf, (0.5, 0.5), step=1)
        buf, d3 = buffer_insert(buf, (2, 2), step=2)
        assert (d1, d2, d3) == (1.0, 0.0, 3.0)
        assert buf.points == {(2.0, 2.0)}
        assert [e.accepted for e in buf.history] == [True, False, True]
        assert buf.accepted_steps() == {(2.0, 2.0): 2}

    def test_hypervolume_never_decreases(self):
        rng = np.random.default_rng(5)
        buf = ParetoBuffer.empty((0, 0, 0))
        last = 0.0
        for step in range(80):
            buf, _ = buffer_insert(buf, rng.uniform(0, 1, size=3), step)
            hv = buf.hypervolume()
            assert hv >= last - 1e-15
            last = hv
            pts = list(buf.points)
            assert not any(dominates(a, b) for a in pts for b in pts)

    def test_same_point_twice(self):
        buf, first = buffer_insert(ParetoBuffer.empty((0, 0)), (2, 2), step=1)
        buf, again = buffer_insert(buf, (2, 2), step=7)
        assert (first, again) == (4.0, 0.0)
        assert [e.accepted for e in buf.history] == [True, False]
        assert buf.hypervolume() == 4.0
        assert buf.accepted_steps() == {(2.0, 2.0): 1}

    def test_hypervolume_grows_by_the_returned_delta(self):
        rng = np.random.default_rng(11)
        buf = ParetoBuffer.empty((0, 0, 0))
        pool = rng.uniform(0, 1, size=(15, 3))
        for step in range(120):
            # draw from a small pool so repeats happen
            candidate = pool[rng.integers(len(pool))]
            before = buf.hypervolume()
            buf, delta = buffer_insert(buf, candidate, step)
            assert buf.hypervolume() == pytest.approx(before + delta, abs=1e-12)
            assert buf.history[-1].accepted == (delta > 0)

    def test_candidate_below_reference(self):
        with pytest.raises(RejectedInput):
            buffer_insert(ParetoBuffer.empty((0, 0)), (-1, 1), 0)

    def test_json_keeps_history(self):
        buf = ParetoBuffer.empty((0, 0))
        buf, _ = buffer_insert(buf, (1, 2), 3)
        buf, _ = buffer_insert(buf, (2, 1), 4)
        again = ParetoBuffer.from_json(buf.to_json())
        assert again == buf


class TestMonteCarlo:
    def test_degenerate_box(self):
        with pytest.raises(RejectedInput, match="degenerate"):
            mc_hypervolume([(0.5, 0.5)], (0, 0), (1, 0), 100, seed=0)

    def test_empty_set(self):
        assert mc_hypervolume([], (0, 0), (1, 1), 100, seed=0) == (0.0, 0.0)

    def test_every_sample_covered(self):
        assert mc_hypervolume([(2, 2)], (0, 0), (2, 2), 1_000_000, seed=0) == (4.0, 0.0)

    def test_two_point_staircase(self):
        est, stderr = mc_hypervolume([(1, 3), (3, 1)], (0, 0), (3, 3), 1_000_000, seed=0)
        assert 0 < stderr < 0.01
        assert abs(est - 5.0) <= 3 * stderr

    def test_estimate_within_standard_errors(self):
        rng = np.random.default_rng(21)
        for i in range(20):
            k = int(rng.choice([2, 3]))
            pts = rng.uniform(0.05, 1.0, size=(int(rng.integers(1, 8)), k))
            exact = hypervolume(pts, np.zeros(k))
            est, stderr = mc_hypervolume(pts, np.zeros(k), np.ones(k), 2**16, seed=i, sampler="sobol")
            assert abs(est - exact) <= 3 * stderr

    def test_sobol_rounds_up_to_a_power_of_two(self):
        est, stderr = mc_hypervolume([(0.5, 0.5)], (0, 0), (1, 1), 1000, seed=3, sampler="sobol")
        # 1024 draws, so the estimate is a multiple of 1/1024
        assert (est * 1024) == pytest.approx(round(est * 1024))
        assert stderr == pytest.approx(np.sqrt(est * (1 - est) / 1024))

    def test_unknown_sampler(self):
        with pytest.raises(RejectedInput, match="sampler"):
            mc_hypervolume([(0.5, 0.5)], (0, 0), (1, 1), 100, seed=0, sampler="halton")

    def test_same_seed_same_estimate(self):
        a = mc_hypervolume([(0.3, 0.7)], (0, 0), (1, 1), 1000, seed=4)
        b = mc_hypervolume([(0.3, 0.7)], (0, 0), (1, 1), 1000, seed=4)
        assert a == b


class TestUnsupported:
    def test_dominated_by_a_mixture(self):
        assert unsupported_points([(1, 0), (0, 1), (0.2, 0.2)]) == {(0.2, 0.2)}

    def test_convex_front(self):
        assert unsupported_points([(1, 0), (0, 1), (0.6, 0.6)]) == frozenset()

    def test_two_points_are_always_supported(self):
        assert unsupported_points([(1, 0), (0, 1)]) == frozenset()
