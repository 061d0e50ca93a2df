import numpy as np
import pytest

from twoarm.core import Blocking, CovariateMatrix
from twoarm.matching import (
    EXACT_CAPACITY,
    CapacityError,
    DistanceMatrix,
    mahalanobis_distances,
    match_exact,
    match_grid,
    match_heuristic,
    pair_gap_diagnostic,
)
from twoarm.response import default_model, potential_means
from twoarm.streams import substream

from util_oracles import brute_force_matching_cost


def _random_distances(n_subjects: int, seed: int) -> DistanceMatrix:
    x = CovariateMatrix(np.random.default_rng(seed).normal(size=(n_subjects, 2)))
    return mahalanobis_distances(x)


class TestDistanceMatrix:
    def test_mahalanobis_single_covariate_example(self):
        x = CovariateMatrix([[0.0], [1.0], [2.0], [3.0]])
        d = mahalanobis_distances(x)
        # sample variance 5/3, so d(0, 3) = 9 / (5/3) = 5.4
        assert d.values[0, 3] == pytest.approx(5.4, rel=1e-12)
        assert d.values[1, 2] == pytest.approx(0.6, rel=1e-12)

    def test_symmetric_zero_diagonal_nonnegative(self):
        d = _random_distances(10, 0)
        np.testing.assert_allclose(d.values, d.values.T, atol=0)
        np.testing.assert_array_equal(np.diag(d.values), 0.0)
        assert (d.values >= 0).all()

    def test_invariant_violations_rejected(self):
        with pytest.raises(ValueError):
            DistanceMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
        with pytest.raises(ValueError):
            DistanceMatrix(np.array([[0.0, -1.0], [-1.0, 0.0]]))
        with pytest.raises(ValueError):
            DistanceMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ValueError):
            DistanceMatrix(np.zeros((2, 3)))

    def test_duplicate_rows_distance_zero(self):
        x = CovariateMatrix(np.repeat([[1.0, 2.0], [3.0, 4.0]], 2, axis=0))
        d = mahalanobis_distances(x)
        assert d.values[0, 1] == pytest.approx(0.0, abs=1e-9)
        assert d.values[2, 3] == pytest.approx(0.0, abs=1e-9)


class TestMatchExact:
    def test_clustered_points_example(self):
        pts = np.array([0.0, 1.0, 10.0, 11.0])
        d = DistanceMatrix((pts[:, None] - pts[None, :]) ** 2)
        res = match_exact(d)
        assert res.pairing.pairs() == [(0, 1), (2, 3)]
        assert res.cost == pytest.approx(2.0)
        assert res.method == "exact"

    @pytest.mark.parametrize("n_subjects", [4, 6, 8, 10])
    def test_matches_brute_force(self, n_subjects):
        for seed in range(8):
            d = _random_distances(n_subjects, 100 * n_subjects + seed)
            res = match_exact(d)
            want = brute_force_matching_cost(d.values)
            assert res.cost == pytest.approx(want, rel=1e-12)

    def test_lexicographic_tie_break(self):
        d = DistanceMatrix(np.zeros((6, 6)))
        res = match_exact(d)
        assert res.pairing.pairs() == [(0, 1), (2, 3), (4, 5)]

    def test_integer_tie_prefers_smallest_partner(self):
        # both pairings cost 2; (0,1),(2,3) is lexicographically first
        d = np.array(
            [
                [0.0, 1.0, 1.0, 9.0],
                [1.0, 0.0, 9.0, 1.0],
                [1.0, 9.0, 0.0, 1.0],
                [9.0, 1.0, 1.0, 0.0],
            ]
        )
        res = match_exact(DistanceMatrix(d))
        assert res.pairing.pairs() == [(0, 1), (2, 3)]

    def test_capacity_error_directs_to_heuristic(self):
        d = _random_distances(EXACT_CAPACITY + 2, 1)
        with pytest.raises(CapacityError, match="match_heuristic"):
            match_exact(d)


class TestMatchHeuristic:
    def test_never_better_than_exact_and_close(self):
        for seed in range(20):
            d = _random_distances(8, 300 + seed)
            exact = match_exact(d).cost
            heur = match_heuristic(d).cost
            assert heur >= exact - 1e-12
            assert heur <= 1.2 * exact + 1e-12

    def test_local_optimum_no_improving_exchange(self):
        d = _random_distances(20, 4)
        res = match_heuristic(d)
        pairs = res.pairing.pairs()
        dist = d.values
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                i1, j1 = pairs[a]
                i2, j2 = pairs[b]
                now = dist[i1, j1] + dist[i2, j2]
                assert dist[i1, i2] + dist[j1, j2] >= now - 1e-9
                assert dist[i1, j2] + dist[j1, i2] >= now - 1e-9

    def test_deterministic(self):
        d = _random_distances(30, 5)
        r1 = match_heuristic(d)
        r2 = match_heuristic(d)
        assert r1.pairing.pairs() == r2.pairing.pairs()
        assert r1.cost == r2.cost

    def test_cost_is_sum_over_pairs(self):
        d = _random_distances(12, 6)
        res = match_heuristic(d)
        total = sum(d.values[i, j] for i, j in res.pairing.pairs())
        assert res.cost == pytest.approx(total, rel=1e-12)


class TestMatchGrid:
    def test_interval_count_rule(self):
        # n=16, p=1 -> m = 4; ranks split into 4 intervals of 8
        x = CovariateMatrix(np.arange(32.0)[:, None])
        res = match_grid(x, substream(0, "grid"))
        pairs = res.pairing.pairs()
        assert len(pairs) == 16
        # members of a pair always share the rank interval of width 8
        for a, b in pairs:
            assert a // 8 == b // 8

    def test_all_subjects_paired_once(self):
        rng = np.random.default_rng(7)
        x = CovariateMatrix(rng.normal(size=(40, 3)))
        res = match_grid(x, substream(1, "grid"))
        seen = sorted(i for p in res.pairing.pairs() for i in p)
        assert seen == list(range(40))

    def test_odd_groups_spill_to_overflow(self):
        # 3 distinct values with odd multiplicities still pair everyone
        vals = np.array([0.0] * 5 + [10.0] * 5 + [20.0] * 6)[:, None]
        x = CovariateMatrix(vals)
        res = match_grid(x, substream(2, "grid"))
        assert len(res.pairing.pairs()) == 8

    def test_deterministic_given_stream(self):
        rng = np.random.default_rng(9)
        x = CovariateMatrix(rng.normal(size=(24, 2)))
        r1 = match_grid(x, substream(3, "grid"))
        r2 = match_grid(x, substream(3, "grid"))
        assert r1.pairing.pairs() == r2.pairing.pairs()

    def test_gap_diagnostic_shrinks_with_n(self):
        model = default_model("continuous", 1)
        diags = []
        for n_subjects in (32, 512):
            vals = []
            for seed in range(5):
                rng = substream(20, "diag", n_subjects, seed)
                x = CovariateMatrix(rng.uniform(-1, 1, (n_subjects, 1)))
                res = match_grid(x, substream(21, "diag", n_subjects, seed))
                mu_t, mu_c = potential_means(model, x)
                vals.append(pair_gap_diagnostic(res.pairing, mu_t + mu_c))
            diags.append(np.mean(vals))
        assert diags[1] < diags[0]


class TestCostOrdering:
    def test_exact_heuristic_grid_chain(self):
        # the three matchers never improve on the one to their left
        for seed in range(12):
            rng = substream(33, "chain", seed)
            x = CovariateMatrix(rng.normal(0.0, 1.0, (12, 2)))
            d = mahalanobis_distances(x)
            exact = match_exact(d)
            heur = match_heuristic(d)
            grid = match_grid(x, substream(33, "chain-grid", seed))
            grid_cost = sum(d.values[a, b] for a, b in grid.pairing.pairs())
            assert exact.cost <= heur.cost + 1e-12
            assert heur.cost <= grid_cost + 1e-12


class TestPairGapDiagnostic:
    def test_hand_example(self):
        pairing = Blocking.from_pairs([(0, 1), (2, 3)])
        assert pair_gap_diagnostic(pairing, [0.0, 1.0, 5.0, 5.0]) == pytest.approx(0.5)

    def test_zero_for_duplicate_pairs(self):
        pairing = Blocking.from_pairs([(0, 1), (2, 3)])
        assert pair_gap_diagnostic(pairing, [3.0, 3.0, 7.0, 7.0]) == 0.0

    def test_length_mismatch_rejected(self):
        pairing = Blocking.from_pairs([(0, 1), (2, 3)])
        with pytest.raises(ValueError):
            pair_gap_diagnostic(pairing, [1.0, 2.0])
