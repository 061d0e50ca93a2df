import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twoarm.core import (
    Allocation,
    Blocking,
    CovariateMatrix,
    DesignCovariance,
    OutcomePair,
    estimand,
    estimate,
    residual_variance_mean,
    squared_error,
)

from util_oracles import balanced_allocations


class TestCovariateMatrix:
    def test_basic_properties(self):
        x = CovariateMatrix([[0.0, 1.0], [1.0, 3.0], [2.0, 5.0], [3.0, 7.0]])
        assert x.n_subjects == 4
        assert x.n_covariates == 2
        assert x.n_pairs == 2
        np.testing.assert_array_equal(x.column_ranges(), [3.0, 6.0])

    def test_rejects_odd_or_tiny_row_counts(self):
        with pytest.raises(ValueError):
            CovariateMatrix(np.zeros((5, 1)))
        with pytest.raises(ValueError):
            CovariateMatrix(np.zeros((2, 1)))

    def test_rejects_non_finite(self):
        vals = np.zeros((4, 1))
        vals[2, 0] = np.inf
        with pytest.raises(ValueError):
            CovariateMatrix(vals)

    def test_rejects_wrong_ndim(self):
        with pytest.raises(ValueError):
            CovariateMatrix(np.zeros(4))

    def test_values_are_immutable_copies(self):
        raw = np.zeros((4, 1))
        x = CovariateMatrix(raw)
        raw[0, 0] = 9.0
        assert x.values[0, 0] == 0.0
        with pytest.raises(ValueError):
            x.values[0, 0] = 1.0


class TestAllocation:
    def test_rejects_unbalanced(self):
        with pytest.raises(ValueError):
            Allocation([1, 1, 1, -1])

    def test_rejects_bad_entries(self):
        with pytest.raises(ValueError):
            Allocation([1, 0, -1, 1])

    def test_rejects_odd_length(self):
        with pytest.raises(ValueError):
            Allocation([1, -1, 1])

    def test_mirror(self):
        w = Allocation([1, -1, -1, 1])
        np.testing.assert_array_equal(w.mirror().signs, [-1, 1, 1, -1])


class TestBlocking:
    def test_single(self):
        b = Blocking.single(6)
        assert b.n_blocks == 1
        assert b.block_size == 6

    def test_from_pairs_roundtrip(self):
        b = Blocking.from_pairs([(0, 3), (1, 2)])
        assert b.is_pairing
        assert b.pairs() == [(0, 3), (1, 2)]

    def test_from_pairs_rejects_reuse(self):
        with pytest.raises(ValueError):
            Blocking.from_pairs([(0, 1), (1, 2)])

    def test_rejects_uneven_blocks(self):
        with pytest.raises(ValueError):
            Blocking([0, 0, 0, 1])

    def test_rejects_odd_block_size(self):
        with pytest.raises(ValueError):
            Blocking([0, 0, 0, 1, 1, 1])

    def test_rejects_gapped_ids(self):
        with pytest.raises(ValueError):
            Blocking([0, 0, 2, 2])

    def test_blocks_listing(self):
        b = Blocking([1, 0, 1, 0])
        got = [list(g) for g in b.blocks()]
        assert got == [[1, 3], [0, 2]]

    def test_pairs_requires_size_two(self):
        with pytest.raises(ValueError):
            Blocking.single(4).pairs()


class TestOutcomePair:
    def test_deterministic_constructor(self):
        out = OutcomePair.deterministic([1.0, 2.0], [0.0, 1.0])
        np.testing.assert_array_equal(out.mu_t, out.y_t)
        np.testing.assert_array_equal(out.rho, [0.0, 0.0])
        np.testing.assert_array_equal(out.mu_sum, [1.0, 3.0])

    def test_rejects_negative_rho(self):
        with pytest.raises(ValueError):
            OutcomePair([1.0], [0.0], [1.0], [0.0], [-0.5])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            OutcomePair([1.0, 2.0], [0.0], [1.0, 2.0], [0.0, 0.0], [0.0, 0.0])


class TestDesignCovariance:
    def test_rejects_asymmetric(self):
        m = np.eye(4)
        m[0, 1] = 0.5
        with pytest.raises(ValueError):
            DesignCovariance(m)

    def test_rejects_non_unit_diagonal(self):
        with pytest.raises(ValueError):
            DesignCovariance(0.5 * np.eye(4))

    def test_quadratic_form(self):
        cov = DesignCovariance(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        assert cov.quadratic_form([2.0, -1.0]) == pytest.approx(9.0)


class TestEstimatorAlgebra:
    def test_estimate_example(self):
        out = OutcomePair.deterministic([3.0, 5.0], [1.0, 2.0])
        assert estimate(Allocation([1, -1]), out) == pytest.approx(1.0)

    def test_estimand_example(self):
        out = OutcomePair.deterministic([3.0, 5.0], [1.0, 2.0])
        assert estimand(out) == pytest.approx(2.5)

    def test_squared_error_example(self):
        out = OutcomePair.deterministic([3.0, 5.0], [1.0, 2.0])
        assert squared_error(Allocation([1, -1]), out) == pytest.approx(2.25)

    def test_estimate_group_sum_form(self):
        rng = np.random.default_rng(5)
        out = OutcomePair.deterministic(rng.normal(size=6), rng.normal(size=6))
        w = Allocation([1, 1, -1, -1, 1, -1])
        manual = out.y_t[[0, 1, 4]].mean() - out.y_c[[2, 3, 5]].mean()
        assert estimate(w, out) == pytest.approx(manual, rel=1e-12)

    def test_length_mismatch_rejected(self):
        out = OutcomePair.deterministic([1.0, 2.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            estimate(Allocation([1, -1, 1, -1]), out)

    def test_residual_variance_mean(self):
        assert residual_variance_mean([1.0, 3.0]) == pytest.approx(2.0)
        with pytest.raises(ValueError):
            residual_variance_mean([])
        with pytest.raises(ValueError):
            residual_variance_mean([-1.0])


@st.composite
def outcome_and_allocation(draw):
    n = draw(st.integers(min_value=1, max_value=4))
    finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
    y_t = draw(st.lists(finite, min_size=2 * n, max_size=2 * n))
    y_c = draw(st.lists(finite, min_size=2 * n, max_size=2 * n))
    signs = draw(st.permutations([1] * n + [-1] * n))
    return OutcomePair.deterministic(y_t, y_c), Allocation(list(signs))


@given(outcome_and_allocation())
@settings(max_examples=200, deadline=None)
def test_squared_error_matches_direct_path(case):
    out, w = case
    direct = (estimate(w, out) - estimand(out)) ** 2
    quad = squared_error(w, out)
    assert quad == pytest.approx(direct, rel=1e-9, abs=1e-9)


@given(outcome_and_allocation())
@settings(max_examples=200, deadline=None)
def test_mirror_allocations_average_to_estimand(case):
    out, w = case
    avg = 0.5 * (estimate(w, out) + estimate(w.mirror(), out))
    assert avg == pytest.approx(estimand(out), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("n_subjects", [4, 6, 8])
def test_enumeration_average_is_estimand(n_subjects):
    rng = np.random.default_rng(n_subjects)
    out = OutcomePair.deterministic(
        rng.normal(size=n_subjects), rng.normal(size=n_subjects)
    )
    ests = [
        estimate(Allocation(w.astype(int)), out)
        for w in balanced_allocations(n_subjects)
    ]
    assert np.mean(ests) == pytest.approx(estimand(out), rel=1e-12, abs=1e-12)
