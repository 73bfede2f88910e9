from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as npst

from prefcache.core import RequestMatrix
from prefcache.preference import (
    aggregate_preference,
    global_popularity,
    profile_from_counts,
    profile_from_slot,
)

count_matrices = npst.arrays(
    dtype=np.int64,
    shape=st.tuples(st.integers(1, 5), st.integers(1, 6)),
    elements=st.integers(0, 20),
)


class TestProfileFromSlot:
    def test_hand_case(self):
        p = profile_from_counts([[1, 2], [3, 4]])
        assert p.activity == pytest.approx([0.3, 0.7])
        assert p.conditional == pytest.approx(np.array([[1 / 3, 2 / 3], [3 / 7, 4 / 7]]))
        assert p.joint == pytest.approx(np.array([[0.1, 0.2], [0.3, 0.4]]))

    def test_lone_requester(self):
        p = profile_from_counts([[4, 1, 0]])
        assert p.activity.tolist() == [1.0]

    def test_zero_request_user_gets_zero_rows(self):
        p = profile_from_counts([[2, 1], [0, 0]])
        assert not p.conditional[1].any()
        assert not p.joint[1].any()
        assert p.activity[1] == 0.0

    def test_empty_slot_is_distinguished(self):
        p = profile_from_counts(np.zeros((3, 2)))
        assert p.is_empty
        assert not p.joint.any()

    def test_slot_index_recorded(self):
        m = RequestMatrix(np.ones((2, 1, 1), dtype=int))
        assert profile_from_slot(m, 1).slot == 1
        with pytest.raises(IndexError):
            profile_from_slot(m, 2)

    @given(count_matrices)
    @settings(max_examples=60)
    def test_joint_matches_exact_rational_identity(self, counts):
        # oracle: build activity/conditional/joint with exact Fractions and
        # verify the cross-multiplied identity joint * q == counts exactly
        p = profile_from_counts(counts)
        q = int(counts.sum())
        if q == 0:
            assert p.is_empty
            return
        for i in range(counts.shape[0]):
            n_u = int(counts[i].sum())
            for k in range(counts.shape[1]):
                if n_u == 0:
                    assert p.joint[i, k] == 0.0
                    continue
                exact = Fraction(int(counts[i, k]), n_u) * Fraction(n_u, q)
                assert exact * q == counts[i, k]  # exact integer cross-multiplication
                assert p.joint[i, k] == pytest.approx(float(exact), rel=1e-15, abs=1e-300)

    @given(count_matrices)
    @settings(max_examples=60)
    def test_probability_mass_invariants(self, counts):
        p = profile_from_counts(counts)
        if p.is_empty:
            return
        assert abs(p.joint.sum() - 1.0) <= 1e-12
        assert abs(p.activity.sum() - 1.0) <= 1e-12
        for i in range(counts.shape[0]):
            if counts[i].sum() > 0:
                assert abs(p.conditional[i].sum() - 1.0) <= 1e-12


class TestGlobalPopularity:
    def test_column_sums(self):
        p = profile_from_counts([[1, 2], [3, 4]])
        assert global_popularity(p) == pytest.approx([0.4, 0.6])

    def test_single_user_collapses_to_conditional(self):
        p = profile_from_counts([[2, 6, 2]])
        assert global_popularity(p) == pytest.approx(p.conditional[0])

    def test_empty_slot(self):
        p = profile_from_counts(np.zeros((2, 3)))
        assert not global_popularity(p).any()

    @given(count_matrices)
    @settings(max_examples=40)
    def test_sums_to_one_when_nonempty(self, counts):
        p = profile_from_counts(counts)
        if not p.is_empty:
            assert abs(global_popularity(p).sum() - 1.0) <= 1e-12


class TestAggregatePreference:
    def test_single_slot_is_row_normalized_joint(self):
        p = profile_from_counts([[1, 3], [2, 2]], slot=5)
        agg = aggregate_preference([p])
        expect = p.joint / p.joint.sum(axis=1, keepdims=True)
        assert agg.rho == pytest.approx(expect)
        assert agg.horizon == 1
        assert agg.start_slot == 5

    def test_identical_slots_idempotent(self):
        p = profile_from_counts([[1, 3], [2, 2]])
        single = aggregate_preference([p]).rho
        triple = aggregate_preference([p, p, p]).rho
        assert triple == pytest.approx(single)

    def test_mean_then_normalize_oracle(self):
        p1 = profile_from_counts([[4, 0], [1, 1]])
        p2 = profile_from_counts([[0, 2], [3, 1]])
        agg = aggregate_preference([p1, p2])
        raw = (p1.joint + p2.joint) / 2
        for i in range(2):
            assert agg.rho[i] == pytest.approx(raw[i] / raw[i].sum())
        assert agg.rho_raw == pytest.approx(raw)

    def test_zero_rows_stay_zero(self):
        p = profile_from_counts([[0, 0], [1, 1]])
        agg = aggregate_preference([p, p])
        assert not agg.rho[0].any()
        assert abs(agg.rho[1].sum() - 1.0) <= 1e-12

    def test_permutation_invariance(self):
        gen = np.random.default_rng(3)
        profiles = [profile_from_counts(gen.integers(0, 9, (3, 4)), slot=t) for t in range(6)]
        a = aggregate_preference(profiles)
        b = aggregate_preference(profiles[::-1])
        assert np.allclose(a.rho, b.rho, atol=1e-12)
        assert a.start_slot == b.start_slot

    def test_rejects_empty_and_inconsistent(self):
        with pytest.raises(ValueError):
            aggregate_preference([])
        p1 = profile_from_counts([[1]])
        p2 = profile_from_counts([[1, 2]])
        with pytest.raises(ValueError):
            aggregate_preference([p1, p2])

    @given(st.lists(count_matrices, min_size=1, max_size=4))
    @settings(max_examples=30)
    def test_rows_sum_to_one_or_zero(self, matrices):
        shape = matrices[0].shape
        profiles = [profile_from_counts(np.resize(m, shape)) for m in matrices]
        agg = aggregate_preference(profiles)
        sums = agg.rho.sum(axis=1)
        assert ((np.abs(sums - 1.0) <= 1e-12) | (sums == 0.0)).all()
