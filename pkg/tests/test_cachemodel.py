import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefcache.cachemodel import (
    AccessProbabilities,
    CostParams,
    HetPlacement,
    HomPlacement,
    average_cost_het,
    average_cost_het_direct,
    average_cost_hom,
    average_cost_hom_direct,
    content_cost,
    cost_violations,
    het_access_probs,
    het_tier_matrices,
    hom_access_probs,
    hom_tier_vectors,
    validate_cost_params,
)
from prefcache.core import TopologyConfig, build_topology

COSTS = CostParams(
    storage_cost=2000.0,
    comm_costs={"d2d": 100.0, "serving_bs": 500.0, "cluster_bs": 1000.0, "cloud": 5000.0},
)


def topo_of(num_bs, users_per_bs, num_contents, c_b=None, c_d=None):
    c_b = num_contents if c_b is None else c_b
    c_d = num_contents if c_d is None else c_d
    return build_topology(TopologyConfig(num_bs, users_per_bs, num_contents, c_b, c_d))


def random_placement(gen, topo):
    """Random feasible placement: scale rows down to their capacity budget."""
    a = gen.random((topo.num_users, topo.num_contents))
    eta = gen.random((topo.num_bs, topo.num_contents))
    a_sum = a.sum(axis=1, keepdims=True)
    a *= np.minimum(1.0, topo.user_capacity / np.maximum(a_sum, 1e-12))
    e_sum = eta.sum(axis=1, keepdims=True)
    eta *= np.minimum(1.0, topo.bs_capacity / np.maximum(e_sum, 1e-12))
    return HetPlacement(a, eta, topo.user_capacity, topo.bs_capacity)


def normalized_rho(gen, num_users, num_contents):
    rho = gen.random((num_users, num_contents))
    return rho / rho.sum(axis=1, keepdims=True)


class TestCostParams:
    def test_desk_scale_constants_are_valid(self):
        assert validate_cost_params(COSTS) == []
        assert COSTS.phi_d2d == 2100.0
        assert COSTS.phi_cloud == 7000.0

    def test_equal_d2d_and_serving_is_named_violation(self):
        bad = CostParams(
            2000.0,
            {"d2d": 500.0, "serving_bs": 500.0, "cluster_bs": 1000.0, "cloud": 5000.0},
            strict=False,
        )
        report = validate_cost_params(bad)
        assert any("d2d not cheaper than serving BS" in v for v in report)
        with pytest.raises(ValueError):
            CostParams(2000.0, dict(bad.comm_costs))

    def test_derivation_consistency(self):
        comm = {"d2d": 16.0, "serving_bs": 500.0, "cluster_bs": 1000.0, "cloud": 5000.0}
        assert cost_violations(0.0, comm, content_size=8.0, d2d_rate=1.0, d2d_distance=2.0) == []
        report = cost_violations(0.0, comm, content_size=8.0, d2d_rate=1.0, d2d_distance=3.0)
        assert any("size*rate*distance" in v for v in report)

    def test_negative_costs_rejected(self):
        report = cost_violations(-1.0, {"d2d": 1.0, "serving_bs": 2.0, "cluster_bs": 3.0, "cloud": 4.0})
        assert any("negative storage" in v for v in report)

    def test_missing_tier(self):
        assert cost_violations(0.0, {"d2d": 1.0}) != []


class TestHetAccessProbs:
    def test_certain_self_hit(self):
        topo = topo_of(2, 2, 1)
        a = np.array([[1.0], [0.3], [0.2], [0.9]])
        eta = np.array([[0.5], [0.7]])
        p = het_access_probs(HetPlacement(a, eta, 1, 1), topo, 0, 0)
        assert (p.p_own, p.p_d2d, p.p_serving_bs, p.p_cluster_bs, p.p_cloud) == (1, 0, 0, 0, 0)

    def test_empty_caches_miss_to_cloud(self):
        topo = topo_of(2, 2, 3)
        p = het_access_probs(HetPlacement(np.zeros((4, 3)), np.zeros((2, 3)), 3, 3), topo, 1, 2)
        assert p.p_cloud == 1.0 and p.p_local == 0.0

    def test_half_probability_hand_case(self):
        topo = topo_of(2, 2, 1)
        p = het_access_probs(HetPlacement(np.full((4, 1), 0.5), np.full((2, 1), 0.5), 1, 1), topo, 0, 0)
        assert (p.p_own, p.p_d2d, p.p_serving_bs, p.p_cluster_bs, p.p_cloud) == (
            0.5,
            0.25,
            0.125,
            0.0625,
            0.0625,
        )

    def test_index_errors(self):
        topo = topo_of(1, 1, 1)
        placement = HetPlacement(np.zeros((1, 1)), np.zeros((1, 1)), 1, 1)
        with pytest.raises(IndexError):
            het_access_probs(placement, topo, 1, 0)
        with pytest.raises(IndexError):
            het_access_probs(placement, topo, 0, 1)

    @given(st.integers(0, 10**6))
    @settings(max_examples=60)
    def test_simplex_and_matrix_agreement(self, seed):
        gen = np.random.default_rng(seed)
        topo = topo_of(int(gen.integers(1, 4)), int(gen.integers(1, 4)), int(gen.integers(1, 5)))
        placement = random_placement(gen, topo)
        tiers = het_tier_matrices(placement, topo)
        total = tiers.own + tiers.d2d + tiers.serving_bs + tiers.cluster_bs + tiers.cloud
        assert np.abs(total - 1.0).max() <= 1e-12
        u = int(gen.integers(0, topo.num_users))
        k = int(gen.integers(0, topo.num_contents))
        p = het_access_probs(placement, topo, u, k)
        assert p.p_own == pytest.approx(tiers.own[u, k], abs=1e-12)
        assert p.p_d2d == pytest.approx(tiers.d2d[u, k], abs=1e-12)
        assert p.p_serving_bs == pytest.approx(tiers.serving_bs[u, k], abs=1e-12)
        assert p.p_cluster_bs == pytest.approx(tiers.cluster_bs[u, k], abs=1e-12)
        assert p.p_cloud == pytest.approx(tiers.cloud[u, k], abs=1e-12)

    @given(st.integers(0, 10**6))
    @settings(max_examples=40)
    def test_monotonicity_in_own_probability(self, seed):
        # raising one user probability weakly raises local availability and
        # weakly lowers the cloud miss
        gen = np.random.default_rng(seed)
        topo = topo_of(2, 2, 2, c_b=2, c_d=2)
        base = gen.random((4, 2)) * 0.4
        eta = gen.random((2, 2)) * 0.5
        u, k = int(gen.integers(0, 4)), int(gen.integers(0, 2))
        bumped = base.copy()
        bumped[u, k] = min(1.0, bumped[u, k] + 0.3)
        lo = het_tier_matrices(HetPlacement(base, eta, 2, 2), topo)
        hi = het_tier_matrices(HetPlacement(bumped, eta, 2, 2), topo)
        assert ((hi.own + hi.d2d) - (lo.own + lo.d2d)).min() >= -1e-12
        assert (hi.cloud - lo.cloud).max() <= 1e-12


class TestHomAccessProbs:
    def test_empty_caches(self):
        p = hom_access_probs(HomPlacement(np.zeros(2), np.zeros(2), 2, 2), 3, 2, 0)
        assert p.p_cloud == 1.0

    def test_degenerate_hierarchy(self):
        placement = HomPlacement(np.array([0.4]), np.array([0.6]), 1, 1)
        p = hom_access_probs(placement, 1, 1, 0)
        assert p.p_own == pytest.approx(0.4)
        assert p.p_d2d == 0.0
        assert p.p_serving_bs == pytest.approx(0.6 * 0.6)
        assert p.p_cluster_bs == 0.0
        assert p.p_cloud == pytest.approx(0.6 * 0.4)

    def test_matches_het_with_equal_entries(self):
        topo = topo_of(2, 2, 1)
        het = het_access_probs(
            HetPlacement(np.full((4, 1), 0.5), np.full((2, 1), 0.5), 1, 1), topo, 0, 0
        )
        hom = hom_access_probs(HomPlacement(np.array([0.5]), np.array([0.5]), 1, 1), 2, 2, 0)
        assert het == hom

    @given(
        a=st.floats(0.0, 1.0),
        eta=st.floats(0.0, 1.0),
        users_per_cell=st.integers(1, 4),
        num_bs=st.integers(1, 3),
    )
    @settings(max_examples=60)
    def test_equivalence_property(self, a, eta, users_per_cell, num_bs):
        topo = topo_of(num_bs, users_per_cell, 1)
        num_users = num_bs * users_per_cell
        het = het_access_probs(
            HetPlacement(np.full((num_users, 1), a), np.full((num_bs, 1), eta), 1, 1),
            topo,
            0,
            0,
        )
        hom = hom_access_probs(HomPlacement(np.array([a]), np.array([eta]), 1, 1), users_per_cell, num_bs, 0)
        for field in ("p_own", "p_d2d", "p_serving_bs", "p_cluster_bs", "p_cloud"):
            assert getattr(het, field) == pytest.approx(getattr(hom, field), abs=1e-12)


class TestContentCost:
    def test_self_hit_costs_storage_only(self):
        p = AccessProbabilities(1, 0, 0, 0, 1, 0)
        assert content_cost(p, COSTS) == 2000.0

    def test_cloud_miss(self):
        p = AccessProbabilities(0, 0, 0, 0, 0, 1)
        assert content_cost(p, COSTS) == 7000.0

    def test_dot_product_oracle(self):
        p = AccessProbabilities(0.5, 0.25, 0.125, 0.0625, 1 - 0.0625, 0.0625)
        expected = float(
            np.dot([0.5, 0.25, 0.125, 0.0625, 0.0625], [2000.0, 2100.0, 2500.0, 3000.0, 7000.0])
        )
        assert content_cost(p, COSTS) == pytest.approx(expected)
        assert expected == 2462.5


class TestAverageCosts:
    def test_empty_caches_cost_cloud(self):
        topo = topo_of(2, 2, 3, c_b=2, c_d=1)
        rho = normalized_rho(np.random.default_rng(0), 4, 3)
        placement = HetPlacement(np.zeros((4, 3)), np.zeros((2, 3)), 1, 2)
        assert average_cost_het(placement, rho, topo, COSTS) == COSTS.phi_cloud

    def test_full_caches_cost_storage(self):
        topo = topo_of(2, 2, 3)
        rho = np.array([[0.5, 0.25, 0.25]] * 4)  # dyadic rows sum to 1 exactly
        placement = HetPlacement(np.ones((4, 3)), np.ones((2, 3)), 3, 3)
        assert average_cost_het(placement, rho, topo, COSTS) == COSTS.storage_cost

    def test_hom_boundaries(self):
        topo = topo_of(2, 2, 2)
        rho = np.array([[0.5, 0.5]] * 4)
        empty = HomPlacement(np.zeros(2), np.zeros(2), 2, 2)
        full = HomPlacement(np.ones(2), np.ones(2), 2, 2)
        assert average_cost_hom(empty, rho, topo, COSTS) == COSTS.phi_cloud
        assert average_cost_hom(full, rho, topo, COSTS) == COSTS.storage_cost

    def test_expanded_equals_direct_small_instance(self):
        topo = topo_of(2, 2, 3, c_b=2, c_d=1)
        gen = np.random.default_rng(42)
        placement = random_placement(gen, topo)
        rho = normalized_rho(gen, 4, 3)
        expanded = average_cost_het(placement, rho, topo, COSTS)
        direct = average_cost_het_direct(placement, rho, topo, COSTS)
        assert expanded == pytest.approx(direct, rel=1e-12)

    @given(st.integers(0, 10**6))
    @settings(max_examples=60)
    def test_expanded_equals_direct_random(self, seed):
        gen = np.random.default_rng(seed)
        topo = topo_of(int(gen.integers(1, 4)), int(gen.integers(1, 4)), int(gen.integers(1, 6)))
        placement = random_placement(gen, topo)
        rho = normalized_rho(gen, topo.num_users, topo.num_contents)
        expanded = average_cost_het(placement, rho, topo, COSTS)
        direct = average_cost_het_direct(placement, rho, topo, COSTS)
        assert expanded == pytest.approx(direct, rel=1e-9)

    @given(st.integers(0, 10**6))
    @settings(max_examples=60)
    def test_hom_expanded_equals_direct_and_het(self, seed):
        gen = np.random.default_rng(seed)
        num_bs = int(gen.integers(1, 4))
        users_per_bs = int(gen.integers(1, 4))
        num_contents = int(gen.integers(1, 6))
        topo = topo_of(num_bs, users_per_bs, num_contents)
        a = gen.random(num_contents) * min(1.0, num_contents / max(num_contents, 1))
        eta = gen.random(num_contents)
        hom = HomPlacement(a, eta, num_contents, num_contents)
        rho = normalized_rho(gen, topo.num_users, num_contents)
        expanded = average_cost_hom(hom, rho, topo, COSTS)
        direct = average_cost_hom_direct(hom, rho, topo, COSTS)
        assert expanded == pytest.approx(direct, rel=1e-9)
        het = HetPlacement(
            np.tile(a, (topo.num_users, 1)),
            np.tile(eta, (num_bs, 1)),
            num_contents,
            num_contents,
        )
        assert average_cost_het(het, rho, topo, COSTS) == pytest.approx(expanded, rel=1e-12)


class TestPlacementValidation:
    def test_capacity_violation_rejected(self):
        with pytest.raises(ValueError):
            HetPlacement(np.ones((2, 3)), np.zeros((1, 3)), 2, 1)

    def test_probability_range_enforced(self):
        with pytest.raises(ValueError):
            HetPlacement(np.array([[1.5]]), np.zeros((1, 1)), 1, 1)
        with pytest.raises(ValueError):
            HomPlacement(np.array([-0.2]), np.zeros(1), 1, 1)

    def test_access_probabilities_validated(self):
        with pytest.raises(ValueError):
            AccessProbabilities(0.9, 0.9, 0, 0, 1, 0)
