"""Probabilistic caching math for the tiered lookup hierarchy.

A request is served by the first tier that holds the content: the user's own
cache, a D2D neighbor in the same cell, the serving BS, another BS of the
cluster, and finally the cloud.  Given independent per-node caching
probabilities, the five tiers partition unity; weighting each tier's
probability with its retrieval cost and averaging over users with their
long-term preference weights gives the cluster cost of a placement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .core import Topology

__all__ = [
    "TIERS",
    "CostParams",
    "validate_cost_params",
    "cost_violations",
    "HetPlacement",
    "HomPlacement",
    "AccessProbabilities",
    "het_access_probs",
    "hom_access_probs",
    "het_tier_matrices",
    "hom_tier_vectors",
    "content_cost",
    "average_cost_het",
    "average_cost_het_direct",
    "average_cost_hom",
    "average_cost_hom_direct",
]

# Communication-cost tiers, nearest to farthest.
TIERS = ("d2d", "serving_bs", "cluster_bs", "cloud")

_PROB_TOL = 1e-12


def cost_violations(
    storage_cost: float,
    comm_costs: Mapping[str, float],
    content_size: float | None = None,
    d2d_rate: float | None = None,
    d2d_distance: float | None = None,
) -> list[str]:
    """Structured report of broken cost constraints (empty list = ok).

    Retrieval costs phi_* = comm + storage must be strictly ordered
    cloud > cluster BS > serving BS > D2D, all costs non-negative, and the
    D2D communication cost must match size * rate * distance when those
    derivation inputs are given.
    """
    out: list[str] = []
    missing = set(TIERS) - set(comm_costs)
    if missing:
        return [f"missing communication costs for tiers: {sorted(missing)}"]
    if storage_cost < 0:
        out.append(f"negative storage cost {storage_cost}")
    for tier in TIERS:
        if comm_costs[tier] < 0:
            out.append(f"negative communication cost for {tier}")
    phi = {tier: comm_costs[tier] + storage_cost for tier in TIERS}
    if not phi["cloud"] > phi["cluster_bs"]:
        out.append(
            f"cluster BS not cheaper than cloud (phi_cluster_bs={phi['cluster_bs']} >= phi_cloud={phi['cloud']})"
        )
    if not phi["cluster_bs"] > phi["serving_bs"]:
        out.append(
            f"serving BS not cheaper than cluster BS (phi_serving_bs={phi['serving_bs']} >= phi_cluster_bs={phi['cluster_bs']})"
        )
    if not phi["serving_bs"] > phi["d2d"]:
        out.append(
            f"d2d not cheaper than serving BS (phi_d2d={phi['d2d']} >= phi_serving_bs={phi['serving_bs']})"
        )
    inputs = (content_size, d2d_rate, d2d_distance)
    if all(v is not None for v in inputs):
        derived = content_size * d2d_rate * d2d_distance
        if not math.isclose(derived, comm_costs["d2d"], rel_tol=1e-9, abs_tol=1e-9):
            out.append(
                f"d2d communication cost {comm_costs['d2d']} != size*rate*distance = {derived}"
            )
    return out


@dataclass(frozen=True)
class CostParams:
    """Storage cost plus per-tier communication costs.

    phi(tier) = communication + storage is the full retrieval cost from that
    tier; a self-cache hit pays the storage cost only.  Constructing an
    instance validates the tier ordering unless strict=False.
    """

    storage_cost: float
    comm_costs: Mapping[str, float]
    content_size: float | None = None
    d2d_rate: float | None = None
    d2d_distance: float | None = None
    strict: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "comm_costs", dict(self.comm_costs))
        violations = cost_violations(
            self.storage_cost,
            self.comm_costs,
            self.content_size,
            self.d2d_rate,
            self.d2d_distance,
        )
        if self.strict and violations:
            raise ValueError("invalid cost parameters: " + "; ".join(violations))

    def phi(self, tier: str) -> float:
        return self.comm_costs[tier] + self.storage_cost

    @property
    def phi_d2d(self) -> float:
        return self.phi("d2d")

    @property
    def phi_serving_bs(self) -> float:
        return self.phi("serving_bs")

    @property
    def phi_cluster_bs(self) -> float:
        return self.phi("cluster_bs")

    @property
    def phi_cloud(self) -> float:
        return self.phi("cloud")


def validate_cost_params(costs: CostParams) -> list[str]:
    """Re-run the constraint report on an existing instance."""
    return cost_violations(
        costs.storage_cost,
        costs.comm_costs,
        costs.content_size,
        costs.d2d_rate,
        costs.d2d_distance,
    )


def _check_prob_array(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.size and (arr.min() < -_PROB_TOL or arr.max() > 1 + _PROB_TOL):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    arr = np.clip(arr, 0.0, 1.0)
    arr.setflags(write=False)
    return arr


def _check_capacity(name: str, row_sums: np.ndarray, capacity: float) -> None:
    tol = 1e-9 * max(1.0, capacity)
    if row_sums.size and row_sums.max() > capacity + tol:
        raise ValueError(f"{name} row sum {row_sums.max()} exceeds capacity {capacity}")


@dataclass(frozen=True)
class HetPlacement:
    """Per-node caching probabilities: users (U, F) and BSs (B, F).

    Row sums are capped by the node capacities (hard constraints, validated
    at construction).
    """

    user_probs: np.ndarray
    bs_probs: np.ndarray
    user_capacity: float
    bs_capacity: float

    def __post_init__(self):
        object.__setattr__(self, "user_probs", _check_prob_array("user_probs", self.user_probs))
        object.__setattr__(self, "bs_probs", _check_prob_array("bs_probs", self.bs_probs))
        if self.user_probs.ndim != 2 or self.bs_probs.ndim != 2:
            raise ValueError("placement probabilities must be 2-d")
        if self.user_probs.shape[1] != self.bs_probs.shape[1]:
            raise ValueError("user and BS probability matrices disagree on catalog size")
        _check_capacity("user_probs", self.user_probs.sum(axis=1), self.user_capacity)
        _check_capacity("bs_probs", self.bs_probs.sum(axis=1), self.bs_capacity)

    @property
    def num_users(self) -> int:
        return self.user_probs.shape[0]

    @property
    def num_bs(self) -> int:
        return self.bs_probs.shape[0]

    @property
    def num_contents(self) -> int:
        return self.user_probs.shape[1]


@dataclass(frozen=True)
class HomPlacement:
    """Tier-uniform caching probabilities: one (F,) vector per tier."""

    user_probs: np.ndarray
    bs_probs: np.ndarray
    user_capacity: float
    bs_capacity: float

    def __post_init__(self):
        object.__setattr__(self, "user_probs", _check_prob_array("user_probs", self.user_probs))
        object.__setattr__(self, "bs_probs", _check_prob_array("bs_probs", self.bs_probs))
        if self.user_probs.ndim != 1 or self.bs_probs.ndim != 1:
            raise ValueError("homogeneous probabilities must be 1-d")
        if self.user_probs.shape != self.bs_probs.shape:
            raise ValueError("tier vectors disagree on catalog size")
        _check_capacity("user_probs", np.array([self.user_probs.sum()]), self.user_capacity)
        _check_capacity("bs_probs", np.array([self.bs_probs.sum()]), self.bs_capacity)

    @property
    def num_contents(self) -> int:
        return self.user_probs.shape[0]


@dataclass(frozen=True)
class AccessProbabilities:
    """Probabilities of serving a request from each tier.

    The five disjoint tiers (own, d2d, serving BS, cluster BS, cloud) sum to
    one; p_local is the complement of the cloud miss.
    """

    p_own: float
    p_d2d: float
    p_serving_bs: float
    p_cluster_bs: float
    p_local: float
    p_cloud: float

    def __post_init__(self):
        probs = (self.p_own, self.p_d2d, self.p_serving_bs, self.p_cluster_bs, self.p_local, self.p_cloud)
        if any(p < -_PROB_TOL or p > 1 + _PROB_TOL for p in probs):
            raise ValueError(f"tier probabilities outside [0, 1]: {probs}")
        total = self.p_own + self.p_d2d + self.p_serving_bs + self.p_cluster_bs + self.p_cloud
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"tier probabilities sum to {total}, not 1")
        if abs(self.p_local - (1.0 - self.p_cloud)) > 1e-9:
            raise ValueError("p_local must complement p_cloud")


def het_access_probs(p: HetPlacement, topo: Topology, user: int, content: int) -> AccessProbabilities:
    """Tier probabilities for one (user, content) under a heterogeneous placement."""
    if not 0 <= user < p.num_users:
        raise IndexError(f"user {user} out of range")
    if not 0 <= content < p.num_contents:
        raise IndexError(f"content {content} out of range")
    cell = topo.bs_of_user(user)
    a = p.user_probs[:, content]
    eta = p.bs_probs[:, content]
    a_self = float(a[user])
    neighbors = [i for i in topo.users_of_bs(cell) if i != user]
    prod_neighbors = float(np.prod([1.0 - a[i] for i in neighbors])) if neighbors else 1.0
    prod_cell = (1.0 - a_self) * prod_neighbors
    other_bs = [j for j in range(p.num_bs) if j != cell]
    prod_other_bs = float(np.prod([1.0 - eta[j] for j in other_bs])) if other_bs else 1.0
    p_own = a_self
    p_d2d = (1.0 - a_self) * (1.0 - prod_neighbors)
    p_serving = float(eta[cell]) * prod_cell
    p_cluster = (1.0 - float(eta[cell])) * prod_cell * (1.0 - prod_other_bs)
    p_cloud = prod_cell * (1.0 - float(eta[cell])) * prod_other_bs
    return AccessProbabilities(
        p_own=p_own,
        p_d2d=p_d2d,
        p_serving_bs=p_serving,
        p_cluster_bs=p_cluster,
        p_local=1.0 - p_cloud,
        p_cloud=p_cloud,
    )


def hom_access_probs(p: HomPlacement, users_per_cell: int, num_bs: int, content: int) -> AccessProbabilities:
    """Tier probabilities for one content under a tier-uniform placement."""
    if users_per_cell < 1 or num_bs < 1:
        raise ValueError("need at least one user per cell and one BS")
    if not 0 <= content < p.num_contents:
        raise IndexError(f"content {content} out of range")
    a = float(p.user_probs[content])
    eta = float(p.bs_probs[content])
    miss_cell = (1.0 - a) ** users_per_cell
    p_own = a
    p_d2d = (1.0 - a) * (1.0 - (1.0 - a) ** (users_per_cell - 1))
    p_serving = miss_cell * eta
    p_cluster = miss_cell * (1.0 - eta) * (1.0 - (1.0 - eta) ** (num_bs - 1))
    p_cloud = miss_cell * (1.0 - eta) ** num_bs
    return AccessProbabilities(
        p_own=p_own,
        p_d2d=p_d2d,
        p_serving_bs=p_serving,
        p_cluster_bs=p_cluster,
        p_local=1.0 - p_cloud,
        p_cloud=p_cloud,
    )


class TierProbs(NamedTuple):
    """Vectorized tier probabilities (one array entry per (user, content))."""

    own: np.ndarray
    d2d: np.ndarray
    serving_bs: np.ndarray
    cluster_bs: np.ndarray
    cloud: np.ndarray


def _cell_products(p: HetPlacement, topo: Topology) -> tuple[np.ndarray, np.ndarray]:
    """(leave-one-out cell miss product, full cell miss product), both (U, F).

    Uses prefix/suffix cumulative products so exact zeros stay exact.
    """
    miss = 1.0 - p.user_probs
    leave_one_out = np.empty_like(miss)
    full = np.empty_like(miss)
    for _, rows in topo.cells():
        blk = miss[rows.start : rows.stop]
        rev = np.cumprod(blk[::-1], axis=0)[::-1]  # rev[i] = prod_{i' >= i}
        suffix = np.ones_like(blk)
        suffix[:-1] = rev[1:]
        prefix = np.ones_like(blk)
        if blk.shape[0] > 1:
            prefix[1:] = np.cumprod(blk[:-1], axis=0)
        leave_one_out[rows.start : rows.stop] = prefix * suffix
        full[rows.start : rows.stop] = rev[0]
    return leave_one_out, full


def _bs_products(p: HetPlacement) -> tuple[np.ndarray, np.ndarray]:
    """(leave-one-out BS miss product (B, F), full BS miss product (F,))."""
    miss = 1.0 - p.bs_probs
    rev = np.cumprod(miss[::-1], axis=0)[::-1]
    suffix = np.ones_like(miss)
    suffix[:-1] = rev[1:]
    prefix = np.ones_like(miss)
    if miss.shape[0] > 1:
        prefix[1:] = np.cumprod(miss[:-1], axis=0)
    return prefix * suffix, rev[0]


def het_tier_matrices(p: HetPlacement, topo: Topology) -> TierProbs:
    """All five tier probabilities for every (user, content) pair at once."""
    if p.num_users != topo.num_users or p.num_bs != topo.num_bs:
        raise ValueError("placement and topology dimensions disagree")
    leave_one_out, cell_full = _cell_products(p, topo)
    bs_loo, bs_full = _bs_products(p)
    assign = np.fromiter(topo.assignment, dtype=np.intp, count=topo.num_users)
    eta_u = p.bs_probs[assign]
    bs_loo_u = bs_loo[assign]
    own = p.user_probs
    d2d = (1.0 - own) * (1.0 - leave_one_out)
    serving = eta_u * cell_full
    cluster = (1.0 - eta_u) * cell_full * (1.0 - bs_loo_u)
    cloud = cell_full * (1.0 - eta_u) * bs_loo_u
    return TierProbs(own, d2d, serving, cluster, cloud)


def hom_tier_vectors(p: HomPlacement, users_per_cell: int, num_bs: int) -> TierProbs:
    a = p.user_probs
    eta = p.bs_probs
    miss_cell = (1.0 - a) ** users_per_cell
    return TierProbs(
        own=a,
        d2d=(1.0 - a) * (1.0 - (1.0 - a) ** (users_per_cell - 1)),
        serving_bs=miss_cell * eta,
        cluster_bs=miss_cell * (1.0 - eta) * (1.0 - (1.0 - eta) ** (num_bs - 1)),
        cloud=miss_cell * (1.0 - eta) ** num_bs,
    )


def content_cost(probs: AccessProbabilities, costs: CostParams) -> float:
    """Expected cost of one content access: storage for a self hit, phi per tier."""
    return (
        costs.storage_cost * probs.p_own
        + costs.phi_d2d * probs.p_d2d
        + costs.phi_serving_bs * probs.p_serving_bs
        + costs.phi_cluster_bs * probs.p_cluster_bs
        + costs.phi_cloud * probs.p_cloud
    )


def _rho_matrix(rho, num_users: int, num_contents: int) -> np.ndarray:
    arr = np.asarray(getattr(rho, "rho", rho), dtype=np.float64)
    if arr.shape != (num_users, num_contents):
        raise ValueError(f"rho shape {arr.shape} != ({num_users}, {num_contents})")
    return arr


def average_cost_het(p: HetPlacement, rho, topo: Topology, costs: CostParams) -> float:
    """Cluster-average cost of a heterogeneous placement (expanded closed form).

    Uses the algebraic reduction with the full cell and cluster miss products;
    equals the direct tier-weighted sum within floating-point error.
    """
    rho_m = _rho_matrix(rho, topo.num_users, topo.num_contents)
    _, cell_full = _cell_products(p, topo)
    _, bs_full = _bs_products(p)
    assign = np.fromiter(topo.assignment, dtype=np.intp, count=topo.num_users)
    a = p.user_probs
    eta_u = p.bs_probs[assign]
    stor = costs.storage_cost
    phi_d, phi_b0 = costs.phi_d2d, costs.phi_serving_bs
    phi_bs, phi_c = costs.phi_cluster_bs, costs.phi_cloud
    inner = phi_d - phi_b0 * eta_u - phi_bs * (1.0 - eta_u) + bs_full[None, :] * (phi_bs - phi_c)
    per_pair = stor * a + phi_d * (1.0 - a) - cell_full * inner
    return float((rho_m * per_pair).sum() / topo.num_users)


def average_cost_het_direct(p: HetPlacement, rho, topo: Topology, costs: CostParams) -> float:
    """Independent route: weight each tier's probability by its cost and sum."""
    rho_m = _rho_matrix(rho, topo.num_users, topo.num_contents)
    t = het_tier_matrices(p, topo)
    per_pair = (
        costs.storage_cost * t.own
        + costs.phi_d2d * t.d2d
        + costs.phi_serving_bs * t.serving_bs
        + costs.phi_cluster_bs * t.cluster_bs
        + costs.phi_cloud * t.cloud
    )
    return float((rho_m * per_pair).sum() / topo.num_users)


def average_cost_hom(p: HomPlacement, rho, topo: Topology, costs: CostParams) -> float:
    """Cluster-average cost of a tier-uniform placement (closed form)."""
    rho_m = _rho_matrix(rho, topo.num_users, topo.num_contents)
    a = p.user_probs
    eta = p.bs_probs
    miss_cell = (1.0 - a) ** topo.users_per_bs
    miss_bs = (1.0 - eta) ** topo.num_bs
    stor = costs.storage_cost
    phi_d, phi_b0 = costs.phi_d2d, costs.phi_serving_bs
    phi_bs, phi_c = costs.phi_cluster_bs, costs.phi_cloud
    inner = phi_d - phi_b0 * eta - phi_bs * (1.0 - eta) + miss_bs * (phi_bs - phi_c)
    per_content = stor * a + phi_d * (1.0 - a) - miss_cell * inner
    return float(rho_m.sum(axis=0) @ per_content / topo.num_users)


def average_cost_hom_direct(p: HomPlacement, rho, topo: Topology, costs: CostParams) -> float:
    rho_m = _rho_matrix(rho, topo.num_users, topo.num_contents)
    t = hom_tier_vectors(p, topo.users_per_bs, topo.num_bs)
    per_content = (
        costs.storage_cost * t.own
        + costs.phi_d2d * t.d2d
        + costs.phi_serving_bs * t.serving_bs
        + costs.phi_cluster_bs * t.cluster_bs
        + costs.phi_cloud * t.cloud
    )
    return float(rho_m.sum(axis=0) @ per_content / topo.num_users)
