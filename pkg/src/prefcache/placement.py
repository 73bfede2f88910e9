"""Greedy per-slot cache placement and indicator-to-probability conversion.

Every scheme consumes the per-slot predicted joint probabilities (one (U, F)
matrix per optimization slot) and emits a binary indicator schedule saying
which node stores which content in which slot.  Averaging the schedule over
the horizon yields the long-term caching probabilities evaluated by the cost
model.

Deterministic orderings throughout: contents are ranked by descending score
with ties broken by ascending content index, and nodes claim in ascending
index order.  A user's preferred contents in a slot are those with strictly
positive predicted joint probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .core import FormatError, RequestMatrix, Topology
from .cachemodel import HetPlacement, HomPlacement

__all__ = [
    "SchemeId",
    "IndicatorSchedule",
    "greedy_bs_first",
    "greedy_user_first",
    "greedy_overlapping",
    "homogeneous_greedy",
    "static_zipf_baseline",
    "build_schedule",
    "indicators_to_probabilities",
    "schedule_to_hom",
    "save_schedule",
    "load_schedule",
]


class SchemeId(str, Enum):
    BS_FIRST = "bs-first"
    USER_FIRST = "user-first"
    OVERLAPPING = "overlapping"
    HOMOGENEOUS = "homogeneous"
    STATIC_ZIPF = "static-zipf"

    def __str__(self) -> str:  # plain value in CSV/CLI output
        return self.value


NON_OVERLAPPING_SCHEMES = (SchemeId.BS_FIRST, SchemeId.USER_FIRST, SchemeId.STATIC_ZIPF)


@dataclass(frozen=True)
class IndicatorSchedule:
    """Binary cache contents per slot: users (S, U, F) and BSs (S, B, F)."""

    user_ind: np.ndarray
    bs_ind: np.ndarray

    def __post_init__(self):
        for name in ("user_ind", "bs_ind"):
            arr = np.asarray(getattr(self, name))
            if arr.ndim != 3:
                raise ValueError(f"{name} must be 3-d")
            if not np.isin(arr, (0, 1)).all():
                raise ValueError(f"{name} must be binary")
            arr = arr.astype(np.uint8)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.user_ind.shape[0] != self.bs_ind.shape[0]:
            raise ValueError("user and BS schedules disagree on slot count")
        if self.user_ind.shape[2] != self.bs_ind.shape[2]:
            raise ValueError("user and BS schedules disagree on catalog size")

    @property
    def num_slots(self) -> int:
        return self.user_ind.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_ind.shape[1]

    @property
    def num_bs(self) -> int:
        return self.bs_ind.shape[1]

    @property
    def num_contents(self) -> int:
        return self.user_ind.shape[2]

    def check_capacity(self, topo: Topology) -> None:
        if self.user_ind.sum(axis=2).max(initial=0) > topo.user_capacity:
            raise ValueError("a user cache exceeds its capacity in some slot")
        if self.bs_ind.sum(axis=2).max(initial=0) > topo.bs_capacity:
            raise ValueError("a BS cache exceeds its capacity in some slot")

    def is_cluster_unique(self) -> bool:
        """True if each content is stored at most once across all nodes per slot."""
        copies = self.user_ind.sum(axis=1) + self.bs_ind.sum(axis=1)
        return bool((copies <= 1).all())

    def is_tier_disjoint(self) -> bool:
        """True if no content sits at both the user tier and the BS tier in a slot."""
        at_users = self.user_ind.any(axis=1)
        at_bs = self.bs_ind.any(axis=1)
        return not bool((at_users & at_bs).any())

    def is_tier_uniform(self) -> bool:
        """True if all users agree and all BSs agree within every slot."""
        users_same = (self.user_ind == self.user_ind[:, :1, :]).all()
        bs_same = (self.bs_ind == self.bs_ind[:, :1, :]).all()
        return bool(users_same and bs_same)

    def is_cell_uniform(self, topo: Topology) -> bool:
        """True if users within each cell agree and all BSs agree per slot."""
        for _, rows in topo.cells():
            blk = self.user_ind[:, rows.start : rows.stop, :]
            if not (blk == blk[:, :1, :]).all():
                return False
        return bool((self.bs_ind == self.bs_ind[:, :1, :]).all())


def _ranked(values: np.ndarray) -> np.ndarray:
    """Content indices by descending value, ties by ascending index."""
    values = np.asarray(values, dtype=np.float64)
    return np.lexsort((np.arange(values.size), -values))


def _preferred(values: np.ndarray) -> np.ndarray:
    order = _ranked(values)
    return order[np.asarray(values, dtype=np.float64)[order] > 0]


def _check_joints(joints) -> np.ndarray:
    arr = np.asarray(joints, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError("per-slot joints must be 3-d (slots, users, contents)")
    if arr.size and arr.min() < 0:
        raise ValueError("joint probabilities must be non-negative")
    return arr


def _cell_scores(joint: np.ndarray, topo: Topology) -> np.ndarray:
    """Aggregate predicted popularity per cell: sums of user joints, (B, F)."""
    return np.add.reduceat(joint, [rows.start for _, rows in topo.cells()], axis=0)


def greedy_bs_first(pred, topo: Topology) -> IndicatorSchedule:
    """Non-overlapping placement filling BS caches with common contents first.

    Per slot: BSs claim the contents preferred by every cell (then by pairs of
    cells), ranked by aggregate popularity; users then claim their own top
    preferred contents not stored anywhere; leftover BS space takes the cell's
    remaining preferred contents.  No content is stored twice in the cluster.
    """
    joints = _check_joints(pred)
    num_slots, num_users, num_contents = joints.shape
    user_ind = np.zeros((num_slots, num_users, num_contents), dtype=np.uint8)
    bs_ind = np.zeros((num_slots, topo.num_bs, num_contents), dtype=np.uint8)
    cap_u, cap_b = topo.user_capacity, topo.bs_capacity
    for s in range(num_slots):
        joint = joints[s]
        cell_score = _cell_scores(joint, topo)
        pref_mask = cell_score > 0
        common_all = np.logical_and.reduce(pref_mask, axis=0)
        cluster_score = joint.sum(axis=0)
        stored = np.zeros(num_contents, dtype=bool)
        bs_fill = np.zeros(topo.num_bs, dtype=np.int64)
        for j in range(topo.num_bs):
            candidates: list[int] = [int(k) for k in _ranked(cluster_score) if common_all[k]]
            for j2 in range(topo.num_bs):
                if j2 == j:
                    continue
                pair_mask = pref_mask[j] & pref_mask[j2] & ~common_all
                pair_score = cell_score[j] + cell_score[j2]
                candidates.extend(int(k) for k in _ranked(pair_score) if pair_mask[k])
            for k in candidates:
                if bs_fill[j] >= cap_b:
                    break
                if not stored[k]:
                    bs_ind[s, j, k] = 1
                    stored[k] = True
                    bs_fill[j] += 1
        for i in range(num_users):
            taken = 0
            for k in _preferred(joint[i]):
                if taken >= cap_u:
                    break
                if not stored[k]:
                    user_ind[s, i, k] = 1
                    stored[k] = True
                    taken += 1
        for j in range(topo.num_bs):
            if bs_fill[j] >= cap_b:
                continue
            for k in _preferred(cell_score[j]):
                if bs_fill[j] >= cap_b:
                    break
                if not stored[k]:
                    bs_ind[s, j, k] = 1
                    stored[k] = True
                    bs_fill[j] += 1
    return IndicatorSchedule(user_ind, bs_ind)


def greedy_user_first(pred, topo: Topology) -> IndicatorSchedule:
    """Non-overlapping placement letting users claim their top contents first.

    Per slot: users (in ascending index order) claim their highest predicted
    contents; each BS then fills with the highest-ranked residual contents of
    its cell.  No content is stored twice in the cluster.
    """
    joints = _check_joints(pred)
    num_slots, num_users, num_contents = joints.shape
    user_ind = np.zeros((num_slots, num_users, num_contents), dtype=np.uint8)
    bs_ind = np.zeros((num_slots, topo.num_bs, num_contents), dtype=np.uint8)
    cap_u, cap_b = topo.user_capacity, topo.bs_capacity
    for s in range(num_slots):
        joint = joints[s]
        cell_score = _cell_scores(joint, topo)
        stored = np.zeros(num_contents, dtype=bool)
        for i in range(num_users):
            taken = 0
            for k in _preferred(joint[i]):
                if taken >= cap_u:
                    break
                if not stored[k]:
                    user_ind[s, i, k] = 1
                    stored[k] = True
                    taken += 1
        for j in range(topo.num_bs):
            taken = 0
            for k in _ranked(cell_score[j]):
                if taken >= cap_b:
                    break
                if not stored[k]:
                    bs_ind[s, j, k] = 1
                    stored[k] = True
                    taken += 1
    return IndicatorSchedule(user_ind, bs_ind)


def greedy_overlapping(pred, topo: Topology) -> IndicatorSchedule:
    """Fully greedy placement; duplication across nodes is allowed.

    Per slot and per cell: every user stores its own top predicted contents
    (duplication across users allowed); leftover user capacity drains the
    cell-wide residual pool in popularity order, where pool items already
    stored somewhere in the cell are dropped rather than duplicated; the BS
    takes the top of the remaining (cell-uncovered) pool and pads with the
    cell's most popular contents.
    """
    joints = _check_joints(pred)
    num_slots, num_users, num_contents = joints.shape
    user_ind = np.zeros((num_slots, num_users, num_contents), dtype=np.uint8)
    bs_ind = np.zeros((num_slots, topo.num_bs, num_contents), dtype=np.uint8)
    cap_u, cap_b = topo.user_capacity, topo.bs_capacity
    for s in range(num_slots):
        joint = joints[s]
        for j, rows in topo.cells():
            omega = joint[rows.start : rows.stop].sum(axis=0)
            full_rank = _ranked(omega)
            own_sets: dict[int, set[int]] = {}
            cell_stored: set[int] = set()
            avail: dict[int, int] = {}
            pool: list[int] = []
            in_pool: set[int] = set()
            for i in rows:
                prefs = _preferred(joint[i])
                top = prefs[:cap_u]
                user_ind[s, i, top] = 1
                own_sets[i] = set(int(k) for k in top)
                cell_stored |= own_sets[i]
                avail[i] = cap_u - top.size
                for k in prefs[cap_u:]:
                    k = int(k)
                    if k not in in_pool:
                        pool.append(k)
                        in_pool.add(k)
            pool.sort(key=lambda k: (-omega[k], k))
            pool = [k for k in pool if k not in cell_stored]
            for i in rows:
                if avail[i] <= 0:
                    continue
                take = pool[: avail[i]]
                pool = pool[avail[i] :]
                for k in take:
                    user_ind[s, i, k] = 1
                    own_sets[i].add(k)
                    cell_stored.add(k)
                avail[i] -= len(take)
            for i in rows:  # pad any space left with the cell's most popular contents
                if avail[i] <= 0:
                    continue
                for k in full_rank:
                    if avail[i] <= 0:
                        break
                    k = int(k)
                    if k not in own_sets[i]:
                        user_ind[s, i, k] = 1
                        own_sets[i].add(k)
                        avail[i] -= 1
            bs_set = set(pool[:cap_b])
            for k in bs_set:
                bs_ind[s, j, k] = 1
            short = cap_b - len(bs_set)
            if short > 0:  # prefer popular contents the cell does not yet hold anywhere
                for covered_ok in (False, True):
                    for k in full_rank:
                        if short <= 0:
                            break
                        k = int(k)
                        if k in bs_set or (not covered_ok and k in cell_stored):
                            continue
                        bs_ind[s, j, k] = 1
                        bs_set.add(k)
                        short -= 1
                    if short <= 0:
                        break
    return IndicatorSchedule(user_ind, bs_ind)


def homogeneous_greedy(pred, topo: Topology) -> IndicatorSchedule:
    """Tier-uniform placement: identical caches per cell and per BS.

    Per slot: each cell ranks contents by its aggregate predicted popularity
    and every user of the cell stores the top slice identically; the contents
    left over after the user level (preferred somewhere, cached at no cell's
    users) are stacked, ranked by cluster popularity, and every BS stores the
    top slice of that (padded with the most popular contents if short).
    """
    joints = _check_joints(pred)
    num_slots, num_users, num_contents = joints.shape
    user_ind = np.zeros((num_slots, num_users, num_contents), dtype=np.uint8)
    bs_ind = np.zeros((num_slots, topo.num_bs, num_contents), dtype=np.uint8)
    cap_u, cap_b = topo.user_capacity, topo.bs_capacity
    for s in range(num_slots):
        joint = joints[s]
        cluster_score = joint.sum(axis=0)
        residual: list[int] = []
        in_residual: set[int] = set()
        user_covered: set[int] = set()
        for j, rows in topo.cells():
            omega = joint[rows.start : rows.stop].sum(axis=0)
            prefs = _preferred(omega)
            top = prefs[:cap_u]
            user_ind[s, rows.start : rows.stop, top] = 1
            user_covered.update(int(k) for k in top)
            for k in prefs[cap_u:]:
                k = int(k)
                if k not in in_residual:
                    residual.append(k)
                    in_residual.add(k)
        residual = [k for k in residual if k not in user_covered]
        residual.sort(key=lambda k: (-cluster_score[k], k))
        bs_list = residual[:cap_b]
        if len(bs_list) < cap_b:
            chosen = set(bs_list)
            for k in _ranked(cluster_score):
                if len(bs_list) >= cap_b:
                    break
                k = int(k)
                if k not in chosen:
                    bs_list.append(k)
                    chosen.add(k)
        bs_ind[s, :, bs_list] = 1
    return IndicatorSchedule(user_ind, bs_ind)


def static_zipf_baseline(history: RequestMatrix, topo: Topology, horizon: int) -> IndicatorSchedule:
    """Slot-invariant tier-uniform baseline fitted on historical popularity.

    Contents are ranked once by their aggregate historical request counts;
    every user stores the top slice, every BS the next slice (tiers disjoint),
    identically in every slot.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    totals = history.counts.sum(axis=(0, 1))
    order = _ranked(totals)
    user_set = order[: topo.user_capacity]
    bs_set = order[topo.user_capacity : topo.user_capacity + topo.bs_capacity]
    user_ind = np.zeros((horizon, history.num_users, history.num_contents), dtype=np.uint8)
    bs_ind = np.zeros((horizon, topo.num_bs, history.num_contents), dtype=np.uint8)
    user_ind[:, :, user_set] = 1
    bs_ind[:, :, bs_set] = 1
    return IndicatorSchedule(user_ind, bs_ind)


def build_schedule(
    scheme: SchemeId | str,
    pred,
    topo: Topology,
    history: RequestMatrix | None = None,
) -> IndicatorSchedule:
    """Dispatch a scheme name to its placement routine."""
    scheme = SchemeId(scheme)
    if scheme is SchemeId.BS_FIRST:
        return greedy_bs_first(pred, topo)
    if scheme is SchemeId.USER_FIRST:
        return greedy_user_first(pred, topo)
    if scheme is SchemeId.OVERLAPPING:
        return greedy_overlapping(pred, topo)
    if scheme is SchemeId.HOMOGENEOUS:
        return homogeneous_greedy(pred, topo)
    if scheme is SchemeId.STATIC_ZIPF:
        if history is None:
            raise ValueError("the static baseline needs the request history")
        horizon = _check_joints(pred).shape[0]
        return static_zipf_baseline(history, topo, horizon)
    raise ValueError(f"unknown scheme {scheme!r}")


def indicators_to_probabilities(sched: IndicatorSchedule, topo: Topology) -> HetPlacement:
    """Long-term caching probabilities: the per-node time average of the schedule."""
    return HetPlacement(
        user_probs=sched.user_ind.mean(axis=0),
        bs_probs=sched.bs_ind.mean(axis=0),
        user_capacity=topo.user_capacity,
        bs_capacity=topo.bs_capacity,
    )


def schedule_to_hom(sched: IndicatorSchedule, topo: Topology) -> HomPlacement:
    """Collapse a tier-uniform schedule to per-tier probability vectors."""
    if not sched.is_tier_uniform():
        raise ValueError("schedule is not tier-uniform; use the heterogeneous form")
    return HomPlacement(
        user_probs=sched.user_ind[:, 0, :].mean(axis=0),
        bs_probs=sched.bs_ind[:, 0, :].mean(axis=0),
        user_capacity=topo.user_capacity,
        bs_capacity=topo.bs_capacity,
    )


# --- CSV persistence: one row per stored item --------------------------------

_SCHEDULE_HEADER = "t,node_type,node_id,content"


def save_schedule(sched: IndicatorSchedule, path, scheme: SchemeId | str | None = None) -> None:
    meta = (
        f"#S={sched.num_slots},U={sched.num_users},B={sched.num_bs},F={sched.num_contents}"
        + (f",scheme={SchemeId(scheme)}" if scheme is not None else "")
    )
    lines = [meta, _SCHEDULE_HEADER]
    for kind, arr in (("user", sched.user_ind), ("bs", sched.bs_ind)):
        ts, ns, ks = np.nonzero(arr)
        for t, n, k in zip(ts.tolist(), ns.tolist(), ks.tolist()):
            lines.append(f"{t},{kind},{n},{k}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_schedule(path) -> tuple[IndicatorSchedule, str | None]:
    path = Path(path)
    meta: dict[str, str] = {}
    user_ind = bs_ind = None
    scheme: str | None = None
    seen_header = False
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if not meta:
                    for item in line[1:].split(","):
                        if "=" not in item:
                            raise FormatError(path, line_no, f"bad metadata item {item!r}")
                        k, v = item.split("=", 1)
                        meta[k.strip()] = v.strip()
                continue
            if not seen_header:
                if line != _SCHEDULE_HEADER:
                    raise FormatError(path, line_no, f"expected header {_SCHEDULE_HEADER!r}")
                if not {"S", "U", "B", "F"} <= meta.keys():
                    raise FormatError(path, line_no, "metadata line with S=,U=,B=,F= must precede the header")
                try:
                    s, u, b, f = (int(meta[k]) for k in ("S", "U", "B", "F"))
                except ValueError:
                    raise FormatError(path, line_no, "non-integer schedule shape") from None
                scheme = meta.get("scheme")
                user_ind = np.zeros((s, u, f), dtype=np.uint8)
                bs_ind = np.zeros((s, b, f), dtype=np.uint8)
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise FormatError(path, line_no, f"expected 4 fields, got {len(parts)}")
            try:
                t, n, k = int(parts[0]), int(parts[2]), int(parts[3])
            except ValueError:
                raise FormatError(path, line_no, f"non-integer field in {line!r}") from None
            target = {"user": user_ind, "bs": bs_ind}.get(parts[1])
            if target is None:
                raise FormatError(path, line_no, f"unknown node type {parts[1]!r}")
            if not (0 <= t < target.shape[0] and 0 <= n < target.shape[1] and 0 <= k < target.shape[2]):
                raise FormatError(path, line_no, f"index ({t},{n},{k}) outside schedule shape")
            target[t, n, k] = 1
    if user_ind is None:
        raise FormatError(path, 0, "missing metadata/header lines")
    return IndicatorSchedule(user_ind, bs_ind), scheme
