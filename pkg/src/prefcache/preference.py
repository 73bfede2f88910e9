"""Request probabilities derived from count matrices.

A slot's counts induce three probability objects: the activity level of each
user (share of the slot's requests it issued), each user's conditional
content preference, and their product, the joint probability over
(user, content) pairs.  Averaging joints over a horizon and renormalizing per
user yields the long-term preference weights used by the cost model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import RequestMatrix

__all__ = [
    "PreferenceProfile",
    "AggregatedPreference",
    "profile_from_counts",
    "profile_from_slot",
    "global_popularity",
    "aggregate_preference",
]


@dataclass(frozen=True)
class PreferenceProfile:
    """Per-slot probabilities: activity (U,), conditional (U,F), joint (U,F).

    Users with zero requests get all-zero rows; a slot with no requests at all
    yields the distinguished empty profile (everything zero).
    """

    slot: int
    activity: np.ndarray
    conditional: np.ndarray
    joint: np.ndarray

    @property
    def is_empty(self) -> bool:
        return not self.activity.any()


def profile_from_counts(counts, slot: int = 0) -> PreferenceProfile:
    """Build a profile from one slot's (U, F) count matrix."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2:
        raise ValueError("counts must be 2-d (users x contents)")
    num_users, num_contents = counts.shape
    per_user = counts.sum(axis=1)
    total = counts.sum()
    if total == 0:
        zeros = np.zeros((num_users, num_contents))
        return PreferenceProfile(slot, np.zeros(num_users), zeros, zeros.copy())
    activity = per_user / total
    conditional = np.divide(
        counts,
        per_user[:, None],
        out=np.zeros_like(counts),
        where=per_user[:, None] > 0,
    )
    # activity * conditional reduces to counts / total; computing it directly
    # keeps the joint a single rounding away from the exact rational value.
    joint = counts / total
    return PreferenceProfile(slot, activity, conditional, joint)


def profile_from_slot(m: RequestMatrix, t: int) -> PreferenceProfile:
    return profile_from_counts(m.slot(t), slot=t)


def global_popularity(profile: PreferenceProfile) -> np.ndarray:
    """Region-wide content popularity: column sums of the joint matrix."""
    return profile.joint.sum(axis=0)


@dataclass(frozen=True)
class AggregatedPreference:
    """Horizon-averaged preference weights.

    `rho` is the per-user row-normalized average of the joint matrices;
    `rho_raw` keeps the unnormalized average for diagnostics.  All-zero rows
    stay all-zero.
    """

    rho: np.ndarray
    rho_raw: np.ndarray
    horizon: int
    start_slot: int


def aggregate_preference(profiles: Sequence[PreferenceProfile]) -> AggregatedPreference:
    """Average the joints of a slot sequence and renormalize each user row."""
    if not profiles:
        raise ValueError("need at least one profile to aggregate")
    shapes = {p.joint.shape for p in profiles}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent profile shapes: {shapes}")
    raw = np.mean([p.joint for p in profiles], axis=0)
    row_sums = raw.sum(axis=1)
    rho = np.divide(raw, row_sums[:, None], out=np.zeros_like(raw), where=row_sums[:, None] > 0)
    return AggregatedPreference(
        rho=rho,
        rho_raw=raw,
        horizon=len(profiles),
        start_slot=min(p.slot for p in profiles),
    )
