"""Synthetic request-history generation.

Each user gets a private random content ordering and a private Zipf skew, the
first slot is drawn by binning uniform variates against the Zipf CDF, and the
remaining slots add a shared sinusoidal drift plus per-entry Gaussian noise,
rounded and clamped to non-negative integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RequestMatrix, SeededRng, Topology

__all__ = [
    "SkewnessRange",
    "RequestRange",
    "CorrelationParams",
    "zipf_pmf",
    "sample_skewness",
    "generate_initial_matrix",
    "extend_correlated",
    "generate_request_history",
]


@dataclass(frozen=True)
class SkewnessRange:
    """Allowed interval for the per-user Zipf skew."""

    gamma_min: float = 0.5
    gamma_max: float = 1.5

    def __post_init__(self):
        if not (math.isfinite(self.gamma_min) and math.isfinite(self.gamma_max)):
            raise ValueError("skewness bounds must be finite")
        if self.gamma_min < 0 or self.gamma_max < self.gamma_min:
            raise ValueError(f"need 0 <= gamma_min <= gamma_max, got {self}")


@dataclass(frozen=True)
class RequestRange:
    """Inclusive range for a user's total number of requests in a slot."""

    n_req_min: int = 50
    n_req_max: int = 200

    def __post_init__(self):
        if not 0 < self.n_req_min <= self.n_req_max:
            raise ValueError(f"need 0 < n_req_min <= n_req_max, got {self}")


@dataclass(frozen=True)
class CorrelationParams:
    """Sinusoidal drift amplitudes and additive Gaussian noise parameters."""

    amplitudes: tuple[float, ...] = (1.0, 1.0, 1.0)
    noise_mean: float = 0.0
    noise_var: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if not all(math.isfinite(a) for a in self.amplitudes):
            raise ValueError("amplitudes must be finite")
        if not math.isfinite(self.noise_mean):
            raise ValueError("noise mean must be finite")
        if not (math.isfinite(self.noise_var) and self.noise_var >= 0):
            raise ValueError("noise variance must be finite and non-negative")


def zipf_pmf(num_contents: int, gamma: float) -> np.ndarray:
    """Zipf pmf over ranks 1..num_contents: p[k] = (k+1)^-gamma / sum.

    gamma = 0 degenerates to the uniform distribution.
    """
    if num_contents < 1:
        raise ValueError("num_contents must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    ranks = np.arange(1, num_contents + 1, dtype=np.float64)
    weights = ranks**-gamma
    return weights / weights.sum()


def sample_skewness(skew: SkewnessRange, rng) -> float:
    """Draw gamma = (gamma_max - gamma_min) * U(0,1) + gamma_min."""
    gen = rng.generator() if isinstance(rng, SeededRng) else rng
    u = float(gen.random())
    return (skew.gamma_max - skew.gamma_min) * u + skew.gamma_min


def generate_initial_matrix(
    topo: Topology,
    skew: SkewnessRange,
    reqs: RequestRange,
    rng: SeededRng,
) -> np.ndarray:
    """First-slot request counts, one independent stream per user.

    Per user: draw a content permutation, a skew, a request total, then bin
    that many uniform variates against the cumulative Zipf pmf and scatter the
    rank counts through the permutation.  Each row sums to the drawn total.
    """
    num_contents = topo.num_contents
    out = np.zeros((topo.num_users, num_contents), dtype=np.int64)
    for i in range(topo.num_users):
        gen = rng.child(f"user-{i}").generator()
        order = gen.permutation(num_contents)
        gamma = sample_skewness(skew, gen)
        n_req = int(gen.integers(reqs.n_req_min, reqs.n_req_max + 1))
        variates = gen.random(n_req)
        edges = np.cumsum(zipf_pmf(num_contents, gamma))
        ranks = np.searchsorted(edges, variates, side="right")
        ranks = np.minimum(ranks, num_contents - 1)  # guard fp round-off at the top edge
        out[i, order] = np.bincount(ranks, minlength=num_contents)
    return out


def extend_correlated(
    initial: np.ndarray,
    slots: int,
    corr: CorrelationParams,
    rng: SeededRng,
) -> RequestMatrix:
    """Extend a first slot into a correlated integer series of `slots` slots.

    Slot index s >= 1 holds round(initial + sum_n A_n sin(n (s+1)) + eps)
    clamped at zero, with eps drawn independently per (user, content, slot).
    Slot 0 is the initial matrix verbatim.
    """
    initial = np.asarray(initial, dtype=np.int64)
    if initial.ndim != 2:
        raise ValueError("initial matrix must be 2-d (users x contents)")
    if slots < 1:
        raise ValueError("need at least one slot")
    num_users, num_contents = initial.shape
    counts = np.empty((slots, num_users, num_contents), dtype=np.float64)
    counts[0] = initial
    if slots > 1:
        t = np.arange(2, slots + 1, dtype=np.float64)  # absolute slot numbers, slot 0 is t=1
        drift = np.zeros_like(t)
        for n, amp in enumerate(corr.amplitudes, start=1):
            drift += amp * np.sin(n * t)
        gen = rng.generator()
        eps = gen.normal(corr.noise_mean, math.sqrt(corr.noise_var), size=(slots - 1, num_users, num_contents))
        counts[1:] = np.maximum(np.rint(initial[None, :, :] + drift[:, None, None] + eps), 0.0)
    return RequestMatrix(counts.astype(np.int64), seed=rng.seed)


def generate_request_history(
    topo: Topology,
    slots: int,
    rng: SeededRng,
    skew: SkewnessRange = SkewnessRange(),
    reqs: RequestRange = RequestRange(),
    corr: CorrelationParams = CorrelationParams(),
) -> RequestMatrix:
    """Full pipeline: initial slot plus correlated extension."""
    initial = generate_initial_matrix(topo, skew, reqs, rng.child("initial"))
    return extend_correlated(initial, slots, corr, rng.child("noise"))
