"""Shared domain types: cluster topology, request-count tensors, reproducible
RNG streams, and the on-disk CSV format for count tensors.

Conventions used throughout the package: slots, users, contents and BSs are
all 0-indexed, both in memory and in CSV files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

__all__ = [
    "FormatError",
    "SeededRng",
    "TopologyConfig",
    "Topology",
    "build_topology",
    "RequestMatrix",
    "slot_totals",
    "save_request_matrix",
    "load_request_matrix",
]

_MASK64 = (1 << 64) - 1


class FormatError(ValueError):
    """A CSV artifact could not be parsed; carries path and line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no
        self.message = message


@dataclass(frozen=True)
class SeededRng:
    """Reproducible random stream identified by (seed, stream label).

    The same (seed, stream) pair always yields identical draws; distinct
    labels yield independent streams.  Labels are hashed with SHA-256 so the
    mapping is stable across processes and platforms.
    """

    seed: int
    stream: str = "root"

    def child(self, label: str) -> "SeededRng":
        return SeededRng(self.seed, f"{self.stream}/{label}")

    def generator(self) -> np.random.Generator:
        digest = hashlib.sha256(self.stream.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
        return np.random.default_rng(np.random.SeedSequence([self.seed & _MASK64, *words]))


@dataclass(frozen=True)
class TopologyConfig:
    num_bs: int
    users_per_bs: int
    num_contents: int
    bs_capacity: int
    user_capacity: int


@dataclass(frozen=True)
class Topology:
    """One cluster of `num_bs` cells, each serving `users_per_bs` users.

    Users are assigned contiguously: user i is served by BS i // users_per_bs.
    Capacities are counted in content units (all contents have equal size).
    """

    num_bs: int
    users_per_bs: int
    num_contents: int
    bs_capacity: int
    user_capacity: int
    assignment: tuple[int, ...]

    @property
    def num_users(self) -> int:
        return self.num_bs * self.users_per_bs

    def bs_of_user(self, user: int) -> int:
        return self.assignment[user]

    def users_of_bs(self, bs: int) -> range:
        if not 0 <= bs < self.num_bs:
            raise IndexError(f"BS index {bs} out of range")
        return range(bs * self.users_per_bs, (bs + 1) * self.users_per_bs)

    def cells(self) -> Iterator[tuple[int, range]]:
        for j in range(self.num_bs):
            yield j, self.users_of_bs(j)


def build_topology(config: TopologyConfig) -> Topology:
    """Build a validated single-cluster topology from its config.

    Rejects empty clusters and capacities exceeding the catalog size.
    """
    if config.num_bs < 1:
        raise ValueError("need at least one BS")
    if config.users_per_bs < 1:
        raise ValueError("need at least one user per BS")
    if config.num_contents < 1:
        raise ValueError("need at least one content")
    if not 0 <= config.user_capacity <= config.num_contents:
        raise ValueError(
            f"user capacity {config.user_capacity} outside [0, {config.num_contents}]"
        )
    if not 0 <= config.bs_capacity <= config.num_contents:
        raise ValueError(
            f"BS capacity {config.bs_capacity} outside [0, {config.num_contents}]"
        )
    assignment = tuple(i // config.users_per_bs for i in range(config.num_bs * config.users_per_bs))
    return Topology(
        num_bs=config.num_bs,
        users_per_bs=config.users_per_bs,
        num_contents=config.num_contents,
        bs_capacity=config.bs_capacity,
        user_capacity=config.user_capacity,
        assignment=assignment,
    )


def _as_count_tensor(values, ndim: int) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d count tensor, got shape {arr.shape}")
    if arr.dtype.kind == "f":
        if not np.all(arr == np.rint(arr)):
            raise ValueError("count tensor has fractional entries")
        arr = arr.astype(np.int64)
    else:
        arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise ValueError("count tensor has negative entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RequestMatrix:
    """Per-slot request counts, shape (slots, users, contents), non-negative ints.

    Immutable after construction; the seed records how the data was generated
    and travels with the CSV serialization.
    """

    counts: np.ndarray
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "counts", _as_count_tensor(self.counts, 3))

    @property
    def slots(self) -> int:
        return self.counts.shape[0]

    @property
    def num_users(self) -> int:
        return self.counts.shape[1]

    @property
    def num_contents(self) -> int:
        return self.counts.shape[2]

    def slot(self, t: int) -> np.ndarray:
        if not 0 <= t < self.slots:
            raise IndexError(f"slot index {t} out of range [0, {self.slots})")
        return self.counts[t]


def slot_totals(m: RequestMatrix, t: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-user totals, per-content totals and the grand total of one slot."""
    counts = m.slot(t)
    per_user = counts.sum(axis=1)
    per_content = counts.sum(axis=0)
    return per_user, per_content, int(counts.sum())


# --- CSV persistence -------------------------------------------------------
#
# Count tensors are stored sparsely: one row per nonzero entry, preceded by a
# metadata comment line carrying the tensor shape (and extra keys such as the
# seed or the first forecast slot).  Extra '#' comment lines are ignored on
# load, so writers may embed reproducibility info.

_COUNT_HEADER = "t,user,content,count"


def write_count_csv(counts: np.ndarray, path, meta: Mapping[str, object], extra_comments=()) -> None:
    counts = np.asarray(counts)
    meta_line = "#" + ",".join(f"{k}={v}" for k, v in meta.items())
    lines = [meta_line]
    for comment in extra_comments:
        lines.append(comment if comment.startswith("#") else "#" + comment)
    lines.append(_COUNT_HEADER)
    ts, us, fs = np.nonzero(counts)
    vals = counts[ts, us, fs]
    for t, u, f, v in zip(ts.tolist(), us.tolist(), fs.tolist(), vals.tolist()):
        lines.append(f"{t},{u},{f},{v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_count_csv(path) -> tuple[np.ndarray, dict[str, str]]:
    """Parse a sparse count CSV back into a dense tensor plus its metadata."""
    path = Path(path)
    meta: dict[str, str] = {}
    counts = None
    seen_header = False
    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line and not meta:
                    for item in line[1:].split(","):
                        if "=" not in item:
                            raise FormatError(path, line_no, f"bad metadata item {item!r}")
                        k, v = item.split("=", 1)
                        meta[k.strip()] = v.strip()
                continue
            if not seen_header:
                if line != _COUNT_HEADER:
                    raise FormatError(path, line_no, f"expected header {_COUNT_HEADER!r}, got {line!r}")
                seen_header = True
                if not {"T", "U", "F"} <= meta.keys():
                    raise FormatError(path, line_no, "metadata line with T=,U=,F= must precede the header")
                try:
                    shape = (int(meta["T"]), int(meta["U"]), int(meta["F"]))
                except ValueError:
                    raise FormatError(path, line_no, "non-integer tensor shape in metadata") from None
                counts = np.zeros(shape, dtype=np.int64)
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise FormatError(path, line_no, f"expected 4 fields, got {len(parts)}")
            try:
                t, u, f, v = (int(p) for p in parts)
            except ValueError:
                raise FormatError(path, line_no, f"non-integer field in {line!r}") from None
            if not (0 <= t < counts.shape[0] and 0 <= u < counts.shape[1] and 0 <= f < counts.shape[2]):
                raise FormatError(path, line_no, f"index ({t},{u},{f}) outside shape {counts.shape}")
            if v < 0:
                raise FormatError(path, line_no, f"negative count {v}")
            counts[t, u, f] = v
    if counts is None:
        raise FormatError(path, 0, "missing metadata/header lines")
    return counts, meta


def save_request_matrix(m: RequestMatrix, path, extra_comments=()) -> None:
    meta = {"T": m.slots, "U": m.num_users, "F": m.num_contents, "seed": m.seed}
    write_count_csv(m.counts, path, meta, extra_comments)


def load_request_matrix(path) -> RequestMatrix:
    counts, meta = read_count_csv(path)
    return RequestMatrix(counts, seed=int(meta.get("seed", "0")))
