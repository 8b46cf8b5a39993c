"""Dyadic tree addressing, interval geometry and data binning.

Nodes are addressed by ``(level, position)``; the node ``(l, k)`` owns the
half-open interval ``(k 2^-l, (k+1) 2^-l]`` and has children ``(l+1, 2k)``
and ``(l+1, 2k+1)``.  Per-node scalars are stored as one numpy array per
level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NodeIndex",
    "DyadicTree",
    "CountTree",
    "truncation_level",
    "leaf_index",
    "count_data",
    "interval_of",
    "validate_unit_data",
]


@dataclass(frozen=True, order=True)
class NodeIndex:
    """A node ``(level, position)`` of the infinite binary tree."""

    level: int
    position: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")
        if not 0 <= self.position < (1 << self.level):
            raise ValueError(
                f"position {self.position} out of range for level {self.level}"
            )

    @property
    def word(self) -> str:
        """Binary word of the node, e.g. ``(3, 5) -> '101'``; root is ``''``."""
        if self.level == 0:
            return ""
        return format(self.position, f"0{self.level}b")

    @classmethod
    def from_word(cls, word: str) -> "NodeIndex":
        if not word:
            return cls(0, 0)
        return cls(len(word), int(word, 2))

    def children(self) -> tuple["NodeIndex", "NodeIndex"]:
        return (
            NodeIndex(self.level + 1, 2 * self.position),
            NodeIndex(self.level + 1, 2 * self.position + 1),
        )

    def parent(self) -> "NodeIndex":
        if self.level == 0:
            raise ValueError("the root has no parent")
        return NodeIndex(self.level - 1, self.position >> 1)

    def interval(self) -> tuple[float, float]:
        return interval_of(self)


def interval_of(node: NodeIndex) -> tuple[float, float]:
    """Endpoints ``(lower, upper)`` of the half-open interval ``(lower, upper]``."""
    scale = 2.0 ** (-node.level)
    return node.position * scale, (node.position + 1) * scale


class DyadicTree:
    """Per-level storage of one scalar per node, levels ``0..depth``.

    Level ``l`` holds exactly ``2**l`` entries.  Arrays are made read-only so
    instances can be shared between workers.
    """

    __slots__ = ("depth", "levels")

    def __init__(self, levels: Sequence[Iterable[float]], dtype=float):
        arrays = []
        for l, values in enumerate(levels):
            arr = np.array(values, dtype=dtype)
            if arr.shape != (1 << l,):
                raise ValueError(
                    f"level {l} must have {1 << l} entries, got shape {arr.shape}"
                )
            arr.setflags(write=False)
            arrays.append(arr)
        if not arrays:
            raise ValueError("a DyadicTree needs at least the root level")
        self.levels = tuple(arrays)
        self.depth = len(arrays) - 1

    @classmethod
    def from_leaves(cls, leaves, dtype=float) -> "DyadicTree":
        """Build a tree whose internal entries are the sums of their children."""
        leaves = np.asarray(leaves, dtype=dtype)
        depth = int(round(math.log2(leaves.size))) if leaves.size else -1
        if leaves.ndim != 1 or leaves.size != (1 << max(depth, 0)):
            raise ValueError("number of leaves must be a power of two")
        levels = [leaves]
        while levels[-1].size > 1:
            levels.append(levels[-1].reshape(-1, 2).sum(axis=1))
        return cls(levels[::-1], dtype=dtype)

    def __getitem__(self, node) -> float:
        if isinstance(node, NodeIndex):
            l, k = node.level, node.position
        else:
            l, k = node
        return self.levels[l][k]

    def __len__(self) -> int:
        return self.depth + 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, DyadicTree):
            return NotImplemented
        return self.depth == other.depth and all(
            np.array_equal(a, b) for a, b in zip(self.levels, other.levels)
        )

    def __repr__(self) -> str:
        return f"{type(self).__name__}(depth={self.depth})"


class CountTree(DyadicTree):
    """Counts ``N_X(I_eps)`` of a sample for every node down to ``depth``."""

    __slots__ = ()

    @property
    def total(self) -> int:
        return int(self.levels[0][0])

    @property
    def leaves(self) -> np.ndarray:
        return self.levels[-1]

    def children_counts(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Left and right child counts of every node at ``level`` (< depth)."""
        if not 0 <= level < self.depth:
            raise ValueError(f"level must be in [0, {self.depth}), got {level}")
        child = self.levels[level + 1]
        return child[0::2], child[1::2]


def truncation_level(n: int) -> int:
    """Largest ``L`` with ``2**L * L**2 <= n`` and ``L <= floor(log2 n)``."""
    n = int(n)
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    cap = n.bit_length() - 1
    L = 0
    while L + 1 <= cap and (1 << (L + 1)) * (L + 1) ** 2 <= n:
        L += 1
    return L


def validate_unit_data(data) -> np.ndarray:
    """Return ``data`` as a float array, raising if any value is outside (0, 1]."""
    x = np.asarray(data, dtype=float).ravel()
    bad = ~((x > 0.0) & (x <= 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"observation {i} = {x[i]!r} is outside (0, 1]")
    return x


def leaf_index(x: np.ndarray, depth: int) -> np.ndarray:
    """Index ``k`` of the leaf ``(k 2^-L, (k+1) 2^-L]`` containing each ``x``."""
    # scaling by a power of two is exact, so ceil sees the true boundary
    return np.ceil(np.asarray(x, dtype=float) * float(1 << depth)).astype(np.int64) - 1


def count_data(data, depth: int) -> CountTree:
    """Bin ``data`` at resolution ``2**-depth`` and sum counts up the tree."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    x = validate_unit_data(data)
    leaves = np.bincount(leaf_index(x, depth), minlength=1 << depth)
    levels = [leaves.astype(np.int64)]
    for _ in range(depth):
        levels.append(levels[-1].reshape(-1, 2).sum(axis=1))
    return CountTree(levels[::-1], dtype=np.int64)
