"""Segment tree for interval chmin + point queries, array-backed.

The access pattern needed by every approximation phase is exactly
"x_i <- min(x_i, v) for i in [l, r]" followed by point reads, so the tree
stores one lazy min-tag per node and never pushes tags down: a point query
walks root-to-leaf and takes the min of the tags on the path.

Conventions:
  * Public indices are 1-based and intervals are inclusive, [l, r] with
    1 <= l <= r <= N; internally the tree is the usual implicit binary heap
    over a power-of-two base.
  * Values are int64 with INF from core; new trees read `init` everywhere.

``bulk_chmin`` applies a whole batch of (row, l, r, v) updates across a stack
of independent trees in a few vectorized rounds; the level recursion feeds
tens of thousands of quads per call, where per-op Python overhead would
dominate.
"""

from __future__ import annotations

import numpy as np

from .core import INF


class RangeChminTree:
    """Lazy-chmin segment tree over positions 1..N."""

    __slots__ = ("n", "base", "tag")

    def __init__(self, n: int, init=INF):
        if n < 1:
            raise ValueError("tree size must be >= 1")
        self.n = n
        base = 1
        while base < n:
            base *= 2
        self.base = base
        self.tag = np.full(2 * base, INF, dtype=np.int64)
        self.tag[base : base + n] = np.int64(init)

    def range_chmin(self, l: int, r: int, v) -> None:
        if not (1 <= l <= r <= self.n):
            raise IndexError(f"interval [{l},{r}] out of range 1..{self.n}")
        v = np.int64(v)
        lo, hi = l - 1 + self.base, r - 1 + self.base
        while lo <= hi:
            if lo & 1:
                if v < self.tag[lo]:
                    self.tag[lo] = v
                lo += 1
            if not hi & 1:
                if v < self.tag[hi]:
                    self.tag[hi] = v
                hi -= 1
            lo //= 2
            hi //= 2

    def point_query(self, i: int):
        if not (1 <= i <= self.n):
            raise IndexError(f"index {i} out of range 1..{self.n}")
        node = i - 1 + self.base
        out = self.tag[node]
        while node > 1:
            node //= 2
            if self.tag[node] < out:
                out = self.tag[node]
        return np.int64(out)

    def snapshot(self) -> np.ndarray:
        """Values at all positions 1..N, as one array (min of tags down each path)."""
        acc = self.tag.copy()
        s = 2
        while s <= self.base:
            np.minimum(acc[s : 2 * s], np.repeat(acc[s // 2 : s], 2), out=acc[s : 2 * s])
            s *= 2
        return acc[self.base : self.base + self.n].copy()


class TreeStack:
    """`rows` independent RangeChminTrees of common size, flattened for batching.

    Equivalent to [RangeChminTree(n)] * rows but updatable by vectorized
    batches of quads; `snapshot_all` returns the (rows, n) value matrix.
    """

    __slots__ = ("rows", "n", "base", "tag")

    def __init__(self, rows: int, n: int, init=INF):
        if n < 1 or rows < 1:
            raise ValueError("rows and size must be >= 1")
        self.rows, self.n = rows, n
        base = 1
        while base < n:
            base *= 2
        self.base = base
        self.tag = np.full((rows, 2 * base), INF, dtype=np.int64)
        self.tag[:, base : base + n] = np.int64(init)

    def bulk_chmin(self, row, l, r, v) -> None:
        """Apply tag[row] chmin over [l, r] for every quad (vectorized rounds).

        Same canonical-node decomposition as the scalar tree, all quads in
        lockstep: each round clips off at most one node on each side, so there
        are O(log base) rounds of np.minimum.at scatters.
        """
        row = np.asarray(row, dtype=np.int64)
        lo = np.asarray(l, dtype=np.int64) - 1 + self.base
        hi = np.asarray(r, dtype=np.int64) - 1 + self.base
        v = np.asarray(v, dtype=np.int64)
        if np.any((lo > hi) | (lo < self.base) | (hi >= self.base + self.n)):
            raise IndexError("interval out of range")
        flat = self.tag.reshape(-1)
        stride = 2 * self.base
        while True:
            act = lo <= hi
            if not act.any():
                break
            row, lo, hi, v = row[act], lo[act], hi[act], v[act]
            # same clip pattern as the scalar tree, all quads in lockstep:
            # an odd left endpoint and an even right endpoint are canonical nodes
            odd = (lo & 1).astype(bool)
            if odd.any():
                np.minimum.at(flat, row[odd] * stride + lo[odd], v[odd])
            lo = lo + odd
            even = ~(hi & 1).astype(bool)
            if even.any():
                np.minimum.at(flat, row[even] * stride + hi[even], v[even])
            hi = hi - even
            lo //= 2
            hi //= 2

    def snapshot_all(self) -> np.ndarray:
        acc = self.tag.copy()
        s = 2
        while s <= self.base:
            np.minimum(acc[:, s : 2 * s], np.repeat(acc[:, s // 2 : s], 2, axis=1),
                       out=acc[:, s : 2 * s])
            s *= 2
        return acc[:, self.base : self.base + self.n].copy()
