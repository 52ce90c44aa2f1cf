"""Exact Euclidean nearest-neighbour search with a ball tree.

Nodes live in flat arrays. Each node owns a contiguous slice
``idx[start:end]`` of the point permutation, a centroid (mean of its points)
and a radius (largest centroid-to-point distance). Internal nodes split
their points at the median of the coordinate with the largest spread.
"""
from __future__ import annotations

from typing import List, Tuple

import numpy as np


class DimensionMismatch(ValueError):
    pass


class EmptyTree(ValueError):
    pass


# pruning slack so floating-point rounding in the bound never skips an exact tie
_SLACK = 1e-9


class BallTree:
    def __init__(self, points, leaf_size: int = 32):
        X = np.asarray(points, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch("points must form a 2-D array of uniform dimension")
        if X.shape[0] < 1:
            raise EmptyTree("a ball tree needs at least one point")
        if leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        self.data = X
        self.leaf_size = int(leaf_size)
        self.idx = np.arange(X.shape[0])
        self.start: List[int] = []
        self.end: List[int] = []
        self.left: List[int] = []
        self.right: List[int] = []
        centroids: List[np.ndarray] = []
        radii: List[float] = []
        self._build(0, X.shape[0], centroids, radii)
        self.centroids = np.array(centroids)
        self.radii = np.array(radii)
        self._finalize()

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.start)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def _build(self, start, end, centroids, radii) -> int:
        node = len(self.start)
        pts = self.data[self.idx[start:end]]
        centroid = pts.mean(axis=0)
        radius = float(np.sqrt(((pts - centroid) ** 2).sum(axis=1)).max())
        self.start.append(start)
        self.end.append(end)
        self.left.append(-1)
        self.right.append(-1)
        centroids.append(centroid)
        radii.append(radius)
        n = end - start
        if n <= self.leaf_size:
            return node
        spread = pts.max(axis=0) - pts.min(axis=0)
        dim = int(np.argmax(spread))
        # stable sort keeps construction deterministic when values repeat
        order = np.argsort(pts[:, dim], kind="stable")
        self.idx[start:end] = self.idx[start:end][order]
        mid = start + n // 2
        self.left[node] = self._build(start, mid, centroids, radii)
        self.right[node] = self._build(mid, end, centroids, radii)
        return node

    def leaves(self) -> List[int]:
        return [k for k in range(self.n_nodes) if self.is_leaf(k)]

    def node_points(self, node: int) -> np.ndarray:
        return self.idx[self.start[node]:self.end[node]]

    def _finalize(self) -> None:
        # leaf slices become contiguous views, so scans avoid fancy indexing
        self._sorted = self.data[self.idx]

    def query(self, q) -> Tuple[int, float]:
        """Index and distance of the nearest point; ties go to the lowest index."""
        q = np.asarray(q, dtype=np.float64).ravel()
        idx, dist = self.query_many(q[None, :])
        return int(idx[0]), float(dist[0])

    def query_many(self, Q) -> Tuple[np.ndarray, np.ndarray]:
        """Exact nearest neighbour for each row of ``Q``.

        Branch and bound over the tree with all queries in flight at once;
        each query descends into its nearer child first.
        """
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.dim:
            raise DimensionMismatch(f"queries must have shape (m, {self.dim}), got {Q.shape}")
        m = Q.shape[0]
        best_d = np.full(m, np.inf)
        best_i = np.full(m, -1, dtype=np.int64)
        pts, idx, cents, radii = self._sorted, self.idx, self.centroids, self.radii

        def lower_bound(node, qs):
            diff = Q[qs] - cents[node]
            return np.maximum(0.0, np.sqrt(np.einsum("ij,ij->i", diff, diff)) - radii[node])

        def visit(node, qs, bound):
            bd = best_d[qs]
            keep = bound <= bd + _SLACK * (1.0 + bd)
            if not keep.all():
                qs = qs[keep]
            if qs.size == 0:
                return
            s, e = self.start[node], self.end[node]
            if self.left[node] < 0:
                diff = Q[qs][:, None, :] - pts[s:e][None, :, :]
                d = np.sqrt(np.einsum("kij,kij->ki", diff, diff))
                dmin = d.min(axis=1)
                cand = np.where(d == dmin[:, None], idx[s:e][None, :], np.iinfo(np.int64).max).min(axis=1)
                cur_d, cur_i = best_d[qs], best_i[qs]
                better = (dmin < cur_d) | ((dmin == cur_d) & (cand < cur_i))
                best_d[qs[better]] = dmin[better]
                best_i[qs[better]] = cand[better]
                return
            l, r = self.left[node], self.right[node]
            bl, br = lower_bound(l, qs), lower_bound(r, qs)
            near_left = bl <= br
            visit(l, qs[near_left], bl[near_left])
            visit(r, qs, br)
            visit(l, qs[~near_left], bl[~near_left])

        if m:
            visit(0, np.arange(m), lower_bound(0, np.arange(m)))
        return best_i, best_d


def build_ball_tree(points, leaf_size: int = 32) -> BallTree:
    return BallTree(points, leaf_size)

