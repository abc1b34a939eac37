"""Overlapping 2^d-tree of independent sparse GPs.

Every node owns a test box T(N) (half side ``half``) used for prediction and a
larger support box S(N) (half side ``delta * half``) used for training. A leaf
stores exactly the pseudo points of its class that fall inside S(N), so a point
near a boundary is shared by the neighbouring leaves and predictions stay
continuous across test boxes.

Test boxes are half-open per axis: a point on an interior face belongs to the
child on the non-negative side. The root box is closed on its upper faces.
"""

from __future__ import annotations

import numpy as np

from .kernel import KernelSpec
from .sparse_gp import (
    GpStats,
    ObservationBatch,
    compressed_posterior,
    merge_batch,
    precision_from_scratch,
    update_precision,
)

MAX_DEPTH = 24


class OutOfBoundsError(ValueError):
    pass


class TreeNode:
    __slots__ = ("level", "center", "half", "children", "stats", "z")

    def __init__(self, level: int, center: np.ndarray, half: float, stats: GpStats | None = None):
        self.level = level
        self.center = np.asarray(center, dtype=float)
        self.half = float(half)
        self.children: list[TreeNode] = []
        self.stats = stats
        self.z: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def in_support(self, X: np.ndarray, delta: float) -> np.ndarray:
        return np.max(np.abs(X - self.center), axis=1) <= delta * self.half

    def in_test(self, X: np.ndarray) -> np.ndarray:
        return np.max(np.abs(X - self.center), axis=1) <= self.half

    def child_index(self, X: np.ndarray) -> np.ndarray:
        bits = (X >= self.center).astype(np.int64)
        weights = 1 << np.arange(X.shape[1])
        return bits @ weights


class SpatialTree:
    """Per-class tree of sparse GPs sharing kernel, noise and grid."""

    def __init__(self, kernel: KernelSpec, sigma2: float, voxel_size: float, center, side: float,
                 delta: float = 1.5, max_leaf: int | float = 100, prior_mean: float = 0.0,
                 online: bool = False):
        if delta <= 1:
            raise ValueError("delta must exceed 1")
        if max_leaf < 1:
            raise ValueError("max_leaf must be at least 1")
        self.kernel = kernel
        self.sigma2 = float(sigma2)
        self.voxel_size = float(voxel_size)
        self.delta = float(delta)
        self.max_leaf = max_leaf
        self.prior_mean = float(prior_mean)
        self.online = online
        center = np.asarray(center, dtype=float)
        self.dim = len(center)
        self.side = float(side)
        self.root = TreeNode(0, center, side / 2.0, self._empty())
        self.stats = self._empty()

    def _empty(self) -> GpStats:
        return GpStats([], np.zeros(0), np.zeros(0), self.prior_mean, self.voxel_size)

    # -- geometry ------------------------------------------------------------

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo = self.root.center - self.root.half
        hi = self.root.center + self.root.half
        return np.all((X >= lo) & (X <= hi), axis=1)

    def leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def depth(self) -> int:
        return max(leaf.level for leaf in self.leaves())

    # -- training ------------------------------------------------------------

    def insert(self, batch: ObservationBatch) -> None:
        if len(batch) == 0:
            return
        X = batch.coords()
        if not np.all(self.contains(X)):
            raise OutOfBoundsError("batch point outside the root test region")
        self.stats = merge_batch(self.stats, batch)
        self._insert(self.root, batch, X)

    def _insert(self, node: TreeNode, batch: ObservationBatch, X: np.ndarray) -> None:
        if node.is_leaf:
            if self.online:
                node.stats, node.z = update_precision(node.z, node.stats, batch, self.kernel, self.sigma2)
            else:
                node.stats = merge_batch(node.stats, batch)
                node.z = None
            if len(node.stats) > self.max_leaf:
                self._split(node)
            return
        for child in node.children:
            mask = child.in_support(X, self.delta)
            if mask.any():
                self._insert(child, batch.subset(mask), X[mask])

    def _split(self, node: TreeNode) -> None:
        if node.level >= MAX_DEPTH:
            return
        P = node.stats.coords()
        quarter = node.half / 2.0
        children = []
        for idx in range(1 << self.dim):
            signs = np.array([1.0 if (idx >> a) & 1 else -1.0 for a in range(self.dim)])
            child = TreeNode(node.level + 1, node.center + signs * quarter, quarter)
            mask = child.in_support(P, self.delta)
            child.stats = node.stats.subset(np.flatnonzero(mask))
            children.append(child)
        node.children = children
        node.stats = None
        node.z = None
        for child in children:
            if self.online and len(child.stats):
                child.z = precision_from_scratch(self.kernel, child.stats, self.sigma2)
            if len(child.stats) > self.max_leaf:
                self._split(child)

    # -- prediction ----------------------------------------------------------

    def locate_leaf(self, x) -> TreeNode:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if not self.contains(x)[0]:
            raise OutOfBoundsError(f"query {x[0]} outside the root test region")
        node = self.root
        while not node.is_leaf:
            node = node.children[int(node.child_index(x)[0])]
        return node

    def group_by_leaf(self, X) -> list[tuple[TreeNode, np.ndarray]]:
        """Partition query rows by owning leaf; returns (leaf, row indices)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not np.all(self.contains(X)):
            raise OutOfBoundsError("query outside the root test region")
        out = []
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if len(rows) == 0:
                continue
            if node.is_leaf:
                out.append((node, rows))
                continue
            ci = node.child_index(X[rows])
            for c, child in enumerate(node.children):
                stack.append((child, rows[ci == c]))
        return out

    def leaf_precision(self, leaf: TreeNode) -> np.ndarray | None:
        if len(leaf.stats) == 0:
            return None
        if leaf.z is None:
            leaf.z = precision_from_scratch(self.kernel, leaf.stats, self.sigma2)
        return leaf.z

    def predict(self, x) -> tuple[float, float]:
        leaf = self.locate_leaf(x)
        mean, var = compressed_posterior(self.kernel, leaf.stats, self.sigma2, np.atleast_2d(x),
                                         z=self.leaf_precision(leaf), full_cov=False)
        return float(mean[0]), float(var[0])

    def predict_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mean = np.empty(len(X))
        var = np.empty(len(X))
        for leaf, rows in self.group_by_leaf(X):
            m, v = compressed_posterior(self.kernel, leaf.stats, self.sigma2, X[rows],
                                        z=self.leaf_precision(leaf), full_cov=False)
            mean[rows] = m
            var[rows] = v
        return mean, var

    def refresh_caches(self) -> None:
        for leaf in self.leaves():
            self.leaf_precision(leaf)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        def node_dict(node: TreeNode) -> dict:
            d = {"level": node.level, "center": node.center.tolist(), "half": node.half}
            if node.is_leaf:
                d["stats"] = node.stats.to_dict()["points"]
            else:
                d["children"] = [node_dict(c) for c in node.children]
            return d

        return {
            "voxel_size": self.voxel_size,
            "prior_mean": self.prior_mean,
            "sigma2": self.sigma2,
            "delta": self.delta,
            "max_leaf": self.max_leaf if np.isfinite(self.max_leaf) else None,
            "kernel": self.kernel.to_dict(),
            "root": node_dict(self.root),
        }
