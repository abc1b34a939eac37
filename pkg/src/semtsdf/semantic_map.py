"""Multi-class TSDF map built from one spatial tree per semantic class."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np
from skimage.measure import find_contours

from .kernel import KernelSpec
from .sparse_gp import ObservationBatch
from .spatial_tree import SpatialTree


def class_probabilities(mu, sigma) -> np.ndarray:
    """Probability of each class being the surface class at a zero-crossing.

    ``mu`` and ``sigma`` have shape (L,) or (L, N). The weight of class ``l`` is
    ``phi(mu_l / sigma_l) / sigma_l``; weights are normalized over classes.

    A class with ``sigma = 0`` is a point mass: it takes all the mass (shared
    uniformly with other such classes) when ``mu = 0``, and none otherwise.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    squeeze = mu.ndim == 1
    if squeeze:
        mu = mu[:, None]
        sigma = sigma[:, None]
    L, N = mu.shape
    out = np.zeros((L, N))
    zero_sd = sigma <= 0
    spike = zero_sd & (mu == 0)
    has_spike = spike.any(axis=0)
    if has_spike.any():
        out[:, has_spike] = spike[:, has_spike] / spike[:, has_spike].sum(axis=0)
    rest = ~has_spike
    if rest.any():
        m = mu[:, rest]
        s = np.where(zero_sd[:, rest], 1.0, sigma[:, rest])
        logw = -0.5 * (m / s) ** 2 - np.log(s)
        logw = np.where(zero_sd[:, rest], -np.inf, logw)
        top = logw.max(axis=0)
        dead = ~np.isfinite(top)
        top = np.where(dead, 0.0, top)
        w = np.exp(logw - top)
        total = w.sum(axis=0)
        p = np.where(dead, 1.0 / L, w / np.where(total > 0, total, 1.0))
        out[:, rest] = p
    return out[:, 0] if squeeze else out


class SemanticMap:
    """Per-class sparse-GP TSDF estimates over a shared square/cubic workspace."""

    def __init__(self, kernel: KernelSpec, sigma2: float, voxel_size: float, center, side: float,
                 delta: float = 1.5, max_leaf: int | float = 100, prior_mean: float = 0.0,
                 truncation: float | None = None, num_classes: int | None = None,
                 online: bool = False):
        self.kernel = kernel
        self.sigma2 = float(sigma2)
        self.voxel_size = float(voxel_size)
        self.center = np.asarray(center, dtype=float)
        self.side = float(side)
        self.delta = float(delta)
        self.max_leaf = max_leaf
        self.prior_mean = float(prior_mean)
        self.truncation = 3.0 * voxel_size if truncation is None else float(truncation)
        self.num_classes = num_classes
        self.online = online
        self.trees: dict[int, SpatialTree] = {}

    @classmethod
    def for_bounds(cls, lo, hi, voxel_size: float, **kwargs) -> "SemanticMap":
        """Square root region covering [lo, hi], side rounded up to whole voxels."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        side = math.ceil(float(np.max(hi - lo)) / voxel_size - 1e-9) * voxel_size
        return cls(center=(lo + hi) / 2.0, side=side, voxel_size=voxel_size, **kwargs)

    def empty_like(self) -> "SemanticMap":
        return SemanticMap(self.kernel, self.sigma2, self.voxel_size, self.center, self.side,
                           self.delta, self.max_leaf, self.prior_mean, self.truncation,
                           self.num_classes, self.online)

    def _new_tree(self) -> SpatialTree:
        return SpatialTree(self.kernel, self.sigma2, self.voxel_size, self.center, self.side,
                           self.delta, self.max_leaf, self.prior_mean, self.online)

    @property
    def classes(self) -> list[int]:
        return sorted(self.trees)

    def ingest(self, batches: Mapping[int, ObservationBatch]) -> None:
        for cls_id in sorted(batches):
            batch = batches[cls_id]
            if self.num_classes is not None and not 1 <= cls_id <= self.num_classes:
                raise ValueError(f"class id {cls_id} outside 1..{self.num_classes}")
            if len(batch) == 0:
                continue
            if cls_id not in self.trees:
                self.trees[cls_id] = self._new_tree()
            self.trees[cls_id].insert(batch)

    def point_stats(self, cls_id: int) -> dict:
        tree = self.trees.get(cls_id)
        return {} if tree is None else tree.stats.as_map()

    def query_tsdf(self, cls_id: int, x) -> tuple[float, float]:
        mu, sd = self.query_tsdf_many(cls_id, np.atleast_2d(x))
        return float(mu[0]), float(sd[0])

    def predict_many(self, cls_id: int, X) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of one class at many points."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tree = self.trees.get(cls_id)
        if tree is None:
            probe = self._new_tree()
            return probe.predict_many(X)
        return tree.predict_many(X)

    def query_tsdf_many(self, cls_id: int, X) -> tuple[np.ndarray, np.ndarray]:
        mu, var = self.predict_many(cls_id, X)
        return mu, np.sqrt(np.clip(var, 0.0, None))

    def class_posterior(self, x) -> tuple[list[int], np.ndarray]:
        ids, P = self.class_posterior_many(np.atleast_2d(x))
        return ids, P[:, 0]

    def class_posterior_many(self, X) -> tuple[list[int], np.ndarray]:
        """Returns the observed class ids and an (L, N) probability matrix."""
        ids = self.classes
        if not ids:
            raise ValueError("no class has been observed yet")
        stats = [self.query_tsdf_many(c, X) for c in ids]
        mu = np.stack([s[0] for s in stats])
        sd = np.stack([s[1] for s in stats])
        return ids, class_probabilities(mu, sd)

    def refresh_caches(self) -> None:
        for tree in self.trees.values():
            tree.refresh_caches()

    def extract_surface(self, resolution: float | None = None, var_threshold: float | None = None):
        """Zero level set of each class mean via marching squares (2-D only).

        Grid cells whose predicted variance exceeds ``var_threshold`` are masked
        out. Returns {class: [polyline (k x 2) arrays]} sorted by first vertex.
        """
        if self.center.shape[0] != 2:
            raise ValueError("surface extraction is implemented for 2-D maps")
        res = 0.5 * self.voxel_size if resolution is None else resolution
        thr = 0.5 * self.kernel.signal_variance if var_threshold is None else var_threshold
        lo = self.center - self.side / 2.0
        n = int(math.floor(self.side / res + 1e-9)) + 1
        xs = lo[0] + res * np.arange(n)
        ys = lo[1] + res * np.arange(n)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        G = np.column_stack([gx.ravel(), gy.ravel()])
        out = {}
        for c in self.classes:
            mu, var = self.predict_many(c, G)
            mask = (var <= thr).reshape(n, n)
            lines = []
            if mask.any():
                for contour in find_contours(mu.reshape(n, n), 0.0, mask=mask):
                    pts = np.column_stack([lo[0] + res * contour[:, 0], lo[1] + res * contour[:, 1]])
                    lines.append(pts)
            lines.sort(key=lambda p: (round(p[0, 0], 9), round(p[0, 1], 9), len(p)))
            out[c] = lines
        return out

    def to_dict(self) -> dict:
        return {
            "voxel_size": self.voxel_size,
            "prior_mean": self.prior_mean,
            "sigma2": self.sigma2,
            "truncation": self.truncation,
            "kernel": self.kernel.to_dict(),
            "center": self.center.tolist(),
            "side": self.side,
            "classes": {str(c): self.trees[c].to_dict() for c in self.classes},
        }
