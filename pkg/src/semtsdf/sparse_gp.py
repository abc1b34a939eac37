"""Compressed incremental sparse GP regression on a pseudo-point grid.

Observations are snapped to integer lattice keys, so repeated observations of
one location collapse into a count ``m`` and a running mean ``zeta``. The
posterior computed from those statistics is identical to the posterior on the
raw data; the precision matrix

    Z = (K(P, P) + sigma2 * diag(1 / m))^-1

can be maintained incrementally with rank-one and block-inverse updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .kernel import KernelSpec, gram

JITTER = 1e-10

Key = tuple


class NumericalError(RuntimeError):
    pass


def _keys_to_array(keys: Sequence[Key], dim: int | None = None) -> np.ndarray:
    if len(keys) == 0:
        return np.zeros((0, dim or 2), dtype=np.int64)
    return np.asarray(keys, dtype=np.int64).reshape(len(keys), -1)


@dataclass
class ObservationBatch:
    """Unique pseudo points seen in one step with their counts and mean values.

    Counts are normally integers; the network protocols scale them by Perron
    weights, so real counts are accepted too.
    """

    keys: list
    counts: np.ndarray
    means: np.ndarray
    voxel_size: float = 1.0

    def __post_init__(self):
        self.keys = [tuple(int(v) for v in k) for k in self.keys]
        self.counts = np.asarray(self.counts, dtype=float).reshape(-1)
        self.means = np.asarray(self.means, dtype=float).reshape(-1)
        if not (len(self.keys) == len(self.counts) == len(self.means)):
            raise ValueError("keys, counts and means must have equal length")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("duplicate keys in batch")
        if np.any(self.counts <= 0):
            raise ValueError("batch counts must be positive")

    def __len__(self):
        return len(self.keys)

    @classmethod
    def _raw(cls, keys, counts, means, voxel_size) -> "ObservationBatch":
        # internal constructor for already-validated data
        b = object.__new__(cls)
        b.keys, b.counts, b.means, b.voxel_size = keys, counts, means, voxel_size
        return b

    @classmethod
    def empty(cls, voxel_size: float = 1.0) -> "ObservationBatch":
        return cls([], np.zeros(0), np.zeros(0), voxel_size)

    @classmethod
    def from_samples(cls, keys, values, voxel_size: float = 1.0) -> "ObservationBatch":
        """Aggregate raw (key, value) samples; keys keep first-seen order."""
        keys = np.asarray(keys, dtype=np.int64)
        values = np.asarray(values, dtype=float).reshape(-1)
        if keys.size == 0:
            return cls.empty(voxel_size)
        keys = keys.reshape(len(values), -1)
        uniq, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inv = inv.reshape(-1)
        counts = np.bincount(inv, minlength=len(uniq)).astype(float)
        sums = np.bincount(inv, weights=values, minlength=len(uniq))
        order = np.argsort(first, kind="stable")
        return cls(
            [tuple(k) for k in uniq[order].tolist()],
            counts[order],
            sums[order] / counts[order],
            voxel_size,
        )

    def scaled(self, weight: float) -> "ObservationBatch":
        return ObservationBatch(list(self.keys), self.counts * weight, self.means.copy(), self.voxel_size)

    def subset(self, mask: np.ndarray) -> "ObservationBatch":
        idx = np.flatnonzero(mask)
        return ObservationBatch._raw([self.keys[i] for i in idx], self.counts[idx], self.means[idx], self.voxel_size)

    def coords(self) -> np.ndarray:
        return _keys_to_array(self.keys).astype(float) * self.voxel_size

    def as_map(self) -> dict:
        return {k: (float(m), float(z)) for k, m, z in zip(self.keys, self.counts, self.means)}


def combine_batches(batches: Iterable[ObservationBatch], voxel_size: float | None = None) -> ObservationBatch:
    """Merge several batches into one with summed counts and weighted means."""
    counts: dict = {}
    sums: dict = {}
    vs = voxel_size
    for b in batches:
        vs = b.voxel_size if vs is None else vs
        for k, m, z in zip(b.keys, b.counts, b.means):
            if k in counts:
                counts[k] += m
                sums[k] += m * z
            else:
                counts[k] = m
                sums[k] = m * z
    keys = list(counts)
    c = np.array([counts[k] for k in keys], dtype=float)
    s = np.array([sums[k] for k in keys], dtype=float)
    if len(keys) == 0:
        return ObservationBatch.empty(vs or 1.0)
    return ObservationBatch(keys, c, s / c, vs or 1.0)


@dataclass
class GpStats:
    """Compressed training data: pseudo points with counts and mean values."""

    keys: list = field(default_factory=list)
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0))
    means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    prior_mean: float = 0.0
    voxel_size: float = 1.0

    def __post_init__(self):
        self.keys = [tuple(int(v) for v in k) for k in self.keys]
        self.counts = np.asarray(self.counts, dtype=float).reshape(-1)
        self.means = np.asarray(self.means, dtype=float).reshape(-1)
        if not (len(self.keys) == len(self.counts) == len(self.means)):
            raise ValueError("keys, counts and means must have equal length")
        self.index = {k: i for i, k in enumerate(self.keys)}
        if len(self.index) != len(self.keys):
            raise ValueError("duplicate keys in stats")
        if np.any(self.counts <= 0):
            raise ValueError("stored counts must be positive")
        self._coords = None

    def __len__(self):
        return len(self.keys)

    @classmethod
    def _raw(cls, keys, counts, means, prior_mean, voxel_size, index=None, coords=None) -> "GpStats":
        # internal constructor for already-validated data
        g = object.__new__(cls)
        g.keys, g.counts, g.means = keys, counts, means
        g.prior_mean, g.voxel_size = prior_mean, voxel_size
        g.index = {k: i for i, k in enumerate(keys)} if index is None else index
        g._coords = coords
        return g

    def coords(self) -> np.ndarray:
        if self._coords is None or len(self._coords) != len(self.keys):
            self._coords = _keys_to_array(self.keys).astype(float) * self.voxel_size
        return self._coords

    def subset(self, idx) -> "GpStats":
        idx = np.asarray(idx, dtype=np.int64)
        return GpStats._raw([self.keys[i] for i in idx], self.counts[idx], self.means[idx],
                            self.prior_mean, self.voxel_size, coords=self.coords()[idx])

    def as_map(self) -> dict:
        return {k: (float(m), float(z)) for k, m, z in zip(self.keys, self.counts, self.means)}

    def to_dict(self) -> dict:
        return {
            "voxel_size": self.voxel_size,
            "prior_mean": self.prior_mean,
            "points": {",".join(map(str, k)): [float(m), float(z)]
                       for k, m, z in zip(self.keys, self.counts, self.means)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GpStats":
        keys, counts, means = [], [], []
        for k, (m, z) in d["points"].items():
            keys.append(tuple(int(v) for v in k.split(",")))
            counts.append(m)
            means.append(z)
        return cls(keys, np.array(counts), np.array(means), float(d.get("prior_mean", 0.0)),
                   float(d.get("voxel_size", 1.0)))


def merge_batch(stats: GpStats, batch: ObservationBatch) -> GpStats:
    """Fold a batch into the running statistics (count-weighted means)."""
    if len(batch) == 0:
        return stats
    counts = stats.counts.copy()
    sums = stats.counts * stats.means
    new_keys, new_m, new_z = [], [], []
    for k, m, z in zip(batch.keys, batch.counts, batch.means):
        i = stats.index.get(k)
        if i is None:
            new_keys.append(k)
            new_m.append(m)
            new_z.append(z)
        else:
            counts[i] += m
            sums[i] += m * z
    means = stats.means.copy()
    touched = counts != stats.counts
    means[touched] = sums[touched] / counts[touched]
    index = dict(stats.index)
    for k in new_keys:
        index[k] = len(index)
    return GpStats._raw(
        stats.keys + new_keys,
        np.concatenate([counts, np.asarray(new_m, dtype=float)]),
        np.concatenate([means, np.asarray(new_z, dtype=float)]),
        stats.prior_mean,
        stats.voxel_size,
        index,
    )


def _spd_inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix, with one jitter retry."""
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    for jitter in (0.0, JITTER):
        try:
            c = linalg.cho_factor(A + jitter * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        inv = linalg.cho_solve(c, np.eye(n), check_finite=False)
        return 0.5 * (inv + inv.T)
    raise NumericalError("matrix is not positive definite even with jitter")


def precision_from_scratch(kernel: KernelSpec, stats: GpStats, sigma2: float) -> np.ndarray:
    P = stats.coords()
    return _spd_inverse(gram(kernel, P) + np.diag(sigma2 / stats.counts))


def full_gp_posterior(kernel: KernelSpec, prior_mean: float, X, y, sigma2: float, queries):
    """Exact GP posterior from raw (possibly repeated) inputs by a dense solve."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    Q = np.asarray(queries, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if Q.ndim == 1:
        Q = Q[None, :]
    if len(X) != len(y) or len(y) == 0:
        raise ValueError("need |X| = |y| >= 1")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    K = gram(kernel, X) + sigma2 * np.eye(len(X))
    Kq = gram(kernel, Q, X)
    try:
        c = linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError("singular training covariance") from exc
    alpha = linalg.cho_solve(c, y - prior_mean, check_finite=False)
    mean = prior_mean + Kq @ alpha
    cov = gram(kernel, Q) - Kq @ linalg.cho_solve(c, Kq.T, check_finite=False)
    return mean, 0.5 * (cov + cov.T)


def compressed_posterior(kernel: KernelSpec, stats: GpStats, sigma2: float, queries,
                         z: np.ndarray | None = None, full_cov: bool = True):
    """Posterior mean and covariance (or variance if ``full_cov`` is False).

    ``z`` is an optional cached precision matrix matching ``stats`` order.
    """
    Q = np.asarray(queries, dtype=float)
    if Q.ndim == 1:
        Q = Q[None, :]
    mu0 = stats.prior_mean
    if len(stats) == 0:
        mean = np.full(len(Q), mu0)
        if full_cov:
            return mean, gram(kernel, Q)
        return mean, np.full(len(Q), kernel.signal_variance)
    if z is None:
        z = precision_from_scratch(kernel, stats, sigma2)
    Kq = gram(kernel, Q, stats.coords())
    A = Kq @ z
    mean = mu0 + A @ (stats.means - mu0)
    if full_cov:
        cov = gram(kernel, Q) - A @ Kq.T
        return mean, 0.5 * (cov + cov.T)
    var = kernel.signal_variance - np.einsum("ij,ij->i", A, Kq)
    return mean, var


def update_precision_existing(z: np.ndarray, index: int, m_old: float, m_new: float,
                              sigma2: float) -> np.ndarray:
    """Sherman-Morrison update of Z after the count at ``index`` changes."""
    if m_old <= 0 or m_new <= 0:
        raise ValueError("counts must be positive")
    eps = sigma2 * (1.0 / m_new - 1.0 / m_old)
    if eps == 0.0:
        return z
    col = z[:, index]
    denom = 1.0 / eps + col[index]
    if abs(denom) <= 1e-14 * max(1.0, abs(1.0 / eps)):
        raise NumericalError("rank-one update denominator vanished")
    out = z - np.outer(col, col) / denom
    return 0.5 * (out + out.T)


def extend_precision_new_points(z: np.ndarray, stats: GpStats, new_batch: ObservationBatch,
                                kernel: KernelSpec, sigma2: float) -> np.ndarray:
    """Block-inverse extension of Z by pseudo points observed for the first time.

    ``stats`` describes the points already represented in ``z`` (same order).
    """
    if len(new_batch) == 0:
        return z
    if any(k in stats.index for k in new_batch.keys):
        raise ValueError("new points must be disjoint from existing stats")
    Pn = new_batch.coords()
    D = gram(kernel, Pn) + np.diag(sigma2 / new_batch.counts)
    if len(stats) == 0:
        return _spd_inverse(D)
    C = gram(kernel, stats.coords(), Pn)
    BC = z @ C
    S = _spd_inverse(D - C.T @ BC)
    BCS = BC @ S
    top_left = z + BCS @ BC.T
    out = np.block([[top_left, -BCS], [-BCS.T, S]])
    return 0.5 * (out + out.T)


def update_precision(z: np.ndarray | None, stats: GpStats, batch: ObservationBatch,
                     kernel: KernelSpec, sigma2: float) -> tuple[GpStats, np.ndarray]:
    """Merge ``batch`` into ``stats`` and carry ``z`` along incrementally."""
    if z is None:
        z = np.zeros((0, 0)) if len(stats) == 0 else precision_from_scratch(kernel, stats, sigma2)
    fresh = np.array([k not in stats.index for k in batch.keys], dtype=bool)
    for k, m in zip(batch.keys, batch.counts):
        i = stats.index.get(k)
        if i is not None:
            z = update_precision_existing(z, i, stats.counts[i], stats.counts[i] + m, sigma2)
    new_part = batch.subset(fresh)
    # the block extension needs the pre-merge point order, which merge_batch preserves
    z = extend_precision_new_points(z, stats, new_part, kernel, sigma2)
    return merge_batch(stats, batch), z
