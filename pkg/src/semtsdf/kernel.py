"""Compactly supported Matern-3/2 covariance functions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

SQRT3 = math.sqrt(3.0)


class InvalidInputError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Matern nu=3/2 kernel, tapered to exactly zero beyond ``cutoff_radius``.

    The taper is the Wendland function ``(1 - r/c)_+^4 (1 + 4 r/c)``, which is
    positive definite in up to three dimensions, so the product stays a valid
    covariance. With ``cutoff_radius=inf`` the plain Matern form is returned.
    """

    lengthscale: float
    signal_variance: float = 1.0
    cutoff_radius: float = math.inf

    def __post_init__(self):
        for name in ("lengthscale", "signal_variance", "cutoff_radius"):
            v = getattr(self, name)
            if not (v > 0) or math.isnan(v):
                raise InvalidInputError(f"{name} must be positive, got {v!r}")
        if math.isinf(self.lengthscale) or math.isinf(self.signal_variance):
            raise InvalidInputError("lengthscale and signal_variance must be finite")

    @classmethod
    def default(cls, voxel_size: float) -> "KernelSpec":
        ell = 3.0 * voxel_size
        return cls(lengthscale=ell, signal_variance=1.0, cutoff_radius=3.0 * ell)

    def of_distance(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        a = SQRT3 * r / self.lengthscale
        k = self.signal_variance * (1.0 + a) * np.exp(-a)
        if math.isfinite(self.cutoff_radius):
            u = np.clip(1.0 - r / self.cutoff_radius, 0.0, None)
            k = k * (u**4 * (1.0 + 4.0 * r / self.cutoff_radius))
            k = np.where(r >= self.cutoff_radius, 0.0, k)
        return k

    def to_dict(self) -> dict:
        return {
            "lengthscale": self.lengthscale,
            "signal_variance": self.signal_variance,
            "cutoff_radius": self.cutoff_radius if math.isfinite(self.cutoff_radius) else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        cutoff = d.get("cutoff_radius")
        return cls(
            lengthscale=float(d["lengthscale"]),
            signal_variance=float(d.get("signal_variance", 1.0)),
            cutoff_radius=math.inf if cutoff is None else float(cutoff),
        )


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("non-finite coordinates")
    return x


def eval(spec: KernelSpec, x, x2) -> float:
    a = _as_points(x)
    b = _as_points(x2)
    if a.shape != b.shape or a.shape[0] != 1:
        raise InvalidInputError("eval expects two single points of equal dimension")
    r = float(np.linalg.norm(a[0] - b[0]))
    return float(spec.of_distance(r))


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel matrix between point lists ``A`` (n x d) and ``B`` (m x d)."""
    a = _as_points(A) if len(A) else np.zeros((0, np.shape(A)[-1] if np.ndim(A) == 2 else 2))
    if B is None:
        b = a
    else:
        b = _as_points(B) if len(B) else np.zeros((0, a.shape[1]))
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError("point dimension mismatch")
    K = spec.of_distance(cdist(a, b))
    if B is None:
        # cdist is symmetric up to rounding; force exact symmetry
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, spec.signal_variance)
    return K
