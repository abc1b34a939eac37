"""2-D polygonal worlds, a ray-cast distance/class sensor and training-set construction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import MultiPoint, Polygon
from shapely.geometry.polygon import orient

from .sparse_gp import ObservationBatch

NO_HIT = 0


class GenerationError(RuntimeError):
    pass


class InvalidPoseError(ValueError):
    pass


class DegeneratePlaneError(ValueError):
    pass


@dataclass
class Environment:
    """Disjoint simple polygons grouped by class id (1..L) inside a bounding box."""

    polygons: dict  # class id -> list of (k x 2) vertex arrays
    bbox: tuple  # (xmin, ymin, xmax, ymax)
    num_classes: int

    def __post_init__(self):
        self.polygons = {int(c): [np.asarray(p, dtype=float) for p in ps] for c, ps in self.polygons.items()}
        self._shapes = {c: [Polygon(p) for p in ps] for c, ps in self.polygons.items()}
        self._union = {c: shapely.union_all(s) if s else Polygon() for c, s in self._shapes.items()}
        self._edges = {}
        for c, ps in self.polygons.items():
            segs = [np.stack([p, np.roll(p, -1, axis=0)], axis=1) for p in ps]
            self._edges[c] = np.concatenate(segs) if segs else np.zeros((0, 2, 2))

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.bbox[:2], dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.bbox[2:], dtype=float)

    def class_ids(self) -> list[int]:
        return list(range(1, self.num_classes + 1))

    def edges(self, cls_id: int) -> np.ndarray:
        return self._edges.get(cls_id, np.zeros((0, 2, 2)))

    def inside(self, cls_id: int, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        geom = self._union.get(cls_id)
        if geom is None or geom.is_empty:
            return np.zeros(len(X), dtype=bool)
        return shapely.covers(geom, shapely.points(X))

    def occupied_by(self, X) -> np.ndarray:
        """Class id occupying each point, or 0 for free space."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(len(X), dtype=np.int64)
        for c in self.class_ids():
            out[self.inside(c, X) & (out == 0)] = c
        return out

    def signed_distance(self, cls_id: int, X, truncation: float | None = None) -> np.ndarray:
        """Euclidean signed distance to the boundary of class ``cls_id`` (negative inside)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        geom = self._union.get(cls_id)
        if geom is None or geom.is_empty:
            d = np.full(len(X), np.inf)
        else:
            d = shapely.distance(geom.boundary, shapely.points(X))
            d = np.where(self.inside(cls_id, X), -d, d)
        if truncation is not None:
            d = np.clip(d, -truncation, truncation)
        return d

    def clearance(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        best = np.full(len(X), np.inf)
        for c in self.class_ids():
            best = np.minimum(best, self.signed_distance(c, X))
        return best

    def to_dict(self) -> dict:
        return {
            "bbox": [float(v) for v in self.bbox],
            "num_classes": self.num_classes,
            "classes": {str(c): [p.tolist() for p in self.polygons.get(c, [])] for c in self.class_ids()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        polys = {int(c): [np.asarray(p, dtype=float) for p in ps] for c, ps in d["classes"].items()}
        return cls(polys, tuple(d["bbox"]), int(d["num_classes"]))


def generate_environment(seed: int, bbox=(0.0, 0.0, 10.0, 10.0), num_classes: int = 2,
                         num_polygons: int = 6, radius_range=(0.5, 1.5), vertex_range=(3, 8),
                         margin: float = 1.0, separation: float = 0.5,
                         max_tries: int = 2000) -> Environment:
    """Random convex polygons, classes assigned round-robin, pairwise separated.

    ``margin`` keeps every polygon that far from the bounding box; ``separation``
    is the minimum gap between any two polygons.
    """
    if num_classes < 1 or num_polygons < 1:
        raise ValueError("need at least one class and one polygon")
    if radius_range[0] <= 0 or radius_range[1] < radius_range[0]:
        raise ValueError("bad radius range")
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = bbox
    placed: list[Polygon] = []
    verts: list[np.ndarray] = []
    for _ in range(num_polygons):
        for _attempt in range(max_tries):
            r = rng.uniform(*radius_range)
            cx = rng.uniform(xmin + margin + r, xmax - margin - r) if xmax - xmin > 2 * (margin + r) else None
            cy = rng.uniform(ymin + margin + r, ymax - margin - r) if ymax - ymin > 2 * (margin + r) else None
            if cx is None or cy is None:
                continue
            k = int(rng.integers(vertex_range[0], vertex_range[1] + 1))
            ang = np.sort(rng.uniform(0.0, 2 * math.pi, size=k))
            rad = r * rng.uniform(0.6, 1.0, size=k)
            pts = np.column_stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)])
            hull = MultiPoint(pts).convex_hull
            if not isinstance(hull, Polygon) or hull.area < 0.05 * r * r:
                continue
            if any(hull.distance(q) < separation for q in placed):
                continue
            placed.append(hull)
            # counter-clockwise vertices without the closing repeat
            coords = np.asarray(orient(hull, 1.0).exterior.coords)[:-1]
            verts.append(np.round(coords, 12))
            break
        else:
            raise GenerationError(f"could not place polygon {len(placed) + 1} after {max_tries} tries")
    polygons: dict = {c: [] for c in range(1, num_classes + 1)}
    for i, v in enumerate(verts):
        polygons[i % num_classes + 1].append(v)
    return Environment(polygons, tuple(float(b) for b in bbox), num_classes)


def make_frame(num_rays: int = 180, fov: float = 2 * math.pi) -> np.ndarray:
    """Unit ray directions in the sensor frame, spread evenly over ``fov``."""
    if fov >= 2 * math.pi - 1e-12:
        ang = np.arange(num_rays) * (2 * math.pi / num_rays)
    else:
        ang = np.linspace(-fov / 2, fov / 2, num_rays)
    return np.column_stack([np.cos(ang), np.sin(ang)])


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _ray_hits(origins: np.ndarray, dirs: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Distance along each ray to its first crossing of any segment (inf if none)."""
    if len(edges) == 0:
        return np.full(len(dirs), np.inf)
    a = edges[:, 0, :][None, :, :]
    e = (edges[:, 1, :] - edges[:, 0, :])[None, :, :]
    p = origins[:, None, :]
    d = dirs[:, None, :]
    denom = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
    ap = a - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ap[..., 0] * e[..., 1] - ap[..., 1] * e[..., 0]) / denom
        s = (ap[..., 0] * d[..., 1] - ap[..., 1] * d[..., 0]) / denom
    ok = (np.abs(denom) > 1e-15) & (t >= -1e-12) & (s >= -1e-12) & (s <= 1 + 1e-12)
    t = np.where(ok, np.maximum(t, 0.0), np.inf)
    return t.min(axis=1)


def directional_distance(env: Environment, x, eta, truncation: float) -> dict:
    """Truncated signed directional distance to every class boundary from ``x`` along ``eta``."""
    x = np.asarray(x, dtype=float).reshape(1, 2)
    eta = np.asarray(eta, dtype=float).reshape(1, 2)
    if abs(np.linalg.norm(eta) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    out = {}
    for c in env.class_ids():
        d = min(float(_ray_hits(x, eta, env.edges(c))[0]), truncation)
        out[c] = -d if env.inside(c, x)[0] else d
    return out


@dataclass
class SensorObservation:
    position: np.ndarray
    heading: float
    directions: np.ndarray  # world-frame unit rays
    distances: np.ndarray
    classes: np.ndarray  # 0 marks a ray with no hit
    max_range: float

    @property
    def rotation(self) -> np.ndarray:
        return rotation(self.heading)

    def endpoints(self) -> np.ndarray:
        return self.position + self.distances[:, None] * self.directions


def observe(env: Environment, pose, frame: np.ndarray, noise_var: float = 0.0,
            class_error: float = 0.0, rng: np.random.Generator | None = None,
            max_range: float = 10.0) -> SensorObservation:
    """Simulate one scan from ``pose = (x, y, heading)``."""
    rng = np.random.default_rng() if rng is None else rng
    p = np.asarray(pose[:2], dtype=float)
    theta = float(pose[2])
    if env.occupied_by(p)[0] != 0:
        raise InvalidPoseError(f"pose {p} lies inside an obstacle")
    dirs = frame @ rotation(theta).T
    origins = np.repeat(p[None, :], len(dirs), axis=0)
    ids = env.class_ids()
    h = np.stack([np.minimum(_ray_hits(origins, dirs, env.edges(c)), max_range) for c in ids])
    best = np.argmin(np.abs(h), axis=0)  # ties resolve to the lowest class id
    dist = h[best, np.arange(len(dirs))]
    hit = dist < max_range
    classes = np.where(hit, np.asarray(ids)[best], NO_HIT)
    if noise_var > 0:
        dist = dist + rng.normal(0.0, math.sqrt(noise_var), size=len(dist))
    dist = np.where(hit, np.clip(dist, 0.0, max_range), max_range)
    if class_error > 0 and len(ids) > 1:
        flip = hit & (rng.random(len(dirs)) < class_error)
        shift = rng.integers(1, len(ids), size=len(dirs))
        classes = np.where(flip, (classes - 1 + shift) % len(ids) + 1, classes)
    return SensorObservation(p, theta, dirs, dist, classes.astype(np.int64), max_range)


def _surface_normals(obs: SensorObservation, max_gap: float) -> np.ndarray:
    """Per-ray unit normal of the local surface segment, oriented toward the sensor."""
    X = obs.endpoints()
    n = len(X)
    normals = -obs.directions.copy()
    hit = obs.classes != NO_HIT
    for k in np.flatnonzero(hit):
        tangent = None
        for j in (k + 1, k - 1):
            if 0 <= j < n and obs.classes[j] == obs.classes[k]:
                t = X[j] - X[k]
                if 0 < np.linalg.norm(t) <= max_gap:
                    tangent = t
                    break
        if tangent is None:
            continue
        nrm = np.array([-tangent[1], tangent[0]]) / np.linalg.norm(tangent)
        if nrm @ (obs.position - X[k]) < 0:
            nrm = -nrm
        normals[k] = nrm
    return normals


def build_training_batch_2d(obs: SensorObservation, voxel_size: float, frame_size: int = 10,
                            max_gap: float = 0.5, truncation: float | None = None) -> dict:
    """Label a frame_size x frame_size block of grid points around every hit.

    Labels are signed distances to the local surface line through the hit,
    clipped to +-truncation when given. Returns {class id: ObservationBatch}
    with duplicates aggregated.
    """
    if frame_size < 1:
        raise ValueError("frame_size must be >= 1")
    hit = obs.classes != NO_HIT
    if not hit.any():
        return {}
    X = obs.endpoints()[hit]
    normals = _surface_normals(obs, max_gap)[hit]
    cls = obs.classes[hit]
    start = np.rint(X / voxel_size - (frame_size - 1) / 2.0).astype(np.int64)
    off = np.stack(np.meshgrid(np.arange(frame_size), np.arange(frame_size), indexing="ij"), -1).reshape(-1, 2)
    keys = start[:, None, :] + off[None, :, :]  # (H, F*F, 2)
    pts = keys * voxel_size
    labels = np.einsum("hkd,hd->hk", pts - X[:, None, :], normals)
    if truncation is not None:
        labels = np.clip(labels, -truncation, truncation)
    out = {}
    for c in np.unique(cls):
        sel = cls == c
        out[int(c)] = ObservationBatch.from_samples(keys[sel].reshape(-1, 2), labels[sel].reshape(-1), voxel_size)
    return out


def tsdf_label_plane_3d(x, x_hat, x_right, x_up, sensor_pos) -> float:
    """Signed distance from ``x`` to the plane through three adjacent ray endpoints."""
    x, x_hat, x_right, x_up, p = (np.asarray(v, dtype=float) for v in (x, x_hat, x_right, x_up, sensor_pos))
    q = np.cross(x_right - x_hat, x_up - x_hat)
    norm = np.linalg.norm(q)
    if norm < 1e-12:
        raise DegeneratePlaneError("surface points are collinear")
    q = q / norm
    s = np.sign(q @ (p - x_hat))
    n = (s if s != 0 else 1.0) * q
    return float(n @ (x - x_hat))


def sample_trajectory(env: Environment, seed: int, length: int, step: float | None = None,
                      clearance: float = 0.2, max_tries: int = 10000) -> list[tuple[float, float, float]]:
    """Free-space poses with uniform headings.

    With ``step=None`` positions are independent uniform draws; otherwise each
    pose is drawn within ``step`` of the previous one.
    """
    rng = np.random.default_rng(seed)
    lo, hi = env.lo, env.hi
    poses: list[tuple[float, float, float]] = []
    prev = None
    for _ in range(length):
        for _attempt in range(max_tries):
            if prev is None or step is None:
                p = rng.uniform(lo, hi)
            else:
                a = rng.uniform(0, 2 * math.pi)
                r = step * math.sqrt(rng.uniform())
                p = prev + r * np.array([math.cos(a), math.sin(a)])
                if np.any(p < lo) or np.any(p > hi):
                    continue
            if env.clearance(p)[0] >= clearance:
                break
        else:
            raise GenerationError("could not sample a free-space pose")
        prev = p
        poses.append((float(p[0]), float(p[1]), float(rng.uniform(-math.pi, math.pi))))
    return poses
