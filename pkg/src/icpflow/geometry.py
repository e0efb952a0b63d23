"""Rigid transforms, point clouds, closed-form rigid fitting and exact nearest neighbor."""
from dataclasses import dataclass

import numpy as np

from . import kernels


class DegenerateInput(ValueError):
    """Correspondences do not determine a rotation (too few or collinear)."""


class EmptyIndex(ValueError):
    """Nearest-neighbor index built over zero points."""


def _frozen(a, shape):
    a = np.array(a, dtype=np.float64)
    if a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


CONSTRUCT_ATOL = 1e-6


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion ``x -> R @ x + t``.

    Parameters
    ----------
    rotation : (3, 3) orthonormal matrix with det +1
    translation : (3,) vector in meters
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))
        if not np.all(np.isfinite(self.as_matrix())):
            raise ValueError("transform entries must be finite")
        # loose guard against non-rotations; is_valid() applies the tight tolerance
        if self.orthonormality_error() > CONSTRUCT_ATOL:
            raise ValueError("rotation must be orthonormal with det +1")

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("homogeneous matrix must be 4x4")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw_deg, translation=(0.0, 0.0, 0.0)):
        """Rotation about +z by ``yaw_deg`` degrees, then ``translation``."""
        c, s = np.cos(np.radians(yaw_deg)), np.sin(np.radians(yaw_deg))
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), translation)

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def orthonormality_error(self):
        """Largest entry of ``|R^T R - I|`` and ``|det R - 1|``."""
        r = self.rotation
        return max(
            float(np.max(np.abs(r.T @ r - np.eye(3)))),
            abs(float(np.linalg.det(r)) - 1.0),
        )

    def is_valid(self, atol=1e-9):
        return bool(np.all(np.isfinite(self.as_matrix()))) and self.orthonormality_error() <= atol

    def allclose(self, other, atol=1e-9):
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )

    def yaw_deg(self):
        return float(np.degrees(np.arctan2(self.rotation[1, 0], self.rotation[0, 0])))

    def rotation_angle_deg(self):
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))

    def __repr__(self):
        return (
            f"RigidTransform(yaw={self.yaw_deg():.4f}deg, "
            f"t={np.array2string(self.translation, precision=4)})"
        )


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered (N, 3) points in meters with a timestamp in seconds."""

    points: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "timestamp", float(self.timestamp))

    def __len__(self):
        return len(self.points)


def orthonormalize(rotation):
    """Nearest proper rotation to ``rotation`` in the Frobenius sense."""
    u, _, vt = np.linalg.svd(rotation)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def compose(a, b):
    """Transform equal to applying ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    out = RigidTransform(r, t)
    if out.orthonormality_error() > 1e-7:
        out = RigidTransform(orthonormalize(r), t)
    return out


def invert(t):
    rt = t.rotation.T
    return RigidTransform(rt, -(rt @ t.translation))


def transform_points(t, points):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return points @ t.rotation.T + t.translation


def apply(t, pc):
    """Apply ``t`` to a PointCloud (returns a PointCloud) or an (N, 3) array."""
    if isinstance(pc, PointCloud):
        return PointCloud(transform_points(t, pc.points), pc.timestamp)
    return transform_points(t, pc)


def best_rigid_fit(src, dst):
    """Least-squares proper rigid transform mapping ``src`` onto ``dst``.

    Closed form from the SVD of the centered cross-covariance, with the
    determinant correction that keeps ``det(R) = +1``.

    Raises
    ------
    DegenerateInput
        Fewer than 3 pairs, or the centered cross-covariance has rank < 2.
        Callers fall back to the centroid translation.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(dst):
        raise ValueError("src and dst must have equal length")
    if len(src) < 3:
        raise DegenerateInput(f"need at least 3 correspondences, got {len(src)}")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, s, vt = np.linalg.svd(h)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateInput("cross-covariance rank < 2")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, cd - r @ cs)


def translation_fit(src, dst):
    """Translation-only fallback: dst centroid minus src centroid."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    return RigidTransform.from_translation(dst.mean(axis=0) - src.mean(axis=0))


class NeighborIndex:
    """Immutable exact nearest-neighbor index; ties go to the lowest point index."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        self._tree = kernels.KDTree(pts) if len(pts) else None
        self.size = len(pts)

    def __len__(self):
        return self.size

    def query(self, queries):
        """Nearest neighbor of each query row: (indices, distances)."""
        if self._tree is None:
            raise EmptyIndex("index has no points")
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        return self._tree.query(queries)


def nearest(index, query):
    """Single-point query: (neighbor index, distance in meters)."""
    idx, dist = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return int(idx[0]), float(dist[0])
