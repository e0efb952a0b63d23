"""Ego-motion compensation, ground removal and fused clustering of a scan pair."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import PointCloud, apply

NOISE = -1


@dataclass(frozen=True, eq=False)
class ClusteredScanPair:
    """Two non-ground scans with per-point cluster ids (``NOISE`` = -1).

    ``scan_t`` is already ego-compensated into ``scan_t2``'s frame. Cluster
    ids are contiguous in ``0..cluster_count-1`` and shared by both scans.
    """

    scan_t: PointCloud
    scan_t2: PointCloud
    labels_t: np.ndarray
    labels_t2: np.ndarray
    cluster_count: int

    def __post_init__(self):
        if len(self.labels_t) != len(self.scan_t) or len(self.labels_t2) != len(self.scan_t2):
            raise ValueError("label lengths must match scan lengths")

    def points_t(self, cid):
        return self.scan_t.points[self.labels_t == cid]

    def points_t2(self, cid):
        return self.scan_t2.points[self.labels_t2 == cid]

    def ids_t(self):
        return np.unique(self.labels_t[self.labels_t != NOISE])

    def ids_t2(self):
        return np.unique(self.labels_t2[self.labels_t2 != NOISE])

    def sizes(self):
        """Fused point count per cluster id."""
        k = self.cluster_count
        return (np.bincount(self.labels_t[self.labels_t != NOISE], minlength=k)
                + np.bincount(self.labels_t2[self.labels_t2 != NOISE], minlength=k))


def compensate_ego(scan, ego):
    return apply(ego, scan)


def remove_ground(scan, z_threshold):
    """Keep points with ``z > z_threshold``.

    Returns the filtered cloud and, for each kept point, its index in ``scan``.
    """
    keep = np.flatnonzero(scan.points[:, 2] > z_threshold)
    return PointCloud(scan.points[keep], scan.timestamp), keep


def density_labels(points, eps, min_samples):
    """DBSCAN-style labels; component ids are arbitrary but deterministic.

    Core points have at least ``min_samples`` points (self included) within
    ``eps``; cores closer than ``eps`` are connected. A non-core point joins
    the component of its nearest core neighbor (ties to the lowest index);
    everything else is ``NOISE``.
    """
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    return kernels.density_components(points, float(eps), int(min_samples))


def _relabel_by_size(labels, min_cluster_size):
    """Drop small clusters; renumber by descending size, ties by smallest member index."""
    out = np.full(len(labels), NOISE, dtype=np.int64)
    valid = labels != NOISE
    if not valid.any():
        return out, 0
    ids, first, counts = np.unique(labels[valid], return_index=True, return_counts=True)
    first_member = np.flatnonzero(valid)[first]
    keep = counts >= min_cluster_size
    ids, first_member, counts = ids[keep], first_member[keep], counts[keep]
    order = np.lexsort((first_member, -counts))
    mapping = np.full(int(labels.max()) + 1, NOISE, dtype=np.int64)
    mapping[ids[order]] = np.arange(len(order))
    out[valid] = mapping[labels[valid]]
    return out, len(order)


def cluster_fused(scan_t, scan_t2, eps, min_cluster_size, min_samples=5):
    """Cluster the union of both scans, then split the labels by scan of origin."""
    fused = np.vstack([scan_t.points, scan_t2.points])
    raw = density_labels(fused, eps, min_samples)
    labels, count = _relabel_by_size(raw, min_cluster_size)
    n = len(scan_t)
    return ClusteredScanPair(scan_t, scan_t2, labels[:n], labels[n:], count)


def select_top_clusters(pair, max_clusters):
    """Keep the ``max_clusters`` largest clusters; the rest become ``NOISE``."""
    if pair.cluster_count <= max_clusters:
        return pair
    sizes = pair.sizes()
    ids = np.arange(pair.cluster_count)
    order = np.lexsort((ids, -sizes))[:max_clusters]
    mapping = np.full(pair.cluster_count, NOISE, dtype=np.int64)
    mapping[np.sort(order)] = np.arange(len(order))

    def remap(labels):
        out = labels.copy()
        m = labels != NOISE
        out[m] = mapping[labels[m]]
        return out

    return ClusteredScanPair(
        pair.scan_t, pair.scan_t2, remap(pair.labels_t), remap(pair.labels_t2), len(order)
    )
