"""Candidate pairing, histogram-voted initialization and ICP scoring of cluster pairs."""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import (
    DegenerateInput,
    NeighborIndex,
    RigidTransform,
    best_rigid_fit,
    compose,
    transform_points,
    translation_fit,
)


@dataclass(frozen=True, eq=False)
class MatchResult:
    """ICP outcome for one (source, target) cluster pair.

    ``inlier_ratio`` may exceed 1 when many source points share target neighbors.
    """

    source: int
    target: int
    transform: RigidTransform
    mean_distance: float
    inlier_ratio: float
    iterations: int = 0


def histogram_shape(tau, bin_size):
    """Bins per axis: ``ceil(2 * tau / bin_size) + 1``."""
    return tuple(int(math.ceil(2.0 * t / bin_size)) + 1 for t in tau)


def bin_center(flat_index, tau, bin_size, shape):
    k = np.unravel_index(int(flat_index), shape)
    return np.array([-t + (ki + 0.5) * bin_size for t, ki in zip(tau, k)])


def cap_votes(src, dst, max_votes, seed=0):
    """Subsample both clusters uniformly so that ``len(src) * len(dst) <= max_votes``."""
    m, n = len(src), len(dst)
    if m * n <= max_votes:
        return src, dst
    scale = math.sqrt(max_votes / (m * n))
    m2 = max(1, int(m * scale))
    n2 = max(1, min(n, max_votes // m2))
    rng = np.random.default_rng(seed)
    si = np.sort(rng.choice(m, size=m2, replace=False))
    di = np.sort(rng.choice(n, size=n2, replace=False))
    return src[si], dst[di]


def translation_histogram(src, dst, tau, bin_size):
    """Flat vote counts of all ``src[i] - dst[j]`` (x-major) and the grid shape."""
    shape = histogram_shape(tau, bin_size)
    counts = kernels.histogram_votes(
        np.ascontiguousarray(src, dtype=np.float64),
        np.ascontiguousarray(dst, dtype=np.float64),
        np.asarray(tau, dtype=np.float64),
        float(bin_size),
        np.asarray(shape, dtype=np.int64),
    )
    return counts, shape


def histogram_init(src, dst, tau_x, tau_y, tau_z, bin_size=0.1, max_votes=2_000_000):
    """Dominant translation moving ``src`` onto ``dst``, by voting.

    Every pairwise difference ``src[i] - dst[j]`` inside ``[-tau, tau]`` votes
    for its bin; the most voted bin center (lowest flat index on ties) is
    negated and returned. Returns zeros when no difference is in range.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) == 0 or len(dst) == 0:
        raise ValueError("clusters must be non-empty")
    src, dst = cap_votes(src, dst, max_votes)
    tau = (tau_x, tau_y, tau_z)
    counts, shape = translation_histogram(src, dst, tau, bin_size)
    best = int(np.argmax(counts))
    if counts[best] == 0:
        return np.zeros(3)
    return -bin_center(best, tau, bin_size, shape)


def match_metrics(src, dst_index, transform, n_dst, tau_inlier):
    """Mean NN distance ``d`` and inlier ratio ``r`` of ``transform(src)`` against dst."""
    _, dist = dst_index.query(transform_points(transform, src))
    inliers = int(np.count_nonzero(dist <= tau_inlier))
    d = float(dist.mean())
    r = inliers / (len(src) + n_dst - inliers)
    return d, r


def icp_align(src, dst, init=None, max_iters=100, convergence_tol=1e-4,
              tau_inlier=0.1, source=-1, target=-1, dst_index=None):
    """Point-to-point ICP from ``init``; returns the transform with its d and r.

    Each iteration pairs every transformed source point with its nearest target
    point and refits the whole transform in closed form. Stops when the RMS
    correspondence distance improves by less than ``convergence_tol``; a step
    that would increase the RMS is rejected.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) == 0 or len(dst) == 0:
        raise ValueError("clusters must be non-empty")
    index = dst_index if dst_index is not None else NeighborIndex(dst)
    current = init if init is not None else RigidTransform.identity()

    nn, dist = index.query(transform_points(current, src))
    rms = math.sqrt(float(np.mean(dist * dist)))
    it = 0
    for it in range(1, max_iters + 1):
        matched = dst[nn]
        try:
            candidate = best_rigid_fit(src, matched)
        except DegenerateInput:
            moved = transform_points(current, src)
            candidate = compose(translation_fit(moved, matched), current)
        nn_new, dist_new = index.query(transform_points(candidate, src))
        rms_new = math.sqrt(float(np.mean(dist_new * dist_new)))
        if rms_new > rms:
            break
        current, nn, dist = candidate, nn_new, dist_new
        improvement = rms - rms_new
        rms = rms_new
        if improvement < convergence_tol:
            break

    inliers = int(np.count_nonzero(dist <= tau_inlier))
    return MatchResult(
        source=source,
        target=target,
        transform=current,
        mean_distance=float(dist.mean()),
        inlier_ratio=inliers / (len(src) + len(dst) - inliers),
        iterations=it,
    )


def initial_transform(src, dst, config, tau_xy):
    if config.init == "histogram":
        t = histogram_init(src, dst, tau_xy, tau_xy, config.tau_z,
                           config.bin_size, config.max_votes)
        return RigidTransform.from_translation(t)
    if config.init == "centroid":
        return translation_fit(src, dst)
    return RigidTransform.identity()


def _bbox(points):
    return points.min(axis=0), points.max(axis=0)


@dataclass(frozen=True)
class Candidates:
    same_index: list
    proximity: list

    def all(self):
        return self.same_index + self.proximity


def same_index_pairs(pair):
    """Phase 1: ``(m, m)`` for every cluster id present in both scans."""
    both = np.intersect1d(pair.ids_t(), pair.ids_t2())
    return [(int(m), int(m)) for m in both]


def proximity_pairs(pair, tau_x, tau_y, exclude_src=(), exclude_dst=(), skip=()):
    """Phase 2: ``(m, n)`` when n's x/y box overlaps m's box grown by ``(tau_x, tau_y)``."""
    exclude_src, exclude_dst, skip = set(exclude_src), set(exclude_dst), set(skip)
    srcs = [int(m) for m in pair.ids_t() if int(m) not in exclude_src]
    dsts = [int(n) for n in pair.ids_t2() if int(n) not in exclude_dst]
    if not srcs or not dsts:
        return []
    dst_boxes = {n: _bbox(pair.points_t2(n)) for n in dsts}
    grow = np.array([tau_x, tau_y])
    out = []
    for m in srcs:
        lo, hi = _bbox(pair.points_t(m))
        lo, hi = lo[:2] - grow, hi[:2] + grow
        for n in dsts:
            if (m, n) in skip:
                continue
            dlo, dhi = dst_boxes[n]
            if np.all(dlo[:2] <= hi) and np.all(lo <= dhi[:2]):
                out.append((m, n))
    return out


def pair_clusters(pair, tau_x, tau_y, matched_src=(), matched_dst=()):
    """Both candidate phases; phase 2 omits already-matched ids and phase-1 pairs."""
    first = same_index_pairs(pair)
    second = proximity_pairs(pair, tau_x, tau_y, matched_src, matched_dst, skip=first)
    return Candidates(first, second)


def match_candidates(pair, candidates, config, tau_xy=None):
    """Initialize and run ICP on every candidate; results sorted by (source, target)."""
    tau_xy = config.tau_xy if tau_xy is None else tau_xy
    candidates = sorted(set(candidates))
    if not candidates:
        return []
    src_pts = {m: pair.points_t(m) for m in {c[0] for c in candidates}}
    dst_pts = {n: pair.points_t2(n) for n in {c[1] for c in candidates}}
    dst_index = {n: NeighborIndex(p) for n, p in dst_pts.items()}

    def run(mn):
        m, n = mn
        src, dst = src_pts[m], dst_pts[n]
        init = initial_transform(src, dst, config, tau_xy)
        return icp_align(src, dst, init, config.max_iters, config.convergence_tol,
                         config.tau_inlier, source=m, target=n, dst_index=dst_index[n])

    if config.workers > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, candidates))
    else:
        results = [run(c) for c in candidates]
    return sorted(results, key=lambda r: (r.source, r.target))
