"""Resolve cluster correspondences from ICP scores."""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import RigidTransform

# cost for padded / infeasible cells in the Hungarian solve, in meters
SENTINEL_COST = 1e6


class DuplicateCandidate(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AssociationMatrices:
    """``distance[m, n]`` (inf when unscored) and ``inlier_ratio[m, n]`` (0 when unscored)."""

    distance: np.ndarray
    inlier_ratio: np.ndarray

    @property
    def shape(self):
        return self.distance.shape


@dataclass
class Assignment:
    """Per source cluster: ``(target, transform)``; sources absent from ``matches`` are unmatched."""

    n_sources: int
    matches: dict = field(default_factory=dict)

    def target(self, m):
        hit = self.matches.get(m)
        return None if hit is None else hit[0]

    def transform(self, m):
        hit = self.matches.get(m)
        return RigidTransform.identity() if hit is None else hit[1]

    def is_matched(self, m):
        return m in self.matches

    def pairs(self):
        return sorted((m, t) for m, (t, _) in self.matches.items())

    def merged(self, other):
        out = Assignment(max(self.n_sources, other.n_sources), dict(self.matches))
        out.matches.update(other.matches)
        return out


def build_matrices(results, M, N):
    distance = np.full((M, N), np.inf)
    ratio = np.zeros((M, N))
    seen = set()
    for r in results:
        key = (r.source, r.target)
        if key in seen:
            raise DuplicateCandidate(f"pair {key} scored twice")
        if not (0 <= r.source < M and 0 <= r.target < N):
            raise IndexError(f"pair {key} outside a {M}x{N} matrix")
        seen.add(key)
        distance[key] = r.mean_distance
        ratio[key] = r.inlier_ratio
    return AssociationMatrices(distance, ratio)


def transforms_of(results):
    return {(r.source, r.target): r.transform for r in results}


def associate_argmin(mats, tau_d, tau_r, transforms):
    """Per row: mask ``r < tau_r``, take the smallest ``d``, reject it if ``d > tau_d``.

    Several sources may pick the same target.
    """
    M = mats.shape[0]
    out = Assignment(M)
    d = np.where(mats.inlier_ratio < tau_r, np.inf, mats.distance)
    for m in range(M):
        if not np.isfinite(d[m]).any():
            continue
        n = int(np.argmin(d[m]))
        if d[m, n] > tau_d:
            continue
        out.matches[m] = (n, transforms[(m, n)])
    return out


def feasible_mask(mats, tau_d, tau_r):
    return (
        np.isfinite(mats.distance)
        & (mats.distance <= tau_d)
        & (mats.inlier_ratio >= tau_r)
    )


def padded_costs(mats, tau_d, tau_r):
    """Square cost matrix with infeasible and padding cells set to ``SENTINEL_COST``."""
    M, N = mats.shape
    size = max(M, N)
    cost = np.full((size, size), SENTINEL_COST)
    ok = feasible_mask(mats, tau_d, tau_r)
    cost[:M, :N][ok] = mats.distance[ok]
    return cost, ok


def associate_hungarian(mats, tau_d, tau_r, transforms):
    """One-to-one min-cost assignment over feasible cells on cost ``d``."""
    M, N = mats.shape
    out = Assignment(M)
    if M == 0 or N == 0:
        return out
    cost, ok = padded_costs(mats, tau_d, tau_r)
    rows, cols = linear_sum_assignment(cost)
    for m, n in zip(rows, cols):
        if m < M and n < N and ok[m, n]:
            out.matches[int(m)] = (int(n), transforms[(int(m), int(n))])
    return out


def associate(mats, tau_d, tau_r, transforms, mode="argmin"):
    if mode == "hungarian":
        return associate_hungarian(mats, tau_d, tau_r, transforms)
    return associate_argmin(mats, tau_d, tau_r, transforms)
