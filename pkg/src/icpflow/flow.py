"""Per-point flow from cluster transforms, single-pair pipeline and multi-frame chaining."""
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .association import Assignment, associate, build_matrices, transforms_of
from .config import PipelineConfig
from .geometry import RigidTransform, apply, compose, invert
from .matching import match_candidates, proximity_pairs, same_index_pairs
from .preprocess import NOISE, cluster_fused, compensate_ego, remove_ground, select_top_clusters


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FlowField:
    """(N, 3) displacement per point of the source scan, in source order."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.array(self.vectors, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("flow vectors must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    def __len__(self):
        return len(self.vectors)


def recover_flow(full_scan_t, kept_index_map, labels, assignment, ego):
    """Flow of every point of ``full_scan_t``.

    Points of a matched cluster ``k`` move by ``T_k * T_ego``; every other point
    (ground, noise, unmatched) moves by ``T_ego`` alone.
    """
    kept_index_map = np.asarray(kept_index_map, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(kept_index_map) != len(labels):
        raise LengthMismatch("kept-index map and labels differ in length")
    n = len(full_scan_t)
    if len(kept_index_map) and (kept_index_map.min() < 0 or kept_index_map.max() >= n):
        raise LengthMismatch("kept-index map points outside the scan")
    x = full_scan_t.points
    out = apply(ego, x) - x
    for m, (_, t_obj) in sorted(assignment.matches.items()):
        idx = kept_index_map[labels == m]
        if len(idx):
            out[idx] = apply(compose(t_obj, ego), x[idx]) - x[idx]
    return FlowField(out)


@dataclass(frozen=True, eq=False)
class PairEstimate:
    """Everything the single-pair pipeline produced, kept for chaining and inspection."""

    flow: FlowField
    clusters: object
    assignment: Assignment
    kept_t: np.ndarray
    kept_t2: np.ndarray
    results: list
    ego: RigidTransform


def _associate_phase(pair, candidates, config, tau_xy):
    results = match_candidates(pair, candidates, config, tau_xy)
    k = pair.cluster_count
    mats = build_matrices(results, k, k)
    assignment = associate(mats, config.tau_d, config.tau_r, transforms_of(results),
                           config.association)
    return assignment, results


def estimate_pair(scan_t, scan_t2, ego=None, config=None, tau_xy=None):
    """Scene flow of ``scan_t`` toward ``scan_t2``.

    ``ego`` maps scan_t's sensor frame into scan_t2's. Same-index cluster pairs
    are matched first; clusters left over are paired by proximity.
    """
    config = (config or PipelineConfig()).validate()
    ego = ego if ego is not None else RigidTransform.identity()
    tau_xy = config.tau_xy if tau_xy is None else tau_xy

    ground_t, kept_t = remove_ground(compensate_ego(scan_t, ego), config.z_threshold)
    ground_t2, kept_t2 = remove_ground(scan_t2, config.z_threshold)
    pair = cluster_fused(ground_t, ground_t2, config.eps, config.min_cluster_size,
                         config.min_samples)
    pair = select_top_clusters(pair, config.max_clusters)

    first = same_index_pairs(pair)
    assign1, results1 = _associate_phase(pair, first, config, tau_xy)
    matched_dst = {t for t, _ in assign1.matches.values()}
    second = proximity_pairs(pair, tau_xy, tau_xy, assign1.matches.keys(), matched_dst,
                             skip=first)
    assign2, results2 = _associate_phase(pair, second, config, tau_xy)
    assignment = assign1.merged(assign2)

    flow = recover_flow(scan_t, kept_t, pair.labels_t, assignment, ego)
    return PairEstimate(flow, pair, assignment, kept_t, kept_t2, results1 + results2, ego)


def direct_pair_flow(scan_a, scan_b, ego=None, config=None):
    """Single-pair flow over an arbitrary gap; x/y search ranges scale with the gap."""
    config = config or PipelineConfig()
    dt = scan_b.timestamp - scan_a.timestamp
    if not dt > 0:
        raise ValueError(f"scan_b must be later than scan_a (dt={dt})")
    return estimate_pair(scan_a, scan_b, ego, config.with_dt(dt)).flow


def _full_labels(n, kept, labels):
    out = np.full(n, NOISE, dtype=np.int64)
    out[kept] = labels
    return out


def _continue_chain(prev, nxt, target, n_points):
    """Cluster id in ``nxt``'s source labeling that continues ``prev``'s target cluster.

    Overlap vote over the shared frame's points; ties go to the lowest id.
    """
    idx = prev.kept_t2[prev.clusters.labels_t2 == target]
    votes = _full_labels(n_points, nxt.kept_t, nxt.clusters.labels_t)[idx]
    votes = votes[votes != NOISE]
    if len(votes) == 0:
        return None
    counts = Counter(votes.tolist())
    best = max(counts.values())
    return min(c for c, v in counts.items() if v == best)


def chain_flows(scans, egos, estimates):
    """Frame-0 to frame-k flows from per-pair estimates, k = 1..len(scans)-1.

    A frame-0 cluster follows its matches pair by pair; once a link is missing
    the object is treated as static from there on (ego motion only).
    """
    x = scans[0].points
    labels0 = _full_labels(len(x), estimates[0].kept_t, estimates[0].clusters.labels_t)
    cluster_ids = [int(c) for c in np.unique(labels0[labels0 != NOISE])]
    members = {c: np.flatnonzero(labels0 == c) for c in cluster_ids}

    ego_chain = None
    chain = {c: None for c in cluster_ids}
    current = {c: c for c in cluster_ids}
    flows = []
    for j, est in enumerate(estimates):
        ego = egos[j]
        ego_chain = ego if ego_chain is None else compose(ego, ego_chain)
        nxt = estimates[j + 1] if j + 1 < len(estimates) else None
        for c in cluster_ids:
            cid = current[c]
            step = ego
            if cid is not None and est.assignment.is_matched(cid):
                step = compose(est.assignment.transform(cid), ego)
                target = est.assignment.target(cid)
                current[c] = (None if nxt is None
                              else _continue_chain(est, nxt, target, len(scans[j + 1])))
            else:
                current[c] = None
            chain[c] = step if chain[c] is None else compose(step, chain[c])
        out = apply(ego_chain, x) - x
        for c in cluster_ids:
            idx = members[c]
            out[idx] = apply(chain[c], x[idx]) - x[idx]
        flows.append(FlowField(out))
    return flows


def track_sequence(scans, egos, config=None):
    """Frame-0 to frame-k flow for k = 1..K-1 by chaining adjacent-pair matches.

    ``egos[j]`` maps scan j's sensor frame into scan j+1's.
    """
    if len(scans) < 2:
        raise ValueError("need at least two scans")
    if len(egos) != len(scans) - 1:
        raise ValueError("need one ego transform per adjacent scan pair")
    config = config or PipelineConfig()
    estimates = [
        estimate_pair(scans[j], scans[j + 1], egos[j], config)
        for j in range(len(scans) - 1)
    ]
    return chain_flows(scans, egos, estimates)


def ego_between(pose_a, pose_b):
    """Transform from frame a into frame b given sensor-to-world poses."""
    return compose(invert(pose_b), pose_a)


def relative_egos(poses):
    return [ego_between(poses[j], poses[j + 1]) for j in range(len(poses) - 1)]

