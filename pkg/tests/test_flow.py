import numpy as np
import pytest

from icpflow.association import Assignment
from icpflow.config import PipelineConfig
from icpflow.evaluation import GroundTruth, evaluate
from icpflow.flow import (
    FlowField, LengthMismatch, chain_flows, direct_pair_flow, estimate_pair, recover_flow,
    relative_egos, track_sequence,
)
from icpflow.geometry import PointCloud, RigidTransform, best_rigid_fit, compose
from icpflow.preprocess import remove_ground
from icpflow.synth import SceneSpec, generate


def test_recover_flow_examples():
    scan = PointCloud(np.arange(12.0).reshape(4, 3))
    labels = np.array([0, 0, -1])
    kept = np.array([1, 2, 3])
    none = recover_flow(scan, kept, labels, Assignment(1), RigidTransform.identity())
    assert np.array_equal(none.vectors, np.zeros((4, 3)))
    shift = RigidTransform.from_translation([1.0, 0.0, 0.0])
    one = recover_flow(scan, kept, labels, Assignment(1, {0: (0, shift)}),
                       RigidTransform.identity())
    want = np.zeros((4, 3))
    want[[1, 2]] = [1.0, 0.0, 0.0]
    assert np.array_equal(one.vectors, want)
    with pytest.raises(LengthMismatch):
        recover_flow(scan, kept[:2], labels, Assignment(1), RigidTransform.identity())
    with pytest.raises(LengthMismatch):
        recover_flow(scan, np.array([1, 2, 9]), labels, Assignment(1), RigidTransform.identity())


def test_flowfield_validates():
    with pytest.raises(ValueError):
        FlowField([[np.inf, 0.0, 0.0]])


def test_recover_flow_with_true_transforms_matches_ground_truth():
    s = generate(SceneSpec(seed=6, ego_speed=5.0, ego_yaw_rate=5.0))
    _, kept = remove_ground(s.scans[0], -np.inf)
    ids = s.object_ids[0]
    matches = {j: (j, t) for j, t in enumerate(s.object_transforms[0])}
    flow = recover_flow(s.scans[0], kept, ids[kept], Assignment(len(matches), matches), s.egos[0])
    assert np.max(np.abs(flow.vectors - s.flows[0])) < 1e-9


def test_eq1_consistency_and_rigidity():
    s = generate(SceneSpec(seed=7))
    est = estimate_pair(s.scans[0], s.scans[1], s.egos[0])
    x = s.scans[0].points
    labels = np.full(len(x), -1)
    labels[est.kept_t] = est.clusters.labels_t
    for m, (_, t) in est.assignment.matches.items():
        idx = labels == m
        want = (x[idx] @ compose(t, est.ego).rotation.T + compose(t, est.ego).translation) - x[idx]
        assert np.array_equal(est.flow.vectors[idx], want)
        fit = best_rigid_fit(x[idx], x[idx] + est.flow.vectors[idx])
        resid = x[idx] @ fit.rotation.T + fit.translation - (x[idx] + est.flow.vectors[idx])
        assert np.max(np.linalg.norm(resid, axis=1)) < 1e-9


def test_identical_scans_zero_flow():
    s = generate(SceneSpec(seed=8))
    est = estimate_pair(s.scans[0], s.scans[0])
    assert np.max(np.abs(est.flow.vectors)) < 1e-6


def test_direct_pair_tau_scaling():
    assert PipelineConfig().tau_xy == pytest.approx(3.33)
    assert PipelineConfig().with_dt(0.4).tau_xy == pytest.approx(13.32)


def test_direct_pair_needs_positive_dt():
    scan = PointCloud(np.zeros((1, 3)), 1.0)
    with pytest.raises(ValueError):
        direct_pair_flow(scan, PointCloud(np.zeros((1, 3)), 1.0))


def test_direct_pair_recovers_car_motion():
    spec = SceneSpec(seed=9, n_objects=1, speed_range=(10.0, 10.0), static_fraction=0.0,
                     yaw_rate_range=(0.0, 0.0), ellipsoid_fraction=0.0, dt=0.2)
    s = generate(spec)
    flow = direct_pair_flow(s.scans[0], s.scans[1], s.egos[0])
    fg = s.fg_masks[0]
    disp = np.linalg.norm(s.flows[0][fg], axis=1).mean()
    assert disp == pytest.approx(2.0, abs=1e-3)
    assert np.linalg.norm(flow.vectors[fg] - s.flows[0][fg], axis=1).mean() < 0.05


def test_two_scan_track_equals_pair():
    s = generate(SceneSpec(seed=10))
    (tracked,) = track_sequence(s.scans, relative_egos(s.poses))
    assert np.array_equal(tracked.vectors, estimate_pair(s.scans[0], s.scans[1],
                                                         s.egos[0]).flow.vectors)


def test_static_clip_is_ego_only():
    s = generate(SceneSpec(seed=11, n_frames=5, speed_range=(0.0, 0.0), static_fraction=1.0,
                           yaw_rate_range=(0.0, 0.0), ego_speed=4.0, mirror=True,
                           noise_sigma=0.0))
    flows = track_sequence(s.scans, relative_egos(s.poses))
    for k, f in enumerate(flows):
        ego_only = s.scans[0].points @ s.egos[k].rotation.T + s.egos[k].translation \
            - s.scans[0].points
        assert np.max(np.abs(f.vectors - ego_only)) < 1e-5


def test_constant_velocity_chain_is_linear():
    spec = SceneSpec(seed=12, n_frames=5, mirror=True, noise_sigma=0.0,
                     yaw_rate_range=(0.0, 0.0))
    s = generate(spec)
    flows = track_sequence(s.scans, relative_egos(s.poses))
    fg = s.fg_masks[0]
    assert np.allclose(flows[3].vectors[fg], 4.0 * flows[0].vectors[fg], atol=1e-5)


def test_chain_identity_on_exact_data():
    s = generate(SceneSpec(seed=13, n_frames=4, mirror=True, noise_sigma=0.0))
    flows = track_sequence(s.scans, relative_egos(s.poses))
    for k, f in enumerate(flows):
        assert np.max(np.abs(f.vectors - s.flows[k])) < 1e-5


def test_broken_chain_falls_back_to_identity():
    s = generate(SceneSpec(seed=14, n_frames=3, mirror=True, noise_sigma=0.0))
    egos = relative_egos(s.poses)
    est = [estimate_pair(s.scans[j], s.scans[j + 1], egos[j]) for j in range(2)]
    broken = est[1].__class__(est[1].flow, est[1].clusters, Assignment(0), est[1].kept_t,
                              est[1].kept_t2, [], est[1].ego)
    flows = chain_flows(s.scans, egos, [est[0], broken])
    x = s.scans[0].points
    step1 = flows[0].vectors
    # second step adds ego motion only
    moved = x + step1
    want = moved @ egos[1].rotation.T + egos[1].translation - x
    assert np.allclose(flows[1].vectors, want, atol=1e-9)


def test_pipeline_on_synthetic_pair_is_accurate():
    s = generate(SceneSpec(seed=15))
    flow = estimate_pair(s.scans[0], s.scans[1], s.egos[0]).flow
    report = evaluate(flow, GroundTruth(s.flows[0], s.fg_masks[0], 0.1), s.scans[0])
    assert report.get("dynamic_fg", "epe") < 0.05
