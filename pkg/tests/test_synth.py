import numpy as np
import pytest

from icpflow.geometry import PointCloud, best_rigid_fit
from icpflow.preprocess import cluster_fused, remove_ground
from icpflow.synth import InvalidSpec, SceneSample, SceneSpec, generate, verify_sample


def test_no_objects_is_all_ground():
    s = generate(SceneSpec(seed=0, n_objects=0, ego_speed=3.0))
    assert not s.fg_masks[0].any()
    x = s.scans[0].points
    ego_only = x @ s.egos[0].rotation.T + s.egos[0].translation - x
    assert np.array_equal(s.flows[0], ego_only)


def test_deterministic():
    a, b = generate(SceneSpec(seed=3, n_frames=3)), generate(SceneSpec(seed=3, n_frames=3))
    for k in range(3):
        assert np.array_equal(a.scans[k].points, b.scans[k].points)
        assert np.array_equal(a.fg_masks[k], b.fg_masks[k])
    for fa, fb in zip(a.flows, b.flows):
        assert np.array_equal(fa, fb)


def test_resampled_frames_differ_unless_mirrored():
    s = generate(SceneSpec(seed=1, speed_range=(0.0, 0.0), static_fraction=1.0))
    assert not np.array_equal(s.scans[0].points, s.scans[1].points)
    m = generate(SceneSpec(seed=1, speed_range=(0.0, 0.0), static_fraction=1.0,
                           yaw_rate_range=(0.0, 0.0), mirror=True))
    assert np.array_equal(m.scans[0].points, m.scans[1].points)


def test_speed_gives_flow_norm():
    s = generate(SceneSpec(seed=2, n_objects=1, speed_range=(10.0, 10.0), static_fraction=0.0,
                           yaw_rate_range=(0.0, 0.0)))
    norms = np.linalg.norm(s.flows[0][s.fg_masks[0]], axis=1)
    assert np.allclose(norms, 1.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_ground_truth_is_rigid_per_object(seed):
    s = generate(SceneSpec(seed=seed, ego_speed=5.0, ego_yaw_rate=8.0))
    x = s.scans[0].points
    for j in range(len(s.objects)):
        idx = s.object_ids[0] == j
        fit = best_rigid_fit(x[idx], x[idx] + s.flows[0][idx])
        resid = x[idx] @ fit.rotation.T + fit.translation - (x[idx] + s.flows[0][idx])
        assert np.max(np.abs(resid)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_verify_generated(seed):
    spec = SceneSpec(seed=seed, n_frames=3, self_occlusion=seed % 2 == 1,
                     ego_speed=2.0 * seed, hard_mode=seed == 4)
    assert verify_sample(generate(spec))


def test_verify_detects_tampering():
    s = generate(SceneSpec(seed=7))
    flows = [f.copy() for f in s.flows]
    flows[0][0, 0] += 1e-3
    tampered = SceneSample(**{**s.__dict__, "flows": flows})
    assert not verify_sample(tampered)
    masks = [m.copy() for m in s.fg_masks]
    masks[0][np.flatnonzero(~masks[0])[0]] = True
    assert not verify_sample(SceneSample(**{**s.__dict__, "fg_masks": masks}))


@pytest.mark.parametrize("seed", range(3))
def test_objects_cluster_separately(seed):
    s = generate(SceneSpec(seed=seed))
    kept, idx = remove_ground(s.scans[0], 0.3)
    pair = cluster_fused(kept, PointCloud(np.zeros((0, 3))), 0.75, 20)
    assert pair.cluster_count == len(s.objects)
    ids = s.object_ids[0][idx]
    for c in range(pair.cluster_count):
        assert len(set(ids[pair.labels_t == c])) == 1


@pytest.mark.parametrize("bad", [
    dict(n_objects=-1), dict(speed_range=(0.0, 40.0)), dict(object_density=0.0),
    dict(length_range=(3.0, 1.0)), dict(dt=0.0), dict(ellipsoid_fraction=2.0),
])
def test_invalid_spec(bad):
    with pytest.raises(InvalidSpec):
        generate(SceneSpec(**bad))


def test_spec_dict_round_trip():
    spec = SceneSpec(seed=9, speed_range=(1.0, 2.0))
    assert SceneSpec.from_dict(spec.to_dict()) == spec
