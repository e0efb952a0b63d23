import numpy as np
import pytest

from icpflow.cli import main
from icpflow.config import PipelineConfig
from icpflow.formats import read_flow, read_labels, write_pose, write_scan
from icpflow.geometry import PointCloud, RigidTransform


def files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.is_file()}


@pytest.fixture(scope="module")
def clip(tmp_path_factory):
    d = tmp_path_factory.mktemp("clip")
    assert main(["synth", "--out-dir", str(d / "s"), "--seed", "5", "--n-frames", "3"]) == 0
    return d / "s"


def estimate_args(s, out):
    return ["estimate", "--src", str(s / "scan_000.icpf"), "--dst", str(s / "scan_001.icpf"),
            "--src-pose", str(s / "pose_000.txt"), "--dst-pose", str(s / "pose_001.txt"),
            "--out", str(out)]


def test_synth_deterministic(tmp_path, clip):
    assert main(["synth", "--out-dir", str(tmp_path / "again"), "--seed", "5",
                 "--n-frames", "3"]) == 0
    assert files(tmp_path / "again") == files(clip)


def test_synth_no_objects(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path), "--n-objects", "0"]) == 0
    assert not read_labels(tmp_path / "label_000.iclb").any()


def test_estimate_and_evaluate(tmp_path, clip, capsys):
    assert main(estimate_args(clip, tmp_path / "f1.icff")) == 0
    assert main(estimate_args(clip, tmp_path / "f2.icff")) == 0
    assert (tmp_path / "f1.icff").read_bytes() == (tmp_path / "f2.icff").read_bytes()
    args = ["evaluate", "--pred", str(tmp_path / "f1.icff"),
            "--gt", str(clip / "flow_000_001.icff"), "--labels", str(clip / "label_000.iclb"),
            "--scan", str(clip / "scan_000.icpf")]
    assert main(args + ["--out", str(tmp_path / "r1")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2")]) == 0
    assert "dynamic_fg" in capsys.readouterr().out
    for ext in (".txt", ".json"):
        assert (tmp_path / ("r1" + ext)).read_bytes() == (tmp_path / ("r2" + ext)).read_bytes()


def test_identical_scans_zero_flow(tmp_path, clip):
    s = clip
    args = ["estimate", "--src", str(s / "scan_000.icpf"), "--dst", str(s / "scan_000.icpf"),
            "--src-pose", str(s / "pose_000.txt"), "--dst-pose", str(s / "pose_000.txt"),
            "--out", str(tmp_path / "z.icff")]
    assert main(args) == 0
    assert np.max(np.abs(read_flow(tmp_path / "z.icff"))) < 1e-6


def test_track_modes(tmp_path, clip):
    scans = [str(clip / f"scan_{k:03d}.icpf") for k in range(3)]
    poses = [str(clip / f"pose_{k:03d}.txt") for k in range(3)]
    for name, extra in (("t1", []), ("t2", []), ("d1", ["--no-intermediate"]),
                        ("d2", ["--no-intermediate"])):
        assert main(["track", "--scans", *scans, "--poses", *poses,
                     "--out-dir", str(tmp_path / name), *extra]) == 0
    assert files(tmp_path / "t1") == files(tmp_path / "t2")
    assert files(tmp_path / "d1") == files(tmp_path / "d2")
    assert sorted(files(tmp_path / "t1")) == ["flow_000_001.icff", "flow_000_002.icff"]
    assert main(estimate_args(clip, tmp_path / "e.icff")) == 0
    assert (tmp_path / "t1" / "flow_000_001.icff").read_bytes() == \
        (tmp_path / "e.icff").read_bytes()


def test_dump_config(capsys):
    assert main(["estimate", "--dump-config", "--tau-d", "0.3"]) == 0
    out = capsys.readouterr().out
    assert "tau_d = 0.3" in out
    for name in PipelineConfig.field_names():
        assert f"{name} = " in out
    assert main(["estimate", "--dump-config"]) == 0
    assert capsys.readouterr().out == PipelineConfig().dump()


def test_exit_codes(tmp_path, clip):
    assert main(["estimate", "--dump-config", "--association", "nope"]) == 3
    assert main(["estimate", "--dump-config", "--eps", "-1"]) == 3
    assert main(["synth", "--out-dir", str(tmp_path / "x"), "--speed-range", "0", "99"]) == 3
    (tmp_path / "bad.icpf").write_bytes(b"nonsense")
    bad = estimate_args(clip, tmp_path / "o.icff")
    bad[2] = str(tmp_path / "bad.icpf")
    assert main(bad) == 2
    missing = estimate_args(clip, tmp_path / "o.icff")
    missing[2] = str(tmp_path / "absent.icpf")
    assert main(missing) == 2
    (tmp_path / "bad.txt").write_text("1 2 3")
    badpose = estimate_args(clip, tmp_path / "o.icff")
    badpose[6] = str(tmp_path / "bad.txt")
    assert main(badpose) == 2


def test_evaluate_length_mismatch(tmp_path, clip):
    write_scan(tmp_path / "short.icpf", PointCloud(np.zeros((3, 3))))
    args = ["evaluate", "--pred", str(clip / "flow_000_001.icff"),
            "--gt", str(clip / "flow_000_001.icff"), "--labels", str(clip / "label_000.iclb"),
            "--scan", str(tmp_path / "short.icpf")]
    assert main(args) == 2


def test_perfect_prediction_report(tmp_path, clip, capsys):
    gt = str(clip / "flow_000_001.icff")
    assert main(["evaluate", "--pred", gt, "--gt", gt, "--labels", str(clip / "label_000.iclb"),
                 "--scan", str(clip / "scan_000.icpf"), "--out", str(tmp_path / "r")]) == 0
    text = (tmp_path / "r.txt").read_text()
    assert "epe 0.000000" in text and "acc_s 100.000000" in text


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--src", "a"])
    assert exc.value.code == 2


def test_pose_files_round_trip(tmp_path):
    t = RigidTransform.from_yaw(33.0, (1.5, -2.0, 0.25))
    write_pose(tmp_path / "p.txt", t)
    from icpflow.formats import read_pose
    assert np.array_equal(read_pose(tmp_path / "p.txt").as_matrix(), t.as_matrix())
