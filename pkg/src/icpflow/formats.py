"""Binary scan/flow/label files, text pose files and synthetic sample directories.

All binary formats are little-endian with a 4-byte magic, a u32 version and a
u64 element count. Scans and flows store float32 triplets; labels store bytes.
"""
import json
import struct
from pathlib import Path

import numpy as np

from .geometry import PointCloud, RigidTransform

VERSION = 1
SCAN_MAGIC = b"ICPF"
FLOW_MAGIC = b"ICFF"
LABEL_MAGIC = b"ICLB"
_VEC_HEADER = struct.Struct("<4sIQd")
_LABEL_HEADER = struct.Struct("<4sIQ")
POSE_ATOL = 1e-9


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


def _pack_vectors(magic, vectors, timestamp):
    v = np.asarray(vectors, dtype=np.float64).reshape(-1, 3)
    body = v.astype("<f4").tobytes()
    return _VEC_HEADER.pack(magic, VERSION, len(v), float(timestamp)) + body


def _unpack_vectors(magic, data):
    if len(data) < _VEC_HEADER.size:
        raise FormatError("file shorter than header")
    got, version, n, timestamp = _VEC_HEADER.unpack_from(data)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if len(data) != _VEC_HEADER.size + 12 * n:
        raise FormatError(f"expected {n} points, file size disagrees")
    v = np.frombuffer(data, dtype="<f4", offset=_VEC_HEADER.size).reshape(n, 3)
    v = v.astype(np.float64)
    if not np.all(np.isfinite(v)):
        raise FormatError("non-finite coordinates")
    return v, timestamp


def scan_bytes(scan):
    return _pack_vectors(SCAN_MAGIC, scan.points, scan.timestamp)


def parse_scan(data):
    points, timestamp = _unpack_vectors(SCAN_MAGIC, data)
    return PointCloud(points, timestamp)


def flow_bytes(vectors, timestamp=0.0):
    return _pack_vectors(FLOW_MAGIC, getattr(vectors, "vectors", vectors), timestamp)


def parse_flow(data):
    return _unpack_vectors(FLOW_MAGIC, data)[0]


def label_bytes(mask):
    m = np.asarray(mask, dtype=bool).astype(np.uint8)
    return _LABEL_HEADER.pack(LABEL_MAGIC, VERSION, len(m)) + m.tobytes()


def parse_labels(data):
    if len(data) < _LABEL_HEADER.size:
        raise FormatError("file shorter than header")
    got, version, n = _LABEL_HEADER.unpack_from(data)
    if got != LABEL_MAGIC:
        raise FormatError(f"bad magic {got!r}, expected {LABEL_MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if len(data) != _LABEL_HEADER.size + n:
        raise FormatError(f"expected {n} labels, file size disagrees")
    raw = np.frombuffer(data, dtype=np.uint8, offset=_LABEL_HEADER.size)
    if np.any(raw > 1):
        raise FormatError("labels must be 0 or 1")
    return raw.astype(bool)


def pose_text(transform):
    m = transform.as_matrix()
    return "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in m)


def parse_pose(text):
    try:
        values = [float(tok) for tok in text.split()]
    except ValueError as exc:
        raise FormatError(f"pose file: {exc}") from None
    if len(values) != 16:
        raise FormatError(f"pose file needs 16 numbers, got {len(values)}")
    m = np.array(values).reshape(4, 4)
    if not np.all(np.isfinite(m)):
        raise FormatError("pose has non-finite entries")
    if np.max(np.abs(m[3] - [0.0, 0.0, 0.0, 1.0])) > POSE_ATOL:
        raise FormatError("pose bottom row must be 0 0 0 1")
    try:
        return RigidTransform(m[:3, :3], m[:3, 3])
    except ValueError as exc:
        raise FormatError(f"pose: {exc}") from None


def _read(path, mode="rb"):
    try:
        with open(path, mode) as f:
            return f.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None


def read_scan(path):
    return parse_scan(_read(path))


def read_flow(path):
    return parse_flow(_read(path))


def read_labels(path):
    return parse_labels(_read(path))


def read_pose(path):
    try:
        text = _read(path).decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError(f"{path} is not UTF-8 text") from None
    return parse_pose(text)


def write_scan(path, scan):
    Path(path).write_bytes(scan_bytes(scan))


def write_flow(path, vectors, timestamp=0.0):
    Path(path).write_bytes(flow_bytes(vectors, timestamp))


def write_labels(path, mask):
    Path(path).write_bytes(label_bytes(mask))


def write_pose(path, transform):
    Path(path).write_text(pose_text(transform), encoding="utf-8")


# ----- synthetic sample directories -----

def _object_record(o):
    return {"kind": o.kind, "dims": list(o.dims), "x": o.x, "y": o.y,
            "heading": o.heading, "speed": o.speed, "yaw_rate": o.yaw_rate}


def write_sample(directory, sample):
    """Write every frame of a SceneSample plus a ``scene.json`` description.

    Layout: ``scan_XXX.icpf``, ``pose_XXX.txt``, ``label_XXX.iclb`` per frame and
    ``flow_000_XXX.icff`` for each frame-0 to frame-k ground-truth flow.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k, scan in enumerate(sample.scans):
        write_scan(d / f"scan_{k:03d}.icpf", scan)
        write_pose(d / f"pose_{k:03d}.txt", sample.poses[k])
        write_labels(d / f"label_{k:03d}.iclb", sample.fg_masks[k])
    for k, flow in enumerate(sample.flows, start=1):
        write_flow(d / f"flow_000_{k:03d}.icff", flow, sample.scans[0].timestamp)
    meta = {"spec": sample.spec.to_dict(),
            "objects": [_object_record(o) for o in sample.objects]}
    (d / "scene.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")


def read_sample(directory):
    """Reload a directory written by ``write_sample``.

    Object poses are recomputed from ``scene.json``; per-point object ids come
    from box membership, so ``verify_sample`` re-checks the stored labels.
    """
    from .synth import SceneObject, SceneSample, SceneSpec, membership, object_pose

    d = Path(directory)
    try:
        meta = json.loads(_read(d / "scene.json").decode("utf-8"))
        spec = SceneSpec.from_dict(meta["spec"])
        objects = [SceneObject(r["kind"], tuple(r["dims"]), r["x"], r["y"], r["heading"],
                               r["speed"], r["yaw_rate"]) for r in meta["objects"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad scene.json: {exc}") from None
    scans = [read_scan(d / f"scan_{k:03d}.icpf") for k in range(spec.n_frames)]
    poses = [read_pose(d / f"pose_{k:03d}.txt") for k in range(spec.n_frames)]
    masks = [read_labels(d / f"label_{k:03d}.iclb") for k in range(spec.n_frames)]
    flows = [read_flow(d / f"flow_000_{k:03d}.icff") for k in range(1, spec.n_frames)]
    obj_poses = [[object_pose(o, scan.timestamp, spec.base_height) for o in objects]
                 for scan in scans]
    margin = 5.0 * spec.noise_sigma + 1e-3
    ids = [membership(s.points, p, objects, op, spec.base_height, margin)
           for s, p, op in zip(scans, poses, obj_poses)]
    return SceneSample(spec=spec, scans=scans, poses=poses, flows=flows, fg_masks=masks,
                       object_ids=ids, objects=objects, object_poses=obj_poses)
