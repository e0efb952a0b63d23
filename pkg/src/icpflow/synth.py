"""Seeded synthetic LiDAR-like clips with exact rigid ground-truth flow.

Objects are cuboids or ellipsoids floating ``base_height`` above a flat ground
plane at z = 0, moving with constant speed and yaw rate. Each frame resamples
the surfaces (unless ``mirror``), so consecutive scans never share points.
"""
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import PointCloud, RigidTransform, apply, compose, invert

MAX_SPEED = 33.3


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    n_objects: int = 8
    length_range: tuple = (0.8, 5.0)
    width_range: tuple = (0.6, 2.2)
    height_range: tuple = (1.2, 2.0)
    ellipsoid_fraction: float = 0.25
    speed_range: tuple = (0.0, 15.0)
    static_fraction: float = 0.25
    yaw_rate_range: tuple = (-20.0, 20.0)  # deg/s
    ground_extent: float = 30.0  # half-width of the ground square, m
    ground_density: float = 2.0  # points / m^2
    object_density: float = 100.0  # points / m^2
    noise_sigma: float = 0.02
    dt: float = 0.1
    n_frames: int = 2
    mirror: bool = False
    self_occlusion: bool = False
    placement_range: tuple = (4.0, 25.0)
    base_height: float = 0.4
    min_separation: float = 1.6
    ego_speed: float = 0.0
    ego_yaw_rate: float = 0.0  # deg/s
    sensor_height: float = 1.8
    hard_mode: bool = False

    def validate(self):
        def rng_ok(name, low=-math.inf, high=math.inf):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and low <= lo <= hi <= high):
                raise InvalidSpec(f"{name} must satisfy {low} <= lo <= hi <= {high}")

        if int(self.n_objects) != self.n_objects or self.n_objects < 0:
            raise InvalidSpec("n_objects must be a non-negative integer")
        if int(self.n_frames) != self.n_frames or self.n_frames < 1:
            raise InvalidSpec("n_frames must be >= 1")
        for name in ("length_range", "width_range", "height_range"):
            rng_ok(name, low=1e-3)
            if getattr(self, name)[0] <= 0:
                raise InvalidSpec(f"{name} must be positive")
        rng_ok("speed_range", 0.0, MAX_SPEED)
        rng_ok("yaw_rate_range")
        rng_ok("placement_range", 0.0)
        for name in ("ground_density", "object_density", "dt", "ground_extent",
                     "min_separation"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{name} must be > 0")
        if not 0.0 <= self.ellipsoid_fraction <= 1.0 or not 0.0 <= self.static_fraction <= 1.0:
            raise InvalidSpec("fractions must lie in [0, 1]")
        if not self.noise_sigma >= 0:
            raise InvalidSpec("noise_sigma must be >= 0")
        if not 0.0 <= self.ego_speed <= MAX_SPEED:
            raise InvalidSpec("ego_speed must lie in [0, 33.3]")
        if self.hard_mode and self.n_objects < 2:
            raise InvalidSpec("hard_mode needs at least two objects")
        return self

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class SceneObject:
    kind: str  # "cuboid" | "ellipsoid"
    dims: tuple  # length, width, height (m)
    x: float
    y: float
    heading: float  # rad
    speed: float  # m/s
    yaw_rate: float  # rad/s


@dataclass(eq=False)
class SceneSample:
    """A generated clip and its exact ground truth.

    ``flows[k-1]`` is the frame-0 to frame-k flow. ``object_transforms[k-1][j]``
    is object j's motion in frame k's coordinates, applied after ``egos[k-1]``
    (the frame-0 to frame-k ego transform).
    """

    spec: SceneSpec
    scans: list
    poses: list
    flows: list
    fg_masks: list
    object_ids: list
    objects: list
    object_poses: list  # [frame][object] object-to-world
    object_transforms: list = field(default_factory=list)
    egos: list = field(default_factory=list)

    def step_ego(self, k):
        """Ego transform from frame k into frame k+1."""
        return compose(invert(self.poses[k + 1]), self.poses[k])

    def step_object_transform(self, j, k):
        """Object j's motion from frame k to k+1, in frame k+1 coordinates."""
        p = self.poses[k + 1]
        world = compose(self.object_poses[k + 1][j], invert(self.object_poses[k][j]))
        return compose(invert(p), compose(world, p))


def unicycle(x, y, heading, speed, yaw_rate, t):
    """Pose after time ``t`` of constant speed along the heading and constant yaw rate."""
    th = heading + yaw_rate * t
    if abs(yaw_rate) < 1e-12:
        return x + speed * t * math.cos(heading), y + speed * t * math.sin(heading), th
    r = speed / yaw_rate
    return (x + r * (math.sin(th) - math.sin(heading)),
            y - r * (math.cos(th) - math.cos(heading)), th)


def object_pose(obj, t, base_height):
    x, y, th = unicycle(obj.x, obj.y, obj.heading, obj.speed, obj.yaw_rate, t)
    return RigidTransform.from_yaw(math.degrees(th), (x, y, base_height + obj.dims[2] / 2.0))


def ego_pose(spec, t):
    x, y, th = unicycle(0.0, 0.0, 0.0, spec.ego_speed, math.radians(spec.ego_yaw_rate), t)
    return RigidTransform.from_yaw(math.degrees(th), (x, y, 0.0))


def _ellipsoid_area(a, b, c):
    p = 1.6075
    return 4.0 * math.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3.0) ** (1.0 / p)


def _cuboid_faces(dims):
    """(center, normal, axis_u, axis_v) of every face except the bottom, in the object frame."""
    hl, hw, hh = (d / 2.0 for d in dims)
    ex, ey, ez = np.eye(3)
    return [
        (hl * ex, ex, hw * ey, hh * ez),
        (-hl * ex, -ex, hw * ey, hh * ez),
        (hw * ey, ey, hl * ex, hh * ez),
        (-hw * ey, -ey, hl * ex, hh * ez),
        (hh * ez, ez, hl * ex, hw * ey),
    ]


def sample_surface(kind, dims, density, rng, viewpoint=None):
    """Surface points in the object frame; with ``viewpoint``, only sensor-facing parts."""
    if kind == "cuboid":
        chunks = []
        for center, normal, u, v in _cuboid_faces(dims):
            if viewpoint is not None and np.dot(viewpoint - center, normal) <= 0:
                continue
            area = 4.0 * np.linalg.norm(u) * np.linalg.norm(v)
            n = max(1, int(round(area * density)))
            a = rng.uniform(-1.0, 1.0, size=(n, 2))
            chunks.append(center + a[:, :1] * u + a[:, 1:] * v)
        return np.vstack(chunks) if chunks else np.zeros((0, 3))
    axes = np.asarray(dims, dtype=np.float64) / 2.0
    n = max(1, int(round(_ellipsoid_area(*axes) * density)))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * axes
    if viewpoint is not None:
        normals = pts / axes**2
        pts = pts[((viewpoint - pts) * normals).sum(axis=1) > 0]
    return pts


def _swept_centers(obj, spec):
    return [unicycle(obj.x, obj.y, obj.heading, obj.speed, obj.yaw_rate, k * spec.dt)[:2]
            for k in range(spec.n_frames)]


def _clear_of(obj, others, spec):
    mine = np.array(_swept_centers(obj, spec))
    r0 = 0.5 * math.hypot(obj.dims[0], obj.dims[1])
    for other in others:
        theirs = np.array(_swept_centers(other, spec))
        r1 = 0.5 * math.hypot(other.dims[0], other.dims[1])
        gap = np.linalg.norm(mine[:, None, :] - theirs[None, :, :], axis=2) - r0 - r1
        if gap.min() <= spec.min_separation:
            return False
    # keep the sensor column free
    if np.linalg.norm(mine, axis=1).min() - r0 <= 1.0:
        return False
    return True


def _draw_object(spec, rng):
    dims = (rng.uniform(*spec.length_range), rng.uniform(*spec.width_range),
            rng.uniform(*spec.height_range))
    kind = "ellipsoid" if rng.uniform() < spec.ellipsoid_fraction else "cuboid"
    static = rng.uniform() < spec.static_fraction
    speed = 0.0 if static else rng.uniform(*spec.speed_range)
    yaw_rate = 0.0 if static else math.radians(rng.uniform(*spec.yaw_rate_range))
    r = rng.uniform(*spec.placement_range)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    return SceneObject(kind, dims, r * math.cos(phi), r * math.sin(phi), heading, speed, yaw_rate)


def _place_objects(spec, rng, max_tries=2000):
    placed = []
    for i in range(spec.n_objects):
        for _ in range(max_tries):
            obj = _draw_object(spec, rng)
            if spec.hard_mode and i == 1:
                # near-duplicate of object 0, parked alongside it
                ref = placed[0]
                off = math.hypot(*ref.dims[:2]) + spec.min_separation + 0.1
                side = rng.choice([-1.0, 1.0])
                obj = SceneObject(
                    ref.kind, ref.dims,
                    ref.x - side * off * math.sin(ref.heading),
                    ref.y + side * off * math.cos(ref.heading),
                    ref.heading, ref.speed, ref.yaw_rate,
                )
            elif spec.hard_mode and i == spec.n_objects - 1:
                # heads straight out of the ground area at top speed
                phi = math.atan2(obj.y, obj.x)
                r = spec.ground_extent - 0.5
                obj = SceneObject(obj.kind, obj.dims, r * math.cos(phi), r * math.sin(phi),
                                  phi, spec.speed_range[1], 0.0)
            if _clear_of(obj, placed, spec):
                placed.append(obj)
                break
        else:
            raise InvalidSpec(f"could not place object {i} with the requested separation")
    return placed


def _to_f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def generate(spec):
    """Build a SceneSample; identical specs give bit-identical samples."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    objects = _place_objects(spec, rng)
    times = [k * spec.dt for k in range(spec.n_frames)]
    poses = [ego_pose(spec, t) for t in times]
    obj_poses = [[object_pose(o, t, spec.base_height) for o in objects] for t in times]

    n_ground = max(1, int(round(spec.ground_density * (2.0 * spec.ground_extent) ** 2)))
    sensor_local = np.array([0.0, 0.0, spec.sensor_height])

    def ground_world():
        g = np.column_stack([
            rng.uniform(-spec.ground_extent, spec.ground_extent, size=(n_ground, 2)),
            np.zeros(n_ground),
        ])
        return g + rng.normal(scale=spec.noise_sigma, size=g.shape) if spec.noise_sigma else g

    def object_local(j, k):
        o = objects[j]
        view = None
        if spec.self_occlusion:
            sensor_world = apply(poses[k], sensor_local[None])[0]
            view = apply(invert(obj_poses[k][j]), sensor_world[None])[0]
        pts = sample_surface(o.kind, o.dims, spec.object_density, rng, view)
        if spec.noise_sigma:
            pts = pts + rng.normal(scale=spec.noise_sigma, size=pts.shape)
        return pts

    fixed_ground = ground_world() if spec.mirror else None
    fixed_local = [object_local(j, 0) for j in range(len(objects))] if spec.mirror else None

    scans, ids_per_frame = [], []
    for k, t in enumerate(times):
        world = [fixed_ground if spec.mirror else ground_world()]
        ids = [np.full(len(world[0]), -1, dtype=np.int64)]
        for j in range(len(objects)):
            local = fixed_local[j] if spec.mirror else object_local(j, k)
            world.append(apply(obj_poses[k][j], local))
            ids.append(np.full(len(local), j, dtype=np.int64))
        sensor = _to_f32(apply(invert(poses[k]), np.vstack(world)))
        scans.append(PointCloud(sensor, t))
        ids_per_frame.append(np.concatenate(ids))

    sample = SceneSample(
        spec=spec, scans=scans, poses=poses, flows=[],
        fg_masks=[ids >= 0 for ids in ids_per_frame], object_ids=ids_per_frame,
        objects=objects, object_poses=obj_poses,
    )
    fill_ground_truth(sample)
    return sample


def true_transforms(poses, object_poses, k):
    """Frame-0 to frame-k ego transform and per-object transforms (frame-k coordinates)."""
    ego = compose(invert(poses[k]), poses[0])
    objs = []
    for j in range(len(object_poses[0])):
        world = compose(object_poses[k][j], invert(object_poses[0][j]))
        objs.append(compose(invert(poses[k]), compose(world, poses[k])))
    return ego, objs


def expected_flow(points, ids, ego, objs):
    out = apply(ego, points) - points
    for j, t in enumerate(objs):
        m = ids == j
        if m.any():
            out[m] = apply(compose(t, ego), points[m]) - points[m]
    return out


def fill_ground_truth(sample):
    x = sample.scans[0].points
    sample.flows, sample.egos, sample.object_transforms = [], [], []
    for k in range(1, len(sample.scans)):
        ego, objs = true_transforms(sample.poses, sample.object_poses, k)
        sample.egos.append(ego)
        sample.object_transforms.append(objs)
        sample.flows.append(expected_flow(x, sample.object_ids[0], ego, objs))
    return sample


def membership(points, pose, objects, object_poses, base_height, margin):
    """Object index of each sensor-frame point by containment in its box (-1 if none)."""
    world = apply(pose, points)
    ids = np.full(len(points), -1, dtype=np.int64)
    for j, (o, op) in enumerate(zip(objects, object_poses)):
        local = apply(invert(op), world)
        half = np.asarray(o.dims) / 2.0 + margin
        inside = np.all(np.abs(local) <= half, axis=1)
        ids[inside & (ids < 0)] = j
    return ids


def verify_sample(sample, flow_tol=1e-4):
    """True when masks, ids and flows are consistent with the scene geometry."""
    spec = sample.spec
    margin = 5.0 * spec.noise_sigma + 1e-3
    n_frames = len(sample.scans)
    if not (len(sample.poses) == len(sample.fg_masks) == n_frames):
        return False
    if len(sample.flows) != n_frames - 1:
        return False
    for k in range(n_frames):
        pts = sample.scans[k].points
        mask = np.asarray(sample.fg_masks[k], dtype=bool)
        if len(mask) != len(pts):
            return False
        ids = membership(pts, sample.poses[k], sample.objects, sample.object_poses[k],
                         spec.base_height, margin)
        if not np.array_equal(mask, ids >= 0):
            return False
        if sample.object_ids and not np.array_equal(sample.object_ids[k], ids):
            return False
        if k == 0:
            ids0 = ids
    x = sample.scans[0].points
    for k in range(1, n_frames):
        ego, objs = true_transforms(sample.poses, sample.object_poses, k)
        flow = np.asarray(sample.flows[k - 1], dtype=np.float64)
        if flow.shape != x.shape:
            return False
        if np.max(np.abs(flow - expected_flow(x, ids0, ego, objs)), initial=0.0) > flow_tol:
            return False
    return True
