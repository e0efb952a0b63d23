"""Pipeline hyperparameters."""
import math
from dataclasses import asdict, dataclass, fields, replace

ASSOCIATION_MODES = ("argmin", "hungarian")
INIT_MODES = ("histogram", "centroid", "none")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the scene-flow pipeline.

    Search ranges in x/y are derived: ``tau_xy = speed_cap * dt``, so 33.3 m/s
    (120 km/h) at 0.1 s gives 3.33 m.
    """

    z_threshold: float = 0.3
    eps: float = 0.75
    min_samples: int = 5
    min_cluster_size: int = 20
    max_clusters: int = 200
    bin_size: float = 0.1
    dt: float = 0.1
    speed_cap: float = 33.3
    tau_z: float = 0.1
    tau_inlier: float = 0.1
    tau_d: float = 0.2
    tau_r: float = 0.2
    max_iters: int = 100
    convergence_tol: float = 1e-4
    association: str = "argmin"
    init: str = "histogram"
    max_votes: int = 2_000_000
    workers: int = 1

    @property
    def tau_xy(self):
        return self.speed_cap * self.dt

    def with_dt(self, dt):
        return replace(self, dt=dt)

    def validate(self):
        positive = (
            "eps", "bin_size", "dt", "speed_cap", "tau_z", "tau_inlier",
            "convergence_tol",
        )
        for name in positive:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {v}")
        for name in ("tau_d", "tau_r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if not math.isfinite(self.z_threshold) and self.z_threshold != -math.inf:
            raise ConfigError("z_threshold must be finite or -inf")
        for name, low in (("min_samples", 1), ("min_cluster_size", 1),
                          ("max_clusters", 0), ("max_iters", 1),
                          ("max_votes", 1), ("workers", 1)):
            v = getattr(self, name)
            if int(v) != v or v < low:
                raise ConfigError(f"{name} must be an integer >= {low}, got {v}")
        if self.association not in ASSOCIATION_MODES:
            raise ConfigError(f"association must be one of {ASSOCIATION_MODES}")
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["tau_xy"] = self.tau_xy
        return d

    def dump(self):
        """Resolved configuration as ``key = value`` lines."""
        return "".join(f"{k} = {v!r}\n" for k, v in self.to_dict().items())

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
