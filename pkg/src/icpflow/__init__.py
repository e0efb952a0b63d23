"""Learning-free LiDAR scene flow by cluster-wise ICP."""
from .config import PipelineConfig
from .evaluation import EvalReport, GroundTruth, evaluate
from .flow import FlowField, direct_pair_flow, estimate_pair, track_sequence
from .geometry import PointCloud, RigidTransform
from .kernels import BACKEND
from .synth import SceneSpec, generate, verify_sample

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EvalReport", "FlowField", "GroundTruth", "PipelineConfig", "PointCloud",
    "RigidTransform", "SceneSpec", "direct_pair_flow", "estimate_pair", "evaluate",
    "generate", "track_sequence", "verify_sample",
]
