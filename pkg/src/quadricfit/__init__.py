"""quadricfit: ellipsoidal object-landmark estimation as nonlinear least
squares over three landmark parameterizations (regularized-full,
rot-trans-scale, and SPD(3) x R^3), plus a Monte-Carlo benchmark harness."""

from ._kernels import backend as kernel_backend
from .costs import BoundingBox, CameraFrame, CameraIntrinsics, Factor
from .manifold import Pose
from .quadric import FullState, RtsState, SpdState
from .solver import Problem, SolveOptions, SolveReport, solve, total_cost

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CameraFrame",
    "CameraIntrinsics",
    "Factor",
    "FullState",
    "Pose",
    "Problem",
    "RtsState",
    "SolveOptions",
    "SolveReport",
    "SpdState",
    "kernel_backend",
    "solve",
    "total_cost",
    "__version__",
]
