"""Geometric fidelity stack: STL loading, sampling, Chamfer metrics,
registration and the piecewise reward."""

from .chamfer import chamfer, chamfer_bruteforce
from .cloud import PointCloud, RigidTransform, sample_points, scale_factor
from .pipeline import GeometryConfig, RewardThresholds, geometric_reward, scaled_chamfer
from .registration import (
    AlignmentResult,
    RegistrationParams,
    best_fit_transform,
    center_align,
    estimate_normals,
    fpfh_features,
    icp_refine,
    icp_refine_full,
    ransac_register,
)
from .stl import TriMesh, load_stl, write_stl

__all__ = [
    "AlignmentResult",
    "GeometryConfig",
    "PointCloud",
    "RegistrationParams",
    "RewardThresholds",
    "RigidTransform",
    "TriMesh",
    "best_fit_transform",
    "center_align",
    "chamfer",
    "chamfer_bruteforce",
    "estimate_normals",
    "fpfh_features",
    "geometric_reward",
    "icp_refine",
    "icp_refine_full",
    "load_stl",
    "ransac_register",
    "sample_points",
    "scale_factor",
    "scaled_chamfer",
    "write_stl",
]
