"""Dense maps between 3D scenes, estimated coarse-to-fine.

Given two scenes described by per-object point clouds, features, and
embeddings, the pipeline matches objects through their relational graphs,
groups the matches into rigidly consistent clusters, fits per-cluster affine
maps, refines dense point correspondences against interpolated feature
fields, and distills everything into one smooth thin-plate-spline map.  The
map evaluates against nearest-point accuracy and carries trajectories from
one scene into the other.
"""

__version__ = "0.1.0"

from .config import PipelineConfig, config_from_dict
from .coarse_align import (
    AffineMap,
    MatchCluster,
    assign_object_maps,
    cluster_matches,
    dbscan,
    fit_affine,
)
from .evaluation import EvalReport, chamfer_accuracy, evaluate_map
from .feature_field import FeatureField, FieldConfig, build_field
from .fine_align import DisplacementSolution, OptimConfig, optimize_displacements
from .graph_builder import SceneGraph, build_graph
from .graph_matcher import AffinityConfig, MatchPair, MatchSet, match_graphs
from .scene_model import (
    Diagnostic,
    ObjectInstance,
    SceneBundle,
    SceneFormatError,
    SceneValidationError,
    load_scene,
    make_object,
    save_scene,
    validate_scene,
)
from .tps_map import (
    SceneMap,
    ThinPlateSpline,
    build_scene_map,
    fit_tps,
    load_scene_map,
    save_scene_map,
)
from .transfer import (
    NoPathError,
    OccupancyGrid,
    Trajectory,
    astar,
    build_occupancy,
    load_trajectory,
    sample_waypoints,
    save_trajectory,
    transfer_long,
    transfer_short,
)

__all__ = [
    "AffineMap",
    "AffinityConfig",
    "Diagnostic",
    "DisplacementSolution",
    "EvalReport",
    "FeatureField",
    "FieldConfig",
    "MatchCluster",
    "MatchPair",
    "MatchSet",
    "NoPathError",
    "ObjectInstance",
    "OccupancyGrid",
    "OptimConfig",
    "PipelineConfig",
    "SceneBundle",
    "SceneFormatError",
    "SceneGraph",
    "SceneMap",
    "SceneValidationError",
    "ThinPlateSpline",
    "Trajectory",
    "assign_object_maps",
    "astar",
    "build_field",
    "build_graph",
    "build_occupancy",
    "build_scene_map",
    "chamfer_accuracy",
    "cluster_matches",
    "config_from_dict",
    "dbscan",
    "evaluate_map",
    "fit_affine",
    "fit_tps",
    "load_scene",
    "load_scene_map",
    "load_trajectory",
    "make_object",
    "match_graphs",
    "optimize_displacements",
    "sample_waypoints",
    "save_scene",
    "save_scene_map",
    "save_trajectory",
    "transfer_long",
    "transfer_short",
    "validate_scene",
]
