"""QUICCI binary local shape descriptors with Hamming Tree retrieval."""

from .descriptor import (
    DescriptorSet,
    QuicciImage,
    bit_count_profile,
    clutter_resistant_distance,
    hamming_distance,
    load_descriptor_set,
    quicci_from_grid,
    save_descriptor_set,
    weighted_hamming_distance,
)
from .generate import describe_mesh, describe_point
from .hamming_tree import HammingTree, TreeConfig, load_tree, save_tree, subtree_min_distance, tree_stats
from .intersection import DescriptorConfig, compute_intersection_grid, count_circle_mesh_intersections
from .mesh import Mesh, OrientedPoint, RigidPlacement, load_mesh
from .runindex import build_run_index, extract_runs, query_run_index

__version__ = "0.1.0"

__all__ = [
    "DescriptorConfig",
    "DescriptorSet",
    "HammingTree",
    "Mesh",
    "OrientedPoint",
    "QuicciImage",
    "RigidPlacement",
    "TreeConfig",
    "bit_count_profile",
    "build_run_index",
    "clutter_resistant_distance",
    "compute_intersection_grid",
    "count_circle_mesh_intersections",
    "describe_mesh",
    "describe_point",
    "extract_runs",
    "hamming_distance",
    "load_descriptor_set",
    "load_mesh",
    "load_tree",
    "query_run_index",
    "quicci_from_grid",
    "save_descriptor_set",
    "save_tree",
    "subtree_min_distance",
    "tree_stats",
    "weighted_hamming_distance",
]
