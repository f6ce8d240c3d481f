"""Mesh to QUICCI descriptor pipeline."""

from __future__ import annotations

import numpy as np

from .descriptor import DescriptorSet, QuicciImage, quicci_from_counts, quicci_from_grid
from .intersection import (
    DescriptorConfig,
    TriangleLocator,
    compute_intersection_counts,
    compute_intersection_grid,
)
from .mesh import Mesh, OrientedPoint, fit_unit_sphere, unique_vertex_indices


def describe_points(mesh: Mesh, positions: np.ndarray, normals: np.ndarray, config: DescriptorConfig,
                    locator: TriangleLocator | None = None) -> np.ndarray:
    """Packed QUICCI words, one row per oriented point."""
    counts = compute_intersection_counts(mesh, positions, normals, config, locator)
    return quicci_from_counts(counts)


def describe_point(mesh: Mesh, origin: OrientedPoint, config: DescriptorConfig) -> QuicciImage:
    return quicci_from_grid(compute_intersection_grid(mesh, origin, config))


def describe_mesh(mesh: Mesh, config: DescriptorConfig, object_id: int = 0) -> DescriptorSet:
    """One descriptor per unique vertex; provenance is (object_id, vertex index)."""
    idx = unique_vertex_indices(mesh)
    words = describe_points(mesh, mesh.vertices[idx], mesh.normals[idx], config)
    prov = np.column_stack([np.full(len(idx), object_id, dtype=np.uint32), idx.astype(np.uint32)])
    return DescriptorSet(config.width, config.height, words, prov)


def describe_files(paths, config: DescriptorConfig, fit: bool = True, loader=None) -> DescriptorSet:
    from .mesh import load_mesh

    loader = loader or load_mesh
    parts = []
    for object_id, path in enumerate(paths):
        mesh = loader(path)
        if fit:
            mesh = fit_unit_sphere(mesh)
        parts.append(describe_mesh(mesh, config, object_id))
    if not parts:
        return DescriptorSet(config.width, config.height, np.zeros((0, 0), dtype=np.uint64),
                             np.zeros((0, 2), dtype=np.uint32))
    return DescriptorSet(config.width, config.height,
                         np.vstack([p.words for p in parts]),
                         np.vstack([p.provenance for p in parts]))
