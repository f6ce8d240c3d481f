"""Circle/mesh intersection counting for the stacked-circle support cylinder.

Each descriptor is anchored at an oriented point.  Layer ``l`` of ``H`` is a
plane orthogonal to the reference normal at axial offset
``R * ((l + 0.5) / H - 0.5)``, so the layers straddle the reference vertex;
circle ``c`` of ``C`` in a layer has radius ``(c + 1) * R / C``.

Counting works per triangle: the triangle is clipped by the layer plane to a
segment, and the segment's crossings of each circle are the sign changes of
``|p(t)|^2 - r^2`` along it.  Classification is half-open everywhere
(a vertex on the plane is on the positive side, a point at exactly distance
``r`` is outside), so a crossing on an edge shared by two triangles is
counted exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .mesh import Mesh, OrientedPoint, points_to_arrays

DEGENERATE_AREA = 1e-12


@dataclass(frozen=True)
class DescriptorConfig:
    circles_per_layer: int = 65
    layer_count: int = 64
    support_radius: float = 0.3

    def __post_init__(self):
        if self.circles_per_layer < 2:
            raise ValueError("need at least 2 circles per layer")
        if self.layer_count < 1:
            raise ValueError("need at least one layer")
        if not self.support_radius > 0:
            raise ValueError("support radius must be positive")

    @classmethod
    def for_image(cls, width: int, height: int, support_radius: float = 0.3) -> DescriptorConfig:
        return cls(width + 1, height, support_radius)

    @property
    def width(self) -> int:
        return self.circles_per_layer - 1

    @property
    def height(self) -> int:
        return self.layer_count

    @property
    def bounding_radius(self) -> float:
        r = self.support_radius
        return math.sqrt(r * r + (r / 2) ** 2)


@dataclass(frozen=True, eq=False)
class IntersectionCountGrid:
    counts: np.ndarray
    config: DescriptorConfig
    origin: OrientedPoint

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (self.config.layer_count, self.config.circles_per_layer):
            raise ValueError("grid shape does not match config")
        if c.size and c.min() < 0:
            raise ValueError("negative intersection count")


def layer_offset(config: DescriptorConfig, layer: int) -> float:
    return config.support_radius * ((layer + 0.5) / config.layer_count - 0.5)


def circle_radius(config: DescriptorConfig, circle: int) -> float:
    return (circle + 1) * (config.support_radius / config.circles_per_layer)


def circle_geometry(config: DescriptorConfig, origin: OrientedPoint, layer: int, circle: int):
    """(center, radius, plane normal) of one circle of the support cylinder."""
    if not 0 <= layer < config.layer_count:
        raise IndexError(f"layer {layer} out of range")
    if not 0 <= circle < config.circles_per_layer:
        raise IndexError(f"circle {circle} out of range")
    p = np.asarray(origin.position)
    n = np.asarray(origin.normal)
    center = p + n * layer_offset(config, layer)
    return center, circle_radius(config, circle), n.copy()


@njit(nogil=True, cache=True)
def _frame(n):
    # any orthonormal pair spanning the plane orthogonal to n
    ax, ay, az = abs(n[0]), abs(n[1]), abs(n[2])
    if ax <= ay and ax <= az:
        hx, hy, hz = 1.0, 0.0, 0.0
    elif ay <= az:
        hx, hy, hz = 0.0, 1.0, 0.0
    else:
        hx, hy, hz = 0.0, 0.0, 1.0
    ux = n[1] * hz - n[2] * hy
    uy = n[2] * hx - n[0] * hz
    uz = n[0] * hy - n[1] * hx
    ul = math.sqrt(ux * ux + uy * uy + uz * uz)
    ux /= ul
    uy /= ul
    uz /= ul
    wx = n[1] * uz - n[2] * uy
    wy = n[2] * ux - n[0] * uz
    wz = n[0] * uy - n[1] * ux
    return ux, uy, uz, wx, wy, wz


@njit(nogil=True, cache=True)
def _segment_crossings(ax, ay, bx, by, r2):
    """Crossings of the circle |p|^2 = r2 by segment a-b (half-open inside test)."""
    da = ax * ax + ay * ay
    db = bx * bx + by * by
    ina = da < r2
    inb = db < r2
    if ina != inb:
        return 1
    if ina:
        return 0
    ex = bx - ax
    ey = by - ay
    ee = ex * ex + ey * ey
    if ee == 0.0:
        return 0
    t = -(ax * ex + ay * ey) / ee
    if t <= 0.0 or t >= 1.0:
        return 0
    px = ax + t * ex
    py = ay + t * ey
    if px * px + py * py < r2:
        return 2
    return 0


@njit(nogil=True, cache=True)
def _edge_point(i, j, lx, ly, lz, z):
    # canonical orientation keeps the result identical for both triangles
    # sharing the edge
    if j < i:
        i, j = j, i
    t = (z - lz[i]) / (lz[j] - lz[i])
    return lx[i] + t * (lx[j] - lx[i]), ly[i] + t * (ly[j] - ly[i])


@njit(nogil=True, cache=True)
def _accumulate_triangle(tri, lx, ly, lz, radius, layers, circles, out):
    support = radius
    zs = (lz[tri[0]], lz[tri[1]], lz[tri[2]])
    zmin = min(zs[0], min(zs[1], zs[2]))
    zmax = max(zs[0], max(zs[1], zs[2]))
    # candidate layers have plane offsets in (zmin, zmax]
    lo = int(math.floor((zmin / support + 0.5) * layers - 0.5))
    hi = int(math.ceil((zmax / support + 0.5) * layers - 0.5))
    if lo < 0:
        lo = 0
    if hi > layers - 1:
        hi = layers - 1
    if lo > hi:
        return
    step = support / circles
    for layer in range(lo, hi + 1):
        z = support * ((layer + 0.5) / layers - 0.5)
        s0 = zs[0] >= z
        s1 = zs[1] >= z
        s2 = zs[2] >= z
        if s0 == s1 and s1 == s2:
            continue
        found = 0
        ax = ay = bx = by = 0.0
        for e in range(3):
            a = tri[e]
            b = tri[(e + 1) % 3]
            if (zs[e] >= z) != (zs[(e + 1) % 3] >= z):
                px, py = _edge_point(a, b, lx, ly, lz, z)
                if found == 0:
                    ax, ay = px, py
                else:
                    bx, by = px, py
                found += 1
        if found != 2:
            continue
        da = ax * ax + ay * ay
        db = bx * bx + by * by
        dmax = max(da, db)
        ex = bx - ax
        ey = by - ay
        ee = ex * ex + ey * ey
        dmin = min(da, db)
        if ee > 0.0:
            t = -(ax * ex + ay * ey) / ee
            if 0.0 < t < 1.0:
                px = ax + t * ex
                py = ay + t * ey
                dmin = px * px + py * py
        c_lo = int(math.sqrt(dmin) / step) - 2
        c_hi = int(math.sqrt(dmax) / step) + 1
        if c_lo < 0:
            c_lo = 0
        if c_hi > circles - 1:
            c_hi = circles - 1
        for c in range(c_lo, c_hi + 1):
            r = (c + 1) * step
            k = _segment_crossings(ax, ay, bx, by, r * r)
            if k:
                out[layer, c] += k


@njit(nogil=True, cache=True)
def _grids_kernel(vertices, triangles, positions, normals, cand_ptr, cand_idx,
                  radius, layers, circles, out):
    nv = vertices.shape[0]
    lx = np.empty(nv)
    ly = np.empty(nv)
    lz = np.empty(nv)
    touched = np.zeros(nv, dtype=np.int64) - 1
    for o in range(positions.shape[0]):
        n = normals[o]
        ux, uy, uz, wx, wy, wz = _frame(n)
        px, py, pz = positions[o, 0], positions[o, 1], positions[o, 2]
        for k in range(cand_ptr[o], cand_ptr[o + 1]):
            tri = triangles[cand_idx[k]]
            for q in range(3):
                v = tri[q]
                if touched[v] != o:
                    dx = vertices[v, 0] - px
                    dy = vertices[v, 1] - py
                    dz = vertices[v, 2] - pz
                    lx[v] = dx * ux + dy * uy + dz * uz
                    ly[v] = dx * wx + dy * wy + dz * wz
                    lz[v] = dx * n[0] + dy * n[1] + dz * n[2]
                    touched[v] = o
            _accumulate_triangle(tri, lx, ly, lz, radius, layers, circles, out[o])


class TriangleLocator:
    """Radius queries over a mesh's non-degenerate triangles.

    Built once per mesh and reused for every origin.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        tris = mesh.triangles
        keep = mesh.triangle_areas() >= DEGENERATE_AREA if len(tris) else np.zeros(0, bool)
        self.triangle_ids = np.nonzero(keep)[0].astype(np.int64)
        if len(self.triangle_ids):
            p = mesh.vertices[tris[self.triangle_ids]]
            self.centroids = p.mean(axis=1)
            self.max_extent = float(np.linalg.norm(p - self.centroids[:, None, :], axis=2).max())
            self.tree = cKDTree(self.centroids)
        else:
            self.tree = None

    def candidates(self, positions: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """CSR (pointer, triangle index) lists of triangles near each position."""
        m = len(positions)
        if self.tree is None or m == 0:
            return np.zeros(m + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
        hits = self.tree.query_ball_point(positions, radius + self.max_extent)
        lengths = np.fromiter((len(h) for h in hits), dtype=np.int64, count=m)
        ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(lengths, out=ptr[1:])
        flat = np.fromiter((i for h in hits for i in sorted(h)), dtype=np.int64, count=int(ptr[-1]))
        return ptr, self.triangle_ids[flat]


def compute_intersection_counts(mesh: Mesh, positions: np.ndarray, normals: np.ndarray,
                                config: DescriptorConfig, locator: TriangleLocator | None = None,
                                batch: int = 256) -> np.ndarray:
    """Intersection counts for many origins at once, shape (P, H, C)."""
    positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
    normals = np.ascontiguousarray(normals, dtype=np.float64).reshape(-1, 3)
    out = np.zeros((len(positions), config.layer_count, config.circles_per_layer), dtype=np.int32)
    if mesh.triangle_count == 0 or len(positions) == 0:
        return out
    if locator is None:
        locator = TriangleLocator(mesh)
    for start in range(0, len(positions), batch):
        sl = slice(start, start + batch)
        ptr, idx = locator.candidates(positions[sl], config.bounding_radius)
        _grids_kernel(mesh.vertices, mesh.triangles, positions[sl], normals[sl], ptr, idx,
                      float(config.support_radius), config.layer_count,
                      config.circles_per_layer, out[sl])
    return out


def compute_intersection_grid(mesh: Mesh, origin: OrientedPoint, config: DescriptorConfig) -> IntersectionCountGrid:
    pos, nrm = points_to_arrays([origin])
    counts = compute_intersection_counts(mesh, pos, nrm, config)[0]
    return IntersectionCountGrid(counts, config, origin)


def count_circle_mesh_intersections(mesh: Mesh, center, radius: float, plane_normal) -> int:
    """Crossings between one circle and every triangle of ``mesh``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=np.float64)
    n = np.asarray(plane_normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    # a single-layer, single-circle cylinder whose layer plane passes
    # through ``center``: offset R * (0.5 / 1 - 0.5) = 0
    out = np.zeros((1, 1, 1), dtype=np.int32)
    areas = mesh.triangle_areas()
    ids = np.nonzero(areas >= DEGENERATE_AREA)[0].astype(np.int64)
    ptr = np.array([0, len(ids)], dtype=np.int64)
    _grids_kernel(mesh.vertices, mesh.triangles, center[None, :], n[None, :], ptr, ids,
                  float(radius), 1, 1, out)
    return int(out[0, 0, 0])
