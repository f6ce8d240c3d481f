"""Procedural toy meshes for desk-scale experiments.

Shapes are small (a few hundred vertices) and deliberately varied: smooth
noisy blobs, boxes with sharp creases, tori, capped cylinders and cones, and
compounds of two or three of these.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..mesh import Mesh, concatenate_scene, icosphere, random_rotation, save_obj, vertex_normals


def _smooth(vertices, triangles) -> Mesh:
    return Mesh(vertices, vertex_normals(vertices, triangles), triangles)


def blob(rng: np.random.Generator, subdivisions: int = 2) -> Mesh:
    v, t = icosphere(subdivisions)
    r = np.ones(len(v))
    for _ in range(rng.integers(2, 6)):
        freq = rng.normal(size=3) * rng.uniform(1.0, 4.0)
        r += rng.uniform(0.05, 0.3) * np.sin(v @ freq + rng.uniform(0, 2 * np.pi))
    scale = rng.uniform(0.5, 1.5, size=3)
    return _smooth(v * r[:, None] * scale, t)


def box(rng: np.random.Generator, steps: int = 3) -> Mesh:
    half = rng.uniform(0.3, 1.0, size=3)
    verts, normals, tris = [], [], []
    g = np.linspace(-1.0, 1.0, steps + 1)
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u, w = [a for a in range(3) if a != axis]
            base = len(verts)
            for a in g:
                for b in g:
                    p = np.zeros(3)
                    p[axis] = sign
                    p[u], p[w] = a, b
                    verts.append(p * half)
                    n = np.zeros(3)
                    n[axis] = sign
                    normals.append(n)
            for i in range(steps):
                for j in range(steps):
                    a0 = base + i * (steps + 1) + j
                    a1, a2, a3 = a0 + 1, a0 + steps + 1, a0 + steps + 2
                    if sign > 0:
                        tris += [(a0, a2, a3), (a0, a3, a1)]
                    else:
                        tris += [(a0, a3, a2), (a0, a1, a3)]
    return Mesh(np.array(verts), np.array(normals), np.array(tris))


def torus(rng: np.random.Generator) -> Mesh:
    major = rng.uniform(0.6, 1.0)
    minor = rng.uniform(0.15, 0.4)
    nu, nv = int(rng.integers(16, 28)), int(rng.integers(8, 14))
    u = np.linspace(0, 2 * np.pi, nu, endpoint=False)
    w = np.linspace(0, 2 * np.pi, nv, endpoint=False)
    uu, ww = np.meshgrid(u, w, indexing="ij")
    x = (major + minor * np.cos(ww)) * np.cos(uu)
    y = (major + minor * np.cos(ww)) * np.sin(uu)
    z = minor * np.sin(ww) * rng.uniform(0.7, 1.3)
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    tris = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            tris += [(a, b, c), (a, c, d)]
    return _smooth(verts, np.array(tris))


def cylinder(rng: np.random.Generator, cone: bool = False) -> Mesh:
    n = int(rng.integers(12, 24))
    rings = int(rng.integers(3, 7))
    height = rng.uniform(0.8, 2.0)
    r0 = rng.uniform(0.3, 0.8)
    r1 = rng.uniform(0.0, 0.2) if cone else r0 * rng.uniform(0.7, 1.3)
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    verts, normals, tris = [], [], []
    zs = np.linspace(-height / 2, height / 2, rings + 1)
    radii = np.linspace(r0, r1, rings + 1)
    slope = (r0 - r1) / height
    for z, r in zip(zs, radii):
        for a in ang:
            verts.append((r * np.cos(a), r * np.sin(a), z))
            nn = np.array((np.cos(a), np.sin(a), slope))
            normals.append(nn / np.linalg.norm(nn))
    for i in range(rings):
        for j in range(n):
            a = i * n + j
            b = i * n + (j + 1) % n
            c = (i + 1) * n + (j + 1) % n
            d = (i + 1) * n + j
            tris += [(a, b, c), (a, c, d)]
    # caps carry their own vertices so the rim stays a crease
    for z, r, sign in ((zs[0], radii[0], -1.0), (zs[-1], radii[-1], 1.0)):
        if r < 1e-3:
            continue
        center = len(verts)
        verts.append((0.0, 0.0, z))
        normals.append((0.0, 0.0, sign))
        for a in ang:
            verts.append((r * np.cos(a), r * np.sin(a), z))
            normals.append((0.0, 0.0, sign))
        for j in range(n):
            a, b = center + 1 + j, center + 1 + (j + 1) % n
            tris.append((center, b, a) if sign < 0 else (center, a, b))
    return Mesh(np.array(verts), np.array(normals), np.array(tris))


_PRIMITIVES = ("blob", "box", "torus", "cylinder", "cone")


def _primitive(kind: str, rng: np.random.Generator) -> Mesh:
    if kind == "blob":
        return blob(rng)
    if kind == "box":
        return box(rng)
    if kind == "torus":
        return torus(rng)
    if kind == "cylinder":
        return cylinder(rng)
    return cylinder(rng, cone=True)


def _posed(mesh: Mesh, rng: np.random.Generator, offset_scale: float) -> Mesh:
    r = random_rotation(rng)
    t = rng.normal(size=3) * offset_scale
    n = mesh.normals @ r.T
    return Mesh(mesh.vertices @ r.T + t, n / np.linalg.norm(n, axis=1, keepdims=True), mesh.triangles)


def toy_mesh(rng: np.random.Generator) -> Mesh:
    if rng.random() < 0.35:
        parts = [_posed(_primitive(rng.choice(_PRIMITIVES), rng), rng, 0.6)
                 for _ in range(int(rng.integers(2, 4)))]
        merged = concatenate_scene(parts)
        return Mesh(merged.vertices, merged.normals, merged.triangles)
    return _posed(_primitive(rng.choice(_PRIMITIVES), rng), rng, 0.0)


def make_toy_corpus(count: int, seed: int = 0) -> list[Mesh]:
    rng = np.random.default_rng(seed)
    return [toy_mesh(rng) for _ in range(count)]


def write_toy_corpus(directory, count: int, seed: int = 0) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, mesh in enumerate(make_toy_corpus(count, seed)):
        path = directory / f"toy_{i:04d}.obj"
        save_obj(path, mesh)
        paths.append(path)
    return paths
