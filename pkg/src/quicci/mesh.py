"""Triangle meshes: loading, normalisation, placement, sampling and scenes."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshFormatError(ValueError):
    pass


class DegenerateMeshError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    normals: np.ndarray
    triangles: np.ndarray
    # per-vertex source mesh id; set by concatenate_scene
    object_ids: np.ndarray | None = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if n.shape != v.shape:
            raise ValueError("one normal per vertex required")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if len(n):
            lengths = np.linalg.norm(n, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise ValueError("normals must be unit length")
        object.__setattr__(self, "vertices", _frozen(v, np.float64))
        object.__setattr__(self, "normals", _frozen(n, np.float64))
        object.__setattr__(self, "triangles", _frozen(t, np.int64))
        if self.object_ids is not None:
            ids = np.asarray(self.object_ids, dtype=np.int32).reshape(-1)
            if ids.shape[0] != v.shape[0]:
                raise ValueError("one object id per vertex required")
            object.__setattr__(self, "object_ids", _frozen(ids, np.int32))

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]

    def triangle_areas(self) -> np.ndarray:
        if not self.triangle_count:
            return np.zeros(0)
        p = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    @classmethod
    def empty(cls) -> Mesh:
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


@dataclass(frozen=True)
class OrientedPoint:
    position: tuple[float, float, float]
    normal: tuple[float, float, float]

    def __post_init__(self):
        p = tuple(float(x) for x in self.position)
        n = tuple(float(x) for x in self.normal)
        if len(p) != 3 or len(n) != 3:
            raise ValueError("position and normal must be 3D")
        if abs(np.linalg.norm(n) - 1.0) > 1e-6:
            raise ValueError("normal must be unit length")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "normal", n)


@dataclass(frozen=True, eq=False)
class RigidPlacement:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.det(r) - 1.0) > 1e-6 or np.abs(r.T @ r - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation must be a proper orthonormal matrix")
        object.__setattr__(self, "rotation", _frozen(r, np.float64))
        object.__setattr__(self, "translation", _frozen(t, np.float64))

    @classmethod
    def identity(cls) -> RigidPlacement:
        return cls(np.eye(3), np.zeros(3))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def apply_normals(self, normals: np.ndarray) -> np.ndarray:
        return np.asarray(normals, dtype=np.float64) @ self.rotation.T

    def apply(self, mesh: Mesh) -> Mesh:
        n = self.apply_normals(mesh.normals)
        if len(n):
            n /= np.linalg.norm(n, axis=1, keepdims=True)
        return Mesh(self.apply_points(mesh.vertices), n, mesh.triangles, mesh.object_ids)

    def apply_point(self, point: OrientedPoint) -> OrientedPoint:
        p = self.apply_points(np.asarray(point.position))
        n = self.apply_normals(np.asarray(point.normal))
        return OrientedPoint(p, n / np.linalg.norm(n))


def points_to_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([p.position for p in points], dtype=np.float64).reshape(-1, 3)
    nrm = np.array([p.normal for p in points], dtype=np.float64).reshape(-1, 3)
    return pos, nrm


# --------------------------------------------------------------------------
# normals

def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, normalised."""
    vertices = np.asarray(vertices, dtype=np.float64)
    acc = np.zeros_like(vertices)
    if len(triangles):
        p = vertices[triangles]
        # cross product magnitude is twice the area, so this is area weighting
        fn = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        for k in range(3):
            np.add.at(acc, triangles[:, k], fn)
    lengths = np.linalg.norm(acc, axis=1)
    out = np.zeros_like(acc)
    ok = lengths > 0
    out[ok] = acc[ok] / lengths[ok, None]
    # isolated or fully degenerate vertices get an arbitrary unit normal
    out[~ok] = (0.0, 0.0, 1.0)
    return out


def _normalise_rows(n: np.ndarray, fallback: np.ndarray | None = None) -> np.ndarray:
    lengths = np.linalg.norm(n, axis=1)
    out = np.empty_like(n)
    ok = lengths > 0
    out[ok] = n[ok] / lengths[ok, None]
    out[~ok] = (0.0, 0.0, 1.0) if fallback is None else fallback[~ok]
    return out


# --------------------------------------------------------------------------
# file IO

def load_mesh(path, format: str | None = None) -> Mesh:
    """Load an OBJ or PLY triangle mesh.  Polygons are fan-triangulated."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read mesh {path}: {exc}") from exc
    if fmt == "OBJ":
        verts, normals, tris = _parse_obj(data.decode("utf-8", errors="replace"))
    elif fmt == "PLY":
        verts, normals, tris = _parse_ply(data)
    else:
        raise MeshFormatError(f"unsupported mesh format {fmt!r}")
    return _finish_mesh(verts, normals, tris, path)


def _finish_mesh(verts, normals, tris, path) -> Mesh:
    if len(verts) == 0 or len(tris) == 0:
        raise MeshFormatError(f"{path}: no vertices or faces")
    verts = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    if tris.min() < 0 or tris.max() >= len(verts):
        raise MeshFormatError(f"{path}: face index out of range")
    p = verts[tris]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    if not np.any(area > 1e-12):
        raise DegenerateMeshError(f"{path}: every triangle has zero area")
    computed = vertex_normals(verts, tris)
    if normals is None:
        normals = computed
    else:
        normals = _normalise_rows(np.asarray(normals, dtype=np.float64).reshape(-1, 3), computed)
    return Mesh(verts, normals, tris)


def _parse_obj(text: str):
    positions, file_normals = [], []
    # (position index, normal index or -1) -> output vertex
    vertex_map: dict[tuple[int, int], int] = {}
    out_pos, out_nrm_idx, tris = [], [], []
    any_normals = False

    def resolve(idx: int, n: int) -> int:
        return idx - 1 if idx > 0 else n + idx

    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        try:
            if tag == "v":
                positions.append([float(x) for x in parts[1:4]])
            elif tag == "vn":
                file_normals.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                face = []
                for token in parts[1:]:
                    fields = token.split("/")
                    vi = resolve(int(fields[0]), len(positions))
                    ni = -1
                    if len(fields) >= 3 and fields[2]:
                        ni = resolve(int(fields[2]), len(file_normals))
                        any_normals = True
                    key = (vi, ni)
                    if key not in vertex_map:
                        vertex_map[key] = len(out_pos)
                        out_pos.append(vi)
                        out_nrm_idx.append(ni)
                    face.append(vertex_map[key])
                if len(face) < 3:
                    raise MeshFormatError(f"line {lineno}: face with fewer than 3 vertices")
                for k in range(1, len(face) - 1):
                    tris.append((face[0], face[k], face[k + 1]))
        except (ValueError, IndexError) as exc:
            if isinstance(exc, MeshFormatError):
                raise
            raise MeshFormatError(f"line {lineno}: cannot parse {line.strip()!r}") from exc
    if not positions or not tris:
        raise MeshFormatError("OBJ has no vertices or faces")
    pos = np.asarray(positions, dtype=np.float64)
    if pos.shape[1] != 3:
        raise MeshFormatError("vertex records need 3 coordinates")
    idx = np.asarray(out_pos, dtype=np.int64)
    if idx.max() >= len(pos) or idx.min() < 0:
        raise MeshFormatError("face references a missing vertex")
    verts = pos[idx]
    normals = None
    if any_normals:
        nidx = np.asarray(out_nrm_idx, dtype=np.int64)
        fn = np.asarray(file_normals, dtype=np.float64).reshape(-1, 3)
        if nidx.max() >= len(fn):
            raise MeshFormatError("face references a missing normal")
        normals = np.zeros_like(verts)
        has = nidx >= 0
        normals[has] = fn[nidx[has]]
    return verts, normals, np.asarray(tris, dtype=np.int64)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MeshFormatError("not a PLY file")
    nl = data.find(b"\n", end)
    body = data[nl + 1:] if nl >= 0 else b""
    header = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements: list[tuple[str, int, list]] = []
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshFormatError("property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], "list", parts[2], parts[3]))
            else:
                elements[-1][2].append((parts[2], parts[1]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshFormatError(f"unsupported PLY format {fmt!r}")
    try:
        if fmt == "ascii":
            tables = _ply_ascii(body, elements)
        else:
            tables = _ply_binary(body, elements)
    except (ValueError, IndexError, struct.error) as exc:
        raise MeshFormatError(f"malformed PLY body: {exc}") from exc
    if "vertex" not in tables or "face" not in tables:
        raise MeshFormatError("PLY needs vertex and face elements")
    vt = tables["vertex"]
    try:
        verts = np.column_stack([vt["x"], vt["y"], vt["z"]]).astype(np.float64)
    except KeyError as exc:
        raise MeshFormatError("vertex element lacks x/y/z") from exc
    normals = None
    if all(k in vt for k in ("nx", "ny", "nz")):
        normals = np.column_stack([vt["nx"], vt["ny"], vt["nz"]]).astype(np.float64)
    ft = tables["face"]
    faces = ft.get("vertex_indices", ft.get("vertex_index"))
    if faces is None:
        raise MeshFormatError("face element lacks vertex_indices")
    tris = []
    for face in faces:
        if len(face) < 3:
            raise MeshFormatError("face with fewer than 3 vertices")
        for k in range(1, len(face) - 1):
            tris.append((face[0], face[k], face[k + 1]))
    return verts, normals, np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def _ply_ascii(body: bytes, elements):
    tokens = body.decode("ascii").split()
    pos = 0
    tables = {}
    for name, count, props in elements:
        cols: dict[str, list] = {p[0]: [] for p in props}
        for _ in range(count):
            for prop in props:
                if prop[1] == "list":
                    n = int(tokens[pos])
                    pos += 1
                    cols[prop[0]].append([int(float(x)) for x in tokens[pos:pos + n]])
                    pos += n
                else:
                    cols[prop[0]].append(float(tokens[pos]))
                    pos += 1
        if pos > len(tokens):
            raise ValueError("unexpected end of data")
        tables[name] = cols
    return tables


def _ply_binary(body: bytes, elements):
    pos = 0
    tables = {}
    for name, count, props in elements:
        if all(p[1] != "list" for p in props):
            dtype = np.dtype([(p[0], "<" + _PLY_TYPES[p[1]]) for p in props])
            nbytes = dtype.itemsize * count
            if pos + nbytes > len(body):
                raise ValueError("unexpected end of data")
            arr = np.frombuffer(body, dtype=dtype, count=count, offset=pos)
            pos += nbytes
            tables[name] = {p[0]: arr[p[0]] for p in props}
            continue
        cols: dict[str, list] = {p[0]: [] for p in props}
        for _ in range(count):
            for prop in props:
                if prop[1] == "list":
                    ct = np.dtype("<" + _PLY_TYPES[prop[2]])
                    it = np.dtype("<" + _PLY_TYPES[prop[3]])
                    n = int(np.frombuffer(body, dtype=ct, count=1, offset=pos)[0])
                    pos += ct.itemsize
                    vals = np.frombuffer(body, dtype=it, count=n, offset=pos)
                    pos += it.itemsize * n
                    cols[prop[0]].append(vals.astype(np.int64).tolist())
                else:
                    t = np.dtype("<" + _PLY_TYPES[prop[1]])
                    cols[prop[0]].append(np.frombuffer(body, dtype=t, count=1, offset=pos)[0])
                    pos += t.itemsize
        tables[name] = cols
    return tables


def save_obj(path, mesh: Mesh) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"vn {x!r} {y!r} {z!r}" for x, y, z in mesh.normals.tolist()]
    lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def save_ply(path, mesh: Mesh, binary: bool = True) -> None:
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {mesh.vertex_count}",
        *(f"property float {k}" for k in ("x", "y", "z", "nx", "ny", "nz")),
        f"element face {mesh.triangle_count}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    head = ("\n".join(header) + "\n").encode("ascii")
    vdata = np.hstack([mesh.vertices, mesh.normals]).astype("<f4")
    if binary:
        fdata = np.zeros(mesh.triangle_count, dtype=[("n", "u1"), ("i", "<i4", (3,))])
        fdata["n"] = 3
        fdata["i"] = mesh.triangles
        Path(path).write_bytes(head + vdata.tobytes() + fdata.tobytes())
    else:
        rows = [" ".join(repr(float(x)) for x in row) for row in vdata]
        rows += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
        Path(path).write_bytes(head + ("\n".join(rows) + "\n").encode("ascii"))


# --------------------------------------------------------------------------
# normalisation and placement

def fit_unit_sphere(mesh: Mesh) -> Mesh:
    """Scale and translate so the AABB-centred bounding sphere is the unit sphere."""
    if mesh.vertex_count == 0:
        raise DegenerateMeshError("empty mesh")
    v = mesh.vertices
    center = 0.5 * (v.min(axis=0) + v.max(axis=0))
    radius = np.linalg.norm(v - center, axis=1).max()
    if radius <= 0:
        raise DegenerateMeshError("all vertices coincide")
    return Mesh((v - center) / radius, mesh.normals, mesh.triangles, mesh.object_ids)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform rotation matrix from a normalised Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def place_in_cube(mesh: Mesh, cube_edge: float, rng: np.random.Generator) -> tuple[Mesh, RigidPlacement]:
    if cube_edge < 2:
        raise ValueError("cube edge must be at least 2 to hold a unit sphere")
    rotation = random_rotation(rng)
    slack = cube_edge / 2 - 1.0
    translation = rng.uniform(-slack, slack, size=3) if slack > 0 else np.zeros(3)
    placement = RigidPlacement(rotation, translation)
    return placement.apply(mesh), placement


# --------------------------------------------------------------------------
# oriented points

def unique_vertex_map(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """(first, inverse): first-occurrence indices of each distinct
    (position, normal) pair in vertex order, and for every vertex the
    position of its representative within ``first``."""
    if mesh.vertex_count == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    key = np.ascontiguousarray(np.hstack([mesh.vertices, mesh.normals]))
    rows = key.view(np.dtype((np.void, key.dtype.itemsize * 6))).ravel()
    _, first, inverse = np.unique(rows, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return first[order].astype(np.int64), rank[inverse.ravel()].astype(np.int64)


def unique_vertex_indices(mesh: Mesh) -> np.ndarray:
    """Indices of the first occurrence of each distinct (position, normal) pair."""
    return unique_vertex_map(mesh)[0]


def unique_oriented_points(mesh: Mesh) -> list[OrientedPoint]:
    idx = unique_vertex_indices(mesh)
    return [OrientedPoint(mesh.vertices[i], mesh.normals[i]) for i in idx]


def sample_surface_points(mesh: Mesh, count: int, rng: np.random.Generator) -> list[OrientedPoint]:
    pos, nrm = sample_surface(mesh, count, rng)
    return [OrientedPoint(p, n) for p, n in zip(pos, nrm)]


def sample_surface(mesh: Mesh, count: int, rng: np.random.Generator, return_triangles: bool = False):
    """Area-uniform surface samples as (positions, normals[, triangle ids])."""
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise DegenerateMeshError("mesh has zero surface area")
    tri = rng.choice(len(areas), size=count, p=areas / total)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    w = 1 - u - v
    ids = mesh.triangles[tri]
    p = mesh.vertices
    pos = w[:, None] * p[ids[:, 0]] + u[:, None] * p[ids[:, 1]] + v[:, None] * p[ids[:, 2]]
    n = mesh.normals
    nrm = w[:, None] * n[ids[:, 0]] + u[:, None] * n[ids[:, 1]] + v[:, None] * n[ids[:, 2]]
    face = np.cross(p[ids[:, 1]] - p[ids[:, 0]], p[ids[:, 2]] - p[ids[:, 0]])
    face = _normalise_rows(face)
    nrm = _normalise_rows(nrm, face)
    if return_triangles:
        return pos, nrm, tri
    return pos, nrm


# --------------------------------------------------------------------------
# scene construction

_ICOSPHERE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def icosphere(subdivisions: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere (vertices, triangles); 20 * 4**subdivisions faces."""
    if subdivisions in _ICOSPHERE_CACHE:
        return _ICOSPHERE_CACHE[subdivisions]
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    result = (np.array(verts), np.array(faces, dtype=np.int64))
    _ICOSPHERE_CACHE[subdivisions] = result
    return result


def add_spheres(mesh: Mesh, points, radius: float, subdivisions: int = 2) -> Mesh:
    """Append one icosphere per point, touching the surface at that point."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if isinstance(points, tuple) and len(points) == 2 and isinstance(points[0], np.ndarray):
        pos, nrm = points
    else:
        pos, nrm = points_to_arrays(points)
    if len(pos) == 0:
        return mesh
    sv, st = icosphere(subdivisions)
    centers = pos + radius * nrm
    nv = len(sv)
    verts = (centers[:, None, :] + radius * sv[None, :, :]).reshape(-1, 3)
    normals = np.broadcast_to(sv, (len(pos), nv, 3)).reshape(-1, 3)
    offsets = mesh.vertex_count + nv * np.arange(len(pos))
    tris = (st[None, :, :] + offsets[:, None, None]).reshape(-1, 3)
    ids = None
    if mesh.object_ids is not None:
        ids = np.concatenate([mesh.object_ids, np.full(len(verts), -1, dtype=np.int32)])
    return Mesh(
        np.vstack([mesh.vertices, verts]),
        np.vstack([mesh.normals, normals]),
        np.vstack([mesh.triangles, tris]),
        ids,
    )


def concatenate_scene(meshes: list[Mesh]) -> Mesh:
    """Merge meshes into one, tagging every vertex with its source index."""
    if not meshes:
        m = Mesh.empty()
        return Mesh(m.vertices, m.normals, m.triangles, np.zeros(0, dtype=np.int32))
    verts, normals, tris, ids = [], [], [], []
    offset = 0
    for k, m in enumerate(meshes):
        verts.append(m.vertices)
        normals.append(m.normals)
        tris.append(m.triangles + offset)
        ids.append(np.full(m.vertex_count, k, dtype=np.int32))
        offset += m.vertex_count
    return Mesh(np.vstack(verts), np.vstack(normals), np.vstack(tris), np.concatenate(ids))
