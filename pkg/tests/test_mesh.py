import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quicci.mesh import (
    DegenerateMeshError,
    Mesh,
    MeshFormatError,
    OrientedPoint,
    RigidPlacement,
    add_spheres,
    concatenate_scene,
    fit_unit_sphere,
    icosphere,
    load_mesh,
    place_in_cube,
    random_rotation,
    sample_surface,
    sample_surface_points,
    save_obj,
    save_ply,
    unique_oriented_points,
    unique_vertex_map,
)
from quicci.experiments.corpus import box, make_toy_corpus

CUBE_OBJ = """\
v -1 -1 -1
v 1 -1 -1
v 1 1 -1
v -1 1 -1
v -1 -1 1
v 1 -1 1
v 1 1 1
v -1 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def cube_mesh(half=1.0):
    corners = np.array([[x, y, z] for z in (-1, 1) for y in (-1, 1) for x in (-1, 1)], dtype=float)
    normals = corners / np.sqrt(3)
    tris = [[0, 1, 3], [0, 3, 2], [4, 7, 5], [4, 6, 7], [0, 4, 5], [0, 5, 1],
            [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]]
    return Mesh(corners * half, normals, tris)


# -- loading --------------------------------------------------------------

def test_cube_obj(tmp_path):
    (tmp_path / "cube.obj").write_text(CUBE_OBJ)
    m = load_mesh(tmp_path / "cube.obj")
    assert m.triangle_count == 12 and m.vertex_count == 8
    assert np.allclose(np.linalg.norm(m.normals, axis=1), 1)
    # area-weighted: the +x and +z faces each put two triangles on this corner
    assert np.allclose(m.normals[6], [2 / 3, 1 / 3, 2 / 3])


def test_quad_is_fan_triangulated(tmp_path):
    (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    assert load_mesh(tmp_path / "q.obj").triangle_count == 2


def test_obj_with_normals_and_negative_indices(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3//1 -2//1 -1//1\n"
    (tmp_path / "n.obj").write_text(text)
    m = load_mesh(tmp_path / "n.obj")
    assert m.triangle_count == 1 and np.allclose(m.normals, [0, 0, 1])


@pytest.mark.parametrize("text", ["", "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n", "f 1 2 3\n", "v 1 2\n"])
def test_bad_obj(tmp_path, text):
    (tmp_path / "bad.obj").write_text(text)
    with pytest.raises((MeshFormatError, DegenerateMeshError)):
        load_mesh(tmp_path / "bad.obj")


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_mesh(tmp_path / "absent.obj")


@pytest.mark.parametrize("binary", [True, False])
def test_ply_roundtrip(tmp_path, binary):
    m = make_toy_corpus(1, seed=3)[0]
    save_ply(tmp_path / "m.ply", m, binary=binary)
    back = load_mesh(tmp_path / "m.ply")
    assert np.array_equal(back.triangles, m.triangles)
    assert np.allclose(back.vertices, m.vertices, atol=1e-6)
    assert np.allclose(back.normals, m.normals, atol=1e-5)


def test_obj_roundtrip(tmp_path):
    m = make_toy_corpus(1, seed=4)[0]
    save_obj(tmp_path / "m.obj", m)
    back = load_mesh(tmp_path / "m.obj")
    # vertices are renumbered in first-use order; the triangles are unchanged
    assert np.allclose(back.vertices[back.triangles], m.vertices[m.triangles])
    assert np.allclose(back.normals[back.triangles], m.normals[m.triangles], atol=1e-6)


def test_mesh_invariants():
    with pytest.raises(ValueError):
        Mesh([[0, 0, 0]], [[0, 0, 2]], np.zeros((0, 3)))
    with pytest.raises(ValueError):
        Mesh([[0, 0, 0]], [[0, 0, 1]], [[0, 0, 1]])


# -- normalisation and placement -------------------------------------------

def test_fit_unit_sphere_cube():
    m = cube_mesh(2.0)
    fitted = fit_unit_sphere(m)
    d = np.linalg.norm(fitted.vertices, axis=1)
    assert abs(d.max() - 1) < 1e-9
    assert np.allclose(fitted.vertices, m.vertices / (2 * np.sqrt(3)))


def test_fit_unit_sphere_idempotent_and_degenerate():
    m = make_toy_corpus(1, seed=5)[0]
    once = fit_unit_sphere(m)
    assert np.allclose(fit_unit_sphere(once).vertices, once.vertices, atol=1e-6)
    point = Mesh([[1, 1, 1]] * 3, [[0, 0, 1]] * 3, [[0, 1, 2]])
    with pytest.raises(DegenerateMeshError):
        fit_unit_sphere(point)


def test_place_in_cube_ranges():
    m = fit_unit_sphere(make_toy_corpus(1, seed=6)[0])
    rng = np.random.default_rng(0)
    for _ in range(50):
        placed, placement = place_in_cube(m, 3.0, rng)
        assert np.all(np.abs(placement.translation) <= 0.5)
        assert np.all(np.abs(placed.vertices) <= 1.5 + 1e-9)
    _, p2 = place_in_cube(m, 2.0, rng)
    assert np.array_equal(p2.translation, np.zeros(3))
    with pytest.raises(ValueError):
        place_in_cube(m, 1.9, rng)


def test_place_in_cube_deterministic_and_rigid():
    m = fit_unit_sphere(make_toy_corpus(1, seed=7)[0])
    a, pa = place_in_cube(m, 3.0, np.random.default_rng(11))
    b, pb = place_in_cube(m, 3.0, np.random.default_rng(11))
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(pa.rotation, pb.rotation)
    i, j = np.triu_indices(min(40, m.vertex_count), 1)
    before = np.linalg.norm(m.vertices[i] - m.vertices[j], axis=1)
    after = np.linalg.norm(a.vertices[i] - a.vertices[j], axis=1)
    assert np.abs(before - after).max() < 1e-6


def test_random_rotation_is_proper():
    rng = np.random.default_rng(1)
    for _ in range(20):
        r = random_rotation(rng)
        RigidPlacement(r, np.zeros(3))
        assert abs(np.linalg.det(r) - 1) < 1e-9


def test_rigid_placement_rejects_reflection():
    with pytest.raises(ValueError):
        RigidPlacement(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


# -- unique vertices --------------------------------------------------------

def test_unique_points_box_faces():
    m = box(np.random.default_rng(0), steps=1)
    assert m.vertex_count == 24
    assert len(unique_oriented_points(m)) == 24


def test_unique_points_collapse_duplicates():
    m = make_toy_corpus(1, seed=8)[0]
    n = m.vertex_count
    doubled = Mesh(np.vstack([m.vertices, m.vertices]), np.vstack([m.normals, m.normals]),
                   np.vstack([m.triangles, m.triangles + n]))
    pts = unique_oriented_points(doubled)
    assert len(pts) == len(unique_oriented_points(m))
    first, inverse = unique_vertex_map(doubled)
    assert np.array_equal(doubled.vertices[first[inverse]], doubled.vertices)
    assert np.array_equal(inverse[:n], inverse[n:])
    assert list(first) == sorted(first)


def test_unique_points_empty():
    assert unique_oriented_points(Mesh.empty()) == []


# -- sampling ---------------------------------------------------------------

def test_samples_on_triangle_plane():
    m = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 1]], [[0, 0, 1]] * 3, [[0, 1, 2]])
    pos, nrm = sample_surface(m, 1000, np.random.default_rng(0))
    normal = np.cross([1, 0, 0], [0, 1, 1]) / np.sqrt(2)
    assert np.abs(pos @ normal).max() < 1e-9
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1)


def test_samples_follow_area():
    v = [[0, 0, 0], [1, 0, 0], [0, 2, 0], [10, 0, 0], [13, 0, 0], [10, 2, 0]]
    m = Mesh(v, [[0, 0, 1]] * 6, [[0, 1, 2], [3, 4, 5]])
    _, _, tri = sample_surface(m, 100_000, np.random.default_rng(1), return_triangles=True)
    assert abs((tri == 1).mean() - 0.75) < 0.01


def test_sample_count_zero_and_zero_area():
    m = make_toy_corpus(1, seed=9)[0]
    assert sample_surface_points(m, 0, np.random.default_rng(0)) == []
    flat = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 0, 1]] * 3, [[0, 1, 2]])
    with pytest.raises(DegenerateMeshError):
        sample_surface(flat, 3, np.random.default_rng(0))


def test_sampling_reproducible():
    m = make_toy_corpus(1, seed=10)[0]
    a = sample_surface(m, 50, np.random.default_rng(99))
    b = sample_surface(m, 50, np.random.default_rng(99))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


# -- scenes -----------------------------------------------------------------

def test_add_spheres_geometry():
    m = make_toy_corpus(1, seed=11)[0]
    out = add_spheres(m, [OrientedPoint((0, 0, 0), (0, 0, 1))], 0.05)
    sv, st_ = icosphere(2)
    assert len(st_) == 320
    assert out.triangle_count == m.triangle_count + 320
    assert np.array_equal(out.vertices[: m.vertex_count], m.vertices)
    centre = out.vertices[m.vertex_count:].mean(axis=0)
    assert np.allclose(centre, [0, 0, 0.05], atol=1e-9)
    assert add_spheres(m, [], 0.05) is m


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 12))
def test_add_spheres_triangle_count(k):
    m = make_toy_corpus(1, seed=12)[0]
    pts = sample_surface_points(m, k, np.random.default_rng(k))
    assert add_spheres(m, pts, 0.05).triangle_count == m.triangle_count + 320 * k


def test_concatenate_scene():
    rng = np.random.default_rng(0)
    a = Mesh(rng.random((12, 3)), [[0, 0, 1]] * 12, rng.integers(0, 12, size=(10, 3)))
    b = Mesh(rng.random((15, 3)), [[0, 1, 0]] * 15, rng.integers(0, 15, size=(20, 3)))
    s = concatenate_scene([a, b])
    assert s.triangle_count == 30
    assert np.array_equal(s.triangles[10:], b.triangles + 12)
    assert list(s.object_ids) == [0] * 12 + [1] * 15
    one = concatenate_scene([a])
    assert np.array_equal(one.vertices, a.vertices) and np.array_equal(one.triangles, a.triangles)
    assert concatenate_scene([]).triangle_count == 0
