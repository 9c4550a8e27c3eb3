import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapecode.exceptions import DegenerateGeometryError, MeshParseError
from shapecode.mesh import (
    TriangleMesh,
    load_mesh,
    normalize_pose,
    parse_obj,
    parse_off,
    save_mesh,
)
from shapecode.synthetic import box_mesh, icosphere, torus_mesh

MINIMAL_OFF = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


def test_minimal_off():
    mesh = parse_off(MINIMAL_OFF)
    assert mesh.n_vertices == 3
    assert mesh.n_faces == 1
    assert mesh.faces.tolist() == [[0, 1, 2]]


def test_quad_is_fan_triangulated():
    text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
    assert parse_off(text).faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_out_of_range_index_reports_line():
    text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"
    with pytest.raises(MeshParseError, match="out of range") as info:
        parse_off(text)
    assert info.value.line == 6


@pytest.mark.parametrize("text, fragment", [
    ("OFX\n3 1 0\n", "header"),
    ("OFF\nthree 1 0\n", "counts"),
    ("OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n", "non-numeric"),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n2 0 1\n", "polygon with 2"),
    ("OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", "file ended"),
])
def test_off_errors(text, fragment):
    with pytest.raises(MeshParseError, match=fragment):
        parse_off(text)


def test_off_counts_on_header_line_and_comments():
    text = "OFF 3 1 0  # inline counts\n# comment\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
    assert parse_off(text).n_faces == 1


def test_obj_records():
    text = "# cube corner\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\n"
    mesh = parse_obj(text)
    assert mesh.n_vertices == 4
    assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_negative_indices_and_errors():
    mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    assert mesh.faces.tolist() == [[0, 1, 2]]
    with pytest.raises(MeshParseError, match="out of range"):
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshParseError, match="polygon"):
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n")


@pytest.mark.parametrize("fmt", ["off", "obj"])
def test_round_trip(tmp_path, fmt):
    rng = np.random.default_rng(3)
    mesh = TriangleMesh(rng.normal(size=(30, 3)), rng.integers(0, 30, size=(40, 3)), "m")
    path = tmp_path / f"m.{fmt}"
    save_mesh(mesh, path)
    again = load_mesh(path)
    assert again.id == "m"
    np.testing.assert_array_equal(again.faces, mesh.faces)
    np.testing.assert_allclose(again.vertices, mesh.vertices, rtol=1e-8, atol=1e-12)
    save_mesh(again, path)
    np.testing.assert_array_equal(load_mesh(path).vertices, again.vertices)


def test_normalize_offset_cube():
    cube = box_mesh(1).transformed(0.5, (5, 5, 5))
    out = normalize_pose(cube)
    np.testing.assert_allclose(out.vertices.mean(axis=0), 0, atol=1e-12)
    assert np.linalg.norm(out.vertices, axis=1).max() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(out.faces, cube.faces)


def test_normalize_single_triangle():
    tri = TriangleMesh([[0, 0, 0], [2, 0, 0], [0, 2, 0]], [[0, 1, 2]])
    out = normalize_pose(tri)
    centroid = np.array([2 / 3, 2 / 3, 0])
    scale = 1 / np.linalg.norm(np.array([2, 0, 0]) - centroid)
    np.testing.assert_allclose(out.vertices, (tri.vertices - centroid) * scale, atol=1e-12)


def test_area_weighting_differs_from_vertex_mean():
    # one half of the square is tessellated much more finely than the other
    v = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]] + [[1, y, 0] for y in np.linspace(0.1, 0.9, 9)]
    faces = [[0, 2, 3]] + [[0, 1, 4]] + [[0, 4 + k, 5 + k] for k in range(8)] + [[0, 12, 2]]
    mesh = TriangleMesh(v, faces)
    np.testing.assert_allclose(mesh.surface_centroid(), [0.5, 0.5, 0.0], atol=1e-12)
    assert not np.allclose(mesh.vertices.mean(axis=0), [0.5, 0.5, 0.0], atol=1e-3)


def test_normalize_degenerate():
    flat = TriangleMesh([[0, 0, 0], [1, 1, 1], [2, 2, 2]], [[0, 1, 2]])
    with pytest.raises(DegenerateGeometryError):
        normalize_pose(flat)


@pytest.mark.parametrize("mesh", [icosphere(2), torus_mesh(), box_mesh(3)], ids=["sphere", "torus", "box"])
def test_normalize_idempotent(mesh):
    once = normalize_pose(mesh.transformed(1.7, (0.3, -2, 4)))
    twice = normalize_pose(once)
    np.testing.assert_allclose(twice.vertices, once.vertices, atol=1e-12)
    np.testing.assert_allclose(once.surface_centroid(), 0, atol=1e-9)
    assert np.linalg.norm(once.vertices, axis=1).max() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(0.01, 100.0),
       shift=st.tuples(*[st.floats(-100, 100)] * 3))
def test_normalize_invariant_to_similarity(scale, shift):
    base = torus_mesh(segments=12, tube_segments=6)
    ref = normalize_pose(base)
    moved = normalize_pose(base.transformed(scale, shift))
    np.testing.assert_allclose(moved.vertices, ref.vertices, atol=1e-9)


def test_mesh_invariants_enforced():
    with pytest.raises(ValueError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
    with pytest.raises(ValueError):
        TriangleMesh([[0, 0, 0], [1, 0, 0]], [[0, 1, 1]])
