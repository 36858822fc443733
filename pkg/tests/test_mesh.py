"""Mesh IO, tube generation, ray and distance queries."""

import numpy as np
import pytest

from cathnav.errors import ConfigError
from cathnav.mesh import (
    TriMesh,
    bent_path,
    load_obj,
    nearest_surface_point,
    raycast,
    raycast_fan,
    save_obj,
    signed_distance,
    straight_path,
    tube_along_path,
)


@pytest.fixture(scope="module")
def tube():
    return tube_along_path(straight_path(60.0, n=13), radius=5.0, n_around=12)


def test_obj_roundtrip(tmp_path, tube):
    p = tmp_path / "tube.obj"
    save_obj(p, tube)
    back = load_obj(p)
    np.testing.assert_allclose(back.vertices, tube.vertices, atol=1e-7)
    np.testing.assert_array_equal(back.faces, tube.faces)


def test_obj_polygon_fanning(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    m = load_obj(p)
    assert len(m.faces) == 2


def test_obj_rejects_empty(tmp_path):
    p = tmp_path / "empty.obj"
    p.write_text("# nothing\n")
    with pytest.raises(ConfigError):
        load_obj(p)


def test_trimesh_validation():
    with pytest.raises(ValueError):
        TriMesh(vertices=np.zeros((3, 2)), faces=np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        TriMesh(vertices=np.zeros((3, 3)), faces=np.array([[0, 1, 5]]))
    with pytest.raises(ValueError):
        TriMesh(vertices=np.full((3, 3), np.nan), faces=np.array([[0, 1, 2]]))


def test_tube_vertices_on_radius(tube):
    # straight tube along y: every vertex sits 5 mm from the axis
    r = np.linalg.norm(tube.vertices[:, [0, 2]], axis=1)
    np.testing.assert_allclose(r, 5.0, atol=1e-9)


def test_tube_normals_point_outward(tube):
    fn = tube.face_normals()
    centroids = tube.vertices[tube.faces].mean(axis=1)
    outward = centroids.copy()
    outward[:, 1] = 0.0
    outward /= np.linalg.norm(outward, axis=1, keepdims=True)
    assert np.all((fn * outward).sum(axis=1) > 0.5)


def test_vertex_normals_unit(tube):
    vn = tube.vertex_normals()
    np.testing.assert_allclose(np.linalg.norm(vn, axis=1), 1.0, atol=1e-9)


def test_bent_path_shape():
    p = bent_path(40.0, 30.0, np.pi / 3, n_straight=10, n_arc=15)
    assert p.shape == (25, 3)
    # arc stays in the xy plane and ends short of full height plus radius
    np.testing.assert_allclose(p[:, 2], 0.0, atol=1e-12)
    seg = np.linalg.norm(np.diff(p[:10], axis=0), axis=1)
    np.testing.assert_allclose(seg, seg[0], atol=1e-9)


def test_raycast_radial(tube):
    # from the axis, a radial ray hits the wall at exactly the radius
    t = raycast(tube, np.array([0.0, 30.0, 0.0]), np.array([1.0, 0.0, 0.0]), 50.0)
    assert t == pytest.approx(5.0, abs=1e-6)


def test_raycast_axial_misses(tube):
    # along the open tube there is nothing to hit
    t = raycast(tube, np.array([0.0, 30.0, 0.0]), np.array([0.0, 1.0, 0.0]), 20.0)
    assert np.isinf(t)


def test_raycast_respects_max_len(tube):
    t = raycast(tube, np.array([0.0, 30.0, 0.0]), np.array([1.0, 0.0, 0.0]), 3.0)
    assert np.isinf(t)


def test_raycast_requires_unit_direction(tube):
    with pytest.raises(ValueError):
        raycast(tube, np.zeros(3), np.array([2.0, 0.0, 0.0]), 10.0)


def test_raycast_fan_matches_single(tube):
    rng = np.random.default_rng(5)
    dirs = rng.normal(size=(10, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = np.array([1.0, 25.0, -1.0])
    fan = raycast_fan(tube, origin, dirs, 40.0)
    singles = [raycast(tube, origin, d, 40.0) for d in dirs]
    np.testing.assert_allclose(fan, singles)


def test_nearest_surface_point(tube):
    k, q, d = nearest_surface_point(tube, np.array([0.0, 30.0, 0.0]))
    assert d == pytest.approx(5.0, abs=0.2)  # faceted circle, chord error
    assert 0 <= k < len(tube.faces)
    assert np.linalg.norm(q[[0, 2]]) == pytest.approx(5.0, abs=0.2)


def test_signed_distance_sign_convention(tube):
    inside = signed_distance(tube, np.array([0.0, 30.0, 0.0]))
    outside = signed_distance(tube, np.array([9.0, 30.0, 0.0]))
    assert inside < 0.0
    assert outside > 0.0
    assert abs(abs(inside) - 5.0) < 0.2
    assert abs(outside - 4.0) < 0.1


def test_content_hash_stable(tube):
    h1 = tube.content_hash()
    h2 = TriMesh(vertices=tube.vertices.copy(), faces=tube.faces.copy()).content_hash()
    assert h1 == h2
    moved = TriMesh(vertices=tube.vertices + 1e-9, faces=tube.faces)
    assert moved.content_hash() != h1


def test_edge_list_counts(tube):
    # closed tube surface: E = 3F/2 only if watertight; open ends add boundary edges
    e = tube.edge_list()
    f = len(tube.faces)
    boundary = 2 * 12  # one ring of boundary edges at each open end
    assert len(e) == (3 * f + boundary) // 2
