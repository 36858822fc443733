"""Centerline extraction against analytic sweep curves."""

import numpy as np
import pytest

from cathnav.centerline import (
    extract_centerline,
    load_centerline_file,
    resample_polyline,
    save_centerline_file,
)
from cathnav.errors import ExtractionError
from cathnav.mesh import arc_path, straight_path, tube_along_path


def test_straight_cylinder_recovers_axis():
    mesh = tube_along_path(straight_path(100.0, n=21), radius=10.0, n_around=16, cap_ends=True)
    wp = extract_centerline(mesh, np.array([0.0, 0.0, 0.0]), np.array([0.0, 100.0, 0.0]))
    # axis is the y axis: radial deviation stays under a millimetre
    radial = np.linalg.norm(wp[:, [0, 2]], axis=1)
    assert radial.max() < 1.0
    assert wp[0, 1] < wp[-1, 1]  # ordered inlet to outlet


def test_torus_section_recovers_sweep_radius():
    sweep = 30.0
    path = arc_path(sweep, np.deg2rad(150.0), n=31)
    mesh = tube_along_path(path, radius=5.0, n_around=16, cap_ends=True)
    wp = extract_centerline(mesh, path[0], path[-1])
    # algebraic circle fit in the sweep plane
    x, y = wp[:, 0], wp[:, 1]
    A = np.stack([x, y, np.ones_like(x)], axis=1)
    b = x ** 2 + y ** 2
    c = np.linalg.lstsq(A, b, rcond=None)[0]
    cx, cy = c[0] / 2, c[1] / 2
    r_fit = np.sqrt(c[2] + cx ** 2 + cy ** 2)
    assert abs(r_fit - sweep) / sweep < 0.05
    assert np.abs(wp[:, 2]).max() < 1.0


def test_spacing_bound():
    mesh = tube_along_path(straight_path(100.0, n=21), radius=10.0, n_around=16, cap_ends=True)
    wp = extract_centerline(mesh, np.array([0.0, 0.0, 0.0]), np.array([0.0, 100.0, 0.0]), waypoint_spacing=4.0)
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    assert seg.max() <= 4.0 + 1e-9


def test_open_mesh_rejected():
    mesh = tube_along_path(straight_path(50.0, n=11), radius=5.0, n_around=12, cap_ends=False)
    with pytest.raises(ExtractionError):
        extract_centerline(mesh, np.zeros(3), np.array([0.0, 50.0, 0.0]))


def test_capped_tube_is_watertight():
    mesh = tube_along_path(straight_path(50.0, n=11), radius=5.0, n_around=12, cap_ends=True)
    assert mesh.is_watertight()
    open_mesh = tube_along_path(straight_path(50.0, n=11), radius=5.0, n_around=12)
    assert not open_mesh.is_watertight()


def test_resample_polyline_uniform():
    path = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [10.0, 10.0, 0.0]])
    out = resample_polyline(path, 2.0)
    seg = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert seg.max() <= 2.0 + 1e-9
    np.testing.assert_allclose(out[0], path[0])
    np.testing.assert_allclose(out[-1], path[-1])


def test_resample_collapses_duplicates():
    path = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [4.0, 0.0, 0.0]])
    out = resample_polyline(path, 1.0)
    assert np.all(np.isfinite(out))
    assert len(out) == 5


def test_centerline_file_roundtrip(tmp_path):
    wp = np.array([[0.0, 1.5, -2.25], [3.0, 4.0, 5.0], [6.0, 7.0, 8.0]])
    f = tmp_path / "line.txt"
    save_centerline_file(f, wp)
    np.testing.assert_allclose(load_centerline_file(f), wp)


def test_centerline_file_rejects_garbage(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("1 2\n")
    with pytest.raises(ExtractionError):
        load_centerline_file(f)
    f.write_text("# only comments\n")
    with pytest.raises(ExtractionError):
        load_centerline_file(f)
