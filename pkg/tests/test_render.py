import math
from pathlib import Path

import numpy as np
import pytest

from scenes_util import render_bundled, triangle_image
from vrframe.formula import evaluate, parse
from vrframe.frames import FrameForest, FrameNode, Pose6D, UnknownFrameError
from vrframe.geometry import Mesh, make_plane, make_torus
from vrframe.render import (
    Camera, DrawItem, FieldError, FieldSpec, Image, RenderError, apply_warp, colormap,
    diff_fraction, project, rasterize, sample_field,
)

GOLDENS = Path(__file__).parent / "goldens"


def origin_camera(**kw):
    forest = FrameForest.from_nodes([FrameNode("cam", None, Pose6D())])
    return Camera("cam", **kw), forest


def lit(img):
    px = np.frombuffer(bytes(img.pixels), np.uint8).reshape(-1, 3)
    return int(np.any(px != 0, axis=1).sum())


# -- projection ---------------------------------------------------------------

def test_axis_point_projects_to_center():
    cam, forest = origin_camera(width=200, height=100)
    assert project(cam, forest, (0, 0, -7.5)) == (100.0, 50.0, 7.5)


def test_points_behind_or_at_near_plane():
    cam, forest = origin_camera(near=0.5)
    assert project(cam, forest, (0, 0, 3)) is None
    assert project(cam, forest, (0, 0, -0.5)) is None
    assert project(cam, forest, (0, 0, -0.51)) is not None


def test_projection_edges_of_view():
    cam, forest = origin_camera(fov=90, width=100, height=100)
    # at 45 degrees up the point lands on the top edge
    px, py, _ = project(cam, forest, (0, 1, -1))
    assert px == 50.0 and py == pytest.approx(0.0, abs=1e-12)


def test_moved_camera_frame():
    forest = FrameForest.from_nodes([FrameNode("cam", None, Pose6D((0, 0, 5), (1, 0, 0, 0)))])
    cam = Camera("cam", width=10, height=10)
    assert project(cam, forest, (0, 0, 0)) == (5.0, 5.0, 5.0)
    with pytest.raises(UnknownFrameError):
        project(Camera("nowhere"), forest, (0, 0, -1))


def test_square_warp_example():
    cam = Camera("c", warp=("x^2 * sign(x)", "y^2 * sign(y)"))
    assert apply_warp(cam, 0.5, -0.5) == (0.25, -0.25)


def test_camera_preconditions():
    with pytest.raises(RenderError):
        Camera("c", fov=180)
    with pytest.raises(RenderError):
        Camera("c", near=0)


# -- colormap -----------------------------------------------------------------

def test_colormap_endpoints_and_quarter():
    assert colormap(-3, -3, 5) == (0, 0, 255)
    assert colormap(5, -3, 5) == (255, 0, 0)
    assert colormap(0.25, 0, 1) == (0, 127, 128)
    assert colormap(0.5, 0, 1) == (0, 255, 0)
    assert colormap(0.75, 0, 1) == (127, 128, 0)
    assert colormap(-10, 0, 1) == (0, 0, 255) and colormap(10, 0, 1) == (255, 0, 0)


def test_colormap_monotone():
    prev = colormap(0.0, 0, 1)
    for k in range(1, 2001):
        cur = colormap(k / 2000, 0, 1)
        assert cur[0] >= prev[0] and cur[2] <= prev[2]
        prev = cur


# -- rasterization ------------------------------------------------------------

def square(z, half=0.5, dx=0.0):
    return Mesh([(dx - half, -half, z), (dx + half, -half, z), (dx + half, half, z), (dx - half, half, z)],
                [(0, 1, 2), (0, 2, 3)])


def test_depth_test_either_order():
    cam, forest = origin_camera(width=80, height=60)
    near = DrawItem(None, square(-2.0, dx=-0.2), (255, 0, 0))
    far = DrawItem(None, square(-3.0, dx=0.3), (0, 0, 255))
    for items in ([near, far], [far, near]):
        img = rasterize(cam, forest, items)
        only_near = rasterize(cam, forest, [near])
        only_far = rasterize(cam, forest, [far])
        overlap = 0
        for y in range(60):
            for x in range(80):
                if any(only_near.get(x, y)) and any(only_far.get(x, y)):
                    overlap += 1
                    assert img.get(x, y) == only_near.get(x, y)
        assert overlap > 50


def test_empty_scene_is_black():
    cam, forest = origin_camera(width=16, height=8)
    img = rasterize(cam, forest, [])
    assert img.to_ppm() == b"P6\n16 8\n255\n" + bytes(16 * 8 * 3)


def test_triangle_golden_and_coverage():
    img = triangle_image()
    assert img.to_ppm() == (GOLDENS / "triangle.ppm").read_bytes()
    # independent coverage: pixel centers strictly inside the analytically projected triangle
    f, aspect = math.tan(math.radians(30)), 64 / 48

    def screen(x, y, z):
        return ((x / -z) / (f * aspect) + 1) / 2 * 64, (1 - (y / -z) / f) / 2 * 48

    a, b, c = screen(-0.5, -0.5, -2), screen(0.5, -0.5, -2), screen(0, 0.5, -2)

    def side(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    for j in range(48):
        for i in range(64):
            p = (i + 0.5, j + 0.5)
            s = (side(a, b, p), side(b, c, p), side(c, a, p))
            inside = all(v > 0 for v in s) or all(v < 0 for v in s)
            assert any(img.get(i, j)) == inside


def test_shared_edge_has_no_gaps_or_overlap():
    # a quad split in two: every pixel inside is covered exactly once
    cam, forest = origin_camera(width=64, height=64, fov=90)
    a = Mesh([(-1, -1, -2), (1, -1, -2), (1, 1, -2)], [(0, 1, 2)])
    b = Mesh([(-1, -1, -2), (1, 1, -2), (-1, 1, -2)], [(0, 1, 2)])
    ia = rasterize(cam, forest, [DrawItem(None, a, (255, 0, 0))])
    ib = rasterize(cam, forest, [DrawItem(None, b, (0, 255, 0))])
    both = rasterize(cam, forest, [DrawItem(None, square(-2, half=1.0), (0, 0, 255))])
    na, nb, nboth = lit(ia), lit(ib), lit(both)
    assert na + nb == nboth == 32 * 32


def test_torus_goldens_and_warp_difference():
    normal = render_bundled("torus_normal")
    warped = render_bundled("torus_warped")
    assert normal.to_ppm() == (GOLDENS / "torus_normal.ppm").read_bytes()
    assert warped.to_ppm() == (GOLDENS / "torus_warped.ppm").read_bytes()
    assert diff_fraction(normal, warped) >= 0.01


def test_plane_and_field_goldens():
    assert render_bundled("plane_deform").to_ppm() == (GOLDENS / "plane_deform.ppm").read_bytes()
    assert render_bundled("field_torus").to_ppm() == (GOLDENS / "field_torus.ppm").read_bytes()
    assert render_bundled("star_sky").to_ppm() == (GOLDENS / "star_sky.ppm").read_bytes()


def test_render_is_repeatable():
    assert render_bundled("torus_warped").to_ppm() == render_bundled("torus_warped").to_ppm()


def test_identity_warp_is_bitwise_noop():
    plain = Camera("cam", width=96, height=72)
    warped = Camera("cam", width=96, height=72, warp=("x", "y"))
    forest = FrameForest.from_nodes([FrameNode("cam", None, Pose6D((0, -5, 3), Pose6D.rotate((1, 0, 0), 59).rotation))])
    item = DrawItem(None, make_torus(2, 0.5, 24, 12))
    assert rasterize(plain, forest, [item]).to_ppm() == rasterize(warped, forest, [item]).to_ppm()


def test_ppm_round_trip(tmp_path):
    img = triangle_image()
    img.save(tmp_path / "t.ppm")
    again = Image.from_ppm((tmp_path / "t.ppm").read_bytes())
    assert again == img


# -- fields -------------------------------------------------------------------

def test_constant_field():
    forest = FrameForest()
    s = sample_field(FieldSpec(parse("1")), make_plane(3, 3, 1, 1), None, forest, 0.0)
    assert s.tolist() == [1.0] * 16


def test_field_x_is_world_x():
    forest = FrameForest.from_nodes([FrameNode("p", None, Pose6D.translate(2.5, 0, 0))])
    mesh = make_plane(4, 2, 2, 1)
    s = sample_field(FieldSpec(parse("x")), mesh, "p", forest, 0.0)
    assert s.tolist() == [v[0] + 2.5 for v in mesh.vertices.tolist()]


def test_dipole_field_matches_independent_path():
    forest = FrameForest.from_nodes([FrameNode("torus", None, Pose6D.translate(0.25, -0.5, 1.0))])
    mesh = make_torus(2, 0.5, 16, 8)
    text = "[x, y, z] / (x^2 + y^2 + z^2)^1.5"
    s = sample_field(FieldSpec(parse(text), 0.1, 0.5), mesh, "torus", forest, 0.0)
    expr = parse(text)
    for i, (x, y, z) in enumerate(mesh.vertices.tolist()):
        wx, wy, wz = x + 0.25, y - 0.5, z + 1.0
        a, b, c = evaluate(expr, {"x": wx, "y": wy, "z": wz}).tolist()
        assert s[i] == math.sqrt(a * a + b * b + c * c)
        assert s[i] == pytest.approx(1 / (wx * wx + wy * wy + wz * wz), rel=1e-12)


def test_field_sees_time_and_reports_vertex():
    forest = FrameForest()
    mesh = Mesh([(1, 0, 0), (0, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    assert sample_field(FieldSpec(parse("t * 2")), mesh, None, forest, 1.5).tolist() == [3.0] * 3
    with pytest.raises(FieldError) as err:
        sample_field(FieldSpec(parse("1 / x")), mesh, None, forest, 0.0)
    assert err.value.vertex == 1
