import math
import random
from pathlib import Path

import numpy as np
import pytest

from vrframe.geometry import (
    DeformError, GeometryError, Mesh, deform, from_off, load_mesh, make_box, make_plane,
    make_torus, save_mesh, scalar_from_csv, scalar_to_csv, to_off,
)

GOLDENS = Path(__file__).parent / "goldens"


def test_plane_counts_and_corners():
    m = make_plane(1, 1, 2, 2)
    assert sorted(map(tuple, m.vertices.tolist())) == [(-1, -1, 0), (-1, 1, 0), (1, -1, 0), (1, 1, 0)]
    assert len(m.triangles) == 2
    m = make_plane(2, 2, 1, 1)
    assert (len(m.vertices), len(m.triangles)) == (9, 8)


def test_plane_winding_faces_up():
    assert np.all(make_plane(4, 3, 2, 1).face_normals()[:, 2] == 1.0)


def test_plane_euler_disk():
    assert make_plane(10, 10, 1, 1).euler_characteristic() == 1


def test_torus_counts_and_equation():
    m = make_torus(2, 0.5, 16, 8)
    assert (len(m.vertices), len(m.triangles)) == (128, 256)
    x, y, z = m.vertices.T
    assert np.max(np.abs((np.hypot(x, y) - 2) ** 2 + z**2 - 0.25)) < 1e-12
    assert m.euler_characteristic() == 0


def test_torus_is_closed_surface():
    m = make_torus(3, 1, 7, 5)
    count = {}
    for a, b, c in m.triangles.tolist():
        for i, j in ((a, b), (b, c), (c, a)):
            count[(min(i, j), max(i, j))] = count.get((min(i, j), max(i, j)), 0) + 1
    assert set(count.values()) == {2}


def test_box_closed_and_outward():
    m = make_box(1, 2, 3)
    assert m.euler_characteristic() == 2
    centers = m.vertices[m.triangles].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", m.face_normals(), centers) > 0)


def test_generator_preconditions():
    with pytest.raises(GeometryError):
        make_plane(0, 1, 1, 1)
    with pytest.raises(GeometryError):
        make_torus(1, 1, 8, 8)
    with pytest.raises(GeometryError):
        make_torus(2, 1, 2, 8)


def test_generators_deterministic():
    assert make_torus(2, 0.5, 16, 8) == make_torus(2, 0.5, 16, 8)
    assert make_plane(5, 7, 1.5, 2) == make_plane(5, 7, 1.5, 2)


def test_mesh_validation():
    with pytest.raises(GeometryError):
        Mesh([(0, 0, 0)] * 3, [(0, 1, 3)])
    with pytest.raises(GeometryError):
        Mesh([(0, 0, 0)] * 3, [(0, 1, 1)])
    with pytest.raises(GeometryError):
        Mesh([(0, 0, 0)] * 3, [(0, 1, 2)], scalar=[1.0])


def test_deform_identity_is_bitwise():
    m = make_torus(2, 0.5, 12, 6).with_scalar(np.arange(72.0))
    out = deform(m, "x", "y", "z")
    assert out == m
    assert out.vertices.tobytes() == m.vertices.tobytes()


def test_deform_square_rule():
    m = Mesh([(0.5, -0.5, 0.0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    out = deform(m, "x^2", "y^2", "z")
    assert tuple(out.vertices[0]) == (0.25, 0.25, 0.0)


def test_deform_sine_golden():
    m = deform(make_plane(20, 20, 2.0, 2.0), "x", "y", "0.2 * sin(3 * x)")
    assert to_off(m) == (GOLDENS / "plane_sine.off").read_text()
    # independent per-vertex recomputation with plain floats
    for (x, y, z), (x0, y0, _) in zip(m.vertices.tolist(), make_plane(20, 20, 2.0, 2.0).vertices.tolist()):
        assert (x, y, z) == (x0, y0, 0.2 * math.sin(3 * x0))


def test_deform_sees_env_and_keeps_connectivity():
    m = make_plane(3, 3, 1, 1).with_scalar(np.linspace(0, 1, 16))
    out = deform(m, "x + t", "y", "a * z + 1", {"t": 0.5, "a": 2.0})
    assert np.array_equal(out.triangles, m.triangles)
    assert np.array_equal(out.scalar, m.scalar)
    assert np.all(out.vertices[:, 0] == m.vertices[:, 0] + 0.5)
    assert np.all(out.vertices[:, 2] == 1.0)


def test_deform_error_names_vertex():
    m = Mesh([(1, 0, 0), (0, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    with pytest.raises(DeformError) as err:
        deform(m, "1 / x", "y", "z")
    assert err.value.vertex == 1 and err.value.axis == "x"
    with pytest.raises(DeformError):
        deform(m, "[x, y]", "y", "z")


def test_deform_composition():
    rng = random.Random(11)
    f = ("x + 0.1 * sin(y)", "y * cos(0.3 * z)", "z + 0.2 * x * y")
    g = ("exp(0.1 * x)", "y + x^2", "atan(z)")
    for _ in range(20):
        n = rng.randint(3, 30)
        verts = [tuple(rng.uniform(-2, 2) for _ in range(3)) for _ in range(n)]
        m = Mesh(verts, [(0, 1, 2)])
        two_step = deform(deform(m, *f), *g)
        # g∘f by substitution
        sub = {k: f"({v})" for k, v in zip("xyz", f)}
        gf = [
            "exp(0.1 * {x})".format(**sub),
            "{y} + {x}^2".format(**sub),
            "atan({z})".format(**sub),
        ]
        one_step = deform(m, *gf)
        assert np.max(np.abs(two_step.vertices - one_step.vertices)) <= 1e-12


def test_off_round_trip(tmp_path):
    m = make_torus(2, 0.5, 8, 5).with_scalar(np.linspace(-1, 1, 40) / 3)
    assert from_off(to_off(m), m.scalar) == m
    save_mesh(m, tmp_path / "t.off")
    assert (tmp_path / "t.csv").read_text().startswith("index,value\n0,")
    assert load_mesh(tmp_path / "t.off") == m


def test_off_polygon_faces_and_errors():
    m = from_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]
    with pytest.raises(GeometryError):
        from_off("PLY\n")
    with pytest.raises(GeometryError):
        from_off("OFF\n3 1 0\n0 0 0\n")
    assert scalar_from_csv(scalar_to_csv([0.1, 2.0])) == [0.1, 2.0]
