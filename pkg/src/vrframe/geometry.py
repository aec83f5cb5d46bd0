"""Triangle meshes, primitive generators and formula-driven deformation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from .formula import Env, Expr, FormulaError, evaluate, parse
from .formula.evaluator import as_env


class GeometryError(Exception):
    pass


class DeformError(GeometryError):
    def __init__(self, vertex: int, axis: str, cause: Exception):
        self.vertex = vertex
        self.axis = axis
        self.cause = cause
        super().__init__(f"deformation f{axis} failed at vertex {vertex}: {cause}")


def _frozen(a, dtype, shape_tail) -> np.ndarray:
    arr = np.array(a, dtype=dtype).reshape((-1, *shape_tail))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    scalar: Optional[np.ndarray] = None

    def __post_init__(self):
        v = _frozen(self.vertices, np.float64, (3,))
        tri = _frozen(self.triangles, np.int64, (3,))
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", tri)
        if tri.size:
            if tri.min() < 0 or tri.max() >= len(v):
                raise GeometryError("triangle index out of range")
            if np.any((tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])):
                raise GeometryError("degenerate triangle with repeated index")
        if self.scalar is not None:
            s = _frozen(self.scalar, np.float64, ())
            if len(s) != len(v):
                raise GeometryError(f"scalar channel has {len(s)} values for {len(v)} vertices")
            object.__setattr__(self, "scalar", s)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        if (self.scalar is None) != (other.scalar is None):
            return False
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and (self.scalar is None or np.array_equal(self.scalar, other.scalar))
        )

    __hash__ = None

    def with_scalar(self, scalar) -> "Mesh":
        return Mesh(self.vertices, self.triangles, scalar)

    def edges(self) -> set[tuple[int, int]]:
        out = set()
        for a, b, c in self.triangles.tolist():
            for i, j in ((a, b), (b, c), (c, a)):
                out.add((min(i, j), max(i, j)))
        return out

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges()) + len(self.triangles)

    def face_normals(self) -> np.ndarray:
        v = self.vertices
        a, b, c = v[self.triangles[:, 0]], v[self.triangles[:, 1]], v[self.triangles[:, 2]]
        n = np.cross(b - a, c - a)
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


# -- generators ------------------------------------------------------------

def make_plane(nx: int, ny: int, sx: float, sy: float) -> Mesh:
    """An nx by ny grid of quads on z=0, centered at the origin, normals +z."""
    if nx < 1 or ny < 1:
        raise GeometryError("plane needs nx, ny >= 1")
    if not (sx > 0 and sy > 0):
        raise GeometryError("plane needs positive size")
    verts = []
    for j in range(ny + 1):
        y = -sy / 2 + sy * j / ny
        for i in range(nx + 1):
            verts.append((-sx / 2 + sx * i / nx, y, 0.0))
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 1, a + nx + 2
            tris.append((a, b, d))
            tris.append((a, d, c))
    return Mesh(verts, tris)


def make_torus(R: float, r: float, nu: int, nv: int) -> Mesh:
    """Torus around the z axis; u runs around the main ring, v around the tube."""
    if not (R > r > 0):
        raise GeometryError("torus needs R > r > 0")
    if nu < 3 or nv < 3:
        raise GeometryError("torus needs nu, nv >= 3")
    verts = []
    for i in range(nu):
        u = 2 * math.pi * i / nu
        cu, su = math.cos(u), math.sin(u)
        for j in range(nv):
            v = 2 * math.pi * j / nv
            ring = R + r * math.cos(v)
            verts.append((ring * cu, ring * su, r * math.sin(v)))
    tris = []
    for i in range(nu):
        i2 = (i + 1) % nu
        for j in range(nv):
            j2 = (j + 1) % nv
            a, b = i * nv + j, i2 * nv + j
            c, d = i * nv + j2, i2 * nv + j2
            # outward normals: d/du x d/dv points away from the tube center
            tris.append((a, b, d))
            tris.append((a, d, c))
    return Mesh(verts, tris)


def make_box(sx: float, sy: float, sz: float) -> Mesh:
    """Axis-aligned box centered at the origin with outward-facing triangles."""
    if not (sx > 0 and sy > 0 and sz > 0):
        raise GeometryError("box needs positive size")
    hx, hy, hz = sx / 2, sy / 2, sz / 2
    verts = [(x, y, z) for z in (-hz, hz) for y in (-hy, hy) for x in (-hx, hx)]
    quads = [
        (0, 2, 3, 1),  # -z
        (4, 5, 7, 6),  # +z
        (0, 1, 5, 4),  # -y
        (2, 6, 7, 3),  # +y
        (0, 4, 6, 2),  # -x
        (1, 3, 7, 5),  # +x
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    return Mesh(verts, tris)


# -- deformation -----------------------------------------------------------

Formula = Union[str, Expr]


def _expr(f: Formula) -> Expr:
    return parse(f) if isinstance(f, str) else f


def deform(mesh: Mesh, fx: Formula, fy: Formula, fz: Formula,
           env: Env | Mapping[str, Any] | None = None) -> Mesh:
    """Remap every vertex (x, y, z) to (fx, fy, fz). Connectivity is untouched."""
    exprs = [("x", _expr(fx)), ("y", _expr(fy)), ("z", _expr(fz))]
    base = as_env(env)
    scratch = Env(dict(base.variables), dict(base.functions))
    out = np.empty_like(mesh.vertices)
    for i, (x, y, z) in enumerate(mesh.vertices.tolist()):
        scratch.variables["x"] = x
        scratch.variables["y"] = y
        scratch.variables["z"] = z
        for k, (axis, e) in enumerate(exprs):
            try:
                value = evaluate(e, scratch)
            except FormulaError as exc:
                raise DeformError(i, axis, exc) from exc
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise DeformError(i, axis, TypeError(f"expected a scalar, got {type(value).__name__}"))
            out[i, k] = float(value)
    return Mesh(out, mesh.triangles, mesh.scalar)


# -- OFF import/export -----------------------------------------------------

def to_off(mesh: Mesh) -> str:
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.triangles)} 0"]
    lines += [" ".join(f"{c:.17g}" for c in v) for v in mesh.vertices.tolist()]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    return "\n".join(lines) + "\n"


def from_off(text: str, scalar: Optional[Sequence[float]] = None) -> Mesh:
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    if not tokens or tokens[0][0] != "OFF":
        raise GeometryError("missing OFF header")
    head = tokens[0][1:] or tokens[1]
    rest = tokens[1:] if tokens[0][1:] else tokens[2:]
    try:
        nv, nf = int(head[0]), int(head[1])
    except (IndexError, ValueError) as exc:
        raise GeometryError("bad OFF counts line") from exc
    if len(rest) < nv + nf:
        raise GeometryError("OFF file is truncated")
    verts = [tuple(float(c) for c in row[:3]) for row in rest[:nv]]
    tris = []
    for row in rest[nv:nv + nf]:
        n = int(row[0])
        idx = [int(c) for c in row[1:1 + n]]
        if n < 3 or len(idx) != n:
            raise GeometryError(f"bad face line {' '.join(row)!r}")
        for k in range(1, n - 1):  # fan-triangulate polygons
            tris.append((idx[0], idx[k], idx[k + 1]))
    return Mesh(verts, tris, scalar)


def scalar_to_csv(scalar: Sequence[float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "value"])
    for i, s in enumerate(scalar):
        w.writerow([i, f"{s:.17g}"])
    return buf.getvalue()


def scalar_from_csv(text: str) -> list[float]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = [0.0] * len(rows)
    seen = set()
    for row in rows:
        i = int(row["index"])
        if not 0 <= i < len(rows) or i in seen:
            raise GeometryError(f"bad scalar index {i}")
        seen.add(i)
        out[i] = float(row["value"])
    return out


def save_mesh(mesh: Mesh, path: Union[str, Path]) -> None:
    path = Path(path)
    path.write_text(to_off(mesh))
    if mesh.scalar is not None:
        path.with_suffix(".csv").write_text(scalar_to_csv(mesh.scalar.tolist()))


def load_mesh(path: Union[str, Path]) -> Mesh:
    path = Path(path)
    sidecar = path.with_suffix(".csv")
    scalar = scalar_from_csv(sidecar.read_text()) if sidecar.exists() else None
    return from_off(path.read_text(), scalar)
