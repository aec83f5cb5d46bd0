"""Pinhole projection, image-plane warps, field coloring and a z-buffered
software rasterizer writing binary PPM images."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from .formula import Expr, FormulaError, evaluate, parse
from .frames import FrameForest, Pose6D, compose, invert, quat_to_matrix
from .geometry import Mesh

AMBIENT = 0.2


class RenderError(Exception):
    pass


class FieldError(RenderError):
    def __init__(self, vertex: int, cause: Exception):
        self.vertex = vertex
        self.cause = cause
        super().__init__(f"field evaluation failed at vertex {vertex}: {cause}")


def _expr(e: Union[str, Expr]) -> Expr:
    return parse(e) if isinstance(e, str) else e


@dataclass(frozen=True)
class Camera:
    """Looks down its frame's -z axis with +y up. `fov` is vertical, in degrees."""

    frame: str
    fov: float = 60.0
    width: int = 320
    height: int = 240
    near: float = 0.1
    warp: Optional[tuple[Expr, Expr]] = None

    def __post_init__(self):
        if not 0 < self.fov < 180:
            raise RenderError("fov must lie in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise RenderError("image size must be positive")
        if not self.near > 0:
            raise RenderError("near must be positive")
        if self.warp is not None:
            object.__setattr__(self, "warp", (_expr(self.warp[0]), _expr(self.warp[1])))

    @property
    def aspect(self) -> float:
        return self.width / self.height


@dataclass(frozen=True)
class FieldSpec:
    """A field over world x, y, z and t; Real or Vector(3) valued."""

    value: Expr
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "value", _expr(self.value))
        if not self.lo < self.hi:
            raise RenderError("field range needs lo < hi")


@dataclass
class Image:
    width: int
    height: int
    pixels: bytearray = field(default=None)

    def __post_init__(self):
        if self.pixels is None:
            self.pixels = bytearray(3 * self.width * self.height)
        if len(self.pixels) != 3 * self.width * self.height:
            raise RenderError("pixel buffer size does not match the image size")

    def get(self, x: int, y: int) -> tuple[int, int, int]:
        i = 3 * (y * self.width + x)
        return tuple(self.pixels[i:i + 3])

    def to_ppm(self) -> bytes:
        return f"P6\n{self.width} {self.height}\n255\n".encode("ascii") + bytes(self.pixels)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_ppm())

    @classmethod
    def from_ppm(cls, data: bytes) -> "Image":
        parts = data.split(b"\n", 3)
        if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
            raise RenderError("not a binary PPM with maxval 255")
        w, h = (int(v) for v in parts[1].split())
        return cls(w, h, bytearray(parts[3]))


def diff_fraction(a: Image, b: Image) -> float:
    """Fraction of pixels whose RGB triples differ."""
    if (a.width, a.height) != (b.width, b.height):
        raise RenderError("images differ in size")
    pa = np.frombuffer(bytes(a.pixels), np.uint8).reshape(-1, 3)
    pb = np.frombuffer(bytes(b.pixels), np.uint8).reshape(-1, 3)
    return float(np.any(pa != pb, axis=1).mean())


# -- projection --------------------------------------------------------------

def _round_half_down(x: float) -> int:
    return math.ceil(x - 0.5)


def colormap(v: float, lo: float, hi: float) -> tuple[int, int, int]:
    """Blue at lo, green at the midpoint, red at hi; linear in between."""
    if not lo < hi:
        raise RenderError("colormap needs lo < hi")
    u = (min(max(v, lo), hi) - lo) / (hi - lo)
    if u <= 0.5:
        g = _round_half_down(255 * (2 * u))
        return (0, g, 255 - g)
    r = _round_half_down(255 * (2 * u - 1))
    return (r, 255 - r, 0)


def _ndc_scale(cam: Camera) -> tuple[float, float]:
    f = math.tan(math.radians(cam.fov) / 2)
    return f * cam.aspect, f


def apply_warp(cam: Camera, xn: float, yn: float) -> tuple[float, float]:
    if cam.warp is None:
        return xn, yn
    env = {"x": xn, "y": yn}
    out = []
    for w in cam.warp:
        value = evaluate(w, env)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise RenderError("warp must evaluate to a scalar")
        out.append(float(value))
    return out[0], out[1]


def to_viewport(cam: Camera, xn: float, yn: float) -> tuple[float, float]:
    return (xn + 1) / 2 * cam.width, (1 - yn) / 2 * cam.height


def project(cam: Camera, forest: FrameForest, p_world: Sequence[float]) -> Optional[tuple[float, float, float]]:
    """Pixel coordinates and depth of a world point, or None when it is not in front of the camera."""
    x, y, z = invert(forest.absolute(cam.frame)).apply(p_world)
    if z >= -cam.near:
        return None
    sx, sy = _ndc_scale(cam)
    xn, yn = apply_warp(cam, (x / -z) / sx, (y / -z) / sy)
    px, py = to_viewport(cam, xn, yn)
    return px, py, -z


def _transform(pose: Pose6D, v: np.ndarray) -> np.ndarray:
    # explicit elementwise products keep results independent of BLAS kernels
    R = quat_to_matrix(pose.rotation)
    t = pose.translation
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    return np.stack([R[i][0] * x + R[i][1] * y + R[i][2] * z + t[i] for i in range(3)], axis=1)


# -- fields ------------------------------------------------------------------

def field_value(spec: FieldSpec, env: Mapping[str, Any]) -> float:
    value = evaluate(spec.value, env)
    if isinstance(value, bool):
        raise RenderError("field must be Real or Vector(3), got Boolean")
    if isinstance(value, (int, float)):
        return float(value)
    arr = np.asarray(value)
    if arr.shape != (3,):
        raise RenderError(f"field must be Real or Vector(3), got shape {arr.shape}")
    a, b, c = (float(v) for v in arr)
    return math.sqrt(a * a + b * b + c * c)


def sample_field(spec: FieldSpec, mesh: Mesh, frame: Optional[str], forest: FrameForest, t: float,
                 env: Optional[Mapping[str, Any]] = None) -> np.ndarray:
    """Field values at the world position of each vertex; vectors reduce to their magnitude."""
    pose = forest.absolute(frame) if frame is not None else Pose6D()
    scope = dict(env or {})
    scope["t"] = float(t)
    out = np.empty(len(mesh.vertices))
    for i, v in enumerate(mesh.vertices.tolist()):
        scope["x"], scope["y"], scope["z"] = pose.apply(v)
        try:
            out[i] = field_value(spec, scope)
        except (FormulaError, RenderError) as exc:
            raise FieldError(i, exc) from exc
    return out


# -- rasterization -----------------------------------------------------------

@dataclass
class DrawItem:
    frame: Optional[str]
    mesh: Mesh
    color: tuple[int, int, int] = (200, 200, 200)
    lo: float = 0.0
    hi: float = 1.0


@dataclass(frozen=True)
class Sprite:
    direction: tuple[float, float, float]
    radius: float
    color: tuple[int, int, int]


class Rasterizer:
    def __init__(self, cam: Camera, forest: FrameForest):
        self.cam = cam
        self.forest = forest
        self.view = invert(forest.absolute(cam.frame))
        self.image = Image(cam.width, cam.height)
        self.rgb = np.zeros((cam.height, cam.width, 3), dtype=np.uint8)
        self.invz = np.zeros((cam.height, cam.width))  # 1/depth; 0 is infinitely far
        self.sx, self.sy = _ndc_scale(cam)

    def _screen(self, x: float, y: float, z: float) -> tuple[float, float]:
        xn, yn = apply_warp(self.cam, (x / -z) / self.sx, (y / -z) / self.sy)
        return to_viewport(self.cam, xn, yn)

    def sprite(self, s: Sprite) -> None:
        d = self.view.rotate_vector(s.direction)
        if d[2] >= 0:
            return
        px, py = self._screen(*d)
        r = s.radius
        x0, x1 = max(0, math.floor(px - r)), min(self.cam.width, math.ceil(px + r) + 1)
        y0, y1 = max(0, math.floor(py - r)), min(self.cam.height, math.ceil(py + r) + 1)
        if x0 >= x1 or y0 >= y1:
            return
        xs = np.arange(x0, x1) + 0.5 - px
        ys = np.arange(y0, y1) + 0.5 - py
        inside = (xs[None, :] ** 2 + ys[:, None] ** 2) <= r * r
        self.rgb[y0:y1, x0:x1][inside] = s.color

    def mesh(self, item: DrawItem, first_index: int = 0) -> int:
        pose = compose(self.view, self.forest.absolute(item.frame)) if item.frame else self.view
        cv = _transform(pose, item.mesh.vertices)
        in_front = cv[:, 2] < -self.cam.near
        screen = np.full((len(cv), 2), np.nan)
        for i in np.flatnonzero(in_front).tolist():
            screen[i] = self._screen(*cv[i].tolist())
        depth = -cv[:, 2]
        scalar = item.mesh.scalar
        for a, b, c in item.mesh.triangles.tolist():
            if not (in_front[a] and in_front[b] and in_front[c]):
                continue
            self._triangle(cv, screen, depth, (a, b, c), item, scalar)
        return first_index + len(item.mesh.triangles)

    def _triangle(self, cv, screen, depth, idx, item, scalar):
        a, b, c = idx
        (ax, ay), (bx, by), (cx, cy) = screen[a].tolist(), screen[b].tolist(), screen[c].tolist()
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0 or not math.isfinite(area):
            return
        if area < 0:
            b, c = c, b
            (bx, by), (cx, cy) = (cx, cy), (bx, by)
            area = -area
        W, H = self.cam.width, self.cam.height
        x0 = max(0, math.floor(min(ax, bx, cx) - 0.5))
        x1 = min(W, math.ceil(max(ax, bx, cx) + 0.5))
        y0 = max(0, math.floor(min(ay, by, cy) - 0.5))
        y1 = min(H, math.ceil(max(ay, by, cy) + 0.5))
        if x0 >= x1 or y0 >= y1:
            return
        px = (np.arange(x0, x1) + 0.5)[None, :]
        py = (np.arange(y0, y1) + 0.5)[:, None]

        def edge(x0_, y0_, x1_, y1_):
            ex, ey = x1_ - x0_, y1_ - y0_
            w = ex * (py - y0_) - ey * (px - x0_)
            top_left = (ey == 0 and ex > 0) or ey < 0
            return w, (w >= 0) if top_left else (w > 0)

        w0, in0 = edge(bx, by, cx, cy)
        w1, in1 = edge(cx, cy, ax, ay)
        w2, in2 = edge(ax, ay, bx, by)
        mask = in0 & in1 & in2
        if not mask.any():
            return
        l0, l1, l2 = w0 / area, w1 / area, w2 / area
        invz = l0 / depth[a] + l1 / depth[b] + l2 / depth[c]
        region = self.invz[y0:y1, x0:x1]
        win = mask & (invz > region)
        if not win.any():
            return
        region[win] = invz[win]
        target = self.rgb[y0:y1, x0:x1]
        if scalar is not None:
            s = l0 * scalar[a] + l1 * scalar[b] + l2 * scalar[c]
            for yy, xx in zip(*np.nonzero(win)):
                target[yy, xx] = colormap(float(s[yy, xx]), item.lo, item.hi)
        else:
            target[win] = self._shade(cv[a], cv[b], cv[c], item.color)

    @staticmethod
    def _shade(p0, p1, p2, color) -> tuple[int, int, int]:
        e1 = [float(p1[i] - p0[i]) for i in range(3)]
        e2 = [float(p2[i] - p0[i]) for i in range(3)]
        n = (e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0])
        centroid = [-float(p0[i] + p1[i] + p2[i]) / 3 for i in range(3)]  # toward the camera
        nn = math.sqrt(sum(v * v for v in n))
        ln = math.sqrt(sum(v * v for v in centroid))
        lam = abs(sum(x * y for x, y in zip(n, centroid))) / (nn * ln) if nn > 0 and ln > 0 else 0.0
        k = AMBIENT + (1 - AMBIENT) * lam
        return tuple(min(255, int(c * k + 0.5)) for c in color)

    def finish(self) -> Image:
        self.image.pixels = bytearray(self.rgb.tobytes())
        return self.image


def rasterize(cam: Camera, forest: FrameForest, items: Sequence[DrawItem],
              sprites: Sequence[Sprite] = ()) -> Image:
    """Stars first as discs, then meshes with a z-buffer; ties keep the earlier triangle."""
    r = Rasterizer(cam, forest)
    for s in sprites:
        r.sprite(s)
    index = 0
    for item in items:
        index = r.mesh(item, index)
    return r.finish()


def render(sim, camera_id: str) -> Image:
    """Render the current state of a `graph.Simulation` through one camera."""
    from .graph import _FieldBehavior, _ShapeBehavior, _StarBehavior

    cam = sim.camera(camera_id)
    items, sprites = [], []
    for cid in sim.visible(camera_id):
        b = sim.behaviors[cid]
        if isinstance(b, _ShapeBehavior):
            mesh, lo, hi = b.mesh, 0.0, 1.0
            if b.field_id is not None:
                fb: _FieldBehavior = sim.behaviors[b.field_id]
                mesh = mesh.with_scalar(sample_field(fb.spec, mesh, cid, sim.forest, sim.t, fb.env))
                lo, hi = fb.spec.lo, fb.spec.hi
            items.append(DrawItem(cid, mesh, b.color, lo, hi))
        elif isinstance(b, _StarBehavior):
            sprites += [Sprite(tuple(v.direction), v.radius_px, v.color) for v in b.visuals]
    return rasterize(cam, sim.forest, items, sprites)
