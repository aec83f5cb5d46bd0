"""Relative reference frames.

Frames form a forest under an implicit zero frame (``ZERO_FRAME``).
Quaternions are Hamilton, scalar first ``(w, x, y, z)``, and rotate vectors
by ``v' = q v q*``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

ZERO_FRAME = "world"

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]


class FrameError(Exception):
    pass


class UnknownFrameError(FrameError, KeyError):
    def __init__(self, frame_id: str):
        self.frame_id = frame_id
        super().__init__(f"unknown frame {frame_id!r}")

    def __str__(self):
        return self.args[0]


class FrameCycleError(FrameError):
    pass


# -- quaternion helpers -----------------------------------------------------

def quat_mul(a: Sequence[float], b: Sequence[float]) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_normalize(q: Sequence[float]) -> Quat:
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0:
        raise FrameError("zero quaternion")
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def quat_conj(q: Sequence[float]) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def quat_rotate(q: Sequence[float], v: Sequence[float]) -> Vec3:
    # q v q* expanded: v + 2 w (u x v) + 2 u x (u x v)
    w, x, y, z = q
    vx, vy, vz = v
    cx = y * vz - z * vy
    cy = z * vx - x * vz
    cz = x * vy - y * vx
    return (
        vx + 2.0 * (w * cx + y * cz - z * cy),
        vy + 2.0 * (w * cy + z * cx - x * cz),
        vz + 2.0 * (w * cz + x * cy - y * cx),
    )


def quat_to_matrix(q: Sequence[float]) -> list[list[float]]:
    w, x, y, z = q
    return [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]


def axis_angle(axis: Sequence[float], degrees: float) -> Quat:
    ax, ay, az = (float(c) for c in axis)
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        if degrees != 0:
            raise FrameError("rotation axis must be nonzero")
        return (1.0, 0.0, 0.0, 0.0)
    half = math.radians(degrees) / 2.0
    s = math.sin(half) / n
    return quat_normalize((math.cos(half), ax * s, ay * s, az * s))


@dataclass(frozen=True)
class Pose6D:
    """Rigid placement: translation in meters plus unit orientation quaternion."""

    translation: Vec3 = (0.0, 0.0, 0.0)
    rotation: Quat = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        t = tuple(float(c) for c in self.translation)
        q = tuple(float(c) for c in self.rotation)
        if len(t) != 3 or len(q) != 4:
            raise FrameError("pose needs a 3-vector and a 4-quaternion")
        norm = math.sqrt(sum(c * c for c in q))
        if abs(norm - 1.0) > 1e-9:
            q = quat_normalize(q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @classmethod
    def identity(cls) -> "Pose6D":
        return cls()

    @classmethod
    def translate(cls, x: float, y: float, z: float) -> "Pose6D":
        return cls((x, y, z))

    @classmethod
    def rotate(cls, axis: Sequence[float], degrees: float) -> "Pose6D":
        return cls(rotation=axis_angle(axis, degrees))

    def apply(self, p: Sequence[float]) -> Vec3:
        r = quat_rotate(self.rotation, p)
        t = self.translation
        return (r[0] + t[0], r[1] + t[1], r[2] + t[2])

    def rotate_vector(self, v: Sequence[float]) -> Vec3:
        return quat_rotate(self.rotation, v)


IDENTITY = Pose6D()


def compose(outer: Pose6D, inner: Pose6D) -> Pose6D:
    """The pose that applies `inner` first, then `outer`."""
    r = quat_rotate(outer.rotation, inner.translation)
    t = outer.translation
    q = quat_normalize(quat_mul(outer.rotation, inner.rotation))
    return Pose6D((t[0] + r[0], t[1] + r[1], t[2] + r[2]), q)


def invert(p: Pose6D) -> Pose6D:
    qc = quat_conj(p.rotation)
    t = quat_rotate(qc, p.translation)
    return Pose6D((-t[0], -t[1], -t[2]), qc)


@dataclass(frozen=True)
class FrameNode:
    id: str
    parent: Optional[str] = None
    local: Pose6D = IDENTITY


@dataclass
class FrameForest:
    """Map of frame id to node. A missing parent means a child of the zero frame."""

    nodes: dict[str, FrameNode] = field(default_factory=dict)

    @classmethod
    def from_nodes(cls, nodes: Iterable[FrameNode]) -> "FrameForest":
        forest = cls()
        for node in nodes:
            if node.id in forest.nodes or node.id == ZERO_FRAME:
                raise FrameError(f"duplicate frame id {node.id!r}")
            forest.nodes[node.id] = node
        forest.validate()
        return forest

    def validate(self) -> None:
        for node in self.nodes.values():
            if node.parent is not None and node.parent != ZERO_FRAME and node.parent not in self.nodes:
                raise UnknownFrameError(node.parent)
        for node in self.nodes.values():
            self.chain(node.id)

    def add(self, node: FrameNode) -> None:
        if node.id in self.nodes or node.id == ZERO_FRAME:
            raise FrameError(f"duplicate frame id {node.id!r}")
        if node.parent is not None and node.parent != ZERO_FRAME and node.parent not in self.nodes:
            raise UnknownFrameError(node.parent)
        self.nodes[node.id] = node

    def set_parent(self, frame_id: str, parent: Optional[str]) -> None:
        """Re-parent a frame, refusing assignments that would close a cycle."""
        node = self.nodes.get(frame_id)
        if node is None:
            raise UnknownFrameError(frame_id)
        if parent is not None and parent != ZERO_FRAME:
            if parent not in self.nodes:
                raise UnknownFrameError(parent)
            cursor: Optional[str] = parent
            while cursor is not None and cursor != ZERO_FRAME:
                if cursor == frame_id:
                    raise FrameCycleError(f"making {parent!r} the parent of {frame_id!r} creates a cycle")
                cursor = self.nodes[cursor].parent
        self.nodes[frame_id] = FrameNode(frame_id, parent, node.local)

    def set_local(self, frame_id: str, pose: Pose6D) -> None:
        node = self.nodes.get(frame_id)
        if node is None:
            raise UnknownFrameError(frame_id)
        self.nodes[frame_id] = FrameNode(frame_id, node.parent, pose)

    def chain(self, frame_id: str) -> list[str]:
        """Ids from the root down to `frame_id`."""
        if frame_id == ZERO_FRAME:
            return []
        path = []
        seen = set()
        cursor: Optional[str] = frame_id
        while cursor is not None and cursor != ZERO_FRAME:
            if cursor not in self.nodes:
                raise UnknownFrameError(cursor)
            if cursor in seen:
                raise FrameCycleError(f"frame {frame_id!r} is on a parent cycle")
            seen.add(cursor)
            path.append(cursor)
            cursor = self.nodes[cursor].parent
        path.reverse()
        return path

    def absolute(self, frame_id: str) -> Pose6D:
        ids = self.chain(frame_id)
        if not ids:
            return IDENTITY
        pose = self.nodes[ids[0]].local
        for fid in ids[1:]:
            pose = compose(pose, self.nodes[fid].local)
        return pose

    def transform_point(self, src: str, dst: str, p: Sequence[float]) -> Vec3:
        """Coordinates in frame `dst` of point `p` given in frame `src`."""
        if src == dst:
            self.chain(src)
            return tuple(float(c) for c in p)
        world = self.absolute(src).apply(p)
        return invert(self.absolute(dst)).apply(world)


def absolute(forest: FrameForest, frame_id: str) -> Pose6D:
    return forest.absolute(frame_id)


def transform_point(forest: FrameForest, src: str, dst: str, p: Sequence[float]) -> Vec3:
    return forest.transform_point(src, dst, p)
