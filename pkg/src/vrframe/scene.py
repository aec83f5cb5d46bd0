"""JSON scene files: components, links, simulation window and output sinks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from .graph import (
    DEFAULT_REGISTRY, INFORMATION, LINK_KINDS, Component, GraphError, Link, Registry, SceneGraph,
)

SCENE_VERSION = 1


class SceneError(Exception):
    pass


@dataclass
class Scene:
    graph: SceneGraph
    t0: float = 0.0
    t1: float = 1.0
    dt: float = 0.01
    outputs: list[dict[str, Any]] = field(default_factory=list)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.graph == other.graph and (self.t0, self.t1, self.dt) == (other.t0, other.t1, other.dt)
                and self.outputs == other.outputs)


def _require(obj: Any, typ, what: str):
    if not isinstance(obj, typ):
        raise SceneError(f"{what} must be a {getattr(typ, '__name__', typ)}")
    return obj


def _number(obj: Any, what: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise SceneError(f"{what} must be a number")
    return float(obj)


def from_dict(data: Any, base_dir: Union[str, Path] = ".", registry: Optional[Registry] = None) -> Scene:
    _require(data, dict, "scene")
    if data.get("version") != SCENE_VERSION:
        raise SceneError(f"unsupported scene version {data.get('version')!r}, expected {SCENE_VERSION}")
    unknown = set(data) - {"version", "components", "links", "simulation", "outputs"}
    if unknown:
        raise SceneError(f"unknown scene keys: {', '.join(sorted(unknown))}")
    comps = []
    for i, c in enumerate(_require(data.get("components", []), list, "components")):
        _require(c, dict, f"components[{i}]")
        cid, kind = c.get("id"), c.get("kind")
        if not isinstance(cid, str) or not cid or not isinstance(kind, str):
            raise SceneError(f"components[{i}] needs string id and kind")
        comps.append(Component(cid, kind, dict(_require(c.get("parameters", {}), dict, f"parameters of {cid}"))))
    links = []
    for i, l in enumerate(_require(data.get("links", []), list, "links")):
        _require(l, dict, f"links[{i}]")
        kind = l.get("kind")
        if kind not in LINK_KINDS:
            raise SceneError(f"links[{i}] has unknown kind {kind!r}")
        if kind == INFORMATION:
            links.append(Link(kind, l.get("source"), l.get("target"), l.get("output"), l.get("input")))
        else:
            links.append(Link(kind, l.get("source"), l.get("target")))
    sim = _require(data.get("simulation", {}), dict, "simulation")
    t0 = _number(sim.get("t0", 0.0), "t0")
    t1 = _number(sim.get("t1", 1.0), "t1")
    dt = _number(sim.get("dt", 0.01), "dt")
    outputs = []
    for i, o in enumerate(_require(data.get("outputs", []), list, "outputs")):
        _require(o, dict, f"outputs[{i}]")
        if o.get("type") not in ("trajectory", "frames"):
            raise SceneError(f"outputs[{i}] has unknown type {o.get('type')!r}")
        outputs.append(dict(o))
    try:
        graph = SceneGraph.build(comps, links, registry=registry or DEFAULT_REGISTRY, base_dir=Path(base_dir))
    except GraphError as exc:
        raise SceneError(str(exc)) from exc
    return Scene(graph, t0, t1, dt, outputs)


def loads(text: str, base_dir: Union[str, Path] = ".", registry: Optional[Registry] = None) -> Scene:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene is not valid JSON: {exc}") from exc
    return from_dict(data, base_dir, registry)


def load_scene(path: Union[str, Path], registry: Optional[Registry] = None) -> Scene:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneError(f"cannot read scene {path}: {exc}") from exc
    return loads(text, path.parent, registry)


def to_dict(scene: Scene) -> dict[str, Any]:
    links = []
    for l in scene.graph.links:
        entry = {"kind": l.kind, "source": l.source, "target": l.target}
        if l.kind == INFORMATION:
            entry.update(output=l.output, input=l.input)
        links.append(entry)
    return {
        "version": SCENE_VERSION,
        "components": [
            {"id": c.id, "kind": c.kind, "parameters": dict(c.parameters)}
            for c in scene.graph.components.values()
        ],
        "links": links,
        "simulation": {"t0": scene.t0, "t1": scene.t1, "dt": scene.dt},
        "outputs": [dict(o) for o in scene.outputs],
    }


def dumps(scene: Scene) -> str:
    return json.dumps(to_dict(scene), indent=2) + "\n"


def bundled_scene_dir() -> Path:
    return Path(__file__).parent / "scenes"


def bundled(name: str) -> Path:
    """Path of a scene shipped with the package, e.g. ``bundled("decay")``."""
    path = bundled_scene_dir() / (name if name.endswith(".scene") else name + ".scene")
    if not path.exists():
        raise SceneError(f"no bundled scene {name!r}")
    return path
