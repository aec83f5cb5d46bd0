"""Component graphs: typed components, information/positioning/visibility links,
validation, deterministic topological execution and the external-kind registry."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import geometry
from .dynamics import (
    DynamicsError, NonFiniteStateError, OdeSystem, RigidBody6D, Trajectory, integrate, step_body,
)
from .formula import (
    BOOLEAN, INTEGER, REAL, Expr, FormulaError, MatrixType, TypeTag, VectorType, evaluate,
    free_variables, infer, parse, parse_type, type_of, unify,
)
from .formula.ast import BUILTIN_NAMES, RESERVED
from .formula.values import Value, all_finite, to_value
from .frames import ZERO_FRAME, FrameForest, FrameNode, Pose6D, axis_angle
from .render import Camera, FieldSpec

INFORMATION, POSITIONING, VISIBILITY = "information", "positioning", "visibility"
LINK_KINDS = (INFORMATION, POSITIONING, VISIBILITY)


class GraphError(Exception):
    pass


class ComponentError(GraphError):
    """Invalid component parameters."""


class DuplicateKindError(GraphError):
    pass


class GraphCycleError(GraphError):
    def __init__(self, path: Sequence[str]):
        self.path = list(path)
        super().__init__("information cycle: " + " -> ".join(self.path + self.path[:1]))


class ValidationError(GraphError):
    def __init__(self, diagnostics: Sequence["Diagnostic"]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(map(str, self.diagnostics)))


class StepError(GraphError):
    """A component failed while stepping; `cause` holds the underlying error."""

    def __init__(self, component: str, t: float, cause: Exception):
        self.component = component
        self.t = t
        self.cause = cause
        super().__init__(f"component {component!r} failed at t={t:.17g}: {cause}")


@dataclass(frozen=True)
class Component:
    id: str
    kind: str
    parameters: Mapping[str, Any] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class Link:
    kind: str
    source: str
    target: str
    output: Optional[str] = None
    input: Optional[str] = None

    def __str__(self):
        if self.kind == INFORMATION:
            return f"{self.source}.{self.output}->{self.target}.{self.input}"
        return f"{self.kind}:{self.source}->{self.target}"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.severity} {self.subject}: {self.message}"


def _error(subject: str, message: str) -> Diagnostic:
    return Diagnostic("ERROR", subject, message)


# -- parameter helpers -------------------------------------------------------

Item = Union[float, Expr]


def _get(params: Mapping[str, Any], key: str, default: Any = ...) -> Any:
    if key in params:
        return params[key]
    if default is ...:
        raise ComponentError(f"missing parameter {key!r}")
    return default


def _number(params: Mapping[str, Any], key: str, default: Any = ...) -> float:
    value = _get(params, key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ComponentError(f"parameter {key!r} must be a number")
    return float(value)


def _integer(params: Mapping[str, Any], key: str, default: Any = ...) -> int:
    value = _get(params, key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ComponentError(f"parameter {key!r} must be an integer")
    return value


def _formula(text: Any, what: str) -> Expr:
    if not isinstance(text, str):
        raise ComponentError(f"{what} must be a formula string")
    try:
        return parse(text)
    except FormulaError as exc:
        raise ComponentError(f"{what}: {exc}") from exc


def _item(value: Any, what: str) -> Item:
    """A pose coordinate: a number, or a formula evaluated each step."""
    if isinstance(value, bool):
        raise ComponentError(f"{what} must be a number or formula")
    if isinstance(value, (int, float)):
        return float(value)
    return _formula(value, what)


def _vector(params: Mapping[str, Any], key: str, n: int, default: Any = ...) -> tuple[float, ...]:
    value = _get(params, key, default)
    try:
        out = tuple(float(c) for c in value)
    except (TypeError, ValueError):
        out = ()
    if len(out) != n:
        raise ComponentError(f"parameter {key!r} must be a list of {n} numbers")
    return out


def _constants(params: Mapping[str, Any], key: str = "parameters") -> dict[str, Value]:
    raw = _get(params, key, {})
    if not isinstance(raw, Mapping):
        raise ComponentError(f"parameter {key!r} must be a mapping")
    out = {}
    for name, value in raw.items():
        if name in BUILTIN_NAMES or name in RESERVED:
            raise ComponentError(f"constant {name!r} shadows a built-in name")
        try:
            out[name] = to_value(value)
        except (TypeError, ValueError) as exc:
            raise ComponentError(f"constant {name!r}: {exc}") from exc
    return out


def _free(exprs: Iterable[Expr]) -> set[str]:
    names: set[str] = set()
    for e in exprs:
        names |= free_variables(e)
    return names


def _eval_item(item: Item, env: Mapping[str, Value]) -> float:
    if isinstance(item, float):
        return item
    value = evaluate(item, env)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ComponentError(f"pose coordinate evaluated to a non-scalar {value!r}")
    return float(value)


@dataclass(frozen=True)
class PoseSpec:
    """Local placement from `translation`, plus `rotation` {axis, angle} or `quaternion`."""

    translation: tuple[Item, Item, Item] = (0.0, 0.0, 0.0)
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    angle: Item = 0.0
    quaternion: Optional[tuple[float, float, float, float]] = None

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "PoseSpec":
        raw = _get(params, "translation", (0.0, 0.0, 0.0))
        if not isinstance(raw, (list, tuple)) or len(raw) != 3:
            raise ComponentError("translation must be a list of 3 items")
        translation = tuple(_item(v, f"translation[{i}]") for i, v in enumerate(raw))
        if "quaternion" in params and "rotation" in params:
            raise ComponentError("give either rotation or quaternion, not both")
        if "quaternion" in params:
            q = _vector(params, "quaternion", 4)
            if not math.sqrt(sum(c * c for c in q)) > 0:
                raise ComponentError("quaternion must be nonzero")
            return cls(translation, quaternion=q)
        rot = _get(params, "rotation", {})
        if not isinstance(rot, Mapping):
            raise ComponentError("rotation must be a mapping with axis and angle")
        axis = _vector(rot, "axis", 3, (0.0, 0.0, 1.0))
        angle = _item(_get(rot, "angle", 0.0), "rotation angle")
        if not math.sqrt(sum(c * c for c in axis)) > 0:
            raise ComponentError("rotation axis must be nonzero")
        return cls(translation, axis, angle)

    def exprs(self) -> list[Expr]:
        return [i for i in (*self.translation, self.angle) if not isinstance(i, float)]

    def pose(self, env: Mapping[str, Value]) -> Pose6D:
        t = tuple(_eval_item(i, env) for i in self.translation)
        if self.quaternion is not None:
            return Pose6D(t, self.quaternion)
        return Pose6D(t, axis_angle(self.axis, _eval_item(self.angle, env)))


# -- kinds -------------------------------------------------------------------

class Behavior:
    """Runtime state of one component."""

    def init(self, t: float, inputs: dict[str, Value]) -> dict[str, Value]:
        return {}

    def step(self, t: float, dt: float, inputs: dict[str, Value]) -> dict[str, Value]:
        return {}

    def pose(self) -> Optional[Pose6D]:
        return None


@dataclass
class Spec:
    inputs: dict[str, TypeTag]
    outputs: dict[str, TypeTag]
    make: Callable[[], Behavior]
    refs: dict[str, str] = field(default_factory=dict)  # parameter name -> referenced component id


@dataclass
class CompileContext:
    base_dir: Path = Path(".")


class Kind:
    name = ""
    frame_bearing = False

    def compile(self, component: Component, ctx: CompileContext) -> Spec:
        raise NotImplementedError


class _Posed(Behavior):
    def __init__(self, spec: PoseSpec):
        self.spec = spec
        self.env: dict[str, Value] = {}
        self._pose = spec.pose({}) if not spec.exprs() else None

    def bind(self, t: float, inputs: dict[str, Value]) -> None:
        self.env = {**inputs, "t": t}

    def pose(self) -> Pose6D:
        return self._pose if self._pose is not None else self.spec.pose(self.env)

    def init(self, t, inputs):
        self.bind(t, inputs)
        return {}

    def step(self, t, dt, inputs):
        self.bind(t + dt, inputs)
        return {}


def _pose_inputs(spec: PoseSpec) -> set[str]:
    return _free(spec.exprs()) - {"t"}


class SolverKind(Kind):
    name = "solver"

    def compile(self, component, ctx):
        p = component.parameters
        equations = _get(p, "equations")
        if not isinstance(equations, Mapping) or not equations:
            raise ComponentError("solver needs at least one equation")
        initial = _get(p, "initial")
        if not isinstance(initial, Mapping):
            raise ComponentError("initial must map state names to numbers")
        consts = _constants(p)
        try:
            system = OdeSystem.from_equations(
                {k: _formula(v, f"equation {k!r}") for k, v in equations.items()},
                {k: float(v) for k, v in initial.items()},
                consts,
            )
        except (DynamicsError, FormulaError, TypeError, ValueError) as exc:
            raise ComponentError(str(exc)) from exc
        exprs = list(system.rhs) + [imp.coefficient for imp in system.impulses]
        inputs = _free(exprs) - set(system.names) - set(consts) - {system.time_var}
        return Spec(
            {n: REAL for n in sorted(inputs)},
            {n: REAL for n in system.names},
            lambda: _SolverBehavior(system),
        )


class _SolverBehavior(Behavior):
    def __init__(self, system: OdeSystem):
        self.system = system
        self.state = system.initial
        self.trajectory = Trajectory(system.names)

    def _publish(self):
        return dict(zip(self.system.names, self.state))

    def init(self, t, inputs):
        self.state = self.system.initial
        self.trajectory = Trajectory(self.system.names)
        self.trajectory.append(t, self.state)
        return self._publish()

    def step(self, t, dt, inputs):
        system = self.system
        if inputs:
            system = replace(system, params={**system.params, **inputs})
        window = integrate(system, t, t + dt, dt, self.state, include_end=True)
        self.trajectory.extend(window)
        self.state = window.final
        return self._publish()


class TransformKind(Kind):
    name = "transform"

    def compile(self, component, ctx):
        p = component.parameters
        formulas = _get(p, "formulas")
        if not isinstance(formulas, Mapping) or not formulas:
            raise ComponentError("transform needs at least one formula")
        exprs = {name: _formula(text, f"formula {name!r}") for name, text in formulas.items()}
        consts = _constants(p)
        declared = _get(p, "inputs", {})
        if not isinstance(declared, Mapping):
            raise ComponentError("inputs must map names to types")
        try:
            declared = {k: parse_type(v) if isinstance(v, str) else v for k, v in declared.items()}
        except (FormulaError, ValueError) as exc:
            raise ComponentError(f"bad input type: {exc}") from exc
        names = _free(exprs.values()) - set(consts) - {"t"}
        unknown_decl = set(declared) - names
        if unknown_decl:
            raise ComponentError(f"declared inputs not used by any formula: {', '.join(sorted(unknown_decl))}")
        inputs = {n: declared.get(n, REAL) for n in sorted(names)}
        env_types = {**inputs, **{k: type_of(v) for k, v in consts.items()}, "t": REAL}
        outputs = {}
        for name, e in exprs.items():
            try:
                outputs[name] = infer(e, env_types)
            except FormulaError as exc:
                raise ComponentError(f"formula {name!r}: {exc}") from exc
        return Spec(inputs, outputs, lambda: _TransformBehavior(exprs, consts))


class _TransformBehavior(Behavior):
    def __init__(self, exprs: dict[str, Expr], consts: dict[str, Value]):
        self.exprs = exprs
        self.consts = consts

    def _eval(self, t, inputs):
        env = {**self.consts, **inputs, "t": t}
        return {name: evaluate(e, env) for name, e in self.exprs.items()}

    def init(self, t, inputs):
        return self._eval(t, inputs)

    def step(self, t, dt, inputs):
        return self._eval(t + dt, inputs)


class FrameKind(Kind):
    name = "frame"
    frame_bearing = True

    def compile(self, component, ctx):
        spec = PoseSpec.from_params(component.parameters)
        return Spec({n: REAL for n in sorted(_pose_inputs(spec))}, {}, lambda: _Posed(spec))


_MESH_BUILDERS = {
    "plane": (geometry.make_plane, (("nx", int), ("ny", int), ("sx", float), ("sy", float))),
    "torus": (geometry.make_torus, (("R", float), ("r", float), ("nu", int), ("nv", int))),
    "box": (geometry.make_box, (("sx", float), ("sy", float), ("sz", float))),
}


def build_mesh(spec: Mapping[str, Any], base_dir: Path = Path(".")) -> geometry.Mesh:
    if not isinstance(spec, Mapping):
        raise ComponentError("mesh must be a mapping with a type")
    kind = _get(spec, "type")
    try:
        if kind in _MESH_BUILDERS:
            fn, args = _MESH_BUILDERS[kind]
            values = [(_integer if typ is int else _number)(spec, key) for key, typ in args]
            return fn(*values)
        if kind == "explicit":
            return geometry.Mesh(_get(spec, "vertices"), _get(spec, "triangles"), spec.get("scalar"))
        if kind == "off":
            return geometry.load_mesh(base_dir / _get(spec, "path"))
    except (geometry.GeometryError, OSError, TypeError, ValueError) as exc:
        raise ComponentError(f"mesh: {exc}") from exc
    raise ComponentError(f"unknown mesh type {kind!r}")


class ShapeKind(Kind):
    name = "shape"
    frame_bearing = True

    def compile(self, component, ctx):
        p = component.parameters
        pose = PoseSpec.from_params(p)
        mesh = build_mesh(_get(p, "mesh"), ctx.base_dir)
        deform = None
        raw = _get(p, "deform", None)
        if raw is not None:
            if not isinstance(raw, Mapping):
                raise ComponentError("deform must map fx, fy, fz to formulas")
            deform = tuple(_formula(raw.get(k, k[1]), f"deform {k}") for k in ("fx", "fy", "fz"))
        color = _vector(p, "color", 3, (200, 200, 200))
        if not all(0 <= c <= 255 for c in color):
            raise ComponentError("color channels must lie in [0, 255]")
        refs = {}
        if "field" in p:
            if not isinstance(p["field"], str):
                raise ComponentError("field must be a component id")
            refs["field"] = p["field"]
        inputs = _pose_inputs(pose) | (_free(deform) - {"x", "y", "z", "t"} if deform else set())
        rgb = tuple(int(c) for c in color)
        return Spec(
            {n: REAL for n in sorted(inputs)}, {},
            lambda: _ShapeBehavior(pose, mesh, deform, rgb, refs.get("field")), refs,
        )


class _ShapeBehavior(_Posed):
    def __init__(self, pose, base, deform, color, field_id):
        super().__init__(pose)
        self.base = base
        self.deform = deform
        self.color = color
        self.field_id = field_id
        self.mesh = base

    def bind(self, t, inputs):
        super().bind(t, inputs)
        if self.deform is not None:
            self.mesh = geometry.deform(self.base, *self.deform, self.env)


class CameraKind(Kind):
    name = "camera"
    frame_bearing = True

    def compile(self, component, ctx):
        p = component.parameters
        pose = PoseSpec.from_params(p)
        fov = _number(p, "fov", 60.0)
        width, height = _integer(p, "width", 320), _integer(p, "height", 240)
        near = _number(p, "near", 0.1)
        if not 0 < fov < 180:
            raise ComponentError("fov must lie in (0, 180) degrees")
        if width < 1 or height < 1:
            raise ComponentError("width and height must be positive")
        if not near > 0:
            raise ComponentError("near must be positive")
        warp = _get(p, "warp", None)
        if warp is not None:
            if not isinstance(warp, (list, tuple)) or len(warp) != 2:
                raise ComponentError("warp must be a pair of formulas [wx, wy]")
            warp = tuple(_formula(w, "warp") for w in warp)
            stray = _free(warp) - {"x", "y"}
            if stray:
                raise ComponentError(f"warp formulas may only use x and y, not {', '.join(sorted(stray))}")
            try:
                for w in warp:
                    if infer(w, {"x": REAL, "y": REAL}) != REAL:
                        raise ComponentError("warp formulas must be Real")
            except FormulaError as exc:
                raise ComponentError(f"warp: {exc}") from exc
        camera = Camera(component.id, fov, width, height, near, warp)
        return Spec({n: REAL for n in sorted(_pose_inputs(pose))}, {}, lambda: _CameraBehavior(pose, camera))


class _CameraBehavior(_Posed):
    def __init__(self, pose, camera):
        super().__init__(pose)
        self.camera = camera


class FieldKind(Kind):
    name = "field"

    def compile(self, component, ctx):
        p = component.parameters
        value = _formula(_get(p, "value"), "field value")
        lo, hi = _vector(p, "range", 2, (0.0, 1.0))
        if not lo < hi:
            raise ComponentError("field range needs lo < hi")
        consts = _constants(p)
        inputs = _free([value]) - {"x", "y", "z", "t"} - set(consts)
        types = {**{n: REAL for n in inputs}, **{k: type_of(v) for k, v in consts.items()},
                 "x": REAL, "y": REAL, "z": REAL, "t": REAL}
        try:
            tag = infer(value, types)
        except FormulaError as exc:
            raise ComponentError(f"field value: {exc}") from exc
        if not (tag in (REAL, INTEGER) or (isinstance(tag, VectorType) and tag.length in (3, None))):
            raise ComponentError("field value must be Real or Vector(3)")
        spec = FieldSpec(value, lo, hi)
        return Spec({n: REAL for n in sorted(inputs)}, {}, lambda: _FieldBehavior(spec, consts))


class _FieldBehavior(Behavior):
    def __init__(self, spec: FieldSpec, consts):
        self.spec = spec
        self.consts = consts
        self.env: dict[str, Value] = {}

    def init(self, t, inputs):
        self.env = {**self.consts, **inputs}
        return {}

    def step(self, t, dt, inputs):
        self.env = {**self.consts, **inputs}
        return {}


_BODY_NAMES = {"t", "m", "position", "velocity", "quaternion", "omega",
               "x", "y", "z", "vx", "vy", "vz", "wx", "wy", "wz"}


class RigidBodyKind(Kind):
    name = "rigid-body"
    frame_bearing = True

    def compile(self, component, ctx):
        p = component.parameters
        inertia = _get(p, "inertia", [1.0, 1.0, 1.0])
        try:
            inertia = np.array(inertia, dtype=np.float64)
            if inertia.shape == (3,):
                inertia = np.diag(inertia)
        except (TypeError, ValueError) as exc:
            raise ComponentError(f"inertia: {exc}") from exc
        consts = _constants(p)
        force = _formula(p["force"], "force") if "force" in p else None
        torque = _formula(p["torque"], "torque") if "torque" in p else None
        try:
            body = RigidBody6D(
                _number(p, "mass", 1.0), inertia,
                _vector(p, "position", 3, (0, 0, 0)), _vector(p, "velocity", 3, (0, 0, 0)),
                _vector(p, "orientation", 4, (1, 0, 0, 0)), _vector(p, "omega", 3, (0, 0, 0)),
                force, torque, consts,
            )
        except DynamicsError as exc:
            raise ComponentError(str(exc)) from exc
        exprs = [e for e in (force, torque) if e is not None]
        inputs = _free(exprs) - _BODY_NAMES - set(consts)
        v3 = VectorType(3)
        return Spec(
            {n: REAL for n in sorted(inputs)},
            {"position": v3, "velocity": v3, "orientation": VectorType(4), "omega": v3},
            lambda: _BodyBehavior(body),
        )


class _BodyBehavior(Behavior):
    def __init__(self, body: RigidBody6D):
        self.body = body
        self.state = body.state

    def _publish(self):
        s = self.state
        return {"position": s[0:3].copy(), "velocity": s[3:6].copy(),
                "orientation": s[6:10].copy(), "omega": s[10:13].copy()}

    def init(self, t, inputs):
        self.state = self.body.state
        return self._publish()

    def step(self, t, dt, inputs):
        body = replace(self.body, params={**self.body.params, **inputs}) if inputs else self.body
        s = step_body(body, t, self.state, dt)
        if not np.all(np.isfinite(s)):
            raise NonFiniteStateError(t + dt)
        self.state = s
        return self._publish()

    def pose(self):
        s = self.state
        return Pose6D(tuple(s[0:3]), tuple(s[6:10]))


class StarSourceKind(Kind):
    name = "star-source"

    def compile(self, component, ctx):
        from . import stars

        p = component.parameters
        try:
            columns = stars.ColumnMap.from_mapping(_get(p, "columns", {}))
            config = stars.StarConfig.from_mapping(_get(p, "config", {}))
            records, skipped = stars.load_catalog(ctx.base_dir / _get(p, "catalog"), columns)
            if "filter" in p:
                records = stars.filter_records(records, _formula(p["filter"], "filter"))
            visuals = [stars.visual(r, config) for r in records]
        except (stars.StarError, FormulaError, OSError) as exc:
            raise ComponentError(f"star catalogue: {exc}") from exc
        return Spec({}, {"count": INTEGER}, lambda: _StarBehavior(visuals, len(skipped)))


class _StarBehavior(Behavior):
    def __init__(self, visuals, skipped):
        self.visuals = visuals
        self.skipped = skipped

    def init(self, t, inputs):
        return {"count": len(self.visuals)}

    def step(self, t, dt, inputs):
        return {"count": len(self.visuals)}


def _default_value(tag: TypeTag) -> Value:
    if tag == BOOLEAN:
        return False
    if tag == INTEGER:
        return 0
    if isinstance(tag, VectorType) and tag.length is not None:
        return to_value([0.0] * tag.length)
    if isinstance(tag, MatrixType) and tag.rows is not None and tag.cols is not None:
        return to_value([[0.0] * tag.cols for _ in range(tag.rows)])
    return 0.0


@dataclass(frozen=True)
class ExternalKind:
    """A host-supplied component kind.

    ``step(t, dt, inputs, state)`` returns the outputs at ``t + dt``. ``initial``
    maps parameters to the outputs published at ``t0`` (zeros by default);
    ``state`` is a per-instance dict seeded with those outputs and the parameters.
    """

    name: str
    inputs: Mapping[str, Union[TypeTag, str]]
    outputs: Mapping[str, Union[TypeTag, str]]
    step: Callable[[float, float, dict, dict], Mapping[str, Any]]
    initial: Optional[Callable[[Mapping[str, Any]], Mapping[str, Any]]] = None
    frame_bearing: bool = False

    def _tags(self, raw):
        return {k: parse_type(v) if isinstance(v, str) else v for k, v in raw.items()}

    def compile(self, component, ctx):
        inputs, outputs = self._tags(self.inputs), self._tags(self.outputs)
        params = dict(component.parameters)

        def make():
            return _ExternalBehavior(self, params, outputs)

        return Spec(inputs, outputs, make)


class _ExternalBehavior(Behavior):
    def __init__(self, kind: ExternalKind, params, outputs):
        self.kind = kind
        self.params = params
        self.outputs = outputs
        self.state: dict[str, Any] = {}

    def init(self, t, inputs):
        if self.kind.initial is not None:
            outputs = dict(self.kind.initial(self.params))
        else:
            outputs = {name: _default_value(tag) for name, tag in self.outputs.items()}
        self.state = {**outputs, **self.params}
        return outputs

    def step(self, t, dt, inputs):
        return dict(self.kind.step(t, dt, dict(inputs), self.state))


BUILTIN_KINDS: dict[str, Kind] = {
    k.name: k for k in (
        SolverKind(), TransformKind(), FrameKind(), ShapeKind(), CameraKind(),
        FieldKind(), RigidBodyKind(), StarSourceKind(),
    )
}
RENDERABLE = ("shape", "star-source")


class Registry:
    """Component kinds by name. New registries start with the built-in kinds."""

    def __init__(self):
        self._kinds: dict[str, Kind] = dict(BUILTIN_KINDS)

    def register(self, kind: ExternalKind) -> None:
        if not kind.name or not isinstance(kind.name, str):
            raise GraphError("kind name must be a non-empty string")
        if kind.name in self._kinds or kind.name == "external":
            raise DuplicateKindError(f"component kind {kind.name!r} is already registered")
        self._kinds[kind.name] = kind

    def get(self, name: str) -> Optional[Kind]:
        return self._kinds.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._kinds

    def names(self) -> list[str]:
        return sorted(self._kinds)


DEFAULT_REGISTRY = Registry()


def register_external(kind: ExternalKind, registry: Optional[Registry] = None) -> None:
    (registry or DEFAULT_REGISTRY).register(kind)


# -- scene graph -------------------------------------------------------------

@dataclass(eq=False)
class SceneGraph:
    components: dict[str, Component] = field(default_factory=dict)
    links: list[Link] = field(default_factory=list)
    registry: Registry = field(default=DEFAULT_REGISTRY, repr=False)
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def build(cls, components: Iterable[Component], links: Iterable[Link] = (), **kwargs) -> "SceneGraph":
        """Assemble a graph; a component's ``parent`` parameter becomes a positioning link."""
        comps: dict[str, Component] = {}
        extra: list[Link] = []
        for c in components:
            if c.id in comps:
                raise GraphError(f"duplicate component id {c.id!r}")
            params = dict(c.parameters)
            parent = params.pop("parent", None)
            if parent is not None:
                extra.append(Link(POSITIONING, parent, c.id))
            comps[c.id] = Component(c.id, c.kind, params)
        return cls(comps, list(links) + extra, **kwargs)

    def __eq__(self, other):
        if not isinstance(other, SceneGraph):
            return NotImplemented
        return self.components == other.components and self.links == other.links

    def kind(self, cid: str) -> Optional[Kind]:
        c = self.components.get(cid)
        return self.registry.get(c.kind) if c is not None else None

    def information_links(self) -> list[Link]:
        return [l for l in self.links if l.kind == INFORMATION]

    def compile(self) -> tuple[dict[str, Spec], list[Diagnostic]]:
        specs, diags = {}, []
        ctx = CompileContext(self.base_dir)
        for cid in sorted(self.components):
            comp = self.components[cid]
            if cid == ZERO_FRAME:
                diags.append(_error(cid, f"{ZERO_FRAME!r} is the reserved zero frame id"))
            kind = self.registry.get(comp.kind)
            if kind is None:
                diags.append(_error(cid, f"unknown component kind {comp.kind!r}"))
                continue
            try:
                specs[cid] = kind.compile(comp, ctx)
            except ComponentError as exc:
                diags.append(_error(cid, str(exc)))
        return specs, diags


def _information_cycles(nodes: Sequence[str], edges: Mapping[str, set[str]]) -> list[list[str]]:
    """Strongly connected components that contain a cycle, each as a cycle path."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    stack: list[str] = []
    on_stack: set[str] = set()
    out = []
    counter = [0]

    def strongconnect(v):
        # iterative Tarjan to survive deep graphs
        work = [(v, iter(sorted(edges.get(v, ()))))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(edges.get(w, ())))))
                    advanced = True
                    break
                if w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[node])
            if low[node] == index[node]:
                scc = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    scc.append(w)
                    if w == node:
                        break
                if len(scc) > 1 or node in edges.get(node, ()):
                    out.append(_cycle_path(set(scc), edges))

    for v in nodes:
        if v not in index:
            strongconnect(v)
    return sorted(out)


def _cycle_path(scc: set[str], edges: Mapping[str, set[str]]) -> list[str]:
    start = min(scc)
    # shortest cycle through `start` within the component, by BFS
    prev: dict[str, str] = {}
    frontier = [start]
    seen = {start}
    while frontier:
        nxt = []
        for v in frontier:
            for w in sorted(edges.get(v, ())):
                if w not in scc:
                    continue
                if w == start:
                    path = [v]
                    while path[-1] != start:
                        path.append(prev[path[-1]])
                    return path[::-1]
                if w not in seen:
                    seen.add(w)
                    prev[w] = v
                    nxt.append(w)
        frontier = nxt
    return [start]


def validate(g: SceneGraph) -> list[Diagnostic]:
    """Every structural problem of `g`, one diagnostic each. Empty means valid."""
    specs, diags = g.compile()
    comps = g.components
    info_edges: dict[str, set[str]] = {}
    fed: dict[tuple[str, str], Link] = {}
    parents: dict[str, list[str]] = {}

    for link in g.links:
        subject = str(link)
        if link.kind not in LINK_KINDS:
            diags.append(_error(subject, f"unknown link kind {link.kind!r}"))
            continue
        missing = [cid for cid in (link.source, link.target) if cid not in comps]
        for cid in missing:
            diags.append(_error(subject, f"dangling reference to unknown component {cid!r}"))
        if missing:
            continue
        src_kind, dst_kind = comps[link.source].kind, comps[link.target].kind
        if link.kind == INFORMATION:
            info_edges.setdefault(link.source, set()).add(link.target)
            src, dst = specs.get(link.source), specs.get(link.target)
            if src is not None and link.output not in src.outputs:
                diags.append(_error(subject, f"{link.source!r} has no output {link.output!r}"))
                src = None
            if dst is not None and link.input not in dst.inputs:
                diags.append(_error(subject, f"{link.target!r} has no input {link.input!r}"))
                dst = None
            if src is not None and dst is not None:
                a, b = src.outputs[link.output], dst.inputs[link.input]
                if unify(a, b) is None:
                    diags.append(_error(subject, f"type mismatch: {a} does not unify with {b}"))
            key = (link.target, link.input)
            if key in fed:
                diags.append(_error(subject, f"input {link.input!r} of {link.target!r} is fed by more than one link"))
            fed[key] = link
        elif link.kind == POSITIONING:
            ok = True
            for role, cid in (("source", link.source), ("target", link.target)):
                kind = g.kind(cid)
                if kind is not None and not kind.frame_bearing:
                    diags.append(_error(subject, f"positioning {role} {cid!r} ({comps[cid].kind}) does not carry a frame"))
                    ok = False
            if ok:
                parents.setdefault(link.target, []).append(link.source)
        else:
            if src_kind != "camera":
                diags.append(_error(subject, f"visibility source {link.source!r} is a {src_kind}, not a camera"))
            if dst_kind not in RENDERABLE:
                diags.append(_error(subject, f"visibility target {link.target!r} is a {dst_kind}, not a shape or star-source"))

    for cid, spec in sorted(specs.items()):
        for name in spec.inputs:
            if (cid, name) not in fed:
                diags.append(_error(cid, f"input {name!r} is not connected"))
        for param, ref in spec.refs.items():
            if ref not in comps:
                diags.append(_error(cid, f"{param} refers to unknown component {ref!r}"))
            elif comps[ref].kind != param:
                diags.append(_error(cid, f"{param} {ref!r} is a {comps[ref].kind}, not a {param}"))

    for child, ps in sorted(parents.items()):
        if len(ps) > 1:
            diags.append(_error(child, f"multiple positioning parents: {', '.join(sorted(ps))}"))
    seen_cycles = set()
    for child in sorted(parents):
        path, cursor = [], child
        while cursor in parents and cursor not in path:
            path.append(cursor)
            cursor = sorted(parents[cursor])[0]
        if cursor in path:
            cycle = path[path.index(cursor):]
            key = frozenset(cycle)
            if key not in seen_cycles:
                seen_cycles.add(key)
                diags.append(_error(min(cycle), f"positioning cycle: [{', '.join(cycle)}]"))

    for cycle in _information_cycles(sorted(comps), info_edges):
        diags.append(_error(cycle[0], f"information cycle: [{', '.join(cycle)}]"))
    return diags


def topo_order(g: SceneGraph) -> list[str]:
    """Component ids with every information provider before its consumers; ties by id."""
    indeg = {cid: 0 for cid in g.components}
    out: dict[str, set[str]] = {}
    for link in g.information_links():
        if link.source in indeg and link.target in indeg and link.target not in out.get(link.source, ()):
            out.setdefault(link.source, set()).add(link.target)
            indeg[link.target] += 1
    heap = [cid for cid, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        cid = heapq.heappop(heap)
        order.append(cid)
        for nxt in out.get(cid, ()):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(heap, nxt)
    if len(order) != len(indeg):
        rest = sorted(set(indeg) - set(order))
        cycles = _information_cycles(rest, {k: v & set(rest) for k, v in out.items() if k in rest})
        raise GraphCycleError(cycles[0] if cycles else rest)
    return order


# -- runtime -----------------------------------------------------------------

class Simulation:
    """Executes a validated graph; `table` holds every component's latest outputs."""

    def __init__(self, graph: SceneGraph):
        specs, _ = graph.compile()
        diags = validate(graph)
        if diags:
            raise ValidationError(diags)
        self.graph = graph
        self.specs = specs
        self.order = topo_order(graph)
        self.behaviors = {cid: specs[cid].make() for cid in self.order}
        self.wiring: dict[str, list[tuple[str, str, str]]] = {cid: [] for cid in self.order}
        for link in graph.information_links():
            self.wiring[link.target].append((link.input, link.source, link.output))
        parent = {l.target: l.source for l in graph.links if l.kind == POSITIONING}
        self.framed = [cid for cid in self.order if graph.kind(cid).frame_bearing]
        self.forest = FrameForest.from_nodes(FrameNode(cid, parent.get(cid)) for cid in self.framed)
        self.visibility: dict[str, list[str]] = {}
        for link in graph.links:
            if link.kind == VISIBILITY:
                self.visibility.setdefault(link.source, []).append(link.target)
        self.table: dict[str, dict[str, Value]] = {}
        self.t: Optional[float] = None

    def _inputs(self, cid: str) -> dict[str, Value]:
        return {inp: self.table[src][out] for inp, src, out in self.wiring[cid]}

    def _publish(self, cid: str, t: float, outputs: Mapping[str, Any]) -> None:
        declared = self.specs[cid].outputs
        published = {}
        for name, value in outputs.items():
            if name not in declared:
                raise StepError(cid, t, GraphError(f"undeclared output {name!r}"))
            try:
                value = to_value(value)
            except (TypeError, ValueError) as exc:
                raise StepError(cid, t, exc) from exc
            tag = declared[name]
            actual = type_of(value)
            ok = unify(actual, tag) is not None or (tag == REAL and actual == INTEGER)
            if not ok:
                raise StepError(cid, t, GraphError(f"output {name!r} produced {actual}, declared {tag}"))
            if not all_finite(value):
                raise StepError(cid, t, NonFiniteStateError(t))
            published[name] = float(value) if tag == REAL and actual == INTEGER else value
        missing = set(declared) - set(published)
        if missing:
            raise StepError(cid, t, GraphError(f"missing outputs {', '.join(sorted(missing))}"))
        self.table[cid] = published

    def _run(self, t_new: float, call: Callable[[str, Behavior, dict], Mapping[str, Any]]) -> None:
        for cid in self.order:
            behavior = self.behaviors[cid]
            try:
                outputs = call(cid, behavior, self._inputs(cid))
            except StepError:
                raise
            except Exception as exc:
                raise StepError(cid, t_new, exc) from exc
            self._publish(cid, t_new, outputs)
        for cid in self.framed:
            try:
                self.forest.set_local(cid, self.behaviors[cid].pose())
            except Exception as exc:
                raise StepError(cid, t_new, exc) from exc
        self.t = t_new

    def initialize(self, t0: float) -> dict[str, dict[str, Value]]:
        self.table = {}
        self._run(t0, lambda cid, b, inputs: b.init(t0, inputs))
        return self.table

    def step(self, t: float, dt: float) -> dict[str, dict[str, Value]]:
        """Advance every component from `t` to `t + dt` in topological order."""
        if self.t is None:
            raise GraphError("simulation is not initialized")
        self._run(t + dt, lambda cid, b, inputs: b.step(t, dt, inputs))
        return self.table

    def run(self, t0: float, t1: float, dt: float,
            on_step: Optional[Callable[[int, float, "Simulation"], None]] = None) -> int:
        """Initialize at t0 and step over the time grid to t1; returns the step count."""
        from .dynamics import time_grid

        if not dt > 0:
            raise GraphError("dt must be positive")
        if not t1 > t0:
            raise GraphError("t1 must be greater than t0")
        grid = time_grid(t0, t1, dt)
        self.initialize(t0)
        if on_step:
            on_step(0, t0, self)
        for k, (a, b) in enumerate(zip(grid, grid[1:]), start=1):
            self.step(a, b - a)
            if on_step:
                on_step(k, b, self)
        return len(grid) - 1

    # accessors used by rendering and output sinks
    def camera(self, cid: str) -> Camera:
        b = self.behaviors.get(cid)
        if not isinstance(b, _CameraBehavior):
            raise GraphError(f"unknown camera {cid!r}")
        return b.camera

    def visible(self, camera_id: str) -> list[str]:
        self.camera(camera_id)
        return sorted(self.visibility.get(camera_id, []))
