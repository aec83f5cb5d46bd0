"""Time integration: ODE systems with impulse terms and 6-DOF rigid bodies.

Everything uses fixed-step classical RK4. Steps are shortened so the grid
lands exactly on every impulse firing time and on the end of the interval.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence, TextIO, Union

import numpy as np

from .formula import (
    Env, EvalError, Expr, FormulaError, FormulaTypeError, NonFiniteError, evaluate,
    extract_delta_terms, parse, variant,
)
from .frames import quat_mul, quat_normalize, quat_rotate

# grid points closer than this fraction of dt to a stop point are merged into it
_SNAP = 1e-9


class DynamicsError(Exception):
    pass


class IntegrationError(DynamicsError):
    """A formula failed while evaluating a right-hand side."""

    def __init__(self, message: str, t: float, stage: Optional[int] = None):
        self.t = t
        self.stage = stage
        where = f"t={t!r}" if stage is None else f"RK4 stage {stage} at t={t!r}"
        super().__init__(f"{where}: {message}")


class NonFiniteStateError(DynamicsError):
    def __init__(self, t: float):
        self.t = t
        super().__init__(f"state became non-finite at t={t!r}")


@dataclass(frozen=True)
class Impulse:
    state: int
    coefficient: Expr
    time: float


@dataclass(frozen=True)
class OdeSystem:
    names: tuple[str, ...]
    rhs: tuple[Expr, ...]
    initial: tuple[float, ...]
    impulses: tuple[Impulse, ...] = ()
    time_var: str = "t"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.names) == len(self.rhs) == len(self.initial)):
            raise DynamicsError("names, right-hand sides and initial state must have equal length")
        if len(set(self.names)) != len(self.names):
            raise DynamicsError("state names must be unique")

    @classmethod
    def from_equations(
        cls,
        equations: Mapping[str, Union[str, Expr]],
        initial: Mapping[str, float],
        params: Optional[Mapping[str, Any]] = None,
        time_var: str = "t",
    ) -> "OdeSystem":
        """Build a system from ``{"x": "-x"}``-style equations.

        A key ending in ``''`` declares a second-order equation ``x'' = f``;
        it becomes the two states ``x`` and ``x_dot``.
        """
        names: list[str] = []
        rhs: list[Expr] = []
        raw_impulses: list[tuple[int, Expr, Expr]] = []
        for key, formula in equations.items():
            expr = parse(formula) if isinstance(formula, str) else formula
            smooth, impulses = extract_delta_terms(expr, time_var)
            if key.endswith("''"):
                base = key[:-2]
                names += [base, base + "_dot"]
                rhs += [parse(base + "_dot"), smooth]
                target = len(names) - 1
            else:
                names.append(key)
                rhs.append(smooth)
                target = len(names) - 1
            raw_impulses += [(target, coef, when) for coef, when in impulses]
        missing = [n for n in names if n not in initial]
        if missing:
            raise DynamicsError(f"missing initial value for {', '.join(missing)}")
        params = dict(params or {})
        pulses = []
        for idx, coef, when in raw_impulses:
            value = evaluate(when, params)
            if variant(value) not in ("integer", "real"):
                raise FormulaTypeError("impulse firing time must be a scalar")
            pulses.append(Impulse(idx, coef, float(value)))
        return cls(
            tuple(names), tuple(rhs), tuple(float(initial[n]) for n in names),
            tuple(pulses), time_var, params,
        )

    def env(self, t: float, state: Sequence[float]) -> Env:
        variables = dict(self.params)
        variables.update(zip(self.names, (float(x) for x in state)))
        variables[self.time_var] = float(t)
        return Env(variables)


@dataclass
class Trajectory:
    """Rows of state snapshots.

    Times are strictly increasing except at impulses, where the pre-jump and
    post-jump states share a time and the second row has ``jumps[i]`` set.
    """

    names: tuple[str, ...]
    times: list[float] = field(default_factory=list)
    rows: list[tuple[float, ...]] = field(default_factory=list)
    jumps: list[bool] = field(default_factory=list)

    def append(self, t: float, row: Sequence[float], jump: bool = False) -> None:
        self.times.append(float(t))
        self.rows.append(tuple(float(x) for x in row))
        self.jumps.append(jump)

    def extend(self, other: "Trajectory") -> None:
        """Append `other`, dropping its first row when it repeats our last one."""
        start = 0
        if self.times and other.times and other.times[0] == self.times[-1] and not other.jumps[0]:
            start = 1
        for i in range(start, len(other.times)):
            self.append(other.times[i], other.rows[i], other.jumps[i])

    @property
    def final(self) -> tuple[float, ...]:
        return self.rows[-1]

    def column(self, name: str) -> list[float]:
        idx = self.names.index(name)
        return [row[idx] for row in self.rows]

    def write_csv(self, out: TextIO) -> None:
        out.write(",".join(("t", *self.names)) + "\n")
        for t, row, jump in zip(self.times, self.rows, self.jumps):
            cells = ["%.17g" % t] + ["%.17g" % x for x in row]
            if jump:
                cells.append("jump=1")
            out.write(",".join(cells) + "\n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _scalar(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormulaTypeError(f"{what} must evaluate to a scalar, got {variant(value)}")
    return float(value)


def _derivative(sys: OdeSystem, t: float, state: Sequence[float], stage: int) -> list[float]:
    env = sys.env(t, state)
    out = []
    for name, expr in zip(sys.names, sys.rhs):
        try:
            out.append(_scalar(evaluate(expr, env), f"d{name}/dt"))
        except NonFiniteError as exc:
            raise NonFiniteStateError(t) from exc
        except FormulaError as exc:
            raise IntegrationError(f"d{name}/dt: {exc}", t, stage) from exc
    return out


def step_rk4(sys: OdeSystem, t: float, state: Sequence[float], dt: float) -> tuple[float, ...]:
    """One classical RK4 step of the smooth right-hand side."""
    if not dt > 0:
        raise DynamicsError("dt must be positive")
    y = [float(x) for x in state]
    k1 = _derivative(sys, t, y, 1)
    k2 = _derivative(sys, t + dt / 2, [a + dt / 2 * b for a, b in zip(y, k1)], 2)
    k3 = _derivative(sys, t + dt / 2, [a + dt / 2 * b for a, b in zip(y, k2)], 3)
    k4 = _derivative(sys, t + dt, [a + dt * b for a, b in zip(y, k3)], 4)
    return tuple(
        a + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    )


def time_grid(t0: float, t1: float, dt: float, stops: Sequence[float] = ()) -> list[float]:
    """``t0 + k*dt`` up to `t1`, plus every stop point, with near duplicates merged."""
    if not dt > 0:
        raise DynamicsError("dt must be positive")
    if not t0 < t1:
        raise DynamicsError("t0 must be less than t1")
    exact = sorted({float(s) for s in stops if t0 < s < t1} | {float(t1)})
    grid = []
    k = 1
    while True:
        t = t0 + k * dt
        if t >= t1 - _SNAP * dt:
            break
        grid.append(t)
        k += 1
    merged = [t0]
    points = sorted(set(grid) | set(exact))
    for t in points:
        near = [s for s in exact if abs(s - t) <= _SNAP * dt]
        if near and t not in exact:
            continue
        merged.append(t)
    return merged


def integrate(
    sys: OdeSystem,
    t0: float,
    t1: float,
    dt: float,
    state: Optional[Sequence[float]] = None,
    include_end: bool = False,
) -> Trajectory:
    """Integrate from `t0` to `t1`, applying impulse jumps at their firing times.

    Impulses strictly inside ``(t0, t1)`` fire; with `include_end` one firing
    exactly at `t1` fires too, so consecutive windows fire each impulse once.
    """
    y = tuple(float(x) for x in (sys.initial if state is None else state))
    if len(y) != len(sys.names):
        raise DynamicsError("state length does not match the system")
    firing = [p for p in sys.impulses if t0 < p.time < t1 or (include_end and p.time == t1)]
    stops = sorted({p.time for p in firing})
    grid = time_grid(t0, t1, dt, stops)
    traj = Trajectory(sys.names)
    traj.append(t0, y)
    for a, b in zip(grid, grid[1:]):
        y = step_rk4(sys, a, y, b - a)
        if not all(math.isfinite(x) for x in y):
            raise NonFiniteStateError(b)
        traj.append(b, y)
        pulses = [p for p in firing if p.time == b]
        if pulses:
            y = _apply_impulses(sys, b, y, pulses)
            traj.append(b, y, jump=True)
    return traj


def _apply_impulses(sys: OdeSystem, t: float, y: tuple[float, ...], pulses: Sequence[Impulse]) -> tuple[float, ...]:
    env = sys.env(t, y)
    jumped = list(y)
    for p in pulses:
        try:
            amount = _scalar(evaluate(p.coefficient, env), "impulse coefficient")
        except NonFiniteError as exc:
            raise NonFiniteStateError(t) from exc
        except FormulaError as exc:
            raise IntegrationError(f"impulse on {sys.names[p.state]}: {exc}", t) from exc
        jumped[p.state] += amount
    if not all(math.isfinite(x) for x in jumped):
        raise NonFiniteStateError(t)
    return tuple(jumped)


# -- rigid bodies -------------------------------------------------------------

BODY_COLUMNS = ("px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz")


def _vec3(value: Any, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,):
        raise DynamicsError(f"{what} must be a 3-vector")
    return arr


@dataclass(frozen=True)
class RigidBody6D:
    """Rigid body with world-frame force and body-frame torque expressions.

    Force and torque formulas see ``t``, ``m``, ``position``, ``velocity``,
    ``quaternion``, ``omega``, the scalar components ``x y z vx vy vz wx wy wz``
    and any extra `params`.
    """

    mass: float
    inertia: np.ndarray
    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    orientation: tuple = (1.0, 0.0, 0.0, 0.0)
    omega: tuple = (0.0, 0.0, 0.0)
    force: Optional[Expr] = None
    torque: Optional[Expr] = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.mass > 0:
            raise DynamicsError("mass must be positive")
        inertia = np.array(self.inertia, dtype=np.float64)
        if inertia.shape != (3, 3):
            raise DynamicsError("inertia must be 3x3")
        if np.max(np.abs(inertia - inertia.T)) > 1e-12:
            raise DynamicsError("inertia must be symmetric")
        try:
            np.linalg.cholesky(inertia)
        except np.linalg.LinAlgError as exc:
            raise DynamicsError("inertia must be positive definite") from exc
        inertia.flags.writeable = False
        inv = np.linalg.inv(inertia)
        inv.flags.writeable = False
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "_inertia_inv", inv)
        for name in ("force", "torque"):
            value = getattr(self, name)
            if isinstance(value, str):
                object.__setattr__(self, name, parse(value))
        object.__setattr__(self, "orientation", quat_normalize(self.orientation))

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.orientation, self.omega]).astype(np.float64)

    def with_state(self, state: Sequence[float]) -> "RigidBody6D":
        s = [float(x) for x in state]
        return replace(
            self, position=tuple(s[0:3]), velocity=tuple(s[3:6]),
            orientation=tuple(s[6:10]), omega=tuple(s[10:13]),
        )

    def _env(self, t: float, s: np.ndarray) -> Env:
        variables = dict(self.params)
        p, v, q, w = s[0:3], s[3:6], s[6:10], s[10:13]
        variables.update(
            t=float(t), m=float(self.mass), position=p, velocity=v, quaternion=q, omega=w,
            x=float(p[0]), y=float(p[1]), z=float(p[2]),
            vx=float(v[0]), vy=float(v[1]), vz=float(v[2]),
            wx=float(w[0]), wy=float(w[1]), wz=float(w[2]),
        )
        return Env(variables)

    def derivative(self, t: float, s: Optional[np.ndarray] = None) -> np.ndarray:
        s = self.state if s is None else np.asarray(s, dtype=np.float64)
        p_dot, v_dot, q_dot, w_dot = _body_derivative(self, t, s)
        return np.concatenate([p_dot, v_dot, q_dot, w_dot])


def _body_derivative(body: RigidBody6D, t: float, s: np.ndarray):
    force = np.zeros(3)
    torque = np.zeros(3)
    if body.force is not None or body.torque is not None:
        env = body._env(t, s)
        if body.force is not None:
            force = _vec3(evaluate(body.force, env), "force")
        if body.torque is not None:
            torque = _vec3(evaluate(body.torque, env), "torque")
    v = s[3:6]
    q = s[6:10]
    w = s[10:13]
    iw = body.inertia @ w
    w_dot = body._inertia_inv @ (torque - np.cross(w, iw))
    q_dot = 0.5 * np.array(quat_mul(q, (0.0, w[0], w[1], w[2])))
    return v.copy(), force / body.mass, q_dot, w_dot


def rigid_derivative(body: RigidBody6D, t: float):
    """``(p_dot, v_dot, q_dot, w_dot)`` at the body's current state."""
    try:
        return _body_derivative(body, t, body.state)
    except FormulaError as exc:
        raise IntegrationError(str(exc), t) from exc


def step_body(body: RigidBody6D, t: float, s: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step of the 13-dimensional state, then quaternion renormalization."""

    def f(tt, ss, stage):
        try:
            return np.concatenate(_body_derivative(body, tt, ss))
        except NonFiniteError as exc:
            raise NonFiniteStateError(tt) from exc
        except (FormulaError, DynamicsError) as exc:
            raise IntegrationError(str(exc), tt, stage) from exc

    k1 = f(t, s, 1)
    k2 = f(t + dt / 2, s + dt / 2 * k1, 2)
    k3 = f(t + dt / 2, s + dt / 2 * k2, 3)
    k4 = f(t + dt, s + dt * k3, 4)
    out = s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    out[6:10] = quat_normalize(out[6:10])
    return out


def integrate_body(body: RigidBody6D, t0: float, t1: float, dt: float) -> Trajectory:
    grid = time_grid(t0, t1, dt)
    s = body.state
    traj = Trajectory(BODY_COLUMNS)
    traj.append(t0, s)
    for a, b in zip(grid, grid[1:]):
        s = step_body(body, a, s, b - a)
        if not np.all(np.isfinite(s)):
            raise NonFiniteStateError(b)
        traj.append(b, s)
    return traj


def angular_momentum_world(body: RigidBody6D, s: Sequence[float]) -> np.ndarray:
    q = tuple(s[6:10])
    w = np.asarray(s[10:13], dtype=np.float64)
    return np.array(quat_rotate(q, body.inertia @ w))


def rotational_energy(body: RigidBody6D, s: Sequence[float]) -> float:
    w = np.asarray(s[10:13], dtype=np.float64)
    return 0.5 * float(w @ body.inertia @ w)


__all__ = [
    "BODY_COLUMNS", "DynamicsError", "EvalError", "Impulse", "IntegrationError",
    "NonFiniteStateError", "OdeSystem", "RigidBody6D", "Trajectory", "angular_momentum_world",
    "integrate", "integrate_body", "rigid_derivative", "rotational_energy", "step_body",
    "step_rk4", "time_grid",
]
