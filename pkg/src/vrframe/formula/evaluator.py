"""Tree-walking evaluator with broadcasting and small dense linear algebra."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .ast import (
    BUILTIN_NAMES, BUILTINS_BINARY, RESERVED, Array, Binary, Call, Delta, Expr,
    Literal, Unary, Var,
)
from .errors import (
    DimensionError, DivisionByZeroError, DomainError, EvalError, FormulaTypeError,
    NonFiniteError, SingularMatrixError, UnknownNameError,
)
from .values import FunctionRef, Value, all_finite, freeze, to_value, variant

PIVOT_TOLERANCE = 1e-12
INT64_MIN, INT64_MAX = -(2**63), 2**63 - 1


@dataclass
class Env:
    """Variable and function bindings. Names are case sensitive."""

    variables: dict[str, Value] = field(default_factory=dict)
    functions: dict[str, FunctionRef] = field(default_factory=dict)

    def __post_init__(self):
        self.variables = {k: to_value(v) for k, v in self.variables.items()}
        for name in (*self.variables, *self.functions):
            if name in BUILTIN_NAMES or name in RESERVED:
                raise ValueError(f"{name!r} is a built-in name and cannot be rebound")

    def lookup(self, name: str) -> Value:
        if name in self.variables:
            return self.variables[name]
        if name in self.functions:
            return self.functions[name]
        raise UnknownNameError(name)

    def bind(self, **values: Any) -> "Env":
        """A copy with extra variable bindings."""
        merged = dict(self.variables)
        merged.update(values)
        return Env(merged, dict(self.functions))

    def types(self) -> dict[str, Any]:
        from .types import type_of

        out = {k: type_of(v) for k, v in self.variables.items()}
        out.update({k: type_of(f) for k, f in self.functions.items()})
        return out


def as_env(env: Env | Mapping[str, Any] | None) -> Env:
    if env is None:
        return Env()
    if isinstance(env, Env):
        return env
    variables, functions = {}, {}
    for k, v in env.items():
        (functions if isinstance(v, FunctionRef) else variables)[k] = v
    return Env(variables, functions)


# -- numeric helpers --------------------------------------------------------

def _is_scalar(v: Value) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_array(v: Value) -> bool:
    return isinstance(v, np.ndarray)


def _require_numeric(v: Value, what: str) -> None:
    if not (_is_scalar(v) or _is_array(v)):
        raise FormulaTypeError(f"{what} needs a numeric operand, got {variant(v)}")


def _check_int(x: int) -> int:
    if not INT64_MIN <= x <= INT64_MAX:
        raise DomainError("integer overflow")
    return x


def _finite(v: Value) -> Value:
    if not all_finite(v):
        raise NonFiniteError("result is not finite")
    return v


def _map(kernel: Callable[..., float], *operands: Value) -> Value:
    """Apply a scalar kernel componentwise; scalars broadcast against arrays.

    Transcendental kernels always go through the same scalar code path so a
    vector component is bitwise equal to the scalar evaluation.
    """
    shapes = {a.shape for a in operands if _is_array(a)}
    if not shapes:
        return kernel(*operands)
    if len(shapes) > 1:
        raise DimensionError(f"shape mismatch: {sorted(shapes)}")
    (shape,) = shapes
    flat = [a.ravel().tolist() if _is_array(a) else None for a in operands]
    n = math.prod(shape)
    out = [
        kernel(*(f[i] if f is not None else a for f, a in zip(flat, operands)))
        for i in range(n)
    ]
    return freeze(np.array(out, dtype=np.float64).reshape(shape))


def _pow(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except (ValueError, OverflowError) as exc:
        raise DomainError(f"{a!r} ^ {b!r} is undefined") from exc


def _div(a: float, b: float) -> float:
    if b == 0:
        raise DivisionByZeroError("division by zero")
    return a / b


def _wrap_math(fn: Callable[[float], float], name: str) -> Callable[[float], float]:
    def kernel(x):
        try:
            return fn(x)
        except (ValueError, OverflowError) as exc:
            raise DomainError(f"{name}({x!r}) is undefined") from exc
    return kernel


def _sign(x):
    if isinstance(x, int):
        return (x > 0) - (x < 0)
    return 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)


def _floor(x):
    return x if isinstance(x, int) else float(math.floor(x))


_KERNELS: dict[str, Callable[..., Any]] = {
    "sin": _wrap_math(math.sin, "sin"),
    "cos": _wrap_math(math.cos, "cos"),
    "tan": _wrap_math(math.tan, "tan"),
    "asin": _wrap_math(math.asin, "asin"),
    "acos": _wrap_math(math.acos, "acos"),
    "atan": _wrap_math(math.atan, "atan"),
    "exp": _wrap_math(math.exp, "exp"),
    "ln": _wrap_math(math.log, "ln"),
    "sqrt": _wrap_math(math.sqrt, "sqrt"),
    "abs": abs,
    "sign": _sign,
    "floor": _floor,
    "sqr": lambda x: x * x,
    "atan2": math.atan2,
    "min": min,
    "max": max,
}
_INT_PRESERVING = frozenset({"abs", "sign", "sqr", "floor", "min", "max"})


def _apply_builtin(name: str, args: tuple[Value, ...]) -> Value:
    kernel = _KERNELS[name]
    for a in args:
        _require_numeric(a, name)
    if all(isinstance(a, int) for a in args) and name in _INT_PRESERVING:
        return _check_int(kernel(*args))
    if all(_is_scalar(a) for a in args):
        return _finite(float(kernel(*(float(a) for a in args))))
    _shape_check(args, name)
    return _finite(_map(lambda *xs: float(kernel(*xs)), *(_as_float(a) for a in args)))


def _as_float(v: Value) -> Value:
    return float(v) if isinstance(v, int) else v


def _shape_check(args, what):
    dims = {a.ndim for a in args if _is_array(a)}
    if len(dims) > 1:
        raise FormulaTypeError(f"{what}: cannot combine vector and matrix operands")
    shapes = {a.shape for a in args if _is_array(a)}
    if len(shapes) > 1:
        raise DimensionError(f"{what}: length mismatch {sorted(shapes)}")


def _builtin_ref(name: str) -> FunctionRef:
    arity = 2 if name in BUILTINS_BINARY else 1
    return FunctionRef(name, arity, lambda *args: _apply_builtin(name, args))


BUILTIN_FUNCTIONS: dict[str, FunctionRef] = {n: _builtin_ref(n) for n in sorted(BUILTIN_NAMES)}


def call_function(f: FunctionRef, args: tuple[Value, ...]) -> Value:
    """Apply a function value; integer results are promoted to Real."""
    if len(args) != f.arity:
        raise FormulaTypeError(f"{f.name} takes {f.arity} argument(s), got {len(args)}")
    if any(isinstance(a, FunctionRef) for a in args):
        return compose(f, args)
    for a in args:
        _require_numeric(a, f.name)
    _shape_check(args, f.name)
    result = f.impl(*args)
    return float(result) if isinstance(result, int) and not isinstance(result, bool) else result


def compose(outer: FunctionRef, inner: tuple[Value, ...]) -> FunctionRef:
    """``outer(g1, g2, ...)`` where some g are functions: a new function of their common arity."""
    funcs = [g for g in inner if isinstance(g, FunctionRef)]
    arity = funcs[0].arity
    for g in inner:
        if isinstance(g, FunctionRef):
            if g.arity != arity:
                raise FormulaTypeError(f"{outer.name}: composed functions have different arities")
        elif not _is_scalar(g):
            raise FormulaTypeError(f"{outer.name}: constants in a composition must be scalars")

    def impl(*xs):
        return call_function(
            outer, tuple(call_function(g, xs) if isinstance(g, FunctionRef) else g for g in inner)
        )

    parts = ", ".join(g.name if isinstance(g, FunctionRef) else repr(g) for g in inner)
    return FunctionRef(f"{outer.name}({parts})", arity, impl)


def invert_matrix(m: np.ndarray) -> np.ndarray:
    """Gauss-Jordan elimination with partial pivoting."""
    n, cols = m.shape
    if n != cols:
        raise DimensionError(f"inv needs a square matrix, got {n}x{cols}")
    a = np.array(m, dtype=np.float64)
    inv = np.eye(n)
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[pivot, col]) < PIVOT_TOLERANCE:
            raise SingularMatrixError("matrix is singular")
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            inv[[col, pivot]] = inv[[pivot, col]]
        p = a[col, col]
        a[col] /= p
        inv[col] /= p
        for row in range(n):
            if row != col and a[row, col] != 0.0:
                factor = a[row, col]
                a[row] -= factor * a[col]
                inv[row] -= factor * inv[col]
    return _finite(freeze(inv))


def cross(a: Value, b: Value) -> np.ndarray:
    for v in (a, b):
        if not (_is_array(v) and v.ndim == 1):
            raise FormulaTypeError("cross needs two vector(3) operands")
        if v.shape[0] != 3:
            raise DimensionError("cross needs two vector(3) operands")
    return freeze(np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]))


def _elementwise(op: str, a: Value, b: Value) -> Value:
    if _is_array(a) and _is_array(b) and a.ndim != b.ndim:
        raise FormulaTypeError(f"'{op}' cannot combine vector and matrix operands")
    if _is_array(a) and _is_array(b) and a.shape != b.shape:
        raise DimensionError(f"length mismatch in '{op}': {a.shape} vs {b.shape}")
    if op == "^" and any(_is_array(x) and x.ndim == 2 for x in (a, b)):
        raise FormulaTypeError("'^' is not defined for matrices")
    if op == "/" and any(_is_array(x) and x.ndim == 2 for x in (a, b)) and _is_array(a) and _is_array(b):
        raise FormulaTypeError("matrix division is not defined; use inv")
    a, b = _as_float(a), _as_float(b)
    if op == "+":
        return freeze(a + b) if _is_array(a) or _is_array(b) else a + b
    if op == "-":
        return freeze(a - b) if _is_array(a) or _is_array(b) else a - b
    if op == "*":
        return freeze(a * b) if _is_array(a) or _is_array(b) else a * b
    if op == "/":
        return _map(_div, a, b)
    if op == "^":
        return _map(_pow, a, b)
    raise ValueError(op)


def _product(a: Value, b: Value) -> Value:
    if _is_scalar(a) and _is_scalar(b):
        if isinstance(a, int) and isinstance(b, int):
            return _check_int(a * b)
        return float(a) * float(b)
    if _is_scalar(a) or _is_scalar(b):
        return _elementwise("*", a, b)
    if a.ndim == 1 and b.ndim == 1:
        return _elementwise("*", a, b)
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"inner dimensions differ in '*': {a.shape} vs {b.shape}")
        return freeze(a @ b)
    if a.ndim == 2 and b.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"inner dimensions differ in '*': {a.shape} vs {b.shape}")
        out = a @ b
        return float(out[0]) if a.shape[0] == 1 else freeze(out)
    if b.shape[0] != 1:
        raise DimensionError(f"vector times matrix needs a single-row matrix, got {b.shape}")
    return freeze(np.outer(a, b[0]))


class Evaluator:
    def __init__(self, env: Env):
        self.env = env

    def lookup(self, name: str) -> Value:
        if name in BUILTIN_FUNCTIONS:
            return BUILTIN_FUNCTIONS[name]
        return self.env.lookup(name)

    def eval(self, e: Expr) -> Value:
        if isinstance(e, Literal):
            return e.value
        if isinstance(e, Var):
            return self.lookup(e.name)
        if isinstance(e, Binary):
            return self.binary(e)
        if isinstance(e, Unary):
            return self.unary(e.op, self.eval(e.operand))
        if isinstance(e, Call):
            return self.call(e)
        if isinstance(e, Array):
            return self.array([self.eval(i) for i in e.items])
        if isinstance(e, Delta):
            arg = self.eval(e.arg)
            if not _is_scalar(arg):
                raise FormulaTypeError(f"delta needs a scalar argument, got {variant(arg)}")
            return 0.0
        raise TypeError(f"not an expression: {e!r}")

    def array(self, items: list[Value]) -> Value:
        if all(_is_scalar(i) for i in items):
            return _finite(freeze(np.array([float(i) for i in items])))
        if all(_is_array(i) and i.ndim == 1 for i in items):
            if len({i.shape for i in items}) != 1:
                raise DimensionError("matrix rows have different lengths")
            return freeze(np.vstack(items))
        raise FormulaTypeError("array items must be all scalars or all vectors")

    def unary(self, op: str, v: Value) -> Value:
        if op == "neg":
            _require_numeric(v, "negation")
            if isinstance(v, int):
                return _check_int(-v)
            return freeze(-v) if _is_array(v) else -v
        if op == "not":
            if not isinstance(v, bool):
                raise FormulaTypeError(f"'!' needs a boolean, got {variant(v)}")
            return not v
        if op == "transpose":
            if _is_scalar(v):
                return v
            if _is_array(v):
                return freeze(v.reshape(1, -1).copy() if v.ndim == 1 else v.T.copy())
            raise FormulaTypeError(f"transpose needs a matrix or vector, got {variant(v)}")
        if op == "inv":
            if not (_is_array(v) and v.ndim == 2):
                raise FormulaTypeError(f"inv needs a square matrix, got {variant(v)}")
            return invert_matrix(v)
        raise ValueError(f"unknown unary operator {op!r}")

    def binary(self, e: Binary) -> Value:
        op = e.op
        a = self.eval(e.left)
        b = self.eval(e.right)
        if op in ("&&", "||"):
            if not (isinstance(a, bool) and isinstance(b, bool)):
                raise FormulaTypeError(f"'{op}' needs booleans")
            return (a and b) if op == "&&" else (a or b)
        if op in ("==", "!=") and isinstance(a, bool) and isinstance(b, bool):
            return (a == b) if op == "==" else (a != b)
        if op in ("<", "<=", ">", ">=", "==", "!="):
            if not (_is_scalar(a) and _is_scalar(b)):
                raise FormulaTypeError(f"'{op}' compares scalars")
            return {
                "<": a < b, "<=": a <= b, ">": a > b,
                ">=": a >= b, "==": a == b, "!=": a != b,
            }[op]
        _require_numeric(a, f"'{op}'")
        _require_numeric(b, f"'{op}'")
        if op == "*":
            return _finite(_product(a, b))
        if op in ("+", "-") and isinstance(a, int) and isinstance(b, int):
            return _check_int(a + b if op == "+" else a - b)
        if op == "/" and _is_scalar(a) and _is_scalar(b):
            return _finite(_div(float(a), float(b)))
        if op == "^" and _is_scalar(a) and _is_scalar(b):
            return _finite(_pow(float(a), float(b)))
        return _finite(_elementwise(op, a, b))

    def call(self, e: Call) -> Value:
        args = tuple(self.eval(a) for a in e.args)
        callee = e.callee
        if isinstance(callee, Var) and callee.name == "cross":
            return _finite(cross(*args))
        if isinstance(callee, Var) and callee.name in BUILTIN_FUNCTIONS:
            f = BUILTIN_FUNCTIONS[callee.name]
            if len(args) != f.arity:
                raise FormulaTypeError(f"{f.name} takes {f.arity} argument(s), got {len(args)}")
            if any(isinstance(a, FunctionRef) for a in args):
                return compose(f, args)
            return _apply_builtin(f.name, args)
        f = self.eval(callee)
        if not isinstance(f, FunctionRef):
            raise FormulaTypeError(f"{variant(f)} value is not callable")
        return call_function(f, args)


def evaluate(expr: Expr, env: Env | Mapping[str, Any] | None = None) -> Value:
    """Evaluate `expr` against `env` (an :class:`Env` or a plain name->value mapping)."""
    try:
        return Evaluator(as_env(env)).eval(expr)
    except ZeroDivisionError as exc:  # pragma: no cover - guarded by _div
        raise DivisionByZeroError(str(exc)) from exc
    except OverflowError as exc:
        raise NonFiniteError(str(exc)) from exc


__all__ = [
    "BUILTIN_FUNCTIONS", "Env", "EvalError", "Evaluator", "as_env", "call_function",
    "compose", "cross", "evaluate", "invert_matrix",
]
