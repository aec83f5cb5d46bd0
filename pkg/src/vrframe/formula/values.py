"""Runtime values of the formula language.

Values are plain Python objects: ``bool``, ``int`` (64-bit range), ``float``,
read-only 1-D float64 arrays (vectors), read-only 2-D float64 arrays
(matrices) and :class:`FunctionRef`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Union

import numpy as np

from .errors import FormulaTypeError


@dataclass(frozen=True, eq=False)
class FunctionRef:
    """A function used as a value; built-in or a composition of built-ins."""

    name: str
    arity: int
    impl: Callable[..., Any] = field(repr=False)

    def __post_init__(self):
        if self.arity < 1:
            raise ValueError("function arity must be at least 1")


Value = Union[bool, int, float, np.ndarray, FunctionRef]


def vector(items) -> np.ndarray:
    arr = np.array(items, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise FormulaTypeError("a vector needs at least one element")
    arr.flags.writeable = False
    return arr


def matrix(rows) -> np.ndarray:
    arr = np.array(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise FormulaTypeError("a matrix needs at least one row and one column")
    arr.flags.writeable = False
    return arr


def freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def to_value(obj: Any) -> Value:
    """Coerce a host object (number, nested list, array) into a formula value."""
    if isinstance(obj, (bool, FunctionRef)):
        return obj
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr)
    if arr.ndim == 1:
        return vector(arr)
    if arr.ndim == 2:
        return matrix(arr)
    raise FormulaTypeError(f"cannot represent {obj!r} as a formula value")


def variant(value: Value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "real"
    if isinstance(value, FunctionRef):
        return "function"
    if isinstance(value, np.ndarray):
        return "vector" if value.ndim == 1 else "matrix"
    raise FormulaTypeError(f"not a formula value: {value!r}")


def _num(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def format_value(value: Value) -> str:
    """Canonical printed form, e.g. ``[0, 0, 1]`` or ``14``."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _num(value)
    if isinstance(value, FunctionRef):
        return f"<function {value.name}/{value.arity}>"
    if value.ndim == 1:
        return "[" + ", ".join(_num(x) for x in value) + "]"
    return "[" + ", ".join(format_value(row) for row in value) + "]"


def all_finite(value: Value) -> bool:
    if isinstance(value, float):
        return math.isfinite(value)
    if isinstance(value, np.ndarray):
        return bool(np.all(np.isfinite(value)))
    return True
