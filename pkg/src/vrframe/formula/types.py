"""Static type tags and inference.

Inference mirrors the evaluator's broadcasting rules without computing
anything. Unknown vector lengths and matrix dimensions unify with any
concrete size; the concrete check is then left to evaluation.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np

from .ast import (
    BUILTIN_NAMES, BUILTINS_BINARY, Array, Binary, Call, Delta, Expr, Literal,
    Unary, Var,
)
from .errors import DimensionError, FormulaTypeError, UnknownNameError
from .values import FunctionRef, Value


@dataclass(frozen=True)
class BooleanType:
    def __str__(self):
        return "boolean"


@dataclass(frozen=True)
class IntegerType:
    def __str__(self):
        return "integer"


@dataclass(frozen=True)
class RealType:
    def __str__(self):
        return "real"


@dataclass(frozen=True)
class VectorType:
    length: Optional[int] = None

    def __str__(self):
        return "vector" if self.length is None else f"vector({self.length})"


@dataclass(frozen=True)
class MatrixType:
    rows: Optional[int] = None
    cols: Optional[int] = None

    def __str__(self):
        if self.rows is None and self.cols is None:
            return "matrix"
        r = "?" if self.rows is None else self.rows
        c = "?" if self.cols is None else self.cols
        return f"matrix({r},{c})"


@dataclass(frozen=True)
class FunctionType:
    arity: int

    def __str__(self):
        return f"function({self.arity})"


TypeTag = Union[BooleanType, IntegerType, RealType, VectorType, MatrixType, FunctionType]

BOOLEAN = BooleanType()
INTEGER = IntegerType()
REAL = RealType()

_INT_PRESERVING = frozenset({"abs", "sign", "sqr", "floor", "min", "max"})


def variant_name(tag: TypeTag) -> str:
    return str(tag).split("(")[0]


def parse_type(text: str) -> TypeTag:
    """Parse ``real``, ``integer``, ``boolean``, ``vector(3)``, ``matrix(2,2)``, ``function(1)``."""
    s = text.replace(" ", "").lower()
    simple = {"boolean": BOOLEAN, "bool": BOOLEAN, "integer": INTEGER,
              "int": INTEGER, "real": REAL, "vector": VectorType(), "matrix": MatrixType()}
    if s in simple:
        return simple[s]
    m = re.fullmatch(r"vector\((\d+|\?)\)", s)
    if m:
        return VectorType(None if m.group(1) == "?" else int(m.group(1)))
    m = re.fullmatch(r"matrix\((\d+|\?),(\d+|\?)\)", s)
    if m:
        r, c = (None if g == "?" else int(g) for g in m.groups())
        return MatrixType(r, c)
    m = re.fullmatch(r"function\((\d+)\)", s)
    if m:
        return FunctionType(int(m.group(1)))
    raise ValueError(f"unknown type {text!r}")


def type_of(value: Value) -> TypeTag:
    if isinstance(value, bool):
        return BOOLEAN
    if isinstance(value, int):
        return INTEGER
    if isinstance(value, float):
        return REAL
    if isinstance(value, FunctionRef):
        return FunctionType(value.arity)
    if isinstance(value, np.ndarray):
        if value.ndim == 1:
            return VectorType(value.shape[0])
        return MatrixType(*value.shape)
    raise FormulaTypeError(f"not a formula value: {value!r}")


def _unify_dim(a: Optional[int], b: Optional[int]) -> tuple[bool, Optional[int]]:
    if a is None:
        return True, b
    if b is None or a == b:
        return True, a
    return False, None


def unify(a: TypeTag, b: TypeTag) -> Optional[TypeTag]:
    """Most specific tag compatible with both, or None."""
    if isinstance(a, VectorType) and isinstance(b, VectorType):
        ok, n = _unify_dim(a.length, b.length)
        return VectorType(n) if ok else None
    if isinstance(a, MatrixType) and isinstance(b, MatrixType):
        ok_r, r = _unify_dim(a.rows, b.rows)
        ok_c, c = _unify_dim(a.cols, b.cols)
        return MatrixType(r, c) if ok_r and ok_c else None
    return a if a == b else None


def _is_scalar(t: TypeTag) -> bool:
    return isinstance(t, (IntegerType, RealType))


def _is_numeric(t: TypeTag) -> bool:
    return isinstance(t, (IntegerType, RealType, VectorType, MatrixType))


def _require_numeric(t: TypeTag, what: str) -> None:
    if not _is_numeric(t):
        raise FormulaTypeError(f"{what} needs a numeric operand, got {t}")


def _elementwise(op: str, a: TypeTag, b: TypeTag) -> TypeTag:
    """Broadcast shape for componentwise operators; element type is decided by the caller."""
    if _is_scalar(a) and _is_scalar(b):
        return REAL
    if _is_scalar(a):
        a, b = b, a
    if _is_scalar(b):
        if isinstance(a, MatrixType) and op == "^":
            raise FormulaTypeError("'^' is not defined for matrices")
        return a
    if isinstance(a, VectorType) and isinstance(b, VectorType):
        u = unify(a, b)
        if u is None:
            raise DimensionError(f"length mismatch in '{op}': {a} vs {b}")
        return u
    if isinstance(a, MatrixType) and isinstance(b, MatrixType) and op in ("+", "-"):
        u = unify(a, b)
        if u is None:
            raise DimensionError(f"dimension mismatch in '{op}': {a} vs {b}")
        return u
    raise FormulaTypeError(f"'{op}' is not defined for {a} and {b}")


def _product(a: TypeTag, b: TypeTag) -> TypeTag:
    if _is_scalar(a) and _is_scalar(b):
        return INTEGER if a == INTEGER and b == INTEGER else REAL
    if _is_scalar(a):
        return b
    if _is_scalar(b):
        return a
    if isinstance(a, VectorType) and isinstance(b, VectorType):
        return _elementwise("*", a, b)
    if isinstance(a, MatrixType) and isinstance(b, MatrixType):
        ok, _ = _unify_dim(a.cols, b.rows)
        if not ok:
            raise DimensionError(f"inner dimensions differ in '*': {a} vs {b}")
        return MatrixType(a.rows, b.cols)
    if isinstance(a, MatrixType) and isinstance(b, VectorType):
        ok, _ = _unify_dim(a.cols, b.length)
        if not ok:
            raise DimensionError(f"inner dimensions differ in '*': {a} vs {b}")
        return REAL if a.rows == 1 else VectorType(a.rows)
    if isinstance(a, VectorType) and isinstance(b, MatrixType):
        if b.rows is not None and b.rows != 1:
            raise DimensionError(f"vector times matrix needs a single-row matrix, got {b}")
        return MatrixType(a.length, b.cols)
    raise FormulaTypeError(f"'*' is not defined for {a} and {b}")


def _promote_real(t: TypeTag) -> TypeTag:
    return REAL if t == INTEGER else t


def _function_args(args: list[TypeTag], what: str) -> Optional[FunctionType]:
    """If any argument is a function, the call builds a composition."""
    funcs = [t for t in args if isinstance(t, FunctionType)]
    if not funcs:
        return None
    arity = funcs[0].arity
    for t in args:
        if isinstance(t, FunctionType):
            if t.arity != arity:
                raise FormulaTypeError(f"{what}: composed functions have different arities")
        elif not _is_scalar(t):
            raise FormulaTypeError(f"{what}: constants in a composition must be scalars, got {t}")
    return FunctionType(arity)


def _broadcast_args(args: list[TypeTag], what: str) -> TypeTag:
    for t in args:
        _require_numeric(t, what)
    shape = args[0]
    for t in args[1:]:
        shape = _elementwise("+", shape, t)
    return shape


def _builtin_call(name: str, args: list[TypeTag]) -> TypeTag:
    arity = 2 if name in BUILTINS_BINARY else 1
    if len(args) != arity:
        raise FormulaTypeError(f"{name} takes {arity} argument(s), got {len(args)}")
    composed = _function_args(args, name)
    if composed is not None:
        return composed
    shape = _broadcast_args(args, name)
    if all(t == INTEGER for t in args) and name in _INT_PRESERVING:
        return INTEGER
    return _promote_real(shape)


class _Inferer:
    def __init__(self, types: Mapping[str, TypeTag]):
        self.types = types

    def var(self, name: str) -> TypeTag:
        if name in BUILTIN_NAMES:
            return FunctionType(2 if name in BUILTINS_BINARY else 1)
        if name not in self.types:
            raise UnknownNameError(name)
        return self.types[name]

    def infer(self, e: Expr) -> TypeTag:
        if isinstance(e, Literal):
            return type_of(e.value)
        if isinstance(e, Var):
            return self.var(e.name)
        if isinstance(e, Array):
            return self.array([self.infer(i) for i in e.items])
        if isinstance(e, Delta):
            t = self.infer(e.arg)
            if not _is_scalar(t):
                raise FormulaTypeError(f"delta needs a scalar argument, got {t}")
            return REAL
        if isinstance(e, Unary):
            return self.unary(e.op, self.infer(e.operand))
        if isinstance(e, Binary):
            return self.binary(e.op, self.infer(e.left), self.infer(e.right))
        if isinstance(e, Call):
            return self.call(e)
        raise TypeError(f"not an expression: {e!r}")

    def array(self, items: list[TypeTag]) -> TypeTag:
        if all(_is_scalar(t) for t in items):
            return VectorType(len(items))
        if all(isinstance(t, VectorType) for t in items):
            row: TypeTag = items[0]
            for t in items[1:]:
                u = unify(row, t)
                if u is None:
                    raise DimensionError("matrix rows have different lengths")
                row = u
            return MatrixType(len(items), row.length)
        raise FormulaTypeError("array items must be all scalars or all vectors")

    def unary(self, op: str, t: TypeTag) -> TypeTag:
        if op == "neg":
            _require_numeric(t, "negation")
            return t
        if op == "not":
            if t != BOOLEAN:
                raise FormulaTypeError(f"'!' needs a boolean, got {t}")
            return BOOLEAN
        if op == "transpose":
            if _is_scalar(t):
                return t
            if isinstance(t, VectorType):
                return MatrixType(1, t.length)
            if isinstance(t, MatrixType):
                return MatrixType(t.cols, t.rows)
            raise FormulaTypeError(f"transpose needs a matrix or vector, got {t}")
        if op == "inv":
            if not isinstance(t, MatrixType):
                raise FormulaTypeError(f"inv needs a square matrix, got {t}")
            ok, n = _unify_dim(t.rows, t.cols)
            if not ok:
                raise DimensionError(f"inv needs a square matrix, got {t}")
            return MatrixType(n, n)
        raise ValueError(f"unknown unary operator {op!r}")

    def binary(self, op: str, a: TypeTag, b: TypeTag) -> TypeTag:
        if op in ("&&", "||"):
            if a != BOOLEAN or b != BOOLEAN:
                raise FormulaTypeError(f"'{op}' needs booleans, got {a} and {b}")
            return BOOLEAN
        if op in ("==", "!=") and a == BOOLEAN and b == BOOLEAN:
            return BOOLEAN
        if op in ("<", "<=", ">", ">=", "==", "!="):
            if not (_is_scalar(a) and _is_scalar(b)):
                raise FormulaTypeError(f"'{op}' compares scalars, got {a} and {b}")
            return BOOLEAN
        _require_numeric(a, f"'{op}'")
        _require_numeric(b, f"'{op}'")
        if op == "*":
            return _product(a, b)
        shape = _elementwise(op, a, b)
        if op in ("+", "-") and a == INTEGER and b == INTEGER:
            return INTEGER
        return shape

    def call(self, e: Call) -> TypeTag:
        args = [self.infer(a) for a in e.args]
        callee = e.callee
        if isinstance(callee, Var) and callee.name == "cross":
            if len(args) != 2:
                raise FormulaTypeError("cross takes 2 arguments")
            for t in args:
                if not isinstance(t, VectorType) or t.length not in (None, 3):
                    raise DimensionError(f"cross needs two vector(3) operands, got {t}")
            return VectorType(3)
        if isinstance(callee, Var) and callee.name in BUILTIN_NAMES:
            return _builtin_call(callee.name, args)
        ft = self.infer(callee)
        if not isinstance(ft, FunctionType):
            raise FormulaTypeError(f"{ft} value is not callable")
        if len(args) != ft.arity:
            raise FormulaTypeError(f"function of arity {ft.arity} called with {len(args)} argument(s)")
        composed = _function_args(args, "call")
        if composed is not None:
            return composed
        return _promote_real(_broadcast_args(args, "call"))


def infer(expr: Expr, types: Mapping[str, TypeTag]) -> TypeTag:
    """Result type of `expr` given the types of its free variables."""
    return _Inferer(types).infer(expr)
