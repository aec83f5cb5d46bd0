"""Expression tree for the formula language and its canonical printer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

BUILTINS_UNARY = (
    "sin", "cos", "tan", "asin", "acos", "atan", "exp", "ln",
    "sqrt", "abs", "sign", "floor", "sqr",
)
BUILTINS_BINARY = ("atan2", "min", "max")
BUILTIN_NAMES = frozenset(BUILTINS_UNARY + BUILTINS_BINARY)
RESERVED = frozenset({"true", "false", "inv", "cross", "delta"})

ARITHMETIC_OPS = ("+", "-", "*", "/", "^")
COMPARISON_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGICAL_OPS = ("&&", "||")


@dataclass(frozen=True)
class Literal:
    value: Union[bool, int, float]

    def __eq__(self, other: object) -> bool:
        # True == 1 == 1.0 in Python; literals of different variants are different trees
        return (
            isinstance(other, Literal)
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    def __hash__(self) -> int:
        return hash((type(self.value), self.value))


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg", "not", "transpose", "inv"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    callee: "Expr"
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Array:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Delta:
    arg: "Expr"


Expr = Union[Literal, Var, Unary, Binary, Call, Array, Delta]


def children(expr: Expr) -> tuple[Expr, ...]:
    if isinstance(expr, Unary):
        return (expr.operand,)
    if isinstance(expr, Binary):
        return (expr.left, expr.right)
    if isinstance(expr, Call):
        return (expr.callee, *expr.args)
    if isinstance(expr, Array):
        return expr.items
    if isinstance(expr, Delta):
        return (expr.arg,)
    return ()


def walk(expr: Expr) -> Iterator[Expr]:
    stack = [expr]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def free_variables(expr: Expr) -> set[str]:
    """Identifiers in `expr` that are not built-in functions."""
    return {
        node.name
        for node in walk(expr)
        if isinstance(node, Var) and node.name not in BUILTIN_NAMES and node.name not in RESERVED
    }


def contains_delta(expr: Expr) -> bool:
    return any(isinstance(node, Delta) for node in walk(expr))


# -- printing ---------------------------------------------------------------

_BINARY_PREC = {
    "||": 1, "&&": 2,
    "<": 3, "<=": 3, ">": 3, ">=": 3, "==": 3, "!=": 3,
    "+": 4, "-": 4, "*": 5, "/": 5, "^": 6,
}
_UNARY_PREC = 7
_POSTFIX_PREC = 8
_ATOM_PREC = 9


def precedence(expr: Expr) -> int:
    if isinstance(expr, Binary):
        return _BINARY_PREC[expr.op]
    if isinstance(expr, Unary) and expr.op in ("neg", "not"):
        return _UNARY_PREC
    if isinstance(expr, Unary) and expr.op == "transpose":
        return _POSTFIX_PREC
    if isinstance(expr, Literal) and not isinstance(expr.value, bool) and expr.value < 0:
        return _UNARY_PREC
    return _ATOM_PREC


def _wrap(expr: Expr, need: bool) -> str:
    text = to_text(expr)
    return f"({text})" if need else text


def _literal_text(value: Union[bool, int, float]) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def to_text(expr: Expr) -> str:
    """Canonical text: one space around binary operators, none inside calls."""
    if isinstance(expr, Literal):
        return _literal_text(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Unary):
        if expr.op == "neg":
            return "-" + _wrap(expr.operand, precedence(expr.operand) < _UNARY_PREC)
        if expr.op == "not":
            return "!" + _wrap(expr.operand, precedence(expr.operand) < _UNARY_PREC)
        if expr.op == "transpose":
            return _wrap(expr.operand, precedence(expr.operand) < _POSTFIX_PREC) + "'"
        if expr.op == "inv":
            return f"inv({to_text(expr.operand)})"
        raise ValueError(f"unknown unary operator {expr.op!r}")
    if isinstance(expr, Binary):
        p = _BINARY_PREC[expr.op]
        if expr.op == "^":
            left_paren = precedence(expr.left) <= p
            right_paren = precedence(expr.right) < p
        elif p == 3:
            left_paren = precedence(expr.left) <= p
            right_paren = precedence(expr.right) <= p
        else:
            left_paren = precedence(expr.left) < p
            right_paren = precedence(expr.right) <= p
        return f"{_wrap(expr.left, left_paren)} {expr.op} {_wrap(expr.right, right_paren)}"
    if isinstance(expr, Call):
        callee = _wrap(expr.callee, precedence(expr.callee) < _ATOM_PREC)
        return f"{callee}({', '.join(to_text(a) for a in expr.args)})"
    if isinstance(expr, Array):
        return "[" + ", ".join(to_text(item) for item in expr.items) + "]"
    if isinstance(expr, Delta):
        return f"delta({to_text(expr.arg)})"
    raise TypeError(f"not an expression: {expr!r}")
