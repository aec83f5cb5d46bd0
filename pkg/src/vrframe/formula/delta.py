from __future__ import annotations

from .ast import Binary, Delta, Expr, Literal, Unary, Var, contains_delta, free_variables
from .errors import DeltaPlacementError


def _additive_terms(expr: Expr, sign: int, out: list[tuple[int, Expr]]) -> None:
    if isinstance(expr, Binary) and expr.op in ("+", "-"):
        _additive_terms(expr.left, sign, out)
        _additive_terms(expr.right, sign if expr.op == "+" else -sign, out)
    elif isinstance(expr, Unary) and expr.op == "neg" and contains_delta(expr.operand):
        _additive_terms(expr.operand, -sign, out)
    else:
        out.append((sign, expr))


def _factors(expr: Expr) -> list[Expr]:
    if isinstance(expr, Binary) and expr.op == "*":
        return _factors(expr.left) + _factors(expr.right)
    return [expr]


def _firing_time(arg: Expr, time_var: str) -> Expr:
    t = Var(time_var)
    if arg == t:
        return Literal(0)
    offset = None
    if isinstance(arg, Binary) and arg.op in ("+", "-"):
        if arg.left == t:
            offset = arg.right if arg.op == "-" else Unary("neg", arg.right)
        elif arg.right == t:
            offset = arg.left if arg.op == "-" else Unary("neg", arg.left)
    if offset is None:
        raise DeltaPlacementError(f"delta argument must have the form {time_var} - c")
    if free_variables(offset) or contains_delta(offset):
        raise DeltaPlacementError("delta firing time must be a constant expression")
    return offset


def extract_delta_terms(expr: Expr, time_var: str = "t") -> tuple[Expr, list[tuple[Expr, Expr]]]:
    """Split `expr` into its smooth part and impulse terms ``g * delta(t - c)``.

    Returns ``(smooth, [(coefficient, firing_time), ...])``.
    """
    if not contains_delta(expr):
        return expr, []
    terms: list[tuple[int, Expr]] = []
    _additive_terms(expr, 1, terms)
    smooth: list[tuple[int, Expr]] = []
    impulses: list[tuple[Expr, Expr]] = []
    for sign, term in terms:
        if not contains_delta(term):
            smooth.append((sign, term))
            continue
        factors = _factors(term)
        deltas = [f for f in factors if isinstance(f, Delta)]
        rest = [f for f in factors if not isinstance(f, Delta)]
        if len(deltas) != 1 or any(contains_delta(f) for f in rest):
            raise DeltaPlacementError("delta may only appear as g * delta(t - c) in an additive term")
        coef: Expr = Literal(1)
        if rest:
            coef = rest[0]
            for f in rest[1:]:
                coef = Binary("*", coef, f)
        if sign < 0:
            coef = Unary("neg", coef)
        impulses.append((coef, _firing_time(deltas[0].arg, time_var)))

    if not smooth:
        return Literal(0), impulses
    sign, acc = smooth[0]
    if sign < 0:
        acc = Unary("neg", acc)
    for sign, term in smooth[1:]:
        acc = Binary("+" if sign > 0 else "-", acc, term)
    return acc, impulses
