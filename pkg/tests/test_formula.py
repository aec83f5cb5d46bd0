import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzz import TYPED_ENV_TYPES, random_expr, typed_values
from vrframe.formula import (
    BUILTIN_FUNCTIONS, INTEGER, REAL, Array, Binary, Call, Delta, DeltaPlacementError,
    DimensionError, DivisionByZeroError, Env, EvalError, FormulaSyntaxError,
    FormulaTypeError, FunctionType, Literal, MatrixType, SingularMatrixError, Unary,
    UnknownNameError, Var, VectorType, call_function, evaluate, extract_delta_terms,
    format_value, free_variables, infer, parse, to_text, type_of, variant,
)
from vrframe.formula.ast import RESERVED


# -- parse ------------------------------------------------------------------

def test_parse_minimal():
    assert parse("a + b") == Binary("+", Var("a"), Var("b"))


def test_parse_quadratic_form():
    assert parse("f' * a * f") == Binary(
        "*", Binary("*", Unary("transpose", Var("f")), Var("a")), Var("f")
    )


def test_parse_truncated_call_reports_offset():
    with pytest.raises(FormulaSyntaxError) as err:
        parse("sin(")
    assert err.value.offset == 4
    assert err.value.expected == "expression"


def test_syntax_error_offset_is_in_bytes():
    with pytest.raises(FormulaSyntaxError) as err:
        parse("a +\u00a0")
    # the no-break space is two bytes in UTF-8
    assert err.value.offset == 5


@pytest.mark.parametrize("text, expected", [
    ("-a ^ b", Binary("^", Unary("neg", Var("a")), Var("b"))),
    ("a ^ b ^ c", Binary("^", Var("a"), Binary("^", Var("b"), Var("c")))),
    ("a - b - c", Binary("-", Binary("-", Var("a"), Var("b")), Var("c"))),
    ("a + b * c", Binary("+", Var("a"), Binary("*", Var("b"), Var("c")))),
    ("a / b * c", Binary("*", Binary("/", Var("a"), Var("b")), Var("c"))),
    ("a^-b", Binary("^", Var("a"), Unary("neg", Var("b")))),
    ("inv(inv(q) + h)", Unary("inv", Binary("+", Unary("inv", Var("q")), Var("h")))),
    ("cross(a,b)", Call(Var("cross"), (Var("a"), Var("b")))),
    ("delta(t - 1)", Delta(Binary("-", Var("t"), Literal(1)))),
    ("[[1, 2], [3, 4]]", Array((Array((Literal(1), Literal(2))), Array((Literal(3), Literal(4)))))),
    ("x < 1 && y >= 2.5", Binary("&&", Binary("<", Var("x"), Literal(1)), Binary(">=", Var("y"), Literal(2.5)))),
    ("  a+\tb ", Binary("+", Var("a"), Var("b"))),
])
def test_precedence_and_forms(text, expected):
    assert parse(text) == expected


@pytest.mark.parametrize("text", ["a +", "(a", "inv(a, b)", "cross(a)", "a < b < c", "1 $ 2", "[]", "delta"])
def test_syntax_errors(text):
    with pytest.raises(FormulaSyntaxError):
        parse(text)


def test_integer_and_real_literals_are_distinct():
    assert parse("2") == Literal(2)
    assert parse("2.0") == Literal(2.0)
    assert parse("2") != parse("2.0")
    assert parse("true") != Literal(1)


def test_pretty_printer_canonical_spacing():
    assert to_text(parse("a+b*sin( x ,y)")) == "a + b * sin(x, y)"
    assert to_text(parse("(a+b)*c")) == "(a + b) * c"
    assert to_text(parse("(a')'")) == "a''"
    assert to_text(parse("(-a)^2")) == "-a ^ 2"


# -- infer ------------------------------------------------------------------

def test_infer_sin_real():
    assert infer(parse("sin(a)"), {"a": REAL}) == REAL


def test_infer_sin_vector():
    assert infer(parse("sin(a)"), {"a": VectorType(3)}) == VectorType(3)


def test_infer_product_dimension_mismatch():
    with pytest.raises(DimensionError):
        infer(parse("a*b"), {"a": MatrixType(2, 3), "b": MatrixType(4, 2)})


def test_infer_type_mismatch_and_unknown_variable():
    with pytest.raises(FormulaTypeError):
        infer(parse("m + b"), {"m": MatrixType(2, 2), "b": type_of(True)})
    with pytest.raises(UnknownNameError):
        infer(parse("x + 1"), {})


def test_infer_unknown_dimensions_defer_to_eval():
    t = infer(parse("inv(inv(q) + h)"), {"q": MatrixType(), "h": MatrixType(2, 2)})
    assert t == MatrixType(2, 2)
    assert infer(parse("f' * a * f"), {"f": VectorType(2), "a": MatrixType(2, 2)}) == REAL


def test_infer_integer_rules():
    assert infer(parse("1 + 2 * 3"), {}) == INTEGER
    assert infer(parse("1 / 2"), {}) == REAL
    assert infer(parse("abs(-3)"), {}) == INTEGER
    assert infer(parse("sin(g)"), {"g": FunctionType(1)}) == FunctionType(1)


def test_names_are_case_sensitive():
    with pytest.raises(UnknownNameError):
        evaluate(parse("A + 1"), {"a": 1.0})
    assert evaluate(parse("A + a"), {"a": 1.0, "A": 2.0}) == 3.0
    with pytest.raises(UnknownNameError):
        evaluate(parse("Sin(1)"), {})


# -- eval -------------------------------------------------------------------

def test_eval_broadcast_sum():
    out = evaluate(parse("a + b"), {"a": [1, 2, 3], "b": 2})
    assert out.tolist() == [3.0, 4.0, 5.0]


def test_eval_cross_basis():
    assert evaluate(parse("cross([1,0,0],[0,1,0])")).tolist() == [0.0, 0.0, 1.0]


def test_eval_inverse_diagonal():
    assert evaluate(parse("inv([[2,0],[0,4]])")).tolist() == [[0.5, 0.0], [0.0, 0.25]]


def test_eval_singular_matrix():
    with pytest.raises(SingularMatrixError):
        evaluate(parse("inv([[1,2],[2,4]])"))


def test_eval_division_by_zero():
    with pytest.raises(DivisionByZeroError):
        evaluate(parse("1 / 0"))
    with pytest.raises(DivisionByZeroError):
        evaluate(parse("[1, 2] / [1, 0]"))


def test_eval_composition_matches_direct_on_grid():
    h = evaluate(parse("sin(g)"), {"g": BUILTIN_FUNCTIONS["sqr"]})
    assert h.arity == 1
    assert call_function(h, (2.0,)) == pytest.approx(-0.756802, abs=1e-6)
    for x in np.linspace(-3, 3, 100):
        assert call_function(h, (float(x),)) == math.sin(x * x)
    # called through the formula language too
    assert evaluate(parse("h(2)"), Env(functions={"h": h})) == math.sin(4.0)


def test_eval_matrix_vector_rules():
    env = {"m": [[1, 2], [3, 4]], "v": [1, 1]}
    assert evaluate(parse("m * v"), env).tolist() == [3.0, 7.0]
    assert evaluate(parse("v'"), env).shape == (1, 2)
    assert evaluate(parse("v * v'"), env).tolist() == [[1.0, 1.0], [1.0, 1.0]]
    assert evaluate(parse("v * v"), env).tolist() == [1.0, 1.0]
    assert evaluate(parse("2 * m"), env).tolist() == [[2.0, 4.0], [6.0, 8.0]]
    with pytest.raises(DimensionError):
        evaluate(parse("m * [1, 2, 3]"), env)


def test_eval_integer_coercion():
    assert evaluate(parse("7 / 2")) == 3.5
    assert variant(evaluate(parse("7 - 2 * 3"))) == "integer"
    assert variant(evaluate(parse("7 + 0.5"))) == "real"


def test_eval_delta_is_zero():
    assert evaluate(parse("x + delta(t - 1)"), {"x": 2.0, "t": 1.0}) == 2.0


def test_eval_domain_errors():
    for text in ["sqrt(-1)", "ln(0)", "exp(1000)", "(-8) ^ 0.5"]:
        with pytest.raises(EvalError):
            evaluate(parse(text))


def test_format_value():
    assert format_value(evaluate(parse("cross([1,0,0],[0,1,0])"))) == "[0, 0, 1]"
    assert format_value(evaluate(parse("[[1, 2.5], [0, 1]]"))) == "[[1, 2.5], [0, 1]]"
    assert format_value(True) == "true"


def test_env_rejects_builtin_names():
    with pytest.raises(ValueError):
        Env({"sin": 1.0})


# -- free variables ---------------------------------------------------------

@pytest.mark.parametrize("text, names", [
    ("x + sin(y)", {"x", "y"}),
    ("3 + 4", set()),
    ("f(x) + f(x)", {"f", "x"}),
    ("cross(a, b) + inv(m) * delta(t - 1)", {"a", "b", "m", "t"}),
])
def test_free_variables(text, names):
    assert free_variables(parse(text)) == names


# -- delta terms ------------------------------------------------------------

def test_delta_with_function_coefficient():
    smooth, impulses = extract_delta_terms(parse("f(t) * delta(t - 1)"))
    assert smooth == Literal(0)
    assert impulses == [(Call(Var("f"), (Var("t"),)), Literal(1))]


def test_delta_with_constant_coefficient():
    smooth, impulses = extract_delta_terms(parse("x + 2 * delta(t - 0.5)"))
    assert smooth == Var("x")
    assert impulses == [(Literal(2), Literal(0.5))]


def test_delta_nested_is_malformed():
    with pytest.raises(DeltaPlacementError):
        extract_delta_terms(parse("sin(delta(t))"))


def test_delta_variants():
    smooth, impulses = extract_delta_terms(parse("-x - 3 * delta(t) + delta(2 - t) * y"))
    assert smooth == Unary("neg", Var("x"))
    assert impulses == [
        (Unary("neg", Literal(3)), Literal(0)),
        (Var("y"), Literal(2)),
    ]
    with pytest.raises(DeltaPlacementError):
        extract_delta_terms(parse("delta(t - c)"))
    with pytest.raises(DeltaPlacementError):
        extract_delta_terms(parse("delta(t - 1) * delta(t - 2)"))
    with pytest.raises(DeltaPlacementError):
        extract_delta_terms(parse("delta(2 * t)"))


def test_no_delta_leaves_expression_untouched():
    e = parse("-(a + b)")
    assert extract_delta_terms(e) == (e, [])


# -- properties -------------------------------------------------------------

_names = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,4}", fullmatch=True).filter(
    lambda n: n not in RESERVED
)
_leaves = st.one_of(
    _names.map(Var),
    st.integers(0, 10**6).map(Literal),
    st.floats(0, 1e20, allow_nan=False, allow_infinity=False).map(Literal),
    st.booleans().map(Literal),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from(["neg", "not", "transpose", "inv"]), children).map(lambda a: Unary(*a)),
        st.tuples(st.sampled_from(["+", "-", "*", "/", "^", "<", "<=", ">", ">=", "==", "!=", "&&", "||"]),
                  children, children).map(lambda a: Binary(*a)),
        st.tuples(_names.map(Var), st.lists(children, min_size=1, max_size=3)).map(
            lambda a: Call(a[0], tuple(a[1]))),
        st.tuples(children, children).map(lambda a: Call(Var("cross"), a)),
        st.lists(children, min_size=1, max_size=3).map(lambda a: Array(tuple(a))),
        children.map(Delta),
    )


@settings(max_examples=400, deadline=None)
@given(st.recursive(_leaves, _extend, max_leaves=25))
def test_print_parse_round_trip(expr):
    assert parse(to_text(expr)) == expr


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.floats(-1e3, 1e3),
       st.sampled_from(["+", "-", "*"]))
def test_broadcast_matches_scalar_bitwise(values, s, op):
    out = evaluate(parse(f"v {op} s"), {"v": values, "s": s})
    for i, x in enumerate(values):
        assert out[i] == evaluate(parse(f"x {op} s"), {"x": x, "s": s})


def test_matrix_inverse_identity():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(1, 6))
        m = rng.uniform(-1, 1, (n, n)) + n * np.eye(n)
        prod = evaluate(parse("m * inv(m)"), {"m": m})
        assert np.max(np.abs(prod - np.eye(n))) < 1e-9


def test_transpose_involution():
    rng = np.random.default_rng(8)
    for _ in range(100):
        m = rng.normal(size=tuple(rng.integers(1, 6, 2)))
        assert np.array_equal(evaluate(parse("(m')'"), {"m": m}), m)


def test_composition_zero_ulp():
    rng = random.Random(11)
    names = ["sin", "cos", "atan", "exp", "sqr", "abs", "sign", "floor"]
    for _ in range(1000):
        f, g = rng.choice(names), rng.choice(names)
        x = rng.uniform(-3, 3)
        env = {"x": x}
        composed = evaluate(parse(f"{f}({g})"))
        direct = evaluate(parse(f"{f}({g}(x))"), env)
        assert call_function(composed, (x,)) == direct


def test_cross_antisymmetry():
    rng = np.random.default_rng(9)
    for _ in range(200):
        a, b = rng.normal(size=3), rng.normal(size=3)
        ab = evaluate(parse("cross(a, b)"), {"a": a, "b": b})
        ba = evaluate(parse("-cross(b, a)"), {"a": a, "b": b})
        assert np.array_equal(ab, ba)


def test_type_soundness_fuzz():
    rng = random.Random(1234)
    nrng = np.random.default_rng(1234)
    checked = 0
    while checked < 10_000:
        expr = random_expr(rng, rng.randint(1, 5))
        try:
            tag = infer(expr, TYPED_ENV_TYPES)
        except FormulaTypeError:
            continue
        checked += 1
        try:
            value = evaluate(expr, typed_values(nrng))
        except EvalError:
            continue
        assert variant(value) == str(tag).split("(")[0], to_text(expr)
        if isinstance(tag, (VectorType, MatrixType)):
            known = type_of(value)
            if isinstance(tag, VectorType) and tag.length is not None:
                assert known == tag, to_text(expr)
            if isinstance(tag, MatrixType) and None not in (tag.rows, tag.cols):
                assert known == tag, to_text(expr)
