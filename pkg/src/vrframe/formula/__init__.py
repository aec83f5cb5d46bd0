"""Polymorphic formula language: parsing, type inference, evaluation."""
from .ast import (
    BUILTIN_NAMES, Array, Binary, Call, Delta, Expr, Literal, Unary, Var,
    contains_delta, free_variables, to_text,
)
from .delta import extract_delta_terms
from .errors import (
    DeltaPlacementError, DimensionError, DivisionByZeroError, DomainError, EvalError,
    FormulaError, FormulaSyntaxError, FormulaTypeError, NonFiniteError, SingularMatrixError,
    UnknownNameError,
)
from .evaluator import BUILTIN_FUNCTIONS, Env, call_function, evaluate, invert_matrix
from .parser import parse
from .types import (
    BOOLEAN, INTEGER, REAL, BooleanType, FunctionType, IntegerType, MatrixType,
    RealType, TypeTag, VectorType, infer, parse_type, type_of, unify,
)
from .values import FunctionRef, Value, format_value, matrix, to_value, variant, vector

__all__ = [
    "BOOLEAN", "BUILTIN_FUNCTIONS", "BUILTIN_NAMES", "INTEGER", "REAL", "Array",
    "Binary", "BooleanType", "Call", "Delta", "DeltaPlacementError", "DimensionError",
    "DivisionByZeroError", "DomainError", "Env", "EvalError", "Expr", "FormulaError",
    "FormulaSyntaxError", "FormulaTypeError", "FunctionRef", "FunctionType",
    "IntegerType", "Literal", "NonFiniteError", "MatrixType", "RealType", "SingularMatrixError",
    "TypeTag", "Unary", "UnknownNameError", "Value", "Var", "VectorType",
    "call_function", "contains_delta", "evaluate", "extract_delta_terms",
    "format_value", "free_variables", "infer", "invert_matrix", "matrix", "parse",
    "parse_type", "to_text", "to_value", "type_of", "unify", "variant", "vector",
]
