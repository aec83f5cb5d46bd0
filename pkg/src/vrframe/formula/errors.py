from __future__ import annotations


class FormulaError(Exception):
    """Base class for everything the formula engine raises."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, offset: int, expected: str, found: str = ""):
        self.offset = offset
        self.expected = expected
        self.found = found
        msg = f"syntax error at offset {offset}: expected {expected}"
        if found:
            msg += f", found {found}"
        super().__init__(msg)


class FormulaTypeError(FormulaError):
    pass


class DimensionError(FormulaTypeError):
    pass


class UnknownNameError(FormulaTypeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown variable {name!r}")


class EvalError(FormulaError):
    """A numeric failure during evaluation (the expression itself was well typed)."""


class SingularMatrixError(EvalError):
    pass


class DivisionByZeroError(EvalError):
    pass


class DomainError(EvalError):
    pass


class NonFiniteError(DomainError):
    pass


class DeltaPlacementError(FormulaError):
    pass
