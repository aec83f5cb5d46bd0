"""Lexer and recursive-descent parser for formula text.

Precedence, loosest first::

    ||   &&   comparisons   + -   * /   ^ (right)   unary - !   postfix ' and calls
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import RESERVED, Array, Binary, Call, Delta, Expr, Literal, Unary, Var
from .errors import FormulaSyntaxError

INT64_MAX = 2**63 - 1

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>&&|\|\||<=|>=|==|!=|[-+*/^<>!'(),\[\]])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "number", "ident", "op", "eof"
    text: str
    offset: int  # byte offset into the UTF-8 encoding of the source


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(byte_pos, "a token", repr(text[pos]))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), byte_pos))
        byte_pos += len(m.group().encode("utf-8"))
        pos = m.end()
    tokens.append(Token("eof", "", byte_pos))
    return tokens


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.current = 0

    # -- token helpers

    def peek(self) -> Token:
        return self.tokens[self.current]

    def advance(self) -> Token:
        tok = self.tokens[self.current]
        if tok.kind != "eof":
            self.current += 1
        return tok

    def check(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text in ops

    def match(self, *ops: str) -> Token | None:
        if self.check(*ops):
            return self.advance()
        return None

    def expect(self, op: str, what: str | None = None) -> Token:
        if self.check(op):
            return self.advance()
        raise self.error(what or repr(op))

    def error(self, expected: str) -> FormulaSyntaxError:
        tok = self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return FormulaSyntaxError(tok.offset, expected, found)

    # -- grammar

    def parse(self) -> Expr:
        expr = self.logical_or()
        if self.peek().kind != "eof":
            raise self.error("operator or end of input")
        return expr

    def logical_or(self) -> Expr:
        expr = self.logical_and()
        while self.match("||"):
            expr = Binary("||", expr, self.logical_and())
        return expr

    def logical_and(self) -> Expr:
        expr = self.comparison()
        while self.match("&&"):
            expr = Binary("&&", expr, self.comparison())
        return expr

    def comparison(self) -> Expr:
        expr = self.additive()
        tok = self.match("<", "<=", ">", ">=", "==", "!=")
        if tok:
            expr = Binary(tok.text, expr, self.additive())
        return expr

    def additive(self) -> Expr:
        expr = self.multiplicative()
        while tok := self.match("+", "-"):
            expr = Binary(tok.text, expr, self.multiplicative())
        return expr

    def multiplicative(self) -> Expr:
        expr = self.power()
        while tok := self.match("*", "/"):
            expr = Binary(tok.text, expr, self.power())
        return expr

    def power(self) -> Expr:
        base = self.unary()
        if self.match("^"):
            return Binary("^", base, self.power())
        return base

    def unary(self) -> Expr:
        if self.match("-"):
            return Unary("neg", self.unary())
        if self.match("!"):
            return Unary("not", self.unary())
        return self.postfix()

    def postfix(self) -> Expr:
        expr = self.primary()
        while True:
            if self.match("'"):
                expr = Unary("transpose", expr)
            elif self.match("("):
                expr = Call(expr, self.arguments())
            else:
                return expr

    def arguments(self) -> tuple[Expr, ...]:
        """Comma-separated list after an already consumed opening paren."""
        args = [self.logical_or()]
        while self.match(","):
            args.append(self.logical_or())
        self.expect(")", "',' or ')'")
        return tuple(args)

    def reserved_call(self, name: str, arity: int) -> tuple[Expr, ...]:
        self.expect("(", f"'(' after {name}")
        start = self.peek()
        args = self.arguments()
        if len(args) != arity:
            raise FormulaSyntaxError(
                start.offset, f"{arity} argument(s) to {name}", f"{len(args)}"
            )
        return args

    def primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Literal(self._number(tok))
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name == "true":
                return Literal(True)
            if name == "false":
                return Literal(False)
            if name == "inv":
                return Unary("inv", self.reserved_call(name, 1)[0])
            if name == "delta":
                return Delta(self.reserved_call(name, 1)[0])
            if name == "cross":
                return Call(Var("cross"), self.reserved_call(name, 2))
            return Var(name)
        if self.match("("):
            expr = self.logical_or()
            self.expect(")", "')'")
            return expr
        if self.match("["):
            items = [self.logical_or()]
            while self.match(","):
                items.append(self.logical_or())
            self.expect("]", "',' or ']'")
            return Array(tuple(items))
        raise self.error("expression")

    @staticmethod
    def _number(tok: Token) -> int | float:
        text = tok.text
        if any(c in text for c in ".eE"):
            return float(text)
        value = int(text)
        if value > INT64_MAX:
            raise FormulaSyntaxError(tok.offset, "integer within 64-bit range", text)
        return value


def parse(text: str) -> Expr:
    """Parse formula text into an expression tree."""
    return Parser(text).parse()


def is_identifier(name: str) -> bool:
    return bool(re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name)) and name not in RESERVED
