"""Recursive-descent parser for the specification surface syntax.

Grammar (whitespace-insensitive):

    spec  := or
    or    := and ("||" and)*
    and   := unary ("&&" unary)*
    unary := "X[" INT "]" unary | "F[" INT "]" unary | "G[" INT "]" unary
           | "U[" INT "](" spec "," spec ")"
           | "!" unary | "(" spec ")" | IDENT | "true" | "false"

INT is a nonnegative decimal; IDENT matches [A-Za-z_][A-Za-z0-9_]*. The
operator heads X, F, G, U act as operators only when immediately followed
by "["; otherwise they are ordinary atom names.
"""

from __future__ import annotations

import re

from .formula import (
    And,
    Atom,
    Always,
    Eventually,
    FalseFormula,
    Formula,
    Next,
    Not,
    Or,
    SpecError,
    TrueFormula,
    Until,
    check_bindings,
)


class SpecSyntaxError(SpecError):
    def __init__(self, message: str, line: int, col: int):
        self.line = line
        self.col = col
        super().__init__(f"{message} (line {line}, column {col})")


_TOKEN_RE = re.compile(
    r"(?P<WS>\s+)"
    r"|(?P<AND>&&)"
    r"|(?P<OR>\|\|)"
    r"|(?P<NOT>!)"
    r"|(?P<LBRACK>\[)"
    r"|(?P<RBRACK>\])"
    r"|(?P<LPAREN>\()"
    r"|(?P<RPAREN>\))"
    r"|(?P<COMMA>,)"
    r"|(?P<INT>\d+)"
    r"|(?P<IDENT>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<BAD>.)"
)

_OPERATOR_HEADS = {"X": Next, "F": Eventually, "G": Always}


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str):
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "WS":
            line += m.group().count("\n")
            if "\n" in m.group():
                line_start = m.start() + m.group().rindex("\n") + 1
            continue
        col = m.start() - line_start + 1
        if kind == "BAD":
            raise SpecSyntaxError(f"unexpected character {m.group()!r}", line, col)
        tokens.append(_Token(kind, m.group(), line, col))
    tokens.append(_Token("EOF", "", line, len(text) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise SpecSyntaxError(
                f"expected {what}, found {tok.text or 'end of input'!r}", tok.line, tok.col
            )
        return self.advance()

    def parse(self) -> Formula:
        node = self.parse_or()
        tok = self.peek()
        if tok.kind != "EOF":
            raise SpecSyntaxError(f"unexpected trailing input {tok.text!r}", tok.line, tok.col)
        return node

    def parse_or(self) -> Formula:
        parts = [self.parse_and()]
        while self.peek().kind == "OR":
            self.advance()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else Or(tuple(parts), pos=_pos(parts[0]))

    def parse_and(self) -> Formula:
        parts = [self.parse_unary()]
        while self.peek().kind == "AND":
            self.advance()
            parts.append(self.parse_unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts), pos=_pos(parts[0]))

    def parse_horizon(self) -> int:
        self.expect("LBRACK", "'['")
        tok = self.peek()
        if tok.kind != "INT":
            raise SpecSyntaxError(
                "horizon must be a nonnegative decimal integer", tok.line, tok.col
            )
        self.advance()
        self.expect("RBRACK", "']'")
        return int(tok.text)

    def parse_unary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "NOT":
            self.advance()
            return Not(self.parse_unary(), pos=(tok.line, tok.col))
        if tok.kind == "LPAREN":
            self.advance()
            node = self.parse_or()
            self.expect("RPAREN", "')'")
            return node
        if tok.kind == "IDENT":
            name = tok.text
            if name == "true":
                self.advance()
                return TrueFormula(pos=(tok.line, tok.col))
            if name == "false":
                self.advance()
                return FalseFormula(pos=(tok.line, tok.col))
            followed_by_bracket = self.tokens[self.i + 1].kind == "LBRACK"
            if name in _OPERATOR_HEADS and followed_by_bracket:
                self.advance()
                k = self.parse_horizon()
                child = self.parse_unary()
                return _OPERATOR_HEADS[name](k, child, pos=(tok.line, tok.col))
            if name == "U" and followed_by_bracket:
                self.advance()
                k = self.parse_horizon()
                self.expect("LPAREN", "'(' opening the until arguments")
                left = self.parse_or()
                self.expect("COMMA", "',' between until arguments")
                right = self.parse_or()
                self.expect("RPAREN", "')' closing the until arguments")
                return Until(k, left, right, pos=(tok.line, tok.col))
            self.advance()
            return Atom(name, pos=(tok.line, tok.col))
        raise SpecSyntaxError(
            f"expected a formula, found {tok.text or 'end of input'!r}", tok.line, tok.col
        )


def _pos(node: Formula):
    return getattr(node, "pos", None)


def parse_spec(text: str, bindings: dict | None = None, state_dim: int | None = None) -> Formula:
    """Parse `text`; when `bindings` is given, also resolve every atom name.

    Raises SpecSyntaxError with position info on malformed input and
    UnboundAtomError for atoms missing from the binding table.
    """
    ast = _Parser(text).parse()
    if bindings is not None:
        check_bindings(ast, bindings, state_dim=state_dim)
    return ast
