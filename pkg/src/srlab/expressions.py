"""Minimal arithmetic expression language over chart coordinates (x, y, z).

Grammar (and nothing more, by design): binary ``+ - * / ^``, unary minus,
functions ``sin``, ``cos``, ``exp``, constants ``pi`` and ``sqrt2pi``,
numeric literals, parentheses.  ``^`` is right-associative exponentiation.
Evaluation is vectorized over numpy arrays.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import ExpressionError

CONSTANTS = {"pi": math.pi, "sqrt2pi": math.sqrt(2.0 * math.pi)}
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
VARIABLES = ("x", "y", "z")

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str, line: int = 1):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None or m.end() == pos:
            # skip pure whitespace tail
            if src[pos:].strip() == "":
                break
            raise ExpressionError(
                f"unexpected character {src[pos]!r}", line=line, column=pos + 1
            )
        if m.group("num") is not None:
            tokens.append(("num", float(m.group(0)), m.start("num") + 1))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name"), m.start("name") + 1))
        else:
            tokens.append(("op", m.group("op"), m.start("op") + 1))
        pos = m.end()
    tokens.append(("end", None, len(src) + 1))
    return tokens


class _Parser:
    """Recursive-descent parser producing a tiny AST of tuples."""

    def __init__(self, tokens, line):
        self.tokens = tokens
        self.i = 0
        self.line = line

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, col = self.next()
        if kind != "op" or val != op:
            raise ExpressionError(
                f"expected {op!r}, found {val!r}", line=self.line, column=col
            )

    def parse(self):
        node = self.sum()
        kind, val, col = self.peek()
        if kind != "end":
            raise ExpressionError(
                f"trailing input starting at {val!r}", line=self.line, column=col
            )
        return node

    def sum(self):
        node = self.product()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.product()
                node = (val, node, rhs)
            else:
                return node

    def product(self):
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.unary()
                node = (val, node, rhs)
            else:
                return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return ("neg", self.unary())
        if kind == "op" and val == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            # right-associative; exponent may carry a unary sign
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, val, col = self.next()
        if kind == "num":
            return ("const", val)
        if kind == "name":
            if val in VARIABLES:
                return ("var", val)
            if val in CONSTANTS:
                return ("const", CONSTANTS[val])
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.sum()
                self.expect_op(")")
                return ("call", val, arg)
            raise ExpressionError(
                f"unknown name {val!r} (allowed: x, y, z, pi, sqrt2pi, sin, cos, exp)",
                line=self.line,
                column=col,
            )
        if kind == "op" and val == "(":
            node = self.sum()
            self.expect_op(")")
            return node
        raise ExpressionError(
            f"unexpected token {val!r}", line=self.line, column=col
        )


def _eval(node, env):
    op = node[0]
    if op == "const":
        return node[1]
    if op == "var":
        return env[node[1]]
    if op == "neg":
        return -_eval(node[1], env)
    if op == "call":
        return FUNCTIONS[node[1]](_eval(node[2], env))
    a = _eval(node[1], env)
    b = _eval(node[2], env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "^":
        return a ** b
    raise AssertionError(f"corrupt AST node {node!r}")


def _free_variables(node, acc):
    if node[0] == "var":
        acc.add(node[1])
    elif node[0] in ("neg",):
        _free_variables(node[1], acc)
    elif node[0] == "call":
        _free_variables(node[2], acc)
    elif node[0] in "+-*/^":
        _free_variables(node[1], acc)
        _free_variables(node[2], acc)
    return acc


class Expression:
    """A parsed expression; callable on scalars or broadcastable arrays.

    Evaluating on arrays returns an array with the broadcast shape of the
    inputs; constant expressions are expanded to that shape.
    """

    def __init__(self, source: str, line: int = 1):
        self.source = source
        self._ast = _Parser(_tokenize(source, line), line).parse()
        self.free_variables = frozenset(_free_variables(self._ast, set()))

    def __call__(self, x, y=0.0, z=0.0):
        out = _eval(self._ast, {"x": x, "y": y, "z": z})
        if np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(z) == 0:
            return float(out)
        shape = np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(z))
        if np.ndim(out) == 0:
            return np.full(shape, float(out))
        return np.asarray(out, dtype=float)

    def __repr__(self):
        return f"Expression({self.source!r})"


def parse_expression(source: str, line: int = 1) -> Expression:
    """Parse ``source``; raise :class:`ExpressionError` with position on failure."""
    return Expression(source, line=line)


def parse_constant(source: str, line: int = 1) -> float:
    """Parse an expression that must not reference x, y, z."""
    expr = parse_expression(source, line=line)
    if expr.free_variables:
        raise ExpressionError(
            f"expected a constant, got a coordinate-dependent expression {source!r}",
            line=line,
            column=1,
        )
    return float(expr(0.0))
