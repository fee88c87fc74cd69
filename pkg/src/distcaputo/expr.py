"""Tiny arithmetic grammar for coefficient and weight expressions.

Expressions such as ``"sin(pi*x/L)*(1+t)"`` are parsed with :mod:`ast` and
checked against a whitelist; nothing is ever passed to :func:`eval`.
Supported: numbers, ``+ - * / ^`` (``**`` is accepted as a synonym for
``^``), unary minus, parentheses, the functions in :data:`FUNCTIONS`, the
constants ``pi`` and ``e`` and any caller-declared names.
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ParseError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
}

CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class Expression:
    """A compiled expression; call it with keyword arrays for its variables."""

    def __init__(self, source, variables, constants=None):
        self.source = source
        self.variables = tuple(variables)
        self.constants = dict(CONSTANTS)
        if constants:
            self.constants.update(constants)
        self._carets = [i for i, ch in enumerate(source) if ch == "^"]
        text = source.replace("^", "**")
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ParseError(
                f"cannot parse expression {source!r}: {exc.msg}",
                line=exc.lineno or 1,
                column=self._orig_column(exc.offset or 1),
            ) from None
        self._tree = tree.body
        self._check(self._tree)

    def _orig_column(self, col):
        # map a column of the '^'->'**' rewritten text back to the source
        shift = 0
        for pos in self._carets:
            if pos + shift + 1 < col:
                shift += 1
        return col - shift

    def _fail(self, node, msg):
        raise ParseError(
            f"{msg} in expression {self.source!r}",
            line=getattr(node, "lineno", 1),
            column=self._orig_column(getattr(node, "col_offset", 0) + 1),
        )

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                self._fail(node, "unsupported operator")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                self._fail(node, "unsupported unary operator")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                self._fail(node, "unknown function")
            if len(node.args) != 1 or node.keywords:
                self._fail(node, "functions take exactly one argument")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in self.constants:
                self._fail(node, f"unknown name {node.id!r}")
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                self._fail(node, "only numeric literals are allowed")
        else:
            self._fail(node, f"unsupported syntax {type(node).__name__}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Call):
            return FUNCTIONS[node.func.id](self._eval(node.args[0], env))
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            return self.constants[node.id]
        return float(node.value)

    def __call__(self, **values):
        missing = [v for v in self.variables if v not in values]
        if missing:
            raise TypeError(f"missing variables {missing} for {self.source!r}")
        env = {k: np.asarray(v, dtype=float) for k, v in values.items()}
        shape = np.broadcast_shapes(*(a.shape for a in env.values())) if env else ()
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        return np.array(np.broadcast_to(np.asarray(out, dtype=float), shape))

    def is_constant(self):
        return not any(
            isinstance(n, ast.Name) and n.id in self.variables for n in ast.walk(self._tree)
        )

    def uses(self, name):
        """True if the variable ``name`` occurs in the expression."""
        return any(isinstance(n, ast.Name) and n.id == name for n in ast.walk(self._tree))

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_expression(source, variables=("x", "t"), constants=None):
    if isinstance(source, (int, float)):
        source = repr(float(source))
    if not isinstance(source, str):
        raise ParseError(f"expression must be a string, got {type(source).__name__}")
    return Expression(source, variables, constants)
