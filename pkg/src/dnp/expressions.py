"""Small, safe expression language for problem data.

Config files specify initial data, forcings, weights, and manufactured
solutions as arithmetic expressions over the variables x (and y in 2D) and t,
e.g. ``"exp(-t) * sin(pi * x)"`` or ``"where((x > 0.4) & (x < 0.6), 1, 0)"``.
Expressions are parsed once with ``ast`` against a whitelist (arithmetic,
comparisons, boolean combination of masks with & | ~, calls to a fixed set of
numpy functions) and evaluated vectorized.  Domain faults (log of a negative
number, division by zero, overflow) raise ExpressionError instead of
producing silent nan/inf data.
"""

from __future__ import annotations

import ast

import numpy as np

__all__ = ["ExpressionError", "Expression", "compile_expression"]


class ExpressionError(ValueError):
    """Parse or evaluation failure of a data expression."""


_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "expm1": np.expm1,
    "log": np.log,
    "log1p": np.log1p,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
    "clip": np.clip,
    "tanh": np.tanh,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "arctan": np.arctan,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}

_ALLOWED_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.true_divide,
    ast.Pow: np.power,
    ast.Mod: np.mod,
    ast.BitAnd: np.logical_and,
    ast.BitOr: np.logical_or,
}

_ALLOWED_UNARY = {
    ast.USub: np.negative,
    ast.UAdd: lambda v: v,
    ast.Invert: np.logical_not,
}

_ALLOWED_CMP = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
    ast.Eq: np.equal,
    ast.NotEq: np.not_equal,
}


class Expression:
    """Compiled expression; call with keyword variables (arrays or scalars)."""

    def __init__(self, source, variables):
        self.source = source
        self.variables = tuple(variables)
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"syntax error in expression {source!r}: {exc}") from exc
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ExpressionError(f"only numeric constants allowed, got {node.value!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in _CONSTANTS:
                raise ExpressionError(
                    f"unknown name {node.id!r} (variables: {', '.join(self.variables)})")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _ALLOWED_BINOPS:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _ALLOWED_UNARY:
                raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Compare):
            if len(node.ops) != 1 or type(node.ops[0]) not in _ALLOWED_CMP:
                raise ExpressionError("only simple binary comparisons are allowed")
            self._check(node.left)
            self._check(node.comparators[0])
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ExpressionError("only calls to the built-in function set are allowed")
            if node.keywords:
                raise ExpressionError("keyword arguments are not allowed")
            for arg in node.args:
                self._check(arg)
        else:
            raise ExpressionError(f"syntax element {type(node).__name__} not allowed")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id] if node.id in env else _CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            return _ALLOWED_BINOPS[type(node.op)](self._eval(node.left, env),
                                                  self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _ALLOWED_UNARY[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Compare):
            return _ALLOWED_CMP[type(node.ops[0])](self._eval(node.left, env),
                                                   self._eval(node.comparators[0], env))
        if isinstance(node, ast.Call):
            args = [self._eval(a, env) for a in node.args]
            return _FUNCTIONS[node.func.id](*args)
        raise ExpressionError(f"unexpected node {type(node).__name__}")  # pragma: no cover

    def __call__(self, **variables):
        env = {}
        shape = None
        for name in self.variables:
            if name not in variables:
                raise ExpressionError(f"missing variable {name!r} for {self.source!r}")
            val = np.asarray(variables[name], dtype=float)
            env[name] = val
            if val.ndim:
                shape = np.broadcast_shapes(shape, val.shape) if shape else val.shape
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            try:
                out = self._eval(self._tree, env)
            except FloatingPointError as exc:
                raise ExpressionError(
                    f"domain fault evaluating {self.source!r}: {exc}") from exc
        out = np.asarray(out, dtype=float)
        if shape is not None:
            out = np.broadcast_to(out, shape).copy()
        return out

    def __repr__(self):
        return f"Expression({self.source!r}, variables={self.variables})"


def compile_expression(source, variables=("x", "t")):
    """Compile ``source`` against the given variable names (unused variables
    may be passed at call time and are ignored by the expression)."""
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError("expression must be a non-empty string")
    return Expression(source, variables)
