"""Tiny arithmetic expression language for config-defined games.

Expressions are parsed once at load time into plain Python code objects
restricted to arithmetic, a whitelist of elementwise functions, and the
declared variable names.  Evaluation broadcasts over numpy arrays, so the
same compiled expression serves scalar trajectory stepping and vectorized
grid sweeps.

Grammar: numbers, declared names, + - * / % **, unary +/-, and calls to
sin cos tan tanh exp log sqrt abs sign min max.  `min`/`max` are
elementwise with two or more arguments.
"""

from __future__ import annotations

import ast
import functools

import numpy as np

from .errors import ConfigError

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Constant,
    ast.Load,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Mod,
    ast.Pow,
    ast.UAdd,
    ast.USub,
)


def _reduce_elementwise(fn, *args):
    if len(args) < 2:
        raise ConfigError("min/max need at least two arguments")
    return functools.reduce(fn, args)


_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,
    "min": lambda *a: _reduce_elementwise(np.minimum, *a),
    "max": lambda *a: _reduce_elementwise(np.maximum, *a),
}

_CONSTANTS = {"pi": np.pi, "e": np.e}


def compile_expression(source: str, variables):
    """Compile `source` into `fn(env) -> value` over the named variables."""
    if not isinstance(source, str) or not source.strip():
        raise ConfigError("expression must be a nonempty string")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {source!r}: {exc}") from None

    allowed_names = set(variables) | set(_FUNCTIONS) | set(_CONSTANTS)
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(
                f"expression {source!r} uses unsupported syntax: {type(node).__name__}"
            )
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"expression {source!r} has a non-numeric constant")
        if isinstance(node, ast.Name) and node.id not in allowed_names:
            raise ConfigError(f"expression {source!r} references unknown name {node.id!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ConfigError(f"expression {source!r} calls a non-whitelisted function")
            if node.keywords:
                raise ConfigError("keyword arguments are not supported in expressions")

    code = compile(tree, "<game-expression>", "eval")
    static = {"__builtins__": {}}
    static.update(_FUNCTIONS)
    static.update(_CONSTANTS)

    def evaluate(env):
        return eval(code, static, env)

    return evaluate
