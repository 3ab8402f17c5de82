"""Compilation of declarative expression strings into vectorized callables.

Measures, BV functions and Young-measure candidates can be described by
JSON documents whose numeric fields are expression strings in the
variables ``x`` (and ``y`` in 2D).  Expressions are evaluated in a
restricted numpy namespace; no builtins are exposed.
"""

from __future__ import annotations

import math

import numpy as np

_NAMESPACE = {
    "abs": np.abs,
    "sign": np.sign,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "arctan": np.arctan,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "clip": np.clip,
    "floor": np.floor,
    "where": np.where,
    "heaviside": np.heaviside,
    "pi": math.pi,
    "e": math.e,
}


class ExpressionError(ValueError):
    """Raised for malformed or disallowed expression strings."""


def compile_scalar(expr, dim):
    """Compile ``expr`` into a callable mapping nodes (M, dim) -> (M,)."""
    if isinstance(expr, (int, float)):
        const = float(expr)

        def const_fn(nodes):
            return np.full(len(nodes), const)

        return const_fn
    if not isinstance(expr, str):
        raise ExpressionError(f"expected expression string, got {type(expr)!r}")
    try:
        code = compile(expr, "<expr>", "eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {expr!r}: {exc}") from exc
    for name in code.co_names:
        if name not in _NAMESPACE and name not in ("x", "y"):
            raise ExpressionError(f"name {name!r} not allowed in {expr!r}")

    def fn(nodes):
        nodes = np.asarray(nodes, dtype=float)
        env = dict(_NAMESPACE)
        env["x"] = nodes[:, 0]
        if dim >= 2:
            env["y"] = nodes[:, 1]
        out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(nodes),)).copy()

    return fn


def compile_vector(exprs, dim):
    """Compile a list of N expressions into nodes (M, dim) -> (M, N)."""
    fns = [compile_scalar(e, dim) for e in exprs]

    def fn(nodes):
        return np.stack([f(nodes) for f in fns], axis=1)

    return fn


def compile_matrix(rows, dim):
    """Compile an N x n nested list of expressions into nodes -> (M, N, n)."""
    fns = [[compile_scalar(e, dim) for e in row] for row in rows]

    def fn(nodes):
        return np.stack(
            [np.stack([f(nodes) for f in row], axis=1) for row in fns], axis=1
        )

    return fn
