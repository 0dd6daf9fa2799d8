"""A small arithmetic expression language for function-valued config fields.

Expressions may use numeric constants, the variables ``t`` and ``s``, the
operators ``+ - * /`` and ``^`` (or ``**``) and the functions ``exp``, ``sin``,
``cos``, ``log`` and ``sqrt``.  They compile to vectorized numpy callables.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError

_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "log": np.log, "sqrt": np.sqrt}
_CONSTS = {"pi": np.pi, "e": np.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _check(node, variables, text):
    if isinstance(node, ast.Expression):
        return _check(node.body, variables, text)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name):
        if node.id in variables or node.id in _CONSTS:
            return
        raise ParseError(f"unknown name {node.id!r} in {text!r}", column=node.col_offset + 1)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, variables, text)
        _check(node.right, variables, text)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check(node.operand, variables, text)
        return
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in _FUNCS
        and len(node.args) == 1
        and not node.keywords
    ):
        _check(node.args[0], variables, text)
        return
    raise ParseError(f"unsupported construct in {text!r}", column=getattr(node, "col_offset", 0) + 1)


def _eval(node, env):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    return _FUNCS[node.func.id](_eval(node.args[0], env))


@dataclass(frozen=True)
class Expression:
    """Compiled expression in the variables ``t`` and ``s``.

    Calling with one argument binds ``t``; with two binds ``(t, s)``.
    A one-argument call on an expression written in ``s`` binds ``s``.
    """

    text: str
    _tree: ast.Expression = field(repr=False, compare=False)

    @property
    def variables(self):
        return {n.id for n in ast.walk(self._tree) if isinstance(n, ast.Name) and n.id in ("t", "s")}

    def __call__(self, t, s=None):
        t = np.asarray(t, dtype=float)
        if s is None:
            env = {"t": t, "s": t}
        else:
            env = {"t": t, "s": np.asarray(s, dtype=float)}
        with np.errstate(all="ignore"):
            out = _eval(self._tree.body, env)
        shape = np.broadcast(*env.values()).shape
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)

    def __str__(self):
        return self.text


def parse_expression(text, variables=("t", "s")):
    """Compile ``text`` into an :class:`Expression`.

    Raises
    ------
    ParseError
        On syntax errors or disallowed constructs; ``column`` is 1-based.
    """
    src = str(text).strip().replace("^", "**")
    if not src:
        raise ParseError("empty expression")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse expression {text!r}: {exc.msg}", column=exc.offset) from None
    _check(tree, set(variables), text)
    return Expression(str(text).strip(), tree)
