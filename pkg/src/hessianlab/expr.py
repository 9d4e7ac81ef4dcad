"""
Whitelisted coordinate expressions for right-hand sides and boundary data.

Grammar: real literals, ``+ - * /``, unary minus, parentheses, the variables
``x<i>``, ``y<i>``, ``re_z<i>`` (1-based) and ``absz2``, and the functions
``cospi2(e)`` = cos(2 pi e), ``sinpi2(e)`` = sin(2 pi e) and ``max(a, b)``.
Parsing reuses Python's expression parser and then rejects every node type
outside this list.
"""
import ast
import re

import numpy as np

from .errors import ExpressionError

DIV_FLOOR = 1e-12
_VAR = re.compile(r"^(x|y|re_z)([1-9][0-9]*)$")
_FUNCS = {"cospi2": 1, "sinpi2": 1, "max": 2}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply}


class Expression:
    """A parsed expression; call it on coordinate arrays ``(x1, y1, ...)``."""

    def __init__(self, text, tree, n_max):
        self.text = text
        self._tree = tree
        self.n_max = n_max

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __call__(self, *coords):
        if len(coords) % 2:
            raise ExpressionError("need an even number of real coordinates")
        n = len(coords) // 2
        if self.n_max > n:
            raise ExpressionError(f"expression uses z{self.n_max} but the grid has n = {n}")
        return self._eval(self._tree, coords)

    def evaluate(self, field):
        """Evaluate on every point of a grid, returning a new field."""
        vals = np.broadcast_to(self(*field.coordinates()), field.shape)
        if not np.all(np.isfinite(vals)):
            raise ExpressionError(f"{self.text!r} is not finite on the grid")
        return field.with_values(np.array(vals, dtype=float))

    def _eval(self, node, coords):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id == "absz2":
                return sum(np.asarray(c) ** 2 for c in coords)
            kind, idx = _VAR.match(node.id).groups()
            p = int(idx) - 1
            return coords[2 * p + 1] if kind == "y" else coords[2 * p]
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, coords)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.BinOp):
            left = self._eval(node.left, coords)
            right = self._eval(node.right, coords)
            if isinstance(node.op, ast.Div):
                if np.any(np.abs(right) < DIV_FLOOR):
                    raise ExpressionError("division by a value below 1e-12",
                                          node.right.col_offset)
                return np.divide(left, right)
            return _BINOPS[type(node.op)](left, right)
        # only whitelisted calls survive parsing
        args = [self._eval(a, coords) for a in node.args]
        name = node.func.id
        if name == "cospi2":
            return np.cos(2.0 * np.pi * np.asarray(args[0]))
        if name == "sinpi2":
            return np.sin(2.0 * np.pi * np.asarray(args[0]))
        return np.maximum(args[0], args[1])


def _check(node, text):
    """Reject anything outside the grammar; returns the largest z index."""
    pos = getattr(node, "col_offset", None)
    if isinstance(node, ast.Expression):
        return _check(node.body, text)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}", pos)
        return 0
    if isinstance(node, ast.Name):
        if node.id == "absz2":
            return 0
        match = _VAR.match(node.id)
        if not match:
            raise ExpressionError(f"unknown name {node.id!r}", pos)
        return int(match.group(2))
    if isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError("unsupported unary operator", pos)
        return _check(node.operand, text)
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS and not isinstance(node.op, ast.Div):
            raise ExpressionError("unsupported operator", pos)
        return max(_check(node.left, text), _check(node.right, text))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("unknown function", pos)
        if node.keywords or len(node.args) != _FUNCS[node.func.id]:
            raise ExpressionError(f"{node.func.id} takes {_FUNCS[node.func.id]} "
                                  "positional argument(s)", pos)
        return max(_check(a, text) for a in node.args)
    raise ExpressionError(f"unsupported syntax {type(node).__name__}", pos)


def parse_expression(text):
    """Parse `text` into an Expression or raise ExpressionError.

    Positions in error messages are 0-based columns into `text`.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("expression must be a non-empty string", 0)
    # '^' would silently parse as xor
    for i, ch in enumerate(text):
        if not (ch.isalnum() or ch in "_.+-*/(), \t"):
            raise ExpressionError(f"unexpected character {ch!r}", i)
    lead = len(text) - len(text.lstrip())
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"syntax error: {exc.msg}",
                              lead + (exc.offset or 1) - 1) from None
    for node in ast.walk(tree):
        if hasattr(node, "col_offset"):
            node.col_offset += lead
    n_max = _check(tree, text)
    return Expression(text, tree.body, n_max)


def field_spec(spec):
    """A number or an expression string, as a callable on coordinates."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        value = float(spec)
        return lambda *coords: np.full(np.broadcast_shapes(
            *[np.shape(c) for c in coords]), value)
    if isinstance(spec, dict) and "constant" in spec:
        return field_spec(float(spec["constant"]))
    if isinstance(spec, dict) and "expr" in spec:
        return parse_expression(spec["expr"])
    if isinstance(spec, str):
        return parse_expression(spec)
    raise ExpressionError(f"cannot read field spec {spec!r}")
