"""
Field expression mini-language.

Initial factors, background data and cutoffs are given as short formulas in
the node coordinates, e.g. ``1 + 0.3*sin(2*pi*x1)``. The grammar is:

- numbers (``2``, ``0.5``, ``1e-3``)
- operators ``+ - * / ^ **`` and parentheses (``^`` means power)
- functions ``sin``, ``cos``, ``exp`` and the constant ``pi``
- coordinates ``x1`` .. ``xn`` for an n-dimensional grid

Text is tokenized against this whitelist before sympy sees it, so nothing
outside the grammar is ever evaluated.
"""

import logging
import re
from dataclasses import dataclass
from tokenize import TokenError
from typing import Any, Callable, Optional

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from core.grid import coordinates
from core.logger import clip, setup_logger
from models.grid import GridSpec, ScalarField

__all__ = [
    "ExpressionError",
    "FieldExpression",
    "parse_field_expression",
    "evaluate_expression",
]

_logger: Optional[logging.Logger] = None

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()])"
    r")"
)
_FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "pi": sp.pi}
_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def _get_logger() -> logging.Logger:
    """Get or create the module logger."""
    global _logger
    if _logger is None:
        _logger = setup_logger("Expression")
    return _logger


class ExpressionError(Exception):
    """
    Exception raised for field expressions outside the grammar.

    The message names the offending token or the coordinate that does not
    exist in the grid dimension.
    """

    pass


@dataclass(frozen=True)
class FieldExpression:
    """A parsed expression together with its vectorized evaluator."""

    text: str
    dimension: int
    expr: sp.Expr
    function: Callable[..., Any]

    def __call__(self, grid: GridSpec) -> ScalarField:
        return evaluate_expression(self, grid)


def _coordinate_symbols(n: int) -> tuple[sp.Symbol, ...]:
    return tuple(sp.Symbol(f"x{k}", real=True) for k in range(1, n + 1))


def _check_tokens(text: str, allowed: set[str]) -> None:
    """Raise on the first token outside the whitelist."""
    position = 0
    stripped = text.rstrip()
    while position < len(stripped):
        match = _TOKEN.match(stripped, position)
        if match is None or match.end() == position:
            offending = stripped[position:].lstrip()[:1]
            raise ExpressionError(f"unsupported character {offending!r} in expression {clip(text)!r}")
        name = match.group("name")
        if name is not None and name not in allowed:
            raise ExpressionError(f"unsupported token {name!r} in expression {clip(text)!r}")
        position = match.end()


def parse_field_expression(text: str, n: int) -> FieldExpression:
    """
    Parse a field expression for an n-dimensional grid.

    Args:
        text: Expression source
        n: Grid dimension; coordinates x1..xn are available

    Returns:
        FieldExpression: Parsed expression with a numpy evaluator

    Raises:
        ExpressionError: On tokens outside the grammar or malformed input.
    """
    if not text or not text.strip():
        raise ExpressionError("empty expression")
    symbols = _coordinate_symbols(n)
    names = {str(s): s for s in symbols}
    _check_tokens(text, set(names) | set(_FUNCTIONS))
    try:
        expr = parse_expr(
            text,
            local_dict={**names, **_FUNCTIONS},
            global_dict={"Integer": sp.Integer, "Float": sp.Float, "Rational": sp.Rational, "Symbol": sp.Symbol},
            transformations=_TRANSFORMATIONS,
        )
    except (SyntaxError, TokenError, TypeError, ValueError, sp.SympifyError) as e:
        raise ExpressionError(f"malformed expression {clip(text)!r}: {e}") from e
    if not isinstance(expr, sp.Expr):
        raise ExpressionError(f"expression {clip(text)!r} is not a scalar formula")
    function = sp.lambdify(symbols, expr, "numpy")
    return FieldExpression(text=text, dimension=n, expr=expr, function=function)


def evaluate_expression(expression: "FieldExpression | str", grid: GridSpec) -> ScalarField:
    """
    Evaluate an expression at every grid node.

    Constant expressions are broadcast to the full grid.

    Raises:
        ExpressionError: If the expression does not fit the grid dimension or
            produces non-real or non-finite values.
    """
    if isinstance(expression, str):
        expression = parse_field_expression(expression, grid.dimension)
    elif expression.dimension != grid.dimension:
        raise ExpressionError(
            f"expression was parsed for n={expression.dimension}, grid has n={grid.dimension}"
        )
    with np.errstate(all="ignore"):
        raw = np.asarray(expression.function(*coordinates(grid)))
    if np.iscomplexobj(raw):
        raise ExpressionError(f"expression {clip(expression.text)!r} takes complex values")
    values = np.broadcast_to(raw.astype(np.float64), grid.shape)
    if not np.all(np.isfinite(values)):
        raise ExpressionError(f"expression {clip(expression.text)!r} is not finite on the grid")
    _get_logger().debug(f"Evaluated {clip(expression.text)!r} on {'x'.join(map(str, grid.shape))} nodes")
    return ScalarField(grid, values)
