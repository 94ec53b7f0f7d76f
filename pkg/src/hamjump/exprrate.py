"""Safe arithmetic grammar for user-defined jump rates.

A rate expression is a function of the two scalars ``x_norm`` = |x| and
``v_norm`` = |v| built from constants, ``+``, ``-``, ``*``, ``sin`` and
``cos``.  The grammar is deliberately tiny: every expression admits
rigorous interval bounds over |x|, |v| in [0, inf), which is what lets
the library certify that a user rate really is bounded away from zero,
bounded above (the thinning majorant), and Lipschitz.

Bounds are computed by a forward interval pass that carries, for each
subexpression, an enclosure of its value and of its partial derivatives
with respect to x_norm and v_norm.  Since norms are 1-Lipschitz in the
underlying vectors, sup |d/d x_norm| and sup |d/d v_norm| bound the
joint Lipschitz constant in |x - x'| + |v - v'|.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_TWO_PI = 2.0 * math.pi


class RateExpressionError(ValueError):
    """The expression is outside the grammar or fails to certify."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise RateExpressionError(f"bad interval [{self.lo}, {self.hi}]")

    def __add__(self, other):
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other):
        return Interval(self.lo - other.hi, self.hi - other.lo)

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other):
        corners = [
            _mul(self.lo, other.lo),
            _mul(self.lo, other.hi),
            _mul(self.hi, other.lo),
            _mul(self.hi, other.hi),
        ]
        return Interval(min(corners), max(corners))

    def abs_sup(self) -> float:
        return max(abs(self.lo), abs(self.hi))


def _mul(a: float, b: float) -> float:
    # 0 * inf = 0: the set {a*b : a in {0}} is {0}
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


ZERO = Interval(0.0, 0.0)
UNIT = Interval(-1.0, 1.0)


def _interval_sin(iv: Interval) -> Interval:
    if not (math.isfinite(iv.lo) and math.isfinite(iv.hi)) or iv.hi - iv.lo >= _TWO_PI:
        return UNIT
    lo, hi = math.sin(iv.lo), math.sin(iv.hi)
    lo, hi = min(lo, hi), max(lo, hi)
    # peak at pi/2 + 2k pi, trough at -pi/2 + 2k pi inside [iv.lo, iv.hi]
    if math.floor((iv.hi - math.pi / 2) / _TWO_PI) >= math.ceil((iv.lo - math.pi / 2) / _TWO_PI):
        hi = 1.0
    if math.floor((iv.hi + math.pi / 2) / _TWO_PI) >= math.ceil((iv.lo + math.pi / 2) / _TWO_PI):
        lo = -1.0
    return Interval(lo, hi)


def _interval_cos(iv: Interval) -> Interval:
    return _interval_sin(Interval(iv.lo + math.pi / 2, iv.hi + math.pi / 2))


@dataclass(frozen=True)
class _Enclosure:
    """Value and derivative enclosures of a subexpression."""

    val: Interval
    dx: Interval
    dv: Interval

    def __add__(self, other):
        return _Enclosure(self.val + other.val, self.dx + other.dx, self.dv + other.dv)

    def __sub__(self, other):
        return _Enclosure(self.val - other.val, self.dx - other.dx, self.dv - other.dv)

    def __neg__(self):
        return _Enclosure(-self.val, -self.dx, -self.dv)

    def __mul__(self, other):
        return _Enclosure(
            self.val * other.val,
            self.dx * other.val + self.val * other.dx,
            self.dv * other.val + self.val * other.dv,
        )


_HALF_LINE = Interval(0.0, math.inf)


@dataclass(frozen=True)
class CompiledRate:
    """A certified rate expression.

    ``evaluate`` is vectorized over numpy arrays of |x| and |v|;
    ``lambda1``/``lambda2`` enclose the range and ``lambda_lip`` bounds
    the Lipschitz constant.  Interval bounds may be wider than the true
    range, which is the safe direction for both the thinning majorant
    and the contraction constants.
    """

    source: str
    evaluate: Callable
    lambda1: float
    lambda2: float
    lambda_lip: float


def compile_rate_expression(source: str) -> CompiledRate:
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise RateExpressionError(f"cannot parse rate expression: {exc}") from exc
    enc = _enclose(tree.body)
    evaluate = _build_evaluator(tree.body)
    lam_lip = max(enc.dx.abs_sup(), enc.dv.abs_sup())
    return CompiledRate(source, evaluate, enc.val.lo, enc.val.hi, lam_lip)


def _enclose(node: ast.AST) -> _Enclosure:
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise RateExpressionError(f"non-numeric constant {node.value!r}")
        c = float(node.value)
        return _Enclosure(Interval(c, c), ZERO, ZERO)
    if isinstance(node, ast.Name):
        if node.id == "x_norm":
            return _Enclosure(_HALF_LINE, Interval(1.0, 1.0), ZERO)
        if node.id == "v_norm":
            return _Enclosure(_HALF_LINE, ZERO, Interval(1.0, 1.0))
        raise RateExpressionError(f"unknown name {node.id!r}; use x_norm, v_norm")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _enclose(node.operand)
        return -inner if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
        left, right = _enclose(node.left), _enclose(node.right)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        return left * right
    if isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in ("sin", "cos")):
            raise RateExpressionError("only sin(...) and cos(...) calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise RateExpressionError(f"{node.func.id} takes exactly one argument")
        inner = _enclose(node.args[0])
        if node.func.id == "sin":
            val = _interval_sin(inner.val)
            deriv = _interval_cos(inner.val)
        else:
            val = _interval_cos(inner.val)
            deriv = -_interval_sin(inner.val)
        return _Enclosure(val, deriv * inner.dx, deriv * inner.dv)
    raise RateExpressionError(
        f"unsupported syntax {ast.dump(node)}; the grammar allows numbers, "
        "x_norm, v_norm, + - *, sin, cos"
    )


def _build_evaluator(node: ast.AST) -> Callable:
    code = compile(ast.fix_missing_locations(ast.Expression(node)), "<rate>", "eval")
    env = {"sin": np.sin, "cos": np.cos, "__builtins__": {}}

    def evaluate(x_norm, v_norm):
        return eval(code, env, {"x_norm": x_norm, "v_norm": v_norm})

    return evaluate
