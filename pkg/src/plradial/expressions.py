"""Mini arithmetic language for radial coefficients and nonlinearities.

Sources like ``"(1+r)^(-4)"`` or ``"u1^0.5*u2^0.5"`` are parsed once into an
immutable tree and evaluated many times, on floats or elementwise on numpy
arrays.  The grammar:

    expr    := term (('+'|'-') term)*
    term    := factor (('*'|'/') factor)*
    factor  := unary ('^' factor)?          # '^' binds to the right
    unary   := '-' unary | primary
    primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

Known functions: exp, log, sqrt, abs (one argument) and min, max (two or
more).  Evaluation is pure; domain violations (log of a nonpositive value,
division by zero, fractional power of a negative base) raise DomainError
naming the offending subtree.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expression",
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "DomainError",
    "ValidationReport",
    "parse",
    "evaluate",
    "to_source",
    "validate_nonlinearity",
]

Value = Union[float, np.ndarray]

_UNARY_FUNCTIONS = ("exp", "log", "sqrt", "abs")
_VARIADIC_FUNCTIONS = ("min", "max")

ORIGIN_TOLERANCE = 1e-12
_VIOLATION_CAP = 100


class ExpressionError(Exception):
    """Base class for failures in the expression language."""


class ExpressionSyntaxError(ExpressionError):
    """Malformed source text; carries the character offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownIdentifierError(ExpressionError):
    """A name that is neither a declared variable nor a known function."""


class ArityError(ExpressionError):
    """A function called with the wrong number of arguments."""


class DomainError(ExpressionError):
    """Evaluation left the real domain."""

    def __init__(self, message: str, node: "Node"):
        super().__init__(f"{message} in '{to_source(node)}'")
        self.node = node


@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Negate:
    operand: "Node"


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Node", ...]


Node = Union[Number, Variable, Negate, BinaryOp, Call]


@dataclass(frozen=True)
class Expression:
    """A parsed source string together with its declared variable set."""

    root: Node
    variables: tuple[str, ...]
    source: str

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        return evaluate(self, bindings)

    def __str__(self) -> str:
        return to_source(self)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_NUMBER = re.compile(r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_TOKEN_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        m = _TOKEN_NUMBER.match(source, i)
        if m:
            tokens.append(("number", m.group(), i))
            i = m.end()
            continue
        m = _TOKEN_NAME.match(source, i)
        if m:
            tokens.append(("name", m.group(), i))
            i = m.end()
            continue
        if ch in "+-*/^(),":
            tokens.append(("op", ch, i))
            i += 1
            continue
        raise ExpressionSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens, variables: frozenset[str], source: str):
        self.tokens = tokens
        self.pos = 0
        self.variables = variables
        self.source = source

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def match_op(self, *ops: str):
        kind, text, _ = self.peek()
        if kind == "op" and text in ops:
            return self.advance()
        return None

    def expect_op(self, op: str):
        kind, text, offset = self.peek()
        if kind != "op" or text != op:
            raise ExpressionSyntaxError(f"expected {op!r}", offset)
        return self.advance()

    def expression(self) -> Node:
        node = self.term()
        while True:
            tok = self.match_op("+", "-")
            if tok is None:
                return node
            node = BinaryOp(tok[1], node, self.term())

    def term(self) -> Node:
        node = self.factor()
        while True:
            tok = self.match_op("*", "/")
            if tok is None:
                return node
            node = BinaryOp(tok[1], node, self.factor())

    def factor(self) -> Node:
        node = self.unary()
        if self.match_op("^"):
            return BinaryOp("^", node, self.factor())
        return node

    def unary(self) -> Node:
        if self.match_op("-"):
            return Negate(self.unary())
        return self.primary()

    def primary(self) -> Node:
        kind, text, offset = self.advance()
        if kind == "number":
            return Number(float(text))
        if kind == "name":
            if self.match_op("("):
                return self.call(text, offset)
            if text not in self.variables:
                raise UnknownIdentifierError(
                    f"undeclared variable {text!r} (offset {offset})"
                )
            return Variable(text)
        if kind == "op" and text == "(":
            node = self.expression()
            self.expect_op(")")
            return node
        raise ExpressionSyntaxError("expected a value", offset)

    def call(self, func: str, offset: int) -> Node:
        if func not in _UNARY_FUNCTIONS and func not in _VARIADIC_FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {func!r} (offset {offset})")
        args = [self.expression()]
        while self.match_op(","):
            args.append(self.expression())
        self.expect_op(")")
        if func in _UNARY_FUNCTIONS and len(args) != 1:
            raise ArityError(f"{func} takes exactly 1 argument, got {len(args)}")
        if func in _VARIADIC_FUNCTIONS and len(args) < 2:
            raise ArityError(f"{func} takes at least 2 arguments, got {len(args)}")
        return Call(func, tuple(args))


def parse(source: str, variables: Sequence[str]) -> Expression:
    """Parse ``source`` over the declared variable names."""
    if not source or not source.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    names = tuple(variables)
    if len(set(names)) != len(names):
        raise ValueError("variable names must be distinct")
    parser = _Parser(_tokenize(source), frozenset(names), source)
    root = parser.expression()
    kind, _, offset = parser.peek()
    if kind != "end":
        raise ExpressionSyntaxError("trailing input", offset)
    return Expression(root=root, variables=names, source=source)


# ---------------------------------------------------------------------------
# evaluation

def evaluate(expr: Expression, bindings: Mapping[str, Value]) -> Value:
    """Evaluate over real numbers; array bindings evaluate elementwise.

    Overflow is allowed to produce inf (callers check finiteness where it
    matters); genuine domain violations raise DomainError.
    """
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        result = _eval(expr.root, bindings)
    if isinstance(result, np.ndarray):
        return result
    return float(result)


def _eval(node: Node, bindings: Mapping[str, Value]):
    if isinstance(node, Number):
        return node.value
    if isinstance(node, Variable):
        try:
            return bindings[node.name]
        except KeyError:
            raise UnknownIdentifierError(f"no binding for variable {node.name!r}") from None
    if isinstance(node, Negate):
        return -_eval(node.operand, bindings)
    if isinstance(node, BinaryOp):
        left = _eval(node.left, bindings)
        right = _eval(node.right, bindings)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            if np.any(right == 0):
                raise DomainError("division by zero", node)
            return left / right
        return _power(left, right, node)
    args = [_eval(a, bindings) for a in node.args]
    if node.func == "exp":
        return np.exp(args[0])
    if node.func == "log":
        if np.any(args[0] <= 0):
            raise DomainError("log of a nonpositive value", node)
        return np.log(args[0])
    if node.func == "sqrt":
        if np.any(args[0] < 0):
            raise DomainError("sqrt of a negative value", node)
        return np.sqrt(args[0])
    if node.func == "abs":
        return np.abs(args[0])
    if node.func == "min":
        out = args[0]
        for a in args[1:]:
            out = np.minimum(out, a)
        return out
    out = args[0]
    for a in args[1:]:
        out = np.maximum(out, a)
    return out


def _power(base, exponent, node: BinaryOp):
    if np.any((base == 0) & (exponent < 0)):
        raise DomainError("zero raised to a negative power", node)
    if np.any(base < 0) and not np.all(exponent == np.floor(exponent)):
        raise DomainError("negative base with a non-integer exponent", node)
    return np.power(base, exponent)


# ---------------------------------------------------------------------------
# printing

_PREC_ADD = 10
_PREC_MUL = 20
_PREC_NEG = 25
_PREC_POW = 30
_PREC_ATOM = 100


def to_source(expr: Union[Expression, Node]) -> str:
    """Render a tree back to source; the result reparses to the same tree."""
    node = expr.root if isinstance(expr, Expression) else expr
    text, _ = _fmt(node)
    return text


def _fmt(node: Node) -> tuple[str, int]:
    if isinstance(node, Number):
        return repr(float(node.value)), _PREC_ATOM
    if isinstance(node, Variable):
        return node.name, _PREC_ATOM
    if isinstance(node, Call):
        args = ", ".join(_fmt(a)[0] for a in node.args)
        return f"{node.func}({args})", _PREC_ATOM
    if isinstance(node, Negate):
        inner, prec = _fmt(node.operand)
        if prec < _PREC_ATOM and not isinstance(node.operand, Negate):
            inner = f"({inner})"
        return f"-{inner}", _PREC_NEG
    left, lp = _fmt(node.left)
    right, rp = _fmt(node.right)
    if node.op in "+-":
        own = _PREC_ADD
        if lp < own:
            left = f"({left})"
        if rp <= own:
            right = f"({right})"
    elif node.op in "*/":
        own = _PREC_MUL
        if lp < own:
            left = f"({left})"
        if rp <= own:
            right = f"({right})"
    else:
        own = _PREC_POW
        if lp <= own:
            left = f"({left})"
        if rp < own:
            right = f"({right})"
    return f"{left} {node.op} {right}", own


# ---------------------------------------------------------------------------
# structural checks on nonlinearities

@dataclass(frozen=True)
class ValidationReport:
    """Sampled evidence that nonlinearities vanish at the origin, stay
    nonnegative, and are nondecreasing in every coordinate."""

    f_zero_at_origin: bool
    origin_values: tuple[float, ...]
    positivity_violations: tuple
    monotonicity_violations: tuple
    samples_used: int

    @property
    def passed(self) -> bool:
        return (
            self.f_zero_at_origin
            and not self.positivity_violations
            and not self.monotonicity_violations
        )


def validate_nonlinearity(
    f_list: Sequence[Expression],
    m: int,
    domain_cap: float,
    samples_per_axis: int,
) -> ValidationReport:
    """Check each nonlinearity on a lattice in [0, domain_cap]^m.

    Up to three coordinates the lattice is exhaustive with samples_per_axis
    points per axis; beyond that, seeded random pairs differing in one
    coordinate stand in for the axis sweeps.  Violation lists are capped at
    100 entries each.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if domain_cap <= 0:
        raise ValueError("domain_cap must be positive")
    if samples_per_axis < 2:
        raise ValueError("samples_per_axis must be at least 2")

    names = tuple(f"u{i + 1}" for i in range(m))
    origin = {name: 0.0 for name in names}
    origin_values = tuple(float(evaluate(f, origin)) for f in f_list)
    zero_ok = all(abs(v) <= ORIGIN_TOLERANCE for v in origin_values)

    positivity = []
    monotonicity = []

    if m <= 3:
        axis = np.linspace(0.0, domain_cap, samples_per_axis)
        mesh = np.meshgrid(*([axis] * m), indexing="ij")
        shape = mesh[0].shape
        flat = {names[i]: mesh[i].ravel() for i in range(m)}
        samples_used = axis.size ** m
        for j, f in enumerate(f_list):
            values = np.broadcast_to(
                np.asarray(evaluate(f, flat), dtype=float), (axis.size ** m,)
            ).reshape(shape)
            for idx in np.argwhere(values < -ORIGIN_TOLERANCE)[:_VIOLATION_CAP]:
                point = tuple(float(axis[k]) for k in idx)
                if len(positivity) < _VIOLATION_CAP:
                    positivity.append((j, point, float(values[tuple(idx)])))
            for coord in range(m):
                moved = np.moveaxis(values, coord, 0)
                drops = moved[1:] - moved[:-1]
                tol = ORIGIN_TOLERANCE * (1.0 + np.abs(moved[:-1]))
                for idx in np.argwhere(drops < -tol)[:_VIOLATION_CAP]:
                    if len(monotonicity) >= _VIOLATION_CAP:
                        break
                    lo = list(idx[1:])
                    lo.insert(coord, int(idx[0]))
                    hi = list(idx[1:])
                    hi.insert(coord, int(idx[0]) + 1)
                    point_lo = tuple(float(axis[k]) for k in lo)
                    point_hi = tuple(float(axis[k]) for k in hi)
                    monotonicity.append((j, coord, point_lo, point_hi))
    else:
        rng = np.random.default_rng(0)
        trials = samples_per_axis ** 3
        lo_pts = rng.uniform(0.0, domain_cap, size=(trials, m))
        coords = rng.integers(0, m, size=trials)
        hi_pts = lo_pts.copy()
        rows = np.arange(trials)
        headroom = domain_cap - lo_pts[rows, coords]
        hi_pts[rows, coords] = lo_pts[rows, coords] + rng.uniform(0, 1, trials) * headroom
        samples_used = trials * 2
        for j, f in enumerate(f_list):
            v_lo = np.broadcast_to(
                np.asarray(
                    evaluate(f, {names[i]: lo_pts[:, i] for i in range(m)}), dtype=float
                ),
                (trials,),
            )
            v_hi = np.broadcast_to(
                np.asarray(
                    evaluate(f, {names[i]: hi_pts[:, i] for i in range(m)}), dtype=float
                ),
                (trials,),
            )
            for t in np.nonzero(v_lo < -ORIGIN_TOLERANCE)[0][:_VIOLATION_CAP]:
                if len(positivity) < _VIOLATION_CAP:
                    positivity.append((j, tuple(lo_pts[t]), float(v_lo[t])))
            bad = v_hi - v_lo < -(ORIGIN_TOLERANCE * (1.0 + np.abs(v_lo)))
            for t in np.nonzero(bad)[0][:_VIOLATION_CAP]:
                if len(monotonicity) < _VIOLATION_CAP:
                    monotonicity.append(
                        (j, int(coords[t]), tuple(lo_pts[t]), tuple(hi_pts[t]))
                    )

    return ValidationReport(
        f_zero_at_origin=zero_ok,
        origin_values=origin_values,
        positivity_violations=tuple(positivity),
        monotonicity_violations=tuple(monotonicity),
        samples_used=samples_used,
    )
