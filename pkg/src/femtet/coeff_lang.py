"""Scalar expression language for coefficients, boundary data and exact solutions."""

import re
from typing import Literal, NamedTuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from .exceptions import FemtetExpressionSyntaxError, FemtetNonFiniteValueError, FemtetUnknownIdentifierError


VARIABLES = frozenset({"x", "y", "z", "t", "tag", "pi"})
FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

# (precedence, right associative)
BINARY_OPERATORS: dict[str, tuple[int, bool]] = {
    "+": (0, False),
    "-": (0, False),
    "*": (1, False),
    "/": (1, False),
    "^": (3, True),
}
UNARY_PRECEDENCE = 2

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


class Number(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float


class Variable(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: Literal["x", "y", "z", "t", "tag", "pi"]


class Negate(BaseModel):
    model_config = ConfigDict(frozen=True)

    operand: "Expr"


class BinaryOp(BaseModel):
    model_config = ConfigDict(frozen=True)

    op: Literal["+", "-", "*", "/", "^"]
    left: "Expr"
    right: "Expr"


class Call(BaseModel):
    model_config = ConfigDict(frozen=True)

    func: Literal["sin", "cos", "tan", "exp", "log", "sqrt", "abs"]
    arg: "Expr"


Expr = Union[Number, Variable, Negate, BinaryOp, Call]

for _node in (Negate, BinaryOp, Call):
    _node.model_rebuild()


class _Token(NamedTuple):
    kind: str
    text: str
    offset: int


def _tokenize(src: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0

    while pos < len(src):
        if src[pos:].strip() == "":
            break

        match = _TOKEN.match(src, pos)

        if match is None or match.end() == pos:
            offset = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise FemtetExpressionSyntaxError(f"unexpected character {src[offset]!r}", offset=offset)

        kind = match.lastgroup or "op"
        tokens.append(_Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()

    tokens.append(_Token("end", "", len(src)))

    return tokens


class _Parser:
    """Precedence climbing over the token list."""

    def __init__(self, src: str) -> None:
        self.tokens = _tokenize(src)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, text: str) -> None:
        token = self.advance()

        if token.text != text:
            found = repr(token.text) if token.kind != "end" else "end of input"
            raise FemtetExpressionSyntaxError(f"expected {text!r}, found {found}", offset=token.offset)

    def parse(self) -> Expr:
        expr = self.expression(0)
        token = self.peek()

        if token.kind != "end":
            raise FemtetExpressionSyntaxError(f"unexpected {token.text!r}", offset=token.offset)

        return expr

    def expression(self, min_prec: int) -> Expr:
        left = self.atom()

        while True:
            token = self.peek()

            if token.kind != "op" or token.text not in BINARY_OPERATORS:
                return left

            prec, right_assoc = BINARY_OPERATORS[token.text]

            if prec < min_prec:
                return left

            self.advance()
            right = self.expression(prec if right_assoc else prec + 1)
            left = BinaryOp(op=token.text, left=left, right=right)

    def atom(self) -> Expr:
        token = self.advance()

        if token.kind == "num":
            value = float(token.text)

            if not np.isfinite(value):
                raise FemtetExpressionSyntaxError(f"numeric literal {token.text} overflows", offset=token.offset)

            return Number(value=value)

        if token.kind == "name":
            if token.text in FUNCTIONS:
                self.expect("(")
                arg = self.expression(0)
                self.expect(")")
                return Call(func=token.text, arg=arg)

            if token.text in VARIABLES:
                return Variable(name=token.text)

            raise FemtetUnknownIdentifierError(f"unknown identifier {token.text!r}", offset=token.offset)

        if token.text == "-":
            return Negate(operand=self.expression(UNARY_PRECEDENCE))

        if token.text == "+":
            return self.expression(UNARY_PRECEDENCE)

        if token.text == "(":
            inner = self.expression(0)
            self.expect(")")
            return inner

        found = repr(token.text) if token.kind != "end" else "end of input"
        raise FemtetExpressionSyntaxError(f"unexpected {found}", offset=token.offset)


def parse_expr(src: str) -> Expr:
    """
    Parse an arithmetic expression over x, y, z, t, tag and pi.

    Precedence: ^ (right associative) > unary minus > * / > + -.

    Raises:
        FemtetExpressionSyntaxError: With the character offset of the problem
        FemtetUnknownIdentifierError: For names outside the language
    """

    return _Parser(src).parse()


def to_source(expr: Expr) -> str:
    """Fully parenthesized text that parses back to the same tree."""

    if isinstance(expr, Number):
        return repr(expr.value)

    if isinstance(expr, Variable):
        return expr.name

    if isinstance(expr, Negate):
        return f"(-{to_source(expr.operand)})"

    if isinstance(expr, Call):
        return f"{expr.func}({to_source(expr.arg)})"

    return f"({to_source(expr.left)} {expr.op} {to_source(expr.right)})"


def variables_of(expr: Expr) -> set[str]:
    if isinstance(expr, Variable):
        return {expr.name}

    if isinstance(expr, Negate):
        return variables_of(expr.operand)

    if isinstance(expr, Call):
        return variables_of(expr.arg)

    if isinstance(expr, BinaryOp):
        return variables_of(expr.left) | variables_of(expr.right)

    return set()


def _evaluate(expr: Expr, env: dict[str, np.ndarray | float]) -> np.ndarray | float:
    if isinstance(expr, Number):
        return expr.value

    if isinstance(expr, Variable):
        return env[expr.name]

    if isinstance(expr, Negate):
        return -_evaluate(expr.operand, env)

    if isinstance(expr, Call):
        return FUNCTIONS[expr.func](_evaluate(expr.arg, env))

    left, right = _evaluate(expr.left, env), _evaluate(expr.right, env)

    if expr.op == "+":
        return np.add(left, right)

    if expr.op == "-":
        return np.subtract(left, right)

    if expr.op == "*":
        return np.multiply(left, right)

    if expr.op == "/":
        return np.divide(left, right)

    return np.power(np.asarray(left, dtype=float), right)


def eval_batch(e: Expr, points: np.ndarray, t: float, tags: np.ndarray) -> np.ndarray:
    """
    Evaluate an expression at n points.

    Args:
        e: Parsed expression
        points: n x 3 coordinates
        t: Time
        tags: n entity tags, bound to the variable `tag`

    Raises:
        FemtetNonFiniteValueError: If any value is NaN or infinite
    """

    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = points.shape[0]
    env: dict[str, np.ndarray | float] = {
        "x": points[:, 0],
        "y": points[:, 1],
        "z": points[:, 2],
        "t": float(t),
        "tag": np.broadcast_to(np.asarray(tags, dtype=float), (n,)),
        "pi": np.pi,
    }

    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(_evaluate(e, env), dtype=float), (n,)).copy()

    bad = np.flatnonzero(~np.isfinite(values))

    if bad.size:
        k = int(bad[0])
        raise FemtetNonFiniteValueError(
            f"{to_source(e)} is not finite at {bad.size} point(s), first at {points[k].tolist()} (t={t})",
            details={"count": int(bad.size)},
        )

    return values


FieldShape = Literal["scalar", "vector3", "matrix3x3"]
_SIZES: dict[str, int] = {"scalar": 1, "vector3": 3, "matrix3x3": 9}
_ZERO = Number(value=0.0)


def _as_expr(source: str | float | Expr) -> Expr:
    if isinstance(source, (Number, Variable, Negate, BinaryOp, Call)):
        return source

    return parse_expr(str(source))


class CoefficientField(BaseModel):
    """Scalar, vector or matrix field of expressions, optionally piecewise by entity tag."""

    model_config = ConfigDict(frozen=True)

    shape: FieldShape
    entries: tuple[Expr, ...]
    pieces: dict[int, tuple[Expr, ...]] = {}

    @classmethod
    def scalar(cls, source: str | float | Expr) -> "CoefficientField":
        return cls(shape="scalar", entries=(_as_expr(source),))

    @classmethod
    def vector(cls, sources: list[str | float | Expr]) -> "CoefficientField":
        return cls(shape="vector3", entries=tuple(_as_expr(s) for s in sources))

    @classmethod
    def matrix(cls, sources: list[str | float | Expr] | str | float) -> "CoefficientField":
        """Nine row-major entries, or one entry k meaning k times the identity."""

        if isinstance(sources, (str, int, float)) or len(sources) == 1:
            k = _as_expr(sources if isinstance(sources, (str, int, float)) else sources[0])
            return cls(shape="matrix3x3", entries=(k, _ZERO, _ZERO, _ZERO, k, _ZERO, _ZERO, _ZERO, k))

        return cls(shape="matrix3x3", entries=tuple(_as_expr(s) for s in sources))

    def model_post_init(self, __context: object) -> None:
        size = _SIZES[self.shape]

        for entries in (self.entries, *self.pieces.values()):
            if len(entries) != size:
                raise ValueError(f"{self.shape} field needs {size} entries, got {len(entries)}")

    def with_pieces(self, pieces: dict[int, "CoefficientField"]) -> "CoefficientField":
        """Copy that uses another field's entries on elements carrying the given tags."""

        return CoefficientField(
            shape=self.shape,
            entries=self.entries,
            pieces={**self.pieces, **{tag: field.entries for tag, field in pieces.items()}},
        )

    @property
    def is_zero(self) -> bool:
        return all(e == _ZERO for e in self.entries) and all(
            e == _ZERO for entries in self.pieces.values() for e in entries
        )

    def depends_on(self, name: str) -> bool:
        return any(name in variables_of(e) for entries in (self.entries, *self.pieces.values()) for e in entries)

    def evaluate(self, points: np.ndarray, t: float, tags: np.ndarray) -> np.ndarray:
        """
        Values at n points: shape (n,), (n, 3) or (n, 3, 3).

        Raises:
            FemtetNonFiniteValueError: If any value is NaN or infinite
        """

        points = np.asarray(points, dtype=float).reshape(-1, 3)
        tags = np.broadcast_to(np.asarray(tags), (points.shape[0],))
        covered = np.isin(tags, list(self.pieces))
        out = np.zeros((points.shape[0], len(self.entries)))

        if not covered.all():
            rest = ~covered
            out[rest] = np.column_stack([eval_batch(e, points[rest], t, tags[rest]) for e in self.entries])

        for tag, entries in self.pieces.items():
            mask = tags == tag

            if mask.any():
                out[mask] = np.column_stack([eval_batch(e, points[mask], t, tags[mask]) for e in entries])

        if self.shape == "scalar":
            return out[:, 0]

        if self.shape == "vector3":
            return out

        return out.reshape(-1, 3, 3)
