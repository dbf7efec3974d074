"""Sparse multivariate polynomials with exact derivatives.

Polynomials are stored as ``{exponent tuple: coefficient}`` over a fixed
number of variables. Expressions are parsed from infix text (``+ - * ^``,
division by numeric constants) with the :mod:`ast` module.
"""
from __future__ import annotations

import ast
import re
from typing import Mapping, Sequence

import numpy as np


class PolynomialParseError(ValueError):
    """Raised for malformed expressions; carries the 1-based column."""

    def __init__(self, message: str, column: int | None = None, line: int | None = None):
        self.column = column
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class Polynomial:
    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], float] | None = None):
        self.nvars = int(nvars)
        self.terms: dict[tuple[int, ...], float] = {}
        for exps, coef in (terms or {}).items():
            if len(exps) != self.nvars:
                raise ValueError("exponent tuple length does not match nvars")
            if coef != 0.0:
                self.terms[tuple(int(e) for e in exps)] = self.terms.get(exps, 0.0) + float(coef)
        self.terms = {e: c for e, c in self.terms.items() if c != 0.0}

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, index: int) -> "Polynomial":
        exps = [0] * nvars
        exps[index] = 1
        return cls(nvars, {tuple(exps): 1.0})

    @classmethod
    def linear(cls, coeffs: Sequence[float], const: float = 0.0) -> "Polynomial":
        n = len(coeffs)
        p = cls.constant(n, const)
        for i, a in enumerate(coeffs):
            p = p + float(a) * cls.variable(n, i)
        return p

    # arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError("polynomials over different variable counts")
            return other
        return Polynomial.constant(self.nvars, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Polynomial.constant(self.nvars, 1.0)
        base = self
        k = int(k)
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __repr__(self):
        return f"Polynomial({self.nvars}, {self.to_string()!r})"

    # calculus ---------------------------------------------------------
    def deriv(self, index: int) -> "Polynomial":
        out: dict[tuple[int, ...], float] = {}
        for e, c in self.terms.items():
            k = e[index]
            if k == 0:
                continue
            e2 = list(e)
            e2[index] = k - 1
            out[tuple(e2)] = out.get(tuple(e2), 0.0) + c * k
        return Polynomial(self.nvars, out)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __call__(self, x):
        return compile_polys([self])(np.asarray(x, dtype=float))[..., 0]

    # text ---------------------------------------------------------------
    def to_string(self, names: Sequence[str] | None = None) -> str:
        if not self.terms:
            return "0"
        names = list(names) if names is not None else [f"x{i + 1}" for i in range(self.nvars)]
        pieces = []
        for e in sorted(self.terms, key=lambda e: (-sum(e), tuple(-a for a in e))):
            c = self.terms[e]
            factors = []
            for name, k in zip(names, e):
                if k == 1:
                    factors.append(name)
                elif k > 1:
                    factors.append(f"{name}^{k}")
            mono = "*".join(factors)
            coef = repr(float(abs(c)))
            sign = "-" if c < 0 else "+"
            if mono:
                body = mono if abs(c) == 1.0 else f"{coef}*{mono}"
            else:
                body = coef
            pieces.append((sign, body))
        first_sign, first = pieces[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in pieces[1:]:
            text += f" {sign} {body}"
        return text


class CompiledPolys:
    """Vectorized evaluator for a list of polynomials sharing variables."""

    def __init__(self, polys: Sequence[Polynomial]):
        self.nvars = polys[0].nvars if polys else 0
        monos = sorted({e for p in polys for e in p.terms})
        if not monos:
            monos = [(0,) * self.nvars]
        index = {e: i for i, e in enumerate(monos)}
        self.exps = np.array(monos, dtype=float).reshape(len(monos), self.nvars)
        self.coef = np.zeros((len(monos), len(polys)))
        for j, p in enumerate(polys):
            for e, c in p.terms.items():
                self.coef[index[e], j] = c
        self.nout = len(polys)
        self._constant = bool(np.all(self.exps == 0))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._constant:
            return np.broadcast_to(self.coef[0], x.shape[:-1] + (self.nout,)).copy()
        monos = np.prod(x[..., None, :] ** self.exps, axis=-1)
        return monos @ self.coef


def compile_polys(polys: Sequence[Polynomial]) -> CompiledPolys:
    return CompiledPolys(polys)


# parsing -----------------------------------------------------------------

_ALLOWED_UNARY = (ast.UAdd, ast.USub)


def parse_polynomial(text: str, names: Sequence[str], line: int | None = None) -> Polynomial:
    """Parse an infix polynomial expression over the given variable names.

    ``^`` denotes exponentiation; exponents must be non-negative integer
    literals. Division is only allowed by a numeric constant.
    """
    names = list(names)
    nvars = len(names)
    lookup = {name: i for i, name in enumerate(names)}
    stripped = text.lstrip()
    lead = len(text) - len(stripped)
    # ``^`` becomes ``**``; keep a map from source offsets to original columns
    pieces, origin = [], []
    for i, ch in enumerate(stripped.rstrip()):
        if ch == "^":
            pieces.append("**")
            origin.extend([i, i])
        else:
            pieces.append(ch)
            origin.append(i)
    source = "".join(pieces)
    origin.append(len(stripped))

    def col(node) -> int:
        c = getattr(node, "col_offset", 0)
        return origin[min(c, len(origin) - 1)] + lead + 1

    if not source:
        raise PolynomialParseError("empty expression", 1, line)
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        column = None
        if exc.offset is not None:
            column = origin[min(max(exc.offset - 1, 0), len(origin) - 1)] + lead + 1
        raise PolynomialParseError(f"syntax error in expression {text!r}", column, line) from None

    def const_value(node) -> float | None:
        try:
            p = walk(node)
        except PolynomialParseError:
            return None
        if all(sum(e) == 0 for e in p.terms):
            return p.terms.get((0,) * nvars, 0.0)
        return None

    def walk(node) -> Polynomial:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return Polynomial.constant(nvars, float(node.value))
        if isinstance(node, ast.Name):
            if node.id not in lookup:
                raise PolynomialParseError(f"unknown identifier {node.id!r}", col(node), line)
            return Polynomial.variable(nvars, lookup[node.id])
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, _ALLOWED_UNARY):
            inner = walk(node.operand)
            return -inner if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Add):
                return walk(node.left) + walk(node.right)
            if isinstance(node.op, ast.Sub):
                return walk(node.left) - walk(node.right)
            if isinstance(node.op, ast.Mult):
                return walk(node.left) * walk(node.right)
            if isinstance(node.op, ast.Div):
                denom = const_value(node.right)
                if denom is None:
                    raise PolynomialParseError("division is only allowed by a numeric constant", col(node.right), line)
                if denom == 0.0:
                    raise PolynomialParseError("division by zero", col(node.right), line)
                return walk(node.left) * (1.0 / denom)
            if isinstance(node.op, ast.Pow):
                k = const_value(node.right)
                if k is None or k != int(k) or k < 0:
                    raise PolynomialParseError("exponent must be a non-negative integer literal", col(node.right), line)
                return walk(node.left) ** int(k)
        raise PolynomialParseError(f"unsupported syntax {type(node).__name__}", col(node), line)

    return walk(tree)


_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def valid_name(name: str) -> bool:
    return bool(_NAME_RE.match(name))
