"""Hamiltonian lifts, Poisson brackets of lifts and adjoint flows.

Covectors are plain arrays in the global chart; the pairing is ``p @ v``.
Tangent vectors to the cotangent bundle are stored as ``(dx, dp)`` stacked
into one array of length ``2n``. The symplectic form is
``sigma((dx, dp), (dx', dp')) = dp . dx' - dp' . dx``, so Hamiltonian vector
fields read ``x' = dH/dp``, ``p' = -dH/dx``.

Poisson brackets of lifts are computed as lifts of Lie brackets:
``{F, G} = lift([f, g])``, where ``{F, G}`` is the derivative of ``G``
along the flow of ``F``.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .fieldalg import (
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    DimensionError,
    SmoothField,
    bracket_field,
    integrate,
)


@dataclass(frozen=True, eq=False)
class CotangentPoint:
    x: np.ndarray
    p: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, CotangentPoint):
            return NotImplemented
        return bool(np.array_equal(self.x, other.x) and np.array_equal(self.p, other.p))

    __hash__ = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).copy()
        p = np.asarray(self.p, dtype=float).copy()
        if x.shape != p.shape or x.ndim != 1:
            raise DimensionError("base point and covector must be 1-d arrays of equal length")
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.x.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.p])

    @classmethod
    def from_array(cls, y) -> "CotangentPoint":
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(y[:n], y[n:])

    def scaled(self, a: float) -> "CotangentPoint":
        return CotangentPoint(self.x, a * self.p)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def lifted_value(f: SmoothField, ell: CotangentPoint) -> float:
    if f.dim != ell.dim:
        raise DimensionError("field and cotangent point dimensions differ")
    return float(ell.p @ f(ell.x))


def lift_values(f: SmoothField, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Vectorized ``<p, f(x)>`` over leading axes."""
    return np.einsum("...i,...i->...", p, f(x))


def lift_gradient(f: SmoothField, x: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives ``(dF/dx, dF/dp)`` of the lift ``F = <p, f(x)>``."""
    return np.einsum("...i,...ij->...j", p, f.jac(x)), f(x)


def lifted_vector_field(f: SmoothField, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``(x', p') = (f(x), -p Df(x))`` stacked along the last axis."""
    return np.concatenate([f(x), -np.einsum("...i,...ij->...j", p, f.jac(x))], axis=-1)


def symplectic_form(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[-1] // 2
    return np.einsum("...i,...i->...", u[..., n:], v[..., :n]) - np.einsum("...i,...i->...", v[..., n:], u[..., :n])


def symplectic_matrix(n: int) -> np.ndarray:
    """Matrix ``S`` with ``sigma(u, v) = u @ S @ v`` in the ``(dx, dp)`` layout."""
    S = np.zeros((2 * n, 2 * n))
    S[n:, :n] = np.eye(n)
    S[:n, n:] = -np.eye(n)
    return S


# bracket words -----------------------------------------------------------

_LETTERS = ("1", "2", "3", "f1")


def parse_word(word) -> tuple[str, ...]:
    """Normalize a bracket word.

    Accepts ``"232"``, ``"2 f1"``, ``("2", "f1")`` and the special word
    ``"L"``. Letters are ``1, 2, 3`` (the fields ``h1, h2, h3``) and ``f1``.
    """
    if isinstance(word, str):
        w = word.strip()
        if w == "L":
            return ("L",)
        if " " in w or "," in w:
            tokens = [t for t in w.replace(",", " ").split() if t]
        else:
            tokens, i = [], 0
            while i < len(w):
                if w.startswith("f1", i):
                    tokens.append("f1")
                    i += 2
                else:
                    tokens.append(w[i])
                    i += 1
    else:
        tokens = [str(t) for t in word]
    for t in tokens:
        if t not in _LETTERS:
            raise ValueError(f"unknown letter {t!r} in bracket word {word!r}")
    if not 1 <= len(tokens) <= 3:
        raise ValueError("bracket words have depth between 1 and 3")
    return tuple(tokens)


class BracketCalculus:
    """Fields ``h1, h2, h3, f1 = h3 - h2`` and their right-nested brackets.

    ``field(("2", "3", "2"))`` is ``[h2, [h3, h2]]`` whose lift is ``H232``.
    Bracket fields are built once and cached.
    """

    def __init__(self, h1: SmoothField, h2: SmoothField, h3: SmoothField):
        if not (h1.dim == h2.dim == h3.dim):
            raise DimensionError("edge fields must share the dimension")
        self.dim = h1.dim
        self._base = {"1": h1, "2": h2, "3": h3, "f1": h3 - h2}
        self._cache: dict[tuple[str, ...], SmoothField] = {}

    def field(self, word) -> SmoothField:
        w = parse_word(word)
        if w == ("L",):
            return self._cached(("f1", "2", "f1"))
        return self._cached(w)

    def _cached(self, w: tuple[str, ...]) -> SmoothField:
        if w not in self._cache:
            if len(w) == 1:
                self._cache[w] = self._base[w[0]]
            else:
                self._cache[w] = bracket_field(self._base[w[0]], self._cached(w[1:]))
        return self._cache[w]

    @property
    def f1(self) -> SmoothField:
        return self._base["f1"]

    @property
    def h23(self) -> SmoothField:
        return self.field("2f1")

    def value(self, word, x, p) -> np.ndarray:
        return lift_values(self.field(word), np.asarray(x, float), np.asarray(p, float))


def poisson_lifted(word, ell: CotangentPoint, calc: BracketCalculus) -> float:
    """Iterated Poisson bracket of lifts at ``ell``.

    ``"23"`` is ``{H2, H3} = {H2, F1}``, ``"232"`` is ``{H2, {H3, H2}}`` and
    ``"L"`` is ``H323 + H232``, the lift of ``[f1, [h2, f1]]``. A single
    letter returns the lift itself.
    """
    if calc.dim != ell.dim:
        raise DimensionError("cotangent point dimension differs from the fields")
    return float(calc.value(word, ell.x, ell.p))


# adjoint flows -------------------------------------------------------------


def adjoint_rhs(field):
    n = field.dim

    def rhs(t, y):
        x, p = y[:n], y[n:]
        return np.concatenate([field.at(t, x), -p @ field.jac_at(t, x)])

    return rhs


@dataclass(frozen=True)
class AdjointTrajectory:
    start: CotangentPoint
    end: CotangentPoint
    t_from: float
    t_to: float
    solution: object

    def __call__(self, t) -> CotangentPoint:
        return CotangentPoint.from_array(self.solution(t))

    def sample(self, ts) -> np.ndarray:
        return self.solution.sample(ts)


def adjoint_flow(field, ell_end: CotangentPoint, t_from: float, t_to: float,
                 rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL, method: str = "RK45") -> AdjointTrajectory:
    """Coupled ``x' = f_t(x)``, ``p' = -p Df_t(x)`` from ``t_from`` to ``t_to``.

    Either direction in time is allowed; the usual use starts at the final
    time and runs backward.
    """
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    if field.dim != ell_end.dim:
        raise DimensionError("field and cotangent point dimensions differ")
    y_end, sol = integrate(adjoint_rhs(field), ell_end.as_array(), t_from, t_to, rtol=rtol, atol=atol,
                           method=method, breaks=field.breakpoints(), dense=True)
    return AdjointTrajectory(ell_end, CotangentPoint.from_array(y_end), t_from, t_to, sol)


def lifted_linearization_rhs(field):
    """Right-hand side for ``(x, p)`` plus the ``2n x 2n`` linearized lifted flow."""
    n = field.dim

    def rhs(t, y):
        x, p = y[:n], y[n : 2 * n]
        M = y[2 * n :].reshape(2 * n, 2 * n)
        A = field.jac_at(t, x)
        H = field.hess_at(t, x)
        B = np.zeros((2 * n, 2 * n))
        B[:n, :n] = A
        B[n:, :n] = -np.einsum("i,ijk->jk", p, H)
        B[n:, n:] = -A.T
        return np.concatenate([field.at(t, x), -p @ A, (B @ M).ravel()])

    return rhs


def lifted_flow_linearization(field, ell: CotangentPoint, t_from: float, t_to: float,
                              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL, method: str = "RK45",
                              dense: bool = False):
    """End point and ``2n x 2n`` derivative of the lifted flow of ``field``."""
    n = field.dim
    y0 = np.concatenate([ell.as_array(), np.eye(2 * n).ravel()])
    y, sol = integrate(lifted_linearization_rhs(field), y0, t_from, t_to, rtol=rtol, atol=atol,
                       method=method, breaks=field.breakpoints(), dense=dense)
    return CotangentPoint.from_array(y[: 2 * n]), y[2 * n :].reshape(2 * n, 2 * n), sol
