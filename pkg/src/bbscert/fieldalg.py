"""Vector fields on a single chart of R^n: evaluation, brackets, flows.

Every field evaluates on arrays of shape ``(..., n)``. Jacobians have shape
``(..., n, n)`` with ``jac[..., i, j] = d f_i / d x_j`` and second
derivatives ``(..., n, n, n)`` with ``hess[..., i, j, k] = d^2 f_i / dx_j dx_k``.

Lie brackets follow ``[f, g](x) = Dg(x) f(x) - Df(x) g(x)``, so that
``L_[f,g] = L_f L_g - L_g L_f`` on functions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .poly import Polynomial, compile_polys

EPS = np.finfo(float).eps
DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


class DimensionError(ValueError):
    pass


class IntegrationError(RuntimeError):
    """Integrator gave up; ``last_time`` is the last time with a valid state."""

    def __init__(self, message: str, last_time: float | None = None):
        super().__init__(message)
        self.last_time = last_time


def fd_step_first(x: np.ndarray) -> np.ndarray:
    return np.cbrt(EPS) * np.maximum(1.0, np.abs(x))


def fd_step_second(x: np.ndarray) -> np.ndarray:
    return EPS ** 0.25 * np.maximum(1.0, np.abs(x))


def _fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, steps: np.ndarray) -> np.ndarray:
    # central differences along the last axis; returns (..., m, n)
    n = x.shape[-1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        h = steps[..., j : j + 1]
        cols.append((fun(x + h * e) - fun(x - h * e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


class SmoothField:
    """Autonomous vector field on R^n.

    Subclasses provide ``_eval``; ``jac`` and ``hess`` fall back to central
    differences when no analytic form is supplied.
    """

    kind = "finite-difference"

    def __init__(self, dim: int):
        if dim <= 0:
            raise DimensionError("field dimension must be positive")
        self.dim = int(dim)
        self.last_fd_step: float | None = None

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return x

    def __call__(self, x) -> np.ndarray:
        return self._eval(self._check(x))

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jac(self, x) -> np.ndarray:
        x = self._check(x)
        steps = fd_step_first(x)
        self.last_fd_step = float(np.max(steps))
        return _fd_jacobian(self._eval, x, steps)

    def hess(self, x) -> np.ndarray:
        x = self._check(x)
        steps = fd_step_second(x)
        self.last_fd_step = float(np.max(steps))
        h = _fd_jacobian(self.jac, x, steps)
        return 0.5 * (h + np.swapaxes(h, -1, -2))

    # time-dependent protocol; autonomous fields ignore t
    def at(self, t: float, x) -> np.ndarray:
        return self(x)

    def jac_at(self, t: float, x) -> np.ndarray:
        return self.jac(x)

    def hess_at(self, t: float, x) -> np.ndarray:
        return self.hess(x)

    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def __add__(self, other: "SmoothField") -> "SmoothField":
        return combine([(1.0, self), (1.0, other)])

    def __sub__(self, other: "SmoothField") -> "SmoothField":
        return combine([(1.0, self), (-1.0, other)])

    def __rmul__(self, a: float) -> "SmoothField":
        return combine([(float(a), self)])


class CallableField(SmoothField):
    """Field given by plain callables; missing derivatives use central differences."""

    def __init__(self, dim: int, fun, jac=None, hess=None):
        super().__init__(dim)
        self._fun = fun
        self._jac = jac
        self._hess = hess
        self.kind = "analytic" if jac is not None else "finite-difference"

    def _eval(self, x):
        return np.asarray(self._fun(x), dtype=float)

    def jac(self, x):
        if self._jac is None:
            return super().jac(x)
        return np.asarray(self._jac(self._check(x)), dtype=float)

    def hess(self, x):
        if self._hess is None:
            return super().hess(x)
        return np.asarray(self._hess(self._check(x)), dtype=float)


class PolynomialField(SmoothField):
    """Field whose components are polynomials; derivatives are exact."""

    kind = "polynomial"

    def __init__(self, components: Sequence[Polynomial]):
        components = list(components)
        n = len(components)
        if n == 0 or any(p.nvars != n for p in components):
            raise DimensionError("a polynomial field needs n components over n variables")
        super().__init__(n)
        self.components = components
        self._f = compile_polys(components)
        self._df = compile_polys([p.deriv(j) for p in components for j in range(n)])
        self._d2f = compile_polys([p.deriv(j).deriv(k) for p in components for j in range(n) for k in range(n)])

    @classmethod
    def linear(cls, A) -> "PolynomialField":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls([Polynomial.linear(row) for row in A])

    @classmethod
    def constant(cls, v) -> "PolynomialField":
        v = np.asarray(v, dtype=float)
        n = v.size
        return cls([Polynomial.constant(n, float(a)) for a in v])

    def _eval(self, x):
        return self._f(x)

    def jac(self, x):
        x = self._check(x)
        return self._df(x).reshape(x.shape[:-1] + (self.dim, self.dim))

    def hess(self, x):
        x = self._check(x)
        return self._d2f(x).reshape(x.shape[:-1] + (self.dim, self.dim, self.dim))

    def is_constant(self) -> bool:
        return all(p.degree == 0 for p in self.components)

    def __add__(self, other):
        if isinstance(other, PolynomialField):
            return PolynomialField([a + b for a, b in zip(self.components, other.components)])
        return super().__add__(other)

    def __sub__(self, other):
        if isinstance(other, PolynomialField):
            return PolynomialField([a - b for a, b in zip(self.components, other.components)])
        return super().__sub__(other)

    def __rmul__(self, a):
        return PolynomialField([float(a) * p for p in self.components])

    def to_strings(self, names=None) -> list[str]:
        return [p.to_string(names) for p in self.components]


class LinearCombination(SmoothField):
    kind = "analytic"

    def __init__(self, terms):
        dims = {f.dim for _, f in terms}
        if len(dims) != 1:
            raise DimensionError("fields of different dimensions")
        super().__init__(dims.pop())
        self.terms = list(terms)

    def _eval(self, x):
        return sum(a * f(x) for a, f in self.terms)

    def jac(self, x):
        return sum(a * f.jac(x) for a, f in self.terms)

    def hess(self, x):
        return sum(a * f.hess(x) for a, f in self.terms)


def combine(terms) -> SmoothField:
    terms = [(float(a), f) for a, f in terms]
    if all(isinstance(f, PolynomialField) for _, f in terms):
        comps = None
        for a, f in terms:
            scaled = [a * p for p in f.components]
            comps = scaled if comps is None else [u + v for u, v in zip(comps, scaled)]
        return PolynomialField(comps)
    return LinearCombination(terms)


class BracketField(SmoothField):
    """``[f, g]`` for general fields; its Jacobian uses second derivatives."""

    kind = "analytic"

    def __init__(self, f: SmoothField, g: SmoothField):
        if f.dim != g.dim:
            raise DimensionError("bracket of fields with different dimensions")
        super().__init__(f.dim)
        self.f, self.g = f, g

    def _eval(self, x):
        return _bracket_value(self.f, self.g, x)

    def jac(self, x):
        x = self._check(x)
        fx, gx = self.f(x), self.g(x)
        Df, Dg = self.f.jac(x), self.g.jac(x)
        D2f, D2g = self.f.hess(x), self.g.hess(x)
        return (
            np.einsum("...ijk,...j->...ik", D2g, fx)
            + Dg @ Df
            - np.einsum("...ijk,...j->...ik", D2f, gx)
            - Df @ Dg
        )


def _bracket_value(f: SmoothField, g: SmoothField, x: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", g.jac(x), f(x)) - np.einsum("...ij,...j->...i", f.jac(x), g(x))


def bracket_field(f: SmoothField, g: SmoothField) -> SmoothField:
    """The field ``[f, g]``; exact polynomial when both inputs are polynomial."""
    if f.dim != g.dim:
        raise DimensionError("bracket of fields with different dimensions")
    if isinstance(f, PolynomialField) and isinstance(g, PolynomialField):
        n = f.dim
        comps = []
        for i in range(n):
            c = Polynomial.constant(n, 0.0)
            for j in range(n):
                c = c + g.components[i].deriv(j) * f.components[j] - f.components[i].deriv(j) * g.components[j]
            comps.append(c)
        return PolynomialField(comps)
    return BracketField(f, g)


def lie_bracket(f: SmoothField, g: SmoothField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not (f.dim == g.dim == x.shape[-1]):
        raise DimensionError(f"dimension mismatch: {f.dim}, {g.dim}, {x.shape[-1]}")
    return _bracket_value(f, g, x)


def fd_lie_bracket(f, g, x, step: float = 1e-5) -> np.ndarray:
    """Bracket from central-difference Jacobians of ``f`` and ``g`` only."""
    x = np.asarray(x, dtype=float)
    n = x.size
    Df = np.empty((n, n))
    Dg = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        Df[:, j] = (f(x + e) - f(x - e)) / (2 * step)
        Dg[:, j] = (g(x + e) - g(x - e)) / (2 * step)
    return Dg @ f(x) - Df @ g(x)


# time-dependent fields ----------------------------------------------------


class TimeField:
    """Time-dependent field ``(t, x) -> f_t(x)`` with optional breakpoints.

    Flows are integrated piecewise between breakpoints, where the field may
    jump.
    """

    def __init__(self, dim: int, fun, jac, hess=None, breakpoints: Sequence[float] = ()):
        self.dim = int(dim)
        self._fun, self._jac, self._hess = fun, jac, hess
        self._breaks = tuple(sorted(float(b) for b in breakpoints))

    def at(self, t, x):
        return self._fun(t, np.asarray(x, dtype=float))

    def jac_at(self, t, x):
        return self._jac(t, np.asarray(x, dtype=float))

    def hess_at(self, t, x):
        if self._hess is None:
            raise NotImplementedError("no second derivative for this time field")
        return self._hess(t, np.asarray(x, dtype=float))

    def breakpoints(self) -> tuple[float, ...]:
        return self._breaks


@dataclass(frozen=True)
class FlowSegment:
    field: object
    t_start: float
    t_end: float
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    method: str = "RK45"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("integrator tolerances must be positive")

    def reversed(self) -> "FlowSegment":
        return FlowSegment(self.field, self.t_end, self.t_start, self.rtol, self.atol, self.method)


def _pieces(t0: float, t1: float, breaks: Sequence[float]) -> list[tuple[float, float]]:
    lo, hi = min(t0, t1), max(t0, t1)
    inner = [b for b in breaks if lo < b < hi]
    nodes = [t0] + (inner if t1 >= t0 else inner[::-1]) + [t1]
    return list(zip(nodes[:-1], nodes[1:]))


class PiecewiseSolution:
    """Dense solution assembled from the pieces between breakpoints."""

    def __init__(self, pieces, t0, t1):
        self.pieces = pieces  # list of (a, b, dense) in integration order
        self.t0, self.t1 = t0, t1

    def __call__(self, t):
        t = float(t)
        for a, b, sol in self.pieces:
            if min(a, b) <= t <= max(a, b):
                return sol(t)
        raise ValueError(f"time {t} outside the integrated interval [{self.t0}, {self.t1}]")

    def sample(self, ts) -> np.ndarray:
        return np.array([self(t) for t in np.atleast_1d(ts)])


def _interior(t, lo, hi):
    # evaluate piece fields strictly inside (lo, hi) so jumps at breaks are one-sided
    nudge = 1e-13 * max(1.0, abs(t))
    if t <= lo:
        return lo + nudge
    if t >= hi:
        return hi - nudge
    return t


def integrate(rhs, y0, t0, t1, *, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, method="RK45",
              breaks: Sequence[float] = (), dense=False):
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` piecewise across ``breaks``.

    Returns ``(y_end, solution)``; ``solution`` is a :class:`PiecewiseSolution`
    when ``dense`` is set, else ``None``.
    """
    y = np.asarray(y0, dtype=float).copy()
    if t0 == t1:
        sol = PiecewiseSolution([(t0, t1, lambda t, _y=y: _y.copy())], t0, t1) if dense else None
        return y, sol
    pieces = []
    for a, b in _pieces(t0, t1, breaks):
        lo, hi = min(a, b), max(a, b)

        def piece_rhs(t, yy, _lo=lo, _hi=hi):
            return rhs(_interior(t, _lo, _hi), yy)

        sol = solve_ivp(piece_rhs, (a, b), y, method=method, rtol=rtol, atol=atol, dense_output=dense)
        if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
            last = float(sol.t[-1]) if sol.t.size else a
            raise IntegrationError(f"integration failed on [{a}, {b}]: {sol.message}", last)
        y = sol.y[:, -1].copy()
        if dense:
            pieces.append((a, b, sol.sol))
    return y, (PiecewiseSolution(pieces, t0, t1) if dense else None)


def flow(seg: FlowSegment, x) -> np.ndarray:
    """Solution at ``seg.t_end`` of ``x' = f_t(x)`` started from ``x`` at ``seg.t_start``."""
    f = seg.field
    x = np.asarray(x, dtype=float)
    if x.shape != (f.dim,):
        raise DimensionError(f"expected a point of dimension {f.dim}")
    y, _ = integrate(lambda t, y: f.at(t, y), x, seg.t_start, seg.t_end, rtol=seg.rtol,
                     atol=seg.atol, method=seg.method, breaks=f.breakpoints())
    return y


def variational_rhs(f):
    n = f.dim

    def rhs(t, y):
        x = y[:n]
        M = y[n:].reshape(n, n)
        A = f.jac_at(t, x)
        return np.concatenate([f.at(t, x), (A @ M).ravel()])

    return rhs


def flow_with_jacobian(seg: FlowSegment, x, dense=False):
    """Flow together with its derivative ``D(flow)`` (forward variational equation)."""
    f = seg.field
    n = f.dim
    y0 = np.concatenate([np.asarray(x, dtype=float), np.eye(n).ravel()])
    y, sol = integrate(variational_rhs(f), y0, seg.t_start, seg.t_end, rtol=seg.rtol,
                       atol=seg.atol, method=seg.method, breaks=f.breakpoints(), dense=dense)
    return y[:n], y[n:].reshape(n, n), sol


def inverse_jacobian_rhs(f):
    # d/dt (D flow)^{-1} = -(D flow)^{-1} A(t)
    n = f.dim

    def rhs(t, y):
        x = y[:n]
        P = y[n:].reshape(n, n)
        return np.concatenate([f.at(t, x), (-P @ f.jac_at(t, x)).ravel()])

    return rhs


def transport_vector(seg: FlowSegment, x, v, direction: str = "pushforward") -> np.ndarray:
    """Transport a tangent vector along the flow of ``seg`` started at ``x``.

    ``pushforward`` maps ``v`` at ``x`` to ``D(flow)(x) v`` at the end point.
    ``inverse-pushforward`` takes ``v`` attached at the end point and returns
    ``D(flow)(x)^{-1} v`` at ``x``; it integrates the adjoint variational
    equation along the forward trajectory.
    """
    f = seg.field
    n = f.dim
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionError("tangent vector has the wrong dimension")
    if direction == "pushforward":
        rhs = variational_rhs(f)
    elif direction == "inverse-pushforward":
        rhs = inverse_jacobian_rhs(f)
    else:
        raise ValueError(f"unknown transport direction {direction!r}")
    y0 = np.concatenate([np.asarray(x, dtype=float), np.eye(n).ravel()])
    y, _ = integrate(rhs, y0, seg.t_start, seg.t_end, rtol=seg.rtol, atol=seg.atol,
                     method=seg.method, breaks=f.breakpoints())
    return y[n:].reshape(n, n) @ v


def rk4_flow(rhs, y0: np.ndarray, duration, steps: int) -> np.ndarray:
    """Fixed-step classical RK4 over ``s in [0, 1]`` of ``y' = duration * rhs(y)``.

    ``duration`` may be an array broadcasting against the leading axes of
    ``y0`` so that a batch of points flows for individual times in one pass.
    The map is smooth in ``y0`` and ``duration``, which keeps finite
    differences of flows clean.
    """
    y = np.asarray(y0, dtype=float)
    d = np.asarray(duration, dtype=float)[..., None]
    h = 1.0 / steps
    for _ in range(steps):
        k1 = d * rhs(y)
        k2 = d * rhs(y + 0.5 * h * k1)
        k3 = d * rhs(y + 0.5 * h * k2)
        k4 = d * rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
