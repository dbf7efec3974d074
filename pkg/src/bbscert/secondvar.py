"""Extended second variation as a singular LQ problem and its coercivity.

Sign dictionary. Stored quantities follow the ``(-c~)`` convention:
``crossform(t) . z = L_z L_{gdot_t}(-c~)(x_f)`` and
``boundary_quad = L_k^2(-c~)(x_f)``. The quadratic form whose coercivity is
decided is

    J[(e0, w)] = e0^2/2 * (H12 - boundary_quad)
                 + 1/2 int (R w^2 + 2 w alpha . zeta) dt,
    zeta' = w gdot,  zeta(tau2) = e0 k,

with ``alpha = -crossform``, i.e. the cross term carries ``L L c~``. Both
the Hamiltonian test and the discretized oracle use this ``alpha``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh

from .extremal import BBSExtremal, ControlAffineProblem, Cost, reference_field
from .fieldalg import IntegrationError, integrate

log = logging.getLogger(__name__)


class AssumptionViolation(RuntimeError):
    """``L_f1^2 c(x_f) <= 0`` while ``L_f1 c`` does not vanish identically."""


# modified cost ---------------------------------------------------------------


@dataclass
class ModifiedCost(Cost):
    """``c~``: the cost made constant along integral lines of ``f1``.

    ``case`` is ``"f1-invariant"`` (``c~`` is ``c`` itself) or
    ``"f1-transverse"`` (``c~(x) = c(exp(-r f1) x)`` with ``r`` solving
    ``L_f1 c(exp(-r f1) x) = 0``).
    """

    case: str
    base: Cost
    f1: object
    xf: np.ndarray
    fd_step: float = 1e-4
    newton_tol: float = 1e-13

    def __post_init__(self):
        self.dim = self.xf.size

    def _lie(self, x):
        return float(self.base.grad(x) @ self.f1(x))

    def _lie2(self, x):
        g, H = self.base.grad(x), self.base.hess(x)
        v = self.f1(x)
        return float(v @ H @ v + g @ self.f1.jac(x) @ v)

    def _flow(self, x, r):
        if getattr(self.f1, "is_constant", lambda: False)():
            return x - r * self.f1(x)
        y, _ = integrate(lambda t, y: -self.f1(y), x, 0.0, r, rtol=1e-13, atol=1e-14)
        return y

    def projection(self, x) -> tuple[np.ndarray, float]:
        """Point ``z`` on the surface ``L_f1 c = 0`` with ``x = exp(r f1) z``."""
        x = np.asarray(x, dtype=float)
        r = 0.0
        for _ in range(50):
            z = self._flow(x, r)
            phi = self._lie(z)
            if abs(phi) <= self.newton_tol * max(1.0, abs(self.base.value(z))):
                return z, r
            dphi = -self._lie2(z)
            if dphi == 0.0:
                break
            r -= phi / dphi
        raise AssumptionViolation(f"no point of the surface L_f1 c = 0 found along the f1 line through {x}")

    def value(self, x):
        if self.case == "f1-invariant":
            return self.base.value(x)
        x = np.asarray(x, dtype=float)
        if x.ndim > 1:
            return np.array([self.value(xi) for xi in x.reshape(-1, x.shape[-1])]).reshape(x.shape[:-1])
        return float(self.base.value(self.projection(x)[0]))

    def grad(self, x):
        if self.case == "f1-invariant":
            return self.base.grad(x)
        x = np.asarray(x, dtype=float)
        h = self.fd_step * (1.0 + np.abs(x))
        g = np.empty(x.size)
        for i in range(x.size):
            e = np.zeros(x.size)
            e[i] = h[i]
            g[i] = (self.value(x + e) - self.value(x - e)) / (2 * h[i])
        return g

    def hess(self, x):
        if self.case == "f1-invariant":
            return self.base.hess(x)
        x = np.asarray(x, dtype=float)
        n = x.size
        h = self.fd_step * (1.0 + np.abs(x))
        H = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h[i]
            H[:, i] = (self.grad(x + e) - self.grad(x - e)) / (2 * h[i])
        return 0.5 * (H + H.T)


def build_ctilde(prob: ControlAffineProblem, ext: BBSExtremal, tol: float = 1e-10, samples: int = 20,
                 radius: float = 1e-2, seed: int = 0) -> ModifiedCost:
    f1 = prob.calc.f1
    xf = np.asarray(ext.xf, dtype=float)
    mc = ModifiedCost("f1-invariant", prob.cost, f1, xf)
    rng = np.random.default_rng(seed)
    pts = xf + radius * (1.0 + np.linalg.norm(xf)) * rng.uniform(-1, 1, size=(samples, xf.size))
    lie = [mc._lie(xf)] + [mc._lie(x) for x in pts]
    if max(abs(v) for v in lie) <= tol:
        return mc
    second = mc._lie2(xf)
    if not second > 0:
        raise AssumptionViolation(
            f"L_f1 c is not identically zero near x_f and L_f1^2 c(x_f) = {second:.3e} is not positive"
        )
    return ModifiedCost("f1-transverse", prob.cost, f1, xf)


# LQ data ---------------------------------------------------------------------


@dataclass(frozen=True)
class LQData:
    t: np.ndarray
    R: np.ndarray
    gdot: np.ndarray
    crossform: np.ndarray
    k: np.ndarray
    H12: float
    boundary_quad: float
    omega: np.ndarray | None = None
    boundary_linear: np.ndarray | None = None
    case: str = "f1-invariant"
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 4 or np.any(np.diff(t) <= 0):
            raise ValueError("LQ grid must be strictly increasing with at least 4 nodes")
        for name in ("t", "R", "gdot", "crossform", "k"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.gdot.shape != (t.size, self.dim) or self.crossform.shape != (t.size, self.dim):
            raise ValueError("gdot and crossform must be sampled on the grid")
        if self.k_nonzero and self.omega is None:
            kk = self.k
            object.__setattr__(self, "omega", kk / (kk @ kk))

    @property
    def dim(self) -> int:
        return self.k.size

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def k_nonzero(self) -> bool:
        return bool(np.linalg.norm(self.k) > 1e-12 * max(1.0, float(np.max(np.abs(self.gdot)))))

    @property
    def gamma_k(self) -> float:
        """``gamma''[k]^2 = H12 - L_k^2(-c~)``, independent of ``omega``."""
        return float(self.H12 - self.boundary_quad)

    @cached_property
    def splines(self):
        return (
            CubicSpline(self.t, self.R),
            CubicSpline(self.t, self.gdot, axis=0),
            CubicSpline(self.t, -self.crossform, axis=0),
        )

    def coefficients(self, t):
        """``R(t)``, ``gdot(t)`` and ``alpha(t) = -crossform(t)``."""
        sR, sb, sa = self.splines
        return sR(t), sb(t), sa(t)

    def R_scale(self) -> float:
        return float(np.max(np.abs(self.R)))

    def gamma(self, omega=None) -> np.ndarray:
        """Boundary quadratic form on ``T_x M`` for a covector ``omega`` with ``<omega, k> = 1``."""
        omega = self.omega if omega is None else np.asarray(omega, dtype=float)
        # d L_k(-c~); without it only its value on k is known
        ell = self.boundary_quad * omega if self.boundary_linear is None else np.asarray(self.boundary_linear)
        return self.H12 * np.outer(omega, omega) - 0.5 * (np.outer(omega, ell) + np.outer(ell, omega))


@dataclass(frozen=True)
class GermOptions:
    step: float = 1e-5
    rtol: float = 1e-11
    atol: float = 1e-13
    method: str = "DOP853"


def _transport_batch(prob: ControlAffineProblem, ext: BBSExtremal, xf: np.ndarray, opts: GermOptions):
    """Backward flow of ``(y, Psi)`` for ``y`` in a central-difference stencil around ``xf``.

    ``Psi(t) = d x(T) / d x(t)`` obeys ``Psi' = -Psi A(t)`` with ``Psi(T) = I``.
    All copies share one solver run so their steps coincide and differences
    between copies are smooth in the stencil offset.
    """
    n = prob.dim
    h = opts.step * (1.0 + float(np.linalg.norm(xf)))
    offsets = np.zeros((2 * n + 1, n))
    for i in range(n):
        offsets[1 + 2 * i, i] = h
        offsets[2 + 2 * i, i] = -h
    C = offsets.shape[0]
    ref = reference_field(prob, ext)
    y0 = np.concatenate([xf + offsets, np.broadcast_to(np.eye(n), (C, n, n)).reshape(C, n * n)], axis=1)

    def rhs(t, y):
        Y = y.reshape(C, n + n * n)
        x = Y[:, :n]
        Psi = Y[:, n:].reshape(C, n, n)
        dx = ref.at(t, x)
        dPsi = -Psi @ ref.jac_at(t, x)
        return np.concatenate([dx, dPsi.reshape(C, n * n)], axis=1).ravel()

    _, sol = integrate(rhs, y0.ravel(), ext.T, ext.tau1, rtol=opts.rtol, atol=opts.atol,
                       method=opts.method, breaks=(ext.tau2,), dense=True)

    def at(t):
        Y = sol(t).reshape(C, n + n * n)
        return Y[:, :n], Y[:, n:].reshape(C, n, n)

    return at, h


def _germ(at, t, field, h):
    """Value at ``xf`` and Jacobian of ``y -> Psi_t(y) field(S_t(y))``."""
    x, Psi = at(t)
    G = np.einsum("cij,cj->ci", Psi, field(x))
    n = x.shape[1]
    D = np.empty((n, n))
    for i in range(n):
        D[:, i] = (G[1 + 2 * i] - G[2 + 2 * i]) / (2 * h)
    return G[0], D


def assemble_lq(prob: ControlAffineProblem, ext: BBSExtremal, mc: Cost, grid: int = 201,
                opts: GermOptions | None = None) -> LQData:
    """Sample the LQ coefficients on ``grid`` uniform nodes of ``[tau2, T]``.

    ``gdot_t(x_f) = Psi(t) h23(x(t))`` and ``k = Psi(tau1) (h1 - h2)(x(tau1))``
    with ``Psi(t) = d x(T) / d x(t)``; their field germs are differentiated
    in the base point by the shared-step stencil of :func:`_transport_batch`.
    """
    opts = opts or GermOptions()
    n = prob.dim
    calc = prob.calc
    xf = np.asarray(ext.xf, dtype=float)
    at, h = _transport_batch(prob, ext, xf, opts)
    ts = np.linspace(ext.tau2, ext.T, grid)
    g = mc.grad(xf)
    Hc = mc.hess(xf)
    h23 = calc.h23
    gdot = np.empty((grid, n))
    cross = np.empty((grid, n))
    for j, t in enumerate(ts):
        b, D = _germ(at, t, h23, h)
        gdot[j] = b
        # L_z L_G c~ = z . (Hc b + D^T grad c~); stored with the opposite sign
        cross[j] = -(Hc @ b + D.T @ g)
    lam = ext.on_arc(ts, 3)
    R = calc.value("L", lam[:, :n], lam[:, n:])
    kfield = prob.h1 - prob.h2
    k, Dk = _germ(at, ext.tau1, kfield, h)
    ell = Hc @ k + Dk.T @ g  # d(L_K c~) at x_f
    boundary_quad = -float(k @ ell)
    H12 = float(calc.value("12", ext.ell1.x, ext.ell1.p))
    kk = float(k @ k)
    omega = k / kk if kk > 0 else None
    return LQData(
        t=ts, R=R, gdot=gdot, crossform=cross, k=k, H12=H12, boundary_quad=boundary_quad, omega=omega,
        boundary_linear=-ell, case=getattr(mc, "case", "given"),
        diagnostics={"fd_step": h, "gdot_T_residual":
                     float(np.max(np.abs(gdot[-1] - h23(xf))))},
    )


# Hamiltonian flow ----------------------------------------------------------------


@dataclass(frozen=True)
class LQFlow:
    """Fundamental solution with ``(mu, zeta)(T) = (0, e_i)`` in column ``i``."""

    t: np.ndarray
    M: np.ndarray
    Z: np.ndarray
    solution: object = field(repr=False, compare=False)

    def at(self, t):
        n = self.M.shape[1]
        y = self.solution(t)
        return y[: n * n].reshape(n, n), y[n * n :].reshape(n, n)


def lq_rhs(lq: LQData):
    n = lq.dim

    def rhs(t, y):
        R, b, a = lq.coefficients(t)
        M = y[: n * n].reshape(n, n)
        Z = y[n * n :].reshape(n, n)
        s = (b @ M + a @ Z) / R  # one row: switching function per column
        dM = np.outer(a, s)
        dZ = -np.outer(b, s)
        return np.concatenate([dM.ravel(), dZ.ravel()])

    return rhs


def lq_hamiltonian_flow(lq: LQData, rtol: float = 1e-11, atol: float = 1e-13) -> LQFlow:
    if np.any(lq.R <= 0):
        raise ValueError("R must be positive on the grid")
    n = lq.dim
    y0 = np.concatenate([np.zeros(n * n), np.eye(n).ravel()])
    sol = solve_ivp(lq_rhs(lq), (lq.T, lq.t0), y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    if sol.status != 0:
        raise IntegrationError(f"LQ Hamiltonian flow failed: {sol.message}", float(sol.t[-1]))
    Y = sol.sol(lq.t).T
    M = Y[:, : n * n].reshape(-1, n, n)
    Z = Y[:, n * n :].reshape(-1, n, n)
    M[-1] = 0.0
    Z[-1] = np.eye(n)
    return LQFlow(lq.t, M, Z, sol.sol)


# coercivity ------------------------------------------------------------------


@dataclass
class CoercivityReport:
    conjugate_pass: bool
    conjugate_margin: float
    conjugate_time: float
    sigma_min: float
    boundary_value: float | None
    boundary_pass: bool | None
    case: str
    margin: float
    oracle: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    @property
    def passed(self) -> bool:
        return self.conjugate_pass and self.boundary_pass is not False and self.case in ("f1-invariant", "f1-transverse")

    @property
    def signed_margin(self) -> float:
        """Smallest of the conjugate-point and boundary margins, signed."""
        vals = [self.conjugate_margin - self.margin]
        if self.boundary_value is not None:
            vals.append(self.boundary_value - self.margin)
        return float(min(vals))

    def _boundary_entry(self):
        if self.boundary_pass is None:
            return "skipped: k = 0"
        if self.boundary_value is None:
            return {"verdict": "fail", "value": None, "reason": "zeta block singular on [tau2, T]"}
        return {"verdict": "pass" if self.boundary_pass else "fail", "value": self.boundary_value}

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "case": self.case,
            "conjugate_point": {
                "verdict": "pass" if self.conjugate_pass else "fail",
                "signed_min_singular_value": self.conjugate_margin,
                "worst_time": self.conjugate_time,
                "min_singular_value": self.sigma_min,
            },
            "boundary": self._boundary_entry(),
            "margin": self.margin,
            "oracle": self.oracle,
            **self.extra,
        }


def conjugate_profile(flow: LQFlow) -> tuple[np.ndarray, np.ndarray]:
    """``sign(det Z) * sigma_min(Z)`` and ``sigma_min(Z)`` on the grid.

    The determinant sign comes from ``slogdet``, which does not underflow;
    a sign change between nodes reveals a crossing the grid stepped over.
    """
    sv = np.linalg.svd(flow.Z, compute_uv=False)
    smin = sv[:, -1]
    sign, _ = np.linalg.slogdet(flow.Z)
    return sign * smin, smin


def boundary_value(lq: LQData, flow: LQFlow, omega=None) -> float | None:
    """``gamma''[k]^2 + <mu(tau2), k>`` for the solution with ``zeta(tau2) = k``."""
    if not lq.k_nonzero:
        return None
    M0, Z0 = flow.M[0], flow.Z[0]
    dx = np.linalg.solve(Z0, lq.k)
    mu = M0 @ dx
    if omega is None:
        g = lq.gamma_k
    else:
        g = float(lq.k @ lq.gamma(omega) @ lq.k)
    return float(g + mu @ lq.k)


def default_margin(lq: LQData) -> float:
    return 1e-7 * lq.R_scale()


def coercivity_test(lq: LQData, flow: LQFlow, margin: float | None = None) -> CoercivityReport:
    margin = default_margin(lq) if margin is None else float(margin)
    signed, smin = conjugate_profile(flow)
    i = int(np.argmin(signed))
    conj_ok = bool(signed[i] > margin)
    bval, bpass = None, None
    if lq.k_nonzero:
        if conj_ok:
            bval = boundary_value(lq, flow)
            bpass = bool(bval > margin)
        else:
            bpass = False
    return CoercivityReport(
        conjugate_pass=conj_ok, conjugate_margin=float(signed[i]), conjugate_time=float(flow.t[i]),
        sigma_min=float(smin.min()), boundary_value=bval, boundary_pass=bpass, case=lq.case, margin=margin,
    )


# oracle ------------------------------------------------------------------------


def _gauss(m: int):
    return np.polynomial.legendre.leggauss(m)


def oracle_matrix(lq: LQData, N: int, quad: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Matrix ``Q`` with ``J = v^T Q v`` and the Gram matrix of ``v``.

    ``v = (e0, w_1..w_N)`` (``e0`` only when ``k != 0``) with ``w`` piecewise
    constant on ``N`` equal subintervals of ``[tau2, T]``.
    """
    if N < 8:
        raise ValueError("the oracle needs N >= 8 subintervals")
    sR, sb, sa = lq.splines
    Bint = sb.antiderivative()
    edges = np.linspace(lq.t0, lq.T, N + 1)
    hs = np.diff(edges)
    xg, wg = _gauss(quad)
    # quadrature nodes per subinterval, shape (N, quad)
    tq = 0.5 * (edges[:-1, None] + edges[1:, None]) + 0.5 * hs[:, None] * xg[None, :]
    wq = 0.5 * hs[:, None] * wg[None, :]
    Rq = sR(tq)
    aq = sa(tq)  # alpha at the nodes
    beta = Bint(tq) - Bint(edges[:-1])[:, None, :]  # int_{t_j}^t gdot
    Bj = Bint(edges[1:]) - Bint(edges[:-1])  # (N, n)
    Aj = np.einsum("jq,jqi->ji", wq, aq)  # int alpha over I_j
    self_term = np.einsum("jq,jqi,jqi->j", wq, aq, beta)
    intR = np.einsum("jq,jq->j", wq, Rq)

    Q = np.zeros((N, N))
    Q[np.arange(N), np.arange(N)] = 0.5 * intR + self_term
    low = 0.5 * (Aj @ Bj.T)  # [j, i] = A_j . B_i / 2
    tril = np.tril(low, -1)
    Q += tril + tril.T
    G = np.diag(hs)
    if lq.k_nonzero:
        col = 0.5 * (Aj @ lq.k)
        Q = np.block([[np.array([[0.5 * lq.gamma_k]]), col[None, :]], [col[:, None], Q]])
        G = np.block([[np.ones((1, 1)), np.zeros((1, N))], [np.zeros((N, 1)), G]])
    return Q, G


def quadratic_form_value(lq: LQData, N: int, v: np.ndarray, quad: int = 8) -> float:
    """Direct evaluation of the discretized form for one coefficient vector."""
    sR, sb, sa = lq.splines
    Bint = sb.antiderivative()
    edges = np.linspace(lq.t0, lq.T, N + 1)
    xg, wg = _gauss(quad)
    off = 1 if lq.k_nonzero else 0
    e0 = v[0] if off else 0.0
    w = v[off:]
    zeta0 = e0 * lq.k
    total = 0.5 * e0**2 * lq.gamma_k if off else 0.0
    for j in range(N):
        a_, b_ = edges[j], edges[j + 1]
        t = 0.5 * (a_ + b_) + 0.5 * (b_ - a_) * xg
        wt = 0.5 * (b_ - a_) * wg
        zeta = zeta0 + w[j] * (Bint(t) - Bint(a_))
        total += 0.5 * np.sum(wt * (sR(t) * w[j] ** 2 + 2 * w[j] * np.einsum("qi,qi->q", sa(t), zeta)))
        zeta0 = zeta0 + w[j] * (Bint(b_) - Bint(a_))
    return float(total)


def extended_second_variation(lq: LQData, cost: Cost, f1, xf, dx, eps0: float, eps1: float,
                              w=None, N: int = 64, tol: float = 1e-8) -> float:
    """Extended form before the reduction by ``c~``.

    ``lq`` must be assembled with ``cost`` itself. ``w`` holds piecewise
    constant values on ``N`` equal subintervals (``None`` means zero); the
    endpoint constraint ``zeta(T) = dx + eps1 f1(xf)`` is checked.
    """
    xf = np.asarray(xf, dtype=float)
    dx = np.asarray(dx, dtype=float)
    w = np.zeros(N) if w is None else np.asarray(w, dtype=float)
    N = w.size
    _, sb, _ = lq.splines
    Bint = sb.antiderivative()
    edges = np.linspace(lq.t0, lq.T, N + 1)
    zetaT = eps0 * lq.k + (w[:, None] * (Bint(edges[1:]) - Bint(edges[:-1]))).sum(axis=0)
    v1 = f1(xf)
    if np.linalg.norm(zetaT - dx - eps1 * v1) > tol * (1.0 + np.linalg.norm(zetaT)):
        raise ValueError("variation does not satisfy zeta(T) = dx + eps1 f1(x_f)")
    g, Hc = cost.grad(xf), cost.hess(xf)
    dlie = Hc @ v1 + f1.jac(xf).T @ g  # d(L_f1 c) at x_f
    v = np.concatenate([[eps0], w]) if lq.k_nonzero else w
    return float(-eps1 * (dx @ dlie) - 0.5 * eps1**2 * (v1 @ dlie) + quadratic_form_value(lq, N, v))


def coercivity_oracle(lq: LQData, N: int = 128, quad: int = 8) -> dict:
    """Smallest generalized eigenvalue of the discretized form against its Gram matrix.

    Restricting ``w`` to a subspace can only raise the minimum, so the oracle
    can miss a failure close to the threshold but never invents one.
    """
    Q, G = oracle_matrix(lq, N, quad)
    asym = float(np.max(np.abs(Q - Q.T)))
    lam = float(eigh(0.5 * (Q + Q.T), G, eigvals_only=True, subset_by_index=[0, 0])[0])
    return {"verdict": "pass" if lam > 0 else "fail", "min_eigenvalue": lam, "N": N, "asymmetry": asym}


# random instances ---------------------------------------------------------------


def random_lq_instance(rng: np.random.Generator, n: int | None = None, grid: int = 401,
                       with_k: bool | None = None) -> LQData:
    """Smooth random LQ data on ``[0, 1]`` from a few Fourier modes."""
    n = int(rng.integers(1, 4)) if n is None else n
    t = np.linspace(0.0, 1.0, grid)

    def smooth(shape, amp):
        out = np.zeros((grid,) + shape)
        for m in range(3):
            c = rng.normal(size=(2,) + shape) * amp / (1 + m)
            out += c[0] * np.cos(np.pi * m * t)[(...,) + (None,) * len(shape)]
            out += c[1] * np.sin(np.pi * (m + 1) * t)[(...,) + (None,) * len(shape)]
        return out

    R = 0.5 + rng.uniform(0, 1.5) + 0.3 * np.sin(2 * np.pi * t + rng.uniform(0, 6))
    gdot = smooth((n,), 1.0)
    cross = smooth((n,), rng.uniform(0.5, 4.0))
    if with_k is None:
        with_k = bool(rng.integers(0, 2))
    k = rng.normal(size=n) if with_k else np.zeros(n)
    return LQData(t=t, R=R, gdot=gdot, crossform=cross, k=k, H12=float(rng.uniform(0.1, 2.0)),
                  boundary_quad=float(rng.normal()))


# export ------------------------------------------------------------------------


def write_lq_csv(lq: LQData, path) -> None:
    n = lq.dim
    header = ["t", "R"] + [f"gdot{i + 1}" for i in range(n)] + [f"crossform{i + 1}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for j in range(lq.t.size):
            w.writerow([repr(float(v)) for v in [lq.t[j], lq.R[j], *lq.gdot[j], *lq.crossform[j]]])
