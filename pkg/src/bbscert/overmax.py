"""The overmaximised Hamiltonian flow and the numerical evidence built on it.

Points of ``T*M`` are stored as rows ``(x, p)`` of length ``2n``; batches are
arrays of shape ``(C, 2n)``. The flow runs backward from ``T``:

* on ``[tau2^, T]`` the Hamiltonian ``H~2 + v(t) F1`` with
  ``H~2 = H2 o exp(theta F1->)`` and ``theta`` solving ``H23 o exp(theta F1->) = 0``;
* below ``tau2^`` the ``H~2`` correction (only when ``H23 < 0``), then ``H2``
  down to the switch ``H1 = H2``, then ``H1``.
"""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .cotangent import CotangentPoint, lifted_flow_linearization, symplectic_matrix
from .extremal import BBSExtremal, CallableCost, ControlAffineProblem, Cost, reference_field
from .fieldalg import IntegrationError, rk4_flow
from .secondvar import LQData

log = logging.getLogger(__name__)


class OutsideNeighborhood(RuntimeError):
    """A solver for theta, t2 or tau1 failed: the point is too far from the extremal."""


@dataclass(frozen=True)
class OvermaxOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    method: str = "DOP853"
    theta_tol: float = 1e-13
    theta_maxiter: int = 30
    gradient: str = "chain"
    fd_step: float = 1e-6
    f1_steps: int = 16
    lin_step: float = 1e-6
    h23_tol: float = 1e-10  # |H23| below this counts as the boundary H23 = 0
    radius: float | None = None


def _split(Y):
    n = Y.shape[-1] // 2
    return Y[..., :n], Y[..., n:]


def lifted_field(f, Y):
    """``(f(x), -p Df(x))`` for a batch of covectors."""
    x, p = _split(Y)
    return np.concatenate([f(x), -np.einsum("...i,...ij->...j", p, f.jac(x))], axis=-1)


def lifted_field_jac(f, Y):
    x, p = _split(Y)
    n = x.shape[-1]
    A = f.jac(x)
    Hs = np.einsum("...i,...ijk->...jk", p, f.hess(x))
    B = np.zeros(Y.shape[:-1] + (2 * n, 2 * n))
    B[..., :n, :n] = A
    B[..., n:, :n] = -Hs
    B[..., n:, n:] = -np.swapaxes(A, -1, -2)
    return B


def lift_grad(f, Y):
    """Gradient ``(dF/dx, dF/dp)`` of ``F = <p, f(x)>``."""
    x, p = _split(Y)
    return np.concatenate([np.einsum("...i,...ij->...j", p, f.jac(x)), f(x)], axis=-1)


def hamiltonian_vector(grad):
    g = np.asarray(grad)
    gx, gp = _split(g)
    return np.concatenate([gp, -gx], axis=-1)


class OvermaxMachinery:
    """Solvers for ``theta``, ``t2``, ``tau1`` and the flow ``H_t``."""

    def __init__(self, prob: ControlAffineProblem, ext: BBSExtremal, mc: Cost | None = None,
                 opts: OvermaxOptions | None = None):
        self.prob, self.ext = prob, ext
        self.mc = mc if mc is not None else prob.cost
        self.opts = opts or OvermaxOptions()
        calc = prob.calc
        self.n = prob.dim
        self.f1 = calc.f1
        self.h1, self.h2 = prob.h1, prob.h2
        self.h23 = calc.h23
        self.Lfield = calc.field("L")
        self.f1_constant = bool(getattr(self.f1, "is_constant", lambda: False)())
        self.upsilon = reference_field(prob, ext).upsilon
        scale = float(np.max(np.abs(np.hstack([ext.x, ext.p]))))
        self.radius = self.opts.radius if self.opts.radius is not None else 0.1 * max(1.0, scale)

    # f1 flow -----------------------------------------------------------------
    def f1_flow(self, Y, theta, with_jacobian: bool = False):
        """``exp(theta F1->)`` applied row-wise, optionally with its derivative."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        theta = np.broadcast_to(np.asarray(theta, dtype=float), Y.shape[:-1])
        m = 2 * self.n
        if self.f1_constant:
            x, p = _split(Y)
            out = np.concatenate([x + theta[..., None] * self.f1(x), p], axis=-1)
            if with_jacobian:
                return out, np.broadcast_to(np.eye(m), Y.shape[:-1] + (m, m)).copy()
            return out
        if not with_jacobian:
            return rk4_flow(lambda y: lifted_field(self.f1, y), Y, theta, self.opts.f1_steps)
        V0 = np.broadcast_to(np.eye(m), Y.shape[:-1] + (m, m)).reshape(Y.shape[:-1] + (m * m,))

        def rhs(z):
            y = z[..., :m]
            V = z[..., m:].reshape(z.shape[:-1] + (m, m))
            return np.concatenate([lifted_field(self.f1, y),
                                   (lifted_field_jac(self.f1, y) @ V).reshape(z.shape[:-1] + (m * m,))], axis=-1)

        z = rk4_flow(rhs, np.concatenate([Y, V0], axis=-1), theta, self.opts.f1_steps)
        return z[..., :m], z[..., m:].reshape(Y.shape[:-1] + (m, m))

    # theta -----------------------------------------------------------------
    def solve_theta(self, Y) -> np.ndarray:
        """Batched Newton for ``H23(exp(theta F1->) l) = 0``; derivative ``L``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        theta = np.zeros(Y.shape[0])
        tol = self.opts.theta_tol * np.maximum(1.0, np.linalg.norm(Y, axis=-1))
        for _ in range(self.opts.theta_maxiter):
            Z = self.f1_flow(Y, theta)
            x, p = _split(Z)
            phi = np.einsum("ci,ci->c", p, self.h23(x))
            if np.all(np.abs(phi) <= tol):
                return theta
            L = np.einsum("ci,ci->c", p, self.Lfield(x))
            if np.any(L <= 0):
                raise OutsideNeighborhood("L is not positive along the f1 orbit")
            theta = theta - phi / L
        raise OutsideNeighborhood("theta iteration did not converge")

    def H2tilde(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        Z = self.f1_flow(Y, self.solve_theta(Y))
        x, p = _split(Z)
        return np.einsum("ci,ci->c", p, self.h2(x))

    def H2tilde_grad(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.opts.gradient == "fd":
            return self.H2tilde_grad_fd(Y)
        theta = self.solve_theta(Y)
        Z, D = self.f1_flow(Y, theta, with_jacobian=True)
        # the theta-derivative of H2 o exp(theta F1->) is -H23 = 0 at the solution
        return np.einsum("cji,cj->ci", D, lift_grad(self.h2, Z))

    def H2tilde_grad_fd(self, Y, step: float | None = None) -> np.ndarray:
        """Central differences of ``H~2`` with one Richardson extrapolation."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        h0 = self.opts.fd_step if step is None else step
        m = Y.shape[1]

        def central(h):
            G = np.empty_like(Y)
            for i in range(m):
                e = np.zeros(m)
                e[i] = h * max(1.0, float(np.max(np.abs(Y[:, i]))))
                G[:, i] = (self.H2tilde(Y + e) - self.H2tilde(Y - e)) / (2 * e[i])
            return G

        return (4.0 * central(h0 / 2) - central(h0)) / 3.0

    def singular_vector(self, t: float, Y) -> np.ndarray:
        Y = np.atleast_2d(Y)
        return hamiltonian_vector(self.H2tilde_grad(Y)) + self.upsilon(t) * lifted_field(self.f1, Y)

    # branches ------------------------------------------------------------------
    def _solve(self, rhs, y0, t0, t1, events=None, dense=True):
        sol = solve_ivp(rhs, (t0, t1), y0, method=self.opts.method, rtol=self.opts.rtol,
                        atol=self.opts.atol, dense_output=dense, events=events)
        if sol.status == -1:
            raise IntegrationError(f"overmaximised flow failed on [{t0}, {t1}]: {sol.message}", float(sol.t[-1]))
        return sol

    def singular_batch(self, Y_T, t_end: float | None = None):
        """Shared-step flow of ``H~2 + v F1`` for a batch from ``T`` down to ``t_end``."""
        Y_T = np.atleast_2d(np.asarray(Y_T, dtype=float))
        C, m = Y_T.shape
        t_end = self.ext.tau2 if t_end is None else t_end

        def rhs(t, y):
            return self.singular_vector(t, y.reshape(C, m)).ravel()

        sol = self._solve(rhs, Y_T.ravel(), self.ext.T, t_end)
        return lambda t: sol.sol(t).reshape(C, m), sol.y[:, -1].reshape(C, m)

    def _h23(self, y):
        x, p = _split(y)
        return float(p @ self.h23(x))

    def t2(self, ell_tilde: np.ndarray):
        """``t2`` and the state there; ``None`` when ``H23 >= 0`` (no correction)."""
        if self._h23(ell_tilde) >= -self.opts.h23_tol * max(1.0, float(np.linalg.norm(ell_tilde))):
            return None
        ext = self.ext

        def rhs(t, y):
            return hamiltonian_vector(self.H2tilde_grad(y[None, :]))[0]

        ev = lambda t, y: self._h23(y)  # noqa: E731
        ev.terminal = True
        sol = self._solve(rhs, ell_tilde, ext.tau2, ext.tau1, events=ev)
        if not sol.t_events[0].size:
            raise OutsideNeighborhood("H23 does not return to zero along the H~2 correction")
        return float(sol.t_events[0][0]), sol.y_events[0][0], sol

    def tau1(self, y_start: np.ndarray, t_start: float):
        """Switch time where ``H1 = H2`` along the backward ``H2`` flow."""
        h1, h2 = self.h1, self.h2

        def rhs(t, y):
            return lifted_field(h2, y)

        def ev(t, y):
            x, p = _split(y)
            return float(p @ h2(x) - p @ h1(x))

        # H2 - H1 is positive on the second bang arc and may vanish at its
        # upper end (h1 = h3); only the downward crossing is the switch
        ev.terminal = True
        ev.direction = -1
        sol = self._solve(rhs, y_start, t_start, 0.0, events=ev)
        if not sol.t_events[0].size:
            raise OutsideNeighborhood("no switch H1 = H2 found on the second bang arc")
        return float(sol.t_events[0][0]), sol.y_events[0][0], sol

    def continue_below(self, ell_tilde: np.ndarray) -> "BranchPath":
        """Branches of the flow below ``tau2^`` starting from ``l~ = H_{tau2^}(l)``."""
        ext = self.ext
        pieces = []
        corr = self.t2(ell_tilde)
        if corr is None:
            s2, y2 = ext.tau2, np.asarray(ell_tilde, dtype=float)
        else:
            s2, y2, sol = corr
            pieces.append(("H2tilde-correction", s2, ext.tau2, sol.sol))
        s1, y1, sol = self.tau1(y2, s2)
        pieces.append(("bang-2", s1, s2, sol.sol))
        sol0 = self._solve(lambda t, y: lifted_field(self.h1, y), y1, s1, 0.0)
        pieces.append(("bang-1", 0.0, s1, sol0.sol))
        return BranchPath(s2, s1, y2, y1, pieces)

    def trajectory(self, ell: CotangentPoint | np.ndarray) -> "OvermaxTrajectory":
        Y = ell.as_array() if isinstance(ell, CotangentPoint) else np.asarray(ell, dtype=float)
        at, end = self.singular_batch(Y[None, :])
        below = self.continue_below(end[0])
        return OvermaxTrajectory(self.ext.tau2, self.ext.T, lambda t: at(t)[0], below)

    def flow(self, t: float, ell) -> CotangentPoint:
        return self.trajectory(ell).point(t)

    # linearizations ---------------------------------------------------------------
    def _stencil(self, center: np.ndarray, directions: np.ndarray, step: float):
        C = [center]
        for d in directions.T:
            C.append(center + step * d)
            C.append(center - step * d)
        return np.array(C)

    def singular_linearization(self, ts: Sequence[float], ell: np.ndarray | None = None,
                               directions: np.ndarray | None = None) -> np.ndarray:
        """``H_{t*}`` at ``ell`` applied to ``directions`` for ``t`` in ``[tau2^, T]``."""
        Y = self.ext.ellT.as_array() if ell is None else np.asarray(ell, dtype=float)
        D = np.eye(Y.size) if directions is None else np.asarray(directions, dtype=float)
        h = self.opts.lin_step * max(1.0, float(np.linalg.norm(Y)))
        at, _ = self.singular_batch(self._stencil(Y, D, h), min(ts))
        out = []
        for t in ts:
            if t == self.ext.T:  # flow at its start time: exact identity
                out.append(D.copy())
                continue
            Z = at(t)
            out.append(((Z[1::2] - Z[2::2]) / (2 * h)).T)
        return np.array(out)


@dataclass
class BranchPath:
    tau2: float
    tau1: float
    y_tau2: np.ndarray
    y_tau1: np.ndarray
    pieces: list  # (name, t_lo, t_hi, dense)


@dataclass
class OvermaxTrajectory:
    tau2_hat: float
    T: float
    singular: object = field(repr=False)
    below: BranchPath = None

    def branch(self, t: float) -> str:
        if t >= self.tau2_hat:
            return "singular"
        for name, lo, hi, _ in self.below.pieces:
            if lo <= t <= hi:
                return name
        raise ValueError(f"time {t} outside [0, T]")

    def state(self, t: float) -> np.ndarray:
        if t >= self.tau2_hat:
            return self.singular(t)
        for name, lo, hi, sol in self.below.pieces:
            if lo <= t <= hi:
                return sol(t)
        raise ValueError(f"time {t} outside [0, T]")

    def point(self, t: float) -> CotangentPoint:
        return CotangentPoint.from_array(self.state(t))

    @property
    def switching_times(self) -> tuple[float, float]:
        return self.below.tau2, self.below.tau1


# invertibility probe ----------------------------------------------------------


def tilted_lagrangian(base: Cost, xf: np.ndarray, Q: np.ndarray) -> Cost:
    """``base + (x - xf)' Q (x - xf) / 2``: same covector at ``xf``, different ``Lambda``."""
    xf = np.asarray(xf, dtype=float)
    Q = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)

    def value(x):
        d = x - xf
        return base.value(x) + 0.5 * np.einsum("...i,ij,...j->...", d, Q, d)

    return CallableCost(xf.size, value, lambda x: base.grad(x) + (x - xf) @ Q,
                        lambda x: base.hess(x) + Q)


def lagrangian_basis(mc: Cost, xf: np.ndarray) -> np.ndarray:
    """Columns ``(e_i, -Hess c~ e_i)`` spanning ``T Lambda`` at ``(xf, -grad c~(xf))``."""
    n = xf.size
    return np.vstack([np.eye(n), -np.asarray(mc.hess(xf), dtype=float)])


@dataclass
class ProbeReport:
    rows: list  # dicts: t, branch, sigma_min, signed
    tau1_rows: list
    injectivity: dict
    disclaimer: str = ("sampled evidence only: singular values on a finite grid and pairwise "
                       "distances of finitely many points; this does not prove invertibility")

    @property
    def min_signed(self) -> float:
        vals = [r["signed"] for r in self.rows] + [r["sigma_min"] for r in self.tau1_rows]
        return float(min(vals))

    @property
    def passed(self) -> bool:
        return bool(self.min_signed > 0 and self.injectivity.get("min_ratio", 0.0) > 0)

    def as_dict(self) -> dict:
        worst = min(self.rows, key=lambda r: r["signed"])
        return {
            "verdict": "pass" if self.passed else "fail",
            "min_signed_singular_value": self.min_signed,
            "worst_time": worst["t"],
            "tau1_min_over_a": min(r["sigma_min"] for r in self.tau1_rows) if self.tau1_rows else None,
            "injectivity": self.injectivity,
            "grid_points": len(self.rows),
            "disclaimer": self.disclaimer,
        }


def _signed_smin(A: np.ndarray) -> tuple[float, float]:
    s = np.linalg.svd(A, compute_uv=False)[-1]
    sign, _ = np.linalg.slogdet(A)
    return float(sign * s), float(s)


def probe_grid(ext: BBSExtremal, count: int, avoid: float | None = None) -> np.ndarray:
    """Uniform grid on ``[0, T]`` with nodes near ``tau1^`` pushed away."""
    avoid = 1e-3 * ext.T if avoid is None else avoid
    ts = np.linspace(0.0, ext.T, count)
    near = np.abs(ts - ext.tau1) < avoid
    ts[near] = np.where(ts[near] < ext.tau1, ext.tau1 - avoid, ext.tau1 + avoid)
    return np.unique(ts)


def invertibility_probe(mach: OvermaxMachinery, ts: Sequence[float], lagrangian: Cost | None = None,
                        samples: int = 6, sample_radius: float = 1e-3, seed: int = 0,
                        a_values: Sequence[float] = tuple(np.linspace(0.0, 1.0, 11))) -> ProbeReport:
    """Finite-difference linearization of ``x -> pi H_t(x, -grad c~(x))`` at ``x_f``.

    ``lagrangian`` replaces ``c~`` when building ``Lambda``; it must have the
    same gradient at ``x_f`` so that ``Lambda`` still contains ``l_T``.
    """
    ext, n = mach.ext, mach.n
    lag = mach.mc if lagrangian is None else lagrangian
    xf = np.asarray(ext.xf, dtype=float)
    ellT = ext.ellT.as_array()
    B = lagrangian_basis(lag, xf)
    h = mach.opts.lin_step * max(1.0, float(np.linalg.norm(ellT)))
    stencil = mach._stencil(ellT, B, h)
    ts = np.sort(np.asarray(ts, dtype=float))
    at, end = mach.singular_batch(stencil)
    paths = [mach.continue_below(y) for y in end]
    traj = [OvermaxTrajectory(ext.tau2, ext.T, (lambda t, i=i: at(t)[i]), p) for i, p in enumerate(paths)]

    rows = []
    for t in ts:
        X = np.array([tr.state(t)[:n] for tr in traj])
        A = ((X[1::2] - X[2::2]) / (2 * h)).T
        signed, smin = _signed_smin(A)
        rows.append({"t": float(t), "branch": traj[0].branch(t), "sigma_min": smin, "signed": signed})

    tau1_rows = []
    if a_values:
        t1 = ext.tau1
        M_h2, M_h1 = [], []
        for p in paths:
            s2, y2 = p.tau2, p.y_tau2
            s1, y1 = p.tau1, p.y_tau1
            # keep flowing H2 to tau1^ (no switch) versus switch at tau1(l~) then H1 to tau1^
            y_keep = mach._solve(lambda t, y: lifted_field(mach.h2, y), y2, s2, t1, dense=False).y[:, -1]
            y_sw = y1 if s1 == t1 else mach._solve(lambda t, y: lifted_field(mach.h1, y), y1, s1, t1,
                                                   dense=False).y[:, -1]
            M_h2.append(y_keep[:n])
            M_h1.append(y_sw[:n])
        M_h2, M_h1 = np.array(M_h2), np.array(M_h1)
        A_minus = ((M_h2[1::2] - M_h2[2::2]) / (2 * h)).T
        A_plus = ((M_h1[1::2] - M_h1[2::2]) / (2 * h)).T
        for a in a_values:
            s = float(np.linalg.svd((1 - a) * A_minus + a * A_plus, compute_uv=False)[-1])
            tau1_rows.append({"t": float(t1), "a": float(a), "sigma_min": s})

    rng = np.random.default_rng(seed)
    scale = sample_radius * max(1.0, float(np.linalg.norm(xf)))
    pts = xf + scale * rng.uniform(-1, 1, size=(samples, n))
    ells = np.array([np.concatenate([x, -np.asarray(lag.grad(x), dtype=float)]) for x in pts])
    at_s, end_s = mach.singular_batch(ells)
    traj_s, kept = [], []
    for i, y in enumerate(end_s):
        try:
            path = mach.continue_below(y)
        except OutsideNeighborhood as exc:
            log.warning("injectivity sample %d dropped: %s", i, exc)
            continue
        traj_s.append(OvermaxTrajectory(ext.tau2, ext.T, (lambda t, i=i: at_s(t)[i]), path))
        kept.append(i)
    check_ts = [ts[0], ts[len(ts) // 2], ext.tau1, ts[-1]]
    ratios = []
    for t in check_ts:
        P = np.array([tr.state(t)[:n] for tr in traj_s])
        for a, b in itertools.combinations(range(len(kept)), 2):
            dx = np.linalg.norm(pts[kept[a]] - pts[kept[b]])
            ratios.append(float(np.linalg.norm(P[a] - P[b]) / dx))
    injectivity = {"samples": samples, "used": len(kept), "radius": scale,
                   "times": [float(t) for t in check_ts],
                   "min_ratio": float(min(ratios)) if ratios else float("nan")}
    return ProbeReport(rows, tau1_rows, injectivity)


def write_probe_csv(report: ProbeReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "branch", "sigma_min", "signed_sigma_min", "a"])
        for r in report.rows:
            w.writerow([repr(r["t"]), r["branch"], repr(r["sigma_min"]), repr(r["signed"]), ""])
        for r in report.tau1_rows:
            w.writerow([repr(r["t"]), "tau1-convex", repr(r["sigma_min"]), "", repr(r["a"])])


# iota conjugacy -----------------------------------------------------------------


def iota_matrix(hess_ct: np.ndarray) -> np.ndarray:
    """``iota(mu, zeta) = (zeta, -mu - Hess c~ zeta)`` in ``(dx, dp)`` layout."""
    n = hess_ct.shape[0]
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    J[n:, n:] = -hess_ct
    return J


def lq_transition(lq: LQData, ts: Sequence[float], rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """Full ``2n x 2n`` transition of the LQ Hamiltonian system from ``T`` to each ``t``.

    Ordering of coordinates is ``(mu, zeta)``.
    """
    n = lq.dim
    m = 2 * n

    def rhs(t, y):
        R, b, a = lq.coefficients(t)
        Y = y.reshape(m, m)
        mu, zeta = Y[:n], Y[n:]
        s = (b @ mu + a @ zeta) / R
        return np.vstack([np.outer(a, s), -np.outer(b, s)]).ravel()

    sol = solve_ivp(rhs, (lq.T, lq.t0), np.eye(m).ravel(), method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True)
    return np.array([sol.sol(t).reshape(m, m) for t in ts])


def iota_conjugacy_check(mach: OvermaxMachinery, lq: LQData, ts: Sequence[float]) -> dict:
    """Max over ``ts`` of ``|iota H''_t iota^-1 - F_t*^-1 H_t*|`` (entrywise)."""
    prob, ext, n = mach.prob, mach.ext, mach.n
    ts = np.asarray(ts, dtype=float)
    iota = iota_matrix(np.asarray(mach.mc.hess(ext.xf), dtype=float))
    iota_inv = np.linalg.inv(iota)
    lin_lq = lq_transition(lq, ts)
    Hstar = mach.singular_linearization(ts)
    ref = reference_field(prob, ext)
    residuals = []
    ellT = ext.ellT
    for t, P, Hs in zip(ts, lin_lq, Hstar):
        if t == ext.T:
            Fs = np.eye(2 * n)
        else:
            _, Fs, _ = lifted_flow_linearization(ref, ellT, ext.T, t, rtol=1e-12, atol=1e-14)
        lhs = iota @ P @ iota_inv
        rhs = np.linalg.solve(Fs, Hs)
        residuals.append(float(np.max(np.abs(lhs - rhs))))
    i = int(np.argmax(residuals))
    return {"max_residual": residuals[i], "worst_time": float(ts[i]), "residuals": residuals,
            "times": ts.tolist()}


def antisymplectic_defect(hess_ct: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """``sigma(iota a, iota b) + sigma(a, b)`` with ``sigma`` on ``(mu, zeta)`` pairs.

    The form on pairs ``(mu, zeta)`` is ``mu . zeta' - mu' . zeta``, the same
    as on ``(dx, dp)`` read with ``mu`` as the covector part.
    """
    n = hess_ct.shape[0]
    S = symplectic_matrix(n)
    iota = iota_matrix(hess_ct)
    # (mu, zeta) -> (zeta, mu) reorders to the (dx, dp) layout used by S
    P = np.block([[np.zeros((n, n)), np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    return float((iota @ a) @ S @ (iota @ b) + (P @ a) @ S @ (P @ b))


# perturbation study ---------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """Control on ``[t0, t1]``: a vertex index or ``"singular"`` with an amplitude profile."""

    t0: float
    t1: float
    kind: str
    vertex: int | None = None
    wiggle: tuple = ()


def _reference_segments(prob: ControlAffineProblem, ext: BBSExtremal, tau1: float, tau2: float) -> list:
    i1, i2, _ = prob.edge
    segs = [Segment(0.0, tau1, "vertex", i1), Segment(tau1, tau2, "vertex", i2)]
    if ext.T > tau2:
        segs.append(Segment(tau2, ext.T, "singular"))
    return segs


def _insert(segs: list, a: float, b: float, vertex: int) -> list:
    out = []
    for s in segs:
        if s.t1 <= a or s.t0 >= b:
            out.append(s)
            continue
        if s.t0 < a:
            out.append(Segment(s.t0, a, s.kind, s.vertex, s.wiggle))
        out.append(Segment(max(a, s.t0), min(b, s.t1), "vertex", vertex))
        if s.t1 > b:
            out.append(Segment(b, s.t1, s.kind, s.vertex, s.wiggle))
    # merge consecutive needle pieces
    merged = []
    for s in out:
        if merged and s.kind == "vertex" and merged[-1].kind == "vertex" and merged[-1].vertex == s.vertex \
                and merged[-1].t1 == s.t0:
            merged[-1] = Segment(merged[-1].t0, s.t1, "vertex", s.vertex)
        else:
            merged.append(s)
    return merged


class AdmissibleIntegrator:
    """Forward integration of admissible controls near the reference."""

    def __init__(self, prob: ControlAffineProblem, ext: BBSExtremal, rtol: float = 1e-12, atol: float = 1e-13,
                 grid: int = 401):
        self.prob, self.ext = prob, ext
        self.rtol, self.atol = rtol, atol
        self.upsilon = reference_field(prob, ext).upsilon
        self.f1 = prob.calc.f1
        self.grid = np.linspace(0.0, ext.T, grid)
        self.ref_segments = _reference_segments(prob, ext, ext.tau1, ext.tau2)
        self.ref_x, self.ref_path = self.run(self.ref_segments)

    def _control(self, seg: Segment, t: float) -> float:
        v = self.upsilon(min(max(t, self.ext.tau2), self.ext.T))
        for amp, freq, phase in seg.wiggle:
            v += amp * np.sin(freq * (t - seg.t0) + phase)
        return float(min(max(v, 0.0), 1.0))

    def run(self, segments: list):
        x = self.prob.x0.copy()
        path_t, path_x = [], []
        for seg in segments:
            if seg.t1 <= seg.t0:
                continue
            if seg.kind == "vertex":
                f = self.prob.fields[seg.vertex]
                rhs = lambda t, y, f=f: f(y)  # noqa: E731
            else:
                h2, f1 = self.prob.h2, self.f1
                rhs = lambda t, y, seg=seg: h2(y) + self._control(seg, t) * f1(y)  # noqa: E731
            sol = solve_ivp(rhs, (seg.t0, seg.t1), x, method="DOP853", rtol=self.rtol, atol=self.atol,
                            dense_output=True)
            if sol.status != 0:
                raise IntegrationError(f"forward integration failed on [{seg.t0}, {seg.t1}]", float(sol.t[-1]))
            x = sol.y[:, -1].copy()
            inside = self.grid[(self.grid >= seg.t0) & (self.grid <= seg.t1)]
            if inside.size:
                path_t.append(inside)
                path_x.append(sol.sol(inside).T)
        t = np.concatenate(path_t)
        _, idx = np.unique(t, return_index=True)
        return x, np.concatenate(path_x)[idx]

    def cost(self, x) -> float:
        return float(self.prob.cost.value(x))

    @property
    def ref_cost(self) -> float:
        return self.cost(self.ref_x)


def _active_vertex(integ: "AdmissibleIntegrator", t: float) -> int | None:
    for seg in integ.ref_segments:
        if seg.t0 <= t < seg.t1:
            return seg.vertex if seg.kind == "vertex" else None
    return None


def random_perturbation(rng: np.random.Generator, integ: AdmissibleIntegrator) -> tuple[str, list]:
    """One needle, singular wiggle or switching-time dither, sized to stay mostly in the tube."""
    prob, ext = integ.prob, integ.ext
    kind = ["needle", "wiggle", "dither"][int(rng.integers(0, 3))]
    if kind == "needle":
        width = float(rng.uniform(1e-3, 1e-2))
        a = float(rng.uniform(0.0, ext.T - width))
        # a needle of the active vertex would change nothing
        active = _active_vertex(integ, a)
        choices = [i for i in range(len(prob.fields)) if i != active]
        vertex = int(choices[int(rng.integers(0, len(choices)))])
        segs = _insert(integ.ref_segments, a, a + width, vertex)
        return f"needle vertex={vertex + 1} t=[{a:.6f},{a + width:.6f}]", segs
    if kind == "wiggle":
        terms = tuple((float(rng.uniform(-0.04, 0.04)), float(rng.uniform(0.5, 12.0)), float(rng.uniform(0, 2 * np.pi)))
                      for _ in range(int(rng.integers(1, 4))))
        segs = [s if s.kind != "singular" else Segment(s.t0, s.t1, "singular", None, terms) for s in integ.ref_segments]
        desc = "wiggle " + ";".join(f"{a:.4f}*sin({w:.4f}(t-tau2)+{p:.4f})" for a, w, p in terms)
        return desc, segs
    d1, d2 = (float(v) for v in rng.uniform(-0.008, 0.008, size=2))
    return f"dither d1={d1:.6f} d2={d2:.6f}", dithered_segments(integ, d1, d2)


def dithered_segments(integ: AdmissibleIntegrator, d1: float, d2: float = 0.0) -> list:
    ext = integ.ext
    t1 = ext.tau1 + d1
    t2 = ext.tau2 + d2
    if not 0.0 < t1 < t2 <= ext.T:
        raise ValueError("dither violates 0 < tau1 < tau2 <= T")
    return _reference_segments(integ.prob, ext, t1, t2)


@dataclass
class PerturbationReport:
    trials: list  # dicts: id, descriptor, gap, in_tube
    discarded: int
    min_gap: float
    tube_radius: float
    dither_fit: dict | None = None

    @property
    def passed(self) -> bool:
        return self.min_gap >= -1e-9

    def as_dict(self) -> dict:
        return {
            "verdict": "pass" if self.passed else "fail",
            "min_gap": self.min_gap,
            "accepted": len([t for t in self.trials if t["in_tube"]]),
            "discarded": self.discarded,
            "tube_radius": self.tube_radius,
            "dither_fit": self.dither_fit,
        }


def compare_admissible(prob: ControlAffineProblem, ext: BBSExtremal, trials: int = 100, seed: int = 0,
                       tube_radius: float = 0.05, dithers: Sequence[float] = (0.0025, 0.005, 0.01, 0.02),
                       integ: AdmissibleIntegrator | None = None) -> PerturbationReport:
    """Cost gaps ``c(xi(T)) - c(x_f)`` of random admissible perturbations.

    The baseline ``x_f`` is the forward integration of the unperturbed
    schedule with the same integrator, so a zero perturbation gives 0.
    """
    integ = integ or AdmissibleIntegrator(prob, ext)
    rng = np.random.default_rng(seed)
    base = integ.ref_cost
    rows, discarded = [], 0
    for i in range(trials):
        desc, segs = random_perturbation(rng, integ)
        x, path = integ.run(segs)
        dev = float(np.max(np.abs(path - integ.ref_path)))
        inside = dev <= tube_radius
        if not inside:
            discarded += 1
        rows.append({"id": i, "descriptor": desc, "gap": integ.cost(x) - base, "in_tube": inside, "deviation": dev})
    accepted = [r["gap"] for r in rows if r["in_tube"]]
    fit = dither_fit(integ, dithers) if dithers else None
    return PerturbationReport(rows, discarded, float(min(accepted)) if accepted else float("nan"), tube_radius, fit)


def dither_fit(integ: AdmissibleIntegrator, dithers: Sequence[float]) -> dict:
    """Least-squares exponent of ``gap ~ C |d|^q`` over ``tau1`` dithers of both signs."""
    base = integ.ref_cost
    ds, gaps = [], []
    for d in dithers:
        for s in (1.0, -1.0):
            x, _ = integ.run(dithered_segments(integ, s * d))
            ds.append(s * d)
            gaps.append(integ.cost(x) - base)
    ds, gaps = np.array(ds), np.array(gaps)
    ok = gaps > 0
    q = float("nan")
    if ok.sum() >= 2:
        q = float(np.polyfit(np.log(np.abs(ds[ok])), np.log(gaps[ok]), 1)[0])
    return {"dithers": ds.tolist(), "gaps": gaps.tolist(), "exponent": q, "all_positive": bool(np.all(ok))}


def write_perturb_csv(report: PerturbationReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "perturbation", "cost_gap", "in_tube", "deviation"])
        for r in report.trials:
            w.writerow([r["id"], r["descriptor"], repr(r["gap"]), int(r["in_tube"]), repr(r["deviation"])])
