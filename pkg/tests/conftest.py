"""Shared fixtures: the Van der Pol extremal is solved once per session."""
from __future__ import annotations

import contextlib
import io
import json
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from bbscert.cli import main
from bbscert.extremal import ControlAffineProblem, PolynomialCost, shoot_bbs
from bbscert.fieldalg import PolynomialField
from bbscert.overmax import OvermaxMachinery
from bbscert.poly import Polynomial
from bbscert.problems import vanderpol_problem
from bbscert.secondvar import assemble_lq, build_ctilde, lq_hamiltonian_flow

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def vdp():
    prob, guess = vanderpol_problem()
    return prob, guess


@pytest.fixture(scope="session")
def vdp_ext(vdp):
    prob, guess = vdp
    return shoot_bbs(prob, guess)


@pytest.fixture(scope="session")
def vdp_lq(vdp, vdp_ext):
    prob, _ = vdp
    mc = build_ctilde(prob, vdp_ext)
    lq = assemble_lq(prob, vdp_ext, mc)
    return mc, lq, lq_hamiltonian_flow(lq)


@pytest.fixture(scope="session")
def vdp_mach(vdp, vdp_ext, vdp_lq):
    prob, _ = vdp
    return OvermaxMachinery(prob, vdp_ext, vdp_lq[0])


def run_cli(*argv) -> tuple[int, str, str]:
    """Exit code, stdout and stderr of one in-process CLI call."""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="session")
def certify_run(tmp_path_factory):
    """``certify configs/vanderpol.toml --json --out <dir>`` run once per session."""
    out = tmp_path_factory.mktemp("certify")
    t0 = time.perf_counter()
    code, stdout, stderr = run_cli("certify", CONFIGS / "vanderpol.toml", "--json", "--out", out)
    elapsed = time.perf_counter() - t0
    return {"code": code, "verdict": json.loads(stdout), "stdout": stdout, "stderr": stderr, "out": out,
            "elapsed": elapsed}


def tracking_problem(tau1=0.5, tau2=1.5, T=2.5, kappa=-0.5):
    """Track ``r(t)`` with ``|u| <= 1``; junctions hold exactly at ``tau1, tau2``.

    On ``[tau1, tau2]`` the tracking error is ``kappa (t - s)(tau2 - t)``
    with ``s = tau2 - 2 (tau2 - tau1) / 3``, whose integral vanishes, so the
    adjoint ``p1`` is zero at both switching times.
    """
    s = tau2 - 2 * (tau2 - tau1) / 3
    x1, x2, x3 = (Polynomial.variable(3, i) for i in range(3))
    r = x2 - 2 * tau1 - kappa * (x2 - s) * (tau2 - x2)
    q = 0.5 * (x1 - r) ** 2
    one = Polynomial.constant(3, 1.0)
    h_minus = PolynomialField([-1 * one, one, q])
    h_plus = PolynomialField([one, one, q])
    prob = ControlAffineProblem(fields=(h_minus, h_plus), cost=PolynomialCost(x3), x0=np.zeros(3), T=T,
                                edge=(0, 1, 0), names=("x1", "x2", "x3"), label="tracking")
    return prob, r


def poly_strategy(nvars: int, max_terms: int = 4, max_degree: int = 3):
    """Random polynomials with small integer-like coefficients."""
    mono = st.tuples(*[st.integers(0, max_degree) for _ in range(nvars)]).filter(lambda e: sum(e) <= max_degree)
    coef = st.floats(-2, 2, allow_nan=False).map(lambda c: round(c, 3))
    return st.dictionaries(mono, coef, min_size=1, max_size=max_terms).map(lambda d: Polynomial(nvars, d))


def field_strategy(n: int):
    return st.lists(poly_strategy(n), min_size=n, max_size=n).map(PolynomialField)


def random_poly_field(rng: np.random.Generator, n: int, terms: int = 4, degree: int = 3) -> PolynomialField:
    comps = []
    for _ in range(n):
        d = {}
        for _ in range(terms):
            e = rng.multinomial(int(rng.integers(0, degree + 1)), [1 / (n + 1)] * (n + 1))[:n]
            d[tuple(int(v) for v in e)] = float(np.round(rng.uniform(-2, 2), 3))
        comps.append(Polynomial(n, d))
    return PolynomialField(comps)


# acceptance report ------------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record():
    """``record(number, ok, detail)`` stores one criterion line for the summary."""

    def _record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
