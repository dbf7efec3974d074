import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from bbscert.cotangent import (
    BracketCalculus,
    CotangentPoint,
    adjoint_flow,
    lifted_value,
    parse_word,
    poisson_lifted,
    symplectic_form,
    symplectic_matrix,
)
from bbscert.fieldalg import DimensionError, PolynomialField, lie_bracket

from conftest import random_poly_field


def vdp_calc(prob):
    return BracketCalculus(prob.h1, prob.h2, prob.h3)


def test_cotangent_point_validates():
    with pytest.raises(DimensionError):
        CotangentPoint(np.zeros(3), np.zeros(2))
    ell = CotangentPoint([1.0, 2.0], [3.0, 4.0])
    assert CotangentPoint.from_array(ell.as_array()) == ell
    assert ell.scaled(2.0) != ell


def test_lifted_values(vdp):
    prob, _ = vdp
    calc = vdp_calc(prob)
    x = np.array([0.3, -0.2, 1.0])
    assert lifted_value(prob.h2, CotangentPoint(x, np.zeros(3))) == 0.0
    assert lifted_value(calc.f1, CotangentPoint(x, [0.0, 0.0, -1.0])) == 0.0
    assert lifted_value(prob.h2, CotangentPoint([0.0, 1.0, 0.0], [1.0, 0.0, 0.0])) == pytest.approx(1.0)


def test_poisson_words(vdp):
    prob, _ = vdp
    calc = vdp_calc(prob)
    rng = np.random.default_rng(0)
    for _ in range(5):
        x, p = rng.normal(size=3), rng.normal(size=3)
        ell = CotangentPoint(x, p)
        assert poisson_lifted("22", ell, calc) == 0.0
        assert poisson_lifted("L", ell, calc) == pytest.approx(-4 * p[2], abs=1e-13)
        assert poisson_lifted("L", ell, calc) == pytest.approx(
            poisson_lifted("323", ell, calc) + poisson_lifted("232", ell, calc), abs=1e-12)
    assert poisson_lifted("23", CotangentPoint(np.zeros(3), [1.0, 0.0, 0.0]), calc) == pytest.approx(2.0)
    assert poisson_lifted("2f1", CotangentPoint(np.zeros(3), [1.0, 0.0, 0.0]), calc) == pytest.approx(2.0)


def test_parse_word():
    assert parse_word("232") == ("2", "3", "2")
    assert parse_word("2 f1") == ("2", "f1")
    assert parse_word("2f1") == ("2", "f1")
    with pytest.raises(ValueError):
        parse_word("24")
    with pytest.raises(ValueError):
        parse_word("2323")


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_poisson_equals_lift_of_lie(seed):
    rng = np.random.default_rng(seed)
    h1, h2, h3 = (random_poly_field(rng, 3) for _ in range(3))
    calc = BracketCalculus(h1, h2, h3)
    x, p = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
    ell = CotangentPoint(x, p)
    for a, b, fa, fb in (("1", "2", h1, h2), ("2", "3", h2, h3), ("3", "1", h3, h1)):
        direct = p @ lie_bracket(fa, fb, x)
        assert abs(poisson_lifted(a + b, ell, calc) - direct) <= 1e-10 * max(1.0, abs(direct))


def test_poisson_bracket_is_derivative_along_flow():
    # {F, G} is the derivative of G along the Hamiltonian flow of F
    rng = np.random.default_rng(11)
    f, g = random_poly_field(rng, 2), random_poly_field(rng, 2)
    calc = BracketCalculus(f, g, g)
    x, p = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
    h = 1e-5
    fwd = adjoint_flow(f, CotangentPoint(x, p), 0.0, h, rtol=1e-13, atol=1e-15).end
    bwd = adjoint_flow(f, CotangentPoint(x, p), 0.0, -h, rtol=1e-13, atol=1e-15).end
    deriv = (lifted_value(g, fwd) - lifted_value(g, bwd)) / (2 * h)
    assert deriv == pytest.approx(poisson_lifted("12", CotangentPoint(x, p), calc), rel=1e-6, abs=1e-7)


def test_adjoint_flow_examples():
    const = PolynomialField.constant([1.0, -1.0])
    traj = adjoint_flow(const, CotangentPoint([0.0, 0.0], [0.3, 0.7]), 1.0, 0.0)
    np.testing.assert_array_equal(traj.end.p, [0.3, 0.7])

    rng = np.random.default_rng(2)
    f = random_poly_field(rng, 2, degree=2)
    ell = CotangentPoint([0.2, -0.1], [1.0, 0.5])
    traj = adjoint_flow(f, ell, 0.5, 0.0, rtol=1e-12, atol=1e-14)
    vals = [lifted_value(f, traj(t)) for t in np.linspace(0.0, 0.5, 7)]
    assert np.ptp(vals) <= 1e-8

    A = np.array([[0.0, 1.0], [-1.0, -0.2]])
    lin = PolynomialField.linear(A)
    pT = np.array([1.0, 2.0])
    traj = adjoint_flow(lin, CotangentPoint([1.0, 0.0], pT), 1.0, 0.0, rtol=1e-12, atol=1e-14)
    ref = pT @ expm(1.0 * A)
    assert np.linalg.norm(traj.end.p - ref) <= 1e-9 * np.linalg.norm(ref)


def test_fiber_linearity():
    rng = np.random.default_rng(4)
    f = random_poly_field(rng, 3, degree=2)
    x, p = rng.uniform(-0.5, 0.5, 3), rng.uniform(-1, 1, 3)
    a = adjoint_flow(f, CotangentPoint(x, p), 0.3, 0.0, rtol=1e-12, atol=1e-14).end
    b = adjoint_flow(f, CotangentPoint(x, 2 * p), 0.3, 0.0, rtol=1e-12, atol=1e-14).end
    assert np.linalg.norm(b.p - 2 * a.p) <= 1e-10 * np.linalg.norm(b.p)


def test_symplectic_form():
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=6), rng.normal(size=6)
    assert symplectic_form(u, v) == pytest.approx(u[3:] @ v[:3] - v[3:] @ u[:3])
    assert symplectic_form(u, v) == pytest.approx(u @ symplectic_matrix(3) @ v)
    assert symplectic_form(u, u) == 0.0
