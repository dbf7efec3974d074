import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from bbscert.fieldalg import (
    CallableField,
    DimensionError,
    FlowSegment,
    IntegrationError,
    PolynomialField,
    TimeField,
    bracket_field,
    fd_lie_bracket,
    flow,
    lie_bracket,
    transport_vector,
)

from conftest import field_strategy, random_poly_field

F1 = PolynomialField.constant([0.0, -2.0, 0.0])


def test_bracket_with_itself_vanishes(vdp):
    prob, _ = vdp
    x = np.array([0.4, -0.7, 1.1])
    np.testing.assert_array_equal(lie_bracket(prob.h2, prob.h2, x), np.zeros(3))


def test_vanderpol_brackets(vdp):
    prob, _ = vdp
    x = np.array([1.0, 1.0, 0.0])
    np.testing.assert_allclose(lie_bracket(prob.h2, F1, x), [2.0, 0.0, 2.0], atol=1e-14)
    np.testing.assert_allclose(fd_lie_bracket(prob.h2, F1, x), [2.0, 0.0, 2.0], atol=1e-6)
    L = bracket_field(F1, bracket_field(prob.h2, F1))
    for x in np.random.default_rng(1).uniform(-2, 2, size=(10, 3)):
        np.testing.assert_allclose(L(x), [0.0, 0.0, -4.0], atol=1e-13)
        inner = lambda y: lie_bracket(prob.h2, F1, y)  # noqa: E731
        fd = fd_lie_bracket(F1, CallableField(3, inner), x)
        np.testing.assert_allclose(fd, [0.0, 0.0, -4.0], atol=1e-6)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        lie_bracket(F1, PolynomialField.constant([1.0, 0.0]), np.zeros(3))
    with pytest.raises(DimensionError):
        F1(np.zeros(2))


def test_fd_fallback_reports_step():
    f = CallableField(2, lambda x: np.array([x[0] * x[1], np.sin(x[0])]))
    J = f.jac(np.array([0.5, 2.0]))
    np.testing.assert_allclose(J, [[2.0, 0.5], [np.cos(0.5), 0.0]], atol=1e-8)
    assert f.last_fd_step is not None and f.last_fd_step > 0


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_jacobi_identity(seed):
    rng = np.random.default_rng(seed)
    f, g, h = (random_poly_field(rng, 3) for _ in range(3))
    x = rng.uniform(-2, 2, 3)
    total = (lie_bracket(f, bracket_field(g, h), x) + lie_bracket(g, bracket_field(h, f), x)
             + lie_bracket(h, bracket_field(f, g), x))
    scale = max(1.0, np.linalg.norm(lie_bracket(f, bracket_field(g, h), x)))
    assert np.linalg.norm(total) <= 1e-9 * scale


@given(field_strategy(3), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
@settings(max_examples=40, deadline=None)
def test_analytic_vs_fd_jacobian(f, x):
    x = np.array(x)
    fd = CallableField(3, f)
    J, Jfd = f.jac(x), fd.jac(x)
    assert np.max(np.abs(J - Jfd)) <= 1e-6 * max(1.0, np.max(np.abs(J)))


def test_polynomial_hessian_is_exact():
    rng = np.random.default_rng(3)
    f = random_poly_field(rng, 3)
    x = rng.uniform(-1, 1, 3)
    fd = CallableField(3, f, jac=f.jac)
    np.testing.assert_allclose(f.hess(x), fd.hess(x), atol=1e-6)


def test_flow_identity_and_constant_field():
    x = np.array([0.3, 0.2, -1.0])
    np.testing.assert_array_equal(flow(FlowSegment(F1, 1.0, 1.0), x), x)
    np.testing.assert_allclose(flow(FlowSegment(F1, 0.0, 0.7), x), x + [0.0, -1.4, 0.0], atol=1e-12)


def test_linear_flow_matches_expm():
    A = np.array([[0.0, 1.0, 0.0], [-2.0, -0.3, 0.5], [0.1, 0.0, -1.0]])
    f = PolynomialField.linear(A)
    x = np.array([1.0, -0.5, 0.25])
    y = flow(FlowSegment(f, 0.0, 1.3), x)
    ref = expm(1.3 * A) @ x
    assert np.linalg.norm(y - ref) <= 1e-9 * np.linalg.norm(ref)


def test_flow_composition_and_reversal():
    rng = np.random.default_rng(5)
    f = PolynomialField.linear(rng.normal(size=(3, 3)) * 0.5)
    x = rng.normal(size=3)
    tol = 1e-10
    a = flow(FlowSegment(f, 0.0, 0.4), x)
    b = flow(FlowSegment(f, 0.4, 1.0), a)
    c = flow(FlowSegment(f, 0.0, 1.0), x)
    assert np.linalg.norm(b - c) <= 10 * tol * max(1.0, np.linalg.norm(c))
    back = flow(FlowSegment(f, 0.0, 1.0).reversed(), c)
    assert np.linalg.norm(back - x) <= 10 * tol * max(1.0, np.linalg.norm(x))


def test_transport_against_expm():
    A = np.array([[0.2, 1.0], [-1.0, 0.1]])
    f = PolynomialField.linear(A)
    seg = FlowSegment(f, 0.0, 0.8)
    x = np.array([0.5, 0.5])
    v = np.array([1.0, -2.0])
    push = transport_vector(seg, x, v)
    np.testing.assert_allclose(push, expm(0.8 * A) @ v, rtol=1e-9)
    back = transport_vector(seg, x, v, "inverse-pushforward")
    np.testing.assert_allclose(back, expm(-0.8 * A) @ v, rtol=1e-9)
    np.testing.assert_allclose(transport_vector(seg, x, push, "inverse-pushforward"), v, rtol=1e-9)
    np.testing.assert_array_equal(transport_vector(seg, x, np.zeros(2)), np.zeros(2))
    np.testing.assert_array_equal(transport_vector(FlowSegment(f, 0.3, 0.3), x, v), v)


def test_time_field_breakpoints():
    # switches from +1 to -1 at t = 1: the flow must land exactly on the kink
    g = TimeField(1, lambda t, x: np.array([1.0 if t < 1 else -1.0]), lambda t, x: np.zeros((1, 1)),
                  breakpoints=(1.0,))
    y = flow(FlowSegment(g, 0.0, 2.0), np.array([0.0]))
    assert abs(y[0]) <= 1e-12


def test_blow_up_raises_with_last_time():
    f = PolynomialField.linear([[0.0]]) + PolynomialField([PolynomialField.linear([[1.0]]).components[0] ** 2])
    with pytest.raises(IntegrationError) as err:
        flow(FlowSegment(f, 0.0, 2.0), np.array([1.0]))
    assert 0.9 < err.value.last_time <= 1.0
