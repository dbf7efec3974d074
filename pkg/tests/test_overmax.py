"""Overmaximised flow, invertibility probe, iota conjugacy and the perturbation study."""
from __future__ import annotations

import numpy as np
import pytest

from bbscert.overmax import (
    AdmissibleIntegrator,
    OvermaxMachinery,
    OvermaxOptions,
    antisymplectic_defect,
    compare_admissible,
    dither_fit,
    dithered_segments,
    hamiltonian_vector,
    invertibility_probe,
    iota_conjugacy_check,
    lift_grad,
    probe_grid,
    tilted_lagrangian,
)


def _sigma_points(ext, rng, count, scale=1e-3):
    """Points of ``F1 = p2 = 0`` near ``l_T`` (Van der Pol has ``f1 = (0, -2, 0)``)."""
    Y = ext.ellT.as_array() + scale * rng.normal(size=(count, 6))
    Y[:, 4] = 0.0
    return Y


# theta and H2~ ------------------------------------------------------------------


def test_theta_vanishes_on_extremal(vdp_ext, vdp_mach):
    ts = np.linspace(vdp_ext.tau2, vdp_ext.T, 7)
    lam = vdp_ext.on_arc(ts, 3)
    np.testing.assert_allclose(vdp_mach.solve_theta(lam), 0.0, atol=1e-12)


def test_theta_first_order(vdp_ext, vdp_mach):
    mach = vdp_mach
    Y = vdp_ext.ellT.as_array().copy()
    for dp in (1e-3, -1e-3, 5e-4):
        Z = Y.copy()
        Z[3] += dp
        x, p = Z[:3], Z[3:]
        h23 = float(p @ mach.h23(x))
        L = float(p @ mach.Lfield(x))
        theta = float(mach.solve_theta(Z)[0])
        W = mach.f1_flow(Z, theta)[0]
        assert abs(float(W[3:] @ mach.h23(W[:3]))) <= 1e-10
        assert np.sign(theta) == -np.sign(h23 / L)
        assert theta == pytest.approx(-h23 / L, rel=1e-2)


def test_h2tilde_dominates_on_sigma(vdp_ext, vdp_mach):
    Y = _sigma_points(vdp_ext, np.random.default_rng(3), 20)
    x, p = Y[:, :3], Y[:, 3:]
    H2 = np.einsum("ci,ci->c", p, vdp_mach.h2(x))
    assert np.all(vdp_mach.H2tilde(Y) >= H2 - 1e-12)
    on_s = vdp_ext.on_arc(np.linspace(vdp_ext.tau2, vdp_ext.T, 5), 3)
    H2s = np.einsum("ci,ci->c", on_s[:, 3:], vdp_mach.h2(on_s[:, :3]))
    np.testing.assert_allclose(vdp_mach.H2tilde(on_s), H2s, atol=1e-12)


def test_chain_rule_gradient_matches_differences(vdp, vdp_ext, vdp_lq):
    prob, _ = vdp
    chain = OvermaxMachinery(prob, vdp_ext, vdp_lq[0])
    fd = OvermaxMachinery(prob, vdp_ext, vdp_lq[0], OvermaxOptions(gradient="fd"))
    Y = vdp_ext.ellT.as_array() + 1e-3 * np.random.default_rng(4).normal(size=(4, 6))
    np.testing.assert_allclose(chain.H2tilde_grad(Y), fd.H2tilde_grad(Y), atol=1e-7)


# flow -------------------------------------------------------------------------


def test_flow_reproduces_extremal(vdp_ext, vdp_mach):
    traj = vdp_mach.trajectory(vdp_ext.ellT)
    for t in np.linspace(0.0, vdp_ext.T, 41):
        np.testing.assert_allclose(traj.state(t), vdp_ext.state(t).as_array(), atol=1e-7)
    np.testing.assert_array_equal(traj.state(vdp_ext.T), vdp_ext.ellT.as_array())
    s2, s1 = traj.switching_times
    assert s2 == vdp_ext.tau2
    assert s1 == pytest.approx(vdp_ext.tau1, abs=1e-7)


def test_tangency_to_sigma(vdp_ext, vdp_mach):
    Y = _sigma_points(vdp_ext, np.random.default_rng(5), 6)
    at, _ = vdp_mach.singular_batch(Y)
    for t in np.linspace(vdp_ext.tau2, vdp_ext.T, 15):
        Z = at(t)
        F1 = np.einsum("ci,ci->c", Z[:, 3:], vdp_mach.f1(Z[:, :3]))
        assert np.max(np.abs(F1)) <= 1e-7


def test_h2_vector_is_transported(vdp_ext, vdp_mach):
    mach = vdp_mach
    Y = vdp_ext.ellT.as_array()
    v = hamiltonian_vector(lift_grad(mach.h2, Y[None, :]))[0]
    ts = np.linspace(vdp_ext.tau2, vdp_ext.T, 6)
    moved = mach.singular_linearization(ts, directions=v[:, None])
    lam = vdp_ext.on_arc(ts, 3)
    expect = hamiltonian_vector(lift_grad(mach.h2, lam))
    np.testing.assert_allclose(moved[:, :, 0], expect, atol=1e-5)


def _branch_jumps(mach, path):
    jumps = []
    pieces = path.pieces
    for (_, lo_a, _, sol_a), (_, _, hi_b, sol_b) in zip(pieces[:-1], pieces[1:]):
        assert lo_a == hi_b
        jumps.append(float(np.max(np.abs(sol_a(lo_a) - sol_b(lo_a)))))
    return jumps


def test_switching_time_clause_and_continuity(vdp_ext, vdp_mach):
    mach = vdp_mach
    rng = np.random.default_rng(6)
    Y = _sigma_points(vdp_ext, rng, 12, scale=2e-3)
    at, end = mach.singular_batch(Y)
    signs = set()
    for y_sing, y_end in zip(Y, end):
        path = mach.continue_below(y_end)
        h23 = mach._h23(y_end)
        signs.add(h23 >= 0)
        if h23 >= 0:
            assert path.tau2 == vdp_ext.tau2
            assert path.pieces[0][0] == "bang-2"
        else:
            assert path.tau2 < vdp_ext.tau2
            assert path.pieces[0][0] == "H2tilde-correction"
            np.testing.assert_allclose(path.pieces[0][3](vdp_ext.tau2), y_end, atol=1e-9)
        assert max(_branch_jumps(mach, path)) <= 1e-9
    assert signs == {True, False}


# probe ------------------------------------------------------------------------


def test_probe_identity_at_final_time(vdp_ext, vdp_mach):
    rep = invertibility_probe(vdp_mach, [vdp_ext.T], samples=3, a_values=())
    assert rep.rows[0]["sigma_min"] == pytest.approx(1.0, abs=1e-6)
    assert rep.rows[0]["signed"] > 0


def test_vanderpol_probe_passes(vdp_ext, vdp_mach):
    rep = invertibility_probe(vdp_mach, probe_grid(vdp_ext, 50))
    assert rep.passed
    assert len(rep.rows) == 50
    assert {r["branch"] for r in rep.rows} == {"singular", "bang-2", "bang-1"}
    assert min(r["sigma_min"] for r in rep.tau1_rows) > 0
    assert "does not prove" in rep.as_dict()["disclaimer"]


def test_probe_flags_broken_lagrangian(vdp_ext, vdp_mach):
    xf = vdp_ext.xf
    bad = tilted_lagrangian(vdp_mach.mc, xf, -2.0 * np.eye(3))
    rep = invertibility_probe(vdp_mach, probe_grid(vdp_ext, 50), lagrangian=bad)
    assert not rep.passed
    assert rep.min_signed < 0
    good = tilted_lagrangian(vdp_mach.mc, xf, 1.0 * np.eye(3))
    assert invertibility_probe(vdp_mach, probe_grid(vdp_ext, 50), lagrangian=good).passed


# iota ---------------------------------------------------------------------------


def test_iota_identity_at_final_time(vdp_ext, vdp_lq, vdp_mach):
    res = iota_conjugacy_check(vdp_mach, vdp_lq[1], [vdp_ext.T])
    assert res["max_residual"] <= 1e-12


def test_iota_conjugacy_on_vanderpol(vdp_ext, vdp_lq, vdp_mach):
    res = iota_conjugacy_check(vdp_mach, vdp_lq[1], np.linspace(vdp_ext.tau2, vdp_ext.T, 20))
    assert res["max_residual"] <= 1e-4


def test_iota_antisymplectic():
    rng = np.random.default_rng(9)
    for n in (1, 2, 3):
        H = rng.normal(size=(n, n))
        H = H + H.T
        for _ in range(5):
            a, b = rng.normal(size=(2, 2 * n))
            assert abs(antisymplectic_defect(H, a, b)) <= 1e-12


# perturbations ------------------------------------------------------------------


@pytest.fixture(scope="module")
def integ(vdp, vdp_ext):
    return AdmissibleIntegrator(vdp[0], vdp_ext)


def test_zero_perturbation_gap(integ):
    x, _ = integ.run(dithered_segments(integ, 0.0, 0.0))
    assert integ.cost(x) - integ.ref_cost == 0.0
    assert np.max(np.abs(integ.ref_x - integ.ext.xf)) <= 1e-8


@pytest.mark.slow
def test_random_perturbations_do_not_improve(vdp, vdp_ext, integ):
    rep = compare_admissible(vdp[0], vdp_ext, trials=100, seed=0, tube_radius=0.05, dithers=(), integ=integ)
    assert rep.passed and rep.min_gap >= -1e-9
    assert len(rep.trials) == 100
    assert rep.discarded == sum(not r["in_tube"] for r in rep.trials)


def test_dither_is_quadratic(integ):
    fit = dither_fit(integ, (0.0025, 0.005, 0.01, 0.02))
    assert fit["all_positive"]
    assert fit["exponent"] == pytest.approx(2.0, abs=0.3)
    x, _ = integ.run(dithered_segments(integ, 0.01))
    assert integ.cost(x) - integ.ref_cost > 0
