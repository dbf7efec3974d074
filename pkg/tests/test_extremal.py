import csv

import numpy as np
import pytest

from bbscert.cotangent import CotangentPoint
from bbscert.extremal import (
    ShootingError,
    ShootingGuess,
    ShootingOptions,
    check_conditions,
    integrate_reference,
    shoot_bbs,
    shooting_residual,
    singular_feedback,
    write_extremal_csv,
)

from conftest import tracking_problem

PAPER_TAU1, PAPER_TAU2 = 1.3667, 2.4601


def test_vanderpol_switching_times(vdp_ext):
    assert abs(vdp_ext.tau1 - PAPER_TAU1) <= 5e-3
    assert abs(vdp_ext.tau2 - PAPER_TAU2) <= 5e-3


def test_far_guess_converges(vdp):
    prob, _ = vdp
    ext = shoot_bbs(prob, ShootingGuess(np.array([0.5, 0.0, 2.0]), 1.3, 2.5))
    assert abs(ext.tau1 - PAPER_TAU1) <= 5e-3 and abs(ext.tau2 - PAPER_TAU2) <= 5e-3


def test_exact_guess_takes_no_steps(vdp, vdp_ext):
    prob, _ = vdp
    guess = ShootingGuess(vdp_ext.ellT.x, vdp_ext.tau1, vdp_ext.tau2)
    ext = shoot_bbs(prob, guess)
    assert ext.diagnostics["newton_iterations"] == 0
    assert np.linalg.norm(ext.diagnostics["residual"]) <= 1e-9


def test_invalid_guess_times(vdp):
    prob, _ = vdp
    with pytest.raises(ShootingError):
        shoot_bbs(prob, ShootingGuess(np.zeros(3), 2.0, 1.0))


def test_tracking_toy_matches_closed_form():
    prob, r = tracking_problem()
    rT = r(np.array([0.0, prob.T, 0.0]))
    ext = shoot_bbs(prob, ShootingGuess(np.array([rT + 0.1, prob.T, 0.3]), 0.45, 1.6))
    assert abs(ext.tau1 - 0.5) <= 1e-6 and abs(ext.tau2 - 1.5) <= 1e-6
    assert ext.xf[0] == pytest.approx(rT, abs=1e-6)
    assert check_conditions(prob, ext).passed


def test_converged_invariants(vdp, vdp_ext):
    prob, _ = vdp
    ext, calc = vdp_ext, prob.calc
    xT, pT = ext.ellT.x, ext.ellT.p
    assert np.max(np.abs(pT + prob.cost.grad(xT))) <= 1e-9
    assert abs(calc.value("f1", xT, pT)) <= 1e-8
    assert abs(calc.value("2f1", xT, pT)) <= 1e-8
    x1, p1 = ext.ell1.x, ext.ell1.p
    assert abs(calc.value("1", x1, p1) - calc.value("2", x1, p1)) <= 1e-8
    n = prob.dim
    Y = ext.on_arc(np.linspace(ext.tau2, ext.T, 400), 3)
    drift = max(np.max(np.abs(calc.value(w, Y[:, :n], Y[:, n:]))) for w in ("f1", "2f1"))
    assert drift <= 1e-8 * (ext.T - ext.tau2)
    ys, _ = singular_feedback(calc, ext.x[ext.t >= ext.tau2], ext.p[ext.t >= ext.tau2])
    np.testing.assert_allclose(ys, ext.upsilon, atol=1e-10)
    assert np.all((ext.upsilon > 0) & (ext.upsilon < 1))


def test_singular_control_formula(vdp_ext):
    # u = -1 + 2 v on the edge from u = -1 to u = +1 ... the singular control
    # between h2 (u = +1) and h3 (u = -1) is u = 1 - 2 v, so v = (1 - u_sing) / 2
    ext = vdp_ext
    x = ext.x[ext.t >= ext.tau2]
    u_sing = 2 * x[:, 0] - x[:, 1] * (1 - x[:, 0] ** 2)
    np.testing.assert_allclose(ext.upsilon, (1 - u_sing) / 2, atol=1e-8)


def test_vanderpol_conditions(vdp, vdp_ext):
    prob, _ = vdp
    rep = check_conditions(prob, vdp_ext)
    assert rep.passed
    assert rep["sglc"].margin == pytest.approx(4.0, abs=1e-9)
    assert rep["singular_maximality"].verdict == "skipped"
    assert len(rep.names()) == len(set(rep.names()))


def test_homogeneity(vdp, vdp_ext):
    prob, _ = vdp
    a = 3.0
    scaled = prob.with_cost(prob.cost.scaled(a))
    ext2 = integrate_reference(scaled, vdp_ext.ellT.scaled(a), vdp_ext.tau1, vdp_ext.tau2)
    r1, r2 = check_conditions(prob, vdp_ext), check_conditions(scaled, ext2)
    assert [c.verdict for c in r1.checks] == [c.verdict for c in r2.checks]
    for name in ("sglc", "switch_tau1_H12", "switch_tau2_H232", "singular_control_interior"):
        assert r2[name].margin == pytest.approx(a * r1[name].margin, rel=1e-9)


def test_swapped_edge_fails_bang_check(vdp, vdp_ext):
    prob, _ = vdp
    swapped = prob.with_edge((1, 0, 1))
    ext = integrate_reference(swapped, vdp_ext.ellT, vdp_ext.tau1, vdp_ext.tau2)
    rep = check_conditions(swapped, ext)
    assert rep["bang1_maximality"].verdict == "fail"
    assert rep["bang1_maximality"].margin < 0


def test_equal_fields_fail_switch_check(vdp, vdp_ext):
    prob, _ = vdp
    same = prob.with_edge((1, 1, 0))
    ext = integrate_reference(same, vdp_ext.ellT, vdp_ext.tau1, vdp_ext.tau2)
    rep = check_conditions(same, ext)
    assert rep["switch_tau1_H12"].margin == 0.0
    assert rep["switch_tau1_H12"].verdict == "fail"


def test_zero_length_singular_arc(vdp):
    prob, _ = vdp
    ellT = CotangentPoint([0.2, 0.0, 1.0], [0.0, 0.0, -1.0])
    ext = integrate_reference(prob, ellT, 1.0, prob.T)
    np.testing.assert_array_equal(ext.state(prob.T).x, ellT.x)
    assert ext.t_sing.size <= 1
    assert "control_saturation" not in ext.diagnostics


def test_residual_has_expected_length(vdp, vdp_ext):
    prob, _ = vdp
    z = np.concatenate([vdp_ext.ellT.x, [vdp_ext.tau1, vdp_ext.tau2]])
    r = shooting_residual(prob, z, ShootingOptions().integration)
    assert r.shape == (prob.dim + 3,)
    assert np.linalg.norm(r) <= 1e-9


def test_extremal_csv(vdp, vdp_ext, tmp_path):
    prob, _ = vdp
    path = tmp_path / "extremal.csv"
    write_extremal_csv(prob, vdp_ext, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2", "x3", "p1", "p2", "p3", "u", "F1", "H23", "H232", "H323", "L"]
    assert len(rows) - 1 == vdp_ext.t.size
