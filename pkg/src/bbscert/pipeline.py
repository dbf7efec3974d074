"""Stage runners shared by the command line and the experiment scripts.

Every stage returns a JSON-ready dict with a ``verdict`` key. Shooting,
condition checks and coercivity are required; the overmaximised-flow probe
and the perturbation study are advisory and never change the certificate.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .extremal import (
    BBSExtremal,
    CheckConfig,
    ControlAffineProblem,
    IntegrationOptions,
    ShootingGuess,
    ShootingOptions,
    check_conditions,
    shoot_bbs,
    write_extremal_csv,
)
from .overmax import (
    OvermaxMachinery,
    compare_admissible,
    invertibility_probe,
    iota_conjugacy_check,
    probe_grid,
    write_perturb_csv,
    write_probe_csv,
)
from .problems import Settings
from .secondvar import (
    AssumptionViolation,
    assemble_lq,
    build_ctilde,
    coercivity_oracle,
    coercivity_test,
    default_margin,
    lq_hamiltonian_flow,
    write_lq_csv,
)

SCHEMA_NAME = "verdict.schema.json"
REQUIRED_STAGES = ("shooting", "conditions", "coercivity")
ADVISORY_STAGES = ("probe", "perturbation")
CERTIFIED = "certified strict strong local minimizer"


def jsonable(obj):
    """Plain Python types for ``json.dumps``; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def load_schema() -> dict:
    return json.loads(resources.files("bbscert").joinpath(SCHEMA_NAME).read_text(encoding="utf-8"))


@dataclass
class Pipeline:
    """Holds the problem, settings and intermediate objects of one run."""

    prob: ControlAffineProblem
    guess: ShootingGuess
    settings: Settings = field(default_factory=Settings)
    ext: BBSExtremal | None = None
    mc: object = None
    lq: object = None
    lq_flow: object = None
    timing: dict = field(default_factory=dict)

    def _timed(self, name, fun):
        t0 = time.perf_counter()
        try:
            return fun()
        finally:
            self.timing[name] = time.perf_counter() - t0

    @property
    def integration(self) -> IntegrationOptions:
        s = self.settings
        return IntegrationOptions(rtol=s.rtol, atol=s.atol, grid_per_arc=s.grid)

    # required stages ---------------------------------------------------------
    def shooting(self) -> dict:
        s = self.settings
        opts = ShootingOptions(tol=s.shoot_tol, max_iter=s.max_iter, integration=self.integration)
        self.ext = self._timed("shooting", lambda: shoot_bbs(self.prob, self.guess, opts))
        ext = self.ext
        d = ext.diagnostics
        return {
            "verdict": "pass",
            "tau1": ext.tau1,
            "tau2": ext.tau2,
            "x_T": ext.ellT.x,
            "p_T": ext.ellT.p,
            "residual_norm": float(np.linalg.norm(d["residual"])),
            "iterations": d["newton_iterations"],
            "multiple_shooting_iterations": max(len(d.get("multiple_shooting_history", [])) - 1, 0),
            "control_saturation": d.get("control_saturation"),
        }

    def conditions(self) -> dict:
        s = self.settings
        cfg = CheckConfig(grid_per_arc=s.grid, delta_fraction=s.delta_fraction, margin=s.margin)
        rep = self._timed("conditions", lambda: check_conditions(self.prob, self.ext, cfg))
        return {"verdict": "pass" if rep.passed else "fail", "checks": rep.as_dict()}

    def build_lq(self):
        if self.lq is None:
            def run():
                self.mc = build_ctilde(self.prob, self.ext)
                self.lq = assemble_lq(self.prob, self.ext, self.mc, grid=self.settings.lq_grid)
                self.lq_flow = lq_hamiltonian_flow(self.lq)
            self._timed("lq_assembly", run)
        return self.lq

    def coercivity(self, oracle: bool = True) -> dict:
        try:
            lq = self.build_lq()
        except AssumptionViolation as exc:
            return {"verdict": "fail", "reason": str(exc)}
        margin = max(self.settings.margin, default_margin(lq))
        rep = self._timed("coercivity", lambda: coercivity_test(lq, self.lq_flow, margin))
        out = rep.as_dict()
        out["H12"] = lq.H12
        out["boundary_quadratic"] = lq.boundary_quad
        out["k"] = lq.k
        out["R_range"] = [float(np.min(lq.R)), float(np.max(lq.R))]
        if oracle:
            orc = self._timed("oracle", lambda: coercivity_oracle(lq, self.settings.oracle_n))
            orc["agrees"] = orc["verdict"] == ("pass" if rep.conjugate_pass and rep.boundary_pass is not False
                                               else "fail")
            out["oracle"] = orc
        return out

    # advisory stages ---------------------------------------------------------
    def machinery(self) -> OvermaxMachinery:
        self.build_lq()
        return OvermaxMachinery(self.prob, self.ext, self.mc)

    def probe(self) -> tuple[dict, object]:
        s = self.settings

        def run():
            mach = self.machinery()
            rep = invertibility_probe(mach, probe_grid(self.ext, s.probe_grid), samples=s.probe_samples,
                                      seed=s.seed)
            iota = iota_conjugacy_check(mach, self.lq, np.linspace(self.ext.tau2, self.ext.T, s.iota_grid))
            return rep, iota

        rep, iota = self._timed("probe", run)
        out = rep.as_dict()
        out["iota_conjugacy"] = {k: iota[k] for k in ("max_residual", "worst_time")}
        out["iota_conjugacy"]["verdict"] = "pass" if iota["max_residual"] <= 1e-4 else "fail"
        if out["iota_conjugacy"]["verdict"] == "fail":
            out["verdict"] = "fail"
        return out, rep

    def perturbation(self, trials: int | None = None) -> tuple[dict, object]:
        s = self.settings
        n = s.trials if trials is None else trials
        rep = self._timed("perturbation", lambda: compare_admissible(
            self.prob, self.ext, trials=n, seed=s.seed, tube_radius=s.tube_radius))
        return rep.as_dict(), rep


def certificate(stages: dict) -> tuple[bool, str]:
    for name in REQUIRED_STAGES:
        st = stages.get(name)
        if st is None or st.get("verdict") != "pass":
            return False, f"not certified: {name}"
    return True, CERTIFIED


def certify(pipe: Pipeline, out_dir: Path | None = None, config_text: str | None = None,
            advisory: bool = True) -> dict:
    """Run all stages, write artifacts to ``out_dir`` and return the verdict."""
    stages = {"shooting": pipe.shooting()}
    stages["conditions"] = pipe.conditions()
    stages["coercivity"] = pipe.coercivity()
    probe_rep = perturb_rep = None
    if advisory:
        stages["probe"], probe_rep = pipe.probe()
        stages["perturbation"], perturb_rep = pipe.perturbation()
    ok, text = certificate(stages)
    verdict = {
        "problem": problem_summary(pipe.prob),
        "settings": asdict(pipe.settings),
        "config": config_text,
        "stages": stages,
        "advisory_stages": [s for s in ADVISORY_STAGES if s in stages],
        "certified": ok,
        "certificate": text,
        "timing": dict(pipe.timing),
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_extremal_csv(pipe.prob, pipe.ext, out_dir / "extremal.csv")
        if pipe.lq is not None:
            write_lq_csv(pipe.lq, out_dir / "lq.csv")
        if probe_rep is not None:
            write_probe_csv(probe_rep, out_dir / "probe.csv")
        if perturb_rep is not None:
            write_perturb_csv(perturb_rep, out_dir / "perturb.csv")
        (out_dir / "verdict.json").write_text(dumps(verdict), encoding="utf-8")
    return verdict


def problem_summary(prob: ControlAffineProblem) -> dict:
    return {
        "name": prob.label,
        "variables": list(prob.names),
        "dim": prob.dim,
        "T": prob.T,
        "x0": prob.x0,
        "edge": [i + 1 for i in prob.edge],
    }


def without_timing(verdict: dict) -> dict:
    return {k: v for k, v in verdict.items() if k != "timing"}


def with_overrides(settings: Settings, **kw) -> Settings:
    return replace(settings, **{k: v for k, v in kw.items() if v is not None})
