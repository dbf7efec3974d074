"""Full certificate for a problem file; prints stage verdicts and writes all artifacts.

    python3 scripts/certify_vanderpol.py [--config configs/vanderpol.toml] [--out results/vanderpol]
"""
from __future__ import annotations

import argparse
from pathlib import Path

from bbscert.pipeline import Pipeline, certify
from bbscert.problems import load_problem, serialize_problem_config

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "vanderpol.toml")
    ap.add_argument("--out", type=Path, default=ROOT / "results" / "vanderpol")
    args = ap.parse_args()

    prob, guess, cfg = load_problem(args.config)
    verdict = certify(Pipeline(prob, guess, cfg.settings), args.out, serialize_problem_config(cfg))
    st = verdict["stages"]
    print(f"tau1 = {st['shooting']['tau1']:.10f}  tau2 = {st['shooting']['tau2']:.10f}")
    print(f"H12 = {st['coercivity']['H12']:.6f}  boundary value = {st['coercivity']['boundary']['value']:.6f}")
    print(f"conjugate margin = {st['coercivity']['conjugate_point']['signed_min_singular_value']:.6f}")
    print(f"oracle min eigenvalue = {st['coercivity']['oracle']['min_eigenvalue']:.6f}")
    print(f"probe min signed singular value = {st['probe']['min_signed_singular_value']:.4f}")
    print(f"iota residual = {st['probe']['iota_conjugacy']['max_residual']:.2e}")
    print(f"perturbation min gap = {st['perturbation']['min_gap']:.3e}")
    for name, t in sorted(verdict["timing"].items()):
        print(f"  {name:14s} {t:6.2f} s")
    print(verdict["certificate"])
    print(f"artifacts in {args.out}")


if __name__ == "__main__":
    main()
