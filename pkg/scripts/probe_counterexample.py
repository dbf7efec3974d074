"""Invertibility probe and LQ conjugate test for tilted Lagrangian manifolds.

The terminal manifold is built from ``c~ + s |x - x_f|^2 / 2``; the covector at
``x_f`` is unchanged, so the extremal is the same, but negative ``s`` can move
a focal point into ``[0, T]``. Both tests should change verdict together.

    python3 scripts/probe_counterexample.py [--s -4 -2 -1 0 1 4] [--out results/probe_sweep.csv]
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from bbscert.extremal import shoot_bbs
from bbscert.overmax import OvermaxMachinery, invertibility_probe, probe_grid, tilted_lagrangian
from bbscert.problems import load_problem
from bbscert.secondvar import assemble_lq, build_ctilde, coercivity_test, lq_hamiltonian_flow

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "vanderpol.toml")
    ap.add_argument("--s", type=float, nargs="+", default=[-4.0, -2.0, -1.0, -0.5, 0.0, 1.0, 4.0])
    ap.add_argument("--grid", type=int, default=50)
    ap.add_argument("--out", type=Path, default=ROOT / "results" / "probe_sweep.csv")
    args = ap.parse_args()

    prob, guess, _ = load_problem(args.config)
    ext = shoot_bbs(prob, guess)
    mc = build_ctilde(prob, ext)
    mach = OvermaxMachinery(prob, ext, mc)
    ts = probe_grid(ext, args.grid)
    rows = []
    for s in args.s:
        lag = tilted_lagrangian(mc, ext.xf, s * np.eye(prob.dim))
        rep = invertibility_probe(mach, ts, lagrangian=lag)
        lq = assemble_lq(prob, ext, lag)
        cr = coercivity_test(lq, lq_hamiltonian_flow(lq))
        worst = min(rep.rows, key=lambda r: r["signed"])
        rows.append({"s": s, "probe_min_signed": rep.min_signed, "probe_worst_t": worst["t"],
                     "probe": "pass" if rep.passed else "fail", "lq_conjugate_margin": cr.conjugate_margin,
                     "lq_worst_t": cr.conjugate_time, "lq_conjugate": "pass" if cr.conjugate_pass else "fail"})
        r = rows[-1]
        print(f"s = {s:+5.2f}  probe {r['probe']} ({r['probe_min_signed']:+.4f} at t = {r['probe_worst_t']:.3f})  "
              f"LQ {r['lq_conjugate']} ({r['lq_conjugate_margin']:+.4f} at t = {r['lq_worst_t']:.3f})")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
