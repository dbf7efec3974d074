"""Hamiltonian coercivity test against the discretized-Hessian oracle on random LQ instances.

    python3 scripts/oracle_agreement.py [--instances 200] [--n 128] [--out results/oracle_agreement.csv]
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from bbscert.secondvar import coercivity_oracle, coercivity_test, lq_hamiltonian_flow, random_lq_instance

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--n", type=int, default=128, help="oracle subintervals")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--min-margin", type=float, default=1e-6)
    ap.add_argument("--out", type=Path, default=ROOT / "results" / "oracle_agreement.csv")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    rows = []
    while len(rows) < args.instances:
        lq = random_lq_instance(rng)
        rep = coercivity_test(lq, lq_hamiltonian_flow(lq), margin=0.0)
        if abs(rep.signed_margin) < args.min_margin:
            continue
        orc = coercivity_oracle(lq, args.n)
        rows.append({"id": len(rows), "n": lq.dim, "k_nonzero": int(lq.k_nonzero), "test": rep.verdict,
                     "signed_margin": rep.signed_margin, "oracle": orc["verdict"],
                     "oracle_min_eigenvalue": orc["min_eigenvalue"], "agree": int(orc["verdict"] == rep.verdict)})
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    agree = sum(r["agree"] for r in rows)
    passes = sum(r["test"] == "pass" for r in rows)
    print(f"{agree}/{len(rows)} agree; {passes} coercive, {len(rows) - passes} not")
    for r in rows:
        if not r["agree"]:
            print(f"  disagreement on instance {r['id']}: margin {r['signed_margin']:.3e}, "
                  f"oracle eigenvalue {r['oracle_min_eigenvalue']:.3e}")


if __name__ == "__main__":
    main()
