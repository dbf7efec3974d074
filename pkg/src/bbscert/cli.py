"""Command line front end: ``bbscert <command> <config> [flags]``.

Exit codes: 0 certified or success, 1 not certified or a failed test,
2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .extremal import SGLCDegenerateError, ShootingError, write_extremal_csv
from .fieldalg import IntegrationError
from .overmax import OutsideNeighborhood, write_perturb_csv, write_probe_csv
from .pipeline import Pipeline, certify, dumps, with_overrides
from .problems import ConfigError, load_problem, serialize_problem_config
from .secondvar import AssumptionViolation, write_lq_csv

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (ShootingError, IntegrationError, SGLCDegenerateError, OutsideNeighborhood,
                    AssumptionViolation, ArithmeticError, RuntimeError)

log = logging.getLogger("bbscert")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("config", type=Path, help="problem file (TOML)")
    common.add_argument("--tol", type=float, help="shooting residual tolerance")
    common.add_argument("--grid", type=int, help="evaluation points per arc")
    common.add_argument("--margin", type=float, help="strict-inequality margin for the sign tests")
    common.add_argument("--out", type=Path, help="directory for CSV and JSON artifacts")
    common.add_argument("--seed", type=int, help="seed of the perturbation study and probe samples")
    common.add_argument("--json", action="store_true", help="print the JSON result on stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="bbscert", description="Second-order certificates for bang-bang-singular extremals.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("shoot", parents=[common], help="solve the shooting problem and export the extremal")
    sub.add_parser("check", parents=[common], help="evaluate the regularity and sign conditions")
    sub.add_parser("certify", parents=[common], help="full pipeline with verdict")
    p = sub.add_parser("lq-oracle", parents=[common], help="discretized-Hessian cross-check of coercivity")
    p.add_argument("--n", type=int, help="number of piecewise-constant intervals")
    sub.add_parser("probe", parents=[common], help="invertibility probe of the overmaximised flow")
    p = sub.add_parser("perturb", parents=[common], help="cost gaps of random admissible perturbations")
    p.add_argument("--trials", type=int, help="number of perturbations")
    return parser


def _emit(args, payload: dict, summary: list[str]) -> None:
    if args.json:
        sys.stdout.write(dumps(payload))
    else:
        for line in summary:
            print(line)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        name = "verdict.json" if args.command == "certify" else f"{args.command}.json"
        (args.out / name).write_text(dumps(payload), encoding="utf-8")


def _fmt_stage(name: str, st: dict) -> str:
    return f"{name:13s} {st.get('verdict', '?')}"


def run(args) -> int:
    prob, guess, cfg = load_problem(args.config)
    settings = with_overrides(cfg.settings, shoot_tol=args.tol, grid=args.grid, margin=args.margin, seed=args.seed,
                              oracle_n=getattr(args, "n", None), trials=getattr(args, "trials", None))
    pipe = Pipeline(prob, guess, settings)
    cmd = args.command

    if cmd == "certify":
        verdict = certify(pipe, args.out, serialize_problem_config(cfg))
        args.out = None  # artifacts already written
        st = verdict["stages"]
        lines = [f"tau1 = {st['shooting']['tau1']:.6f}, tau2 = {st['shooting']['tau2']:.6f}"]
        lines += [_fmt_stage(k, v) + (" (advisory)" if k in verdict["advisory_stages"] else "") for k, v in st.items()]
        lines.append(verdict["certificate"])
        _emit(args, verdict, lines)
        return EXIT_OK if verdict["certified"] else EXIT_NOT_CERTIFIED

    shooting = pipe.shooting()
    if cmd == "shoot":
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            write_extremal_csv(prob, pipe.ext, args.out / "extremal.csv")
        _emit(args, {"shooting": shooting},
              [f"tau1 = {shooting['tau1']:.10f}", f"tau2 = {shooting['tau2']:.10f}",
               f"x(T) = {list(map(float, shooting['x_T']))}", f"residual = {shooting['residual_norm']:.3e}"])
        return EXIT_OK

    if cmd == "check":
        res = pipe.conditions()
        lines = [f"{c['name']:26s} {c['verdict']:8s} margin={c['margin']}" for c in res["checks"]["checks"]]
        _emit(args, {"shooting": shooting, "conditions": res}, lines + [f"conditions {res['verdict']}"])
        return EXIT_OK if res["verdict"] == "pass" else EXIT_NOT_CERTIFIED

    if cmd == "lq-oracle":
        res = pipe.coercivity(oracle=True)
        orc = res.get("oracle") or {}
        if args.out is not None and pipe.lq is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            write_lq_csv(pipe.lq, args.out / "lq.csv")
        lines = [f"hamiltonian test: {res['verdict']}",
                 f"oracle (N={orc.get('N')}): {orc.get('verdict')} min eigenvalue {orc.get('min_eigenvalue')}",
                 f"agreement: {orc.get('agrees')}"]
        _emit(args, {"coercivity": res}, lines)
        return EXIT_OK if orc.get("verdict") == "pass" else EXIT_NOT_CERTIFIED

    if cmd == "probe":
        res, rep = pipe.probe()
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            write_probe_csv(rep, args.out / "probe.csv")
        _emit(args, {"probe": res}, [
            f"min signed singular value {res['min_signed_singular_value']:.4g} at t = {res['worst_time']:.4f}",
            f"tau1 convex combinations: min {res['tau1_min_over_a']:.4g}",
            f"iota residual {res['iota_conjugacy']['max_residual']:.3e}",
            f"probe {res['verdict']} ({res['disclaimer']})"])
        return EXIT_OK if res["verdict"] == "pass" else EXIT_NOT_CERTIFIED

    if cmd == "perturb":
        res, rep = pipe.perturbation()
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            write_perturb_csv(rep, args.out / "perturb.csv")
        fit = res["dither_fit"] or {}
        _emit(args, {"perturbation": res}, [
            f"accepted {res['accepted']}, discarded {res['discarded']} (tube radius {res['tube_radius']})",
            f"min cost gap {res['min_gap']:.3e}", f"dither exponent {fit.get('exponent')}",
            f"perturbation {res['verdict']}"])
        return EXIT_OK if res["verdict"] == "pass" else EXIT_NOT_CERTIFIED
    raise UsageError(f"unknown command {cmd}")


def _error(args, code: int, kind: str, exc: Exception) -> int:
    payload = {"error": {"kind": kind, "message": str(exc)}, "exit_code": code}
    for attr in ("line", "column"):
        if getattr(exc, attr, None) is not None:
            payload["error"][attr] = getattr(exc, attr)
    if args is not None and getattr(args, "json", False):
        sys.stdout.write(dumps(payload))
    where = ""
    if getattr(exc, "line", None) is not None:
        where = f" (line {exc.line}, column {exc.column})"
    print(f"bbscert: {kind} error: {exc}{where}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = None
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return run(args)
    except UsageError as exc:
        return _error(args if args is not None else argparse.Namespace(json="--json" in (argv or sys.argv)),
                      EXIT_USAGE, "usage", exc)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        return _error(args, EXIT_USAGE, "config", exc)
    except NUMERICAL_ERRORS as exc:
        return _error(args, EXIT_NUMERICAL, "numerical", exc)


if __name__ == "__main__":
    sys.exit(main())
