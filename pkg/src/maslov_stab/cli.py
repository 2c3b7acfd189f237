"""Command-line front end.

Exit-code contract (stable): 0 success, 2 hypothesis failure, 3 pulse
verdict inconclusive, 4 internal consistency failure, 64 usage or config
error, 1 anything else.  All artifacts are written atomically (temp file +
rename) into the output directory; JSON reports are key-sorted so identical
configurations reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import (load_config, problem_from_config, pulse_problem_from_config,
                     tolerances_from_config)
from .errors import (ConfigError, ConsistencyError, HypothesisError,
                     MaslovStabError)
from .evans import count_negative_evans_zeros, export_evans_csv
from .maslov import maslov_rectangle, scan_conjugate_points
from .oracle import export_spectrum_csv
from .pipeline import morse_consistency
from .problem import check_hypotheses, choose_lambda_inf
from .propagation import OdeControls, export_trace_csv, write_csv_atomic
from .pulse import instability_verdict

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_INCONCLUSIVE = 3
EXIT_CONSISTENCY = 4
EXIT_USAGE = 64

log = logging.getLogger("maslov_stab")


@dataclass
class RunConfig:
    problem_path: str
    command: str
    out_dir: str = "."
    seed: int = 0
    jobs: int = 1
    L: Optional[float] = None
    lambda_inf: Optional[float] = None
    x_min: Optional[float] = None
    tolerances: dict = field(default_factory=dict)


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _controls(rc: RunConfig) -> OdeControls:
    t = rc.tolerances
    return OdeControls(rtol=float(t.get("rtol_ode", 1e-10)),
                       atol=float(t.get("atol_ode", 1e-12)),
                       tol_lag=float(t.get("tol_lag", 1e-8)))


def _load(rc: RunConfig):
    cfg = load_config(rc.problem_path)
    tols = tolerances_from_config(cfg)
    tols.update(rc.tolerances)
    rc.tolerances = tols
    return cfg


def cmd_check(rc: RunConfig) -> int:
    cfg = _load(rc)
    out = Path(rc.out_dir)
    try:
        problem = problem_from_config(cfg)
        report = check_hypotheses(problem)
    except HypothesisError as exc:
        write_json(out / "hypothesis_report.json",
                   {"passed": False, "error": str(exc), "details": _jsonable(exc.details)})
        print(f"FAIL: {exc}")
        return EXIT_HYPOTHESIS
    doc = report.to_dict()
    doc["problem"] = problem.name
    write_json(out / "hypothesis_report.json", doc)
    if not report.passed:
        print("FAIL: hypothesis checks did not pass; see hypothesis_report.json")
        return EXIT_HYPOTHESIS
    print(f"OK: hypotheses pass for {problem.name or rc.problem_path}")
    return EXIT_OK


def cmd_conjugate_points(rc: RunConfig) -> int:
    cfg = _load(rc)
    problem = problem_from_config(cfg)
    L = rc.L if rc.L is not None else 20.0
    controls = _controls(rc)
    scan = scan_conjugate_points(problem, L, x_min=rc.x_min, controls=controls,
                                 tol_s=float(rc.tolerances.get("tol_s", 1e-8)),
                                 tol_rank=float(rc.tolerances.get("tol_rank", 1e-8)))
    out = Path(rc.out_dir)
    doc = {
        "problem": problem.name,
        "L": scan.L, "x_min": scan.x_min, "lambda": 0.0,
        "crossings": [c.to_dict() for c in scan.crossings],
        "count": scan.total_multiplicity,
        "endpoint_crossing_at_L": (None if scan.endpoint_crossing is None
                                   else scan.endpoint_crossing.to_dict()),
        "tail_artifacts": list(scan.tail_artifacts),
    }
    write_json(out / "conjugate_points.json", doc)
    export_trace_csv(scan.trace, out / "trace_lambda0.csv")
    locs = ", ".join(f"{c.location:.6f} (mult {c.multiplicity})" for c in scan.crossings)
    print(f"conjugate points in (-inf, {L:g}): {scan.total_multiplicity}"
          + (f" at s = {locs}" if locs else ""))
    return EXIT_OK


def cmd_maslov_rect(rc: RunConfig) -> int:
    cfg = _load(rc)
    problem = problem_from_config(cfg)
    L = rc.L if rc.L is not None else 20.0
    rep = maslov_rectangle(problem, L, lambda_inf=rc.lambda_inf, x_min=rc.x_min,
                           controls=_controls(rc),
                           oracle_h=float(rc.tolerances.get("oracle_h", 0.02)),
                           tol_s=float(rc.tolerances.get("tol_s", 1e-8)),
                           tol_rank=float(rc.tolerances.get("tol_rank", 1e-8)))
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "maslov_report.json", _jsonable(rep.to_dict()))
    export_trace_csv(rep.conjugate_scan.trace, out / "trace_lambda0.csv")
    sweep = rep.sweep_scan
    rows = np.column_stack([sweep.grid, sweep.matched_det,
                            sweep.sigma_min_intersection])
    write_csv_atomic(out / "lambda_sweep.csv", rows,
                     "lambda,matched_det,sigma_min_intersection")
    ident = "identity holds" if rep.checks["identity_ok"] else "IDENTITY VIOLATED"
    print(f"A=({rep.A1},{rep.A2},{rep.A3},{rep.A4}); {ident}; "
          f"A2=|A3|: {'yes' if rep.checks['a2_equals_abs_a3'] else 'NO'}; "
          f"sweep=oracle: {'yes' if rep.checks.get('sweep_matches_oracle', True) else 'NO'}")
    return EXIT_OK


def cmd_morse(rc: RunConfig) -> int:
    cfg = _load(rc)
    problem = problem_from_config(cfg)
    result = morse_consistency(problem, lambda_inf=rc.lambda_inf,
                               controls=_controls(rc), jobs=rc.jobs)
    out = Path(rc.out_dir)
    doc = dict(result)
    doc["problem"] = problem.name
    write_json(out / "morse_report.json", _jsonable(doc))
    orc = result["oracle"]
    rows = [(orc["x_right"], orc["h"], j + 1, lam, err)
            for j, (lam, err) in enumerate(zip(orc["eigenvalues"],
                                               orc["richardson_error"]))]
    export_spectrum_csv(rows, out / "oracle_spectrum.csv")
    print(f"Mor(H)={result['morse_maslov']} (maslov) = {result['morse_oracle']} (oracle) "
          f"= {result['morse_evans']} (evans)")
    if not result["agree"]:
        print("CONSISTENCY FAILURE: the three counts disagree")
        return EXIT_CONSISTENCY
    return EXIT_OK


def cmd_evans(rc: RunConfig) -> int:
    cfg = _load(rc)
    problem = problem_from_config(cfg)
    lam_inf = rc.lambda_inf if rc.lambda_inf is not None else choose_lambda_inf(problem)
    count, trace = count_negative_evans_zeros(problem, lam_inf, controls=_controls(rc))
    out = Path(rc.out_dir)
    doc = {
        "problem": problem.name,
        "lambda_inf": trace.lambda_inf, "epsilon": trace.epsilon,
        "zeros": [z.to_dict() for z in trace.zeros],
        "count": count,
        "boundary_flag": trace.boundary_flag,
        "normalization": trace.normalization,
    }
    write_json(out / "evans_report.json", _jsonable(doc))
    export_evans_csv(trace, out / "evans_trace.csv")
    locs = ", ".join(f"{z.lam:.6f} (mult {z.multiplicity})" for z in trace.zeros)
    print(f"Evans zeros in [-{lam_inf:g}, -{trace.epsilon:g}]: {count}"
          + (f" at {locs}" if locs else ""))
    return EXIT_OK


def cmd_pulse(rc: RunConfig) -> int:
    cfg = _load(rc)
    pp = pulse_problem_from_config(cfg)
    verdict = instability_verdict(pp, full=True, controls=_controls(rc))
    out = Path(rc.out_dir)
    write_json(out / "verdict.json", _jsonable(verdict.to_dict()))
    if verdict.verdict == "unstable":
        if verdict.conjugate_point_at_x0 is not None:
            c = verdict.conjugate_point_at_x0
            loc = round(c.location, 6) + 0.0        # avoid "-0.000000"
            print(f"UNSTABLE: conjugate point at s={loc:.6f} "
                  f"(mult {c.multiplicity}); Mor(H)={verdict.full_morse}")
        else:
            print("UNSTABLE: essential spectrum reaches the right half-plane")
        return EXIT_OK
    print(f"INCONCLUSIVE: {verdict.checks.get('note', 'certification unavailable')}")
    return EXIT_INCONCLUSIVE


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


_COMMANDS = {
    "check": cmd_check,
    "conjugate-points": cmd_conjugate_points,
    "maslov-rect": cmd_maslov_rect,
    "morse": cmd_morse,
    "evans": cmd_evans,
    "pulse": cmd_pulse,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maslov-stab",
        description="Spectral stability of pulses via conjugate-point counting, "
                    "cross-checked against direct eigenvalue and Evans-function counts.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("check", "verify the operator hypotheses"),
        ("conjugate-points", "locate conjugate points at lambda = 0"),
        ("maslov-rect", "walk the spectral rectangle and verify the edge identity"),
        ("morse", "Morse index three ways (conjugate points, eigenvalues, Evans)"),
        ("evans", "Evans-function trace and negative-zero count"),
        ("pulse", "instability verdict for a gradient reaction-diffusion pulse"),
    ]:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--problem", required=True, help="problem definition file (TOML or JSON)")
        sp.add_argument("--L", type=float, default=None, help="right endpoint of the truncated domain")
        sp.add_argument("--lambda-inf", type=float, default=None, dest="lambda_inf",
                        help="left end of the spectral window (default: potential sup-norm + 1)")
        sp.add_argument("--x-min", type=float, default=None, dest="x_min",
                        help="explicit truncation point (default: fitted from the decay tail)")
        sp.add_argument("--tol-s", type=float, default=None, dest="tol_s",
                        help="conjugate-point location tolerance")
        sp.add_argument("--tol-rank", type=float, default=None, dest="tol_rank",
                        help="intersection-dimension singular value threshold")
        sp.add_argument("--jobs", type=int, default=1, help="parallel independent jobs")
        sp.add_argument("--out-dir", default=".", dest="out_dir", help="artifact output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomized self-checks")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MASLOV_STAB_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; remap to the documented code
        return EXIT_USAGE if exc.code not in (0, None) else 0

    tolerances = {}
    if args.tol_s is not None:
        tolerances["tol_s"] = args.tol_s
    if args.tol_rank is not None:
        tolerances["tol_rank"] = args.tol_rank
    rc = RunConfig(problem_path=args.problem, command=args.command,
                   out_dir=args.out_dir, seed=args.seed, jobs=args.jobs,
                   L=args.L, lambda_inf=args.lambda_inf, x_min=args.x_min,
                   tolerances=tolerances)
    try:
        return _COMMANDS[args.command](rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ConsistencyError as exc:
        write_json(Path(rc.out_dir) / "error.json",
                   {"error": str(exc), "details": _jsonable(exc.details)})
        print(f"consistency failure: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except MaslovStabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
