"""Command-line front end.

Exit codes: 0 when every asserted check passes, 2 on a failed check or a run
that does not reach the origin (files are still written), 3 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .core import DegenerateStateError, InvalidParameterError
from .io import read_profile_csv, write_profile_csv, write_report
from .kahler import ComparisonError, compare_profiles
from .pipeline import RunConfig, run, sanitize_report, verify_profile

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 2, 3
COMPARE_TOL = 1e-5

log = logging.getLogger("soliton_forge")

# argparse dest -> RunConfig field
_FLAG_FIELDS = {
    "d": "d", "q": "q", "Lambda": "Lambda", "lambda0": "lambda0", "rtol": "rtol", "atol": "atol",
    "picard_tol": "picard_tol", "tmax_tilde": "tmax_tilde", "nodes": "nodes", "out": "out",
    "report": "report",
}


def _run_flags(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--config", help="JSON config file; flags override its fields")
    ap.add_argument("--d", type=int)
    ap.add_argument("--q", type=float)
    ap.add_argument("--Lambda", type=float, help="C * lambda0^2")
    ap.add_argument("--lambda0", type=float)
    ap.add_argument("--rtol", type=float)
    ap.add_argument("--atol", type=float)
    ap.add_argument("--picard-tol", dest="picard_tol", type=float)
    ap.add_argument("--tmax-tilde", dest="tmax_tilde", type=float)
    ap.add_argument("--nodes", type=int)
    ap.add_argument("--out", help="profile CSV path")
    ap.add_argument("--report", help="report JSON path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="soliton-forge",
                                 description="Steady Ricci solitons on complex line bundles.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in (("solve", "general construction"), ("kahler", "reduced Kahler pipeline (q = -1)")):
        sp = sub.add_parser(name, help=help_)
        _run_flags(sp)

    sp = sub.add_parser("compare", help="sup-relative deviation of two profiles")
    sp.add_argument("configs", nargs="*", help="two JSON configs")
    sp.add_argument("--pipelines", action="store_true",
                    help="compare the general and Kahler pipelines on one config")
    sp.add_argument("--tol", type=float, default=COMPARE_TOL)
    sp.add_argument("--report", help="write the deviation record as JSON")
    _compare_overrides(sp)

    sp = sub.add_parser("sweep", help="run a list of Lambda values")
    _run_flags(sp)
    sp.add_argument("--Lambdas", type=float, nargs="*", default=None, help="Lambda values")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--kahler", action="store_true", help="use the reduced pipeline")

    sp = sub.add_parser("check", help="re-verify a stored profile CSV")
    sp.add_argument("profile")
    sp.add_argument("--report")
    return ap


def _compare_overrides(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--d", type=int)
    sp.add_argument("--q", type=float)
    sp.add_argument("--Lambda", type=float)
    sp.add_argument("--lambda0", type=float)


def load_config(path: Optional[str], args: Optional[argparse.Namespace] = None) -> RunConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidParameterError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidParameterError("config must be a JSON object")
    if args is not None:
        for dest, fld in _FLAG_FIELDS.items():
            val = getattr(args, dest, None)
            if val is not None:
                data[fld] = val
    try:
        return RunConfig.from_dict(data)
    except TypeError as exc:
        raise InvalidParameterError(str(exc)) from exc


def _emit(result, cfg: RunConfig) -> int:
    rep = sanitize_report(result.report)
    _emit_files(result, cfg)
    for e in rep.entries:
        if e.status == "fail":
            log.warning("FAIL %s: measured=%s tolerance=%s", e.name, e.measured, e.tolerance)
    print(json.dumps({"verdict": result.verdict, "classification": result.classification,
                      "outcome": result.traj.outcome.value, "passed": rep.passed}))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_run(args, pipeline: str) -> int:
    cfg = replace(load_config(args.config, args), pipeline=pipeline)
    cfg.validate()
    return _emit(run(cfg), cfg)


def cmd_compare(args) -> int:
    overrides = argparse.Namespace(**{k: getattr(args, k) for k in ("d", "q", "Lambda", "lambda0")})
    if args.pipelines:
        if len(args.configs) > 1:
            raise InvalidParameterError("--pipelines takes at most one config")
        base = load_config(args.configs[0] if args.configs else None, overrides)
        cfg_a, cfg_b = replace(base, pipeline="general"), replace(base, pipeline="kahler")
    else:
        if len(args.configs) != 2:
            raise InvalidParameterError("compare needs two configs (or --pipelines)")
        cfg_a = load_config(args.configs[0], overrides)
        cfg_b = load_config(args.configs[1], overrides)
    pa, pb = cfg_a.validate(), cfg_b.validate()
    if (pa.d, pa.q) != (pb.d, pb.q):
        raise InvalidParameterError("configs have different (d, q)")
    dev = compare_profiles(run(cfg_a).profile, run(cfg_b).profile)
    worst = max(dev[k] for k in ("f", "g", "h_s"))
    record = {**dev, "max": worst, "tolerance": args.tol, "passed": worst < args.tol}
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(json.dumps(record, indent=2) + "\n")
    print(json.dumps(record))
    return EXIT_OK if record["passed"] else EXIT_FAIL


def _sweep_point(cfg: RunConfig) -> dict:
    res = run(cfg)
    if cfg.out or cfg.report:
        _emit_files(res, cfg)
    return res.summary_row()


def _emit_files(res, cfg: RunConfig) -> None:
    if cfg.out:
        write_profile_csv(res.profile.resample(cfg.resample), cfg.out)
    if cfg.report:
        write_report(sanitize_report(res.report), cfg.report)


def _per_point_path(path: Optional[str], Lambda: float) -> Optional[str]:
    if not path:
        return None
    p = Path(path)
    return str(p.with_name(f"{p.stem}_L{Lambda:g}{p.suffix}"))


def cmd_sweep(args) -> int:
    base = load_config(args.config, args)
    if not args.Lambdas:
        raise InvalidParameterError("sweep needs a non-empty --Lambdas list")
    if args.workers < 1:
        raise InvalidParameterError("--workers must be at least 1")
    pipeline = "kahler" if args.kahler else base.pipeline
    cfgs = []
    for lam in sorted(args.Lambdas):
        cfg = replace(base, Lambda=lam, pipeline=pipeline,
                      out=_per_point_path(base.out, lam), report=_per_point_path(base.report, lam))
        cfg.validate()
        cfgs.append(cfg)
    if args.workers == 1:
        rows = [_sweep_point(c) for c in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            rows = list(ex.map(_sweep_point, cfgs))
    rows.sort(key=lambda r: r["Lambda"])
    cols = ("Lambda", "outcome", "verdict", "L_final_sqrtC", "min_WY2_margin", "classification", "passed")
    print("\t".join(cols))
    for r in rows:
        print("\t".join(f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols))
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_FAIL


def cmd_check(args) -> int:
    try:
        prof = read_profile_csv(args.profile)
    except (OSError, KeyError, ValueError) as exc:
        raise InvalidParameterError(f"cannot read profile {args.profile}: {exc}") from exc
    rep = sanitize_report(verify_profile(prof))
    if args.report:
        write_report(rep, args.report)
    for e in rep.entries:
        if e.status == "fail":
            log.warning("FAIL %s: measured=%s", e.name, e.measured)
    print(json.dumps({"passed": rep.passed, "failures": rep.failures}))
    return EXIT_OK if rep.passed else EXIT_FAIL


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {
        "solve": lambda a: cmd_run(a, "general"),
        "kahler": lambda a: cmd_run(a, "kahler"),
        "compare": cmd_compare,
        "sweep": cmd_sweep,
        "check": cmd_check,
    }
    try:
        return handlers[args.command](args)
    except (InvalidParameterError, ComparisonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DegenerateStateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
