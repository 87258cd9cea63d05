"""Command-line entry point: ``macoff solve | sweep | audit``.

Exit codes: 0 success, 1 audit failures, 2 invalid input, 3 infeasible,
4 solver stall. Failures print a one-line JSON error record on stderr (and
to ``--out`` for ``solve``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .audit import SUITES, run_audit
from .errors import (Degenerate, InfeasibleUser, InvalidConfig, MacoffError, NonMonotone, OutOfBracket,
                     OverflowDomain, SolverStall, TooLarge)
from .harness import (ExperimentSpec, canonical_scheme, rows_to_csv, run_experiment, solve_scheme,
                      summarize, summary_to_csv)
from .model import Scenario

EXIT_OK, EXIT_AUDIT, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_STALL = 0, 1, 2, 3, 4
SEED_MAX = 2 ** 64


def exit_code_for(err: BaseException) -> int:
    if isinstance(err, (InvalidConfig, TooLarge, ValueError)):
        return EXIT_INVALID
    if isinstance(err, (InfeasibleUser, OverflowDomain, OutOfBracket)):
        return EXIT_INFEASIBLE
    if isinstance(err, (SolverStall, NonMonotone, Degenerate)):
        return EXIT_STALL
    return EXIT_STALL if isinstance(err, MacoffError) else EXIT_INVALID


def error_record(err: BaseException, code: int) -> dict:
    rec = {"status": "error", "exit_code": code, "error": type(err).__name__, "message": str(err)}
    users = getattr(err, "users", None)
    if users is not None:
        rec["users"] = list(users)
    return rec


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise InvalidConfig(f"cannot read {path}: {e.strerror}") from e


def config_digest(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_meta(out: Path, command: str, doc: dict, seed, extra=None):
    meta = {"command": command, "version": __version__, "config_digest": config_digest(doc), "seed": seed}
    meta.update(extra or {})
    out.with_name(out.name + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _say(args, text):
    if not args.quiet:
        print(text)


def cmd_solve(args) -> int:
    sc = Scenario.from_json(_read(args.scenario))
    scheme = canonical_scheme(args.scheme)
    seed = args.seed if args.seed is not None else (sc.seed if isinstance(sc.seed, int) else 0)
    res = solve_scheme(scheme, sc, seed)
    doc = {
        "status": "ok",
        "scheme": scheme,
        "K": sc.K,
        "seed": seed,
        "config_digest": config_digest(sc.to_dict()),
        "allocation": res.allocation.to_dict(),
        "energy": res.report.to_dict(),
        "iterations": res.iters,
    }
    for k, v in res.extra.items():
        doc[k] = v
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    elif args.quiet:
        pass
    else:
        sys.stdout.write(text)
    off = res.extra.get("offload_set")
    tail = f" offload_set={off}" if off is not None else ""
    _say(args, f"solve {scheme}: K={sc.K} energy_total={res.report.total:.6g}{tail}")
    return EXIT_OK


def _summary_path(out: Path, given) -> Path:
    if given:
        return Path(given)
    stem = out.name[:-4] if out.name.endswith(".csv") else out.name
    return out.with_name(stem + ".summary.csv")


def cmd_sweep(args) -> int:
    try:
        doc = json.loads(_read(args.spec))
    except json.JSONDecodeError as e:
        raise InvalidConfig(f"experiment spec is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise InvalidConfig("experiment spec must be a JSON object")
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.scheme:
        doc["schemes"] = [s for s in args.scheme.split(",") if s]
    if args.timing:
        doc["record_timing"] = True
    spec = ExperimentSpec.from_dict(doc)
    rows = run_experiment(spec, threads=args.threads)
    out = Path(args.out)
    out.write_text(rows_to_csv(rows))
    summary_path = _summary_path(out, args.summary)
    summary_path.write_text(summary_to_csv(summarize(rows)))
    failed = sum(r.failed for r in rows)
    _write_meta(out, "sweep", spec.to_dict(), spec.seed, {"rows": len(rows), "failed_rows": failed,
                                                          "summary": summary_path.name})
    _say(args, f"sweep {spec.experiment}: {len(rows)} rows, {failed} failed -> {out}")
    return EXIT_OK


def cmd_audit(args) -> int:
    suites = tuple(s for s in args.suites.split(",") if s) if args.suites else SUITES
    unknown = set(suites) - set(SUITES)
    if unknown:
        raise InvalidConfig(f"unknown audit suites: {sorted(unknown)}")
    seed = 0 if args.seed is None else args.seed
    results = run_audit(instances=args.instances, seed=seed, inject_fault=args.inject_fault, suites=suites)
    ok = all(r.passed for r in results)
    if not args.quiet:
        for r in results:
            print(r.line())
    if args.out:
        report = {"passed": ok, "seed": seed, "inject_fault": args.inject_fault,
                  "suites": [{"name": r.name, "n": r.n, "failed": r.n_failed, "worst": r.worst, "tol": r.tol,
                              "passed": r.passed, "failing_instances": r.details} for r in results]}
        out = Path(args.out)
        out.write_text(json.dumps(report, indent=2) + "\n")
        _write_meta(out, "audit", {"suites": list(suites), "instances": args.instances,
                                   "inject_fault": args.inject_fault}, seed)
    n_bad = sum(not r.passed for r in results)
    _say(args, f"audit: {len(results) - n_bad}/{len(results)} suites passed")
    return EXIT_OK if ok else EXIT_AUDIT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="macoff", description="Minimum-energy uplink allocation for edge offloading.")
    p.add_argument("--version", action="version", version=f"macoff {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None, help="seed override (64-bit unsigned)")
    common.add_argument("--quiet", "-q", action="store_true", help="suppress stdout")
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve one scenario")
    s.add_argument("--scenario", required=True, help="scenario JSON file")
    s.add_argument("--scheme", default="fullma-greedy", help="scheme name, e.g. fullma-binary-greedy, tdma-partial")
    s.add_argument("--out", help="output JSON path (default: stdout)")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", parents=[common], help="run an experiment sweep")
    w.add_argument("--spec", required=True, help="experiment spec JSON file")
    w.add_argument("--out", required=True, help="rows CSV path")
    w.add_argument("--summary", help="summary CSV path (default: <out>.summary.csv)")
    w.add_argument("--scheme", help="comma-separated schemes overriding the spec")
    w.add_argument("--threads", type=int, default=None, help="worker threads (default: MACOFF_THREADS, 0 = auto)")
    w.add_argument("--timing", action="store_true", help="record wall times (makes output non-reproducible)")
    w.set_defaults(func=cmd_sweep)

    a = sub.add_parser("audit", parents=[common], help="run the oracle audit suites")
    a.add_argument("--instances", type=int, default=None, help="instances per suite (0 = no-op)")
    a.add_argument("--suites", help=f"comma-separated subset of {','.join(SUITES)}")
    a.add_argument("--inject-fault", action="store_true", help="perturb solver outputs; the audit must fail")
    a.add_argument("--out", help="JSON report path")
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code not in (0, None) else EXIT_OK
    for attr in ("scenario", "spec", "out"):
        if getattr(args, attr, "x") == "":
            rec = error_record(InvalidConfig(f"--{attr} must be non-empty"), EXIT_INVALID)
            print(json.dumps(rec), file=sys.stderr)
            return EXIT_INVALID
    if getattr(args, "instances", None) is not None and args.instances < 0:
        print(json.dumps(error_record(InvalidConfig("--instances must be non-negative"), EXIT_INVALID)),
              file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (MacoffError, ValueError) as err:
        code = exit_code_for(err)
        rec = error_record(err, code)
        print(json.dumps(rec), file=sys.stderr)
        if args.subcommand == "solve" and args.out:
            Path(args.out).write_text(json.dumps(rec, indent=2) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
