"""Command-line entry point ``dampedns``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 a FAIL verdict under ``report --strict``. The default FFT thread count is
read from ``DAMPEDNS_THREADS``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, config_hash, load_document, load_run, normalize_run
from .spectral import THREADS_ENV

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_STRICT = 0, 2, 3, 4

log = logging.getLogger("dampedns")


def _run_label(path: Path) -> str:
    return path.stem


def cmd_simulate(args) -> int:
    from .harness import execute_run

    run = load_run(args.config)
    out = Path(args.out)
    if args.resume:
        # an explicit checkpoint path: run the simulation phase from it
        from .harness import analysis_diagnostics

        out.mkdir(parents=True, exist_ok=True)
        row = analysis_diagnostics(run, out, resume=args.resume, base_dir=Path(args.config).parent)
        print(json.dumps(row, indent=2, sort_keys=True))
        return EXIT_OK
    man = execute_run(out.name, run, ("diagnostics",), out.parent, resume=False, base_dir=Path(args.config).parent)
    return _status_code(man)


def cmd_lyapunov(args) -> int:
    from .harness import execute_run

    run = load_run(args.config)
    out = Path(args.out)
    man = execute_run(out.name, run, ("lyapunov",), out.parent, base_dir=Path(args.config).parent)
    if man.status == "ok":
        rep = json.loads((out / "lyapunov.json").read_text())
        print(f"kaplan_yorke = {rep['kaplan_yorke']:.6g} ({rep['ky_status']})")
    return _status_code(man)


def cmd_bounds(args) -> int:
    from .harness import analysis_bounds

    run = load_run(args.config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    row = analysis_bounds(run, out.parent, out_json=out)
    print(f"best_s = {row['best_s']:g}, best_bound = {row['best_bound']:.6g}, periodic = {row['periodic_bound']:.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .inequalities import verify_all
    from .io import write_json

    if args.trials < 1:
        raise ConfigError("--trials must be positive")
    res = verify_all(trials=args.trials, n=args.grid, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, res)
    for name, r in res.items():
        print(f"{name:16s} trials={r['trials']:<8d} min_slack={r['min_slack']:+.3e} constant={r['empirical_constant']:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .harness import plan_from_document, run_plan

    doc = load_document(args.config)
    plan = plan_from_document(doc, output_dir=args.out, max_parallel=args.max_parallel, base_dir=Path(args.config).parent)
    manifests = run_plan(plan, resume=args.resume)
    bad = [m for m in manifests if m.status != "ok"]
    for m in manifests:
        print(f"{m.label:32s} {m.status}" + (f"  ({m.error})" if m.error else ""))
    if any(m.status == "config_error" for m in bad):
        return EXIT_CONFIG
    return EXIT_NUMERICAL if bad else EXIT_OK


def cmd_report(args) -> int:
    from .harness import compare_report, read_summary, write_verdicts

    try:
        rows = read_summary(args.summary)
    except OSError as exc:
        raise ConfigError(f"cannot read summary: {exc}") from None
    try:
        verdicts = compare_report(rows)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for v in verdicts:
        slack = "" if v["slack"] is None else f"{v['slack']:+.3e}"
        print(f"{v['verdict']:12s} {v['label']:32s} {v['check']:30s} {slack} {v['note']}")
    if args.out:
        write_verdicts(args.out, verdicts)
    failed = [v for v in verdicts if v["verdict"] != "PASS"]
    if args.strict and failed:
        return EXIT_STRICT
    return EXIT_OK


def cmd_hash(args) -> int:
    print(config_hash(normalize_run(load_document(args.config))))
    return EXIT_OK


def _status_code(man) -> int:
    if man.status == "ok":
        return EXIT_OK
    print(f"run {man.label}: {man.status}: {man.error}", file=sys.stderr)
    return EXIT_CONFIG if man.status == "config_error" else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dampedns", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=None, help=f"FFT worker threads (default: ${THREADS_ENV} or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate one run and write diagnostics")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="run directory")
    s.add_argument("--resume", default=None, help="checkpoint (run dir, checkpoint.json or ckpt-* dir)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("lyapunov", help="Lyapunov spectrum, Kaplan-Yorke dimension, trace check")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="run directory")
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("bounds", help="closed-form dimension bounds for the configured forcing")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="report.json (a .csv table is written alongside)")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("verify-inequalities", help="Monte Carlo checks of the functional inequalities")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--grid", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="run an experiment plan")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None, help="output directory (overrides the plan)")
    s.add_argument("--max-parallel", type=int, default=None)
    s.add_argument("--resume", action="store_true", help="skip finished runs, resume from checkpoints")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", help="PASS/FAIL verdicts from a summary.csv")
    s.add_argument("--summary", required=True, help="summary.csv or its directory")
    s.add_argument("--strict", action="store_true", help="exit 4 unless every verdict is PASS")
    s.add_argument("--out", default=None, help="write the verdict table as CSV")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("hash", help="print the canonical config hash")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_hash)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None:
        import os

        os.environ[THREADS_ENV] = str(args.threads)
    from .dynamics import BlowUpError
    from .variational import RankCollapseError

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, RankCollapseError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
