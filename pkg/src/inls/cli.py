"""Command-line entry point ``inls``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 blow-up halt.
FFT threads are taken from the INLS_THREADS environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .classify import VerdictThresholds, classify_run, verdict_to_dict
from .config import ConfigError, load_config
from .diagnostics import read_series_csv
from .groundstate import QuadratureError, compute_constants, constants_table
from .harness import RunRecord, emit_plotdata, exit_code, run_experiment, sweep_amplitude, virial_check
from .model import ParameterError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BLOWUP = 0, 2, 3, 4


def _groundstate(args) -> int:
    compute_constants(args.N, args.b)
    sys.stdout.write(constants_table([(args.N, args.b)]))
    return EXIT_OK


def _evolve(args) -> int:
    cfg = load_config(args.config)
    rec = run_experiment(cfg, out_dir=args.out)
    print(rec.to_json())
    if args.plot:
        emit_plotdata([rec], args.plot)
    return exit_code(rec)


def _load_record(path: str) -> RunRecord:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError([f"no record in {path}"])
    return RunRecord.from_json(lines[-1])


def _classify(args) -> int:
    rec = _load_record(args.record)
    series = read_series_csv(rec.csv_path)
    verdict = classify_run(series, rec.status, VerdictThresholds(**rec.thresholds))
    print(json.dumps(verdict_to_dict(verdict)))
    return exit_code(rec)


def _sweep(args) -> int:
    cfg = load_config(args.config)
    try:
        amps = [float(a) for a in args.amplitudes.split(",") if a.strip()]
    except ValueError as exc:
        raise ConfigError([f"bad amplitude list: {exc}"]) from None
    summary = sweep_amplitude(cfg, amps, workers=args.workers, out_dir=args.out)
    sys.stdout.write(summary.to_csv())
    print(f"# verdict bracket: {summary.verdict_bracket}; threshold bracket: {summary.threshold_bracket}")
    if args.plot:
        emit_plotdata(summary.records, args.plot, summary)
    return EXIT_OK


def _virial(args) -> int:
    cfg = load_config(args.config)
    res = virial_check(cfg)
    print(f"checkpoints={len(res.t)} max|dMa/dt - rhs|={res.residual:.6e} "
          f"shortcut_rel_err={res.shortcut_error:.3e} status={res.status}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inls", description="Energy-critical inhomogeneous NLS simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("groundstate", help="print the variational constants for (N, b)")
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--b", type=float, required=True)
    g.set_defaults(func=_groundstate)

    e = sub.add_parser("evolve", help="run one experiment from a config file")
    e.add_argument("--config", required=True)
    e.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    e.add_argument("--plot", default=None, help="also write gnuplot data to this directory")
    e.set_defaults(func=_evolve)

    c = sub.add_parser("classify", help="re-classify a stored run record")
    c.add_argument("--record", required=True, help="record file (JSON line; the last line is used)")
    c.set_defaults(func=_classify)

    s = sub.add_parser("sweep", help="amplitude sweep of a config template")
    s.add_argument("--config", required=True)
    s.add_argument("--amplitudes", required=True, help="comma-separated amplitudes")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--plot", default=None)
    s.set_defaults(func=_sweep)

    v = sub.add_parser("virial-check", help="compare dM_a/dt with the virial right-hand side")
    v.add_argument("--config", required=True)
    v.set_defaults(func=_virial)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
