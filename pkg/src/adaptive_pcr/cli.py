"""Command line runner: ``adaptive-pcr {estimate,bandit,panel,coverage,selftest}``.

Each command writes ``summary.csv`` (one row per grid point) and, except for
``selftest``, per-replication traces under ``traces/`` in the output
directory. Invalid configuration exits with status 2 and prints a JSON error
record on stderr; replications that fail numerically are listed in
``failures.csv`` and counted as warnings.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import experiments as ex
from .errors import ConfigError

log = logging.getLogger("adaptive_pcr")

COMMANDS = {"estimate": "rate", "bandit": "bandit", "panel": "panel",
            "coverage": "coverage", "selftest": "selftest"}

SUMMARY_HEADERS = {
    "coverage": ["checkpoint", "n_valid", "n_invalid", "mean_err", "median_err", "q90_err",
                 "mean_bound", "violations"],
    "rate": ["checkpoint", "n_valid", "n_invalid", "mean_err", "median_err", "q90_err",
             "mean_bound", "violations", "simp_rate", "median_snr_sq_inv_kappa_sq"],
    "bandit": ["checkpoint", "mean_weak_per_round", "median_weak_per_round", "q90_weak_per_round",
               "mean_inter", "mean_strong", "mean_bound", "violations", "gap_violations"],
    "panel": ["checkpoint", "n_valid", "n_invalid", "mean_err", "median_err", "q90_err",
              "mean_bound", "violations", "snr_gate_passed", "max_identity_gap"],
    "selftest": ["name", "value", "reference", "rel_err", "passed"],
}


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])


def _stats(vals):
    vals = np.asarray([v for v in vals if v is not None and not math.isnan(v)], dtype=float)
    if vals.size == 0:
        return math.nan, math.nan, math.nan
    return float(vals.mean()), float(np.median(vals)), float(np.quantile(vals, 0.9))


def summarize(exp: ex.ExperimentConfig, results) -> list[dict]:
    kind = exp.kind
    out = []
    for c in exp.grid:
        rows = [r for _, rr in results for r in rr if r["checkpoint"] == c]
        if kind == "bandit":
            weak = [r["weak"] / c for r in rows]
            mean, med, q90 = _stats(weak)
            bounds = [r["ellipsoid_term"] + r["noise_term"] for r in rows]
            out.append(dict(
                checkpoint=c, mean_weak_per_round=mean, median_weak_per_round=med,
                q90_weak_per_round=q90,
                mean_inter=_stats([r["inter"] for r in rows])[0],
                mean_strong=_stats([r["strong"] for r in rows])[0],
                mean_bound=_stats(bounds)[0],
                violations=sum(r["inter"] > b for r, b in zip(rows, bounds)),
                gap_violations=sum(r["gap_mean"] > r["gap_cap"] for r in rows),
            ))
            continue
        valid = [r for r in rows if r["bound"] is not None]
        mean, med, q90 = _stats([r["err"] for r in rows])
        row = dict(
            checkpoint=c, n_valid=len(valid), n_invalid=len(rows) - len(valid),
            mean_err=mean, median_err=med, q90_err=q90,
            mean_bound=_stats([r["bound"] for r in valid])[0],
            violations=sum(r["err"] > r["bound"] for r in valid),
        )
        if kind == "rate":
            row["simp_rate"] = exp.r**2 / min(exp.d, c)
            row["median_snr_sq_inv_kappa_sq"] = _stats([r["snr_sq_inv_kappa_sq"] for r in rows])[1]
        if kind == "panel":
            row["snr_gate_passed"] = sum(bool(r["snr_gate"]) for r in rows)
            row["max_identity_gap"] = max((r["identity_gap"] for r in rows), default=math.nan)
        out.append(row)
    return out


def _trace_header(kind):
    return {
        "coverage": ["checkpoint", "action", "err", "bound"],
        "rate": ["checkpoint", "action", "err", "bound", "snr_sq_inv_kappa_sq", "simp_rate"],
        "bandit": ["checkpoint", "weak", "inter", "strong", "gap_mean", "gap_cap",
                   "ellipsoid_term", "noise_term"],
        "panel": ["checkpoint", "action", "err", "bound", "snr_gate", "identity_gap"],
    }[kind]


def execute(exp: ex.ExperimentConfig, quiet: bool = False) -> int:
    """Run ``exp`` and write its outputs; returns the process exit status."""
    os.makedirs(exp.out, exist_ok=True)
    if exp.kind == "selftest":
        rows = ex.selftest_rows()
        _write_csv(os.path.join(exp.out, "summary.csv"), SUMMARY_HEADERS["selftest"], rows)
        if not quiet:
            for r in rows:
                print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']} rel_err={r['rel_err']:.2e}")
        return 0 if all(r["passed"] for r in rows) else 1

    results, failures = ex.run_replications(exp)
    trace_dir = os.path.join(exp.out, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    for i, rows in results:
        _write_csv(os.path.join(trace_dir, f"rep_{i:05d}.csv"), _trace_header(exp.kind), rows)
    if exp.kind == "bandit":
        # full per-round trace of the first replication for plotting
        if results:
            _, trace = ex.bandit_rep(exp, results[0][0], return_trace=True)
            trace.to_csv(os.path.join(trace_dir, f"rounds_{results[0][0]:05d}.csv"))
    summary = summarize(exp, results)
    _write_csv(os.path.join(exp.out, "summary.csv"), SUMMARY_HEADERS[exp.kind], summary)
    if failures:
        _write_csv(os.path.join(exp.out, "failures.csv"), ["rep", "error"],
                   [dict(rep=i, error=e) for i, e in failures])
        print(f"warning: {len(failures)} replication(s) failed; see failures.csv", file=sys.stderr)
    if exp.kind == "coverage" and results:
        rep = ex.summarize_coverage(exp, [rows for _, rows in results])
        if not quiet:
            print(f"coverage: any-violation fraction {rep.any_violation_frac:.4f} "
                  f"(valid checkpoints {rep.valid_checkpoints}, not yet valid {rep.invalid_checkpoints})")
    if not quiet:
        print(f"{exp.kind}: {len(results)} replication(s) written to {exp.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptive-pcr", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--reps", type=int, help="number of replications")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int, help="worker processes for replications")
        sp.add_argument("--quiet", action="store_true")
    return p


def _error(kind: str, msg: str, code: int) -> int:
    print(json.dumps({"status": "error", "type": kind, "message": msg}), file=sys.stderr)
    return code


def load_experiment(command: str, config_path=None, **overrides) -> ex.ExperimentConfig:
    kind = COMMANDS[command]
    values = {}
    if config_path is not None:
        with open(config_path) as fh:
            values = ex.parse_config_text(fh.read())
    file_kind = values.pop("kind", kind)
    if file_kind != kind:
        raise ConfigError(f"config kind {file_kind!r} does not match command {command!r}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ex.default_config(kind, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        exp = load_experiment(args.command, args.config, seed=args.seed, reps=args.reps,
                              out=args.out, workers=args.workers)
    except ConfigError as exc:
        return _error("ConfigError", str(exc), 2)
    except OSError as exc:
        return _error("OSError", str(exc), 2)
    return execute(exp, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
