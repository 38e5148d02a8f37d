"""Command-line entry point: ``nscascade {run,bounds,synth}``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 when
a run fails.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .config import ConfigError, load_config
from .environment import (
    PerturbationSpec,
    QueryFileError,
    build_synthetic_schedule,
    default_base_vector,
    dump_schedule,
    load_query_models,
)

log = logging.getLogger("nscascade")

REGRET_HEADER = ["policy", "step", "mean_cum_regret", "stderr"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _comment_block(fh, config, resolved: dict) -> None:
    fh.write("# nscascade run\n")
    fh.write("# config: " + json.dumps(config.model_dump(mode="json"), sort_keys=True) + "\n")
    fh.write("# resolved: " + json.dumps(resolved, sort_keys=True, default=str) + "\n")


def write_regret_csv(path, result, resolved) -> None:
    with open(path, "w", newline="") as fh:
        _comment_block(fh, result.config, resolved)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGRET_HEADER)
        for label, agg in result.aggregates.items():
            for step, mean, se in zip(agg.steps, agg.mean, agg.stderr):
                w.writerow([label, fmt(step), fmt(mean), fmt(se)])


def write_per_query_csv(path, result, resolved) -> None:
    with open(path, "w", newline="") as fh:
        _comment_block(fh, result.config, resolved)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id"] + REGRET_HEADER)
        for label, per_query in result.per_query.items():
            for qid, agg in per_query.items():
                for step, mean, se in zip(agg.steps, agg.mean, agg.stderr):
                    w.writerow([qid, label, fmt(step), fmt(mean), fmt(se)])


def write_epochs_csv(path, result, resolved) -> None:
    n = result.config.n
    with open(path, "w", newline="") as fh:
        _comment_block(fh, result.config, resolved)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "epoch", "start_step", "end_step", "mean_regret", "stderr"])
        for label, agg in result.aggregates.items():
            if agg.epoch_starts is None:
                log.warning("%s: runs have different breakpoints; no epoch table", label)
                continue
            ends = [s - 1 for s in agg.epoch_starts[1:]] + [n]
            for i, (s, e, m, se) in enumerate(
                zip(agg.epoch_starts, ends, agg.epoch_mean, agg.epoch_stderr), start=1
            ):
                w.writerow([label, i, s, e, fmt(m), fmt(se)])


def write_traces_csv(path, result) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "query_id", "run", "step", "cum_regret"])
        for (label, qid, run), trace in result.traces.items():
            for step, value in zip(trace.steps, trace.sampled):
                w.writerow([label, qid, run, fmt(step), fmt(value)])


def cmd_run(args) -> int:
    from .harness import describe_policies, run_experiment

    try:
        config = load_config(args.config)
        resolved = describe_policies(config)
    except (ConfigError, QueryFileError, ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    log.info("running %d policies x %d queries x %d runs, n=%d",
             len(config.policies), len(config.queries()), config.runs_per_query, config.n)
    result = run_experiment(config, workers=args.workers, keep_traces=args.traces_out is not None)
    write_regret_csv(args.out, result, resolved)
    if args.per_query_out:
        write_per_query_csv(args.per_query_out, result, resolved)
    if args.epochs_out:
        write_epochs_csv(args.epochs_out, result, resolved)
    if args.traces_out:
        write_traces_csv(args.traces_out, result)
    return 0


def cmd_bounds(args) -> int:
    n = args.n
    gamma = args.gamma if args.gamma is not None else bounds.gamma_for_horizon(n, args.known_upsilon)
    tau = args.tau if args.tau is not None else bounds.tau_for_horizon(n, args.known_upsilon)
    if args.gaps:
        gaps = [float(g) if g.strip().lower() not in ("", "nan", "none") else None
                for g in args.gaps.split(",")]
    elif args.delta is not None:
        gaps = [args.delta] * args.L
    else:
        raise UsageError("upper bounds need --delta (uniform gap) or --gaps")
    rows = [("gamma", gamma), ("tau", tau)]
    try:
        d = bounds.ducb_bound_terms(args.L, n, args.upsilon, gamma, args.epsilon, gaps, args.strict)
        s = bounds.swucb_bound_terms(args.L, n, args.upsilon, tau, args.epsilon, gaps, args.strict)
        rows += [
            ("ducb_upper_bound", sum(d.values())),
            ("ducb_breakpoint_term", d["breakpoint"]),
            ("swucb_upper_bound", sum(s.values())),
            ("swucb_breakpoint_term", s["breakpoint"]),
        ]
        if args.p is not None:
            if args.delta is None:
                raise UsageError("the lower bound needs --delta")
            rows.append(("regret_lower_bound",
                         bounds.regret_lower_bound(args.L, args.K, args.delta, args.p, n)))
    except bounds.BoundDomainError as exc:
        raise UsageError(str(exc)) from None
    if not args.strict and not 0.5 < args.epsilon < 1.0:
        log.warning("epsilon=%s lies outside ε ∈ (1/2,1); bounds evaluated as formulas only", args.epsilon)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["bound_name", "value"])
    for name, value in rows:
        w.writerow([name, fmt(value) if math.isfinite(value) else str(value)])
    return 0


def cmd_synth(args) -> int:
    try:
        if args.base_file:
            models = load_query_models(args.base_file)
            if args.query is None:
                qid, base = next(iter(models))
            else:
                found = dict(iter(models))
                if args.query not in found:
                    raise UsageError(f"query {args.query!r} not in {args.base_file}")
                base = found[args.query]
        else:
            base = default_base_vector(args.L)
        if base.size != args.L:
            raise UsageError(f"base vector has {base.size} entries, expected L={args.L}")
        spec = PerturbationSpec(args.m1, args.m2, args.boosted, args.boost, args.cycles,
                                args.start_phase, args.fixed_subset)
        schedule = build_synthetic_schedule(base, args.K, spec, np.random.default_rng(args.seed))
    except (QueryFileError, ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    dump_schedule(schedule, args.out)
    log.info("wrote %d segments over %d steps to %s", schedule.num_segments, schedule.horizon, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nscascade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", required=True, type=Path)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--per-query-out", type=Path)
    run.add_argument("--epochs-out", type=Path)
    run.add_argument("--traces-out", type=Path)
    run.set_defaults(func=cmd_run)

    b = sub.add_parser("bounds", help="evaluate regret bounds and parameter schedules")
    b.add_argument("--L", type=int, required=True)
    b.add_argument("--K", type=int, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--upsilon", type=int, default=0, help="number of breakpoints")
    b.add_argument("--known-upsilon", type=int, default=None,
                   help="tune gamma/tau with this breakpoint count (default: horizon only)")
    b.add_argument("--gamma", type=float)
    b.add_argument("--tau", type=int)
    b.add_argument("--epsilon", type=float, default=0.75)
    b.add_argument("--p", type=float)
    b.add_argument("--delta", type=float)
    b.add_argument("--gaps", help="comma-separated per-item gaps; empty or nan marks always-optimal items")
    b.add_argument("--strict", action="store_true", help="reject inputs outside the bounds' stated ranges")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("synth", help="generate a perturbed attraction schedule")
    s.add_argument("--L", type=int, default=10)
    s.add_argument("--K", type=int, default=3)
    s.add_argument("--m1", type=int, default=10_000)
    s.add_argument("--m2", type=int, default=10_000)
    s.add_argument("--cycles", type=int, default=5)
    s.add_argument("--boost", type=float, default=0.9)
    s.add_argument("--boosted", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--start-phase", choices=("default", "perturbed"), default="default")
    s.add_argument("--fixed-subset", action="store_true")
    s.add_argument("--base-file", type=Path, help="query model CSV to take the base vector from")
    s.add_argument("--query", help="query id inside --base-file (default: first)")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"nscascade {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"nscascade {args.command}: run failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
