"""Run policies against attraction schedules and aggregate regret curves.

Each (policy, query, run) cell is an independent work item. Its random
streams come from ``numpy.random.SeedSequence(master_seed,
spawn_key=(query, run, stream))`` so results do not depend on the number of
workers or on execution order. All policies in a cell see the same schedule
and the same per-step uniforms for click generation.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import gamma_for_horizon, tau_for_horizon
from .config import ExperimentConfig, PolicySpec
from .environment import AttractionSchedule, breakpoint_count
from .model import list_reward
from .policies import Policy, make_policy

SCHEDULE_STREAM, CLICK_STREAM, POLICY_STREAM = 0, 1, 2


class PolicyError(RuntimeError):
    pass


@dataclass
class RunTrace:
    cumulative: np.ndarray  # cumulative expected regret after each step
    stride: int
    epoch_starts: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.cumulative.size

    @property
    def final(self) -> float:
        return float(self.cumulative[-1])

    @property
    def steps(self) -> np.ndarray:
        return sample_steps(self.n, self.stride)

    @property
    def sampled(self) -> np.ndarray:
        return self.cumulative[self.steps - 1]

    @property
    def epoch_regret(self) -> np.ndarray:
        return _difference_at(self.cumulative, self.epoch_starts)


def sample_steps(n: int, stride: int) -> np.ndarray:
    steps = np.arange(stride, n + 1, stride)
    if steps.size == 0 or steps[-1] != n:
        steps = np.append(steps, n)
    return steps


def _difference_at(cumulative: np.ndarray, starts) -> np.ndarray:
    ends = [s - 1 for s in starts[1:]] + [cumulative.size]
    at_end = cumulative[np.array(ends) - 1]
    return np.diff(at_end, prepend=0.0)


def per_epoch_regret(trace: RunTrace, schedule: AttractionSchedule) -> np.ndarray:
    """Regret accumulated inside each segment of ``schedule`` (truncated to the trace)."""
    if schedule.horizon < trace.n:
        raise ValueError(f"schedule horizon {schedule.horizon} shorter than trace ({trace.n} steps)")
    starts = [s for s in schedule.starts if s <= trace.n]
    return _difference_at(trace.cumulative, starts)


def run_single(schedule: AttractionSchedule, policy: Policy, n: int, K: int, seed,
               stride: int = 100) -> RunTrace:
    """Play ``policy`` for ``n`` steps and record its expected regret."""
    if schedule.horizon < n:
        raise ValueError(f"schedule horizon {schedule.horizon} shorter than n={n}")
    L = schedule.L
    rng = np.random.default_rng(seed)
    regret = np.empty(n)
    starts = []
    for start, end, alpha in schedule.segments():
        if start > n:
            break
        starts.append(start)
        end = min(end, n)
        values = alpha.tolist()
        best = list_reward(sorted(values)[-K:])
        uniforms = rng.random((end - start + 1, K)).tolist()
        for t in range(start, end + 1):
            ranked = policy.select(t)
            if len(ranked) != K or len(set(ranked)) != K or min(ranked) < 1 or max(ranked) > L:
                raise PolicyError(f"{policy.name} emitted invalid list {ranked!r} at step {t}")
            shown = [values[a - 1] for a in ranked]
            regret[t - 1] = best - list_reward(shown)
            u = uniforms[t - start]
            click = K + 1
            for i in range(K):
                if u[i] < shown[i]:
                    click = i + 1
                    break
            policy.update(t, ranked, click)
    return RunTrace(np.cumsum(regret), stride, tuple(starts))


@dataclass
class AggregateResult:
    steps: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    count: int
    epoch_starts: Optional[tuple[int, ...]] = None
    epoch_mean: Optional[np.ndarray] = None
    epoch_stderr: Optional[np.ndarray] = None

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def final_stderr(self) -> float:
        return float(self.stderr[-1])


def _mean_stderr(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = rows.mean(axis=0)
    if rows.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])


def aggregate(traces: list[RunTrace]) -> AggregateResult:
    """Mean and standard error across traces, in the order given."""
    if not traces:
        raise ValueError("nothing to aggregate")
    steps = traces[0].steps
    if any(not np.array_equal(tr.steps, steps) for tr in traces):
        raise ValueError("traces have different sample steps")
    mean, stderr = _mean_stderr(np.stack([tr.sampled for tr in traces]))
    result = AggregateResult(steps, mean, stderr, len(traces))
    starts = traces[0].epoch_starts
    if all(tr.epoch_starts == starts for tr in traces):
        result.epoch_starts = starts
        result.epoch_mean, result.epoch_stderr = _mean_stderr(
            np.stack([tr.epoch_regret for tr in traces])
        )
    return result


def cell_seed(master_seed: int, query: int, run: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(query, run, stream))


def build_policy(spec: PolicySpec, config: ExperimentConfig, schedule: AttractionSchedule,
                 rng: np.random.Generator) -> Policy:
    params = dict(spec.params)
    if spec.tuning == "doubling":
        params["doubling"] = True
    elif spec.tuning == "breakpoints":
        upsilon = breakpoint_count(_truncated(schedule, config.n))
        if spec.name == "cascade_ducb":
            params.setdefault("gamma", gamma_for_horizon(config.n, upsilon))
        elif spec.name == "cascade_swucb":
            params.setdefault("tau", tau_for_horizon(max(config.n, 2), upsilon))
    return make_policy(spec.name, config.L, config.K, config.n, rng=rng, **params)


def _truncated(schedule: AttractionSchedule, n: int) -> AttractionSchedule:
    keep = [i for i, s in enumerate(schedule.starts) if s <= n]
    return AttractionSchedule(tuple(schedule.starts[i] for i in keep), schedule.alphas[keep], n)


def resolved_params(policy: Policy) -> dict:
    """Parameter values a policy actually runs with."""
    out = {}
    for key in ("gamma", "tau", "epsilon", "radius", "exploration", "doubling"):
        if hasattr(policy, key):
            out[key] = getattr(policy, key)
    return out


def _run_cell(args) -> RunTrace:
    config, policy_index, query_index, run_index, base = args
    seed = config.master_seed
    schedule = config.build_schedule(
        base, np.random.default_rng(cell_seed(seed, query_index, run_index, SCHEDULE_STREAM))
    )
    policy = build_policy(
        config.policies[policy_index], config, schedule,
        np.random.default_rng(cell_seed(seed, query_index, run_index, POLICY_STREAM)),
    )
    return run_single(schedule, policy, config.n, config.K,
                      cell_seed(seed, query_index, run_index, CLICK_STREAM), config.trace_stride)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    query_ids: list[str]
    aggregates: dict[str, AggregateResult] = field(default_factory=dict)
    per_query: dict[str, dict[str, AggregateResult]] = field(default_factory=dict)
    traces: dict[tuple[str, str, int], RunTrace] = field(default_factory=dict)


def run_experiment(config: ExperimentConfig, workers: int = 1, keep_traces: bool = False) -> ExperimentResult:
    """Run every (policy, query, run) cell and aggregate per policy and per query."""
    queries = config.queries()
    cells = [
        (p, q, r)
        for p in range(len(config.policies))
        for q in range(len(queries))
        for r in range(config.runs_per_query)
    ]
    jobs = [(config, p, q, r, queries[q][1]) for p, q, r in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_cell, jobs))
    else:
        traces = [_run_cell(job) for job in jobs]
    by_cell = dict(zip(cells, traces))

    result = ExperimentResult(config, [qid for qid, _ in queries])
    for p, spec in enumerate(config.policies):
        label = spec.display
        ordered = [by_cell[(p, q, r)] for q in range(len(queries)) for r in range(config.runs_per_query)]
        result.aggregates[label] = aggregate(ordered)
        result.per_query[label] = {
            qid: aggregate([by_cell[(p, q, r)] for r in range(config.runs_per_query)])
            for q, (qid, _) in enumerate(queries)
        }
        if keep_traces:
            for q, (qid, _) in enumerate(queries):
                for r in range(config.runs_per_query):
                    result.traces[(label, qid, r)] = by_cell[(p, q, r)]
    return result


def describe_policies(config: ExperimentConfig) -> dict[str, dict]:
    """Resolved parameters of each policy, using the first cell's schedule."""
    queries = config.queries()
    schedule = config.build_schedule(
        queries[0][1], np.random.default_rng(cell_seed(config.master_seed, 0, 0, SCHEDULE_STREAM))
    )
    out = {}
    for spec in config.policies:
        policy = build_policy(spec, config, schedule, np.random.default_rng(0))
        out[spec.display] = {"name": spec.name, "tuning": spec.tuning, **resolved_params(policy)}
    return out


__all__ = [
    "AggregateResult",
    "ExperimentResult",
    "PolicyError",
    "RunTrace",
    "aggregate",
    "cell_seed",
    "describe_policies",
    "per_epoch_regret",
    "run_experiment",
    "run_single",
    "sample_steps",
]
