"""Piecewise-constant attraction schedules and the stochastic cascade user."""
from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .model import as_attraction, optimal_list, validate_list

__all__ = [
    "AttractionSchedule",
    "PerturbationSpec",
    "QueryModelSet",
    "QueryFileError",
    "alpha_at",
    "breakpoint_count",
    "build_lower_bound_instance",
    "build_synthetic_schedule",
    "default_base_vector",
    "dump_schedule",
    "epoch_count",
    "first_click_from_uniforms",
    "linear_base_vector",
    "load_query_models",
    "load_schedule",
    "sample_feedback",
]


class QueryFileError(ValueError):
    pass


@dataclass(frozen=True)
class AttractionSchedule:
    """Attraction vectors that stay constant between breakpoints.

    ``starts[i]`` is the first (1-based, inclusive) step of segment ``i`` and
    ``alphas[i]`` its attraction vector. Segments run to the next start, the
    last one to ``horizon``.
    """

    starts: tuple[int, ...]
    alphas: np.ndarray
    horizon: int

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=float, ndmin=2)
        if len(self.starts) != alphas.shape[0] or not self.starts:
            raise ValueError("need one attraction vector per segment start")
        if self.starts[0] != 1:
            raise ValueError("first segment must start at step 1")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError("segment starts must be strictly increasing")
        if self.starts[-1] > self.horizon:
            raise ValueError("segment starts beyond the horizon")
        for row in alphas:
            as_attraction(row)
        alphas.setflags(write=False)
        object.__setattr__(self, "starts", tuple(int(s) for s in self.starts))
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def constant(cls, alpha, horizon: int) -> "AttractionSchedule":
        return cls((1,), np.array([as_attraction(alpha)]), horizon)

    @property
    def L(self) -> int:
        return self.alphas.shape[1]

    @property
    def num_segments(self) -> int:
        return len(self.starts)

    def segments(self):
        """Yield ``(start, end, alpha)`` with ``end`` inclusive."""
        ends = [s - 1 for s in self.starts[1:]] + [self.horizon]
        for start, end, alpha in zip(self.starts, ends, self.alphas):
            yield start, end, alpha

    def __eq__(self, other):
        if not isinstance(other, AttractionSchedule):
            return NotImplemented
        return (
            self.starts == other.starts
            and self.horizon == other.horizon
            and np.array_equal(self.alphas, other.alphas)
        )


def alpha_at(schedule: AttractionSchedule, t: int) -> np.ndarray:
    if not 1 <= t <= schedule.horizon:
        raise ValueError(f"step {t} outside horizon [1, {schedule.horizon}]")
    return schedule.alphas[bisect.bisect_right(schedule.starts, t) - 1]


def breakpoint_count(schedule: AttractionSchedule) -> int:
    """Number of abrupt changes after step 1 (segments - 1)."""
    return schedule.num_segments - 1


def first_click_from_uniforms(shown_alpha: Sequence[float], uniforms: Sequence[float]) -> int:
    # item at position i is attractive iff uniforms[i] < alpha
    for i, (p, u) in enumerate(zip(shown_alpha, uniforms), start=1):
        if u < p:
            return i
    return len(shown_alpha) + 1


def sample_feedback(
    schedule: AttractionSchedule, ranked: Sequence[int], t: int, rng: np.random.Generator
) -> int:
    """Simulate one cascade session at step ``t``; returns the click position or K+1."""
    alpha = alpha_at(schedule, t)
    validate_list(ranked, schedule.L)
    shown = [alpha[a - 1] for a in ranked]
    return first_click_from_uniforms(shown, rng.random(len(ranked)))


def default_base_vector(L: int = 10) -> np.ndarray:
    """Geometrically decaying attractions ``0.6 * 0.75**(i - 1)`` for items ``i = 1..L``.

    A steep head and a long tail of rarely clicked items, the usual shape of
    per-query click models fitted to search logs. For L = 10 this runs from
    0.60 down to about 0.045.
    """
    return np.round(0.6 * 0.75 ** np.arange(L), 12)


def linear_base_vector(L: int = 10, high: float = 0.90, low: float = 0.45) -> np.ndarray:
    """Evenly spaced, strictly decreasing attractions from ``high`` to ``low``."""
    return np.round(np.linspace(high, low, L), 12)


@dataclass(frozen=True)
class PerturbationSpec:
    """Alternating perturbed/default epochs.

    In a perturbed epoch ``num_boosted`` items outside the base top-K get
    attraction ``boost_value`` for ``m1`` steps; a default epoch restores the
    base vector for ``m2`` steps. One cycle is one epoch of each kind.
    """

    m1: int = 10_000
    m2: int = 10_000
    num_boosted: int = 3
    boost_value: float = 0.9
    num_cycles: int = 5
    start_phase: Literal["default", "perturbed"] = "default"
    fixed_subset: bool = False

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("epoch lengths m1 and m2 must be >= 1")
        if self.num_cycles < 1:
            raise ValueError("num_cycles must be >= 1")
        if self.num_boosted < 0:
            raise ValueError("num_boosted must be >= 0")
        if not 0.0 <= self.boost_value <= 1.0:
            raise ValueError("boost_value must lie in [0, 1]")
        if self.start_phase not in ("default", "perturbed"):
            raise ValueError("start_phase must be 'default' or 'perturbed'")

    @property
    def horizon(self) -> int:
        return self.num_cycles * (self.m1 + self.m2)


def _merge_segments(starts, alphas, horizon) -> AttractionSchedule:
    kept_starts, kept = [], []
    for s, a in zip(starts, alphas):
        if kept and np.array_equal(kept[-1], a):
            continue
        kept_starts.append(s)
        kept.append(a)
    return AttractionSchedule(tuple(kept_starts), np.array(kept), horizon)


def build_synthetic_schedule(
    base, K: int, spec: PerturbationSpec, rng: np.random.Generator
) -> AttractionSchedule:
    """Periodically boost random suboptimal items, keeping the base top-K fixed.

    Adjacent epochs with identical vectors are merged, so ``num_boosted=0``
    yields a single segment.
    """
    base = as_attraction(base)
    L = base.size
    if not 1 <= K <= L:
        raise ValueError(f"need 1 <= K <= L, got K={K}, L={L}")
    if spec.num_boosted > L - K:
        raise ValueError(
            f"cannot boost {spec.num_boosted} items: only L-K={L - K} items lie outside the top-{K}"
        )
    top = {a - 1 for a in optimal_list(base, K)}
    candidates = np.array([i for i in range(L) if i not in top])

    subset = None
    phases = ("perturbed", "default")
    if spec.start_phase == "default":
        phases = ("default", "perturbed")
    starts, alphas = [], []
    step = 1
    for _ in range(spec.num_cycles):
        for phase in phases:
            if phase == "perturbed":
                if subset is None or not spec.fixed_subset:
                    subset = rng.choice(candidates, size=spec.num_boosted, replace=False)
                alpha = base.copy()
                alpha[subset] = spec.boost_value
                length = spec.m1
            else:
                alpha = base
                length = spec.m2
            starts.append(step)
            alphas.append(alpha)
            step += length
    return _merge_segments(starts, alphas, spec.horizon)


def build_lower_bound_instance(
    L: int, p: float, delta: float, flip_steps: Sequence[int], n: int
) -> AttractionSchedule:
    """Two-level instance: K = L/2 items at ``p``, the rest at ``p - delta``.

    Items ``1..K`` start optimal; each flip step swaps the optimal and
    suboptimal halves.
    """
    if L < 2 or L % 2:
        raise ValueError(f"L must be even and >= 2, got {L}")
    if not (0.0 < delta <= p <= 1.0):
        raise ValueError(f"need 0 < delta <= p <= 1, got p={p}, delta={delta}")
    flips = list(flip_steps)
    if any(not 1 < s <= n for s in flips) or any(b <= a for a, b in zip(flips, flips[1:])):
        raise ValueError("flip steps must be strictly increasing and within (1, n]")
    K = L // 2
    first = np.full(L, p - delta)
    first[:K] = p
    second = first[::-1].copy()
    alphas = [first if i % 2 == 0 else second for i in range(len(flips) + 1)]
    return AttractionSchedule(tuple([1] + flips), np.array(alphas), n)


@dataclass(frozen=True)
class QueryModelSet:
    query_ids: tuple[str, ...]
    alphas: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.alphas.shape[1]

    def __len__(self):
        return len(self.query_ids)

    def __iter__(self):
        return iter(zip(self.query_ids, self.alphas))


def load_query_models(path) -> QueryModelSet:
    """Read ``query_id,a1,...,aL`` rows of base attraction probabilities."""
    path = Path(path)
    ids, rows = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            lineno = reader.line_num
            if header is None:
                header = [c.strip() for c in row]
                expected = ["query_id"] + [f"a{i}" for i in range(1, len(header))]
                if len(header) < 2 or header != expected:
                    raise QueryFileError(
                        f"{path}:{lineno}: header must be query_id,a1,...,aL; got {','.join(header)}"
                    )
                continue
            if len(row) != len(header):
                raise QueryFileError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
                )
            qid = row[0].strip()
            probs = []
            for col, cell in zip(header[1:], row[1:]):
                try:
                    value = float(cell)
                except ValueError:
                    raise QueryFileError(
                        f"{path}:{lineno}: query {qid!r} column {col}: not a number: {cell!r}"
                    ) from None
                if not 0.0 <= value <= 1.0:
                    raise QueryFileError(
                        f"{path}:{lineno}: query {qid!r} column {col}: probability {value} outside [0, 1]"
                    )
                probs.append(value)
            ids.append(qid)
            rows.append(probs)
    if not ids:
        raise QueryFileError(f"{path}: no queries")
    return QueryModelSet(tuple(ids), np.array(rows))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dump_schedule(schedule: AttractionSchedule, path) -> None:
    """Write ``start_step,a1,...,aL`` rows, preceded by a ``# horizon=`` comment."""
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# horizon={schedule.horizon}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start_step"] + [f"a{i}" for i in range(1, schedule.L + 1)])
        for start, alpha in zip(schedule.starts, schedule.alphas):
            w.writerow([start] + [_fmt(x) for x in alpha])


def load_schedule(path, horizon: int | None = None) -> AttractionSchedule:
    starts, alphas = [], []
    with Path(path).open(newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key.strip() == "horizon" and horizon is None:
                    horizon = int(value)
                continue
            cells = line.split(",")
            if cells[0] == "start_step":
                continue
            try:
                starts.append(int(cells[0]))
                alphas.append([float(c) for c in cells[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed schedule row") from None
    if horizon is None:
        raise ValueError(f"{path}: no horizon given")
    return AttractionSchedule(tuple(starts), np.array(alphas), horizon)


def epoch_count(schedule: AttractionSchedule) -> int:
    """Number of constant epochs; counts the onset at step 1 as a change."""
    return schedule.num_segments

