"""JSON experiment configuration."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .environment import (
    AttractionSchedule,
    PerturbationSpec,
    build_lower_bound_instance,
    build_synthetic_schedule,
    default_base_vector,
    load_query_models,
    load_schedule,
)


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PolicySpec(_Strict):
    name: Literal["cascade_ducb", "cascade_swucb", "cascade_ucb1", "cascade_klucb", "ranked_exp3"]
    label: Optional[str] = None
    # "horizon": gamma/tau from n alone; "breakpoints": also use the number of
    # breakpoints of the environment; "doubling": unknown horizon
    tuning: Literal["horizon", "breakpoints", "doubling"] = "horizon"
    params: dict[str, Union[float, int, bool]] = Field(default_factory=dict)

    @property
    def display(self) -> str:
        return self.label or self.name

    @model_validator(mode="after")
    def _check_params(self):
        allowed = {
            "cascade_ducb": {"gamma", "epsilon"},
            "cascade_swucb": {"tau", "epsilon"},
            "cascade_ucb1": {"radius"},
            "cascade_klucb": set(),
            "ranked_exp3": {"exploration"},
        }[self.name]
        unknown = set(self.params) - allowed
        if unknown:
            raise ValueError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        if self.tuning != "horizon" and self.name not in ("cascade_ducb", "cascade_swucb"):
            raise ValueError(f"tuning={self.tuning!r} only applies to cascade_ducb and cascade_swucb")
        return self


class _BaseVectors(_Strict):
    base_vectors: Optional[list[list[float]]] = None
    query_ids: Optional[list[str]] = None
    query_file: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.base_vectors is not None and self.query_file is not None:
            raise ValueError("give base_vectors or query_file, not both")
        if self.query_ids is not None and (
            self.base_vectors is None or len(self.query_ids) != len(self.base_vectors)
        ):
            raise ValueError("query_ids needs one id per entry of base_vectors")
        return self

    def queries(self, L: int) -> list[tuple[str, np.ndarray]]:
        if self.query_file is not None:
            models = load_query_models(self.query_file)
            out = [(qid, alpha) for qid, alpha in models]
        elif self.base_vectors is not None:
            ids = self.query_ids or [f"q{i + 1}" for i in range(len(self.base_vectors))]
            out = [(qid, np.asarray(v, dtype=float)) for qid, v in zip(ids, self.base_vectors)]
        else:
            out = [("default", default_base_vector(L))]
        for qid, alpha in out:
            if alpha.size != L:
                raise ConfigError(f"query {qid!r} has {alpha.size} attraction values, expected L={L}")
            if np.any(alpha < 0) or np.any(alpha > 1):
                raise ConfigError(f"query {qid!r} has probabilities outside [0, 1]")
        return out


class SyntheticEnv(_BaseVectors):
    type: Literal["synthetic"]
    m1: int = Field(10_000, ge=1)
    m2: int = Field(10_000, ge=1)
    num_boosted: int = Field(3, ge=0)
    boost_value: float = Field(0.9, ge=0.0, le=1.0)
    num_cycles: int = Field(5, ge=1)
    start_phase: Literal["default", "perturbed"] = "default"
    fixed_subset: bool = False

    @property
    def spec(self) -> PerturbationSpec:
        return PerturbationSpec(self.m1, self.m2, self.num_boosted, self.boost_value,
                                self.num_cycles, self.start_phase, self.fixed_subset)

    def schedule(self, base, K, rng) -> AttractionSchedule:
        return build_synthetic_schedule(base, K, self.spec, rng)


class StaticEnv(_BaseVectors):
    type: Literal["static"]

    def schedule(self, base, n: int) -> AttractionSchedule:
        return AttractionSchedule.constant(base, n)


class LowerBoundEnv(_Strict):
    type: Literal["lower_bound"]
    p: float = Field(gt=0.0, le=1.0)
    delta: float = Field(gt=0.0)
    flip_steps: list[int] = Field(default_factory=list)


class ScheduleFileEnv(_Strict):
    type: Literal["schedule_file"]
    path: str


Environment = Annotated[
    Union[SyntheticEnv, StaticEnv, LowerBoundEnv, ScheduleFileEnv], Field(discriminator="type")
]


class ExperimentConfig(_Strict):
    L: int = Field(ge=1)
    K: int = Field(ge=1)
    n: int = Field(ge=1)
    policies: list[PolicySpec] = Field(min_length=1)
    environment: Environment
    runs_per_query: int = Field(10, ge=1)
    master_seed: int = Field(0, ge=0)
    trace_stride: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.K > self.L:
            raise ValueError(f"K <= L violated: K={self.K}, L={self.L}")
        labels = [p.display for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError(f"policy labels must be unique, got {labels}")
        env = self.environment
        if isinstance(env, SyntheticEnv):
            if env.num_boosted > self.L - self.K:
                raise ValueError(
                    f"num_boosted <= L - K violated: num_boosted={env.num_boosted}, L-K={self.L - self.K}"
                )
            if env.spec.horizon < self.n:
                raise ValueError(
                    f"schedule horizon num_cycles*(m1+m2)={env.spec.horizon} is shorter than n={self.n}"
                )
        if isinstance(env, LowerBoundEnv):
            if self.L % 2 or self.K != self.L // 2:
                raise ValueError("lower_bound environment needs even L and K = L/2")
            if env.delta > env.p:
                raise ValueError("lower_bound environment needs delta <= p")
        return self

    def queries(self) -> list[tuple[str, Optional[np.ndarray]]]:
        env = self.environment
        if isinstance(env, (SyntheticEnv, StaticEnv)):
            return env.queries(self.L)
        return [(env.type, None)]

    def build_schedule(self, base, rng: np.random.Generator) -> AttractionSchedule:
        env = self.environment
        if isinstance(env, SyntheticEnv):
            return env.schedule(base, self.K, rng)
        if isinstance(env, StaticEnv):
            return env.schedule(base, self.n)
        if isinstance(env, LowerBoundEnv):
            return build_lower_bound_instance(self.L, env.p, env.delta, env.flip_steps, self.n)
        schedule = load_schedule(env.path)
        if schedule.L != self.L or schedule.horizon < self.n:
            raise ConfigError(f"schedule file {env.path} does not match L={self.L}, n={self.n}")
        return schedule


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid config:\n{exc}") from None
    return config
