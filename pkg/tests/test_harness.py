import numpy as np
import pytest

from nscascade.config import ConfigError, ExperimentConfig, load_config
from nscascade.environment import AttractionSchedule, PerturbationSpec, build_synthetic_schedule, default_base_vector
from nscascade.harness import (
    PolicyError,
    RunTrace,
    aggregate,
    build_policy,
    describe_policies,
    per_epoch_regret,
    run_experiment,
    run_single,
    sample_steps,
)
from nscascade.model import per_step_regret
from nscascade.policies import CascadeUCB1, Policy

ALL = ["cascade_ducb", "cascade_swucb", "cascade_ucb1", "cascade_klucb", "ranked_exp3"]


def small_config(**kw):
    raw = dict(
        L=6, K=2, n=600, runs_per_query=3, master_seed=5, trace_stride=50,
        policies=[{"name": n} for n in ALL],
        environment={"type": "synthetic", "m1": 100, "m2": 100, "num_cycles": 3, "num_boosted": 2,
                     "base_vectors": [[0.5, 0.4, 0.3, 0.2, 0.1, 0.05], [0.3, 0.3, 0.2, 0.2, 0.1, 0.1]]},
    )
    raw.update(kw)
    return ExperimentConfig.model_validate(raw)


class Fixed(Policy):
    name = "fixed"

    def __init__(self, ranked):
        super().__init__(4, len(ranked))
        self.ranked = ranked
        self.clicks = []

    def select(self, t):
        return self.ranked

    def update(self, t, ranked, click):
        self.clicks.append(click)


def test_sample_steps():
    assert sample_steps(10, 3).tolist() == [3, 6, 9, 10]
    assert sample_steps(9, 3).tolist() == [3, 6, 9]
    assert sample_steps(2, 5).tolist() == [2]


def test_run_single_regret_matches_model():
    sch = AttractionSchedule((1, 6), np.array([[0.5, 0.4, 0.3, 0.2], [0.1, 0.2, 0.3, 0.9]]), 10)
    pol = Fixed((2, 1))
    trace = run_single(sch, pol, 10, 2, seed=0, stride=1)
    expected = [per_step_regret((2, 1), sch.alphas[0], 2)] * 5 + [per_step_regret((2, 1), sch.alphas[1], 2)] * 5
    np.testing.assert_allclose(np.diff(trace.cumulative, prepend=0), expected, atol=1e-15)
    assert trace.epoch_starts == (1, 6)
    np.testing.assert_allclose(trace.epoch_regret, [sum(expected[:5]), sum(expected[5:])])
    np.testing.assert_allclose(per_epoch_regret(trace, sch), trace.epoch_regret)
    assert len(pol.clicks) == 10 and all(1 <= c <= 3 for c in pol.clicks)


def test_run_single_rejects_invalid_lists():
    sch = AttractionSchedule.constant([0.5, 0.4, 0.3, 0.2], 5)
    with pytest.raises(PolicyError, match="invalid list"):
        run_single(sch, Fixed((1, 1)), 5, 2, seed=0)
    with pytest.raises(PolicyError):
        run_single(sch, Fixed((1, 7)), 5, 2, seed=0)


def test_run_single_truncates_to_n():
    sch = AttractionSchedule((1, 8), np.array([[0.5, 0.4, 0.3, 0.2], [0.2, 0.3, 0.4, 0.5]]), 20)
    trace = run_single(sch, CascadeUCB1(4, 2), 5, 2, seed=0)
    assert trace.n == 5 and trace.epoch_starts == (1,)


def test_policies_share_click_uniforms():
    sch = AttractionSchedule.constant([0.5, 0.4, 0.3, 0.2], 50)
    a, b = Fixed((1, 2)), Fixed((1, 2))
    run_single(sch, a, 50, 2, seed=np.random.SeedSequence(3))
    run_single(sch, b, 50, 2, seed=np.random.SeedSequence(3))
    assert a.clicks == b.clicks


def test_aggregate_mean_and_stderr():
    t1 = RunTrace(np.array([1.0, 2.0, 4.0]), 1, (1, 3))
    t2 = RunTrace(np.array([1.0, 3.0, 6.0]), 1, (1, 3))
    agg = aggregate([t1, t2])
    np.testing.assert_allclose(agg.mean, [1.0, 2.5, 5.0])
    np.testing.assert_allclose(agg.stderr, [0.0, 0.5, 1.0])
    np.testing.assert_allclose(agg.epoch_mean, [2.5, 2.5])
    assert agg.final_mean == 5.0 and agg.count == 2
    single = aggregate([t1])
    assert single.final_stderr == 0.0
    mixed = aggregate([t1, RunTrace(np.array([1.0, 2.0, 4.0]), 1, (1, 2))])
    assert mixed.epoch_starts is None


def test_run_experiment_deterministic_and_consistent():
    cfg = small_config()
    r1 = run_experiment(cfg, keep_traces=True)
    r2 = run_experiment(cfg, workers=2, keep_traces=True)
    assert r1.query_ids == ["q1", "q2"]
    for label in r1.aggregates:
        np.testing.assert_array_equal(r1.aggregates[label].mean, r2.aggregates[label].mean)
        np.testing.assert_array_equal(r1.aggregates[label].stderr, r2.aggregates[label].stderr)
        assert r1.aggregates[label].count == 6
    for key, trace in r1.traces.items():
        np.testing.assert_array_equal(trace.cumulative, r2.traces[key].cumulative)
        # regret is non-negative, so the curve never decreases
        assert np.all(np.diff(trace.cumulative) >= 0)
        assert trace.epoch_regret.sum() == pytest.approx(trace.final, rel=1e-12)


def test_policies_in_a_cell_share_the_schedule():
    cfg = small_config()
    res = run_experiment(cfg, keep_traces=True)
    starts = {res.traces[(p, "q1", 0)].epoch_starts for p in ALL}
    assert len(starts) == 1


def test_different_seeds_differ():
    a = run_experiment(small_config(master_seed=1))
    b = run_experiment(small_config(master_seed=2))
    assert a.aggregates["cascade_ucb1"].final_mean != b.aggregates["cascade_ucb1"].final_mean


def test_breakpoint_tuning_uses_schedule():
    cfg = small_config(policies=[
        {"name": "cascade_ducb", "tuning": "breakpoints"},
        {"name": "cascade_swucb", "tuning": "breakpoints"},
        {"name": "cascade_ducb", "label": "ducb_doubling", "tuning": "doubling"},
        {"name": "cascade_swucb", "label": "fixed_tau", "params": {"tau": 40}},
    ])
    info = describe_policies(cfg)
    # 6 epochs over n=600 -> 5 breakpoints
    assert info["cascade_ducb"]["gamma"] == pytest.approx(1 - 0.25 * np.sqrt(5 / 600))
    assert info["cascade_swucb"]["tau"] == int(np.ceil(2 * np.sqrt(600 * np.log(600) / 5)))
    assert info["ducb_doubling"]["doubling"] is True
    assert info["fixed_tau"]["tau"] == 40


def test_static_breakpoint_tuning_means_no_forgetting():
    cfg = ExperimentConfig.model_validate(dict(
        L=4, K=2, n=100, policies=[{"name": "cascade_swucb", "tuning": "breakpoints"}],
        environment={"type": "static"}))
    assert describe_policies(cfg)["cascade_swucb"]["tau"] == 100


def test_lower_bound_environment_runs():
    cfg = ExperimentConfig.model_validate(dict(
        L=4, K=2, n=300, runs_per_query=2,
        policies=[{"name": "cascade_ducb"}, {"name": "cascade_klucb"}],
        environment={"type": "lower_bound", "p": 0.5, "delta": 0.2, "flip_steps": [101, 201]}))
    res = run_experiment(cfg)
    assert res.query_ids == ["lower_bound"]
    assert res.aggregates["cascade_ducb"].epoch_starts == (1, 101, 201)


def test_schedule_file_environment(tmp_path):
    from nscascade.environment import dump_schedule
    sch = build_synthetic_schedule(default_base_vector(6), 2, PerturbationSpec(m1=50, m2=50, num_cycles=2),
                                   np.random.default_rng(0))
    path = tmp_path / "s.csv"
    dump_schedule(sch, path)
    cfg = ExperimentConfig.model_validate(dict(
        L=6, K=2, n=200, runs_per_query=1, policies=[{"name": "cascade_ucb1"}],
        environment={"type": "schedule_file", "path": str(path)}))
    res = run_experiment(cfg)
    assert res.aggregates["cascade_ucb1"].epoch_starts == sch.starts


@pytest.mark.parametrize("raw, match", [
    (dict(L=3, K=4), "K <= L"),
    (dict(environment={"type": "synthetic", "num_boosted": 5}), "num_boosted"),
    (dict(n=10**6), "horizon"),
    (dict(policies=[{"name": "cascade_ucb1", "params": {"gamma": 0.9}}]), "unknown parameters"),
    (dict(policies=[{"name": "cascade_ucb1", "tuning": "doubling"}]), "tuning"),
    (dict(policies=[{"name": "cascade_ucb1"}, {"name": "cascade_ucb1"}]), "unique"),
    (dict(policies=[{"name": "bogus"}]), "policies"),
])
def test_config_validation(tmp_path, raw, match):
    base = dict(L=6, K=2, n=100, policies=[{"name": "cascade_ucb1"}],
                environment={"type": "synthetic", "m1": 50, "m2": 50, "num_cycles": 1})
    base.update(raw)
    import json
    path = tmp_path / "c.json"
    path.write_text(json.dumps(base))
    with pytest.raises(ConfigError, match=match):
        load_config(path)


def test_missing_config(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")


def test_build_policy_defaults():
    cfg = small_config()
    sch = AttractionSchedule.constant(default_base_vector(6), 600)
    pol = build_policy(cfg.policies[0], cfg, sch, np.random.default_rng(0))
    assert pol.gamma == 1 - 1 / (4 * np.sqrt(600))
