import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import WALK, bundled_tasks, walk_task
from gsp.errors import AllEmpty
from gsp.generators import domain_text
from gsp.pddl import parse_domain
from gsp.qfunc import OracleQ, QFunction
from gsp.search import BUDGET, GOAL, EpisodeResult
from gsp.train import (SATISFICED, SOLVED, UNSOLVED, InstancePools, MetricsLog, TrainConfig, ValidationScore,
                       classify, load_checkpoint, sample_instance, train, validate)


def _res(outcome, expansions, plan_len):
    return EpisodeResult(outcome, expansions, None if plan_len is None else list(range(plan_len)))


def test_classify_rules():
    assert classify(_res(BUDGET, 100, None)) == UNSOLVED
    assert classify(_res(GOAL, 7, 7)) == SOLVED
    assert classify(_res(GOAL, 12, 7)) == SATISFICED


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.sampled_from(["u", "s", "f"])), max_size=60))
def test_pool_partition_invariant(updates):
    pools = InstancePools(range(6))
    for inst, kind in updates:
        res = {"u": _res(BUDGET, 5, None), "s": _res(GOAL, 3, 3), "f": _res(GOAL, 9, 3)}[kind]
        label = pools.update(inst, res)
        assert pools.label[inst] == label and inst in pools.members(label)
        assert pools.check_partition()


def test_demotion_and_bookkeeping():
    pools = InstancePools([0])
    pools.update(0, _res(GOAL, 4, 4))
    pools.update(0, _res(BUDGET, 50, None))
    assert pools.members(UNSOLVED) == [0] and pools.ever_solved == {0}
    assert pools.best_plan[0] == 4 and pools.last_expansions[0] == 50


def _pools(layout):
    pools = InstancePools(range(sum(layout.values())))
    i = 0
    for label, n in layout.items():
        for _ in range(n):
            pools.update(i, {UNSOLVED: _res(BUDGET, 1, None), SOLVED: _res(GOAL, 2, 2), SATISFICED: _res(GOAL, 5, 2)}[label])
            i += 1
    return pools


def _frequencies(pools, beta, order="rationale", n=10_000, seed=0):
    rng = random.Random(seed)
    counts = {SOLVED: 0, UNSOLVED: 0, SATISFICED: 0}
    for _ in range(n):
        counts[pools.label[sample_instance(pools, rng, beta, order)]] += 1
    return counts


def test_only_unsolved():
    pools = _pools({UNSOLVED: 3})
    assert _frequencies(pools, 4.0, n=200)[UNSOLVED] == 200


def test_pool_weights_within_three_sigma():
    pools = _pools({SOLVED: 2, UNSOLVED: 3, SATISFICED: 4})
    n = 10_000
    for beta, order, expected in [
        (4.0, "rationale", {SOLVED: 1 / 21, UNSOLVED: 4 / 21, SATISFICED: 16 / 21}),
        (4.0, "literal", {UNSOLVED: 1 / 21, SOLVED: 4 / 21, SATISFICED: 16 / 21}),
        (1.0, "rationale", {SOLVED: 1 / 3, UNSOLVED: 1 / 3, SATISFICED: 1 / 3}),
    ]:
        counts = _frequencies(pools, beta, order, n)
        for label, p in expected.items():
            assert abs(counts[label] - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_uniform_within_pool_and_empty():
    pools = _pools({SATISFICED: 4})
    rng = random.Random(1)
    seen = [sample_instance(pools, rng) for _ in range(4000)]
    assert all(abs(seen.count(i) - 1000) < 3 * math.sqrt(4000 * 0.25 * 0.75) for i in range(4))
    with pytest.raises(AllEmpty):
        sample_instance(InstancePools([]), rng)


def test_validation_ranking():
    a = ValidationScore(1.0, 40.0, 3.0)
    b = ValidationScore(1.0, 50.0, 0.1)
    c = ValidationScore(0.5, 10.0, 0.0)
    assert a.better_than(b) and b.better_than(c) and a.better_than(None) and not b.better_than(a)
    assert ValidationScore(1.0, 40.0, 1.0).better_than(a)
    assert validate(None, []).coverage == 0.0


class PerTaskOracle(QFunction):
    def __init__(self):
        self.by_task = {}

    def q_values(self, task, state, actions):
        if task not in self.by_task:
            self.by_task[task] = OracleQ(task)
        return self.by_task[task].q_values(task, state, actions)


def test_validate_with_oracle_is_perfect():
    tasks = [t for _, _, t in bundled_tasks("gripper", 4, seed=2)]
    from gsp.generators import bfs_plan_length
    score = validate(PerTaskOracle(), tasks)
    assert score.coverage == 1.0 and score.rmse == 0.0
    assert score.steps == sum(bfs_plan_length(t) for t in tasks)


class ConstantQ(QFunction):
    def q_values(self, task, state, actions):
        return [-1.0] * len(actions)


def test_validate_zero_solved_is_infinite():
    tasks = [t for _, _, t in bundled_tasks("blocksworld", 2, seed=2)]
    score = validate(ConstantQ(), tasks, max_steps=5)
    assert score.coverage == 0.0 and math.isinf(score.steps) and math.isinf(score.rmse)
    assert score.to_json()["steps"] is None


def test_config_defaults_and_text_round_trip():
    cfg = TrainConfig()
    assert (cfg.w, cfg.workers, cfg.episode_seconds, cfg.batch_size, cfg.buffer_batches) == (2.0, 5, 60.0, 256, 40)
    assert (cfg.lr_gnn, cfg.lr_readout, cfg.target_refresh_passes, cfg.dim) == (1e-4, 1e-3, 10, 32)
    back = TrainConfig.from_text(cfg.to_text())
    assert back == cfg
    assert TrainConfig.from_text("# comment\nw = 3\nsingle-thread = true\nmax_episodes = 4\n").w == 3.0
    with pytest.raises(ValueError):
        TrainConfig.from_text("nonsense = 1")
    with pytest.raises(ValueError):
        TrainConfig(workers=0)
    with pytest.raises(ValueError):
        TrainConfig(single_thread=True)
    with pytest.raises(ValueError):
        TrainConfig(pool_order="sideways")


def test_metrics_log_is_monotone(tmp_path):
    log = MetricsLog(tmp_path / "m.jsonl")
    log.write({"wall_seconds": 2.0})
    log.write({"wall_seconds": 1.0})
    rows = [json.loads(x) for x in (tmp_path / "m.jsonl").read_text().splitlines()]
    assert [r["wall_seconds"] for r in rows] == [2.0, 2.0]


def _small_cfg(**kw):
    base = dict(single_thread=True, max_episodes=40, seed=3, dim=6, layers=2, batch_size=16, buffer_batches=4,
                validate_every_passes=2, metrics_every=5, episode_expansions=200, optimizer="sgd",
                lr_gnn=1e-3, lr_readout=1e-3)
    base.update(kw)
    return TrainConfig(**base)


def test_single_thread_runs_are_byte_identical(tmp_path):
    dom = parse_domain(domain_text("gripper"))
    tasks = [t for _, _, t in bundled_tasks("gripper", 4, seed=5)]
    r1 = train(_small_cfg(), dom, tasks, tasks[:2], tmp_path / "a")
    r2 = train(_small_cfg(), dom, tasks, tasks[:2], tmp_path / "b")
    assert r1.metrics_path.read_bytes() == r2.metrics_path.read_bytes()
    assert r1.best_checkpoint is not None
    assert (r1.best_checkpoint / "network.npz").read_bytes() == (r2.best_checkpoint / "network.npz").read_bytes()
    rows = [json.loads(x) for x in r1.metrics_path.read_text().splitlines()]
    needed = {"wall_seconds", "episodes", "solve_rate", "expansions_p25", "expansions_p50", "expansions_p75",
              "learner_loss", "buffer_fill", "checkpoint_id"}
    assert rows and all(needed <= r.keys() for r in rows)
    assert all(a["wall_seconds"] <= b["wall_seconds"] for a, b in zip(rows, rows[1:]))


def test_checkpoint_selection_is_monotone(tmp_path):
    dom = parse_domain(domain_text("gripper"))
    tasks = [t for _, _, t in bundled_tasks("gripper", 4, seed=6)]
    res = train(_small_cfg(max_episodes=80, validate_every_passes=1), dom, tasks, tasks, tmp_path)
    scores = []
    for n in range(1, 100):
        p = tmp_path / f"ckpt_{n}" / "score.json"
        if not p.exists():
            break
        s = json.loads(p.read_text())["score"]
        scores.append(ValidationScore(s["coverage"], s["steps"] if s["steps"] is not None else math.inf,
                                      s["rmse"] if s["rmse"] is not None else math.inf))
    assert scores and all(b.better_than(a) for a, b in zip(scores, scores[1:]))
    best = json.loads((tmp_path / "best.json").read_text())
    assert best["checkpoint"] == f"ckpt_{len(scores)}" == res.best_checkpoint.name
    net, goal_mode = load_checkpoint(res.best_checkpoint)
    assert goal_mode == "distinguished" and net.config.dim == 6


def test_goal_at_start_everywhere(tmp_path):
    tasks = [walk_task([("a", "b")], "a", "a", name=f"triv{i}") for i in range(3)]
    res = train(_small_cfg(max_episodes=9), parse_domain(WALK), tasks, [], tmp_path)
    assert sorted(res.pools.members(SOLVED)) == [0, 1, 2] and res.learner_steps == 0 and res.best_checkpoint is None


def test_threaded_mode_runs(tmp_path):
    dom = parse_domain(domain_text("gripper"))
    tasks = [t for _, _, t in bundled_tasks("gripper", 3, seed=7)]
    cfg = TrainConfig(workers=2, total_seconds=3.0, seed=1, dim=4, layers=1, batch_size=8, buffer_batches=4,
                      episode_seconds=0.5, validate_every_passes=5, publish_every_steps=5)
    res = train(cfg, dom, tasks, tasks[:1], tmp_path)
    assert res.episodes > 0 and res.pools.check_partition()
    assert res.metrics_path.read_text()
