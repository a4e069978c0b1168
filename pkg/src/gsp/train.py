"""Training loop: instance pools, search workers, learner, validation and checkpoints."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import queue
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllEmpty
from .graph import DISTINGUISHED, relation_signature
from .learning import Learner, ReplayBuffer, TargetSpec
from .net import NetConfig, QNetwork, make_optimizer
from .qfunc import NetQ
from .search import DEFAULT_R_BOT, GOAL, Budget, EpisodeResult, greedy_rollout, run_episode

log = logging.getLogger(__name__)

UNSOLVED = "unsolved"
SOLVED = "solved"
SATISFICED = "satisficed"


@dataclass
class TrainConfig:
    w: float = 2.0
    workers: int = 5
    episode_seconds: float | None = 60.0
    episode_expansions: int | None = None
    batch_size: int = 256
    buffer_batches: int = 40
    lr_gnn: float = 1e-4
    lr_readout: float = 1e-3
    target_refresh_passes: int = 10
    pool_beta: float = 4.0
    pool_order: str = "rationale"  # or "literal"
    r_bot: float = DEFAULT_R_BOT
    total_seconds: float = 3600.0
    max_episodes: int | None = None
    seed: int = 0
    single_thread: bool = False
    dim: int = 32
    layers: int = 30
    alpha: float = 12.0
    goal_mode: str = DISTINGUISHED
    optimizer: str = "adam"
    replay_ratio: float = 8.0
    validate_every_passes: float = 20.0
    validation_max_steps: int = 1000
    metrics_every: int = 10
    publish_every_steps: int = 50

    def __post_init__(self):
        positive = ["workers", "batch_size", "buffer_batches", "lr_gnn", "lr_readout",
                    "target_refresh_passes", "pool_beta", "total_seconds", "dim", "layers", "alpha",
                    "validate_every_passes", "validation_max_steps", "metrics_every", "publish_every_steps"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.pool_order not in ("rationale", "literal"):
            raise ValueError(f"pool_order must be 'rationale' or 'literal', got {self.pool_order!r}")
        if self.single_thread and self.max_episodes is None:
            raise ValueError("single-thread runs are budgeted in episodes: set max_episodes")

    @property
    def net_config(self) -> NetConfig:
        return NetConfig(dim=self.dim, layers=self.layers, alpha=self.alpha)

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        """Parse ``key = value`` lines (``#`` comments allowed)."""
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key, raw = key.strip().replace("-", "_"), raw.strip()
            if not sep or key not in types:
                raise ValueError(f"config line {lineno}: unknown or malformed entry {line!r}")
            values[key] = coerce_field(raw, types[key])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{k} = {'none' if v is None else v}\n" for k, v in dataclasses.asdict(self).items())


def coerce_field(raw: str, typ: str):
    if raw.lower() in ("none", "null", ""):
        return None
    if "bool" in typ:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if "int" in typ and "float" not in typ:
        return int(raw)
    if "float" in typ:
        return float(raw)
    return raw


# ---------------------------------------------------------------- pools


def classify(result: EpisodeResult) -> str:
    """unsolved without a plan; solved if expansions equal plan length; else satisficed."""
    if result.outcome != GOAL or result.plan is None:
        return UNSOLVED
    if result.expansions == len(result.plan):
        return SOLVED
    return SATISFICED


class InstancePools:
    """Partition of training instance ids into unsolved / solved / satisficed."""

    def __init__(self, ids):
        self.pools: dict[str, dict[int, None]] = {UNSOLVED: dict.fromkeys(ids), SOLVED: {}, SATISFICED: {}}
        self.label = {i: UNSOLVED for i in ids}
        self.best_plan: dict[int, int] = {}
        self.last_expansions: dict[int, int] = {}
        self.ever_solved: set[int] = set()

    def __len__(self):
        return len(self.label)

    def members(self, pool: str) -> list[int]:
        return list(self.pools[pool])

    def update(self, inst: int, result: EpisodeResult) -> str:
        new = classify(result)
        old = self.label[inst]
        if new != old:
            del self.pools[old][inst]
            self.pools[new][inst] = None
            self.label[inst] = new
        self.last_expansions[inst] = result.expansions
        if result.plan is not None and result.outcome == GOAL:
            self.ever_solved.add(inst)
            prev = self.best_plan.get(inst)
            if prev is None or len(result.plan) < prev:
                self.best_plan[inst] = len(result.plan)
        return new

    def check_partition(self) -> bool:
        seen = [i for p in self.pools.values() for i in p]
        return sorted(seen) == sorted(self.label) and len(seen) == len(set(seen))


POOL_EXPONENTS = {
    # satisficed weighted highest, solved lowest
    "rationale": {SOLVED: 0, UNSOLVED: 1, SATISFICED: 2},
    # the order the pools are listed in: unsolved, solved, satisficed
    "literal": {UNSOLVED: 0, SOLVED: 1, SATISFICED: 2},
}


def sample_instance(pools: InstancePools, rng: random.Random, beta: float = 4.0, order: str = "rationale") -> int:
    """Pick a non-empty pool with weight ``beta**k``, then an instance uniformly in it."""
    exps = POOL_EXPONENTS[order]
    names = [p for p in (SOLVED, UNSOLVED, SATISFICED) if pools.pools[p]]
    if not names:
        raise AllEmpty("all instance pools are empty")
    weights = [beta ** exps[p] for p in names]
    pool = rng.choices(names, weights=weights)[0]
    members = pools.members(pool)
    return members[rng.randrange(len(members))]


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class ValidationScore:
    coverage: float
    steps: float  # total plan steps over solved instances; inf if none solved
    rmse: float  # over first actions of solved plans; inf if none solved

    @property
    def key(self):
        """Smaller is better: coverage descending, then steps, then RMSE."""
        return (-self.coverage, self.steps, self.rmse)

    def better_than(self, other: "ValidationScore | None") -> bool:
        return other is None or self.key < other.key

    def to_json(self):
        return {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in dataclasses.asdict(self).items()}


def validate(model, tasks, max_steps: int = 1000, goal_mode: str = DISTINGUISHED) -> ValidationScore:
    """Greedy-rollout score of ``model`` (QNetwork, evaluator, or checkpoint path)."""
    if isinstance(model, (str, os.PathLike)):
        model, goal_mode = load_checkpoint(model)
    q = NetQ(model, goal_mode) if isinstance(model, QNetwork) else model
    if not tasks:
        return ValidationScore(0.0, math.inf, math.inf)
    solved, steps, sq_err, n_err = 0, 0, 0.0, 0
    for task in tasks:
        res = greedy_rollout(task, q, max_steps=max_steps)
        if res.outcome != GOAL:
            continue
        solved += 1
        steps += len(res.plan)
        if res.plan:
            qv = q.q_values(task, task.init, [res.plan[0]])[0]
            sq_err += (qv + len(res.plan)) ** 2
            n_err += 1
    if solved == 0:
        return ValidationScore(0.0, math.inf, math.inf)
    rmse = math.sqrt(sq_err / n_err) if n_err else 0.0
    return ValidationScore(solved / len(tasks), float(steps), rmse)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(out_dir: Path, n: int, net: QNetwork, score: ValidationScore, goal_mode: str, extra=None) -> Path:
    path = Path(out_dir) / f"ckpt_{n}"
    path.mkdir(parents=True, exist_ok=True)
    net.save(path / "network.npz")
    manifest = {"checkpoint_id": n, "version": net.version, "goal_mode": goal_mode, "score": score.to_json()}
    if extra:
        manifest.update(extra)
    (path / "score.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> tuple[QNetwork, str]:
    """Load ``ckpt_<n>/`` (or its ``network.npz``); returns ``(net, goal_mode)``."""
    path = Path(path)
    if path.is_dir():
        manifest = path / "score.json"
        goal_mode = json.loads(manifest.read_text())["goal_mode"] if manifest.exists() else DISTINGUISHED
        return QNetwork.load(path / "network.npz"), goal_mode
    return QNetwork.load(path), DISTINGUISHED


# ---------------------------------------------------------------- metrics


class MetricsLog:
    """Append-only newline-delimited JSON records."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")
        self.last_time = -math.inf

    def write(self, record: dict):
        if record["wall_seconds"] < self.last_time:
            record["wall_seconds"] = self.last_time
        self.last_time = record["wall_seconds"]
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _percentiles(values):
    if not values:
        return None, None, None
    p = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(p[0]), float(p[1]), float(p[2])


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    out_dir: Path
    best_score: ValidationScore | None
    best_checkpoint: Path | None
    episodes: int
    learner_steps: int
    metrics_path: Path
    pools: InstancePools = field(repr=False, default=None)


class _Trainer:
    def __init__(self, cfg: TrainConfig, domain, train_tasks, val_tasks, out_dir):
        if not train_tasks:
            raise ValueError("need at least one training instance")
        self.cfg = cfg
        self.train_tasks = list(train_tasks)
        self.val_tasks = list(val_tasks)
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "config.cfg").write_text(cfg.to_text())
        sig = relation_signature(domain, cfg.goal_mode)
        net = QNetwork.init(sig, cfg.net_config, seed=cfg.seed)
        self.model = NetQ(net, cfg.goal_mode)
        self.spec = TargetSpec(r_bot=cfg.r_bot)
        self.buffer = ReplayBuffer(cfg.buffer_batches * cfg.batch_size)
        self.learner = Learner(self.model, self.buffer, make_optimizer(cfg.optimizer), self.spec,
                               cfg.batch_size, cfg.lr_gnn, cfg.lr_readout, cfg.target_refresh_passes, seed=cfg.seed)
        self.pools = InstancePools(range(len(self.train_tasks)))
        self.rng = random.Random(cfg.seed)
        self.metrics = MetricsLog(self.out_dir / "metrics.jsonl")
        self.episodes = 0
        self.best_score: ValidationScore | None = None
        self.best_path: Path | None = None
        self.best_id: int | None = None
        self.n_ckpt = 0
        self.next_validation = cfg.validate_every_passes
        self.t0 = time.perf_counter()

    # clock: real seconds, or a logical clock (episodes + learner steps) in single-thread mode
    def clock(self) -> float:
        if self.cfg.single_thread:
            return float(self.episodes + self.learner.steps)
        return round(time.perf_counter() - self.t0, 3)

    def episode_budget(self) -> Budget:
        cfg = self.cfg
        if cfg.single_thread:
            return Budget(cfg.episode_expansions or 10_000, None)
        return Budget(cfg.episode_expansions, cfg.episode_seconds)

    def record(self):
        exps = [self.pools.last_expansions[i] for i in sorted(self.pools.last_expansions)]
        p25, p50, p75 = _percentiles(exps)
        loss = self.learner.last_loss
        self.metrics.write({
            "wall_seconds": self.clock(),
            "episodes": self.episodes,
            "solve_rate": len(self.pools.ever_solved) / len(self.pools),
            "expansions_p25": p25,
            "expansions_p50": p50,
            "expansions_p75": p75,
            "learner_loss": None if math.isnan(loss) else loss,
            "learner_steps": self.learner.steps,
            "buffer_fill": len(self.buffer) / self.buffer.capacity,
            "checkpoint_id": self.best_id,
            "pools": {k: len(v) for k, v in self.pools.pools.items()},
        })

    def absorb(self, inst: int, tuples, result: EpisodeResult):
        self.pools.update(inst, result)
        self.buffer.push(tuples)
        self.episodes += 1
        if self.episodes % self.cfg.metrics_every == 0:
            self.record()

    def learn(self, n_tuples: int):
        if not self.learner.ready():
            return
        steps = max(1, math.ceil(self.cfg.replay_ratio * n_tuples / self.cfg.batch_size))
        for _ in range(steps):
            self.learner.step()
            if self.learner.passes >= self.next_validation:
                self.next_validation += self.cfg.validate_every_passes
                self.run_validation()

    def run_validation(self):
        if not self.val_tasks:
            return
        score = validate(self.model, self.val_tasks, self.cfg.validation_max_steps)
        log.info("validation at step %d: %s", self.learner.steps, score)
        if score.better_than(self.best_score):
            self.n_ckpt += 1
            self.best_score = score
            self.best_id = self.n_ckpt
            self.best_path = save_checkpoint(self.out_dir, self.n_ckpt, self.model.net, score, self.cfg.goal_mode,
                                             {"learner_steps": self.learner.steps, "episodes": self.episodes})
            (self.out_dir / "best.json").write_text(json.dumps({"checkpoint": self.best_path.name, "score": score.to_json()}, sort_keys=True) + "\n")
        self.record()

    def done(self) -> bool:
        cfg = self.cfg
        if cfg.max_episodes is not None and self.episodes >= cfg.max_episodes:
            return True
        return not cfg.single_thread and time.perf_counter() - self.t0 >= cfg.total_seconds

    def run_single(self):
        cfg = self.cfg
        while not self.done():
            inst = sample_instance(self.pools, self.rng, cfg.pool_beta, cfg.pool_order)
            tuples, result = run_episode(self.train_tasks[inst], self.model, cfg.w, budget=self.episode_budget(), r_bot=cfg.r_bot)
            self.absorb(inst, tuples, result)
            self.learn(len(tuples))

    def run_threaded(self):
        cfg = self.cfg
        results: queue.Queue = queue.Queue(maxsize=2 * cfg.workers)
        stop = threading.Event()
        lock = threading.Lock()
        snapshot = {"q": self.model.clone_frozen()}

        def worker(wid: int):
            rng = random.Random(cfg.seed * 1000 + wid + 1)
            cache: dict = {}
            while not stop.is_set():
                with lock:
                    inst = sample_instance(self.pools, rng, cfg.pool_beta, cfg.pool_order)
                    snap = snapshot["q"]
                q = NetQ(snap.net, cfg.goal_mode, graph_cache=cache)
                try:
                    tuples, result = run_episode(self.train_tasks[inst], q, cfg.w, budget=self.episode_budget(), r_bot=cfg.r_bot)
                except Exception:  # episode-fatal only
                    log.exception("episode on instance %d failed", inst)
                    continue
                while not stop.is_set():
                    try:
                        results.put((inst, tuples, result), timeout=0.1)
                        break
                    except queue.Full:
                        pass

        threads = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(cfg.workers)]
        for t in threads:
            t.start()
        last_publish = 0
        try:
            while not self.done():
                try:
                    inst, tuples, result = results.get(timeout=0.05)
                except queue.Empty:
                    if self.learner.ready():
                        self.learn(0)
                    continue
                with lock:
                    self.absorb(inst, tuples, result)
                self.learn(len(tuples))
                if self.learner.steps - last_publish >= cfg.publish_every_steps:
                    with lock:
                        snapshot["q"] = self.model.clone_frozen()
                    last_publish = self.learner.steps
        finally:
            stop.set()
            for t in threads:
                t.join(timeout=5)

    def run(self) -> TrainResult:
        if self.cfg.single_thread or self.cfg.workers == 1:
            self.run_single()
        else:
            self.run_threaded()
        self.run_validation()
        if not self.val_tasks:
            self.record()
        return TrainResult(self.out_dir, self.best_score, self.best_path, self.episodes, self.learner.steps,
                           self.metrics.path, self.pools)


def train(cfg: TrainConfig, domain, train_tasks, val_tasks, out_dir) -> TrainResult:
    """Run the search-and-learn loop and write checkpoints plus ``metrics.jsonl`` to ``out_dir``."""
    return _Trainer(cfg, domain, train_tasks, val_tasks, out_dir).run()
