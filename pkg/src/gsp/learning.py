"""Replay storage and Q-learning with search-derived return bounds."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import MissingSuccessor, Underfull
from .grounding import applicable_actions, is_goal
from .search import BOOTSTRAP, DEAD_END_KIND, DEFAULT_R_BOT, GOAL_PATH, ReplayTuple


@dataclass(frozen=True)
class TargetSpec:
    r_bot: float = DEFAULT_R_BOT
    step_reward: float = -1.0
    discount: float = 1.0

    def __post_init__(self):
        if self.step_reward != -1.0 or self.discount != 1.0:
            raise ValueError("targets assume unit step reward -1 and no discounting")

    @property
    def clamp(self) -> float:
        return 10.0 * abs(self.r_bot)


class ReplayBuffer:
    """FIFO ring of replay tuples."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: deque[ReplayTuple] = deque(maxlen=capacity)
        self.inserted = 0

    def push(self, tuples) -> "ReplayBuffer":
        for t in tuples:
            self._items.append(t)
            self.inserted += 1
        return self

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[ReplayTuple]:
        """Uniform draw without replacement within one batch."""
        if len(self._items) < batch_size:
            raise Underfull(f"buffer holds {len(self._items)} < {batch_size} tuples")
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]


def successor_value(task, succ, target, spec: TargetSpec) -> float:
    """``-1 + max_a' Q_target(s', a')`` with the terminal conventions applied."""
    return _successor_values([(task, succ)], target, spec)[0]


def _successor_values(pairs, target, spec: TargetSpec, cache: dict | None = None) -> list[float]:
    out: list[float | None] = [None] * len(pairs)
    pending: dict = {}
    for i, (task, succ) in enumerate(pairs):
        key = (task, succ)
        if cache is not None and key in cache:
            out[i] = cache[key]
            continue
        if is_goal(task, succ):
            out[i] = spec.step_reward
        else:
            pending.setdefault(key, []).append(i)
    by_task: dict = {}
    for (task, succ) in pending:
        acts = applicable_actions(task, succ)
        by_task.setdefault(task, []).append((succ, acts))
    for task, items in by_task.items():
        live = [(s, a) for s, a in items if a]
        values = target.q_values_many(task, live) if live else []
        vals = iter(values)
        for succ, acts in items:
            v = spec.step_reward + (max(next(vals)) if acts else spec.r_bot)
            for i in pending[(task, succ)]:
                out[i] = v
            if cache is not None:
                cache[(task, succ)] = v
    return out


def compute_targets(batch, target, spec: TargetSpec, cache: dict | None = None) -> list[float]:
    """Regression targets per tuple kind, clamped to ``|y| <= 10 |R_bot|``.

    dead-end: ``R_bot``; bootstrap: ``y_hat``; goal-path: ``max(bound, y_hat)``
    where ``y_hat = -1 + max_a' Q_target(s', a')`` (just ``-1`` when ``s'`` is
    a goal, ``-1 + R_bot`` when ``s'`` has no actions).
    """
    need = []
    for t in batch:
        if t.kind == DEAD_END_KIND:
            continue
        if t.successor is None:
            raise MissingSuccessor(f"{t.kind} tuple without successor state")
        need.append((t.task, t.successor))
    values = iter(_successor_values(need, target, spec, cache))
    out = []
    for t in batch:
        if t.kind == DEAD_END_KIND:
            y = spec.r_bot
        elif t.kind == GOAL_PATH:
            y = max(t.bound, next(values))
        elif t.kind == BOOTSTRAP:
            y = next(values)
        else:
            raise ValueError(f"unknown tuple kind {t.kind!r}")
        out.append(float(np.clip(y, -spec.clamp, spec.clamp)))
    return out


class Learner:
    """Owns the online model, the frozen target, the buffer and the optimizer.

    One pass through the buffer is ``ceil(capacity / batch_size)`` steps; the
    target is re-cloned from the online model every ``refresh_passes`` passes.
    """

    def __init__(self, model, buffer: ReplayBuffer, optimizer, spec: TargetSpec = TargetSpec(),
                 batch_size: int = 256, lr_gnn: float = 1e-4, lr_readout: float = 1e-3,
                 refresh_passes: int = 10, seed: int = 0):
        self.model = model
        self.target = model.clone_frozen()
        self.buffer = buffer
        self.optimizer = optimizer
        self.spec = spec
        self.batch_size = batch_size
        self.lr_gnn = lr_gnn
        self.lr_readout = lr_readout
        self.refresh_passes = refresh_passes
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.refreshes = 0
        self.last_loss = math.nan
        self._target_cache: dict = {}

    @property
    def steps_per_pass(self) -> int:
        return math.ceil(self.buffer.capacity / self.batch_size)

    @property
    def passes(self) -> float:
        return self.steps / self.steps_per_pass

    def ready(self) -> bool:
        return len(self.buffer) >= self.batch_size

    def refresh_target(self):
        self.target = self.model.clone_frozen()
        self._target_cache = {}
        self.refreshes += 1

    def step(self) -> float:
        batch = self.buffer.sample(self.batch_size, self.rng)
        ys = compute_targets(batch, self.target, self.spec, self._target_cache)
        samples = [(t.task, t.state, t.action, y) for t, y in zip(batch, ys)]
        loss, grads = self.model.loss_and_grad(samples)
        self.model.apply_update(grads, self.optimizer, self.lr_gnn, self.lr_readout)
        self.steps += 1
        self.last_loss = loss
        if self.steps % (self.steps_per_pass * self.refresh_passes) == 0:
            self.refresh_target()
        return loss


def learner_step(learner: Learner):
    """One sample -> targets -> gradient -> update cycle. Returns ``(model, loss)``."""
    loss = learner.step()
    return learner.model, loss
