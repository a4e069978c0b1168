"""Action-value evaluators sharing one interface, so search and learning
treat the network, lookup tables, oracles and classical heuristics alike.

An evaluator provides ``q_values(task, state, actions)`` returning one float
per action, and ``q_values_many(task, items)`` for a list of
``(state, actions)`` pairs.
"""
from __future__ import annotations

import math
from collections import OrderedDict, deque

import numpy as np

from .errors import EmptyInput, NonFiniteTarget
from .graph import DISTINGUISHED, encode
from .grounding import GroundTask, State, applicable_actions, apply, is_goal, reachable_states
from .net import QNetwork


class QFunction:
    def q_values(self, task: GroundTask, state: State, actions) -> list[float]:
        raise NotImplementedError

    def q_values_many(self, task: GroundTask, items) -> list[list[float]]:
        return [self.q_values(task, s, acts) for s, acts in items]


class ZeroQ(QFunction):
    """Uninformed evaluator; with it WA* orders pairs by depth alone."""

    def q_values(self, task, state, actions):
        return [0.0] * len(actions)


class ConstQ(QFunction):
    def __init__(self, value: float):
        self.value = float(value)

    def q_values(self, task, state, actions):
        return [self.value] * len(actions)


class TableQ(QFunction):
    """Fixed lookup ``(state, action) -> value`` with a default for missing keys."""

    def __init__(self, table: dict, default: float = 0.0):
        self.table = table
        self.default = default

    def q_values(self, task, state, actions):
        return [self.table.get((state, a), self.default) for a in actions]


def optimal_returns(task: GroundTask, r_bot: float = -2000.0, limit: int = 10**5) -> dict[State, float]:
    """Optimal return of every reachable state by backward breadth-first search.

    Goal states are worth 0 and states that cannot reach a goal get ``r_bot``.
    """
    states = reachable_states(task, limit=limit)
    preds: dict[State, list[State]] = {s: [] for s in states}
    for s in states:
        for a in applicable_actions(task, s):
            preds[apply(task, s, a)].append(s)
    dist = {s: 0 for s in states if is_goal(task, s)}
    queue = deque(dist)
    while queue:
        t = queue.popleft()
        for s in preds[t]:
            if s not in dist:
                dist[s] = dist[t] + 1
                queue.append(s)
    return {s: (-float(dist[s]) if s in dist else r_bot) for s in states}


class OracleQ(QFunction):
    """True return-to-go ``-1 + V*(a(s))``; goal successors are worth -1."""

    def __init__(self, task: GroundTask, r_bot: float = -2000.0):
        self.values = optimal_returns(task, r_bot=r_bot)
        self.r_bot = r_bot

    def q_values(self, task, state, actions):
        out = []
        for a in actions:
            t = apply(task, state, a)
            v = self.values.get(t, self.r_bot)
            out.append(-1.0 + (0.0 if is_goal(task, t) else v))
        return out


class HeuristicQ(QFunction):
    """Wraps a cost-to-go heuristic ``h(task, state)`` as ``Q(s,a) = -1 - h(a(s))``."""

    def __init__(self, h):
        self.h = h

    def q_values(self, task, state, actions):
        out = []
        for a in actions:
            hv = self.h(task, apply(task, state, a))
            out.append(-math.inf if math.isinf(hv) else -1.0 - hv)
        return out


class TabularQ(QFunction):
    """Trainable exact lookup table, used to test the Bellman machinery in isolation.

    Exposes the same training surface as :class:`NetQ`.
    """

    def __init__(self, init: float = 0.0):
        self.table: dict[tuple, float] = {}
        self.init = init
        self.version = 0

    def _key(self, task, state, action):
        return (task, state, action)

    def q_values(self, task, state, actions):
        return [self.table.get(self._key(task, state, a), self.init) for a in actions]

    def loss_and_grad(self, samples):
        """``samples``: list of (task, state, action, target)."""
        if not samples:
            raise EmptyInput("empty training batch")
        n = len(samples)
        grads: dict[tuple, float] = {}
        loss = 0.0
        for task, state, action, y in samples:
            if not math.isfinite(y):
                raise NonFiniteTarget(f"target {y!r}")
            k = self._key(task, state, action)
            err = self.table.get(k, self.init) - y
            loss += err * err / n
            grads[k] = grads.get(k, 0.0) + 2.0 * err / n
        return loss, grads

    def apply_update(self, grads, optimizer=None, lr_gnn: float = 0.0, lr_readout: float = 0.5):
        for k, g in grads.items():
            self.table[k] = self.table.get(k, self.init) - lr_readout * g
        self.version += 1
        return self

    def clone_frozen(self) -> "TabularQ":
        c = TabularQ(self.init)
        c.table = dict(self.table)
        c.version = self.version
        return c


class NetQ(QFunction):
    """Evaluates a :class:`QNetwork`, caching encoded graphs per (task, state)."""

    def __init__(self, net: QNetwork, goal_mode: str = DISTINGUISHED, cache_size: int = 200_000, graph_cache=None):
        self.net = net
        self.goal_mode = goal_mode
        self.cache_size = cache_size
        self._graphs = graph_cache if graph_cache is not None else OrderedDict()

    @property
    def version(self):
        return self.net.version

    def graph(self, task, state, actions=None):
        key = (task, state)
        g = self._graphs.get(key)
        if g is None:
            if actions is None:
                actions = applicable_actions(task, state)
            g = encode(task, state, actions, self.goal_mode)
            self._graphs[key] = g
            if len(self._graphs) > self.cache_size:
                self._graphs.popitem(last=False)
        return g

    def q_values(self, task, state, actions):
        return self.q_values_many(task, [(state, actions)])[0]

    def q_values_many(self, task, items):
        graphs = [self.graph(task, s, acts) for s, acts in items]
        results = self.net.forward_batch(graphs)
        return [[r[a] for a in acts] for r, (_, acts) in zip(results, items)]

    def state_values_many(self, pairs) -> np.ndarray:
        """``max_a Q(s, a)`` for (task, state) pairs whose states have actions."""
        graphs = [self.graph(t, s) for t, s in pairs]
        return np.array([max(r.values()) for r in self.net.forward_batch(graphs)])

    def loss_and_grad(self, samples):
        """``samples``: list of (task, state, action, target)."""
        batch = [(self.graph(t, s), a, y) for t, s, a, y in samples]
        return self.net.loss_and_grad(batch)

    def apply_update(self, grads, optimizer, lr_gnn: float = 1e-4, lr_readout: float = 1e-3):
        self.net.apply_update(grads, optimizer, lr_gnn, lr_readout)
        return self

    def clone_frozen(self) -> "NetQ":
        # graph cache is shared: encodings do not depend on parameters
        return NetQ(self.net.clone_frozen(), self.goal_mode, self.cache_size, self._graphs)
