"""Best-first search over state-action pairs.

``run_episode`` is the training episode: weighted A* on ``f(s,a) = g(s) + w Q(s,a)``
(maximized; returns are negative) that emits replay tuples. The solvers below
share its node discipline: a pair is scored once when pushed, states enter a
first-discovery set and are never re-expanded, and equal priorities pop
newest first.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

from .grounding import GroundTask, State, applicable_actions, apply, is_goal, validate_plan
from .qfunc import QFunction

GOAL = "goal"
BUDGET = "budget-exhausted"
FRONTIER_EMPTY = "frontier-empty"
DEAD_END = "dead-end"
CYCLE = "cycle"

GOAL_PATH = "goal-path"
DEAD_END_KIND = "dead-end"
BOOTSTRAP = "bootstrap"

DEFAULT_R_BOT = -2000.0


@dataclass(slots=True)
class ReplayTuple:
    task: GroundTask
    state: State
    action: int
    bound: float
    kind: str
    successor: State | None = None


@dataclass
class EpisodeResult:
    outcome: str
    expansions: int
    plan: list[int] | None = None
    wall_time: float = 0.0
    budget_hit: str = "none"  # "none", "expansions" or "time"

    @property
    def solved(self) -> bool:
        return self.outcome == GOAL

    @property
    def plan_length(self) -> int | None:
        return None if self.plan is None else len(self.plan)

    @classmethod
    def build(cls, task, outcome, expansions, plan, t0, budget_hit="none") -> "EpisodeResult":
        if outcome == GOAL and not validate_plan(task, plan):
            raise AssertionError(f"search returned an invalid plan for {task.name}")
        return cls(outcome, expansions, plan, time.perf_counter() - t0, budget_hit)


@dataclass
class Budget:
    """Expansion and/or wall-time cap; whichever triggers first ends the search."""

    expansions: int | None = None
    seconds: float | None = None
    _t0: float = field(default=0.0, repr=False)

    def start(self):
        self._t0 = time.perf_counter()
        return self

    def exhausted(self, expansions: int) -> str | None:
        if self.expansions is not None and expansions >= self.expansions:
            return "expansions"
        if self.seconds is not None and time.perf_counter() - self._t0 >= self.seconds:
            return "time"
        return None

    def remaining(self, expansions: int) -> float:
        return math.inf if self.expansions is None else self.expansions - expansions


def _budget(budget, max_expansions, max_seconds) -> Budget:
    if budget is None:
        budget = Budget(max_expansions, max_seconds)
    if budget.expansions is not None and budget.expansions <= 0:
        raise ValueError("expansion budget must be positive")
    return budget.start()


class _Tree:
    """State arena, first-discovery set, depths and parent pointers."""

    def __init__(self, task, root):
        self.task = task
        self.states = [root]
        self.index = {root: 0}
        self.g = [0]
        self.parent: dict[tuple[int, int], tuple[int, int] | None] = {}

    def add(self, s: State, g: int) -> int:
        sid = len(self.states)
        self.states.append(s)
        self.index[s] = sid
        self.g.append(g)
        return sid

    def path(self, pair) -> list[tuple[int, int]]:
        out = []
        while pair is not None:
            out.append(pair)
            pair = self.parent[pair]
        out.reverse()
        return out


class _Frontier:
    """Max-priority queue with newest-first tie-breaking."""

    def __init__(self):
        self.heap = []
        self.counter = itertools.count()

    def push(self, priority, item):
        heapq.heappush(self.heap, (-priority, -next(self.counter), item))

    def pop(self):
        negp, _, item = heapq.heappop(self.heap)
        return -negp, item

    def __len__(self):
        return len(self.heap)


def run_episode(
    task: GroundTask,
    q: QFunction,
    w: float = 2.0,
    max_expansions: int | None = None,
    max_seconds: float | None = None,
    r_bot: float = DEFAULT_R_BOT,
    budget: Budget | None = None,
    trace: list | None = None,
    pushes: list | None = None,
):
    """One training episode. Returns ``(replay tuples, EpisodeResult)``.

    ``trace`` collects one line per expansion: iteration, state hash, action,
    g, Q and priority. ``pushes`` collects ``(state, action, g, q, priority)``
    for every frontier insertion.
    """
    budget = _budget(budget, max_expansions, max_seconds)
    t0 = budget._t0
    s0 = task.init
    if is_goal(task, s0):
        return [], EpisodeResult.build(task, GOAL, 0, [], t0)

    tree = _Tree(task, s0)
    frontier = _Frontier()
    visited = {s0}
    replay: list[ReplayTuple | None] = []
    bootstrap_at: dict[tuple[int, int], int] = {}

    def push_all(sid: int, actions):
        qs = q.q_values(task, tree.states[sid], actions)
        g = tree.g[sid]
        for a, qv in zip(actions, qs):
            pri = g + w * qv
            frontier.push(pri, (sid, a, qv))
            if pushes is not None:
                pushes.append((tree.states[sid], a, g, qv, pri))

    for a in applicable_actions(task, s0):
        tree.parent[(0, a)] = None
    push_all(0, applicable_actions(task, s0))

    expansions = 0
    outcome, hit = BUDGET, "none"
    while True:
        hit = budget.exhausted(expansions)
        if hit:
            break
        if not frontier:
            outcome, hit = FRONTIER_EMPTY, "none"
            break
        pri, (sid, a, qv) = frontier.pop()
        expansions += 1
        s = tree.states[sid]
        s_next = apply(task, s, a)
        if trace is not None:
            trace.append(f"{expansions} {hash(s):016x} {task.action_str(a)} {tree.g[sid]} {qv:.6g} {pri:.6g}")
        if is_goal(task, s_next):
            path = tree.path((sid, a))
            ret = 0
            succ = s_next
            for psid, pa in reversed(path):
                ret -= 1
                pos = bootstrap_at.pop((psid, pa), None)
                if pos is not None:
                    replay[pos] = None
                replay.append(ReplayTuple(task, tree.states[psid], pa, float(ret), GOAL_PATH, succ))
                succ = tree.states[psid]
            plan = [pa for _, pa in path]
            tuples = [r for r in replay if r is not None]
            return tuples, EpisodeResult.build(task, GOAL, expansions, plan, t0)
        next_actions = applicable_actions(task, s_next)
        if not next_actions:
            replay.append(ReplayTuple(task, s, a, r_bot, DEAD_END_KIND, None))
            continue
        bootstrap_at[(sid, a)] = len(replay)
        replay.append(ReplayTuple(task, s, a, -math.inf, BOOTSTRAP, s_next))
        if s_next not in visited:
            visited.add(s_next)
            nsid = tree.add(s_next, tree.g[sid] - 1)
            for na in next_actions:
                tree.parent[(nsid, na)] = (sid, a)
            push_all(nsid, next_actions)
    tuples = [r for r in replay if r is not None]
    return tuples, EpisodeResult.build(task, outcome, expansions, None, t0, hit)


def best_first_solve(
    task: GroundTask,
    q: QFunction,
    w: float | None = 2.0,
    batch: int = 1,
    max_expansions: int | None = None,
    max_seconds: float | None = None,
    budget: Budget | None = None,
    reopen: bool = False,
    trace: list | None = None,
) -> EpisodeResult:
    """Best-first search without replay emission.

    ``w=None`` selects greedy best-first ordering by Q alone. Each iteration
    pops up to ``batch`` pairs, generates all their successors, scores the new
    states in one evaluator call, and only then reports a goal. With
    ``reopen`` a state reached again on a strictly shorter path is re-pushed.
    """
    if batch < 1:
        raise ValueError("batch size must be >= 1")
    budget = _budget(budget, max_expansions, max_seconds)
    t0 = budget._t0
    s0 = task.init
    if is_goal(task, s0):
        return EpisodeResult.build(task, GOAL, 0, [], t0)

    tree = _Tree(task, s0)
    frontier = _Frontier()

    def priority(g, qv):
        return qv if w is None else g + w * qv

    def push_states(sids_actions):
        items = [(tree.states[sid], acts) for sid, acts in sids_actions]
        qss = q.q_values_many(task, items)
        for (sid, acts), qs in zip(sids_actions, qss):
            g = tree.g[sid]
            for a, qv in zip(acts, qs):
                frontier.push(priority(g, qv), (sid, a, g, qv))

    root_actions = applicable_actions(task, s0)
    for a in root_actions:
        tree.parent[(0, a)] = None
    push_states([(0, root_actions)])

    expansions = 0
    while True:
        hit = budget.exhausted(expansions)
        if hit:
            return EpisodeResult.build(task, BUDGET, expansions, None, t0, hit)
        if not frontier:
            return EpisodeResult.build(task, FRONTIER_EMPTY, expansions, None, t0)
        take = int(min(batch, len(frontier), budget.remaining(expansions)))
        goal_pair = None
        new_states = []
        for _ in range(take):
            if not frontier:
                break
            pri, (sid, a, g_at_push, qv) = frontier.pop()
            if reopen and g_at_push != tree.g[sid]:
                continue  # stale entry superseded by a shorter path
            expansions += 1
            s = tree.states[sid]
            s_next = apply(task, s, a)
            if trace is not None:
                trace.append(f"{expansions} {hash(s):016x} {task.action_str(a)} {tree.g[sid]} {qv:.6g} {pri:.6g}")
            if is_goal(task, s_next):
                if goal_pair is None:
                    goal_pair = (sid, a)
                continue
            g_next = tree.g[sid] - 1
            known = tree.index.get(s_next)
            if known is not None:
                if not (reopen and g_next > tree.g[known]):
                    continue
                nsid = known
                tree.g[nsid] = g_next
            else:
                nsid = tree.add(s_next, g_next)
            acts = applicable_actions(task, s_next)
            if not acts:
                continue
            for na in acts:
                tree.parent[(nsid, na)] = (sid, a)
            new_states.append((nsid, acts))
        if new_states:
            push_states(new_states)
        if goal_pair is not None:
            plan = [pa for _, pa in tree.path(goal_pair)]
            return EpisodeResult.build(task, GOAL, expansions, plan, t0)


def wastar_solve(task, q, w=2.0, batch=1, max_expansions=None, max_seconds=None, budget=None, reopen=False, trace=None):
    return best_first_solve(task, q, w, batch, max_expansions, max_seconds, budget, reopen, trace)


def gbfs_solve(task, q, batch=1, max_expansions=None, max_seconds=None, budget=None, trace=None):
    return best_first_solve(task, q, None, batch, max_expansions, max_seconds, budget, False, trace)


def greedy_rollout(task: GroundTask, q: QFunction, max_steps: int = 1000, max_seconds: float | None = None) -> EpisodeResult:
    """Follow ``argmax_a Q(s,a)`` (lowest action id on ties) from the initial state.

    Stops at a goal, at a state without actions (``dead-end``), on revisiting a
    state (``cycle``), or after ``max_steps``.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    t0 = time.perf_counter()
    s = task.init
    if is_goal(task, s):
        return EpisodeResult.build(task, GOAL, 0, [], t0)
    seen = {s}
    plan: list[int] = []
    while len(plan) < max_steps:
        if max_seconds is not None and time.perf_counter() - t0 >= max_seconds:
            return EpisodeResult.build(task, BUDGET, len(plan), None, t0, "time")
        acts = applicable_actions(task, s)
        if not acts:
            return EpisodeResult.build(task, DEAD_END, len(plan), None, t0)
        qs = q.q_values(task, s, acts)
        best = max(range(len(acts)), key=lambda i: (qs[i], -acts[i]))
        plan.append(acts[best])
        s = apply(task, s, acts[best])
        if is_goal(task, s):
            return EpisodeResult.build(task, GOAL, len(plan), plan, t0)
        if s in seen:
            return EpisodeResult.build(task, CYCLE, len(plan), None, t0)
        seen.add(s)
    return EpisodeResult.build(task, BUDGET, len(plan), None, t0, "expansions")
