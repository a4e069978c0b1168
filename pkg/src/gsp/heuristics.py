"""Classical delete-relaxation baseline heuristics."""
from __future__ import annotations

import heapq
import math

from .grounding import GroundTask, State


def h_max(task: GroundTask, s: State) -> float:
    """Delete-relaxation h_max; ``inf`` if some goal atom is relaxed-unreachable.

    Atoms true in ``s`` cost 0, an action costs one plus the most expensive
    precondition, and an atom costs its cheapest achiever. The fixpoint is
    computed Dijkstra-style since costs are settled in nondecreasing order.
    """
    goal = task.goal
    if s.issuperset(goal):
        return 0.0
    n_atoms = len(task.atoms)
    cost = [math.inf] * n_atoms
    heap = []
    for p in s.atoms:
        cost[p] = 0.0
        heap.append((0.0, p))
    heapq.heapify(heap)
    remaining = [len(a.pre) for a in task.actions]
    act_cost = [0.0] * len(task.actions)

    def fire(aid, c):
        for p in task.actions[aid].add:
            if c < cost[p]:
                cost[p] = c
                heapq.heappush(heap, (c, p))

    for a in task.actions:
        if not a.pre:
            fire(a.id, 1.0)
    goal_left = set(goal)
    done = [False] * n_atoms
    while heap and goal_left:
        c, p = heapq.heappop(heap)
        if done[p]:
            continue
        done[p] = True
        goal_left.discard(p)
        for aid in task.consumers[p]:
            if c > act_cost[aid]:
                act_cost[aid] = c
            remaining[aid] -= 1
            if remaining[aid] == 0:
                fire(aid, act_cost[aid] + 1.0)
    return max(cost[g] for g in goal)
