"""Reference implementations that share no code with the package under test.

They work on the parsed lifted structures directly, with string atoms and
naive substitution enumeration, so agreement with the grounder is evidence
rather than tautology.
"""
from __future__ import annotations

import itertools
from collections import deque


def _objects_by_type(dom, inst):
    parents = dict(dom.types)

    def is_a(t, target):
        while t is not None:
            if t == target:
                return True
            t = parents.get(t)
        return target == "object"

    pool = list(inst.objects) + list(dom.constants)
    return lambda typ: [o for o, t in pool if is_a(t, typ)]


def lifted_actions(dom, inst):
    """Every distinct-argument typed instantiation as (label, pre, add, delete) string-atom sets."""
    of_type = _objects_by_type(dom, inst)
    out = []
    for schema in dom.schemas:
        names = [v for v, _ in schema.params]
        domains = [of_type(t) for _, t in schema.params]
        for combo in itertools.product(*domains):
            if len(set(combo)) < len(combo):
                continue
            sub = dict(zip(names, combo))

            def inst_atoms(atoms):
                return frozenset((a.predicate, tuple(sub.get(x, x) for x in a.args)) for a in atoms)

            out.append((f"{schema.name}({','.join(combo)})", inst_atoms(schema.precondition),
                        inst_atoms(schema.add_effects), inst_atoms(schema.del_effects)))
    return out


def string_state(inst_atoms):
    return frozenset((a.predicate, tuple(a.args)) for a in inst_atoms)


def naive_successors(actions, s):
    for label, pre, add, delete in actions:
        if pre <= s:
            yield label, (s - delete) | add


def naive_reachable(dom, inst, limit=20000):
    """Depth-first closure of the initial state (recursive on an explicit stack)."""
    actions = lifted_actions(dom, inst)
    start = string_state(inst.init)
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for _, t in naive_successors(actions, s):
            if t not in seen:
                seen.add(t)
                if len(seen) > limit:
                    raise RuntimeError("oracle state limit")
                stack.append(t)
    return seen


def naive_distances(dom, inst, limit=20000):
    """Shortest goal distance of every reachable state (None if the goal is unreachable)."""
    actions = lifted_actions(dom, inst)
    goal = string_state(inst.goal)
    states = naive_reachable(dom, inst, limit)
    preds = {s: [] for s in states}
    for s in states:
        for _, t in naive_successors(actions, s):
            preds[t].append(s)
    dist = {s: 0 for s in states if goal <= s}
    queue = deque(dist)
    while queue:
        t = queue.popleft()
        for s in preds[t]:
            if s not in dist:
                dist[s] = dist[t] + 1
                queue.append(s)
    return {s: dist.get(s) for s in states}


def naive_plan_length(dom, inst, limit=20000):
    return naive_distances(dom, inst, limit)[string_state(inst.init)]


def state_strings(task, s):
    """A package State as the oracle's string-atom set."""
    out = set()
    for aid in s.atoms:
        a = task.atoms[aid]
        out.add((task.predicates[a.predicate], tuple(task.objects[o] for o in a.args)))
    return frozenset(out)
