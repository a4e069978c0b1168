"""Relational input graphs: state and goal atoms plus one node per applicable action."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grounding import GroundTask, State
from .pddl import Domain

DISTINGUISHED = "distinguished"
LITERAL = "literal"
GOAL_SUFFIX = ":goal"


def relation_signature(dom: Domain, goal_mode: str = DISTINGUISHED) -> list[tuple[str, int]]:
    """Ordered (relation name, arity) vocabulary a network needs for ``dom``.

    Action relations carry the action object at position 0, so their arity is
    one more than the schema's.
    """
    if goal_mode not in (DISTINGUISHED, LITERAL):
        raise ValueError(f"unknown goal mode {goal_mode!r}")
    sig = [(p.name, p.arity) for p in dom.predicates]
    if goal_mode == DISTINGUISHED:
        sig += [(p.name + GOAL_SUFFIX, p.arity) for p in dom.predicates]
    sig += [(s.name, s.arity + 1) for s in dom.schemas]
    return sig


@dataclass
class RelationalGraph:
    num_objects: int
    action_ids: tuple[int, ...]
    atoms: tuple[tuple[str, tuple[int, ...]], ...]
    node_names: tuple[str, ...] = ()
    _arrays: dict = field(default=None, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return self.num_objects + len(self.action_ids)

    def node_kind(self, node: int) -> str:
        return "object" if node < self.num_objects else "action"

    def action_node(self, action_id: int) -> int:
        return self.num_objects + self.action_ids.index(action_id)

    @property
    def relation_arrays(self) -> dict[str, np.ndarray]:
        """Atoms grouped by relation as (n_atoms, arity) node-index arrays."""
        if self._arrays is None:
            grouped: dict[str, list] = {}
            for rel, args in self.atoms:
                grouped.setdefault(rel, []).append(args)
            self._arrays = {
                rel: np.asarray(rows, dtype=np.int64).reshape(len(rows), len(rows[0]))
                for rel, rows in grouped.items()
            }
        return self._arrays

    def dump(self) -> str:
        """One atom per line, ``relation(node,...)``, using node names when known."""
        names = self.node_names or tuple(str(i) for i in range(self.num_nodes))
        return "".join(f"{rel}({','.join(names[i] for i in args)})\n" for rel, args in self.atoms)


def encode(task: GroundTask, s: State, applicable, goal_mode: str = DISTINGUISHED) -> RelationalGraph:
    """Build the relational input for ``(s, goal, applicable)``."""
    preds = task.predicates
    atoms_out = []
    for aid in s.atoms:
        a = task.atoms[aid]
        atoms_out.append((preds[a.predicate], a.args))
    if goal_mode == DISTINGUISHED:
        for aid in task.goal:
            a = task.atoms[aid]
            atoms_out.append((preds[a.predicate] + GOAL_SUFFIX, a.args))
    elif goal_mode == LITERAL:
        for aid in task.goal:
            if aid not in s:
                a = task.atoms[aid]
                atoms_out.append((preds[a.predicate], a.args))
    else:
        raise ValueError(f"unknown goal mode {goal_mode!r}")
    n = len(task.objects)
    for i, act_id in enumerate(applicable):
        act = task.actions[act_id]
        atoms_out.append((task.schemas[act.schema], (n + i,) + act.args))
    names = tuple(task.objects) + tuple(task.action_str(a) for a in applicable)
    return RelationalGraph(n, tuple(applicable), tuple(atoms_out), names)


def canonical_form(graph: RelationalGraph) -> frozenset:
    """Name-based atom set, equal for graphs that differ only in node numbering."""
    names = graph.node_names
    return frozenset((rel, tuple(names[i] for i in args)) for rel, args in graph.atoms)
