"""Grounded STRIPS tasks and their transition system."""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

from .errors import CapacityExceeded, NotApplicable, SemanticError
from .pddl import Domain, Instance

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF

DEFAULT_ACTION_CEILING = 10**7


def fnv1a(ids) -> int:
    """64-bit FNV-1a style hash folding in one whole id per round."""
    h = _FNV_OFFSET
    for i in ids:
        h = ((h ^ i) * _FNV_PRIME) & _MASK
    return h


class State:
    """Closed-world set of true atom ids, stored sorted with a cached hash."""

    __slots__ = ("atoms", "_hash", "_set")

    def __init__(self, atoms):
        self.atoms = tuple(sorted(set(atoms)))
        self._hash = fnv1a(self.atoms)
        self._set = frozenset(self.atoms)

    @classmethod
    def _from_sorted(cls, atoms: tuple[int, ...], as_set: frozenset[int]) -> "State":
        s = cls.__new__(cls)
        s.atoms = atoms
        s._set = as_set
        s._hash = fnv1a(atoms)
        return s

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, State) and self._hash == other._hash and self.atoms == other.atoms

    def __contains__(self, atom_id):
        return atom_id in self._set

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self):
        return len(self.atoms)

    def issuperset(self, ids) -> bool:
        return self._set.issuperset(ids)

    @property
    def as_set(self) -> frozenset[int]:
        return self._set

    def __repr__(self):
        return f"State({list(self.atoms)})"


@dataclass(frozen=True)
class GroundAtom:
    id: int
    predicate: int
    args: tuple[int, ...]


@dataclass(frozen=True)
class GroundAction:
    id: int
    schema: int
    args: tuple[int, ...]
    pre: tuple[int, ...]
    add: tuple[int, ...]
    delete: tuple[int, ...]


@dataclass(eq=False)
class GroundTask:
    domain: Domain
    instance: Instance
    objects: list[str]
    object_types: list[str]
    predicates: list[str]
    schemas: list[str]
    atoms: list[GroundAtom]
    actions: list[GroundAction]
    init: State
    goal: tuple[int, ...]
    achievers: list[list[int]] = field(default_factory=list)
    consumers: list[list[int]] = field(default_factory=list)
    _trigger: dict = field(default_factory=dict, repr=False)
    _always: list = field(default_factory=list, repr=False)
    _atom_index: dict = field(default_factory=dict, repr=False)

    @property
    def name(self) -> str:
        return self.instance.name

    def atom_id(self, predicate: str, *args: str) -> int:
        """Id of a named ground atom; KeyError if it is not in the universe."""
        return self._atom_index[(predicate, tuple(args))]

    def atom_str(self, atom_id: int) -> str:
        a = self.atoms[atom_id]
        names = [self.objects[o] for o in a.args]
        return f"{self.predicates[a.predicate]}({','.join(names)})"

    def action_str(self, action_id: int) -> str:
        a = self.actions[action_id]
        names = [self.objects[o] for o in a.args]
        return f"{self.schemas[a.schema]}({','.join(names)})"

    def action_id(self, schema: str, *args: str) -> int:
        sid = self.schemas.index(schema)
        oids = tuple(self.objects.index(o) for o in args)
        for a in self.actions:
            if a.schema == sid and a.args == oids:
                return a.id
        raise KeyError((schema, args))

    def state_from_atoms(self, atoms) -> State:
        """Build a State from strings like ``"on(b1,b2)"`` or (pred, args) pairs."""
        ids = []
        for a in atoms:
            if isinstance(a, str):
                pred, _, rest = a.partition("(")
                args = tuple(x.strip() for x in rest.rstrip(")").split(",") if x.strip())
            else:
                pred, args = a[0], tuple(a[1])
            ids.append(self.atom_id(pred, *args))
        return State(ids)


def ground(
    dom: Domain,
    inst: Instance,
    max_actions: int = DEFAULT_ACTION_CEILING,
    distinct_args: bool = True,
) -> GroundTask:
    """Full typed grounding of every schema, without reachability pruning.

    With ``distinct_args`` (default) a schema's parameters are bound to
    pairwise distinct objects.
    """
    if inst.domain_name != dom.name:
        raise SemanticError(f"instance is for domain {inst.domain_name!r}, not {dom.name!r}")
    objects: list[str] = []
    types: list[str] = []
    for o, t in tuple(dom.constants) + tuple(inst.objects):
        if o not in objects:
            objects.append(o)
            types.append(t)
    obj_id = {o: i for i, o in enumerate(objects)}
    predicates = [p.name for p in dom.predicates]
    pred_id = {p: i for i, p in enumerate(predicates)}
    schemas = [s.name for s in dom.schemas]

    atoms: list[GroundAtom] = []
    atom_index: dict[tuple[str, tuple[str, ...]], int] = {}

    def intern(pred: str, args: tuple[str, ...]) -> int:
        key = (pred, args)
        aid = atom_index.get(key)
        if aid is None:
            aid = len(atoms)
            atoms.append(GroundAtom(aid, pred_id[pred], tuple(obj_id[a] for a in args)))
            atom_index[key] = aid
        return aid

    init_ids = [intern(a.predicate, a.args) for a in sorted(inst.init)]
    goal_ids = sorted({intern(a.predicate, a.args) for a in sorted(inst.goal)})

    by_type: dict[str, list[str]] = {}

    def objects_of(t: str) -> list[str]:
        if t not in by_type:
            by_type[t] = [o for o, ot in zip(objects, types) if dom.is_subtype(ot, t)]
        return by_type[t]

    actions: list[GroundAction] = []
    for sid, schema in enumerate(dom.schemas):
        variables = [v for v, _ in schema.params]
        domains = [objects_of(t) for _, t in schema.params]
        pre_l = sorted(schema.precondition)
        add_l = sorted(schema.add_effects)
        del_l = sorted(schema.del_effects)
        for combo in itertools.product(*domains):
            if distinct_args and len(set(combo)) != len(combo):
                continue
            if len(actions) >= max_actions:
                raise CapacityExceeded(f"more than {max_actions} ground actions")
            sub = dict(zip(variables, combo))

            def inst_atoms(lst):
                return sorted({intern(a.predicate, tuple(sub.get(x, x) for x in a.args)) for a in lst})

            pre = inst_atoms(pre_l)
            add = inst_atoms(add_l)
            add_set = set(add)
            # delete-then-add: an atom both deleted and added stays true
            dele = [d for d in inst_atoms(del_l) if d not in add_set]
            actions.append(
                GroundAction(len(actions), sid, tuple(obj_id[o] for o in combo), tuple(pre), tuple(add), tuple(dele))
            )

    achievers: list[list[int]] = [[] for _ in atoms]
    consumers: list[list[int]] = [[] for _ in atoms]
    trigger: dict[int, list[int]] = {}
    always: list[int] = []
    fluent = set()
    for a in actions:
        fluent.update(a.add)
        fluent.update(a.delete)
        for p in a.add:
            achievers[p].append(a.id)
        for p in a.pre:
            consumers[p].append(a.id)
    for a in actions:
        if a.pre:
            # Index each action under one precondition atom, preferring a
            # fluent one: static atoms hold in every state and filter nothing.
            key = next((p for p in a.pre if p in fluent), a.pre[0])
            trigger.setdefault(key, []).append(a.id)
        else:
            always.append(a.id)

    return GroundTask(
        domain=dom,
        instance=inst,
        objects=objects,
        object_types=types,
        predicates=predicates,
        schemas=schemas,
        atoms=atoms,
        actions=actions,
        init=State(init_ids),
        goal=tuple(goal_ids),
        achievers=achievers,
        consumers=consumers,
        _trigger=trigger,
        _always=always,
        _atom_index=atom_index,
    )


def applicable_actions(task: GroundTask, s: State) -> list[int]:
    """Ids of all actions whose preconditions hold in ``s``, ascending."""
    out = list(task._always)
    acts = task.actions
    trig = task._trigger
    sset = s.as_set
    for atom in s.atoms:
        for aid in trig.get(atom, ()):
            if sset.issuperset(acts[aid].pre):
                out.append(aid)
    out.sort()
    return out


def apply(task: GroundTask, s: State, a: int) -> State:
    act = task.actions[a]
    if not s.issuperset(act.pre):
        raise NotApplicable(f"{task.action_str(a)} is not applicable")
    if not act.add and not act.delete:
        return s
    new = (s.as_set.difference(act.delete)).union(act.add)
    return State._from_sorted(tuple(sorted(new)), new)


def is_goal(task: GroundTask, s: State) -> bool:
    return s.issuperset(task.goal)


def is_dead_end(task: GroundTask, s: State) -> bool:
    return not applicable_actions(task, s)


def successors(task: GroundTask, s: State) -> list[tuple[int, State]]:
    return [(a, apply(task, s, a)) for a in applicable_actions(task, s)]


def reachable_states(task: GroundTask, limit: int | None = None) -> list[State]:
    """Breadth-first enumeration of states reachable from the initial state."""
    seen = {task.init}
    order = [task.init]
    queue = deque([task.init])
    while queue:
        s = queue.popleft()
        for _, t in successors(task, s):
            if t not in seen:
                seen.add(t)
                order.append(t)
                if limit is not None and len(order) > limit:
                    raise CapacityExceeded(f"more than {limit} reachable states")
                queue.append(t)
    return order


def validate_plan(task: GroundTask, plan, start: State | None = None) -> bool:
    s = task.init if start is None else start
    for a in plan:
        if not s.issuperset(task.actions[a].pre):
            return False
        s = apply(task, s, a)
    return is_goal(task, s)
