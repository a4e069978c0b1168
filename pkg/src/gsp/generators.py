"""Bundled desk-scale domains and seeded instance generators.

Every generated instance is checked for solvability with a breadth-first
search before it is returned.
"""
from __future__ import annotations

import random
from collections import deque

from .grounding import ground, is_goal, successors
from .pddl import parse_domain, parse_instance

BLOCKSWORLD = """\
(define (domain blocksworld)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block) (clear ?x - block)
               (holding ?x - block) (handempty))
  (:action pickup
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (holding ?x) (not (clear ?x)) (not (ontable ?x)) (not (handempty))))
  (:action putdown
    :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (ontable ?x) (clear ?x) (handempty) (not (holding ?x))))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (on ?x ?y) (clear ?x) (handempty) (not (holding ?x)) (not (clear ?y))))
  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (on ?x ?y)) (not (clear ?x)) (not (handempty)))))
"""

GRIPPER = """\
(define (domain gripper)
  (:requirements :strips :typing)
  (:types room ball gripper)
  (:predicates (at-robby ?r - room) (at ?b - ball ?r - room)
               (free ?g - gripper) (carry ?b - ball ?g - gripper))
  (:action move
    :parameters (?from - room ?to - room)
    :precondition (at-robby ?from)
    :effect (and (at-robby ?to) (not (at-robby ?from))))
  (:action pick
    :parameters (?b - ball ?r - room ?g - gripper)
    :precondition (and (at ?b ?r) (at-robby ?r) (free ?g))
    :effect (and (carry ?b ?g) (not (at ?b ?r)) (not (free ?g))))
  (:action drop
    :parameters (?b - ball ?r - room ?g - gripper)
    :precondition (and (carry ?b ?g) (at-robby ?r))
    :effect (and (at ?b ?r) (free ?g) (not (carry ?b ?g)))))
"""

SPANNER = """\
(define (domain spanner)
  (:requirements :strips :typing)
  (:types location locatable - object
          man nut spanner - locatable)
  (:predicates (at ?m - locatable ?l - location) (carrying ?m - man ?s - spanner)
               (useable ?s - spanner) (link ?l1 - location ?l2 - location)
               (tightened ?n - nut) (loose ?n - nut))
  (:action walk
    :parameters (?start - location ?end - location ?m - man)
    :precondition (and (at ?m ?start) (link ?start ?end))
    :effect (and (at ?m ?end) (not (at ?m ?start))))
  (:action pickup_spanner
    :parameters (?l - location ?s - spanner ?m - man)
    :precondition (and (at ?m ?l) (at ?s ?l))
    :effect (and (carrying ?m ?s) (not (at ?s ?l))))
  (:action tighten_nut
    :parameters (?l - location ?s - spanner ?m - man ?n - nut)
    :precondition (and (at ?m ?l) (at ?n ?l) (carrying ?m ?s) (useable ?s) (loose ?n))
    :effect (and (tightened ?n) (not (loose ?n)) (not (useable ?s)))))
"""

SOKOBAN = """\
(define (domain mini-sokoban)
  (:requirements :strips :typing)
  (:types cell)
  (:predicates (robot-at ?c - cell) (box-at ?c - cell) (clear ?c - cell)
               (adj ?a - cell ?b - cell) (inline ?a - cell ?b - cell ?c - cell))
  (:action move
    :parameters (?from - cell ?to - cell)
    :precondition (and (robot-at ?from) (adj ?from ?to) (clear ?to))
    :effect (and (robot-at ?to) (clear ?from) (not (robot-at ?from)) (not (clear ?to))))
  (:action push
    :parameters (?from - cell ?box - cell ?to - cell)
    :precondition (and (robot-at ?from) (box-at ?box) (clear ?to) (inline ?from ?box ?to))
    :effect (and (robot-at ?box) (box-at ?to) (clear ?from)
                 (not (robot-at ?from)) (not (box-at ?box)) (not (clear ?to)))))
"""

DOMAINS = {
    "blocksworld": BLOCKSWORLD,
    "gripper": GRIPPER,
    "spanner": SPANNER,
    "mini-sokoban": SOKOBAN,
}


def domain_text(name: str) -> str:
    try:
        return DOMAINS[name]
    except KeyError:
        raise ValueError(f"unknown domain {name!r}; choose from {sorted(DOMAINS)}") from None


def _problem(name, domain, objects, init, goal) -> str:
    objs = " ".join(f"{o} - {t}" for o, t in objects)
    init_s = "\n    ".join(init)
    goal_s = " ".join(goal)
    return (
        f"(define (problem {name})\n  (:domain {domain})\n  (:objects {objs})\n"
        f"  (:init\n    {init_s})\n  (:goal (and {goal_s})))\n"
    )


def _towers(blocks, rng):
    order = blocks[:]
    rng.shuffle(order)
    towers, cur = [], []
    for b in order:
        cur.append(b)
        if rng.random() < 0.4:
            towers.append(cur)
            cur = []
    if cur:
        towers.append(cur)
    return towers


def blocksworld_instance(n_blocks: int, rng: random.Random, name: str) -> str:
    blocks = [f"b{i + 1}" for i in range(n_blocks)]
    init = ["(handempty)"]
    for tower in _towers(blocks, rng):
        init.append(f"(ontable {tower[0]})")
        init += [f"(on {up} {down})" for down, up in zip(tower, tower[1:])]
        init.append(f"(clear {tower[-1]})")
    goal = []
    for tower in _towers(blocks, rng):
        goal += [f"(on {up} {down})" for down, up in zip(tower, tower[1:])]
    if not goal:
        goal = [f"(ontable {blocks[0]})"]
    return _problem(name, "blocksworld", [(b, "block") for b in blocks], init, goal)


def gripper_instance(n_balls: int, rng: random.Random, name: str, standard: bool = False, shared_goal: bool = False) -> str:
    """Two rooms, two grippers.

    ``standard`` puts every ball in rooma with goal roomb; ``shared_goal``
    keeps random starts but sends every ball to roomb; otherwise each ball
    gets a random start and goal room.
    """
    rooms = ["rooma", "roomb"]
    balls = [f"ball{i + 1}" for i in range(n_balls)]
    objects = [(r, "room") for r in rooms] + [(b, "ball") for b in balls] + [("left", "gripper"), ("right", "gripper")]
    robby = "rooma" if standard else rng.choice(rooms)
    init = [f"(at-robby {robby})", "(free left)", "(free right)"]
    goal = []
    for b in balls:
        start = "rooma" if standard else rng.choice(rooms)
        target = "roomb" if standard or shared_goal else rng.choice(rooms)
        init.append(f"(at {b} {start})")
        goal.append(f"(at {b} {target})")
    return _problem(name, "gripper", objects, init, goal)


def spanner_instance(n_spanners: int, rng: random.Random, name: str, n_nuts: int | None = None, n_locations: int = 3) -> str:
    n_nuts = max(1, n_spanners - rng.randint(0, 1)) if n_nuts is None else n_nuts
    locs = ["shed"] + [f"loc{i + 1}" for i in range(n_locations)] + ["gate"]
    spanners = [f"spanner{i + 1}" for i in range(n_spanners)]
    nuts = [f"nut{i + 1}" for i in range(n_nuts)]
    objects = [(l, "location") for l in locs] + [("bob", "man")] + [(s, "spanner") for s in spanners] + [(n, "nut") for n in nuts]
    init = ["(at bob shed)"]
    init += [f"(link {a} {b})" for a, b in zip(locs, locs[1:])]
    for s in spanners:
        init += [f"(at {s} {rng.choice(locs[1:-1])})", f"(useable {s})"]
    for n in nuts:
        init += [f"(at {n} gate)", f"(loose {n})"]
    goal = [f"(tightened {n})" for n in nuts]
    return _problem(name, "spanner", objects, init, goal)


def sokoban_instance(size: int, rng: random.Random, name: str, n_boxes: int = 1, n_walls: int | None = None) -> str:
    """Open ``size`` x ``size`` floor with a few random interior walls."""
    cells = [(x, y) for y in range(size) for x in range(size)]
    n_walls = rng.randint(0, max(0, size - 2)) if n_walls is None else n_walls
    shuffled = cells[:]
    rng.shuffle(shuffled)
    walls = set(shuffled[:n_walls])
    free = [c for c in cells if c not in walls]
    rng.shuffle(free)
    robot, boxes = free[0], free[1 : 1 + n_boxes]
    goals = rng.sample(free[1 + n_boxes :], n_boxes)

    def cname(c):
        return f"c{c[0]}_{c[1]}"

    free_set = set(free)
    init = [f"(robot-at {cname(robot)})"]
    init += [f"(box-at {cname(b)})" for b in boxes]
    init += [f"(clear {cname(c)})" for c in free if c != robot and c not in boxes]
    for (x, y) in free:
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = (x + dx, y + dy)
            if nb in free_set:
                init.append(f"(adj {cname((x, y))} {cname(nb)})")
                nb2 = (x + 2 * dx, y + 2 * dy)
                if nb2 in free_set:
                    init.append(f"(inline {cname((x, y))} {cname(nb)} {cname(nb2)})")
    goal = [f"(box-at {cname(g)})" for g in goals]
    return _problem(name, "mini-sokoban", [(cname(c), "cell") for c in free], init, goal)


def bfs_plan_length(task, limit: int = 10**5) -> int | None:
    """Optimal plan length by breadth-first search, or None if unsolvable."""
    if is_goal(task, task.init):
        return 0
    depth = {task.init: 0}
    queue = deque([task.init])
    while queue:
        s = queue.popleft()
        for _, t in successors(task, s):
            if t in depth:
                continue
            depth[t] = depth[s] + 1
            if is_goal(task, t):
                return depth[t]
            if len(depth) > limit:
                return None
            queue.append(t)
    return None


def generate(domain: str, count: int, seed: int, size: int, max_states: int = 10**4, max_attempts: int | None = None, **kw) -> list[tuple[str, str]]:
    """Return up to ``count`` distinct solvable ``(name, pddl_text)`` pairs.

    ``size`` is the block count, ball count, spanner count, or grid side,
    depending on the domain. Instances whose initial state already satisfies
    the goal are skipped unless ``size`` is 1.
    """
    dom = parse_domain(domain_text(domain))
    rng = random.Random(seed)
    makers = {
        "blocksworld": blocksworld_instance,
        "gripper": gripper_instance,
        "spanner": spanner_instance,
        "mini-sokoban": sokoban_instance,
    }
    make = makers[domain]
    out, seen = [], set()
    attempts = 0
    max_attempts = max_attempts or 50 * count + 100
    while len(out) < count and attempts < max_attempts:
        attempts += 1
        name = f"{domain}-{size}-s{seed}-{len(out) + 1:03d}"
        text = make(size, rng, name, **kw)
        inst = parse_instance(text, dom)
        key = (inst.objects, inst.init, inst.goal)
        if key in seen:
            continue
        task = ground(dom, inst)
        length = bfs_plan_length(task, limit=max_states)
        if length is None or (length == 0 and size > 1):
            continue  # unsolvable within the cap, or already at the goal
        seen.add(key)
        out.append((name, text))
    return out
