import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gsp.generators import generate, domain_text
from gsp.grounding import ground
from gsp.pddl import parse_domain, parse_instance

# four predicates and four schemas, no hand-empty bookkeeping
BW4 = """
(define (domain bw4)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block) (clear ?x - block) (holding ?x - block))
  (:action pickup :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x))
    :effect (and (holding ?x) (not (ontable ?x)) (not (clear ?x))))
  (:action putdown :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (ontable ?x) (clear ?x) (not (holding ?x))))
  (:action stack :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (on ?x ?y) (clear ?x) (not (holding ?x)) (not (clear ?y))))
  (:action unstack :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x))
    :effect (and (holding ?x) (clear ?y) (not (on ?x ?y)) (not (clear ?x)))))
"""

TOWER3 = """
(define (problem tower3) (:domain bw4)
  (:objects b1 b2 b3 - block)
  (:init (on b3 b2) (on b2 b1) (clear b3) (ontable b1))
  (:goal (and (on b1 b2))))
"""

BUNDLED = ("blocksworld", "gripper", "spanner", "mini-sokoban")
SMALL_SIZES = {"blocksworld": 3, "gripper": 2, "spanner": 2, "mini-sokoban": 3}


@pytest.fixture(scope="session")
def bw4():
    return parse_domain(BW4)


@pytest.fixture(scope="session")
def tower3(bw4):
    return parse_instance(TOWER3, bw4)


@pytest.fixture(scope="session")
def tower3_task(bw4, tower3):
    return ground(bw4, tower3)


def bundled_tasks(domain, count, seed=0, size=None, **kw):
    """Ground ``count`` generated instances of a bundled domain as (domain, instance, task)."""
    dom = parse_domain(domain_text(domain))
    out = []
    for _, text in generate(domain, count, seed, size or SMALL_SIZES[domain], **kw):
        inst = parse_instance(text, dom)
        out.append((dom, inst, ground(dom, inst)))
    return out


WALK = """
(define (domain walk) (:requirements :strips :typing) (:types node)
  (:predicates (at ?n - node) (edge ?a - node ?b - node))
  (:action move :parameters (?from - node ?to - node)
    :precondition (and (at ?from) (edge ?from ?to))
    :effect (and (at ?to) (not (at ?from)))))
"""


def walk_task(edges, start, goal, name="walk1"):
    """Ground a walk over a directed graph; states are the agent's node."""
    dom = parse_domain(WALK)
    nodes = sorted({n for e in edges for n in e} | {start, goal})
    text = (f"(define (problem {name}) (:domain walk) (:objects {' '.join(nodes)} - node)"
            f" (:init (at {start}) {' '.join(f'(edge {a} {b})' for a, b in edges)})"
            f" (:goal (at {goal})))")
    return ground(dom, parse_instance(text, dom))


def at(task, node):
    """The walk state with the agent at ``node`` (static edges included)."""
    static = [p for p in task.init.atoms if task.predicates[task.atoms[p].predicate] == "edge"]
    from gsp.grounding import State
    return State(static + [task.atom_id("at", node)])


def move(task, a, b):
    return task.action_id("move", a, b)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
