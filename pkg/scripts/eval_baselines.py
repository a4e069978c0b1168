"""Compare learned search against h_max and blind search on generated instances.

    python scripts/eval_baselines.py --domain gripper --size 5 --count 10 --shared-goal --checkpoint runs/gripper/seed0
    python scripts/eval_baselines.py --domain blocksworld --size 6 --checkpoint runs/bw

Without a checkpoint only the h_max and blind baselines run.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from gsp.cli import _resolve_checkpoint, evaluate, summarize, write_rows
from gsp.generators import domain_text, generate
from gsp.grounding import ground
from gsp.pddl import parse_domain, parse_instance
from gsp.qfunc import NetQ
from gsp.train import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--domain", default="gripper")
    ap.add_argument("--size", type=int, default=4)
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint", default=None)
    ap.add_argument("--max-expansions", type=int, default=10_000)
    ap.add_argument("--shared-goal", action="store_true", help="gripper only: every ball goes to the same room")
    ap.add_argument("--out", default=None, help="directory for results.csv, results.jsonl and summary.json")
    args = ap.parse_args()

    dom = parse_domain(domain_text(args.domain))
    extra = {"shared_goal": True} if args.shared_goal else {}
    tasks = [ground(dom, parse_instance(text, dom)) for _, text in generate(args.domain, args.count, args.seed, args.size, **extra)]
    modes = {"hmax": None, "blind": None}
    if args.checkpoint:
        net, goal_mode = load_checkpoint(_resolve_checkpoint(args.checkpoint))
        q = NetQ(net, goal_mode)
        modes = {"greedy": q, "wastar": q, **modes}
    rows = [evaluate(task, mode, q, max_expansions=args.max_expansions) for task in tasks for mode, q in modes.items()]
    summary = summarize(rows)
    if args.out:
        write_rows(rows, Path(args.out))
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
