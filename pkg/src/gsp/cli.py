"""Command-line entry point: ``train``, ``eval``, ``gen`` and ``inspect``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import GSPError
from .generators import DOMAINS, domain_text, generate
from .graph import encode
from .grounding import applicable_actions, ground, validate_plan
from .heuristics import h_max
from .pddl import load_domain, load_instance, parse_domain
from .qfunc import HeuristicQ, NetQ, ZeroQ
from .search import Budget, best_first_solve, greedy_rollout
from .train import TrainConfig, coerce_field, load_checkpoint, train

log = logging.getLogger("gsp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
MODES = ("greedy", "wastar", "gbfs", "hmax", "blind")
LEARNED_MODES = {"greedy", "wastar", "gbfs"}
SIZE_FLAGS = {"blocksworld": "blocks", "gripper": "balls", "spanner": "spanners", "mini-sokoban": "size"}


class UsageError(Exception):
    pass


@dataclass
class EvalRow:
    instance: str
    mode: str
    solved: bool
    plan_length: int | None
    expansions: int
    wall_seconds: float
    budget_hit: str

    FIELDS = ("instance", "mode", "solved", "plan_length", "expansions", "wall_seconds", "budget_hit")


# ---------------------------------------------------------------- inputs


def _domain(arg: str):
    """A bundled domain name or a path to a domain file."""
    if arg in DOMAINS:
        return parse_domain(domain_text(arg))
    path = Path(arg)
    if not path.is_file():
        raise UsageError(f"domain {arg!r} is neither a bundled domain ({', '.join(DOMAINS)}) nor a file")
    return load_domain(path)


def _instance_files(directory: str | None) -> list[Path]:
    if directory is None:
        return []
    path = Path(directory)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise UsageError(f"instance directory {directory!r} does not exist")
    files = []
    for f in sorted(path.glob("*.pddl")):
        head = f.read_text()[:400].lower()
        if "(domain " in head and "(problem" not in head:
            continue  # skip a domain file kept next to its instances
        files.append(f)
    return files


def _tasks(dom, files):
    return [ground(dom, load_instance(f, dom)) for f in files]


def _resolve_checkpoint(path: str) -> Path:
    p = Path(path)
    best = p if p.name == "best.json" else p / "best.json"
    if best.is_file():
        return best.parent / json.loads(best.read_text())["checkpoint"]
    return p


# ---------------------------------------------------------------- train


def _add_config_flags(parser: argparse.ArgumentParser):
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in ("seed", "single_thread"):
            continue  # declared explicitly below
        parser.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper(),
                            help=f"override config field {f.name} (default {f.default})")


def cmd_train(args) -> int:
    dom = _domain(args.domain)
    text = Path(args.config).read_text() if args.config else ""
    overrides = {}
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    for name in types:
        raw = getattr(args, name, None)
        if raw is not None and not isinstance(raw, bool):
            overrides[name] = coerce_field(str(raw), types[name])
    if args.single_thread:
        overrides["single_thread"] = True
    try:
        cfg = TrainConfig.from_text(text, **overrides)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc
    train_tasks = _tasks(dom, _instance_files(args.instances))
    if not train_tasks:
        raise UsageError(f"no training instances in {args.instances!r}")
    val_tasks = _tasks(dom, _instance_files(args.val))
    res = train(cfg, dom, train_tasks, val_tasks, args.out)
    print(f"episodes={res.episodes} learner_steps={res.learner_steps} best={res.best_checkpoint} score={res.best_score}")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def evaluate(task, mode: str, q=None, w: float = 2.0, batch: int = 1,
             max_expansions: int = 10_000, max_seconds: float = 3600.0) -> EvalRow:
    """Run one instance in one mode and return its validated row."""
    if mode == "greedy":
        res = greedy_rollout(task, q, max_steps=max_expansions, max_seconds=max_seconds)
    else:
        evaluator = {"wastar": q, "gbfs": q, "hmax": HeuristicQ(h_max), "blind": ZeroQ()}[mode]
        res = best_first_solve(task, evaluator, None if mode == "gbfs" else w, batch,
                               budget=Budget(max_expansions, max_seconds))
    if res.solved and not validate_plan(task, res.plan):
        raise AssertionError(f"{mode} returned an invalid plan on {task.name}")
    return EvalRow(task.name, mode, res.solved, res.plan_length if res.solved else None,
                   res.expansions, round(res.wall_time, 6), res.budget_hit)


def summarize(rows: list[EvalRow]) -> list[dict]:
    """Coverage plus mean and median plan length over solved instances, per mode."""
    out = []
    for mode in MODES:
        sel = [r for r in rows if r.mode == mode]
        if not sel:
            continue
        lengths = [r.plan_length for r in sel if r.solved]
        exps = [r.expansions for r in sel if r.solved]
        out.append({
            "mode": mode,
            "instances": len(sel),
            "solved": len(lengths),
            "coverage": len(lengths) / len(sel),
            "mean_steps": statistics.fmean(lengths) if lengths else None,
            "median_steps": statistics.median(lengths) if lengths else None,
            "mean_expansions": statistics.fmean(exps) if exps else None,
        })
    return out


def write_rows(rows: list[EvalRow], out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "results.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EvalRow.FIELDS)
        for r in rows:
            writer.writerow(["" if v is None else v for v in (getattr(r, f) for f in EvalRow.FIELDS)])
    with (out_dir / "results.jsonl").open("w") as fh:
        for r in rows:
            fh.write(json.dumps({f: getattr(r, f) for f in EvalRow.FIELDS}) + "\n")
    with (out_dir / "summary.json").open("w") as fh:
        json.dump(summarize(rows), fh, indent=2)
        fh.write("\n")


def cmd_eval(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    unknown = [m for m in modes if m not in MODES]
    if unknown or not modes:
        raise UsageError(f"unknown mode(s) {unknown}; choose from {', '.join(MODES)}")
    dom = _domain(args.domain)
    files = _instance_files(args.instances)
    q = None
    if LEARNED_MODES & set(modes):
        if not args.checkpoint:
            raise UsageError("learned modes need --checkpoint")
        try:
            net, goal_mode = load_checkpoint(_resolve_checkpoint(args.checkpoint))
        except (OSError, KeyError, ValueError) as exc:
            print(f"error: cannot load checkpoint {args.checkpoint!r}: {exc}", file=sys.stderr)
            return EXIT_DATA
        q = NetQ(net, goal_mode)
    if not files:
        print(f"warning: no instances found in {args.instances!r}", file=sys.stderr)
    tasks = sorted(_tasks(dom, files), key=lambda t: t.name)
    rows = []
    for task in tasks:
        for mode in modes:
            rows.append(evaluate(task, mode, q, args.w, args.batch, args.max_expansions, args.max_seconds))
    rows.sort(key=lambda r: r.instance)  # stable: keeps mode order within an instance
    write_rows(rows, Path(args.out))
    for s in summarize(rows):
        print(json.dumps(s))
    return EXIT_OK


# ---------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    if args.domain not in DOMAINS:
        raise UsageError(f"unknown domain {args.domain!r}; choose from {', '.join(DOMAINS)}")
    size = getattr(args, SIZE_FLAGS[args.domain])
    if size is None:
        raise UsageError(f"{args.domain} needs --{SIZE_FLAGS[args.domain]}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "domain.pddl").write_text(domain_text(args.domain))
    made = generate(args.domain, args.count, args.seed, size)
    for name, text in made:
        (out / f"{name}.pddl").write_text(text)
    if len(made) < args.count:
        print(f"warning: only {len(made)} distinct solvable instances found", file=sys.stderr)
    print(f"wrote {len(made)} instances to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- inspect


def cmd_inspect(args) -> int:
    dom = _domain(args.domain)
    task = ground(dom, load_instance(args.instance, dom))
    buf = io.StringIO()
    if args.what == "task":
        buf.write(f"task {task.name}: {len(task.objects)} objects, {len(task.atoms)} atoms, {len(task.actions)} actions\n")
        buf.write("init: " + " ".join(task.atom_str(p) for p in task.init.atoms) + "\n")
        buf.write("goal: " + " ".join(task.atom_str(p) for p in sorted(task.goal)) + "\n")
        for a in task.actions:
            buf.write(task.action_str(a.id) + "\n")
    else:
        s = task.init
        buf.write(encode(task, s, applicable_actions(task, s), args.goal_mode).dump() + "\n")
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------- main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gsp", description="Search-guided Q-learning planner")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a Q-network")
    p.add_argument("--domain", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--val")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", default=None)
    p.add_argument("--single-thread", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and baselines")
    p.add_argument("--domain", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--modes", default="greedy,wastar")
    p.add_argument("--w", type=float, default=2.0)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--max-expansions", type=int, default=10_000)
    p.add_argument("--max-seconds", type=float, default=3600.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="generate instances of a bundled domain")
    p.add_argument("domain")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    for flag in SIZE_FLAGS.values():
        p.add_argument(f"--{flag}", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("inspect", help="dump a ground task or its relational graph")
    p.add_argument("what", choices=("task", "graph"))
    p.add_argument("--domain", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--goal-mode", default="distinguished", choices=("distinguished", "literal"))
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gsp {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GSPError, OSError, UnicodeDecodeError) as exc:
        print(f"gsp {args.verb}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"gsp {args.verb}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
