"""Search-guided Q-learning for classical planning with a relational GNN."""
from .errors import GSPError
from .generators import DOMAINS, domain_text, generate
from .graph import RelationalGraph, encode, relation_signature
from .grounding import GroundTask, State, applicable_actions, apply, ground, is_goal, validate_plan
from .heuristics import h_max
from .learning import Learner, ReplayBuffer, TargetSpec, compute_targets
from .net import NetConfig, QNetwork
from .pddl import parse_domain, parse_instance
from .qfunc import NetQ, OracleQ, TabularQ, ZeroQ
from .search import best_first_solve, gbfs_solve, greedy_rollout, run_episode, wastar_solve
from .train import TrainConfig, load_checkpoint, train, validate

__version__ = "0.1.0"

__all__ = [
    "GSPError", "DOMAINS", "domain_text", "generate", "RelationalGraph", "encode", "relation_signature",
    "GroundTask", "State", "applicable_actions", "apply", "ground", "is_goal", "validate_plan", "h_max",
    "Learner", "ReplayBuffer", "TargetSpec", "compute_targets", "NetConfig", "QNetwork", "parse_domain",
    "parse_instance", "NetQ", "OracleQ", "TabularQ", "ZeroQ", "best_first_solve", "gbfs_solve",
    "greedy_rollout", "run_episode", "wastar_solve", "TrainConfig", "load_checkpoint", "train", "validate",
]
