"""Command-line driver: solve, generate, stats, train, eval.

Every option can also be given in a plain ``key = value`` config file passed with
``--config``; command-line flags override file values.  Flag names are the keys
with underscores replaced by dashes.

Exit status: 0 on success, 1 on invalid input, 2 when a level that must be
solvable is not (or the planner runs out of budget).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from . import __version__
from .agent import A2CHyper, load_checkpoint
from .core import ContractError
from .harness import (ExperimentConfig, MetricsRow, UnsolvableLevelError,
                      evaluate, metrics_csv, run_experiment, shortest_path_stats)
from .levels import generate_set, parse_xsb_many, save_level_set
from .planner import HEURISTIC_MODES, MIN_MATCHING, plan_to_string, solve_astar
from .shaping import ShapingConfig

EXIT_OK, EXIT_INVALID, EXIT_UNSOLVABLE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def parse_optional_int(text: str) -> Optional[int]:
    return None if text.strip().lower() in ("none", "unlimited") else int(text)


def parse_optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("none", "off") else float(text)


def parse_int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def parse_heuristic(text: str) -> str:
    value = text.strip().lower().replace("-", "_")
    if value not in HEURISTIC_MODES:
        raise ValueError(f"expected one of {', '.join(HEURISTIC_MODES)}")
    return value


@dataclass(frozen=True)
class Option:
    key: str
    parse: Callable[[str], object]
    default: object
    help: str


_hyper = A2CHyper()
_config = ExperimentConfig()
_shaping = ShapingConfig()

LEVEL_OPTIONS = [
    Option("levels", str, None, "level manifest, XSB file or directory; generated when omitted"),
    Option("n_boxes", int, _config.n_boxes, "boxes per generated level"),
    Option("n_levels", int, _config.n_levels, "number of generated levels"),
    Option("level_height", int, _config.level_height, "generated level height incl. walls"),
    Option("level_width", int, _config.level_width, "generated level width incl. walls"),
    Option("max_pulls", int, _config.max_pulls, "reverse-play pull budget for generation"),
    Option("level_seed", int, _config.level_seed, "seed of the generated level set"),
]

OPTIONS: Dict[str, List[Option]] = {
    "solve": [
        Option("heuristic", parse_heuristic, MIN_MATCHING, "A* heuristic"),
        Option("node_budget", parse_optional_int, None, "A* node budget ('none' = unlimited)"),
    ],
    "generate": [
        Option("seed", int, 0, "generation seed"),
        Option("n_boxes", int, 1, "boxes per level"),
        Option("count", int, 20, "number of levels"),
        Option("level_height", int, 7, "level height incl. walls"),
        Option("level_width", int, 7, "level width incl. walls"),
        Option("max_pulls", int, 30, "reverse-play pull budget"),
        Option("out", str, "levels", "output directory"),
    ],
    "stats": LEVEL_OPTIONS + [
        Option("node_budget", parse_optional_int, None, "A* node budget ('none' = unlimited)"),
        Option("out", str, None, "write the CSV here instead of stdout"),
    ],
    "train": LEVEL_OPTIONS + [
        Option("shaping", parse_bool, True, "distance-based reward shaping on/off"),
        Option("heuristic", parse_heuristic, _shaping.heuristic_mode, "A* heuristic for shaping"),
        Option("gamma_in_potential", parse_bool, False, "use gamma*phi(s') - phi(s)"),
        Option("node_budget", parse_optional_int, _shaping.node_budget,
               "A* node budget per distance query"),
        Option("learning_rate", float, _hyper.learning_rate, "RMSprop learning rate"),
        Option("gamma", float, _hyper.gamma, "discount factor"),
        Option("entropy_coef", float, _hyper.entropy_coef, "entropy bonus weight"),
        Option("value_loss_coef", float, _hyper.value_loss_coef, "value loss weight"),
        Option("rmsprop_eps", float, _hyper.rmsprop_eps, "RMSprop epsilon"),
        Option("rmsprop_alpha", float, _hyper.rmsprop_alpha, "RMSprop decay"),
        Option("rollout_len", int, _hyper.rollout_len, "steps per environment per update"),
        Option("n_envs", int, _hyper.n_envs, "parallel environments"),
        Option("max_grad_norm", parse_optional_float, _hyper.max_grad_norm,
               "global gradient-norm clip ('none' disables)"),
        Option("total_steps", int, _config.total_env_steps, "environment steps per seed"),
        Option("eval_every", int, _config.eval_every, "environment steps between evaluations"),
        Option("eval_instances", int, _config.eval_instances, "levels per evaluation"),
        Option("seeds", parse_int_list, list(_config.seeds), "comma-separated run seeds"),
        Option("step_cap", int, _config.step_cap, "episode step cap"),
        Option("obs_mode", str, _config.obs_mode, "symbolic or pixel"),
        Option("separate_critic", parse_bool, False, "critic with its own network trunk"),
        Option("checkpoints", parse_bool, True, "save final parameters per seed"),
        Option("out", str, "runs", "output directory"),
    ],
    "eval": LEVEL_OPTIONS + [
        Option("checkpoint", str, None, "policy checkpoint (.npz)"),
        Option("eval_instances", int, _config.eval_instances, "levels to evaluate"),
        Option("seed", int, 0, "seed of the level draw"),
        Option("step_cap", int, _config.step_cap, "episode step cap"),
        Option("obs_mode", str, _config.obs_mode, "symbolic or pixel"),
    ],
}

ALL_KEYS = {opt.key for opts in OPTIONS.values() for opt in opts}


def read_config_file(path: str) -> Dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys may use dashes."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in ALL_KEYS:
            raise UsageError(f"{path}:{number}: unknown key {key!r}")
        values[key] = value
    return values


def resolve(command: str, flags: Dict[str, Optional[str]], file_values: Dict[str, str]) -> dict:
    """Defaults, then config file, then flags; every raw string goes through its parser."""
    out = {}
    for opt in OPTIONS[command]:
        raw = flags.get(opt.key)
        source = f"--{opt.key.replace('_', '-')}"
        if raw is None:
            raw, source = file_values.get(opt.key), f"config key {opt.key!r}"
        if raw is None:
            out[opt.key] = opt.default
            continue
        try:
            out[opt.key] = opt.parse(raw)
        except ValueError as exc:
            raise UsageError(f"{source}: {exc}") from None
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sokoshape", description="Sokoban reward-shaping workbench.")
    parser.add_argument("--version", action="version", version=f"sokoshape {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {"solve": "plan a solution for each level in an XSB file",
             "generate": "generate a level set",
             "stats": "optimal solution lengths of a level set",
             "train": "train A2C agents and write metrics",
             "eval": "evaluate a checkpoint greedily"}
    for command, options in OPTIONS.items():
        p = sub.add_parser(command, help=helps[command], description=helps[command])
        if command == "solve":
            p.add_argument("xsb", help="XSB file ('-' reads stdin)")
        p.add_argument("--config", help="key = value file supplying any of the options below")
        for opt in options:
            default = "generated" if opt.default is None and opt.key == "levels" else opt.default
            if isinstance(default, list):
                default = ",".join(map(str, default))
            p.add_argument(f"--{opt.key.replace('_', '-')}", dest=opt.key, default=None,
                           metavar="VALUE", help=f"{opt.help} (default: {default})")
    return parser


# --- subcommands -----------------------------------------------------------

def _experiment_config(o: dict, **extra) -> ExperimentConfig:
    kwargs = dict(levels_path=o["levels"], n_boxes=o["n_boxes"], n_levels=o["n_levels"],
                  level_height=o["level_height"], level_width=o["level_width"],
                  max_pulls=o["max_pulls"], level_seed=o["level_seed"])
    kwargs.update(extra)
    return ExperimentConfig(**kwargs)


def cmd_solve(o: dict, args, out) -> int:
    text = sys.stdin.read() if args.xsb == "-" else Path(args.xsb).read_text(encoding="utf-8")
    levels = parse_xsb_many(text)
    if not levels:
        raise ContractError(f"{args.xsb}: no levels found")
    status = EXIT_OK
    for level in levels:
        result = solve_astar(level.initial_state(), o["heuristic"], o["node_budget"])
        if result.solved:
            out.write(f"{plan_to_string(result.plan)}\nlength {result.length}\n")
        else:
            out.write(f"{type(result.status).__name__.lower()}\n")
            status = EXIT_UNSOLVABLE
        out.write(f"nodes {result.nodes_expanded}\n")
    return status


def cmd_generate(o: dict, args, out) -> int:
    level_set = generate_set(o["seed"], o["count"], o["n_boxes"], o["level_height"],
                             o["level_width"], o["max_pulls"])
    header = (f"sokoshape {__version__} generate seed={o['seed']} n_boxes={o['n_boxes']} "
              f"size={o['level_height']}x{o['level_width']} max_pulls={o['max_pulls']}")
    manifest = save_level_set(level_set, o["out"], header)
    out.write(f"wrote {len(level_set)} levels to {manifest}\n")
    return EXIT_OK


def cmd_stats(o: dict, args, out) -> int:
    config = _experiment_config(o, eval_instances=1)
    level_set = config.load_levels()
    stats = shortest_path_stats(level_set, o["node_budget"])
    text = stats.to_csv(f"sokoshape {__version__} stats config={config.digest()}")
    if o["out"]:
        Path(o["out"]).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    out.write(f"mean {stats.mean:.4f} over {len(stats.lengths)} levels\n")
    return EXIT_OK


def cmd_train(o: dict, args, out) -> int:
    hyper = A2CHyper(learning_rate=o["learning_rate"], gamma=o["gamma"],
                     entropy_coef=o["entropy_coef"], value_loss_coef=o["value_loss_coef"],
                     rmsprop_eps=o["rmsprop_eps"], rmsprop_alpha=o["rmsprop_alpha"],
                     rollout_len=o["rollout_len"], n_envs=o["n_envs"],
                     max_grad_norm=o["max_grad_norm"])
    shaping = ShapingConfig(enabled=o["shaping"], heuristic_mode=o["heuristic"],
                            gamma_in_potential=o["gamma_in_potential"], gamma=o["gamma"],
                            node_budget=o["node_budget"])
    config = _experiment_config(
        o, shaping=shaping, hyper=hyper, total_env_steps=o["total_steps"],
        eval_every=o["eval_every"], eval_instances=o["eval_instances"], seeds=tuple(o["seeds"]),
        step_cap=o["step_cap"], obs_mode=o["obs_mode"], separate_critic=o["separate_critic"],
        checkpoints=o["checkpoints"])
    if not config.seeds:
        raise ContractError("--seeds must list at least one seed")
    results = run_experiment(config, o["out"])
    for seed, (_, rows) in results.items():
        last = rows[-1]
        out.write(f"seed {seed}: {len(rows)} evaluations, final solved_ratio "
                  f"{last.solved_ratio:.3f}\n")
    return EXIT_OK


def cmd_eval(o: dict, args, out) -> int:
    if not o["checkpoint"]:
        raise UsageError("--checkpoint is required")
    params, meta = load_checkpoint(o["checkpoint"])
    config = _experiment_config(o, eval_instances=o["eval_instances"], step_cap=o["step_cap"],
                                obs_mode=o["obs_mode"])
    level_set = config.load_levels()
    stats = evaluate(params, level_set, o["eval_instances"], o["seed"], o["step_cap"],
                     o["obs_mode"])
    row = MetricsRow(o["seed"], int(meta.get("env_steps", 0)), stats["solved_ratio"],
                     stats["mean_return"], stats["mean_ep_len"], 0.0, False)
    header = (f"sokoshape {__version__} eval checkpoint={Path(o['checkpoint']).name} "
              f"seed={o['seed']}")
    out.write(metrics_csv([row], header))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "generate": cmd_generate, "stats": cmd_stats,
            "train": cmd_train, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        flags = {opt.key: getattr(args, opt.key) for opt in OPTIONS[args.command]}
        options = resolve(args.command, flags, file_values)
        return COMMANDS[args.command](options, args, out)
    except UnsolvableLevelError as exc:
        print(f"sokoshape {args.command}: {exc}", file=sys.stderr)
        return EXIT_UNSOLVABLE
    except (UsageError, ContractError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"sokoshape {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
