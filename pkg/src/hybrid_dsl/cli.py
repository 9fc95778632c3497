"""Command-line entry point: gen, index, exec, eval, reward, rl-demo.

Every subcommand prints a run header (all effective settings, defaults
included) to stderr and writes its JSON result to stdout or ``--out``.
Exit codes: 0 success, 1 configuration error, 2 parse error, 3 execution
error, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Sequence

from .corpus import load_corpus, parse_timestamp, save_corpus
from .datagen import TripletConfig, TripletFactory, dump_triplets, load_triplets, profile_dataset, synthesize_corpus
from .dsl.parser import parse_program
from .dsl.tags import OPEN_TAG, extract_tagged_query
from .errors import (
    AlignmentError,
    CorpusError,
    DatagenError,
    DimensionMismatch,
    DslError,
    EmptyBatch,
    EmptyReference,
    ExecutionError,
    FieldMismatch,
    IndexFormatError,
)
from .executor import DEFAULT_NOW, ExecutionContext, execute
from .metrics import evaluate_run
from .objectives import ObjectiveConfig
from .reward import RewardConfig, total_reward
from .rollout import RolloutConfig, RolloutEnv, corruption_sweep, named_policy, run_rollouts
from .vectors import DEFAULT_TAU, DEFAULT_TOP_K, HashingEmbedder, build_index, embedder_from_config, load_indexes, save_indexes

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARSE = 2
EXIT_EXEC = 3
EXIT_DATA = 4

log = logging.getLogger("hybrid_dsl")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems as configuration errors (exit 1)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _unit_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return value


def _timestamp(text: str) -> datetime:
    try:
        return parse_timestamp(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a timestamp: {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed for every random substream")
    common.add_argument("--tau", type=float, default=DEFAULT_TAU, help="vector similarity threshold")
    common.add_argument("--top-k", type=_positive_int, default=DEFAULT_TOP_K, help="max hits per vector query")
    common.add_argument("--dimension", type=_positive_int, default=256, help="embedding dimension when building indexes")
    common.add_argument("--now", type=_timestamp, default=DEFAULT_NOW, help="clock used by date('now', ...)")
    common.add_argument("--out", type=Path, help="write the result here instead of stdout")
    common.add_argument("--pretty", action="store_true", help="human-readable output")
    common.add_argument("--no-timing", action="store_true", help="report latencies as 0 for byte-identical reruns")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="hybrid-dsl", description="Hybrid SQL + vector retrieval DSL toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", parents=[common], help="synthesize a corpus and supervised triplets")
    gen.add_argument("--n", type=_positive_int, default=2500, help="corpus size")
    gen.add_argument("--triplets", type=int, default=2000, help="number of triplets")
    gen.add_argument("--pool-size", type=_positive_int, default=16)
    gen.add_argument("--accounts", type=_positive_int, default=12)
    gen.add_argument("--out-dir", type=Path, required=True)

    idx = sub.add_parser("index", parents=[common], help="build and persist field indexes")
    idx.add_argument("--corpus", type=Path, required=True)
    idx.add_argument("--index-out", type=Path, required=True)

    ex = sub.add_parser("exec", parents=[common], help="parse and execute one program")
    ex.add_argument("--corpus", type=Path, required=True)
    ex.add_argument("--index", type=Path)
    src = ex.add_mutually_exclusive_group(required=True)
    src.add_argument("--dsl", help="program JSON, optionally wrapped in <query> tags")
    src.add_argument("--dsl-file", type=Path)

    ev = sub.add_parser("eval", parents=[common], help="metrics for candidate programs over triplets")
    ev.add_argument("--corpus", type=Path, required=True)
    ev.add_argument("--index", type=Path)
    ev.add_argument("--triplets", type=Path, required=True)
    ev.add_argument("--programs", type=Path, required=True, help="JSONL of {query_id, program}")

    rw = sub.add_parser("reward", parents=[common], help="score (output, reference) pairs")
    rw.add_argument("--corpus", type=Path, required=True)
    rw.add_argument("--index", type=Path)
    rw.add_argument("--input", type=Path, required=True, help="JSONL of {output, reference[, pool]}")
    _reward_flags(rw)

    rl = sub.add_parser("rl-demo", parents=[common], help="simulated rollout steps with a mock policy")
    rl.add_argument("--corpus", type=Path, required=True)
    rl.add_argument("--index", type=Path)
    rl.add_argument("--triplets", type=Path, required=True)
    rl.add_argument("--policy", choices=("gold", "perturbed", "garbage", "mixture"), default="mixture")
    rl.add_argument("--corruption-rate", type=_unit_float, default=0.3)
    rl.add_argument("--corruption-levels", type=_float_list, help="run a sweep over these rates instead")
    rl.add_argument("--steps", type=_positive_int, default=10)
    rl.add_argument("--group-size", type=int, default=8)
    rl.add_argument("--batch-size", type=_positive_int, default=4)
    rl.add_argument("--clip-eps", type=float, default=0.2)
    rl.add_argument("--clip-lo", type=float, default=0.2)
    rl.add_argument("--clip-hi", type=float, default=0.28)
    rl.add_argument("--kl-beta", type=float, default=0.04)
    _reward_flags(rl)
    return parser


def _reward_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--length-budget", type=_positive_int, default=256)
    p.add_argument("--length-floor", type=float, default=-1.0)
    p.add_argument("--partial-credit", type=_unit_float, default=0.5)


# helpers ---------------------------------------------------------------------


def _header(args: argparse.Namespace) -> str:
    settings = {
        k: (str(v) if isinstance(v, (Path, datetime)) else v)
        for k, v in sorted(vars(args).items())
        if k != "verbose"
    }
    return "# hybrid-dsl run " + json.dumps(settings, sort_keys=True)


def _render(obj: Any, pretty: bool) -> str:
    if pretty and isinstance(obj, dict) and all(not isinstance(v, (dict, list)) for v in obj.values()):
        width = max((len(k) for k in obj), default=0)
        return "\n".join(f"{k:<{width}}  {v:.4f}" if isinstance(v, float) else f"{k:<{width}}  {v}" for k, v in obj.items())
    return json.dumps(obj, indent=2 if pretty else None, ensure_ascii=False)


def _write(args: argparse.Namespace, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except ValueError as exc:
                raise DataError(f"{path}:{i}: invalid JSON ({exc})") from None
    return rows


def _context(args: argparse.Namespace) -> ExecutionContext:
    corpus = load_corpus(args.corpus)
    if getattr(args, "index", None):
        indexes, cfg = load_indexes(args.index)
        embedder = embedder_from_config(cfg)
        for name, fi in indexes.items():
            if fi.vectors.shape[0] and fi.vectors.shape[1] != embedder.dimension:
                raise IndexFormatError(f"index {name!r} dimension disagrees with its embedder")
    else:
        embedder = HashingEmbedder(dimension=args.dimension)
        indexes = build_index(corpus, embedder)
    return ExecutionContext(corpus, indexes, embedder, now=args.now, top_k=args.top_k, tau=args.tau)


def _program_text(raw: Any) -> str | None:
    """Wire program text from a dict, a JSON string or a tagged model output."""
    if raw is None:
        return None
    if isinstance(raw, dict):
        return json.dumps(raw)
    if isinstance(raw, str):
        return extract_tagged_query(raw) if OPEN_TAG in raw else raw
    raise DataError(f"unsupported program entry of type {type(raw).__name__}")


def _reward_config(args: argparse.Namespace) -> RewardConfig:
    try:
        return RewardConfig(
            length_budget=args.length_budget,
            length_penalty_floor=args.length_floor,
            partial_format_credit=args.partial_credit,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# subcommands -----------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> Any:
    if args.triplets < 0:
        raise ConfigError("--triplets must be >= 0")
    corpus = synthesize_corpus(args.seed, args.n, now=args.now, n_accounts=args.accounts)
    embedder = HashingEmbedder(dimension=args.dimension)
    config = TripletConfig(pool_size=args.pool_size, top_k=args.top_k, tau=args.tau)
    ctx = ExecutionContext(corpus, build_index(corpus, embedder), embedder, now=args.now, top_k=args.top_k, tau=args.tau)
    triplets = TripletFactory(corpus, embedder, config, ctx).generate(args.triplets, args.seed) if args.triplets else []
    stats = profile_dataset(triplets, corpus) if triplets else {"count": 0, "corpus_size": len(corpus)}
    stats["requested"] = args.triplets
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out / "corpus.jsonl")
    (out / "triplets.jsonl").write_text(dump_triplets(triplets), encoding="utf-8")
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return stats


def cmd_index(args: argparse.Namespace) -> Any:
    corpus = load_corpus(args.corpus)
    embedder = HashingEmbedder(dimension=args.dimension)
    indexes = build_index(corpus, embedder)
    args.index_out.parent.mkdir(parents=True, exist_ok=True)
    save_indexes(indexes, args.index_out, embedder.config())
    return {
        "index": str(args.index_out),
        "records": len(corpus),
        "fields": {name: len(fi.keys) for name, fi in indexes.items()},
    }


def cmd_exec(args: argparse.Namespace) -> Any:
    raw = args.dsl if args.dsl is not None else args.dsl_file.read_text(encoding="utf-8")
    program = parse_program(_program_text(raw))
    ctx = _context(args)
    return execute(program, ctx).to_json(timing=not args.no_timing)


def cmd_eval(args: argparse.Namespace) -> Any:
    ctx = _context(args)
    triplets = load_triplets(args.triplets.read_text(encoding="utf-8"))
    rows = _read_jsonl(args.programs)
    if not rows:
        raise AlignmentError(f"{args.programs} contains no programs")
    programs = []
    for row in rows:
        try:
            text = _program_text(row.get("program"))
        except DslError:
            text = None
        programs.append((row.get("query_id"), text))
    report = evaluate_run(triplets, programs, ctx, timing=not args.no_timing)
    report["latency_kind"] = "execution"
    return report


def cmd_reward(args: argparse.Namespace) -> Any:
    ctx = _context(args)
    config = _reward_config(args)
    lines = []
    for i, row in enumerate(_read_jsonl(args.input)):
        if "output" not in row or "reference" not in row:
            raise DataError(f"line {i + 1}: expected keys 'output' and 'reference'")
        sub = ctx.restricted(row["pool"]) if row.get("pool") else ctx
        breakdown = total_reward(row["output"], sub, row["reference"], config).to_json()
        if "query_id" in row:
            breakdown = {"query_id": row["query_id"], **breakdown}
        lines.append(json.dumps(breakdown))
    return "\n".join(lines)


def cmd_rl_demo(args: argparse.Namespace) -> Any:
    if args.group_size < 2:
        raise ConfigError("--group-size must be >= 2")
    ctx = _context(args)
    triplets = load_triplets(args.triplets.read_text(encoding="utf-8"))
    try:
        objective = ObjectiveConfig(args.clip_eps, args.clip_lo, args.clip_hi, args.kl_beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    config = RolloutConfig(args.group_size, args.batch_size, reward=_reward_config(args), objective=objective)
    env = RolloutEnv(ctx, triplets)
    if args.corruption_levels:
        if any(not 0.0 <= x <= 1.0 for x in args.corruption_levels):
            raise ConfigError("--corruption-levels must lie in [0, 1]")
        return corruption_sweep(env, args.corruption_levels, args.steps, config, args.seed)
    reports = run_rollouts(env, named_policy(args.policy, args.corruption_rate), args.steps, config, args.seed)
    for r in reports:
        failed = sum(f is not None for g in r["groups"] for f in g["failures"])
        if failed:
            log.info("step %d: %d failing candidates", r["step"], failed)
    return "\n".join(json.dumps(r) for r in reports)


COMMANDS = {
    "gen": cmd_gen,
    "index": cmd_index,
    "exec": cmd_exec,
    "eval": cmd_eval,
    "reward": cmd_reward,
    "rl-demo": cmd_rl_demo,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    print(_header(args), file=sys.stderr)
    try:
        result = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DslError as exc:
        print(f"parse error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ExecutionError as exc:
        print(f"execution error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EXEC
    except (
        CorpusError,
        DatagenError,
        IndexFormatError,
        DimensionMismatch,
        FieldMismatch,
        AlignmentError,
        EmptyBatch,
        EmptyReference,
        DataError,
        OSError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    _write(args, result if isinstance(result, str) else _render(result, args.pretty))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
