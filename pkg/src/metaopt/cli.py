"""Command-line harness for TSP experiments.

    metaopt gen --n 200 --seed 42 --out inst.json
    metaopt run sa  --instance inst.json --name o-sa2 --time-limit 3600 --persist
    metaopt run bnb --instance inst.json --name dfbef-la --strategy dfbef --type lookahead --persist
    metaopt report --format md

Runs with ``--persist`` save a checkpoint; the next run under the same name
resumes from it, provided the instance is unchanged. Every run appends a
record to ``runs.jsonl`` in the checkpoint root, which ``report`` tabulates.

Exit codes: 0 success, 1 internal error, 2 usage error, 3 checkpoint does not
match the current instance or engine.
"""
from __future__ import annotations

import argparse
import csv
import fcntl
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .annealing import AnnealConfig, SimulatedAnnealing
from .bnb import BnBConfig, BnBType, BranchAndBound, Strategy
from .checkpoint import (CheckpointStore, ParamsMismatch, persist_engine,
                         resume_engine, validate_name)
from .problem import ConfigError
from .tsp import TravelingSalesman, generate_instance, instance_bytes, load_instance

logger = logging.getLogger("metaopt")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISMATCH = 3

CKPT_ENV = "METAOPT_CKPT_DIR"
DEFAULT_CKPT_DIR = "checkpoints"
RUNS_FILE = "runs.jsonl"
DEFAULT_RESET_P = 1 / 1_500_000


class UsageError(Exception):
    pass


@dataclass
class RunRecord:
    name: str
    engine: str
    run_index: int
    initial_cost: Optional[float]
    best_cost: Optional[float]
    best_solution: Optional[list]
    wall_seconds: float
    status: str
    resumed: bool
    total_iterations: int
    config: dict = field(default_factory=dict)


def checkpoint_root(flag: Optional[str]) -> Path:
    return Path(flag or os.environ.get(CKPT_ENV) or DEFAULT_CKPT_DIR)


def read_records(root: Path) -> list[dict]:
    path = root / RUNS_FILE
    if not path.exists():
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except ValueError:
                logger.warning("%s:%d: skipping malformed run record", path, lineno)
    return records


def append_record(root: Path, record: RunRecord) -> None:
    root.mkdir(parents=True, exist_ok=True)
    with open(root / RUNS_FILE, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


@contextmanager
def name_lock(root: Path, name: str):
    root.mkdir(parents=True, exist_ok=True)
    with open(root / f".{name}.lock", "w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise RuntimeError(f"another run for {name!r} holds the lock in {root}") from None
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


# -- commands -----------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    if not args.sigma > 0:
        raise UsageError("--sigma must be positive")
    graph = generate_instance(args.n, args.seed, args.mu, args.sigma)
    out = Path(args.out)
    out.write_bytes(instance_bytes(graph) + b"\n")
    logger.info("wrote %d-city instance to %s", graph.n, out)
    return EXIT_OK


def _initial_arg(value: str):
    if value == "identity":
        return "identity"
    if value == "none":
        return None
    with open(value, encoding="utf-8") as fh:
        data = json.load(fh)
    return data["tour"] if isinstance(data, dict) else data


def _run(args, engine_name: str) -> int:
    root = checkpoint_root(args.checkpoint_dir)
    try:
        validate_name(args.name)
        graph = load_instance(args.instance)
        initial = _initial_arg(args.initial) if engine_name == "bnb" else "identity"
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read input: {exc}") from exc
    store = CheckpointStore(root)
    if engine_name == "sa":
        problem = TravelingSalesman(graph)
        engine_cls = SimulatedAnnealing
        config = AnnealConfig(n_iters=args.iters, reset_p=args.reset_p, time_limit=args.time_limit)
    else:
        problem = TravelingSalesman(graph, initial=initial)
        engine_cls = BranchAndBound
        config = BnBConfig(iters_limit=args.iters_limit, time_limit=args.time_limit,
                           bnb_type=args.type, strategy=args.strategy)

    with name_lock(root, args.name):
        try:
            engine = resume_engine(store, args.name, problem, engine_cls)
        except ConfigError as exc:
            raise ParamsMismatch(str(exc)) from exc
        resumed = engine is not None
        if engine is None:
            engine = engine_cls(problem, seed=args.seed)
        if engine_name == "sa":
            engine.ensure_started()
        else:
            try:
                engine.ensure_started(config.strategy)
            except ConfigError as exc:
                raise ParamsMismatch(str(exc)) from exc
        initial_cost = engine.best_cost

        started = time.perf_counter()
        if engine_name == "sa":
            engine.anneal(config)
        else:
            engine.solve(config)
        wall = time.perf_counter() - started

        if args.persist:
            persist_engine(store, args.name, engine)
        previous = sum(1 for r in read_records(root) if r.get("name") == args.name)
        echo = {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(config).items()}
        echo["seed"] = args.seed
        if engine_name == "bnb":
            echo["initial"] = args.initial
        record = RunRecord(
            name=args.name, engine=engine_name, run_index=previous + 1,
            initial_cost=initial_cost, best_cost=engine.best_cost,
            best_solution=engine.best_solution, wall_seconds=wall,
            status=getattr(engine.status, "value", engine.status), resumed=resumed,
            total_iterations=engine.state.total_iterations, config=echo)
        append_record(root, record)
    print(json.dumps(asdict(record), sort_keys=True))
    return EXIT_OK


def cmd_run_sa(args) -> int:
    return _run(args, "sa")


def cmd_run_bnb(args) -> int:
    return _run(args, "bnb")


def _fmt(cost) -> str:
    return "-" if cost is None else f"{cost:.3f}"


def report_table(records: list[dict], names: Optional[list[str]] = None) -> list[list[str]]:
    """Rows of the result table (header first): name, initial cost, one column per run."""
    by_name: dict[str, list[dict]] = {}
    for rec in records:
        by_name.setdefault(rec["name"], []).append(rec)
    if names is None:
        names = list(by_name)
    selected = []
    for name in names:
        if name in by_name:
            selected.append(name)
        else:
            logger.warning("no run records for %r; omitting it", name)
    width = max((len(by_name[n]) for n in selected), default=0)
    rows = [["Opt. Alg.", "Init."] + [f"Run {i}" for i in range(1, width + 1)]]
    for name in selected:
        runs = sorted(by_name[name], key=lambda r: r["run_index"])
        costs = [_fmt(r["best_cost"]) for r in runs]
        rows.append([name, _fmt(runs[0]["initial_cost"])] + costs + ["-"] * (width - len(costs)))
    return rows


def cmd_report(args) -> int:
    root = checkpoint_root(args.checkpoint_dir)
    rows = report_table(read_records(root), args.names or None)
    if args.format == "csv":
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerows(rows)
    else:
        header, body = rows[0], rows[1:]
        print("| " + " | ".join(header) + " |")
        print("|" + "|".join("---" for _ in header) + "|")
        for row in body:
            print("| " + " | ".join(row) + " |")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a probability in [0, 1], got {text}")
    return value


def _add_run_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", required=True, help="instance JSON file")
    p.add_argument("--name", required=True, help="algorithm/run name; keys checkpoints and records")
    p.add_argument("--time-limit", type=_positive_float, default=None, help="seconds (default: none)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-dir", default=None,
                   help=f"checkpoint root (default: ${CKPT_ENV} or ./{DEFAULT_CKPT_DIR})")
    p.add_argument("--persist", action="store_true", help="save a checkpoint after the run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metaopt", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a Gaussian Euclidean TSP instance")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--mu", type=float, default=0.0)
    gen.add_argument("--sigma", type=float, default=5.0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="run an engine on an instance")
    engines = run.add_subparsers(dest="engine", required=True)

    sa = engines.add_parser("sa", help="simulated annealing")
    _add_run_common(sa)
    sa.add_argument("--iters", type=int, default=1_000_000)
    sa.add_argument("--reset-p", type=_probability, default=DEFAULT_RESET_P)
    sa.set_defaults(func=cmd_run_sa)

    bnb = engines.add_parser("bnb", help="branch and bound")
    _add_run_common(bnb)
    bnb.add_argument("--strategy", choices=[s.value for s in Strategy], default="dfbef")
    bnb.add_argument("--type", choices=[t.value for t in BnBType], default="lookahead")
    bnb.add_argument("--iters-limit", type=int, default=1_000_000)
    bnb.add_argument("--initial", default="identity",
                     help="'identity', 'none', or a JSON file holding a tour")
    bnb.set_defaults(func=cmd_run_bnb)

    report = sub.add_parser("report", help="tabulate run records")
    report.add_argument("--checkpoint-dir", default=None)
    report.add_argument("--names", nargs="*", default=None)
    report.add_argument("--format", choices=["csv", "md"], default="md")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"metaopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParamsMismatch as exc:
        print(f"metaopt: checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print(f"metaopt: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
