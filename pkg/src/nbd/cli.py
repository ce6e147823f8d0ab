"""Command line: generate, train, eval, bench, reproduce.

Exit codes: 0 success, 1 runtime failure (NaN, IO), 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .checkpoint import load_checkpoint, save_checkpoint
from .datagen import io as dio
from .divergences import DivergenceModel, bregman
from .icnn import IcnnConfig, init_icnn
from .train import TrainingDiverged, write_trace_csv

log = logging.getLogger("nbd")

THREADS_ENV = "NBD_NUM_THREADS"
DATA_FILE = "data.jsonl"
MANIFEST_FILE = "manifest.json"


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, task: bool = True) -> None:
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", type=Path, help="output directory")
    if task:
        p.add_argument("--task", choices=ex.TASKS, help="overrides the config task")
    p.add_argument("--desk-scale", dest="desk_scale", action=argparse.BooleanOptionalAction, default=True,
                   help="small problem sizes (default on)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="config override such as data.family=exponential (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded dataset as JSON lines plus manifest")
    _common(g)

    t = sub.add_parser("train", help="train a model on a generated dataset")
    _common(t)
    t.add_argument("--data", type=Path, required=True, help="dataset directory written by generate")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _common(e)
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--data", type=Path, required=True)

    b = sub.add_parser("bench", help="time single, batched and pairwise divergence evaluation")
    b.add_argument("--sizes", default="10,100,1000", help="comma-separated batch sizes")
    b.add_argument("--dim", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", type=Path)

    r = sub.add_parser("reproduce", help="run a stored desk-scale experiment end to end")
    r.add_argument("name", help="experiment name, or 'list'")
    r.add_argument("--out", type=Path, default=Path("runs"))
    r.add_argument("--seed", type=int, action="append", help="restrict to these seeds (repeatable)")
    r.add_argument("--desk-scale", dest="desk_scale", action=argparse.BooleanOptionalAction, default=True)
    return parser


def _resolve(args) -> dict:
    file_cfg = ex.load_config_file(args.config) if args.config else {}
    overrides = {}
    for text in args.overrides:
        overrides = ex.deep_merge(overrides, ex.parse_override(text))
    return ex.resolve_config(file_cfg, task=args.task, seed=args.seed, desk_scale=args.desk_scale, overrides=overrides)


def _out_dir(args, default: str) -> Path:
    out = args.out or Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    data = ex.build_data(cfg)
    out = _out_dir(args, "data")
    records = []
    if data.train_points is not None and cfg["task"] in ("cluster", "rank"):
        records += list(dio.point_records(data.train_points, "train"))
    if data.test_points is not None and cfg["task"] in ("cluster", "rank"):
        records += list(dio.point_records(data.test_points, "test"))
    if data.train is not None:
        records += list(dio.pair_records(data.train, "train"))
        records += list(dio.pair_records(data.test, "test"))
    digest = dio.write_jsonl(records, out / DATA_FILE)
    dio.write_manifest(out / MANIFEST_FILE, data.spec, cfg["seed"], digest, len(records), {"task": cfg["task"], "config": cfg})
    print(f"wrote {len(records)} records to {out / DATA_FILE} (sha256 {digest[:12]})")
    return 0


def _load_data(path: Path) -> tuple[ex.TaskData, dict]:
    if not (path / DATA_FILE).is_file() or not (path / MANIFEST_FILE).is_file():
        raise UsageError(f"{path} is not a dataset directory (expected {DATA_FILE} and {MANIFEST_FILE})")
    manifest = dio.read_manifest(path / MANIFEST_FILE)
    records = dio.read_jsonl(path / DATA_FILE)
    if records and "x" in records[0]:
        data = ex.TaskData(train_points=dio.load_points(records, "train"), test_points=dio.load_points(records, "test"))
        if len(data.train_points) == 0:
            data.train_points = None
    else:
        data = ex.TaskData(dio.load_pairs(records, "train"), dio.load_pairs(records, "test"))
    data.spec = manifest.get("spec")
    return data, manifest


def _dataset_config(args, manifest: dict) -> dict:
    """The config stored with the dataset, under file/flag overrides."""
    stored = manifest.get("config", {})
    file_cfg = ex.load_config_file(args.config) if args.config else {}
    overrides = {}
    for text in args.overrides:
        overrides = ex.deep_merge(overrides, ex.parse_override(text))
    merged = ex.deep_merge(ex.deep_merge(stored, file_cfg), overrides)
    return ex.resolve_config(merged, task=args.task, seed=args.seed, desk_scale=args.desk_scale)


def cmd_train(args) -> int:
    data, manifest = _load_data(args.data)
    cfg = _dataset_config(args, manifest)
    model = ex.build_model(cfg, data.input_dim, cfg["seed"])
    trace, train_loss = ex.fit(cfg, model, data)
    out = _out_dir(args, "run")
    save_checkpoint(model, out / "checkpoint.json", {"config": cfg, "train_loss": train_loss, "data_sha256": manifest.get("sha256")})
    write_trace_csv(trace, out / "trace.csv")
    print(f"trained {ex.model_name(cfg)}: final train loss {train_loss!r}; checkpoint {out / 'checkpoint.json'}")
    return 0


def cmd_eval(args) -> int:
    data, manifest = _load_data(args.data)
    if not args.checkpoint.is_file():
        raise UsageError(f"checkpoint {args.checkpoint} not found")
    model, meta = load_checkpoint(args.checkpoint)
    cfg = ex.deep_merge(manifest.get("config", {}), {"model": meta.get("config", {}).get("model", {})})
    cfg = ex.resolve_config(cfg, task=args.task, seed=args.seed)
    metrics = ex.evaluate(cfg, model, data)
    row = ex.metrics_row(cfg, ex.model_name(cfg), metrics, meta.get("train_loss"))
    out = _out_dir(args, "eval")
    ex.write_metrics_csv([row], out / "metrics.csv")
    summary = ", ".join(f"{k}={row[k]}" for k in ex.METRIC_COLUMNS[3:] if row[k] != "")
    print(f"{row['dataset']} {row['model']} seed={row['seed']}: {summary}")
    return 0


def _time(fn, repeat: int = 3) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cmd_bench(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--sizes must be comma-separated integers: {exc}") from exc
    if not sizes or min(sizes) < 1:
        raise UsageError("--sizes needs at least one positive integer")
    rng = np.random.default_rng(args.seed)
    model = DivergenceModel(init_icnn(IcnnConfig(args.dim), args.seed))
    bound = model.bind(None)
    rows = []
    for n in sizes:
        x = rng.standard_normal((n, args.dim))
        y = rng.standard_normal((n, args.dim))
        single = _time(lambda: bregman(bound.generator, x[0], y[0]))
        batched = _time(lambda: bound.divergence(x, y))
        pairwise = _time(lambda: bound.pairwise(x, y))
        rows.append({"size": n, "single_s": single, "batched_s": batched, "pairwise_s": pairwise})
        print(f"n={n}: single {single:.2e}s batched {batched:.2e}s pairwise {pairwise:.2e}s")
    out = _out_dir(args, "bench")
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["size", "single_s", "batched_s", "pairwise_s"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0


def cmd_reproduce(args) -> int:
    if args.name == "list":
        print("\n".join(ex.suite_names()))
        return 0
    if not args.desk_scale:
        log.warning("reproduce runs the stored desk-scale configs; --no-desk-scale is ignored")
    names = ex.suite_names() if args.name == "all" else [args.name]
    for name in names:
        path = ex.run_suite(name, args.out, args.seed)
        print(f"{name}: wrote {path}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "reproduce": cmd_reproduce,
}


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        limiter = _thread_limit()
        try:
            return COMMANDS[args.command](args)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except (UsageError, ex.ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"nbd: error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, FloatingPointError, OSError, ValueError) as exc:
        print(f"nbd: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
