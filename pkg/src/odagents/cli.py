"""Command-line interface: serve, ingest, train, eval, cost, synth."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odagents",
        description="Operational data analytics agent platform",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the session HTTP service")
    p_serve.add_argument("--config", required=True, help="platform config file (YAML)")

    p_ingest = sub.add_parser("ingest", help="ingest a corpus into the retrieval index")
    p_ingest.add_argument("--config", help="platform config file (YAML)")
    p_ingest.add_argument("--corpus", help="corpus directory (overrides config)")
    p_ingest.add_argument("--index", help="output index file (overrides config)")
    _add_format(p_ingest)

    p_train = sub.add_parser("train", help="train the prediction models")
    p_train.add_argument("--config", help="platform config file (YAML)")
    p_train.add_argument("--data", help="training CSV (overrides config)")
    p_train.add_argument("--out", help="output model bundle file (overrides config)")
    p_train.add_argument("--seed", type=int, default=7)
    _add_format(p_train)

    p_eval = sub.add_parser("eval", help="run an evaluation suite")
    p_eval.add_argument("--config", required=True, help="platform config file (YAML)")
    p_eval.add_argument(
        "--suite", required=True, choices=["ir", "da", "pa_interp", "pa_regress", "routing", "cost"]
    )
    p_eval.add_argument("--data", help="dataset path (defaults to the config's eval_datasets entry)")
    _add_format(p_eval)

    p_cost = sub.add_parser("cost", help="token/cost report from a ledger file")
    p_cost.add_argument("--config", required=True, help="platform config file (YAML)")
    p_cost.add_argument("--ledger", help="ledger records JSON file")
    _add_format(p_cost)

    p_synth = sub.add_parser("synth", help="generate synthetic telemetry and training data")
    p_synth.add_argument("--jobs", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=7)
    p_synth.add_argument("--out", required=True, help="output directory")
    _add_format(p_synth)

    return parser


def _add_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=["table", "records"], default="table")


def _emit(payload: dict, as_records: bool, table_text: str) -> None:
    if as_records:
        print(json.dumps(payload, indent=1, sort_keys=True, default=str))
    else:
        print(table_text)


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(load_config(args.config))
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    from .retrieval import HashEmbedder, ingest_corpus

    corpus = args.corpus
    index_path = args.index
    if args.config:
        config = load_config(args.config)
        corpus = corpus or str(config.path("corpus") or "")
        index_path = index_path or str(config.path("index") or "")
    if not corpus or not index_path:
        print("error: --corpus and --index are required (directly or via --config)", file=sys.stderr)
        return 1
    index, stats = ingest_corpus(corpus, HashEmbedder())
    index.save(index_path)
    payload = {
        "chunks": stats.chunks,
        "tables": stats.tables,
        "images": stats.images,
        "skipped": stats.skipped,
        "index": index_path,
    }
    _emit(
        payload,
        args.format == "records",
        f"ingested {stats.chunks} chunks ({stats.tables} tables, {stats.images} images) "
        f"-> {index_path}"
        + (f"\nskipped: {len(stats.skipped)} file(s)" if stats.skipped else ""),
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from .prediction import TrainingConfig, load_training_rows, train
    from .synth import domain_descriptions

    data = args.data
    out = args.out
    if args.config:
        config = load_config(args.config)
        data = data or str(config.path("training_data") or "")
        out = out or str(config.path("model_bundle") or "")
    if not data or not out:
        print("error: --data and --out are required (directly or via --config)", file=sys.stderr)
        return 1
    rows = load_training_rows(data)
    bundle = train(rows, TrainingConfig(seed=args.seed), domain_descriptions())
    bundle.save(out)
    selection = bundle.selection()
    table = "\n".join(
        f"{key}: {sel['chosen']} (mlp rmse {sel['val_rmse_mlp']:.4g}, tree rmse {sel['val_rmse_tree']:.4g})"
        for key, sel in selection.items()
    )
    _emit({"bundle": out, "selection": selection}, args.format == "records", table)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import run_suite
    from .service import PlatformRuntime

    config = load_config(args.config)
    data = args.data or config.eval_datasets.get(args.suite)
    if not data and args.suite != "cost":
        print(f"error: no dataset for suite {args.suite!r}", file=sys.stderr)
        return 1
    if data and args.suite != "cost":
        data_path = Path(data)
        if not data_path.is_absolute():
            data_path = config.base_dir / data_path
        data = str(data_path)
    runtime = PlatformRuntime(config)
    report = run_suite(args.suite, data, runtime)
    _emit(report.to_records(), args.format == "records", report.format_table())
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    from .evaluation import run_suite
    from .service import PlatformRuntime

    config = load_config(args.config)
    runtime = PlatformRuntime(config)
    report = run_suite("cost", args.ledger, runtime)
    _emit(report.to_records(), args.format == "records", report.format_table())
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    from .synth import synth_telemetry

    paths = synth_telemetry(args.seed, args.jobs, args.out)
    _emit(
        dict(paths),
        args.format == "records",
        "\n".join(f"{k}: {v}" for k, v in paths.items()),
    )
    return 0


_COMMANDS = {
    "serve": cmd_serve,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "eval": cmd_eval,
    "cost": cmd_cost,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
