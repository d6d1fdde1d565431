"""Command line entry point.

Subcommands cover the whole workflow: synthesize or transform data, extract
concept mappings, train, evaluate, explain single users, audit parameter
counts, and sweep encoder depth. Commands that write delimited output
render a matplotlib figure next to it. Exit codes: 0 success, 1 domain or
I/O failure (one line on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import data as data_io
from .classifier import load_model, save_model
from .errors import HankitError
from .explain import REPORT_FORMATS, build_report, emit_report
from .figures import render_attention_figure, render_history_figure, render_sweep_figure
from .mcm import Lexicon, Taxonomy, extract_user_mcms
from .training import (
    TrainConfig,
    TrainingError,
    evaluate,
    load_config_file,
    param_audit,
    train,
    write_history,
)

_CONFIG_FLAGS = {
    "d": "d",
    "layers": "layers",
    "batch": "batch_size",
    "lr": "learning_rate",
    "wd": "weight_decay",
    "dropout": "dropout",
    "epochs": "epochs",
    "seed": "seed",
    "cap": "cap",
}


def _add_train_flags(p: argparse.ArgumentParser, with_layers: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    if with_layers:
        p.add_argument("--layers", type=int, default=None, help="encoder layers (default 2)")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (default 10)")
    p.add_argument("--batch", type=int, default=None, help="batch size (default 64)")
    p.add_argument("--lr", type=float, default=None, help="learning rate (default 0.0001)")
    p.add_argument("--wd", type=float, default=None, help="decoupled weight decay (default 0.00001)")
    p.add_argument("--dropout", type=float, default=None, help="dropout rate (default 0.2)")
    p.add_argument("--cap", type=int, default=None, help="max tweets/mappings per user (default 200)")


def _assemble_config(args, d: int) -> TrainConfig:
    config = TrainConfig(d=d)
    if getattr(args, "config", None):
        config = replace(config, **load_config_file(args.config))
    for flag, field in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            config = replace(config, **{field: value})
    if getattr(args, "ablate_mcm", False):
        config = replace(config, ablate_mcm=True)
    if config.d != d:
        raise TrainingError(f"--d {config.d} does not match dataset width {d}")
    return config


def _sibling(path: str, suffix: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + suffix


def _print_metrics(tag: str, metrics) -> None:
    print(
        f"{tag} precision={metrics.precision:.4f} recall={metrics.recall:.4f} "
        f"f1={metrics.f1:.4f} accuracy={metrics.accuracy:.4f}"
    )


def cmd_synth(args) -> int:
    dataset = data_io.synth_generate(
        args.users, args.d, args.separation, mcm_signal=args.mcm_signal, seed=args.seed
    )
    data_io.save_dataset(dataset, args.out)
    print(f"wrote {len(dataset.users)} users (d={dataset.d}) -> {args.out}")
    return 0


def cmd_imdl(args) -> int:
    dataset = data_io.load_dataset(args.infile)
    out = data_io.imdl_transform(dataset)
    data_io.save_dataset(out, args.out)
    print(f"kept {len(out.users)}/{len(dataset.users)} users after cue removal -> {args.out}")
    return 0


def cmd_mcm_extract(args) -> int:
    users = data_io.load_users_text(args.infile)
    lexicon = Lexicon.load(args.lexicon)
    taxonomy = Taxonomy.load(args.taxonomy)
    total = 0
    for user in users:
        token_lists = []
        kept_texts = []
        for tweet in user["tweets"]:
            toks = data_io.preprocess_tweet(tweet)
            if toks is None:
                continue
            token_lists.append(toks)
            kept_texts.append(" ".join(toks))
        mappings = extract_user_mcms(token_lists, lexicon, taxonomy, user_id=user["user_id"])
        user["tweets"] = kept_texts
        user["mcms"] = [m.rendered for m in mappings]
        total += len(mappings)
    data_io.save_users_text(users, args.out)
    print(f"extracted {total} mappings over {len(users)} users -> {args.out}")
    return 0


def cmd_train(args) -> int:
    dataset = data_io.load_dataset(args.infile)
    if args.imdl:
        dataset = data_io.imdl_transform(dataset)
    config = _assemble_config(args, dataset.d)
    train_set, val_set, test_set = data_io.split(dataset, config.seed)
    model, history = train(train_set, val_set, config)
    save_model(model, args.out)
    history_path = args.history or _sibling(args.out, ".history.csv")
    write_history(history, history_path)
    figure_path = _sibling(history_path, ".png")
    render_history_figure(history, figure_path)
    print(f"trained on {len(train_set.users)} users (val {len(val_set.users)}, test {len(test_set.users)})")
    if val_set.users:
        _print_metrics("val ", evaluate(model, val_set))
    if test_set.users:
        _print_metrics("test", evaluate(model, test_set))
    print(f"model -> {args.out}")
    print(f"history -> {history_path}")
    print(f"figure -> {figure_path}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    dataset = data_io.load_dataset(args.infile)
    if args.split != "all":
        parts = dict(zip(("train", "val", "test"), data_io.split(dataset, args.seed)))
        dataset = parts[args.split]
    metrics = evaluate(model, dataset)
    _print_metrics(args.split, metrics)
    return 0


def cmd_explain(args) -> int:
    model = load_model(args.model)
    dataset = data_io.load_dataset(args.infile)
    by_id = {u.user_id: u for u in dataset.users}
    if args.user not in by_id:
        raise HankitError(f"user {args.user!r} not found in {args.infile}")
    report = build_report(model, by_id[args.user], k=args.k)
    emit_report(report, args.format, args.out)
    figure_path = _sibling(args.out, ".png")
    render_attention_figure(report, figure_path)
    print(f"report ({args.format}) -> {args.out}")
    print(f"figure -> {figure_path}")
    return 0


def cmd_param_audit(args) -> int:
    for kind, count, label in param_audit(args.d, heads=args.heads, d_ff=args.d_ff):
        print(f"{kind}\t{count}\t{label}")
    return 0


def cmd_layer_sweep(args) -> int:
    dataset = data_io.load_dataset(args.infile)
    try:
        depths = [int(part) for part in args.layers.split(",") if part.strip()]
    except ValueError:
        raise TrainingError(f"--layers must be a comma-separated list of ints, got {args.layers!r}") from None
    if not depths:
        raise TrainingError("--layers selected no depths")
    args.layers = None  # consumed above; keep _assemble_config from seeing the list
    base_seed = args.seed if args.seed is not None else 0
    rows: list[tuple[int, int, float]] = []
    for run in range(args.runs):
        seed = base_seed + run
        train_set, val_set, _ = data_io.split(dataset, seed)
        for depth in depths:
            config = _assemble_config(args, dataset.d)
            config = replace(config, layers=depth, seed=seed)
            model, _ = train(train_set, val_set, config)
            f1 = evaluate(model, val_set).f1
            rows.append((depth, seed, f1))
            print(f"layers={depth} seed={seed} val_f1={f1:.4f}")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("layers,seed,val_f1\n")
        for depth, seed, f1 in rows:
            fh.write(f"{depth},{seed},{f1!r}\n")
    figure_path = _sibling(args.out, ".png")
    render_sweep_figure(rows, figure_path)
    print(f"sweep -> {args.out}")
    print(f"figure -> {figure_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hankit",
        description="Explainable attention classifier over per-tweet and concept-mapping embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-class dataset")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--users", type=int, default=400, help="number of users (default 400)")
    p.add_argument("--d", type=int, default=16, help="embedding width (default 16)")
    p.add_argument("--separation", type=float, default=4.0, help="class mean separation (default 4)")
    p.add_argument("--mcm-signal", action="store_true", help="give mapping rows the class signal")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mcm-extract", help="extract concept mappings into a users file")
    p.add_argument("--in", dest="infile", required=True, help="users JSONL (no embeddings)")
    p.add_argument("--lexicon", required=True, help="metaphor lexicon TSV")
    p.add_argument("--taxonomy", required=True, help="concept taxonomy TSV")
    p.add_argument("--out", required=True, help="users JSONL to write")
    p.set_defaults(func=cmd_mcm_extract)

    p = sub.add_parser("train", help="split 60/20/20, train, save model and history")
    p.add_argument("--in", dest="infile", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--history", default=None, help="history CSV path (default: next to model)")
    p.add_argument("--config", default=None, help="key=value file overriding training defaults")
    p.add_argument("--ablate-mcm", action="store_true", help="drop the mapping branch")
    p.add_argument("--imdl", action="store_true", help="apply cue removal before training")
    p.add_argument("--d", type=int, default=None, help="expected embedding width (checked against data)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--in", dest="infile", required=True, help="dataset file")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--split", choices=("all", "train", "val", "test"), default="all",
                   help="evaluate the whole file or one split of it (default all)")
    p.add_argument("--seed", type=int, default=0, help="split seed (default 0)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="rank one user's tweets and mappings by attention")
    p.add_argument("--in", dest="infile", required=True, help="dataset file")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--user", required=True, help="user id to explain")
    p.add_argument("--k", type=int, default=5, help="items per branch (default 5)")
    p.add_argument("--format", choices=REPORT_FORMATS, default="text", help="report format (default text)")
    p.add_argument("--out", required=True, help="report file to write")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("param-audit", help="closed-form per-layer parameter counts")
    p.add_argument("--d", type=int, default=768, help="embedding width (default 768)")
    p.add_argument("--heads", type=int, default=8, help="transformer heads (default 8)")
    p.add_argument("--d-ff", type=int, default=None, help="transformer FFN width (default d)")
    p.set_defaults(func=cmd_param_audit)

    p = sub.add_parser("layer-sweep", help="train at several depths over paired seeds")
    p.add_argument("--in", dest="infile", required=True, help="dataset file")
    p.add_argument("--layers", default="1,2,4,8", help="comma-separated depths (default 1,2,4,8)")
    p.add_argument("--runs", type=int, default=5, help="seeds per depth (default 5)")
    p.add_argument("--out", required=True, help="sweep CSV to write")
    p.add_argument("--config", default=None, help="key=value file overriding training defaults")
    _add_train_flags(p, with_layers=False)
    p.set_defaults(func=cmd_layer_sweep)

    p = sub.add_parser("imdl", help="apply the cue-removal transform to a dataset")
    p.add_argument("--in", dest="infile", required=True, help="dataset file")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.set_defaults(func=cmd_imdl)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return int(args.func(args) or 0)
    except (HankitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))
