"""Command-line entry point: ``ngnn <command> [options]``.

On failure a single line ``error[<category>]: <message>`` goes to stderr and
the exit status is nonzero (2 for configuration problems, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import benchmark as bench_mod
from .checkpoint import file_digest, load_checkpoint, read_header
from .config import COMMAND_OPTIONS, OPTIONS, RunConfig, load_config_file, resolve
from .corpus import item_pool, read_corpus, split_corpus
from .errors import ConfigError, NGNNError, ValidationError
from .evaluation import (auc, build_auc_set, build_fitb_set, fitb_accuracy, model_scorer, read_auc_set,
                         read_fitb_set, report, set_digest, write_set)
from .features import build_text_vocab, load_dense_features, text_features, write_dense_features
from .graph import build_graph, build_vocab, filter_corpus, write_vocab
from .seeding import stream
from .synthetic import generate
from .training import train

log = logging.getLogger("ngnn")

DESCRIPTIONS = {
    "gen-synth": "generate a synthetic corpus with a planted compatibility oracle",
    "build-graph": "build the category vocabulary and weighted co-occurrence graph",
    "train": "train a compatibility model with the pairwise ranking objective",
    "eval-fitb": "fill-in-the-blank accuracy of a checkpoint",
    "eval-auc": "pairwise compatibility AUC of a checkpoint",
    "bench": "parameter-count and runtime scaling on complete graphs",
    "inspect-checkpoint": "print a checkpoint's configuration and tensor table",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ngnn", description="Outfit compatibility with node-wise graph networks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for cmd, names in COMMAND_OPTIONS.items():
        p = sub.add_parser(cmd, help=DESCRIPTIONS[cmd], description=DESCRIPTIONS[cmd])
        p.add_argument("--config", help="YAML file of option values (flags override it)")
        for name in names:
            opt = OPTIONS[name]
            flag = "--" + name.replace("_", "-")
            kwargs = {"dest": name, "default": None, "help": f"{opt.help} (default: {opt.default})"}
            if opt.type is bool:
                kwargs["action"] = argparse.BooleanOptionalAction
            else:
                kwargs["type"] = opt.type
                if opt.choices:
                    kwargs["choices"] = opt.choices
            p.add_argument(flag, **kwargs)
    return parser


def _load_features(cfg: RunConfig, channels) -> dict:
    feats = {}
    for ch in channels:
        path = cfg.values.get(f"{ch}_features")
        if path is None:
            raise ConfigError(f"--{ch}-features is required for the {ch} channel")
        feats[ch] = load_dense_features(path)
        if feats[ch].modality != ch:
            raise ValidationError(f"{path} holds {feats[ch].modality} features, expected {ch}")
    return feats


def cmd_gen_synth(cfg: RunConfig) -> dict:
    data = generate(cfg.world_config(), cfg.seed)
    paths = data.write(cfg.out_dir)
    return {k: str(v) for k, v in paths.items()}


def cmd_build_graph(cfg: RunConfig) -> dict:
    raw = read_corpus(cfg.corpus)
    vocab = build_vocab(raw, cfg.keep_threshold)
    corpus = filter_corpus(raw, vocab, cfg.min_size, cfg.max_size)
    train_part = split_corpus(corpus)["train"]
    graph = build_graph(train_part, vocab)
    out = Path(cfg.out_dir)
    write_vocab(vocab, out / "categories.tsv")
    graph.write_edges(out / "graph.tsv")
    result = {"categories": len(vocab), "edges": graph.num_edges, "outfits": len(corpus),
              "graph_hash": graph.digest(), "files": [str(out / "categories.tsv"), str(out / "graph.tsv")]}
    if cfg.text_features:
        items = item_pool(corpus)
        tv = build_text_vocab(it.title for it in items)
        tv.write(out / "text_vocab.tsv")
        write_dense_features(text_features(items, tv), out / "textual_titles.feat")
        result["text_vocab"] = len(tv)
        result["files"] += [str(out / "text_vocab.tsv"), str(out / "textual_titles.feat")]
    return result


def cmd_train(cfg: RunConfig) -> dict:
    model_cfg = cfg.model_config()
    train_cfg = cfg.train_config()
    raw = read_corpus(cfg.corpus)
    vocab = build_vocab(raw, cfg.keep_threshold)
    parts = split_corpus(filter_corpus(raw, vocab, cfg.min_size, cfg.max_size))
    graph = build_graph(parts["train"], vocab)
    feats = _load_features(cfg, model_cfg.channels)
    out = Path(cfg.out_dir)
    t0 = time.monotonic()
    result = train(parts["train"], parts["valid"], graph, feats, model_cfg, train_cfg,
                   checkpoint_path=cfg.checkpoint, log_path=out / "metrics.jsonl")
    from .plotting import plot_training
    plot_training(result.history, out / "training.png")
    return {
        "checkpoint": cfg.checkpoint,
        "checkpoint_hash": file_digest(cfg.checkpoint),
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "stopped_early": result.stopped_early,
        "best_valid_loss": min(h.valid_loss for h in result.history),
        "wall_time": time.monotonic() - t0,
    }


def _eval_inputs(cfg: RunConfig):
    model, header = load_checkpoint(cfg.checkpoint)
    raw = read_corpus(cfg.corpus)
    corpus = filter_corpus(raw, model.graph.vocab, cfg.min_size, cfg.max_size)
    feats = _load_features(cfg, model.config.channels)
    return model, corpus, feats


def _cmd_eval(cfg: RunConfig, metric: str) -> dict:
    model, corpus, feats = _eval_inputs(cfg)
    test = split_corpus(corpus)["test"]
    pool = item_pool(corpus)
    if metric == "fitb":
        records = read_fitb_set(cfg.import_set) if cfg.import_set else build_fitb_set(
            test, pool, stream(cfg.seed, "fitb"), same_category=cfg.same_category)
    else:
        records = read_auc_set(cfg.import_set) if cfg.import_set else build_auc_set(test, pool, stream(cfg.seed, "auc"))
    if cfg.export_set:
        write_set(records, cfg.export_set)
    scorer = model_scorer(model, feats)
    result = fitb_accuracy(records, scorer) if metric == "fitb" else auc(records, scorer)
    rep = report(result, None if cfg.import_set else cfg.seed, file_digest(cfg.checkpoint), set_digest(records))
    path = Path(cfg.out_dir) / f"eval_{metric}.json"
    path.write_text(json.dumps(rep, sort_keys=True, indent=2) + "\n")
    return rep


def cmd_eval_fitb(cfg: RunConfig) -> dict:
    return _cmd_eval(cfg, "fitb")


def cmd_eval_auc(cfg: RunConfig) -> dict:
    return _cmd_eval(cfg, "auc")


def cmd_bench(cfg: RunConfig) -> dict:
    records = bench_mod.run_bench(range(cfg.n_min, cfg.n_max + 1), cfg.bench_d, cfg.bench_f, cfg.repetitions,
                                  cfg.seed)
    out = Path(cfg.out_dir)
    bench_mod.write_records(records, out / "bench.tsv")
    bench_mod.write_gnuplot(records, out / "bench.dat")
    fits = {}
    for field in ("param_count", "updated_params", "median_time"):
        fits[field] = {v: {"verdict": f.verdict, "r2_linear": f.r2_linear, "r2_quadratic": f.r2_quadratic}
                       for v, f in bench_mod.fit_scaling(records, field).items()}
    (out / "scaling.json").write_text(json.dumps(fits, sort_keys=True, indent=2) + "\n")
    from .plotting import plot_scaling
    plot_scaling(records, out / "bench.png")
    return {"records": len(records), "fits": fits,
            "files": [str(out / n) for n in ("bench.tsv", "bench.dat", "scaling.json", "bench.png")]}


def cmd_inspect_checkpoint(cfg: RunConfig) -> dict:
    header, _ = read_header(cfg.checkpoint)
    model, _ = load_checkpoint(cfg.checkpoint)
    return {
        "config": header["config"],
        "vocab_hash": header["vocab_hash"],
        "graph_hash": header["graph_hash"],
        "categories": len(header["categories"]),
        "parameters": model.num_parameters(),
        "tensors": {t["name"]: t["shape"] for t in header["tensors"]},
        "extra": header["extra"],
        "sha256": file_digest(cfg.checkpoint),
    }


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "eval-fitb": cmd_eval_fitb,
    "eval-auc": cmd_eval_auc,
    "bench": cmd_bench,
    "inspect-checkpoint": cmd_inspect_checkpoint,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k in OPTIONS}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = resolve(args.command, flags, file_values)
        result = COMMANDS[args.command](cfg)
    except NGNNError as exc:
        msg = " ".join(str(exc).split())
        print(f"error[{exc.category}]: {msg}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except OSError as exc:
        print(f"error[io]: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
