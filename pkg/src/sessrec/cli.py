"""Command-line entry point for corpus synthesis, training, and evaluation."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import autodiff as ad
from .ingest import (DataError, Example, augment_prefixes, build_corpus,
                     load_events, make_corpus, split_by_day, Corpus)
from .metrics import DEFAULT_PHI_STAR_GRID, norm_popularity_report
from .model import ModelConfig, forward, init_parameters, load_checkpoint, save_checkpoint
from .onlinesim import run_online
from .synth import SynthConfig, gen_sessions, write_events_csv, write_transition_csv
from .train import TrainConfig, evaluate_model, make_batch, train_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

ENV_PREFIX = "SESSREC"

CONFIG_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "synth": SynthConfig}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_USAGE):
        super().__init__(message)
        self.exit_code = exit_code


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def load_run_config(path: str | None) -> dict:
    """Layered config: file values, then SESSREC_<SECTION>_<KEY> env overrides.

    Unknown sections or keys are rejected.
    """
    config: dict[str, dict] = {name: {} for name in CONFIG_SECTIONS}
    if path:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise CliError(f"config file {path} must be a mapping of sections")
        for section, values in raw.items():
            if section not in CONFIG_SECTIONS:
                raise CliError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise CliError(f"config section {section!r} must be a mapping")
            config[section].update(values)
    for key, value in os.environ.items():
        if not key.startswith(ENV_PREFIX + "_"):
            continue
        parts = key[len(ENV_PREFIX) + 1:].lower().split("_", 1)
        if len(parts) != 2 or parts[0] not in CONFIG_SECTIONS:
            continue
        config[parts[0]][parts[1]] = _coerce(value)
    # validate keys against the dataclasses
    for section, cls in CONFIG_SECTIONS.items():
        known = set(cls.__dataclass_fields__)
        unknown = set(config[section]) - known
        if unknown:
            raise CliError(f"unknown keys in section {section!r}: {sorted(unknown)}")
    return config


def _model_config(config: dict, args) -> ModelConfig:
    values = dict(config["model"])
    if args.variant is not None:
        values["variant"] = args.variant
    for flag in ("d", "L", "tau", "sigma_scale", "dropout_p"):
        v = getattr(args, flag, None)
        if v is not None:
            values[flag] = v
    variant = values.pop("variant", "niser+")
    return ModelConfig.for_variant(variant, **values)


def _train_config(config: dict, args) -> TrainConfig:
    values = dict(config["train"])
    for flag in ("lr", "batch_size", "max_epochs", "patience", "seed", "n_seeds"):
        v = getattr(args, flag, None)
        if v is not None:
            values[flag] = v
    return TrainConfig(**values)


def _file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _lineage(args, config_snapshot: dict, seed, corpus_path=None) -> dict:
    return {
        "build": f"sessrec-{__version__}",
        "command": args.command,
        "config": config_snapshot,
        "seed": seed,
        "corpus_sha256": _file_sha256(corpus_path) if corpus_path else None,
    }


def _write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def _examples_for(sessions, cap):
    return [ex for s in sessions if len(s.items) >= 2 for ex in augment_prefixes(s, cap)]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, config):
    synth_cfg = SynthConfig(**{**config["synth"],
                               **({"seed": args.seed} if args.seed is not None else {})})
    sessions, transition = gen_sessions(synth_cfg)
    write_events_csv(sessions, args.out)
    if args.transition_out:
        write_transition_csv(transition, args.transition_out)
    print(f"wrote {len(sessions)} sessions to {args.out}")
    return EXIT_OK


def cmd_ingest(args, config):
    events, report = load_events(args.events, args.format)
    corpus = make_corpus(events, min_item_support=args.min_item_support,
                         min_session_len=args.min_session_len,
                         test_fraction=args.test_fraction,
                         val_fraction=args.val_fraction)
    corpus.save(args.out)
    print(f"events={report.n_events} malformed={report.n_malformed} "
          f"items={corpus.vocab.size} train={len(corpus.train_sessions)} "
          f"val={len(corpus.val_sessions)} test={len(corpus.test_sessions)}")
    return EXIT_OK


def cmd_train(args, config):
    corpus = Corpus.load(args.corpus)
    model_cfg = _model_config(config, args)
    train_cfg = _train_config(config, args)
    cap = 10 if model_cfg.capped else model_cfg.L
    train_ex = _examples_for(corpus.train_sessions, cap)
    val_ex = _examples_for(corpus.val_sessions, cap)

    params, trace = train_model(train_ex, val_ex, model_cfg, train_cfg, corpus.vocab.size)
    if not all(np.all(np.isfinite(p)) for p in params.values()):
        raise CliError("non-finite parameters after training", EXIT_NUMERIC)
    save_checkpoint(args.out, model_cfg, params, corpus.vocab)
    payload = {
        "lineage": _lineage(args, {"model": model_cfg.to_dict(),
                                   "train": train_cfg.to_dict()},
                            train_cfg.seed, args.corpus),
        "trace": trace.to_dict(),
    }
    _write_json(args.trace_out, payload)
    print(f"trained {model_cfg.variant}: best_epoch={trace.best_epoch}, "
          f"checkpoint={args.out}")
    return EXIT_OK


def cmd_evaluate(args, config):
    model_cfg, params, vocab = load_checkpoint(args.checkpoint)
    corpus = Corpus.load(args.corpus)
    cap = 10 if model_cfg.capped else model_cfg.L
    test_ex = _examples_for(corpus.test_sessions, cap)
    if not test_ex:
        raise CliError("no test examples in corpus", EXIT_DATA)
    report = evaluate_model(params, test_ex, model_cfg, vocab, k=args.k,
                            phi_star_grid=tuple(args.phi_star or DEFAULT_PHI_STAR_GRID))
    payload = {
        "lineage": _lineage(args, {"model": model_cfg.to_dict()}, None, args.corpus),
        "metrics": report.to_dict(),
    }
    _write_json(args.out, payload)
    print(f"recall@{args.k}={report.recall_at_k:.4f} mrr@{args.k}={report.mrr_at_k:.4f} "
          f"arp={report.arp:.2f}")
    return EXIT_OK


def cmd_bias_report(args, config):
    model_cfg, params, vocab = load_checkpoint(args.checkpoint)
    diag = norm_popularity_report(params["item_embeddings"], vocab)
    payload = {
        "lineage": _lineage(args, {"model": model_cfg.to_dict()}, None),
        "norm_diag": diag,
    }
    _write_json(args.out, payload)
    if args.csv_out:
        import csv as _csv
        with Path(args.csv_out).open("w", encoding="utf-8", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["decile", "n_items", "mean_popularity", "mean_norm"])
            for row in diag["deciles"]:
                writer.writerow([row["decile"], row["n_items"],
                                 row["mean_popularity"], row["mean_norm"]])
    print(f"spearman(phi, norm)={diag['spearman_phi_norm']:.4f}")
    return EXIT_OK


def cmd_online_sim(args, config):
    events, _ = load_events(args.events, args.format)
    _, sessions = build_corpus(events, min_item_support=1, min_session_len=2)
    day_sessions = split_by_day(sessions)
    model_cfg = _model_config(config, args)
    train_cfg = _train_config(config, args)
    run = run_online(day_sessions, model_cfg, train_cfg, n_days=args.n_days,
                     phi_star=args.phi_star_online, initial_days=args.initial_days)
    payload = {
        "lineage": _lineage(args, {"model": model_cfg.to_dict(),
                                   "train": train_cfg.to_dict()},
                            train_cfg.seed, args.events),
        "online_run": run.to_dict(),
    }
    _write_json(args.out, payload)
    if args.csv_out:
        run.write_csv(args.csv_out)
    evaluated = sum(1 for d in run.days if d["recall_at_20"] is not None)
    print(f"simulated {len(run.days)} days, {evaluated} with nonempty eval buckets")
    return EXIT_OK


def cmd_grad_check(args, config):
    model_cfg = ModelConfig.for_variant("niser+", d=8, L=5, tau=1, dropout_p=0.0)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    m = 12
    params = init_parameters(m, model_cfg, rng)
    prefixes = [[1, 2, 1, 3], [4, 5], [6, 7, 8, 9, 6]]
    examples = [Example(tuple(p), t) for p, t in zip(prefixes, [2, 0, 10])]
    batch, targets = make_batch(examples, dummy_index=m)

    def loss_fn(leaves):
        return forward(leaves, batch, model_cfg, m, targets=targets).loss

    max_err = ad.finite_diff_check(loss_fn, params, max_entries_per_leaf=32, rng=rng)
    print(f"max relative gradient error: {max_err:.3e}")
    if max_err >= 1e-4:
        raise CliError(f"gradient check failed: {max_err:.3e} >= 1e-4", EXIT_NUMERIC)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sessrec",
        description="Session-based recommendation with gated graph networks "
                    "and normalized embeddings.")
    parser.add_argument("--config", help="YAML config file with model/train/synth sections")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--variant", choices=("gnn", "gnn+", "nir", "niser", "niser+"))
        p.add_argument("--d", type=int)
        p.add_argument("--L", type=int)
        p.add_argument("--tau", type=int)
        p.add_argument("--sigma-scale", dest="sigma_scale", type=float)
        p.add_argument("--dropout-p", dest="dropout_p", type=float)

    def add_train_flags(p):
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--max-epochs", dest="max_epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--n-seeds", dest="n_seeds", type=int)

    p = sub.add_parser("synth", help="generate a synthetic event corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--transition-out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="raw events -> serialized corpus")
    p.add_argument("--events", required=True)
    p.add_argument("--format", choices=("csv", "tsv", "jsonl"))
    p.add_argument("--out", required=True)
    p.add_argument("--min-item-support", type=int, default=5)
    p.add_argument("--min-session-len", type=int, default=2)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model on an ingested corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace-out", required=True, help="training trace JSON path")
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="offline metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--phi-star", type=float, action="append",
                   help="long-tail threshold; repeatable")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bias-report", help="embedding-norm vs popularity diagnostic")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_bias_report)

    p = sub.add_parser("online-sim", help="daily retraining simulation")
    p.add_argument("--events", required=True)
    p.add_argument("--format", choices=("csv", "tsv", "jsonl"))
    p.add_argument("--out", required=True)
    p.add_argument("--csv-out")
    p.add_argument("--n-days", type=int, required=True)
    p.add_argument("--phi-star", dest="phi_star_online", type=float, default=0.01)
    p.add_argument("--initial-days", type=int)
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=cmd_online_sim)

    p = sub.add_parser("grad-check", help="finite-difference check of a tiny model")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_grad_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_run_config(args.config)
        return args.func(args, config)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except DataError as e:
        print(f"error: data: {e}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as e:
        print(f"error: numeric: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
