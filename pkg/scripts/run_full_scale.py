#!/usr/bin/env python3
"""Full-scale training recipe for a real click-stream dataset.

Expects a raw event file (session_id,item_id,timestamp). Runs the complete
protocol at full model size: prefix augmentation, two-phase training with
validation early stopping, and a multi-seed ensemble report. Expect multi-hour
runtimes on large datasets; this is not part of the CI suite.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from sessrec.ingest import augment_prefixes, load_events, make_corpus
from sessrec.model import ModelConfig
from sessrec.train import TrainConfig, train_ensemble


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("events", help="raw event file (csv/tsv/jsonl)")
    parser.add_argument("--out", default="full_scale_report.json")
    parser.add_argument("--variant", default="niser+")
    parser.add_argument("--d", type=int, default=100)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--batch-size", type=int, default=100)
    parser.add_argument("--max-epochs", type=int, default=30)
    parser.add_argument("--patience", type=int, default=3)
    parser.add_argument("--n-seeds", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--min-item-support", type=int, default=5)
    args = parser.parse_args()

    events, report = load_events(args.events)
    print(f"loaded {report.n_events} events ({report.n_malformed} malformed)")
    corpus = make_corpus(events, min_item_support=args.min_item_support)
    print(f"corpus: {corpus.vocab.size} items, {len(corpus.train_sessions)} train / "
          f"{len(corpus.val_sessions)} val / {len(corpus.test_sessions)} test sessions")

    model_cfg = ModelConfig.for_variant(args.variant, d=args.d)
    train_cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                            max_epochs=args.max_epochs, patience=args.patience,
                            seed=args.seed, n_seeds=args.n_seeds)
    cap = 10 if model_cfg.capped else model_cfg.L
    train_ex = [ex for s in corpus.train_sessions for ex in augment_prefixes(s, cap)]
    val_ex = [ex for s in corpus.val_sessions for ex in augment_prefixes(s, cap)]
    test_ex = [ex for s in corpus.test_sessions for ex in augment_prefixes(s, cap)]

    result = train_ensemble(train_ex, val_ex, test_ex, model_cfg, train_cfg,
                            corpus.vocab)
    summary = result["summary"]
    print(f"{args.variant} over {result['n_seeds']} seeds: "
          f"recall@20 = {100 * summary['recall_at_k']['mean']:.2f} "
          f"+/- {100 * summary['recall_at_k']['std']:.2f}, "
          f"mrr@20 = {100 * summary['mrr_at_k']['mean']:.2f}, "
          f"arp = {summary['arp']['mean']:.1f}")

    payload = {
        "config": vars(args),
        "model": model_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "summary": summary,
        "members": [{"seed": mb["seed"], "report": mb["report"].to_dict()}
                    for mb in result["members"]],
    }
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
