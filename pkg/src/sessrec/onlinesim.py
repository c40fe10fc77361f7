"""Daily expanding-window retraining with next-day evaluation on new items."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import Example, ItemVocab, Session, split_holdout, augment_prefixes, truncate_recent
from .metrics import long_tail_set, rank_targets, recall_at_k, mrr_at_k
from .model import ModelConfig
from .train import TrainConfig, train_model, score_examples


@dataclass
class OnlineRun:
    phi_star: float
    initial_days: list[int]
    days: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"phi_star": self.phi_star, "initial_days": self.initial_days,
                "days": self.days}

    def write_csv(self, path: str | Path) -> None:
        cols = ["day", "n_train_sessions", "n_new_items", "n_new_longtail_items",
                "f", "n_eval_sessions", "recall_at_20", "mrr_at_20"]
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.days:
                writer.writerow([row.get(c, "") for c in cols])


def _session_target(s: Session) -> int:
    return s.items[-1]


def run_online(day_sessions: dict[int, list[Session]], model_cfg: ModelConfig,
               train_cfg: TrainConfig, n_days: int, phi_star: float = 0.01,
               initial_days: int | None = None, cap: int | None = None,
               val_fraction: float = 0.1, k: int = 20) -> OnlineRun:
    """Simulate the daily retrain / next-day evaluation protocol.

    For each simulated day t the training window extends by day t's
    sessions, the vocabulary grows append-only with day t's new items,
    and a fresh model is trained from scratch. Evaluation uses day t+1
    sessions whose target is a day-t new item inside the long-tail set
    of the day-t training counts; f is the fraction of training sessions
    with such a target.
    """
    days = sorted(day_sessions)
    if initial_days is None:
        initial_days = max(len(days) // 2, 1)
    sim_days = days[initial_days:]
    if len(sim_days) < n_days + 1:
        raise ValueError(
            f"need at least {n_days + 1} day buckets after the initial window, "
            f"have {len(sim_days)}")
    if cap is None:
        cap = 10 if model_cfg.capped else model_cfg.L

    vocab = ItemVocab.from_keys([])
    first_seen_day: dict[int, int] = {}

    def extend_vocab(sessions, day):
        for s in sessions:
            for item in s.items:
                key = str(item)
                if key not in vocab.key_to_index:
                    vocab.add_item(key)
                    first_seen_day[vocab.key_to_index[key]] = day

    train_sessions: list[Session] = []
    for day in days[:initial_days]:
        extend_vocab(day_sessions[day], day)
        train_sessions.extend(day_sessions[day])

    run = OnlineRun(phi_star=phi_star, initial_days=days[:initial_days])
    for step in range(n_days):
        t = sim_days[step]
        extend_vocab(day_sessions[t], t)
        train_sessions = train_sessions + day_sessions[t]

        def to_indices(s: Session) -> list[int]:
            return [vocab.key_to_index[key] for item in s.items
                    if (key := str(item)) in vocab.key_to_index]

        indexed_train = [Session(id=s.id, items=to_indices(s), day=s.day, start_ts=s.start_ts)
                         for s in train_sessions]
        vocab.recount(indexed_train)

        new_items = {i for i, d in first_seen_day.items() if d == t}
        tail = long_tail_set(vocab, phi_star)
        qualifying = new_items & tail

        n_train = len(train_sessions)
        n_qualifying_targets = sum(
            1 for s in indexed_train if s.items and s.items[-1] in qualifying)
        f = n_qualifying_targets / n_train

        # retrain from scratch on the expanded window
        tr, val = split_holdout(indexed_train, val_fraction)
        train_ex = [ex for s in tr if len(s.items) >= 2 for ex in augment_prefixes(s, cap)]
        val_ex = [ex for s in val if len(s.items) >= 2 for ex in augment_prefixes(s, cap)]
        params, _ = train_model(train_ex, val_ex, model_cfg, train_cfg, vocab.size)

        # next-day sessions targeting a qualifying new item
        eval_day = sim_days[step + 1] if step + 1 < len(sim_days) else None
        eval_examples: list[Example] = []
        if eval_day is not None:
            for s in day_sessions[eval_day]:
                target_key = str(_session_target(s))
                target = vocab.key_to_index.get(target_key)
                if target is None or target not in qualifying:
                    continue
                prefix = [vocab.key_to_index[key] for item in s.items[:-1]
                          if (key := str(item)) in vocab.key_to_index]
                if not prefix:
                    continue
                eval_examples.append(
                    Example(prefix=tuple(truncate_recent(prefix, cap)), target=target))

        row = {
            "day": int(t),
            "n_train_sessions": n_train,
            "n_new_items": len(new_items),
            "n_new_longtail_items": len(qualifying),
            "f": f,
            "n_eval_sessions": len(eval_examples),
            "recall_at_20": None,
            "mrr_at_20": None,
        }
        if eval_examples:
            ranks = np.concatenate([
                rank_targets(probs, targets)
                for probs, targets in score_examples(params, eval_examples,
                                                     model_cfg, vocab.size)
            ])
            row["recall_at_20"] = recall_at_k(ranks, k)
            row["mrr_at_20"] = mrr_at_k(ranks, k)
        run.days.append(row)
    return run
