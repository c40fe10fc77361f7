"""Click-log ingestion: parsing, vocabulary building, and example generation."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path


class DataError(ValueError):
    """Raised when input data violates ingestion preconditions."""


SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class RawEvent:
    session_key: str
    item_key: str
    timestamp: int


@dataclass
class ItemVocab:
    """Dense item indexing plus training-set popularity counts."""

    keys: list[str]
    key_to_index: dict[str, int]
    popularity: list[int]

    @property
    def size(self) -> int:
        return len(self.keys)

    @property
    def max_popularity(self) -> int:
        return max(self.popularity) if self.popularity else 0

    @classmethod
    def from_keys(cls, keys: list[str]) -> "ItemVocab":
        return cls(keys=list(keys), key_to_index={k: i for i, k in enumerate(keys)},
                   popularity=[0] * len(keys))

    def add_item(self, key: str) -> int:
        if key in self.key_to_index:
            raise DataError(f"item {key!r} already in vocabulary")
        idx = len(self.keys)
        self.keys.append(key)
        self.key_to_index[key] = idx
        self.popularity.append(0)
        return idx

    def recount(self, sessions: list["Session"]) -> None:
        """Recompute popularity from the given (training) sessions."""
        counts = [0] * self.size
        for s in sessions:
            for it in s.items:
                counts[it] += 1
        self.popularity = counts

    def to_dict(self) -> dict:
        return {"keys": self.keys, "popularity": self.popularity}

    @classmethod
    def from_dict(cls, d: dict) -> "ItemVocab":
        vocab = cls.from_keys(d["keys"])
        vocab.popularity = list(d["popularity"])
        return vocab


@dataclass
class Session:
    id: str
    items: list[int]
    day: int
    start_ts: int = 0

    def to_dict(self) -> dict:
        return {"id": self.id, "items": self.items, "day": self.day, "start_ts": self.start_ts}

    @classmethod
    def from_dict(cls, d: dict) -> "Session":
        return cls(id=d["id"], items=list(d["items"]), day=d["day"], start_ts=d.get("start_ts", 0))


@dataclass(frozen=True)
class Example:
    prefix: tuple[int, ...]
    target: int


@dataclass
class LoadReport:
    n_events: int = 0
    n_malformed: int = 0


def load_events(path: str | Path, format: str | None = None) -> tuple[list[RawEvent], LoadReport]:
    """Parse a raw click log into events, in file order.

    Malformed lines are skipped and counted; more than 10% malformed is a
    hard error. Format is inferred from the suffix when not given.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if format is None:
        format = {".csv": "csv", ".tsv": "tsv", ".jsonl": "jsonl"}.get(path.suffix)
        if format is None:
            raise DataError(f"cannot infer format from suffix of {path}")
    if format not in ("csv", "tsv", "jsonl"):
        raise DataError(f"unknown format: {format}")

    events: list[RawEvent] = []
    report = LoadReport()

    def push(session_key, item_key, timestamp_raw):
        try:
            ts = int(timestamp_raw)
        except (TypeError, ValueError):
            report.n_malformed += 1
            return
        if not session_key or not item_key or ts < 0:
            report.n_malformed += 1
            return
        events.append(RawEvent(str(session_key), str(item_key), ts))

    with path.open("r", encoding="utf-8", newline="") as f:
        if format == "jsonl":
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    push(rec.get("session_id"), rec.get("item_id"), rec.get("timestamp"))
                except json.JSONDecodeError:
                    report.n_malformed += 1
        else:
            delim = "," if format == "csv" else "\t"
            reader = csv.DictReader(f, delimiter=delim)
            required = {"session_id", "item_id", "timestamp"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise DataError(f"missing header columns in {path}: need {sorted(required)}")
            for rec in reader:
                push(rec.get("session_id"), rec.get("item_id"), rec.get("timestamp"))

    report.n_events = len(events)
    total = report.n_events + report.n_malformed
    if total > 0 and report.n_malformed / total > 0.10:
        raise DataError(
            f"{report.n_malformed}/{total} malformed lines in {path} (>10%)")
    return events, report


def _group_sessions(events: list[RawEvent]) -> list[tuple[str, list[tuple[int, str]]]]:
    by_session: dict[str, list[tuple[int, str]]] = defaultdict(list)
    order: list[str] = []
    for ev in events:
        if ev.session_key not in by_session:
            order.append(ev.session_key)
        by_session[ev.session_key].append((ev.timestamp, ev.item_key))
    grouped = []
    for key in order:
        rows = by_session[key]
        # stable sort: ties keep input order
        rows.sort(key=lambda r: r[0])
        grouped.append((key, rows))
    return grouped


def build_corpus(
    events: list[RawEvent],
    min_item_support: int = 5,
    min_session_len: int = 2,
) -> tuple[ItemVocab, list[Session]]:
    """Build the item vocabulary and filtered sessions from raw events.

    Items with support below `min_item_support` and sessions shorter than
    `min_session_len` are removed, iterating to a fixed point. Popularity
    counts come from the surviving sessions.
    """
    if not events:
        raise DataError("build_corpus: no events")

    grouped = _group_sessions(events)
    sessions_keys: list[tuple[str, int, list[str]]] = [
        (key, rows[0][0], [item for _, item in rows]) for key, rows in grouped
    ]

    while True:
        support = Counter(item for _, _, items in sessions_keys for item in items)
        kept_items = {item for item, c in support.items() if c >= min_item_support}
        changed = False
        next_sessions = []
        for key, ts, items in sessions_keys:
            filtered = [it for it in items if it in kept_items]
            if len(filtered) != len(items):
                changed = True
            if len(filtered) >= min_session_len:
                next_sessions.append((key, ts, filtered))
            else:
                changed = True
        sessions_keys = next_sessions
        if not changed:
            break

    if not sessions_keys:
        raise DataError("build_corpus: all sessions filtered out")

    vocab = ItemVocab.from_keys([])
    sessions: list[Session] = []
    for key, ts, items in sessions_keys:
        indexed = []
        for item in items:
            idx = vocab.key_to_index.get(item)
            if idx is None:
                idx = vocab.add_item(item)
            indexed.append(idx)
        sessions.append(Session(id=key, items=indexed, day=ts // SECONDS_PER_DAY, start_ts=ts))
    vocab.recount(sessions)
    return vocab, sessions


def truncate_recent(sequence: list[int], cap: int = 10) -> list[int]:
    """Keep only the most recent `cap` items, order preserved."""
    if not sequence:
        raise DataError("truncate_recent: empty sequence")
    if cap < 1:
        raise DataError(f"truncate_recent: cap must be >= 1, got {cap}")
    return list(sequence[-cap:])


def augment_prefixes(session: Session, cap: int | None) -> list[Example]:
    """Expand a session into (prefix, next-item) training examples.

    The prefix ending just before each position becomes one example,
    truncated to the most recent `cap` items when a cap is set.
    """
    out = []
    items = session.items
    for j in range(1, len(items)):
        prefix = items[:j]
        if cap is not None:
            prefix = truncate_recent(prefix, cap)
        out.append(Example(prefix=tuple(prefix), target=items[j]))
    return out


def split_holdout(train_sessions: list[Session], fraction: float = 0.1) -> tuple[list[Session], list[Session]]:
    """Hold out the temporally latest `fraction` of sessions as validation."""
    if not 0 < fraction < 1:
        raise DataError(f"split_holdout: fraction must be in (0,1), got {fraction}")
    n = len(train_sessions)
    if n < 2:
        raise DataError("split_holdout: need at least 2 sessions")
    ordered = sorted(range(n), key=lambda i: (train_sessions[i].day, train_sessions[i].start_ts, i))
    n_val = math.ceil(fraction * n)
    val_idx = set(ordered[n - n_val:])
    train = [s for i, s in enumerate(train_sessions) if i not in val_idx]
    val = [train_sessions[i] for i in ordered[n - n_val:]]
    return train, val


def split_by_day(sessions: list[Session]) -> dict[int, list[Session]]:
    """Partition sessions by day index, days ascending, within-day order kept."""
    buckets: dict[int, list[Session]] = defaultdict(list)
    for s in sessions:
        buckets[s.day].append(s)
    return {day: buckets[day] for day in sorted(buckets)}


@dataclass
class Corpus:
    """Serializable bundle of vocabulary and split sessions."""

    vocab: ItemVocab
    train_sessions: list[Session]
    val_sessions: list[Session]
    test_sessions: list[Session]

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "vocab": self.vocab.to_dict(),
            "train_sessions": [s.to_dict() for s in self.train_sessions],
            "val_sessions": [s.to_dict() for s in self.val_sessions],
            "test_sessions": [s.to_dict() for s in self.test_sessions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Corpus":
        return cls(
            vocab=ItemVocab.from_dict(d["vocab"]),
            train_sessions=[Session.from_dict(s) for s in d["train_sessions"]],
            val_sessions=[Session.from_dict(s) for s in d["val_sessions"]],
            test_sessions=[Session.from_dict(s) for s in d["test_sessions"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_corpus(
    events: list[RawEvent],
    min_item_support: int = 5,
    min_session_len: int = 2,
    test_fraction: float = 0.1,
    val_fraction: float = 0.1,
) -> Corpus:
    """Full ingestion pipeline: filter, temporal test split, holdout split.

    The vocabulary and popularity counts are rebuilt on the training
    sessions only; test sessions keep only items present in that
    vocabulary (and are dropped if they fall below min_session_len).
    """
    vocab_all, sessions = build_corpus(events, min_item_support, min_session_len)
    rest, test = split_holdout(sessions, test_fraction)

    train_keys = sorted({vocab_all.keys[it] for s in rest for it in s.items},
                        key=lambda k: vocab_all.key_to_index[k])
    vocab = ItemVocab.from_keys(train_keys)

    def reindex(s: Session, strict: bool) -> Session | None:
        items = []
        for it in s.items:
            idx = vocab.key_to_index.get(vocab_all.keys[it])
            if idx is not None:
                items.append(idx)
        if len(items) < min_session_len:
            return None
        return Session(id=s.id, items=items, day=s.day, start_ts=s.start_ts)

    rest2 = [r for s in rest if (r := reindex(s, True)) is not None]
    test2 = [r for s in test if (r := reindex(s, False)) is not None]
    train, val = split_holdout(rest2, val_fraction)
    vocab.recount(train + val)
    return Corpus(vocab=vocab, train_sessions=train, val_sessions=val, test_sessions=test2)
