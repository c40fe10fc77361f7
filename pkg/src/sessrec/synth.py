"""Synthetic click-stream generator with power-law popularity and Markov structure."""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .ingest import Session, SECONDS_PER_DAY


@dataclass
class SynthConfig:
    m: int = 500
    zipf_s: float = 1.1
    n_sessions: int = 10000
    min_len: int = 2
    max_len: int = 8
    markov_concentration: float = 0.6
    n_days: int = 10
    new_items_per_day: int = 0
    seed: int = 0
    successors_per_item: int = 3
    intro_sessions_per_item: int = 3  # day-t sessions seeded with each new item
    echo_sessions_per_item: int = 3   # day-(t+1) sessions targeting each new item

    def __post_init__(self):
        if self.m < 10:
            raise ValueError("SynthConfig: m must be >= 10")
        if self.zipf_s < 0:
            raise ValueError("SynthConfig: zipf_s must be >= 0")
        if self.min_len < 2 or self.max_len < self.min_len:
            raise ValueError("SynthConfig: need 2 <= min_len <= max_len")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)


def gen_catalog(m: int, zipf_s: float) -> np.ndarray:
    """Power-law popularity weights: weight_i proportional to 1/(i+1)^s, summing to 1."""
    ranks = np.arange(1, m + 1, dtype=np.float64)
    w = ranks ** (-zipf_s)
    return w / w.sum()


def gen_sessions(cfg: SynthConfig) -> tuple[list[Session], np.ndarray]:
    """Generate a day-partitioned session stream plus its transition matrix.

    The first item of a session follows the popularity weights; each next
    item mixes a fixed per-item successor set (mass markov_concentration)
    with a popularity-proportional draw. Days after day 0 introduce
    previously unused items, injected both as context and as targets so
    next-day evaluation buckets are nonempty.
    """
    rng = np.random.default_rng(cfg.seed)
    n_inject = cfg.new_items_per_day * max(cfg.n_days - 1, 0)
    m_base = cfg.m - n_inject
    if m_base < 2:
        raise ValueError(
            f"catalog exhausted: {n_inject} injected items leave {m_base} base items")

    base_weights = gen_catalog(m_base, cfg.zipf_s)
    successors = np.empty((cfg.m, cfg.successors_per_item), dtype=np.int64)
    for i in range(cfg.m):
        # popularity-weighted successor sets keep the click marginals long-tailed
        successors[i] = rng.choice(m_base, size=cfg.successors_per_item,
                                   replace=False, p=base_weights)

    transition = np.zeros((cfg.m, cfg.m), dtype=np.float64)
    transition[:, :m_base] = (1.0 - cfg.markov_concentration) * base_weights
    for i in range(cfg.m):
        transition[i, successors[i]] += cfg.markov_concentration / cfg.successors_per_item

    def draw_next(cur: int) -> int:
        if rng.random() < cfg.markov_concentration:
            return int(successors[cur][rng.integers(cfg.successors_per_item)])
        return int(rng.choice(m_base, p=base_weights))

    sessions: list[Session] = []
    by_day: dict[int, list[int]] = {d: [] for d in range(cfg.n_days)}
    for k in range(cfg.n_sessions):
        day = k % cfg.n_days
        length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        items = [int(rng.choice(m_base, p=base_weights))]
        for _ in range(length - 1):
            items.append(draw_next(items[-1]))
        # within-day offset wraps so timestamps never spill into the next day;
        # wrapped ties fall back to input order downstream
        offset = ((k // cfg.n_days) * (cfg.max_len + 1)) % (SECONDS_PER_DAY - cfg.max_len - 1)
        start_ts = day * SECONDS_PER_DAY + offset
        by_day[day].append(len(sessions))
        sessions.append(Session(id=f"s{k}", items=items, day=day, start_ts=start_ts))

    # inject new items: item m_base + (day-1)*per_day + j first appears on `day`
    for day in range(1, cfg.n_days):
        for j in range(cfg.new_items_per_day):
            item = m_base + (day - 1) * cfg.new_items_per_day + j
            day_sessions = by_day[day]
            if day_sessions:
                picks = rng.choice(len(day_sessions),
                                   size=min(cfg.intro_sessions_per_item, len(day_sessions)),
                                   replace=False)
                for n, si in enumerate(picks):
                    s = sessions[day_sessions[si]]
                    if n % 2 == 0:
                        s.items[-1] = item  # appears as the target
                    else:
                        s.items[len(s.items) // 2] = item  # appears mid-context
            if day + 1 < cfg.n_days:
                next_sessions = by_day[day + 1]
                picks = rng.choice(len(next_sessions),
                                   size=min(cfg.echo_sessions_per_item, len(next_sessions)),
                                   replace=False)
                for si in picks:
                    sessions[next_sessions[si]].items[-1] = item
    return sessions, transition


def write_events_csv(sessions: list[Session], path: str | Path) -> None:
    """Emit sessions in the standard session_id,item_id,timestamp event format."""
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["session_id", "item_id", "timestamp"])
        for s in sessions:
            for pos, item in enumerate(s.items):
                writer.writerow([s.id, f"i{item}", s.start_ts + pos])


def write_transition_csv(transition: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, transition, delimiter=",", fmt="%.8g")
