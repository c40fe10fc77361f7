"""Ranking metrics, popularity-bias metrics, and the norm diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import ItemVocab

DEFAULT_PHI_STAR_GRID = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0)


def rank_targets(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """1-based rank of each row's target, ties broken by ascending item index.

    A tied item counts ahead of the target only if its index is smaller.
    """
    scores = np.asarray(scores)
    targets = np.asarray(targets)
    rows = np.arange(scores.shape[0])
    target_scores = scores[rows, targets]
    greater = (scores > target_scores[:, None]).sum(axis=1)
    tied_before = ((scores == target_scores[:, None])
                   & (np.arange(scores.shape[1]) < targets[:, None])).sum(axis=1)
    return 1 + greater + tied_before


def top_k_items(scores: np.ndarray, k: int) -> np.ndarray:
    """Top-k item indices per row in descending score, ties by ascending index."""
    scores = np.asarray(scores)
    # stable mergesort on -score keeps ascending index order within ties
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def recall_at_k(ranks: np.ndarray, k: int = 20) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("recall_at_k: no ranks")
    return float(np.mean(ranks <= k))


def mrr_at_k(ranks: np.ndarray, k: int = 20) -> float:
    """Mean reciprocal rank; a target beyond rank k contributes 0."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("mrr_at_k: no ranks")
    rr = np.where(ranks <= k, 1.0 / ranks, 0.0)
    return float(np.mean(rr))


def arp(recommended: np.ndarray, vocab: ItemVocab, k: int = 20) -> float:
    """Average training popularity of the recommended items per list.

    `recommended` is [n_sessions, k] of item indices; popularity comes
    from the vocabulary's training counts.
    """
    recommended = np.asarray(recommended)
    if recommended.ndim != 2:
        raise ValueError("arp: expected [n_sessions, k] recommendations")
    phi = np.asarray(vocab.popularity, dtype=np.float64)
    if recommended.max(initial=-1) >= phi.size:
        raise ValueError("arp: recommended item outside vocabulary")
    per_list = phi[recommended].sum(axis=1) / k
    return float(per_list.mean())


def long_tail_set(vocab: ItemVocab, phi_star: float) -> set[int]:
    """Items whose popularity ratio phi(i)/max phi is at most phi_star."""
    if not 0 < phi_star <= 1:
        raise ValueError(f"long_tail_set: phi_star must be in (0, 1], got {phi_star}")
    max_phi = vocab.max_popularity
    if max_phi == 0:
        return set(range(vocab.size))
    return {i for i, p in enumerate(vocab.popularity) if p / max_phi <= phi_star}


def sliced_metrics(ranks: np.ndarray, targets: np.ndarray, vocab: ItemVocab,
                   phi_star_grid=DEFAULT_PHI_STAR_GRID, k: int = 20) -> dict[float, dict]:
    """Recall/MRR restricted to sessions whose target is long-tail at each phi*."""
    ranks = np.asarray(ranks)
    targets = np.asarray(targets)
    out = {}
    for phi_star in phi_star_grid:
        members = long_tail_set(vocab, phi_star)
        sel = np.array([t in members for t in targets], dtype=bool)
        bucket = {"count": int(sel.sum())}
        if bucket["count"] > 0:
            bucket["recall"] = recall_at_k(ranks[sel], k)
            bucket["mrr"] = mrr_at_k(ranks[sel], k)
        else:
            bucket["recall"] = None
            bucket["mrr"] = None
        out[float(phi_star)] = bucket
    return out


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Fractional ranking (average rank for ties), 1-based."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation; 0 when either input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise ValueError("spearman: need two equal-length arrays of size >= 2")
    rx, ry = _average_ranks(x), _average_ranks(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0 or sy == 0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def norm_popularity_report(item_embeddings: np.ndarray, vocab: ItemVocab) -> dict:
    """Per-popularity-decile mean embedding norm and the phi-vs-norm correlation.

    Expects the live rows of the item table (dummy row excluded by caller
    or present as the extra final row, which is ignored).
    """
    m = vocab.size
    norms = np.linalg.norm(np.asarray(item_embeddings)[:m], axis=1)
    phi = np.asarray(vocab.popularity, dtype=np.float64)
    order = np.argsort(phi, kind="stable")  # ascending popularity
    deciles = []
    bounds = np.linspace(0, m, 11).astype(int)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        idx = order[lo:hi]
        deciles.append({
            "decile": len(deciles),
            "n_items": int(idx.size),
            "mean_popularity": float(phi[idx].mean()) if idx.size else None,
            "mean_norm": float(norms[idx].mean()) if idx.size else None,
        })
    return {
        "deciles": deciles,
        "spearman_phi_norm": spearman(phi, norms),
    }


@dataclass
class MetricsReport:
    recall_at_k: float
    mrr_at_k: float
    arp: float
    k: int
    n_sessions: int
    per_phi_star: dict[float, dict] = field(default_factory=dict)
    norm_diag: dict | None = None

    def to_dict(self) -> dict:
        return {
            "recall_at_k": self.recall_at_k,
            "mrr_at_k": self.mrr_at_k,
            "arp": self.arp,
            "k": self.k,
            "n_sessions": self.n_sessions,
            "per_phi_star": {str(p): b for p, b in self.per_phi_star.items()},
            "norm_diag": self.norm_diag,
        }


def evaluate_scores(scores: np.ndarray, targets: np.ndarray, vocab: ItemVocab,
                    k: int = 20, phi_star_grid=DEFAULT_PHI_STAR_GRID,
                    item_embeddings: np.ndarray | None = None) -> MetricsReport:
    """All offline metrics from one score matrix."""
    ranks = rank_targets(scores, targets)
    recs = top_k_items(scores, k)
    return MetricsReport(
        recall_at_k=recall_at_k(ranks, k),
        mrr_at_k=mrr_at_k(ranks, k),
        arp=arp(recs, vocab, k),
        k=k,
        n_sessions=len(ranks),
        per_phi_star=sliced_metrics(ranks, targets, vocab, phi_star_grid, k),
        norm_diag=(norm_popularity_report(item_embeddings, vocab)
                   if item_embeddings is not None else None),
    )
