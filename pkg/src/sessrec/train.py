"""Mini-batch Adam training with temporal early stopping and retraining."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .graph import build_session_graph, batch_graphs, GraphBatch
from .ingest import Example, ItemVocab
from .metrics import MetricsReport, rank_targets, top_k_items, recall_at_k, mrr_at_k, arp, sliced_metrics, DEFAULT_PHI_STAR_GRID
from .model import ModelConfig, forward, init_parameters


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 100
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    n_seeds: int = 5

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("TrainConfig: lr > 0, batch_size >= 1, patience >= 1 required")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


@dataclass
class TrainTrace:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    retrain_epochs: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "best_epoch": self.best_epoch,
                "retrain_epochs": self.retrain_epochs}


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, cfg: TrainConfig, dummy_row: int | None = None) -> None:
    """In-place bias-corrected Adam update; re-zeros the dummy embedding row."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if cfg.weight_decay > 0:
            g = g + cfg.weight_decay * p
        state.m[name] = cfg.beta1 * state.m[name] + (1 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1 - cfg.beta2) * g * g
        m_hat = state.m[name] / (1 - cfg.beta1**t)
        v_hat = state.v[name] / (1 - cfg.beta2**t)
        p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if dummy_row is not None:
        params["item_embeddings"][dummy_row] = 0.0


def make_batch(examples: list[Example], dummy_index: int) -> tuple[GraphBatch, np.ndarray]:
    graphs = [build_session_graph(list(ex.prefix)) for ex in examples]
    pad_to = max(g.n_nodes for g in graphs)
    targets = np.array([ex.target for ex in examples], dtype=np.int64)
    return batch_graphs(graphs, pad_to, dummy_index), targets


def _iter_batches(examples: list[Example], batch_size: int, order=None):
    idx = range(len(examples)) if order is None else order
    chunk: list[Example] = []
    for i in idx:
        chunk.append(examples[i])
        if len(chunk) == batch_size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


def score_examples(params: dict[str, np.ndarray], examples: list[Example],
                   config: ModelConfig, m: int, batch_size: int = 200):
    """Eval-mode probability rows for a list of examples, batch by batch."""
    for chunk in _iter_batches(examples, batch_size):
        batch, targets = make_batch(chunk, dummy_index=m)
        result = forward(params, batch, config, m, train_mode=False)
        yield result.prob_rows(), targets


def evaluate_model(params: dict[str, np.ndarray], examples: list[Example],
                   config: ModelConfig, vocab: ItemVocab, k: int = 20,
                   phi_star_grid=DEFAULT_PHI_STAR_GRID, batch_size: int = 200,
                   with_norm_diag: bool = False) -> MetricsReport:
    """Offline metrics over prefix-expanded examples."""
    all_ranks, all_targets, rec_chunks = [], [], []
    for probs, targets in score_examples(params, examples, config, vocab.size, batch_size):
        all_ranks.append(rank_targets(probs, targets))
        all_targets.append(targets)
        rec_chunks.append(top_k_items(probs, k))
    ranks = np.concatenate(all_ranks)
    targets = np.concatenate(all_targets)
    recs = np.concatenate(rec_chunks, axis=0)
    return MetricsReport(
        recall_at_k=recall_at_k(ranks, k),
        mrr_at_k=mrr_at_k(ranks, k),
        arp=arp(recs, vocab, k),
        k=k,
        n_sessions=len(ranks),
        per_phi_star=sliced_metrics(ranks, targets, vocab, phi_star_grid, k),
        norm_diag=None,
    )


def _train_epochs(examples: list[Example], model_cfg: ModelConfig, train_cfg: TrainConfig,
                  m: int, n_epochs: int, val_examples: list[Example] | None = None,
                  patience: int | None = None, trace_rows: list | None = None,
                  eval_batch_size: int = 200):
    """Core loop: returns (params, per-epoch rows, best_epoch or n_epochs)."""
    rng = np.random.default_rng(train_cfg.seed)
    params = init_parameters(m, model_cfg, rng)
    state = AdamState.for_params(params)
    best_recall, best_epoch, since_best = -1.0, 0, 0

    for epoch in range(1, n_epochs + 1):
        order = rng.permutation(len(examples))
        losses = []
        for chunk in _iter_batches(examples, train_cfg.batch_size, order):
            batch, targets = make_batch(chunk, dummy_index=m)
            result = forward(params, batch, model_cfg, m, train_mode=True,
                             rng=rng, targets=targets)
            grads = ad.backward(result.loss, result.leaves)
            adam_step(params, grads, state, train_cfg, dummy_row=m)
            losses.append(float(result.loss.data))
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}

        if val_examples is not None:
            all_ranks = []
            for probs, targets in score_examples(params, val_examples, model_cfg, m,
                                                 eval_batch_size):
                all_ranks.append(rank_targets(probs, targets))
            ranks = np.concatenate(all_ranks)
            row["val_recall_at_20"] = recall_at_k(ranks, 20)
            row["val_mrr_at_20"] = mrr_at_k(ranks, 20)
            if row["val_recall_at_20"] > best_recall:
                best_recall, best_epoch, since_best = row["val_recall_at_20"], epoch, 0
            else:
                since_best += 1
        if trace_rows is not None:
            trace_rows.append(row)
        if val_examples is not None and patience is not None and since_best >= patience:
            break

    return params, (best_epoch if val_examples is not None else n_epochs)


def fit_fixed_epochs(examples: list[Example], model_cfg: ModelConfig,
                     train_cfg: TrainConfig, m: int,
                     n_epochs: int | None = None) -> dict[str, np.ndarray]:
    """Single-phase training for a fixed epoch count, no early stopping."""
    if not examples:
        raise ValueError("fit_fixed_epochs: empty example list")
    n = n_epochs if n_epochs is not None else train_cfg.max_epochs
    params, _ = _train_epochs(examples, model_cfg, train_cfg, m, n)
    return params


def train_model(train_examples: list[Example], val_examples: list[Example],
                model_cfg: ModelConfig, train_cfg: TrainConfig, m: int,
                eval_batch_size: int = 200) -> tuple[dict[str, np.ndarray], TrainTrace]:
    """Two-phase protocol: early-stop on validation, then retrain on both splits.

    Phase 1 trains on the train split with Recall@20 early stopping on the
    validation split. Phase 2 re-initializes with the same seed and trains
    on train + validation for exactly the best epoch count; its parameters
    are returned.
    """
    if not train_examples or not val_examples:
        raise ValueError("train_model: empty train or validation split")
    trace = TrainTrace()
    _, best_epoch = _train_epochs(
        train_examples, model_cfg, train_cfg, m, train_cfg.max_epochs,
        val_examples=val_examples, patience=train_cfg.patience,
        trace_rows=trace.epochs, eval_batch_size=eval_batch_size)
    trace.best_epoch = best_epoch

    combined = train_examples + val_examples
    params, _ = _train_epochs(
        combined, model_cfg, train_cfg, m, best_epoch,
        trace_rows=trace.retrain_epochs, eval_batch_size=eval_batch_size)
    return params, trace


def train_ensemble(train_examples: list[Example], val_examples: list[Example],
                   test_examples: list[Example], model_cfg: ModelConfig,
                   train_cfg: TrainConfig, vocab: ItemVocab,
                   n_seeds: int | None = None, k: int = 20) -> dict:
    """Train one model per seed and aggregate test metrics as mean +/- std.

    Seeds are base_seed + 0..n-1; std is the population standard deviation.
    """
    n = n_seeds if n_seeds is not None else train_cfg.n_seeds
    if n < 1:
        raise ValueError("train_ensemble: n_seeds must be >= 1")
    members = []
    for offset in range(n):
        cfg = TrainConfig.from_dict({**train_cfg.to_dict(), "seed": train_cfg.seed + offset})
        params, trace = train_model(train_examples, val_examples, model_cfg, cfg, vocab.size)
        report = evaluate_model(params, test_examples, model_cfg, vocab, k=k)
        members.append({"seed": cfg.seed, "params": params, "trace": trace, "report": report})

    def agg(values):
        arr = np.array(values, dtype=np.float64)
        return {"mean": float(arr.mean()), "std": float(arr.std())}

    summary = {
        metric: agg([getattr(mb["report"], metric) for mb in members])
        for metric in ("recall_at_k", "mrr_at_k", "arp")
    }
    return {"members": members, "summary": summary, "n_seeds": n}
