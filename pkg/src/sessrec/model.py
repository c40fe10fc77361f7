"""Forward pass: embeddings -> gated graph propagation -> attention readout -> scores.

All five variants (gnn, gnn+, nir, niser, niser+) share one pipeline,
selected by flags on ModelConfig. Parameters are plain named numpy
arrays; the forward pass wraps them in autodiff Tensors so the trainer
can run reverse-mode through the whole model.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import GraphBatch
from .ingest import ItemVocab

VARIANTS = ("gnn", "gnn+", "nir", "niser", "niser+")


@dataclass
class ModelConfig:
    d: int = 100
    L: int = 10
    tau: int = 1
    sigma_scale: float = 16.0
    normalize_items: bool = True
    normalize_session: bool = True
    use_position_embeddings: bool = True
    dropout_p: float = 0.1
    variant: str = "niser+"
    loss_mode: str = "mean"  # or "sum"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.d < 1 or self.tau < 0:
            raise ValueError("d must be >= 1 and tau >= 0")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.normalize_session and self.sigma_scale <= 0:
            raise ValueError("sigma_scale must be > 0 when normalizing the session embedding")

    @classmethod
    def for_variant(cls, variant: str, **kwargs) -> "ModelConfig":
        """Build a config with the flag combination a variant implies."""
        flags = {
            "gnn": dict(normalize_items=False, normalize_session=False,
                        use_position_embeddings=False, dropout_p=0.0),
            "gnn+": dict(normalize_items=False, normalize_session=False,
                         use_position_embeddings=False, dropout_p=0.0),
            "nir": dict(normalize_items=True, normalize_session=False,
                        use_position_embeddings=False, dropout_p=0.0),
            "niser": dict(normalize_items=True, normalize_session=True,
                          use_position_embeddings=False, dropout_p=0.0),
            "niser+": dict(normalize_items=True, normalize_session=True,
                           use_position_embeddings=True),
        }[variant]
        return cls(variant=variant, **{**flags, **kwargs})

    @property
    def capped(self) -> bool:
        """Whether prefixes are truncated to the most recent 10 clicks."""
        return self.variant in ("gnn+", "niser+")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


PARAM_SHAPES = {
    "item_embeddings": lambda m, c: (m + 1, c.d),  # last row is the frozen dummy
    "position_embeddings": lambda m, c: (c.L, c.d),
    "H1": lambda m, c: (c.d, c.d),
    "H2": lambda m, c: (c.d, c.d),
    "b": lambda m, c: (2 * c.d,),
    "Wz": lambda m, c: (c.d, 2 * c.d),
    "Wr": lambda m, c: (c.d, 2 * c.d),
    "Wo": lambda m, c: (c.d, 2 * c.d),
    "Uz": lambda m, c: (c.d, c.d),
    "Ur": lambda m, c: (c.d, c.d),
    "Uo": lambda m, c: (c.d, c.d),
    "q": lambda m, c: (c.d,),
    "c": lambda m, c: (c.d,),
    "W1": lambda m, c: (c.d, c.d),
    "W2": lambda m, c: (c.d, c.d),
    "W3": lambda m, c: (c.d, 2 * c.d),
}


def init_parameters(m: int, config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) init for every tensor; dummy row zeroed."""
    stdv = 1.0 / np.sqrt(config.d)
    params = {
        name: rng.uniform(-stdv, stdv, size=shape_fn(m, config))
        for name, shape_fn in PARAM_SHAPES.items()
    }
    params["item_embeddings"][m] = 0.0
    return params


def live_item_mask(m: int) -> np.ndarray:
    """1.0 for real item rows, 0.0 for the dummy padding row."""
    mask = np.ones(m + 1)
    mask[m] = 0.0
    return mask


def normalize_item_table(table: Tensor, m: int) -> Tensor:
    """Unit-normalize every live item row; dummy row stays zero."""
    return ad.l2_normalize_rows(table, live_mask=live_item_mask(m))


def ggnn_propagate(a_in: np.ndarray, a_out: np.ndarray, node_embs: Tensor,
                   p: dict[str, Tensor], tau: int) -> Tensor:
    """Run `tau` gated message-propagation steps over the batched graphs."""
    a_in_t = Tensor(a_in)
    a_out_t = Tensor(a_out)
    e = node_embs
    for _ in range(tau):
        msg_in = ad.matmul(ad.matmul(a_in_t, e), p["H1"])
        msg_out = ad.matmul(ad.matmul(a_out_t, e), p["H2"])
        a = ad.concat_last(msg_in, msg_out) + p["b"]
        z = ad.sigmoid(ad.matmul(a, ad.transpose(p["Wz"])) + ad.matmul(e, ad.transpose(p["Uz"])))
        r = ad.sigmoid(ad.matmul(a, ad.transpose(p["Wr"])) + ad.matmul(e, ad.transpose(p["Ur"])))
        cand = ad.tanh(ad.matmul(a, ad.transpose(p["Wo"])) + ad.matmul(ad.mul(r, e), ad.transpose(p["Uo"])))
        e = ad.add(ad.mul(1.0 - z, e), ad.mul(z, cand))
    return e


def add_position_embeddings(seq_embs: Tensor, pos_table: Tensor) -> Tensor:
    """Add the learned per-position vector to each sequence slot."""
    batch, length = seq_embs.shape[0], seq_embs.shape[1]
    if length > pos_table.shape[0]:
        raise ValueError(
            f"sequence length {length} exceeds position table size {pos_table.shape[0]}")
    pos_idx = np.broadcast_to(np.arange(length), (batch, length))
    return seq_embs + ad.gather(pos_table, pos_idx)


def attention_readout(seq_embs: Tensor, last_emb: Tensor, p: dict[str, Tensor],
                      seq_mask: np.ndarray) -> Tensor:
    """Soft-attention pooling over sequence slots, mixed with the last item."""
    if not np.all(seq_mask.sum(axis=1) >= 1):
        raise ValueError("attention_readout: batch row with empty mask")
    batch, length, d = seq_embs.shape
    gate = ad.sigmoid(ad.matmul(last_emb, ad.transpose(p["W1"]))
                      + ad.matmul(seq_embs, ad.transpose(p["W2"]))
                      + p["c"])
    alpha = ad.reshape(ad.matmul(gate, ad.reshape(p["q"], (d, 1))), (batch, length))
    weights = ad.softmax_last(alpha, mask=seq_mask)
    weighted = ad.mul(ad.reshape(weights, (batch, length, 1)), seq_embs)
    s_prime = ad.tsum(weighted, axis=1)
    last_flat = ad.reshape(last_emb, (batch, d))
    return ad.matmul(ad.concat_last(s_prime, last_flat), ad.transpose(p["W3"]))


def score_items(session_emb: Tensor, score_table: Tensor, config: ModelConfig, m: int) -> Tensor:
    """Probability rows over the m live items (dummy column is masked out).

    Normalized variants score by scaled cosine similarity; others by raw
    inner product. Output shape is [batch, m+1] with zero in the dummy column.
    """
    if config.normalize_session:
        s = ad.l2_normalize_rows(session_emb)
        logits = ad.mul_scalar(ad.matmul(s, ad.transpose(score_table)), config.sigma_scale)
    else:
        logits = ad.matmul(session_emb, ad.transpose(score_table))
    col_mask = live_item_mask(m)
    return ad.softmax_last(logits, mask=np.broadcast_to(col_mask, logits.shape))


def cross_entropy(probs: Tensor, targets: np.ndarray, mode: str = "mean") -> Tensor:
    """Negative log-likelihood of the targets under the probability rows."""
    nll = -ad.log(ad.gather_elements(probs, np.asarray(targets)))
    return ad.tmean(nll) if mode == "mean" else ad.tsum(nll)


@dataclass
class ForwardResult:
    probs: Tensor            # [B, m+1]; dummy column is exactly 0
    loss: Tensor | None
    leaves: dict[str, Tensor]

    def prob_rows(self) -> np.ndarray:
        """Probability rows over live items only, shape [B, m]."""
        return self.probs.data[:, :-1]


def forward(params: dict[str, np.ndarray], batch: GraphBatch, config: ModelConfig,
            m: int, train_mode: bool = False, rng: np.random.Generator | None = None,
            targets: np.ndarray | None = None) -> ForwardResult:
    """Full model forward pass on one padded batch.

    Dropout applies to the gathered input item embeddings only, and only
    in train mode (rng required then). Parameters may be given as plain
    arrays or as pre-wrapped Tensors (useful for gradient checking).
    """
    leaves = {name: arr if isinstance(arr, Tensor) else Tensor(arr, requires_grad=True, name=name)
              for name, arr in params.items()}
    table = leaves["item_embeddings"]
    if config.normalize_items:
        table = normalize_item_table(table, m)

    node_embs = ad.gather(table, batch.node_idx)
    if train_mode and config.dropout_p > 0:
        if rng is None:
            raise ValueError("forward: train-mode dropout needs an rng")
        node_embs = ad.dropout(node_embs, config.dropout_p, rng, train=True)

    node_embs = ggnn_propagate(batch.a_in, batch.a_out, node_embs, leaves, config.tau)
    seq_embs = ad.gather_nodes(node_embs, batch.alias)
    if config.use_position_embeddings:
        seq_embs = add_position_embeddings(seq_embs, leaves["position_embeddings"])
    last_emb = ad.gather_nodes(seq_embs, batch.last_pos[:, None])

    session_emb = attention_readout(seq_embs, last_emb, leaves, batch.seq_mask)
    probs = score_items(session_emb, table, config, m)
    loss = None if targets is None else cross_entropy(probs, targets, config.loss_mode)
    return ForwardResult(probs=probs, loss=loss, leaves=leaves)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, config: ModelConfig, params: dict[str, np.ndarray],
                    vocab: ItemVocab) -> None:
    """Write config + parameters + vocab as one JSON file.

    Tensor values are stored as base64 of their little-endian float64
    bytes, so load(save(x)) round-trips bitwise.
    """
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "vocab": vocab.to_dict(),
        "parameters": {
            name: {
                "shape": list(arr.shape),
                "dtype": "<f8",
                "data": base64.b64encode(
                    np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii"),
            }
            for name, arr in params.items()
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, np.ndarray], ItemVocab]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {payload.get('version')!r}")
    params = {}
    for name, entry in payload["parameters"].items():
        arr = np.frombuffer(base64.b64decode(entry["data"]), dtype=entry["dtype"])
        params[name] = arr.reshape(entry["shape"]).copy()
    return (ModelConfig.from_dict(payload["config"]), params,
            ItemVocab.from_dict(payload["vocab"]))
