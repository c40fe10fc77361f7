"""Per-session graphs with normalized in/out adjacency, plus batching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SessionGraph:
    """Directed transition graph of one item sequence.

    nodes holds the distinct item indices in first-occurrence order;
    a_in/a_out are the row-normalized incoming/outgoing adjacency
    matrices over those nodes; alias maps each sequence position to
    its node row.
    """

    nodes: list[int]
    a_in: np.ndarray
    a_out: np.ndarray
    alias: list[int]
    last_node: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def build_session_graph(sequence: list[int], weighted: bool = True) -> SessionGraph:
    """Build the session graph from consecutive-click transitions.

    Edge weights count repeated transitions before row-normalization;
    weighted=False collapses them to binary edges.
    """
    if not sequence:
        raise ValueError("build_session_graph: empty sequence")
    nodes: list[int] = []
    node_of: dict[int, int] = {}
    for item in sequence:
        if item not in node_of:
            node_of[item] = len(nodes)
            nodes.append(item)
    n = len(nodes)
    out_w = np.zeros((n, n), dtype=np.float64)
    for a, b in zip(sequence, sequence[1:]):
        out_w[node_of[a], node_of[b]] += 1.0
    if not weighted:
        out_w = (out_w > 0).astype(np.float64)
    in_w = out_w.T

    def row_normalize(w):
        sums = w.sum(axis=1, keepdims=True)
        return np.divide(w, sums, out=np.zeros_like(w), where=sums > 0)

    alias = [node_of[item] for item in sequence]
    return SessionGraph(
        nodes=nodes,
        a_in=row_normalize(in_w),
        a_out=row_normalize(out_w),
        alias=alias,
        last_node=alias[-1],
    )


@dataclass
class GraphBatch:
    """Padded batch of session graphs ready for the model forward pass.

    node_idx carries vocab item indices with `dummy_index` in padded
    slots; alias/seq_mask describe the original sequences; last_pos is
    each sequence's final position.
    """

    node_idx: np.ndarray       # [B, N] int
    a_in: np.ndarray           # [B, N, N]
    a_out: np.ndarray          # [B, N, N]
    node_mask: np.ndarray      # [B, N] 1.0 for real nodes
    alias: np.ndarray          # [B, L] node row per sequence position
    seq_mask: np.ndarray       # [B, L] 1.0 for real positions
    last_pos: np.ndarray       # [B] int
    dummy_index: int

    @property
    def batch_size(self) -> int:
        return self.node_idx.shape[0]


def batch_graphs(graphs: list[SessionGraph], pad_to: int, dummy_index: int,
                 seq_pad_to: int | None = None) -> GraphBatch:
    """Zero-pad graphs to a common node count and sequence length.

    Padded node slots point at `dummy_index`, whose embedding row is
    pinned to zero; padded sequence positions are masked out downstream.
    """
    b = len(graphs)
    max_nodes = max(g.n_nodes for g in graphs)
    if max_nodes > pad_to:
        raise ValueError(f"batch_graphs: graph with {max_nodes} nodes exceeds pad_to={pad_to}")
    seq_lens = [len(g.alias) for g in graphs]
    max_len = max(seq_lens) if seq_pad_to is None else seq_pad_to
    if max(seq_lens) > max_len:
        raise ValueError(f"batch_graphs: sequence of length {max(seq_lens)} exceeds {max_len}")

    node_idx = np.full((b, pad_to), dummy_index, dtype=np.int64)
    a_in = np.zeros((b, pad_to, pad_to), dtype=np.float64)
    a_out = np.zeros((b, pad_to, pad_to), dtype=np.float64)
    node_mask = np.zeros((b, pad_to), dtype=np.float64)
    alias = np.zeros((b, max_len), dtype=np.int64)
    seq_mask = np.zeros((b, max_len), dtype=np.float64)
    last_pos = np.zeros(b, dtype=np.int64)

    for i, g in enumerate(graphs):
        n, l = g.n_nodes, len(g.alias)
        node_idx[i, :n] = g.nodes
        a_in[i, :n, :n] = g.a_in
        a_out[i, :n, :n] = g.a_out
        node_mask[i, :n] = 1.0
        alias[i, :l] = g.alias
        seq_mask[i, :l] = 1.0
        last_pos[i] = l - 1

    return GraphBatch(node_idx=node_idx, a_in=a_in, a_out=a_out, node_mask=node_mask,
                      alias=alias, seq_mask=seq_mask, last_pos=last_pos,
                      dummy_index=dummy_index)
