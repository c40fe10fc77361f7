"""Small dense-tensor reverse-mode autodiff engine on numpy arrays.

Every operation records its inputs and a backward closure on the produced
Tensor, so a forward pass builds the computation graph implicitly.
``backward(loss, leaves)`` replays the graph in reverse topological order
and returns one gradient array per named leaf. ``finite_diff_check``
verifies any recorded scalar loss against central differences.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

NORM_EPS = 1e-12


class ShapeError(ValueError):
    """Raised on incompatible operand shapes; message names both shapes."""


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64 if np.asarray(data).dtype.kind != "f" else None)
        self.grad = None
        self.parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"

    # operator sugar; scalars are allowed on either side
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, mul_scalar(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul_scalar(self, -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return mul_scalar(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul_scalar(self, -1.0)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def backward(g, out):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g, out):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul_scalar(a: Tensor, c: float) -> Tensor:
    def backward(g, out):
        _accumulate(a, g * c)

    return Tensor(a.data * c, parents=(a,), backward=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires ndim >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward(g, out):
        _accumulate(a, _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape))
        _accumulate(b, _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise ShapeError(f"transpose requires ndim >= 2, got {a.shape}")

    def backward(g, out):
        _accumulate(a, g.swapaxes(-1, -2))

    return Tensor(a.data.swapaxes(-1, -2), parents=(a,), backward=backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g, out):
        _accumulate(a, g.reshape(a.shape))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=backward)


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis."""
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat_last: incompatible shapes {a.shape} and {b.shape}")
    split = a.shape[-1]

    def backward(g, out):
        _accumulate(a, g[..., :split])
        _accumulate(b, g[..., split:])

    return Tensor(np.concatenate([a.data, b.data], axis=-1), parents=(a, b), backward=backward)


def sigmoid(a: Tensor) -> Tensor:
    out_data = np.empty_like(a.data)
    pos = a.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out_data[~pos] = ez / (1.0 + ez)

    def backward(g, out):
        _accumulate(a, g * out.data * (1.0 - out.data))

    return Tensor(out_data, parents=(a,), backward=backward)


def tanh(a: Tensor) -> Tensor:
    def backward(g, out):
        _accumulate(a, g * (1.0 - out.data**2))

    return Tensor(np.tanh(a.data), parents=(a,), backward=backward)


def exp(a: Tensor) -> Tensor:
    def backward(g, out):
        _accumulate(a, g * out.data)

    return Tensor(np.exp(a.data), parents=(a,), backward=backward)


def log(a: Tensor) -> Tensor:
    def backward(g, out):
        _accumulate(a, g / a.data)

    return Tensor(np.log(a.data), parents=(a,), backward=backward)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g, out):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
        else:
            g_exp = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g_exp, a.shape).copy())

    return Tensor(out_data, parents=(a,), backward=backward)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return mul_scalar(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax_last(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along the last axis; positions where mask == 0 get probability 0.

    `mask` is a constant (not differentiated through) broadcastable to a.shape.
    """
    x = a.data
    if mask is not None:
        x = np.where(mask > 0, x, -np.inf)
    x_max = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - x_max)
    if mask is not None:
        e = np.where(mask > 0, e, 0.0)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g, out):
        y = out.data
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accumulate(a, y * (g - dot))

    return Tensor(out_data, parents=(a,), backward=backward)


def l2_normalize_rows(a: Tensor, live_mask: np.ndarray | None = None) -> Tensor:
    """Normalize each row (last axis) to unit L2 norm.

    Rows where live_mask == 0 are passed through as zero, without a norm
    check (reserved for pinned-zero padding rows). A live row with norm
    below NORM_EPS is a hard error: a dead embedding, not a valid state.
    """
    norms = np.linalg.norm(a.data, axis=-1, keepdims=True)
    if live_mask is None:
        if np.any(norms < NORM_EPS):
            raise ValueError("l2_normalize_rows: row with near-zero norm")
        out_data = a.data / norms

        def backward(g, out):
            n = norms
            proj = (g * a.data).sum(axis=-1, keepdims=True)
            _accumulate(a, g / n - a.data * proj / n**3)

        return Tensor(out_data, parents=(a,), backward=backward)

    live = np.asarray(live_mask, dtype=bool).reshape(a.shape[:-1] + (1,))
    if np.any((norms < NORM_EPS) & live):
        raise ValueError("l2_normalize_rows: live row with near-zero norm")
    safe = np.where(live, norms, 1.0)
    out_data = np.where(live, a.data / safe, 0.0)

    def backward(g, out):
        proj = (g * a.data).sum(axis=-1, keepdims=True)
        grad = g / safe - a.data * proj / safe**3
        _accumulate(a, np.where(live, grad, 0.0))

    return Tensor(out_data, parents=(a,), backward=backward)


def gather(table: Tensor, idx: np.ndarray) -> Tensor:
    """Row lookup: out[..., :] = table[idx[...], :]; scatter-add gradient."""
    idx = np.asarray(idx)
    out_data = table.data[idx]

    def backward(g, out):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    return Tensor(out_data, parents=(table,), backward=backward)


def gather_nodes(x: Tensor, alias: np.ndarray) -> Tensor:
    """Batched row select: out[b, j, :] = x[b, alias[b, j], :]."""
    alias = np.asarray(alias)
    batch_idx = np.arange(x.shape[0])[:, None]
    out_data = x.data[batch_idx, alias]

    def backward(g, out):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, (batch_idx, alias), g)

    return Tensor(out_data, parents=(x,), backward=backward)


def gather_elements(x: Tensor, idx: np.ndarray) -> Tensor:
    """Per-row element select: out[b] = x[b, idx[b]]."""
    idx = np.asarray(idx)
    rows = np.arange(x.shape[0])
    out_data = x.data[rows, idx]

    def backward(g, out):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, (rows, idx), g)

    return Tensor(out_data, parents=(x,), backward=backward)


def dropout(a: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: Bernoulli keep-mask scaled by 1/(1-p). Identity in eval mode."""
    if not train or p == 0.0:
        return a
    keep = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)

    def backward(g, out):
        _accumulate(a, g * keep)

    return Tensor(a.data * keep, parents=(a,), backward=backward)


def masked_sum(a: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Sum over `axis` counting only positions where mask > 0."""
    m = np.asarray(mask, dtype=a.data.dtype)
    while m.ndim < a.ndim:
        m = m[..., None]
    return tsum(mul(a, Tensor(np.broadcast_to(m, a.shape).copy())), axis=axis)


def masked_mean(a: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    m = np.asarray(mask, dtype=a.data.dtype)
    counts = m.sum(axis=axis)
    if np.any(counts == 0):
        raise ValueError("masked_mean: empty mask along axis")
    summed = masked_sum(a, mask, axis)
    denom = counts
    while denom.ndim < summed.ndim:
        denom = denom[..., None]
    return mul(summed, Tensor(1.0 / denom))


# ---------------------------------------------------------------------------
# backward pass and verification
# ---------------------------------------------------------------------------

def _topo_order(loss: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, leaves: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar loss w.r.t. named leaf tensors.

    Leaves unreachable from the loss get an all-zero gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad, node)
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in leaves.items()
    }


def finite_diff_check(
    loss_fn: Callable[[dict[str, Tensor]], Tensor],
    values: dict[str, np.ndarray],
    eps: float = 1e-5,
    max_entries_per_leaf: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    `loss_fn` rebuilds the computation from plain arrays each call, so the
    numeric side never reuses the recorded graph. Relative error denominator
    is max(|analytic|, |numeric|, 1e-8).
    """
    leaves = {k: Tensor(v.copy(), requires_grad=True, name=k) for k, v in values.items()}
    analytic = backward(loss_fn(leaves), leaves)

    def eval_loss(vals):
        return float(loss_fn({k: Tensor(v) for k, v in vals.items()}).data)

    max_rel = 0.0
    for name, base in values.items():
        flat = base.reshape(-1)
        n = flat.size
        if max_entries_per_leaf is not None and n > max_entries_per_leaf:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(n, size=max_entries_per_leaf, replace=False)
        else:
            coords = range(n)
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = eval_loss(values)
            flat[i] = orig - eps
            f_minus = eval_loss(values)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            max_rel = max(max_rel, abs(a_flat[i] - numeric) / denom)
    return max_rel
