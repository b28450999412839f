"""Minimal reverse-mode autodiff over numpy arrays.

Exactly the operations the encoder-decoder stacks need: broadcasting add and
multiply, two matmul flavors, relu, layer norm, softmax, embedding gather,
row-assembly helpers for the dynamic evidence vocabulary, dropout and the
cross-entropy heads. Gradients accumulate in graph-construction order, so a
fixed seed and fixed data order give bit-identical results on one machine.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def _needs(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def _accum(t: Tensor, g: np.ndarray, fresh: bool = False) -> None:
    """Accumulate into t.grad. `fresh` marks arrays this closure allocated and
    will never touch again, so the first accumulation may take ownership;
    pass-through views of a child's grad buffer must be copied instead."""
    if not _needs(t):
        return
    if t.grad is None:
        t.grad = g if fresh else np.array(g)
    else:
        t.grad += g


def _make(data, parents, backward) -> Tensor:
    if _GRAD_ENABLED and any(_needs(p) for p in parents):
        return Tensor(data, parents=parents, backward=backward)
    return Tensor(data)


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss; grads accumulate into .grad."""
    if loss.data.ndim != 0:
        raise ValueError("backward() expects a scalar loss")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def constant(data) -> Tensor:
    return Tensor(np.asarray(data))


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def back(g):
        if _needs(a):
            ga = _unbroadcast(g, a.data.shape)
            _accum(a, ga, fresh=ga is not g)
        if _needs(b):
            gb = _unbroadcast(g, b.data.shape)
            _accum(b, gb, fresh=gb is not g)

    return _make(out, (a, b), back)


def mul(a: Tensor, b) -> Tensor:
    bt = b if isinstance(b, Tensor) else constant(b)
    out = a.data * bt.data

    def back(g):
        if _needs(a):
            _accum(a, _unbroadcast(g * bt.data, a.data.shape), fresh=True)
        if _needs(bt):
            _accum(bt, _unbroadcast(g * a.data, bt.data.shape), fresh=True)

    return _make(out, (a, bt), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Either (..., m, k) @ (k, n) projection or same-rank batched matmul.

    Projections collapse the leading axes into one GEMM; numpy's stacked
    matmul would otherwise issue one tiny BLAS call per slice, which
    dominates runtime for short sequences.
    """
    if b.data.ndim != 2 and a.data.ndim != b.data.ndim:
        raise ValueError(f"unsupported matmul ranks {a.data.ndim} @ {b.data.ndim}")
    if b.data.ndim == 2 and a.data.ndim > 2:
        k, n = b.data.shape
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.data.shape[:-1] + (n,))
    else:
        out = a.data @ b.data

    def back(g):
        if b.data.ndim == 2:
            k, n = b.data.shape
            gf = g.reshape(-1, n)
            if _needs(a):
                _accum(a, (gf @ b.data.T).reshape(a.data.shape), fresh=True)
            if _needs(b):
                _accum(b, a.data.reshape(-1, k).T @ gf, fresh=True)
        else:
            if _needs(a):
                _accum(a, g @ b.data.swapaxes(-1, -2), fresh=True)
            if _needs(b):
                _accum(b, a.data.swapaxes(-1, -2) @ g, fresh=True)

    return _make(out, (a, b), back)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def back(g):
        _accum(x, g * (x.data > 0), fresh=True)

    return _make(out, (x,), back)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximation GELU; smooth everywhere (finite-difference friendly)."""
    xd = x.data
    inner = xd * xd
    inner *= xd
    inner *= _GELU_A
    inner += xd
    inner *= _GELU_C
    t = np.tanh(inner)
    out = 1.0 + t
    out *= xd
    out *= 0.5

    def back(g):
        # d/dx [0.5 x (1 + t)] = 0.5 (1 + t) + 0.5 x (1 - t^2) inner'
        slope = xd * xd
        slope *= 3.0 * _GELU_A
        slope += 1.0
        slope *= _GELU_C
        slope *= 1.0 - t * t
        slope *= xd
        slope += 1.0 + t
        slope *= 0.5
        slope *= g
        _accum(x, slope, fresh=True)

    return _make(out, (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def back(g):
        _accum(x, g.reshape(x.data.shape))

    return _make(out, (x,), back)


def transpose(x: Tensor, axes) -> Tensor:
    out = x.data.transpose(axes)
    inv = np.argsort(axes)

    def back(g):
        _accum(x, g.transpose(inv))

    return _make(out, (x,), back)


def gather(x: Tensor, idx: np.ndarray) -> Tensor:
    """Index the first axis; used for token and position embeddings."""
    out = x.data[idx]

    def back(g):
        if not _needs(x):
            return
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, idx, g)

    return _make(out, (x,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    d = x.data.shape[-1]

    def back(g):
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        _accum(x, dx, fresh=True)
        _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0), fresh=True)
        _accum(bias, g.reshape(-1, d).sum(axis=0), fresh=True)

    return _make(out, (x, gain, bias), back)


def softmax_last(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        _accum(x, (g - (g * s).sum(axis=-1, keepdims=True)) * s, fresh=True)

    return _make(s, (x,), back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    keep /= np.asarray(1.0 - rate, dtype=x.data.dtype)
    out = x.data * keep

    def back(g):
        _accum(x, g * keep, fresh=True)

    return _make(out, (x,), back)


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over axis 1 of (M, T, d) restricted to mask (M, T); rows need >=1 hit."""
    counts = mask.sum(axis=1)
    w = (mask / counts[:, None]).astype(x.data.dtype)
    out = (x.data * w[:, :, None]).sum(axis=1)

    def back(g):
        _accum(x, g[:, None, :] * w[:, :, None], fresh=True)

    return _make(out, (x,), back)


def assemble_candidates(
    pooled: Tensor, eoe: Tensor, batch_idx: np.ndarray, slot_idx: np.ndarray,
    n_batch: int, n_slots: int,
) -> Tensor:
    """Per-claim candidate matrix (B, n_slots, d): slot 0 is the EOE embedding,
    pooled sentence row i lands at (batch_idx[i], slot_idx[i]). Unfilled slots
    stay zero and must be masked by the caller."""
    d = pooled.data.shape[-1]
    out = np.zeros((n_batch, n_slots, d), dtype=pooled.data.dtype)
    out[:, 0, :] = eoe.data
    out[batch_idx, slot_idx] = pooled.data

    def back(g):
        _accum(pooled, g[batch_idx, slot_idx], fresh=True)
        _accum(eoe, g[:, 0, :].sum(axis=0), fresh=True)

    return _make(out, (pooled, eoe), back)


def assemble_inputs(pooled: Tensor, start: Tensor, idx_map: np.ndarray) -> Tensor:
    """Teacher-forcing inputs (B, S, d) for the evidence decoder.

    idx_map values: -1 start vector, -2 zero padding, >=0 pooled row index.
    """
    n_batch, n_steps = idx_map.shape
    d = pooled.data.shape[-1]
    out = np.zeros((n_batch, n_steps, d), dtype=pooled.data.dtype)
    is_start = idx_map == -1
    is_row = idx_map >= 0
    out[is_start] = start.data
    out[is_row] = pooled.data[idx_map[is_row]]

    def back(g):
        _accum(start, g[is_start].sum(axis=0), fresh=True)
        if _needs(pooled):
            if pooled.grad is None:
                pooled.grad = np.zeros_like(pooled.data)
            np.add.at(pooled.grad, idx_map[is_row], g[is_row])

    return _make(out, (pooled, start), back)


def cross_entropy(logits: Tensor, targets: np.ndarray, smoothing: float = 0.0) -> Tensor:
    """Mean cross-entropy over rows, with optional uniform label smoothing.

    The smoothed target puts (1 - smoothing) on the gold class and spreads
    `smoothing` uniformly over all K classes; a uniform model therefore scores
    ln K regardless of the gold labels.
    """
    n, k = logits.data.shape
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - logz
    rows = np.arange(n)
    gold = logp[rows, targets]
    if smoothing > 0.0:
        per_row = -(1.0 - smoothing) * gold - (smoothing / k) * logp.sum(axis=-1)
    else:
        per_row = -gold
    out = np.asarray(per_row.mean(), dtype=logits.data.dtype)

    def back(g):
        p = np.exp(logp)
        q = np.zeros_like(p)
        q[rows, targets] = 1.0
        if smoothing > 0.0:
            q *= 1.0 - smoothing
            q += smoothing / k
        _accum(logits, (p - q) * (g / n), fresh=True)

    return _make(out, (logits,), back)


def log_softmax64(logits: np.ndarray) -> np.ndarray:
    """Float64 log-softmax used for decode-time scoring (not a graph op)."""
    x = np.asarray(logits, dtype=np.float64)
    x = x - x.max()
    return x - np.log(np.exp(x).sum())


# -- optimization -----------------------------------------------------------


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def global_grad_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for name in sorted(params):
        g = params[name].grad
        if g is not None:
            total += float((g.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale grads in place to max_norm; returns the pre-clip global norm."""
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for name in sorted(params):
            g = params[name].grad
            if g is not None:
                g *= np.asarray(scale, dtype=g.dtype)
    return norm


class Adam:
    """Adam with bias correction; state is checkpointable for exact resume."""

    def __init__(self, params: dict[str, Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.names = sorted(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(params[n].data) for n in self.names}
        self.v = {n: np.zeros_like(params[n].data) for n in self.names}

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name in self.names:
            p = self.params[name]
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= np.asarray(lr, dtype=p.data.dtype) * update

    def state_dict(self) -> dict:
        return {"t": self.t,
                "m": {n: a.copy() for n, a in self.m.items()},
                "v": {n: a.copy() for n, a in self.v.items()}}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for name in self.names:
            self.m[name] = state["m"][name].copy()
            self.v[name] = state["v"][name].copy()
