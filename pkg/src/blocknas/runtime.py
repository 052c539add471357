"""
Minimal dense-tensor runtime: float64 numpy arrays on a reverse-mode tape,
plus an Adam optimizer and a FLOP counter.

Everything is desk scale and single threaded; one tape is implicit in the
Tensor graph, so independent models just use independent Tensors.

FLOP accounting convention (used by the cost-model oracle):
  * every scalar multiply / add / subtract / divide / sqrt / exp counts 1
  * accumulating K products counts K adds (multiply-add = 2 FLOPs)
  * affine (B,K)@(K,M)+bias = 2*B*K*M + B*M
  * batch matmul (B,N,D)@(B,D,M) = 2*B*N*D*M
  * middle-axis projection (M,N)x(B,N,D) = 2*B*M*N*D
  * fused layer norm, width W = 7*W + 4 per normalized row
  * activations per element: relu 1, sigmoid 4, identity 0
  * padded accumulation of a width-w piece = B*w adds
  * reshape / transpose / gather / concat are data movement, 0 FLOPs
Counts are only recorded inside a `flop_counter()` context.
"""

from __future__ import annotations

import contextlib

import numpy as np


class DimensionError(ValueError):
    """Tensor shapes do not satisfy an operation's contract."""


class TrainingError(RuntimeError):
    """Non-finite loss or gradient surfaced during optimization."""


# ---------------------------------------------------------------------------
# FLOP counter
# ---------------------------------------------------------------------------

_FLOP_STACK: list[list[int]] = []


def _count(n: int) -> None:
    if _FLOP_STACK:
        _FLOP_STACK[-1][0] += int(n)


@contextlib.contextmanager
def flop_counter():
    """Context manager yielding a one-element list accumulating forward FLOPs."""
    cell = [0]
    _FLOP_STACK.append(cell)
    try:
        yield cell
    finally:
        _FLOP_STACK.pop()


# ---------------------------------------------------------------------------
# Tensor and tape
# ---------------------------------------------------------------------------

class Tensor:
    """A float64 array plus the closure needed to backpropagate through it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}, name={self.name!r})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward) -> Tensor:
    """Internal: build a graph node; drops the tape when no parent needs grads."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor) -> None:
    """Reverse-topological gradient accumulation from a scalar loss node."""
    if loss.data.ndim != 0:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# Broadcasting binary ops
# ---------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast to reach `g.shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    _count(out.size)

    def back(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    _count(out.size)

    def back(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _node(out, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    _count(out.size)

    def back(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), back)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    _count(out.size)

    def back(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(out, (a, b), back)


def scale(a, s: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = as_tensor(a)
    out = a.data * s
    _count(out.size)

    def back(g):
        _accum(a, g * s)

    return _node(out, (a,), back)


def affine_const(a, k: float, c: float) -> Tensor:
    """k*a + c with scalar constants (e.g. 1 - x via k=-1, c=1)."""
    a = as_tensor(a)
    out = k * a.data + c
    _count(2 * out.size)

    def back(g):
        _accum(a, g * k)

    return _node(out, (a,), back)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a, w, bias=None) -> Tensor:
    """2D affine: (B,K) @ (K,M) with optional (M,) bias broadcast over rows."""
    a, w = as_tensor(a), as_tensor(w)
    if a.data.ndim != 2 or w.data.ndim != 2 or a.data.shape[1] != w.data.shape[0]:
        raise DimensionError(f"matmul shapes {a.data.shape} x {w.data.shape}")
    out = a.data @ w.data
    B, K = a.data.shape
    M = w.data.shape[1]
    _count(2 * B * K * M)
    parents = [a, w]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (M,):
            raise DimensionError(f"bias shape {bias.data.shape} != ({M},)")
        out = out + bias.data
        _count(B * M)
        parents.append(bias)

    def back(g):
        _accum(a, g @ w.data.T)
        _accum(w, a.data.T @ g)
        if bias is not None:
            _accum(bias, g.sum(axis=0))

    return _node(out, parents, back)


def bmm(a, b) -> Tensor:
    """Batch matmul: (B,N,D) @ (B,D,M) -> (B,N,M)."""
    a, b = as_tensor(a), as_tensor(b)
    if (a.data.ndim != 3 or b.data.ndim != 3 or a.data.shape[0] != b.data.shape[0]
            or a.data.shape[2] != b.data.shape[1]):
        raise DimensionError(f"bmm shapes {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data
    B, N, D = a.data.shape
    M = b.data.shape[2]
    _count(2 * B * N * D * M)

    def back(g):
        _accum(a, g @ b.data.transpose(0, 2, 1))
        _accum(b, a.data.transpose(0, 2, 1) @ g)

    return _node(out, (a, b), back)


def embed_project(w, x) -> Tensor:
    """Middle-axis projection: (M,N) weight applied to (B,N,D) -> (B,M,D)."""
    w, x = as_tensor(w), as_tensor(x)
    if w.data.ndim != 2 or x.data.ndim != 3 or w.data.shape[1] != x.data.shape[1]:
        raise DimensionError(f"embed_project shapes {w.data.shape} x {x.data.shape}")
    out = np.einsum("mn,bnd->bmd", w.data, x.data)
    B, N, D = x.data.shape
    M = w.data.shape[0]
    _count(2 * B * M * N * D)

    def back(g):
        _accum(w, np.einsum("bmd,bnd->mn", g, x.data))
        _accum(x, np.einsum("mn,bmd->bnd", w.data, g))

    return _node(out, (w, x), back)


def transpose23(a) -> Tensor:
    """Swap the last two axes of a 3D tensor."""
    a = as_tensor(a)
    if a.data.ndim != 3:
        raise DimensionError(f"transpose23 needs a 3D tensor, got {a.data.shape}")
    out = a.data.transpose(0, 2, 1)

    def back(g):
        _accum(a, g.transpose(0, 2, 1))

    return _node(out, (a,), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def back(g):
        _accum(a, g.reshape(a.data.shape))

    return _node(out, (a,), back)


def concat(parts, axis: int) -> Tensor:
    """Concatenate tensors along `axis`; gradient splits back."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat of an empty list")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    return _node(out, parts, back)


def index_rows(w, idx) -> Tensor:
    """Gather rows of a 2D parameter (data movement, 0 FLOPs)."""
    w = as_tensor(w)
    idx = np.asarray(idx, dtype=np.intp)
    out = np.ascontiguousarray(w.data[idx, :])

    def back(g):
        if w.requires_grad:
            if w.grad is None:
                w.grad = np.zeros_like(w.data)
            np.add.at(w.grad, idx, g)

    return _node(out, (w,), back)


def index_cols(w, idx) -> Tensor:
    """Gather columns of a 2D parameter (kept C-contiguous: BLAS rounding
    must not depend on whether a weight was gathered or used whole)."""
    w = as_tensor(w)
    idx = np.asarray(idx, dtype=np.intp)
    out = np.ascontiguousarray(w.data[:, idx])

    def back(g):
        if w.requires_grad:
            if w.grad is None:
                w.grad = np.zeros_like(w.data)
            np.add.at(w.grad, (slice(None), idx), g)

    return _node(out, (w,), back)


def index_vec(v, idx) -> Tensor:
    """Gather entries of a 1D parameter."""
    v = as_tensor(v)
    idx = np.asarray(idx, dtype=np.intp)
    out = v.data[idx]

    def back(g):
        if v.requires_grad:
            if v.grad is None:
                v.grad = np.zeros_like(v.data)
            np.add.at(v.grad, idx, g)

    return _node(out, (v,), back)


def padded_accumulate(pieces, positions, width: int) -> Tensor:
    """Sum 2D pieces into a (B, width) buffer at the given column positions.

    This is the zero-pad-then-sum aggregator: each piece i lands at
    positions[i] (len == piece width) and is accumulated; cost is the adds
    actually performed, B * sum(w_i).
    """
    pieces = [as_tensor(p) for p in pieces]
    if not pieces:
        raise DimensionError("padded_accumulate of an empty list")
    B = pieces[0].data.shape[0]
    out = np.zeros((B, width))
    poss = []
    for p, pos in zip(pieces, positions):
        pos = np.asarray(pos, dtype=np.intp)
        if p.data.shape != (B, len(pos)):
            raise DimensionError(
                f"piece shape {p.data.shape} vs batch {B}, positions {len(pos)}")
        out[:, pos] += p.data
        _count(B * len(pos))
        poss.append(pos)

    def back(g):
        for p, pos in zip(pieces, poss):
            _accum(p, g[:, pos])

    return _node(out, pieces, back)


# ---------------------------------------------------------------------------
# Nonlinearities, norms, reductions
# ---------------------------------------------------------------------------

def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    _count(out.size)

    def back(g):
        _accum(a, g * (a.data > 0))

    return _node(out, (a,), back)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid_np(a.data)
    _count(4 * out.size)

    def back(g):
        _accum(a, g * out * (1.0 - out))

    return _node(out, (a,), back)


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    # piecewise form avoids exp overflow at |z| ~ 1e3
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    _count(out.size)

    def back(g):
        _accum(a, g * out)

    return _node(out, (a,), back)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    _count(out.size)

    def back(g):
        _accum(a, g / (2.0 * out))

    return _node(out, (a,), back)


def absolute(a) -> Tensor:
    """|a| with sign subgradient (0 at exactly 0)."""
    a = as_tensor(a)
    out = np.abs(a.data)
    _count(out.size)

    def back(g):
        _accum(a, g * np.sign(a.data))

    return _node(out, (a,), back)


def sum_last(a, keepdims: bool = True) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=-1, keepdims=keepdims)
    _count(a.data.size)

    def back(g):
        gg = g if keepdims else np.expand_dims(g, -1)
        _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return _node(out, (a,), back)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum()
    _count(a.data.size)

    def back(g):
        _accum(a, np.full(a.data.shape, float(g)))

    return _node(out, (a,), back)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    out = a.data.sum() / n
    _count(n + 1)

    def back(g):
        _accum(a, np.full(a.data.shape, float(g) / n))

    return _node(out, (a,), back)


def vmax(a) -> Tensor:
    """Max over all entries; gradient routes to the first argmax."""
    a = as_tensor(a)
    flat_idx = int(np.argmax(a.data))
    out = a.data.reshape(-1)[flat_idx]

    def back(g):
        gg = np.zeros_like(a.data)
        gg.reshape(-1)[flat_idx] = float(g)
        _accum(a, gg)

    return _node(out, (a,), back)


ACTIVATIONS = ("relu", "sigmoid", "identity")


def layer_norm_act(x, gain, bias, activation: str = "identity",
                   eps: float = 1e-5, mask=None) -> Tensor:
    """Fused layer norm over the last axis followed by an activation.

    y = act(gain * (x - mean) / sqrt(var + eps) + bias), statistics per row.
    With a constant 0/1 `mask` (length = last axis) the statistics are taken
    over the masked entries only and the post-activation output is
    re-masked, so it matches slicing to the unmasked positions. Gradients do
    not flow into the mask. Zero-variance rows are well defined thanks to
    the eps guard. Counted as 7*W + 4 FLOPs per row (10*W + 4 masked) plus
    the activation's per-element cost.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    W = x.data.shape[-1]
    if W == 0:
        raise DimensionError("layer_norm_act over an empty last axis")
    if gain.data.shape != (W,) or bias.data.shape != (W,):
        raise DimensionError(f"gain/bias must have shape ({W},)")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if mask is None:
        n = float(W)
        mu = x.data.sum(axis=-1, keepdims=True) / n
        xc = x.data - mu
        var = (xc * xc).sum(axis=-1, keepdims=True) / n
    else:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (W,):
            raise DimensionError(f"mask must have shape ({W},)")
        n = float(mask.sum()) or 1.0  # all-zero mask degenerates to zeros out
        mu = (x.data * mask).sum(axis=-1, keepdims=True) / n
        xc = x.data - mu
        var = ((xc * xc) * mask).sum(axis=-1, keepdims=True) / n
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y0 = gain.data * xhat + bias.data
    rows = x.data.size // W
    _count(rows * ((7 if mask is None else 10) * W + 4))
    if activation == "relu":
        out = np.maximum(y0, 0.0)
        _count(out.size)
    elif activation == "sigmoid":
        out = _sigmoid_np(y0)
        _count(4 * out.size)
    else:
        out = y0
    if mask is not None:
        out = out * mask
        _count(out.size)

    def back(g):
        if mask is not None:
            g = g * mask
        if activation == "relu":
            g = g * (y0 > 0)
        elif activation == "sigmoid":
            s = _sigmoid_np(y0)
            g = g * s * (1.0 - s)
        _accum(gain, (g * xhat).reshape(-1, W).sum(axis=0))
        _accum(bias, g.reshape(-1, W).sum(axis=0))
        dxhat = g * gain.data
        m = 1.0 if mask is None else mask
        s1 = dxhat.sum(axis=-1, keepdims=True)
        s2 = (dxhat * xhat).sum(axis=-1, keepdims=True)
        _accum(x, inv * (dxhat - m * (s1 + xhat * s2) / n))

    return _node(out, (x, gain, bias), back)


def softmax_vec(z) -> Tensor:
    """Stable softmax of a 1D logit vector."""
    z = as_tensor(z)
    if z.data.ndim != 1:
        raise DimensionError("softmax_vec needs a 1D vector")
    shifted = z.data - z.data.max()
    e = np.exp(shifted)
    s = e / e.sum()
    _count(4 * z.data.size)

    def back(g):
        _accum(z, s * (g - float(np.dot(g, s))))

    return _node(s, (z,), back)


def binary_cross_entropy(logits, labels) -> Tensor:
    """Mean BCE of logits (B,) or (B,1) against binary labels, stable form."""
    logits = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    z = logits.data.reshape(-1)
    if z.shape != y.shape:
        raise DimensionError(f"logits {z.shape} vs labels {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary")
    # max(z,0) - z*y + log(1+exp(-|z|))
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = per.mean()
    _count(6 * z.size)

    def back(g):
        dz = (_sigmoid_np(z) - y) * (float(g) / z.size)
        _accum(logits, dz.reshape(logits.data.shape))

    return _node(out, (logits,), back)


def zero_pad_sum(xs) -> Tensor:
    """Right-pad 2D tensors with zeros to the widest and sum them."""
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ValueError("zero_pad_sum of an empty list")
    for x in xs:
        if x.data.ndim != 2 or x.data.shape[0] != xs[0].data.shape[0]:
            raise DimensionError("zero_pad_sum needs 2D tensors with equal batch")
    width = max(x.data.shape[1] for x in xs)
    return padded_accumulate(xs, [np.arange(x.data.shape[1]) for x in xs], width)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction over a list of parameter Tensors."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {p.name or 'param'}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[i] / c1
            vhat = self.v[i] / c2
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self) -> dict:
        """Flat arrays for checkpointing."""
        out = {"adam_step": np.array([self.step_count])}
        for i, _ in enumerate(self.params):
            out[f"adam_m_{i}"] = self.m[i]
            out[f"adam_v_{i}"] = self.v[i]
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        self.step_count = int(arrays["adam_step"][0])
        for i, _ in enumerate(self.params):
            self.m[i] = np.asarray(arrays[f"adam_m_{i}"], dtype=np.float64)
            self.v[i] = np.asarray(arrays[f"adam_v_{i}"], dtype=np.float64)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_params(store: dict, path) -> None:
    """Write a flat name -> array map (hierarchical dotted names) as .npz."""
    np.savez(path, **{name: t.data for name, t in store.items()})


def load_params(store: dict, path) -> None:
    """Load arrays into an existing store; shapes must match."""
    with np.load(path) as arrays:
        for name, t in store.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter {name!r}")
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise DimensionError(
                    f"checkpoint shape {arr.shape} != {t.data.shape} for {name!r}")
            t.data = arr.copy()
