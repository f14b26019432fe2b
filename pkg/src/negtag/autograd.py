"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable op computes its forward value with numpy and, when a
:class:`Tape` is active and any input requires a gradient, appends a node
holding a closure that maps output gradients to input gradients. Calling
:meth:`Tape.backward` walks the nodes in exact reverse recording order.

LSTM steps and whole unrolled LSTM sequences are single fused nodes so
per-sentence graphs stay small.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, DivergenceError, UsageError


class Tensor:
    """A dense array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "fc":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _as_tensor(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    outputs: tuple[Tensor, ...]
    backward: Callable[..., Sequence[np.ndarray | None]]


_local = threading.local()


class Tape:
    """Ordered record of executed ops.

    Use as a context manager; ops executed inside the block are recorded.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = getattr(_local, "tape", None)
        _local.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _local.tape = self._prev

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor) -> None:
        """Populate ``.grad`` of every requires-grad tensor reachable from ``loss``."""
        if loss.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
        seed = np.ones_like(loss.data)
        loss.accumulate(seed)
        for node in reversed(self.nodes):
            out_grads = [o.grad for o in node.outputs]
            if all(g is None for g in out_grads):
                continue
            out_grads = [
                np.zeros_like(o.data) if g is None else g for o, g in zip(node.outputs, out_grads)
            ]
            in_grads = node.backward(*out_grads)
            for t, g in zip(node.inputs, in_grads):
                if g is not None and t.requires_grad:
                    t.accumulate(g)
            # intermediate buffers are no longer needed once propagated
            for o in node.outputs:
                if not _is_leaf(o):
                    o.grad = None

    def clear(self) -> None:
        self.nodes.clear()


def _is_leaf(t: Tensor) -> bool:
    return t.name is not None


def active_tape() -> Tape | None:
    return getattr(_local, "tape", None)


def _record(op: str, inputs: tuple[Tensor, ...], outputs: tuple[Tensor, ...], backward) -> None:
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return
    for o in outputs:
        o.requires_grad = True
    tape.nodes.append(Node(op, inputs, outputs, backward))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise and reductions -------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    _record("add", (a, b), (out,), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    _record("sub", (a, b), (out,), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    _record(
        "mul",
        (a, b),
        (out,),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )
    return out


def add_n(xs: Sequence[Tensor]) -> Tensor:
    """Sum of same-shaped tensors as one node."""
    if not xs:
        raise UsageError("add_n of an empty list")
    total = xs[0].data.copy()
    for x in xs[1:]:
        total = total + x.data
    out = Tensor(total)
    _record("add_n", tuple(xs), (out,), lambda g: [g] * len(xs))
    return out


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = Tensor(np.asarray(x.data.sum(), dtype=x.dtype))
    _record("sum", (x,), (out,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(np.asarray(np.dot(a.data.ravel(), b.data.ravel()), dtype=a.dtype))
    _record("dot", (a, b), (out,), lambda g: (g * b.data, g * a.data))
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y)
    _record("tanh", (x,), (out,), lambda g: (g * (1.0 - y * y),))
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free and a single ufunc call
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    out = Tensor(y)
    _record("sigmoid", (x,), (out,), lambda g: (g * y * (1.0 - y),))
    return out


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data))
    _record("log", (x,), (out,), lambda g: (g / x.data,))
    return out


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    out = Tensor(y)
    _record("exp", (x,), (out,), lambda g: (g * y,))
    return out


# -- linear algebra and indexing --------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data)

    def backward(g):
        ga = g @ b.data.T if b.data.ndim == 2 else np.outer(g, b.data)
        if a.data.ndim == 1:
            gb = np.outer(a.data, g)
        else:
            gb = a.data.T @ g
        return ga, gb

    _record("matmul", (a, b), (out,), backward)
    return out


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape [..., D] and ``weight`` [K, D]."""
    out = Tensor(x.data @ np.ascontiguousarray(weight.data.T) + bias.data)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        return g @ weight.data, g2.T @ x2, g2.sum(axis=0)

    _record("affine", (x, weight, bias), (out,), backward)
    return out


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    out = Tensor(np.concatenate([x.data for x in xs], axis=axis))
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return np.split(g, cuts, axis=axis)

    _record("concat", tuple(xs), (out,), backward)
    return out


def embed(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradients scatter-add back into the table."""
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids])

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    _record("embed", (table,), (out,), backward)
    return out


gather_rows = embed


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data)


# -- neural primitives ---------------------------------------------------------------


@dataclass
class LstmCellParams:
    """Weights of one LSTM cell. Gate blocks are ordered input, forget, candidate, output."""

    input_weights: Tensor  # [4H, D]
    recurrent_weights: Tensor  # [4H, H]
    bias: Tensor  # [4H]

    @property
    def hidden_size(self) -> int:
        return self.recurrent_weights.shape[1]

    @property
    def input_size(self) -> int:
        return self.input_weights.shape[1]

    def tensors(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.input_weights, self.recurrent_weights, self.bias


def _gate_scale(H: int, dtype) -> np.ndarray:
    scale = np.full(4 * H, 0.5, dtype=dtype)
    scale[2 * H : 3 * H] = 1.0
    return scale


def _gates(z: np.ndarray, H: int):
    """Split pre-activations into (input, forget, candidate, output) activations."""
    t = np.tanh(z * _gate_scale(H, z.dtype))
    s = 0.5 * (1.0 + t)
    return s[..., :H], s[..., H : 2 * H], t[..., 2 * H : 3 * H], s[..., 3 * H :]


def lstm_step(
    params: LstmCellParams,
    x: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
    mask: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """One LSTM step without peepholes.

    ``x`` is [D] or [B, D]. Where ``mask`` (shape [B]) is 0, the previous
    state is carried through unchanged, which is how padded positions are
    skipped.
    """
    H, D = params.hidden_size, params.input_size
    if x.shape[-1] != D or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ConfigError(
            f"lstm_step shape mismatch: x{x.shape} h{h_prev.shape} c{c_prev.shape} for D={D}, H={H}"
        )
    Wx, Wh, b = params.tensors()
    xd, hd, cd = x.data, h_prev.data, c_prev.data
    z = xd @ np.ascontiguousarray(Wx.data.T) + hd @ np.ascontiguousarray(Wh.data.T) + b.data
    i, f, gc, o = _gates(z, H)
    c_new = f * cd + i * gc
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is not None:
        m = np.asarray(mask, dtype=xd.dtype)[:, None]
        h_out = m * h_new + (1.0 - m) * hd
        c_out = m * c_new + (1.0 - m) * cd
    else:
        m = None
        h_out, c_out = h_new, c_new
    h_t, c_t = Tensor(h_out), Tensor(c_out)

    def backward(gh, gcell):
        if m is not None:
            gh_new, gc_new = gh * m, gcell * m
            gh_carry, gc_carry = gh * (1.0 - m), gcell * (1.0 - m)
        else:
            gh_new, gc_new = gh, gcell
            gh_carry = gc_carry = 0.0
        do = gh_new * tc
        dc = gc_new + gh_new * o * (1.0 - tc * tc)
        di = dc * gc
        dgc = dc * i
        df = dc * cd
        dz = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dgc * (1.0 - gc * gc), do * o * (1.0 - o)],
            axis=-1,
        )
        dz2 = dz.reshape(-1, 4 * H)
        gx = dz @ Wx.data
        gh_prev = dz @ Wh.data + gh_carry
        gc_prev = dc * f + gc_carry
        gWx = dz2.T @ xd.reshape(-1, D)
        gWh = dz2.T @ hd.reshape(-1, H)
        gb = dz2.sum(axis=0)
        return gx, gh_prev, gc_prev, gWx, gWh, gb

    _record("lstm_step", (x, h_prev, c_prev, Wx, Wh, b), (h_t, c_t), backward)
    return h_t, c_t


def lstm_sequence(
    params: LstmCellParams,
    xs: Tensor,
    mask: np.ndarray | None = None,
    reverse: bool = False,
) -> Tensor:
    """Unroll an LSTM over ``xs`` [T, B, D] from a zero state as one node.

    Returns hidden states [T, B, H] in input order. Masked positions carry
    the previous state, as in :func:`lstm_step`. Numerically this is the
    same recurrence as repeated :func:`lstm_step` calls; the input
    projection and the weight gradients are computed for all steps at once.
    """
    Wx, Wh, b = params.tensors()
    H, D = params.hidden_size, params.input_size
    if xs.data.ndim != 3 or xs.shape[-1] != D:
        raise ConfigError(f"lstm_sequence expects [T, B, {D}] input, got {xs.shape}")
    X = xs.data
    T, B, _ = X.shape
    dt = X.dtype
    Zx = X @ np.ascontiguousarray(Wx.data.T) + b.data
    acts = np.empty((T, B, 4 * H), dtype=dt)
    c_prev_all = np.empty((T, B, H), dtype=dt)
    h_prev_all = np.empty((T, B, H), dtype=dt)
    tc_all = np.empty((T, B, H), dtype=dt)
    Hs = np.empty((T, B, H), dtype=dt)
    M = None if mask is None else np.asarray(mask, dtype=dt)[..., None]
    scale = _gate_scale(H, dt)
    h = np.zeros((B, H), dtype=dt)
    c = np.zeros((B, H), dtype=dt)
    order = range(T - 1, -1, -1) if reverse else range(T)
    WhT = np.ascontiguousarray(Wh.data.T)
    for t in order:
        h_prev_all[t] = h
        c_prev_all[t] = c
        tz = np.tanh((Zx[t] + h @ WhT) * scale)
        a = acts[t]
        a[...] = tz
        a[:, :H] = 0.5 * (1.0 + tz[:, :H])
        a[:, H : 2 * H] = 0.5 * (1.0 + tz[:, H : 2 * H])
        a[:, 3 * H :] = 0.5 * (1.0 + tz[:, 3 * H :])
        c_new = a[:, H : 2 * H] * c + a[:, :H] * a[:, 2 * H : 3 * H]
        tc = np.tanh(c_new)
        tc_all[t] = tc
        h_new = a[:, 3 * H :] * tc
        if M is not None:
            m = M[t]
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
        else:
            h, c = h_new, c_new
        Hs[t] = h
    out = Tensor(Hs)

    def backward(gH):
        dZ = np.empty((T, B, 4 * H), dtype=dt)
        dh = np.zeros((B, H), dtype=dt)
        dc_next = np.zeros((B, H), dtype=dt)
        Whd = Wh.data
        for t in reversed(order):
            gh = gH[t] + dh
            gc = dc_next
            if M is not None:
                m = M[t]
                gh_carry, gc_carry = gh * (1.0 - m), gc * (1.0 - m)
                gh, gc = gh * m, gc * m
            a = acts[t]
            i, f, g, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
            tc = tc_all[t]
            dcell = gc + gh * o * (1.0 - tc * tc)
            dz = dZ[t]
            dz[:, :H] = dcell * g * i * (1.0 - i)
            dz[:, H : 2 * H] = dcell * c_prev_all[t] * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dcell * i * (1.0 - g * g)
            dz[:, 3 * H :] = gh * tc * o * (1.0 - o)
            dh = dz @ Whd
            dc_next = dcell * f
            if M is not None:
                dh = dh + gh_carry
                dc_next = dc_next + gc_carry
        dZ2 = dZ.reshape(T * B, 4 * H)
        gX = dZ @ Wx.data
        gWx = dZ2.T @ X.reshape(T * B, D)
        gWh = dZ2.T @ h_prev_all.reshape(T * B, H)
        gb = dZ2.sum(axis=0)
        return gX, gWx, gWh, gb

    _record("lstm_sequence", (xs, Wx, Wh, b), (out,), backward)
    return out


def take(x: Tensor, index: int, axis: int = 0) -> Tensor:
    """``x`` indexed at ``index`` along ``axis``."""
    out = Tensor(np.take(x.data, index, axis=axis))

    def backward(g):
        gx = np.zeros_like(x.data)
        sl = [slice(None)] * x.data.ndim
        sl[axis] = index
        gx[tuple(sl)] = g
        return (gx,)

    _record("take", (x,), (out,), backward)
    return out


def softmax(logits: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by max subtraction."""
    if logits.data.size == 0 or logits.shape[-1] == 0:
        raise ConfigError("softmax of an empty vector")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    _record("softmax", (logits,), (out,), backward)
    return out


_TINY = 1e-30


def cross_entropy(probs: Tensor, gold, weights: np.ndarray | None = None) -> Tensor:
    """Negative log-likelihood of ``gold`` under ``probs``.

    ``probs`` is [K] with an integer ``gold``, or [..., K] with ``gold`` of
    the leading shape. ``weights`` (leading shape) scales each position;
    padding gets 0. Returns the summed scalar loss.
    """
    p = probs.data
    K = p.shape[-1]
    gold_arr = np.asarray(gold, dtype=np.int64)
    if np.any(gold_arr < 0) or np.any(gold_arr >= K):
        raise DataError(f"gold tag index out of range [0, {K}): {gold_arr.tolist()}")
    if p.ndim == 1:
        pg = max(float(p[int(gold_arr)]), _TINY)
        out = Tensor(np.asarray(-math.log(pg), dtype=p.dtype))

        def backward(g):
            gp = np.zeros_like(p)
            gp[int(gold_arr)] = -g / pg
            return (gp,)

    else:
        p2 = p.reshape(-1, K)
        g_flat = gold_arr.reshape(-1)
        rows = np.arange(p2.shape[0])
        pg = np.maximum(p2[rows, g_flat], _TINY)
        if weights is None:
            w = np.ones(p2.shape[0], dtype=p.dtype)
        else:
            w = np.asarray(weights, dtype=p.dtype).reshape(-1)
        out = Tensor(np.asarray(-(w * np.log(pg)).sum(), dtype=p.dtype))

        def backward(g):
            gp = np.zeros_like(p2)
            gp[rows, g_flat] = -g * w / pg
            return (gp.reshape(p.shape),)

    _record("cross_entropy", (probs,), (out,), backward)
    return out


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; an exact identity when not training or ``rate`` is 0."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    out = Tensor(x.data * keep)
    _record("dropout", (x,), (out,), lambda g: (g * keep,))
    return out


# -- parameters and initialisation ---------------------------------------------------


ParameterSet = dict  # name -> Tensor, insertion ordered


def glorot(rng: np.random.Generator, shape: tuple[int, int], dtype) -> np.ndarray:
    fan_out, fan_in = shape
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def parameter(name: str, data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def init_lstm(
    rng: np.random.Generator, prefix: str, input_size: int, hidden_size: int, dtype
) -> dict[str, Tensor]:
    H = hidden_size
    bias = np.zeros(4 * H, dtype=dtype)
    bias[H : 2 * H] = 1.0
    return {
        f"{prefix}.W_x": parameter(f"{prefix}.W_x", glorot(rng, (4 * H, input_size), dtype)),
        f"{prefix}.W_h": parameter(f"{prefix}.W_h", glorot(rng, (4 * H, H), dtype)),
        f"{prefix}.b": parameter(f"{prefix}.b", bias),
    }


def lstm_params(params: Mapping[str, Tensor], prefix: str) -> LstmCellParams:
    return LstmCellParams(params[f"{prefix}.W_x"], params[f"{prefix}.W_h"], params[f"{prefix}.b"])


def zero_grads(params: Mapping[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def global_grad_norm(params: Mapping[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return math.sqrt(total)


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


# -- Adam ------------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray] | None = None,
) -> None:
    """Bias-corrected Adam update, in place.

    Gradients default to each parameter's ``.grad``; a parameter with no
    gradient is treated as having a zero gradient.
    """
    if grads is None:
        grads = {k: p.grad for k, p in params.items()}
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in parameter {name!r}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        m = state.first_moment.get(name)
        if m is None:
            m = state.first_moment[name] = np.zeros_like(p.data)
            state.second_moment[name] = np.zeros_like(p.data)
        v = state.second_moment[name]
        m *= b1
        v *= b2
        if g is not None:
            m += (1.0 - b1) * g
            v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


# -- finite differences ------------------------------------------------------------------


def numerical_grad(f: Callable[[], float], x: np.ndarray, index, eps: float = 1e-6) -> float:
    """Central difference of ``f`` w.r.t. ``x[index]``; ``x`` is perturbed in place."""
    old = x[index]
    x[index] = old + eps
    fp = f()
    x[index] = old - eps
    fm = f()
    x[index] = old
    return (fp - fm) / (2.0 * eps)


def directional_grad(f: Callable[[], float], x: np.ndarray, direction: np.ndarray, eps: float = 1e-6) -> float:
    """Central difference of ``f`` along ``direction`` in the space of ``x``."""
    old = x.copy()
    x += eps * direction
    fp = f()
    x[...] = old - eps * direction
    fm = f()
    x[...] = old
    return (fp - fm) / (2.0 * eps)


def relative_error(a: float, b: float) -> float:
    denom = max(abs(a), abs(b))
    return 0.0 if denom == 0.0 else abs(a - b) / denom


def all_finite(tensors: Iterable[Tensor]) -> bool:
    return all(np.all(np.isfinite(t.data)) for t in tensors)
