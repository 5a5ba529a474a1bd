"""Dense layer math with hand-written backward passes.

Every layer works on float64 numpy arrays with an optional leading batch
axis.  Forward functions return whatever the matching backward function
needs as a cache; nothing here keeps hidden state except :class:`Adam`.

Layout conventions
------------------
* sequences are ``[..., L, C]`` (time-major inside a sample)
* conv weights are ``[C_out, K, C_in]``
* dense weights are ``[O, D]``
* LSTM weights are ``[D + H, 4H]`` with gate blocks ordered i, f, o, g
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=DTYPE)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ValueError(f"grad shape {self.grad.shape} != value shape {self.value.shape}")


# ---------------------------------------------------------------------------
# convolution


def conv1d(x, w, b):
    """Valid 1-D cross-correlation.

    ``out[..., t, o] = b[o] + sum_{k,c} x[..., t+k, c] * w[o, k, c]``

    Parameters
    ----------
    x : ndarray, shape (..., L, C_in)
    w : ndarray, shape (C_out, K, C_in)
    b : ndarray, shape (C_out,)

    Returns
    -------
    ndarray, shape (..., L - K + 1, C_out)
    """
    x = np.asarray(x, dtype=DTYPE)
    c_out, k, c_in = w.shape
    length = x.shape[-2]
    if length < k:
        raise ValueError(f"conv1d needs L >= K, got L={length}, K={k}")
    cols = _im2col(x, k)
    t_out = length - k + 1
    out = cols.reshape(-1, k * c_in) @ w.reshape(c_out, k * c_in).T + b
    return out.reshape(*x.shape[:-2], t_out, c_out)


def _im2col(x, k):
    length, c_in = x.shape[-2:]
    # sliding_window_view puts the window axis last: (..., T, C, K)
    win = sliding_window_view(x, k, axis=-2)
    win = np.swapaxes(win, -1, -2)
    return win.reshape(*x.shape[:-2], length - k + 1, k * c_in)


def conv1d_backward(dout, x, w):
    """Gradients of :func:`conv1d` w.r.t. ``x``, ``w`` and ``b``."""
    c_out, k, c_in = w.shape
    t_out = dout.shape[-2]
    cols = _im2col(x, k)
    d2 = dout.reshape(-1, c_out)
    dw = (d2.T @ cols.reshape(-1, k * c_in)).reshape(c_out, k, c_in)
    db = d2.sum(axis=0)
    # full correlation of dout with the flipped kernel, as one matmul
    pad = np.zeros((*dout.shape[:-2], t_out + 2 * (k - 1), c_out), dtype=DTYPE)
    pad[..., k - 1:k - 1 + t_out, :] = dout
    wflip = w[:, ::-1, :].transpose(1, 0, 2).reshape(k * c_out, c_in)
    dx = _im2col(pad, k).reshape(-1, k * c_out) @ wflip
    return dx.reshape(x.shape), dw, db


def conv1d_onehot(idx, w, b):
    """:func:`conv1d` applied to one-hot rows given as symbol indices.

    A negative index stands for an all-zero (unknown symbol) row.  The
    result equals ``conv1d(one_hot(idx), w, b)`` but costs a gather
    instead of a matmul over the alphabet.
    """
    idx = np.asarray(idx)
    c_out, k, n = w.shape
    length = idx.shape[-1]
    if length < k:
        raise ValueError(f"conv1d needs L >= K, got L={length}, K={k}")
    t_out = length - k + 1
    table = _onehot_table(w)
    safe = np.where(idx < 0, n, idx)
    out = np.broadcast_to(b, (*idx.shape[:-1], t_out, c_out)).copy()
    for j in range(k):
        out += table[j][safe[..., j:j + t_out]]
    return out


def _onehot_table(w):
    c_out, k, n = w.shape
    table = np.zeros((k, n + 1, c_out), dtype=DTYPE)
    table[:, :n, :] = np.transpose(w, (1, 2, 0))
    return table


def conv1d_onehot_backward(dout, idx, w):
    """Gradients of :func:`conv1d_onehot` w.r.t. ``w`` and ``b``."""
    c_out, k, n = w.shape
    t_out = dout.shape[-2]
    idx = np.asarray(idx)
    safe = np.where(idx < 0, n, idx)
    d2 = dout.reshape(-1, c_out)
    cols = np.arange(d2.shape[0])
    ones = np.ones(d2.shape[0])
    dw = np.empty((k, n + 1, c_out), dtype=DTYPE)
    for j in range(k):
        rows = safe[..., j:j + t_out].reshape(-1)
        # scatter-add as a sparse (n+1) x M selection matrix times dout
        sel = sparse.csr_matrix((ones, (rows, cols)), shape=(n + 1, d2.shape[0]))
        dw[j] = sel @ d2
    db = d2.sum(axis=0)
    return np.transpose(dw[:, :n, :], (2, 0, 1)), db


# ---------------------------------------------------------------------------
# pooling and activations


def maxpool1d(x, size=2):
    """Non-overlapping max pool along the time axis.

    A trailing remainder shorter than ``size`` is dropped.  Ties go to the
    earlier element.  Returns ``(out, argmax)`` where ``argmax`` holds the
    within-window offset of each winner.
    """
    length = x.shape[-2]
    if length < size:
        raise ValueError(f"maxpool1d needs L >= {size}, got {length}")
    t_out = length // size
    xr = x[..., :t_out * size, :].reshape(*x.shape[:-2], t_out, size, x.shape[-1])
    if size == 2:
        second = xr[..., 1, :] > xr[..., 0, :]
        return np.where(second, xr[..., 1, :], xr[..., 0, :]), second.astype(np.intp)
    arg = np.argmax(xr, axis=-2)
    out = np.take_along_axis(xr, arg[..., None, :], axis=-2)[..., 0, :]
    return out, arg


def maxpool1d_backward(dout, arg, in_shape, size=2):
    t_out, c = dout.shape[-2:]
    dx = np.zeros(in_shape, dtype=DTYPE)
    dxr = dx[..., :t_out * size, :].reshape(*in_shape[:-2], t_out, size, c)
    if size == 2:
        second = arg.astype(bool)
        dxr[..., 0, :] = np.where(second, 0.0, dout)
        dxr[..., 1, :] = np.where(second, dout, 0.0)
        return dx
    np.put_along_axis(dxr, arg[..., None, :], dout[..., None, :], axis=-2)
    return dx


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dout, x):
    # derivative at exactly 0 is taken as 0
    return dout * (x > 0)


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=DTYPE)))


def sigmoid_backward(dout, y):
    """``y`` is the forward output, not the input."""
    return dout * y * (1.0 - y)


def tanh(x):
    return np.tanh(x)


def tanh_backward(dout, y):
    return dout * (1.0 - y * y)


# ---------------------------------------------------------------------------
# dense and loss


def dense(x, w, b):
    """``x @ w.T + b`` with ``w`` shaped ``[O, D]``."""
    return np.asarray(x, dtype=DTYPE) @ w.T + b


def dense_backward(dout, x, w):
    d2 = dout.reshape(-1, w.shape[0])
    dw = d2.T @ x.reshape(-1, w.shape[1])
    return dout @ w, dw, d2.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Softmax cross-entropy.

    Works on a single ``[n]`` logit vector with a scalar label or on a batch
    ``[B, n]`` with ``[B]`` labels.  Returns ``(loss, probs)``; for a batch
    ``loss`` is the per-sample vector.  The gradient of the loss w.r.t. the
    logits is ``probs - one_hot(label)``, see :func:`softmax_xent_backward`.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    z = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    probs = np.exp(logp)
    labels = np.asarray(labels)
    if logits.ndim == 1:
        return -float(logp[int(labels)]), probs
    loss = -np.take_along_axis(logp, labels[:, None], axis=-1)[:, 0]
    return loss, probs


def softmax_xent_backward(probs, labels, scale=1.0):
    grad = probs.copy()
    labels = np.asarray(labels)
    if probs.ndim == 1:
        grad[int(labels)] -= 1.0
    else:
        grad[np.arange(len(labels)), labels] -= 1.0
    return grad * scale


# ---------------------------------------------------------------------------
# LSTM


def lstm_step(x_t, h_prev, c_prev, w, b):
    """One LSTM cell update (no peepholes).

    Returns ``(h_t, c_t, cache)``.  ``w`` has shape ``[D + H, 4H]`` and gate
    blocks are ordered input, forget, output, candidate.
    """
    hid = h_prev.shape[-1]
    xh = np.concatenate([x_t, h_prev], axis=-1)
    z = xh @ w + b
    gates = sigmoid(z[..., :3 * hid])
    g = np.tanh(z[..., 3 * hid:])
    i, f, o = gates[..., :hid], gates[..., hid:2 * hid], gates[..., 2 * hid:]
    c_t = f * c_prev + i * g
    tc = np.tanh(c_t)
    h_t = o * tc
    return h_t, c_t, (xh, c_prev, i, f, o, g, tc)


def lstm_step_backward(dh, dc, cache, w):
    """Backward through :func:`lstm_step`.

    ``dh`` and ``dc`` are gradients flowing into ``h_t`` and ``c_t``.
    Returns ``(dx, dh_prev, dc_prev, dw, db)``.
    """
    xh, c_prev, i, f, o, g, tc = cache
    hid = i.shape[-1]
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dz = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        do * o * (1.0 - o),
        dg * (1.0 - g * g),
    ], axis=-1)
    dw = xh.reshape(-1, xh.shape[-1]).T @ dz.reshape(-1, 4 * hid)
    db = dz.reshape(-1, 4 * hid).sum(axis=0)
    dxh = dz @ w.T
    d_in = xh.shape[-1] - hid
    return dxh[..., :d_in], dxh[..., d_in:], dc * f, dw, db


def lstm_forward(xs, w, b):
    """Run the cell over ``xs[..., T, D]`` from zero state; return final h and caches."""
    hid = w.shape[1] // 4
    batch_shape = xs.shape[:-2]
    h = np.zeros((*batch_shape, hid), dtype=DTYPE)
    c = np.zeros_like(h)
    caches = []
    for t in range(xs.shape[-2]):
        h, c, cache = lstm_step(xs[..., t, :], h, c, w, b)
        caches.append(cache)
    return h, caches


def _gate_grads(dh, dc, cache):
    xh, c_prev, i, f, o, g, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        do * o * (1.0 - o),
        dc * i * (1.0 - g * g),
    ], axis=-1)
    return dz, dc * f


def lstm_backward(dh_last, caches, w, xs_shape):
    """Backprop through time for :func:`lstm_forward` (loss on final h only)."""
    hid = w.shape[1] // 4
    d_in = w.shape[0] - hid
    steps = len(caches)
    dxs = np.zeros(xs_shape, dtype=DTYPE)
    dzs = np.empty((steps, *dh_last.shape[:-1], 4 * hid), dtype=DTYPE)
    dh = dh_last
    dc = np.zeros_like(dh_last)
    w_h = w[d_in:]
    w_x = w[:d_in]
    for t in range(steps - 1, -1, -1):
        dz, dc = _gate_grads(dh, dc, caches[t])
        dzs[t] = dz
        dh = dz @ w_h.T
    # weight and input gradients for all steps in one matmul each
    xhs = np.stack([c[0] for c in caches])
    dz2 = dzs.reshape(-1, 4 * hid)
    dw = xhs.reshape(-1, w.shape[0]).T @ dz2
    db = dz2.sum(axis=0)
    dx = (dz2 @ w_x.T).reshape(steps, *dh_last.shape[:-1], d_in)
    dxs[...] = np.moveaxis(dx, 0, -2)
    return dxs, dw, db


# ---------------------------------------------------------------------------
# initialisation


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def lstm_init(rng, d_in, hidden, forget_bias=1.0):
    limit = 1.0 / np.sqrt(hidden)
    w = rng.uniform(-limit, limit, size=(d_in + hidden, 4 * hidden))
    b = np.zeros(4 * hidden, dtype=DTYPE)
    b[hidden:2 * hidden] = forget_bias
    return w, b


# ---------------------------------------------------------------------------
# gradient checking


def relative_error(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def gradient_check(loss_fn, arrays, grads, eps=1e-3, max_checks=None, rng=None):
    """Compare analytic gradients against central differences.

    Parameters
    ----------
    loss_fn : callable
        Zero-argument function returning the scalar loss computed from the
        current contents of ``arrays``.
    arrays : dict of name -> ndarray
        Arrays that are perturbed in place (restored afterwards).
    grads : dict of name -> ndarray
        Analytic gradients, same keys and shapes as ``arrays``.
    eps : float
        Central-difference step.
    max_checks : int, optional
        Check at most this many randomly chosen entries per array.

    Returns
    -------
    float
        Maximum relative error ``|a-b| / max(1e-8, |a|+|b|)`` over all
        checked entries.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        g = np.asarray(grads[name]).reshape(-1)
        positions = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            positions = rng.choice(flat.size, size=max_checks, replace=False)
        for p in positions:
            orig = flat[p]
            flat[p] = orig + eps
            up = loss_fn()
            flat[p] = orig - eps
            down = loss_fn()
            flat[p] = orig
            num = (up - down) / (2 * eps)
            worst = max(worst, float(relative_error(num, g[p])))
    return worst


# ---------------------------------------------------------------------------
# optimiser


class Adam:
    """Adam with bias correction.  State is keyed by parameter name."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads):
        """Update ``params`` (dict name -> ndarray) in place."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)

    def state_dict(self):
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state):
        self.t = state["t"]
        self.m = {k: v.copy() for k, v in state["m"].items()}
        self.v = {k: v.copy() for k, v in state["v"].items()}


def adam_step(params, grads, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Functional form of one Adam update; ``state`` is an :class:`Adam` or None."""
    if state is None:
        state = Adam(lr, beta1, beta2, eps)
    state.step(params, grads)
    return params, state


# ---------------------------------------------------------------------------
# parameter container

_MAGIC = b"RNGPARAMS"
CONTAINER_VERSION = 1


def save_params(params, fh):
    """Write an ordered ``name -> ndarray`` mapping as a flat container.

    Layout: magic, a little-endian u32 version, a u32 header length, a JSON
    header listing ``[name, shape]`` pairs, then the raw float64 values
    (little-endian, row-major) of each array in header order.
    """
    entries = [[name, list(np.shape(arr))] for name, arr in params.items()]
    header = json.dumps({"arrays": entries}).encode()
    fh.write(_MAGIC)
    fh.write(struct.pack("<II", CONTAINER_VERSION, len(header)))
    fh.write(header)
    for arr in params.values():
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(fh):
    magic = fh.read(len(_MAGIC))
    if magic != _MAGIC:
        raise ValueError("not a parameter container")
    version, hlen = struct.unpack("<II", fh.read(8))
    if version != CONTAINER_VERSION:
        raise ValueError(f"unsupported container version {version}")
    header = json.loads(fh.read(hlen))
    out = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise ValueError(f"truncated data for {name!r}")
        out[name] = np.frombuffer(raw, dtype="<f8").astype(DTYPE).reshape(shape)
    return out


def params_to_bytes(params):
    buf = io.BytesIO()
    save_params(params, buf)
    return buf.getvalue()
