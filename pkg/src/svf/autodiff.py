"""Minimal tape-based reverse-mode differentiation over numpy arrays.

Operations executed inside ``with Tape() as tape:`` are recorded when any
input requires a gradient; ``tape.backward(loss)`` replays them in reverse.
Spike emission uses the hard step in the forward pass and the surrogate
derivative in the backward pass, unless ``smooth=True`` asks for the smooth
stand-in in both directions (used by finite-difference checks).
"""
from __future__ import annotations

import contextvars

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from svf.errors import GraphError, ShapeMismatch
from svf.neuron import NeuronConfig, surrogate_derivative, surrogate_function

_ACTIVE: contextvars.ContextVar[Tape | None] = contextvars.ContextVar("svf_tape", default=None)


class Var:
    __slots__ = ("value", "requires_grad", "grad", "name", "_tape")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._tape = None

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)

    def __repr__(self):
        return f"Var(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(_lift(o)))

    def __rsub__(self, o):
        return add(_lift(o), neg(self))

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Var):
            return mul(self, reciprocal(o))
        return mul(self, 1.0 / o)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *perm):
        if len(perm) == 1 and isinstance(perm[0], (tuple, list)):
            perm = tuple(perm[0])
        return transpose(self, perm)


class Parameter(Var):
    __slots__ = ()

    def __init__(self, value, name=None):
        super().__init__(np.array(value, dtype=np.float64), True, name)


def _lift(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


class Tape:
    """Records operations; one tape per training step, never shared."""

    def __init__(self):
        self.nodes = []
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None

    def record(self, out: Var, inputs, backward):
        out._tape = self
        self.nodes.append((out, inputs, backward))

    def backward(self, loss: Var, params=None) -> dict:
        """Gradients of scalar ``loss``; returns ``{id(param): grad}``.

        Parameters that ``loss`` does not depend on get zero gradients. If
        ``params`` is given their ``.grad`` fields are set too.
        """
        loss = _lift(loss)
        if loss.value.size != 1:
            raise ShapeMismatch(f"loss must be scalar, got shape {loss.shape}")
        if loss.requires_grad and loss._tape is not self:
            raise GraphError("loss was not produced on this tape")
        grads = {id(loss): np.ones_like(loss.value)}
        for out, inputs, backward in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.value.shape:
                    raise GraphError(f"gradient shape {gi.shape} != value shape {inp.value.shape}")
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        result = {}
        for p in params or ():
            p.grad = grads.get(id(p), np.zeros_like(p.value))
            result[id(p)] = p.grad
        if params is None:
            result = grads
        return result


def _make(value, inputs, backward) -> Var:
    tape = _ACTIVE.get()
    needs = tape is not None and any(i.requires_grad for i in inputs)
    out = Var(value, needs)
    if needs:
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a) -> Var:
    return _make(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    return _make(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def reciprocal(a) -> Var:
    v = 1.0 / a.value
    return _make(v, (a,), lambda g: (-g * v * v,))


def exp(a) -> Var:
    v = np.exp(a.value)
    return _make(v, (a,), lambda g: (g * v,))


def log(a) -> Var:
    av = a.value
    return _make(np.log(av), (a,), lambda g: (g / av,))


def square(a) -> Var:
    av = a.value
    return _make(av * av, (a,), lambda g: (2.0 * g * av,))


def sigmoid(a) -> Var:
    v = 1.0 / (1.0 + np.exp(-a.value))
    return _make(v, (a,), lambda g: (g * v * (1.0 - v),))


def matmul(a, b) -> Var:
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2:
        raise ShapeMismatch("matmul operands must be at least 2-D")

    def back(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _make(av @ bv, (a, b), back)


def linear(x, w, bias=None) -> Var:
    """``x[..., i] @ w[i, o] (+ bias)`` with the leading axes flattened."""
    xv, wv = x.value, w.value
    lead = xv.shape[:-1]
    flat = xv.reshape(-1, xv.shape[-1])
    out = (flat @ wv).reshape(*lead, wv.shape[1])
    if bias is not None:
        out = out + bias.value

    def back(g):
        g2 = g.reshape(-1, wv.shape[1])
        grads = [(g2 @ wv.T).reshape(xv.shape), flat.T @ g2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    inputs = (x, w) if bias is None else (x, w, bias)
    return _make(out, inputs, back)


def vsum(a, axis=None, keepdims=False) -> Var:
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.value.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a, axis=None, keepdims=False) -> Var:
    n = a.value.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return vsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Var:
    old = a.shape
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, perm) -> Var:
    inv = np.argsort(perm)
    return _make(np.ascontiguousarray(np.transpose(a.value, perm)), (a,),
                 lambda g: (np.ascontiguousarray(np.transpose(g, inv)),))


def getitem(a, idx) -> Var:
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g) if _fancy(idx) else out.__setitem__(idx, g)
        return (out,)

    return _make(a.value[idx], (a,), back)


def _fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(parts, axis=-1) -> Var:
    parts = [_lift(p) for p in parts]
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _make(np.concatenate([p.value for p in parts], axis=axis), tuple(parts),
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def stack(parts, axis=0) -> Var:
    parts = [_lift(p) for p in parts]
    return _make(np.stack([p.value for p in parts], axis=axis), tuple(parts),
                 lambda g: tuple(np.moveaxis(g, axis, 0)))


# ---------------------------------------------------------------------------
# spiking


def spike(x, cfg: NeuronConfig = NeuronConfig(), smooth=False) -> Var:
    """Step of ``x`` (already shifted by the threshold) with surrogate backward."""
    xv = x.value
    val = surrogate_function(xv, cfg) if smooth else (xv > 0).astype(np.float64)
    return _make(val, (x,), lambda g: (g * surrogate_derivative(xv, cfg),))


def lif(x, cfg: NeuronConfig = NeuronConfig(), smooth=False, reset_each_step=False,
        threshold=None) -> Var:
    """Soft-reset LIF over axis 0 with backpropagation through time.

    ``H_t = beta U_{t-1} + x_t``, ``S_t = step(H_t - thr)``, ``U_t = H_t - thr S_t``.
    """
    xv = x.value
    beta = cfg.beta
    thr = cfg.threshold if threshold is None else threshold
    T = xv.shape[0]
    hs = np.empty_like(xv)
    out = np.empty_like(xv)
    u = np.zeros(xv.shape[1:])
    for t in range(T):
        h = xv[t] if reset_each_step else beta * u + xv[t]
        s = surrogate_function(h - thr, cfg) if smooth else (h > thr).astype(np.float64)
        hs[t], out[t] = h, s
        u = h - thr * s

    def back(g):
        gx = np.empty_like(xv)
        gu = np.zeros(xv.shape[1:])
        for t in range(T - 1, -1, -1):
            d = surrogate_derivative(hs[t] - thr, cfg)
            gh = g[t] * d + gu * (1.0 - thr * d)
            gx[t] = gh
            gu = np.zeros_like(gu) if reset_each_step else beta * gh
        return (gx,)

    return _make(out, (x,), back)


# ---------------------------------------------------------------------------
# convolutions, channels-last [B, H, W, C]


def _pad(v, p):
    if p == 0:
        return v
    return np.pad(v, ((0, 0), (p, p), (p, p), (0, 0)))


def _out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def _windows(xp, kh, kw, stride, Ho, Wo):
    """``[B, Ho, Wo, kh, kw, C]`` contiguous patches (im2col)."""
    v = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :Ho, :Wo]
    return np.ascontiguousarray(np.moveaxis(v, 3, 5))


def conv2d(x, w, stride=1, padding=0) -> Var:
    """Dense convolution; ``w`` is ``[kh, kw, C_in, C_out]``."""
    xv, wv = x.value, w.value
    B, H, W, C = xv.shape
    kh, kw, ci, co = wv.shape
    if ci != C:
        raise ShapeMismatch(f"conv expects {ci} input channels, got {C}")
    Ho, Wo = _out_size(H, kh, stride, padding), _out_size(W, kw, stride, padding)
    xp = _pad(xv, padding)
    cols = _windows(xp, kh, kw, stride, Ho, Wo).reshape(-1, kh * kw * C)
    wmat = wv.reshape(-1, co)
    out = (cols @ wmat).reshape(B, Ho, Wo, co)
    hs, ws = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1

    def back(g):
        g2 = g.reshape(-1, co)
        gw = (cols.T @ g2).reshape(wv.shape)
        gcols = (wmat @ g2.T).reshape(kh, kw, C, B, Ho, Wo)
        gxp = np.zeros((C, B) + xp.shape[1:3])
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + hs:stride, j:j + ws:stride] += gcols[i, j]
        gxp = np.moveaxis(gxp, 0, 3)
        gx = gxp[:, padding:padding + H, padding:padding + W, :] if padding else gxp
        return gx, gw

    return _make(out, (x, w), back)


def depthwise_conv2d(x, w, stride=1, padding=0) -> Var:
    """Per-channel convolution; ``w`` is ``[kh, kw, C]``."""
    xv, wv = x.value, w.value
    B, H, W, C = xv.shape
    kh, kw, c = wv.shape
    if c != C:
        raise ShapeMismatch(f"depthwise conv expects {c} channels, got {C}")
    Ho, Wo = _out_size(H, kh, stride, padding), _out_size(W, kw, stride, padding)
    xp = _pad(xv, padding)
    hs, ws = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
    out = np.zeros((B, Ho, Wo, C))
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i:i + hs:stride, j:j + ws:stride, :] * wv[i, j]

    def back(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(wv)
        for i in range(kh):
            for j in range(kw):
                win = xp[:, i:i + hs:stride, j:j + ws:stride, :]
                gw[i, j] = (win * g).sum(axis=(0, 1, 2))
                gxp[:, i:i + hs:stride, j:j + ws:stride, :] += g * wv[i, j]
        gx = gxp[:, padding:padding + H, padding:padding + W, :] if padding else gxp
        return gx, gw

    return _make(out, (x, w), back)


# ---------------------------------------------------------------------------
# normalization and loss


def batch_norm(x, gamma, beta, eps=1e-5) -> tuple[Var, np.ndarray, np.ndarray]:
    """Normalize over every axis but the last using batch statistics.

    Returns the output and the batch mean/variance (for running averages).
    """
    xv = x.value
    shape = xv.shape
    flat = xv.reshape(-1, shape[-1])
    m = flat.shape[0]
    mu = flat.mean(axis=0)
    xc = flat - mu
    var = np.einsum("ij,ij->j", xc, xc) / m
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gv, bv = gamma.value, beta.value

    def back(g):
        g = g.reshape(m, -1)
        gxhat = g * gv
        dot = np.einsum("ij,ij->j", gxhat, xhat)
        gx = (inv / m) * (m * gxhat - gxhat.sum(axis=0) - xhat * dot)
        return gx.reshape(shape), np.einsum("ij,ij->j", g, xhat), g.sum(axis=0)

    return _make((xhat * gv + bv).reshape(shape), (x, gamma, beta), back), mu, var


def affine(x, scale, shift) -> Var:
    """Per-channel ``x * scale + shift`` (inference-mode normalization)."""
    return add(mul(x, scale), shift)


def cross_entropy(logits, labels) -> Var:
    """Mean softmax cross-entropy of ``[B, K]`` logits against integer labels."""
    z = logits.value
    labels = np.asarray(labels, dtype=np.int64)
    B = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(B), labels].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(B), labels] -= 1.0
        return (g * p / B,)

    return _make(loss, (logits,), back)


# ---------------------------------------------------------------------------
# checking


def finite_diff_check(f, params, eps=1e-5) -> float:
    """Largest disagreement between tape gradients and central differences.

    ``f()`` must rebuild the loss from the current parameter values. The
    error is ``max |analytic - numeric|`` divided by the larger of the two
    gradients' max-norms (floored at 1e-12).
    """
    params = list(params)
    with Tape() as tape:
        loss = f()
    tape.backward(loss, params)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    scale = 0.0
    diffs = []
    for p, a in zip(params, analytic):
        num = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().value)
            flat[i] = orig - eps
            down = float(f().value)
            flat[i] = orig
            nflat[i] = (up - down) / (2 * eps)
        diffs.append(np.max(np.abs(a - num), initial=0.0))
        scale = max(scale, np.max(np.abs(a), initial=0.0), np.max(np.abs(num), initial=0.0))
    worst = max(diffs, default=0.0)
    return float(worst / max(scale, 1e-12))
