"""Trainable layers over :mod:`svf.autodiff`.

Activations are time-major: ``[T, B, ...]``. Every spiking layer runs its
membrane along axis 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from svf import autodiff as ad
from svf.autodiff import Parameter, Var
from svf.neuron import NeuronConfig


@dataclass
class RunMode:
    """Per-forward switches.

    ``smooth`` replaces hard spikes with the surrogate in the forward pass,
    ``reset`` zeroes every membrane before each step, ``train`` uses batch
    statistics in normalization, and ``audit`` (a list) collects
    ``(layer, expects_spikes, input_is_binary)`` for each contraction.
    """

    smooth: bool = False
    reset: bool = False
    train: bool = False
    audit: list | None = None


EVAL = RunMode()


class Module:
    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix=""):
        for key, val in self.__dict__.items():
            yield from _walk(f"{prefix}{key}", val)

    def num_params(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def modules(self):
        yield self
        for val in self.__dict__.values():
            for m in _submodules(val):
                yield from m.modules()


def _walk(name, val):
    if isinstance(val, Parameter):
        yield name, val
    elif isinstance(val, Module):
        yield from val.named_parameters(name + ".")
    elif isinstance(val, dict):
        for k, v in val.items():
            yield from _walk(f"{name}.{k}", v)
    elif isinstance(val, (list, tuple)):
        for i, v in enumerate(val):
            yield from _walk(f"{name}.{i}", v)


def _submodules(val):
    if isinstance(val, Module):
        yield val
    elif isinstance(val, dict):
        for v in val.values():
            yield from _submodules(v)
    elif isinstance(val, (list, tuple)):
        for v in val:
            yield from _submodules(v)


def _audit(mode: RunMode, name: str, expects_spikes: bool, x: Var):
    if mode.audit is not None:
        v = x.value
        mode.audit.append((name, expects_spikes, bool(np.all((v == 0) | (v == 1)))))


def _init(rng, shape, fan_in, gain=1.0):
    return rng.standard_normal(shape) * (gain / np.sqrt(fan_in))


class Spiking(Module):
    def __init__(self, cfg: NeuronConfig = NeuronConfig()):
        self.cfg = cfg

    def __call__(self, x: Var, mode: RunMode = EVAL, threshold=None) -> Var:
        return ad.lif(x, self.cfg, mode.smooth, mode.reset, threshold)


class Norm(Module):
    """Per-channel normalization; batch statistics in training, a folded affine otherwise."""

    def __init__(self, channels: int, momentum=0.1, eps=1e-5):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def folded(self):
        scale = self.gamma.value / np.sqrt(self.running_var + self.eps)
        return scale, self.beta.value - self.running_mean * scale

    def load_folded(self, scale, shift):
        self.gamma.value[...] = scale
        self.beta.value[...] = shift
        self.running_mean[...] = 0.0
        self.running_var[...] = 1.0
        self.eps = 0.0

    def __call__(self, x: Var, mode: RunMode = EVAL) -> Var:
        if mode.train:
            out, mu, var = ad.batch_norm(x, self.gamma, self.beta, self.eps)
            m = self.momentum
            n = x.value.size // x.value.shape[-1]
            self.running_mean = (1 - m) * self.running_mean + m * mu
            self.running_var = (1 - m) * self.running_var + m * var * n / max(n - 1, 1)
            return out
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        return x * (self.gamma * inv) + (self.beta - self.gamma * (self.running_mean * inv))


class Linear(Module):
    def __init__(self, fan_in, fan_out, rng, bias=False, spike_input=True, name="linear", gain=1.0):
        self.weight = Parameter(_init(rng, (fan_in, fan_out), fan_in, gain))
        self.bias = Parameter(np.zeros(fan_out)) if bias else None
        self.spike_input = spike_input
        self.name = name

    def __call__(self, x: Var, mode: RunMode = EVAL) -> Var:
        _audit(mode, self.name, self.spike_input, x)
        return ad.linear(x, self.weight, self.bias)


class Conv(Module):
    """``k x k`` convolution with zero padding ``k // 2`` on ``[T, B, H, W, C]``."""

    def __init__(self, cin, cout, k, rng, stride=1, spike_input=True, name="conv", gain=1.0):
        self.weight = Parameter(_init(rng, (k, k, cin, cout), k * k * cin, gain))
        self.stride = stride
        self.spike_input = spike_input
        self.name = name

    def __call__(self, x: Var, mode: RunMode = EVAL) -> Var:
        _audit(mode, self.name, self.spike_input, x)
        T, B = x.shape[:2]
        k = self.weight.shape[0]
        y = ad.conv2d(x.reshape(T * B, *x.shape[2:]), self.weight, self.stride, k // 2)
        return y.reshape(T, B, *y.shape[1:])


class DWConv(Module):
    def __init__(self, channels, k, rng, spike_input=True, name="dwconv", gain=1.0):
        self.weight = Parameter(_init(rng, (k, k, channels), k * k, gain))
        self.spike_input = spike_input
        self.name = name

    def __call__(self, x: Var, mode: RunMode = EVAL) -> Var:
        _audit(mode, self.name, self.spike_input, x)
        T, B = x.shape[:2]
        k = self.weight.shape[0]
        y = ad.depthwise_conv2d(x.reshape(T * B, *x.shape[2:]), self.weight, 1, k // 2)
        return y.reshape(T, B, *y.shape[1:])


# ---------------------------------------------------------------------------
# differentiable space-time attention


def _preactivation(q: Var, k: Var, v: Var, heads: int, score: str) -> Var:
    """Linear-order ``Q' (K'^T V)`` per head on ``[S, L, W]``; primes are the score encodings."""
    S, L, W = q.shape
    dh = W // heads

    def split(a):
        return a.reshape(S, L, heads, dh).transpose(0, 2, 1, 3)

    if score == "hamming":
        q, k = q * 2.0 - 1.0, k * 2.0 - 1.0
    kv = ad.matmul(split(k).transpose(0, 1, 3, 2), split(v))
    return ad.matmul(split(q), kv).transpose(0, 2, 1, 3).reshape(S, L, W)


def _to_seq(a: Var, axis: str) -> Var:
    T, B, N, W = a.shape
    if axis == "joint":
        return a.transpose(1, 0, 2, 3).reshape(B, T * N, W)
    if axis == "spatial":
        return a.reshape(T * B, N, W)
    return a.transpose(1, 2, 0, 3).reshape(B * N, T, W)


def _from_seq(a: Var, axis: str, shape) -> Var:
    T, B, N, W = shape
    if axis == "joint":
        return a.reshape(B, T, N, W).transpose(1, 0, 2, 3)
    if axis == "spatial":
        return a.reshape(T, B, N, W)
    return a.reshape(B, N, T, W).transpose(2, 0, 1, 3)


class SpaceTimeAttention(Module):
    """Trainable counterpart of :func:`svf.attention.space_time_attention`.

    Input and output are time-major ``[T, B, N, D]``; the input must be spikes.
    The attention neuron sees ``s * P`` against ``u_th``, which fires exactly
    when ``P > u_th / s`` for dyadic ``s``.
    """

    def __init__(self, spec, rng, gain=1.0):
        from svf.attention import projection_layout

        self.spec = spec
        self.proj = {n: Linear(fi, fo, rng, name=f"{n}_proj", gain=gain)
                     for n, (fi, fo) in projection_layout(spec).items()}
        self.norm = {n: Norm(fo) for n, (_, fo) in projection_layout(spec).items()}
        self.sn = Spiking(spec.neuron)

    def _reset(self, mode: RunMode) -> RunMode:
        if self.spec.variant == "spatial_only" and not mode.reset:
            return RunMode(mode.smooth, True, mode.train, mode.audit)
        return mode

    def _branch(self, x, names, mode):
        return [self.sn(self.norm[n](self.proj[n](x, mode), mode), mode) for n in names]

    def _attend(self, q, k, v, axis, mode):
        spec = self.spec
        W = q.shape[-1]
        pre = _preactivation(_to_seq(q, axis), _to_seq(k, axis), _to_seq(v, axis),
                             spec.heads, spec.score)
        pre = _from_seq(pre, axis, q.shape) * spec.attention_scale(W)
        return self.sn(pre, mode)

    def _out(self, name, a, mode):
        return self.norm[name](self.proj[name](a, mode), mode)

    def __call__(self, x: Var, mode: RunMode = EVAL) -> Var:
        v = self.spec.variant
        mode = self._reset(mode)
        if v in ("joint", "neuron_level", "spatial_only"):
            q, k, val = self._branch(x, "qkv", mode)
            a = self._attend(q, k, val, "joint" if v == "joint" else "spatial", mode)
            return self._out("o", a, mode)
        if v == "hierarchical":
            q, k, val = self._branch(x, ("s_q", "s_k", "s_v"), mode)
            mid = self.sn(self._out("s_o", self._attend(q, k, val, "spatial", mode), mode), mode)
            q, k, val = self._branch(mid, ("t_q", "t_k", "t_v"), mode)
            return self._out("t_o", self._attend(q, k, val, "temporal", mode), mode)
        h = self.spec.D // 2
        q, kt, vt = self._branch(x[..., :h], ("q", "k_t", "v_t"), mode)
        ks, vs = self._branch(x[..., h:], ("k_s", "v_s"), mode)
        at = self._attend(q, kt, vt, "temporal", mode)
        as_ = self._attend(q, ks, vs, "spatial", mode)
        return self._out("o", ad.concat([at, as_], axis=-1), mode)

    def export(self):
        """Weights with folded normalization, for the exact integer path."""
        from svf.attention import AttentionWeights

        return AttentionWeights(self.spec.variant,
                                {n: p.weight.value.copy() for n, p in self.proj.items()},
                                {n: self.norm[n].folded() for n in self.proj})

    def load(self, weights) -> None:
        weights.check(self.spec)
        for n, w in weights.proj.items():
            self.proj[n].weight.value[...] = w
            self.norm[n].load_folded(*weights.norm[n])
