"""Spike-driven attention: Hamming (SDHA) and dot-product (SDSA) scores.

All score arithmetic is integer and exact. The pre-activation of SDHA is::

    P = (2Q - 1) [(2K - 1)^T V]          linear order,  O(L D^2)
      = [(2Q - 1)(2K - 1)^T] V           quadratic order, O(L^2 D)

and the output neuron fires when ``scale * P`` exceeds ``u_th``. The scale is
folded into the neuron threshold (``u_th / scale``) so the comparison stays
on integers; with the default ``scale = 1 / (2 D_h)`` the threshold is
``2 D_h * u_th``.

The space-time layouts take spikes shaped ``[B, T, N, D]``. Every spiking
layer runs its membrane along ``T``; the ``spatial_only`` variant zeroes the
membrane before each step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from svf import kernels
from svf.counters import OpCounter
from svf.errors import ConfigError, EmptyMemory, ShapeMismatch, VariantWeightMismatch
from svf.neuron import NeuronConfig
from svf.tensor import SpikeTensor

VARIANTS = ("joint", "hierarchical", "factorized", "neuron_level", "spatial_only")
SCORES = ("hamming", "dot")
DOT_DEFAULT_SCALE = 0.125


@dataclass(frozen=True)
class AttentionSpec:
    variant: str = "joint"
    score: str = "hamming"
    T: int = 4
    N: int = 16
    D: int = 32
    heads: int = 1
    scale: float | None = None
    threshold_basis: str = "head"  # "head": 1/(2 D_h), "full": 1/(2 D)
    neuron: NeuronConfig = field(default_factory=NeuronConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.score not in SCORES:
            raise ConfigError(f"unknown score {self.score!r}; expected one of {SCORES}")
        if min(self.T, self.N, self.D, self.heads) < 1:
            raise ConfigError("T, N, D and heads must be >= 1")
        if self.D % self.heads:
            raise ConfigError(f"D={self.D} is not divisible by heads={self.heads}")
        if self.variant == "factorized" and self.D % (2 * self.heads):
            raise ConfigError(f"factorized needs D divisible by 2*heads, got D={self.D}")
        if self.threshold_basis not in ("head", "full"):
            raise ConfigError("threshold_basis must be 'head' or 'full'")
        if self.scale is not None and not self.scale > 0:
            raise ConfigError("scale must be positive")

    @property
    def head_dim(self) -> int:
        return self.D // self.heads

    def branch_width(self) -> int:
        """Channel width one attention pass operates on."""
        return self.D // 2 if self.variant == "factorized" else self.D

    def attention_scale(self, width: int | None = None) -> float:
        """Pre-activation multiplier ``s`` for a pass over ``width`` channels."""
        if self.scale is not None:
            return self.scale
        if self.score == "dot":
            return DOT_DEFAULT_SCALE
        width = self.branch_width() if width is None else width
        basis = width // self.heads if self.threshold_basis == "head" else width
        return 1.0 / (2 * basis)


def projection_layout(spec: AttentionSpec) -> dict[str, tuple[int, int]]:
    """Name -> (in, out) of every projection matrix the variant allocates."""
    D = spec.D
    if spec.variant in ("joint", "neuron_level", "spatial_only"):
        return {n: (D, D) for n in ("q", "k", "v", "o")}
    if spec.variant == "hierarchical":
        return {f"{p}_{n}": (D, D) for p in ("s", "t") for n in ("q", "k", "v", "o")}
    h = D // 2
    return {"q": (h, h), "k_t": (h, h), "v_t": (h, h), "k_s": (h, h), "v_s": (h, h), "o": (D, D)}


def param_count(spec: AttentionSpec) -> int:
    """Closed-form projection parameter count of the variant (4, 8 or 7 D^2)."""
    factor = {"joint": 4, "neuron_level": 4, "spatial_only": 4, "hierarchical": 8, "factorized": 7}
    return factor[spec.variant] * spec.D * spec.D


@dataclass
class AttentionWeights:
    """Projection matrices plus the per-channel affine that follows each one.

    Only the matrices count as attention parameters; the affine terms are the
    folded normalization and are reported separately.
    """

    variant: str
    proj: dict[str, np.ndarray]
    norm: dict[str, tuple[np.ndarray, np.ndarray]]

    @classmethod
    def random(cls, spec: AttentionSpec, seed: int = 0, gain: float = 2.0) -> AttentionWeights:
        rng = np.random.Generator(np.random.PCG64(seed))
        proj, norm = {}, {}
        for name, (fan_in, fan_out) in projection_layout(spec).items():
            proj[name] = rng.standard_normal((fan_in, fan_out)) * (gain / np.sqrt(fan_in))
            norm[name] = (np.ones(fan_out), np.zeros(fan_out))
        return cls(spec.variant, proj, norm)

    def num_weights(self) -> int:
        return sum(w.size for w in self.proj.values())

    def num_norm_params(self) -> int:
        return sum(a.size + b.size for a, b in self.norm.values())

    def check(self, spec: AttentionSpec) -> None:
        layout = projection_layout(spec)
        if set(self.proj) != set(layout) or set(self.norm) != set(layout):
            raise VariantWeightMismatch(
                f"{spec.variant} needs projections {sorted(layout)}, got {sorted(self.proj)}")
        for name, (fi, fo) in layout.items():
            if self.proj[name].shape != (fi, fo):
                raise VariantWeightMismatch(f"{name}: expected {(fi, fo)}, got {self.proj[name].shape}")
            scale, shift = self.norm[name]
            if np.shape(scale) != (fo,) or np.shape(shift) != (fo,):
                raise VariantWeightMismatch(f"{name}: normalization must have {fo} channels")

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, w in self.proj.items():
            out[f"{name}.weight"] = w
            out[f"{name}.norm_scale"], out[f"{name}.norm_shift"] = self.norm[name]
        return out

    @classmethod
    def from_arrays(cls, variant: str, arrays: dict[str, np.ndarray]) -> AttentionWeights:
        proj, norm = {}, {}
        for key, arr in arrays.items():
            name, _, part = key.rpartition(".")
            if part == "weight":
                proj[name] = np.asarray(arr, dtype=np.float64)
        for name in proj:
            try:
                norm[name] = (np.asarray(arrays[f"{name}.norm_scale"]).reshape(-1),
                              np.asarray(arrays[f"{name}.norm_shift"]).reshape(-1))
            except KeyError as exc:
                raise VariantWeightMismatch(f"missing normalization for {name}") from exc
        return cls(variant, proj, norm)


# ---------------------------------------------------------------------------
# single-head kernels on [L, D_h] spike matrices


def _bits(x) -> np.ndarray:
    if isinstance(x, SpikeTensor):
        return x.unpack()
    arr = np.asarray(x)
    if arr.dtype != np.uint8:
        if np.any((arr != 0) & (arr != 1)):
            raise ShapeMismatch("spike operands must be 0/1 valued")
        arr = arr.astype(np.uint8)
    return arr


def _check_qkv(q, k, v):
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeMismatch("Q, K, V must be [L, D] matrices")
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"incompatible Q{q.shape} K{k.shape} V{v.shape}")


def hamming_preactivation(q, k, v, order="linear", counter: OpCounter | None = None,
                          scope="attn") -> np.ndarray:
    """Integer ``(2Q-1)(2K-1)^T V`` in the requested evaluation order."""
    q, k, v = _bits(q), _bits(k), _bits(v)
    _check_qkv(q, k, v)
    L, dk = q.shape
    Lk, dv = v.shape
    if order == "linear":
        kv, ops1 = kernels.signed_binary_t_matmul(k, v)
        out, ops2 = kernels.signed_int_matmul(q, kv)
        dense = Lk * dk * dv + L * dk * dv
    elif order == "quadratic":
        scores = signed_scores(q, k)
        out, ops2 = kernels.int_binary_matmul(scores, v)
        ops1 = L * Lk * dk  # one popcount lane per position
        dense = L * Lk * dk + L * Lk * dv
    else:
        raise ValueError(f"order must be 'linear' or 'quadratic', got {order!r}")
    if counter is not None:
        counter.add(scope, dense, ops1 + ops2, int(np.count_nonzero(v)), v.size)
    return out


def dot_preactivation(q, k, v, order="linear", counter: OpCounter | None = None,
                      scope="attn") -> np.ndarray:
    """Integer ``Q K^T V`` on {0,1} operands, zeros skipped."""
    q, k, v = _bits(q), _bits(k), _bits(v)
    _check_qkv(q, k, v)
    L, dk = q.shape
    Lk, dv = v.shape
    q64, k64, v64 = q.astype(np.int64), k.astype(np.int64), v.astype(np.int64)
    if order == "linear":
        out = q64 @ (k64.T @ v64)
        measured = int(np.sum(k.sum(axis=1, dtype=np.int64) * v.sum(axis=1, dtype=np.int64)))
        measured += int(np.count_nonzero(q)) * dv
        dense = Lk * dk * dv + L * dk * dv
    elif order == "quadratic":
        out = (q64 @ k64.T) @ v64
        measured = int(np.count_nonzero(q)) * Lk + int(np.count_nonzero(v)) * L
        dense = L * Lk * dk + L * Lk * dv
    else:
        raise ValueError(f"order must be 'linear' or 'quadratic', got {order!r}")
    if counter is not None:
        counter.add(scope, dense, measured, int(np.count_nonzero(v)), v.size)
    return out


def signed_scores(q, k) -> np.ndarray:
    """``(2Q-1)(2K-1)^T`` via XOR/popcount on packed rows."""
    q, k = _bits(q), _bits(k)
    qs, ks = SpikeTensor.from_bits(q), SpikeTensor.from_bits(k)
    return kernels.popcount_signed_matmul(qs.words, ks.words, q.shape[1])


def _fire_once(pre: np.ndarray, scale: float, cfg: NeuronConfig) -> SpikeTensor:
    thr = cfg.u_th / scale
    spikes, _ = kernels.lif_sequence(pre[None].astype(np.float64), cfg.beta, thr)
    return SpikeTensor.from_bits(spikes[0])


def sdsa_dot(q, k, v, scale: float = DOT_DEFAULT_SCALE, cfg: NeuronConfig = NeuronConfig(),
             order="linear", counter=None) -> SpikeTensor:
    """Dot-product spike attention; fires where ``scale * Q K^T V > u_th``."""
    return _fire_once(dot_preactivation(q, k, v, order, counter), scale, cfg)


def sdha(q, k, v, scale: float | None = None, cfg: NeuronConfig = NeuronConfig(),
         order="linear", counter=None) -> SpikeTensor:
    """Hamming spike attention on one head; ``scale`` defaults to ``1/(2 D_h)``."""
    pre = hamming_preactivation(q, k, v, order, counter)
    if scale is None:
        scale = 1.0 / (2 * _bits(q).shape[1])
    return _fire_once(pre, scale, cfg)


def cross_sdha(query, memory_k, memory_v, scale: float | None = None, heads: int = 1,
               cfg: NeuronConfig = NeuronConfig(), counter=None) -> SpikeTensor:
    """Query rows attend only to memory rows (keys/values of earlier steps)."""
    q = _bits(query)
    mk = None if memory_k is None else _bits(memory_k)
    mv = None if memory_v is None else _bits(memory_v)
    if mk is None or mv is None or mk.size == 0 or mv.size == 0:
        raise EmptyMemory("cross-attention needs at least one memory step")
    if q.ndim != 2 or mk.shape[1] != q.shape[1] or mv.shape != mk.shape:
        raise ShapeMismatch(f"query {q.shape} incompatible with memory {mk.shape}/{mv.shape}")
    D = q.shape[1]
    if D % heads:
        raise ShapeMismatch(f"D={D} not divisible by heads={heads}")
    dh = D // heads
    pre = np.concatenate([
        hamming_preactivation(q[:, h * dh:(h + 1) * dh], mk[:, h * dh:(h + 1) * dh],
                              mv[:, h * dh:(h + 1) * dh], counter=counter, scope="cross_attn")
        for h in range(heads)], axis=1)
    return _fire_once(pre, 1.0 / (2 * dh) if scale is None else scale, cfg)


def memory_read(x, scale: float | None = None, heads: int = 1, cfg: NeuronConfig = NeuronConfig(),
                counter=None) -> SpikeTensor:
    """Last step of ``x: [T, N, D]`` queries the previous ``T - 1`` steps."""
    bits = _bits(x)
    if bits.ndim != 3:
        raise ShapeMismatch("memory_read expects [T, N, D] spikes")
    T, N, D = bits.shape
    if T < 2:
        raise EmptyMemory("memory read needs T >= 2")
    mem = bits[:-1].reshape((T - 1) * N, D)
    return cross_sdha(bits[-1], mem, mem, scale, heads, cfg, counter)


# ---------------------------------------------------------------------------
# space-time layouts


def _spike_over_time(pre: np.ndarray, cfg: NeuronConfig, reset: bool, threshold=None) -> np.ndarray:
    """LIF along axis 1 of ``[B, T, ...]``."""
    thr = cfg.threshold if threshold is None else threshold
    moved = np.moveaxis(pre, 1, 0)
    spikes, _ = kernels.lif_sequence(np.ascontiguousarray(moved), cfg.beta, thr, reset)
    return np.ascontiguousarray(np.moveaxis(spikes, 0, 1))


def _project(bits, w, norm, counter, scope):
    """Spike-driven linear map followed by the per-channel affine."""
    lead = bits.shape[:-1]
    flat = np.ascontiguousarray(bits.reshape(-1, bits.shape[-1]))
    out, ops = kernels.binary_real_matmul(flat, w)
    scale, shift = norm
    out = out * scale + shift
    if counter is not None:
        rows = flat.shape[0]
        counter.add(scope, rows * (w.shape[0] * w.shape[1] + w.shape[1]),
                    ops + rows * w.shape[1], int(np.count_nonzero(flat)), flat.size)
    return out.reshape(*lead, w.shape[1])


def _attend(q, k, v, heads, score, counter, scope):
    """Per-sequence, per-head pre-activations for ``[S, L, W]`` spikes."""
    S, L, W = q.shape
    dh = W // heads
    pre = np.empty((S, L, W), dtype=np.int64)
    fn = hamming_preactivation if score == "hamming" else dot_preactivation
    for s in range(S):
        for h in range(heads):
            sl = slice(h * dh, (h + 1) * dh)
            pre[s, :, sl] = fn(q[s, :, sl], k[s, :, sl], v[s, :, sl], "linear", counter, scope)
    return pre


def _spatial(q, k, v, spec, counter, scope, reset):
    B, T, N, W = q.shape
    pre = _attend(q.reshape(B * T, N, W), k.reshape(B * T, N, W), v.reshape(B * T, N, W),
                  spec.heads, spec.score, counter, scope).reshape(B, T, N, W)
    thr = spec.neuron.u_th / spec.attention_scale(W)
    return _spike_over_time(pre.astype(np.float64), spec.neuron, reset, thr)


def _temporal(q, k, v, spec, counter, scope, reset):
    B, T, N, W = q.shape
    tr = lambda a: np.ascontiguousarray(a.transpose(0, 2, 1, 3)).reshape(B * N, T, W)  # noqa: E731
    pre = _attend(tr(q), tr(k), tr(v), spec.heads, spec.score, counter, scope)
    pre = pre.reshape(B, N, T, W).transpose(0, 2, 1, 3)
    thr = spec.neuron.u_th / spec.attention_scale(W)
    return _spike_over_time(np.ascontiguousarray(pre, dtype=np.float64), spec.neuron, reset, thr)


def _joint(q, k, v, spec, counter, scope, reset):
    B, T, N, W = q.shape
    pre = _attend(q.reshape(B, T * N, W), k.reshape(B, T * N, W), v.reshape(B, T * N, W),
                  spec.heads, spec.score, counter, scope).reshape(B, T, N, W)
    thr = spec.neuron.u_th / spec.attention_scale(W)
    return _spike_over_time(pre.astype(np.float64), spec.neuron, reset, thr)


def _qkv(bits, weights, names, spec, counter, reset, prefix=""):
    out = []
    for n in names:
        pre = _project(bits, weights.proj[n], weights.norm[n], counter, f"{prefix}{n}_proj")
        out.append(_spike_over_time(pre, spec.neuron, reset))
    return out


def space_time_attention(x, spec: AttentionSpec, weights: AttentionWeights,
                         counter: OpCounter | None = None) -> np.ndarray:
    """Attention over ``[B, T, N, D]`` spikes; returns the real ``[B, T, N, D]`` output."""
    bits = _bits(x)
    if bits.shape != (bits.shape[0], spec.T, spec.N, spec.D) or bits.ndim != 4:
        raise ShapeMismatch(f"expected [B, {spec.T}, {spec.N}, {spec.D}], got {bits.shape}")
    weights.check(spec)
    reset = spec.variant == "spatial_only"
    v = spec.variant
    if v in ("joint", "neuron_level", "spatial_only"):
        q, k, val = _qkv(bits, weights, "qkv", spec, counter, reset)
        attend = _joint if v == "joint" else _spatial
        a = attend(q, k, val, spec, counter, "attn", reset)
        return _project(a, weights.proj["o"], weights.norm["o"], counter, "o_proj")
    if v == "hierarchical":
        q, k, val = _qkv(bits, weights, ("s_q", "s_k", "s_v"), spec, counter, False)
        a = _spatial(q, k, val, spec, counter, "s_attn", False)
        mid = _project(a, weights.proj["s_o"], weights.norm["s_o"], counter, "s_o_proj")
        mid_bits = _spike_over_time(mid, spec.neuron, False)
        q, k, val = _qkv(mid_bits, weights, ("t_q", "t_k", "t_v"), spec, counter, False)
        a = _temporal(q, k, val, spec, counter, "t_attn", False)
        return _project(a, weights.proj["t_o"], weights.norm["t_o"], counter, "t_o_proj")
    # factorized: first half of the channels feeds the temporal branch
    h = spec.D // 2
    xt, xs = bits[..., :h], bits[..., h:]
    q, kt, vt = _qkv(xt, weights, ("q", "k_t", "v_t"), spec, counter, False)
    ks, vs = _qkv(xs, weights, ("k_s", "v_s"), spec, counter, False)
    at = _temporal(q, kt, vt, spec, counter, "t_attn", False)
    as_ = _spatial(q, ks, vs, spec, counter, "s_attn", False)
    cat = np.concatenate([at, as_], axis=-1)
    return _project(cat, weights.proj["o"], weights.norm["o"], counter, "o_proj")


def ann_joint_attention(x, weights: dict[str, np.ndarray], counter: OpCounter | None = None):
    """Real-valued softmax-free joint attention, ``(Q K^T) V``, with MAC counts.

    Serves as the quadratic baseline: the score/aggregate step costs
    ``2 (T N)^2 D`` multiply-accumulates.
    """
    x = np.asarray(x, dtype=np.float64)
    B, T, N, D = x.shape
    L = T * N
    flat = x.reshape(B, L, D)
    q, k, v = (flat @ weights[n] for n in ("q", "k", "v"))
    y = (q @ np.swapaxes(k, 1, 2)) @ v
    out = y @ weights["o"]
    if counter is not None:
        counter.add("proj", 4 * B * L * D * D, 4 * B * L * D * D)
        counter.add("attn", 2 * B * L * L * D, 2 * B * L * L * D)
    return out.reshape(B, T, N, D)
