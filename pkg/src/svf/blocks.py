"""CNN and transformer blocks, downsampling and backbone assembly.

Residual sums run on membrane values; only spikes enter a contraction, with one
exception: the point-wise conv that directly follows the depth-wise conv forms a
single linear map with it and is tagged ``spike_input=False``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from svf.attention import AttentionSpec
from svf.autodiff import Var
from svf.errors import ConfigError, ShapeMismatch
from svf.neuron import NeuronConfig
from svf.nn import EVAL, Conv, DWConv, Linear, Module, Norm, RunMode, SpaceTimeAttention, Spiking


class SepConv(Module):
    """``pw(dw(SN(pw(SN(u)))))`` with normalization after each pw conv."""

    def __init__(self, c, rng, kernel=7, expansion=2, cfg=NeuronConfig()):
        e = c * expansion
        self.sn1, self.sn2 = Spiking(cfg), Spiking(cfg)
        self.pw1 = Conv(c, e, 1, rng, name="sep.pw1")
        self.norm1 = Norm(e)
        self.dw = DWConv(e, kernel, rng, name="sep.dw")
        self.pw2 = Conv(e, c, 1, rng, spike_input=False, name="sep.pw2")
        self.norm2 = Norm(c)

    def __call__(self, u: Var, mode: RunMode = EVAL) -> Var:
        h = self.norm1(self.pw1(self.sn1(u, mode), mode), mode)
        h = self.dw(self.sn2(h, mode), mode)
        return self.norm2(self.pw2(h, mode), mode)


class ChannelConv(Module):
    """``conv(SN(conv(SN(u))))`` with a ``ratio`` hidden expansion."""

    def __init__(self, c, rng, kernel=3, ratio=4, cfg=NeuronConfig()):
        self.sn1, self.sn2 = Spiking(cfg), Spiking(cfg)
        self.conv1 = Conv(c, c * ratio, kernel, rng, name="chconv.1")
        self.norm1 = Norm(c * ratio)
        self.conv2 = Conv(c * ratio, c, kernel, rng, name="chconv.2")
        self.norm2 = Norm(c)

    def __call__(self, u: Var, mode: RunMode = EVAL) -> Var:
        h = self.norm1(self.conv1(self.sn1(u, mode), mode), mode)
        return self.norm2(self.conv2(self.sn2(h, mode), mode), mode)


class CNNBlock(Module):
    def __init__(self, c, rng, sep_kernel=7, channel_kernel=3, expansion=2, ratio=4,
                 cfg=NeuronConfig()):
        self.sep = SepConv(c, rng, sep_kernel, expansion, cfg)
        self.channel = ChannelConv(c, rng, channel_kernel, ratio, cfg)

    def __call__(self, u: Var, mode: RunMode = EVAL) -> Var:
        u = u + self.sep(u, mode)
        return u + self.channel(u, mode)


class ChannelMLP(Module):
    """``MLP(SN(MLP(SN(u))))`` on tokens, hidden width ``ratio * D``."""

    def __init__(self, d, rng, ratio=4, cfg=NeuronConfig()):
        self.hidden = d * ratio
        self.sn1, self.sn2 = Spiking(cfg), Spiking(cfg)
        self.fc1 = Linear(d, self.hidden, rng, name="mlp.1")
        self.norm1 = Norm(self.hidden)
        self.fc2 = Linear(self.hidden, d, rng, name="mlp.2")
        self.norm2 = Norm(d)

    def __call__(self, u: Var, mode: RunMode = EVAL) -> Var:
        h = self.norm1(self.fc1(self.sn1(u, mode), mode), mode)
        return self.norm2(self.fc2(self.sn2(h, mode), mode), mode)


class TransformerBlock(Module):
    """``U' = U + Attn(SN(U))``, ``U'' = U' + ChannelMLP(U')`` on ``[T, B, N, D]``."""

    def __init__(self, spec: AttentionSpec, rng, mlp_ratio=4):
        self.spec = spec
        self.sn = Spiking(spec.neuron)
        self.attn = SpaceTimeAttention(spec, rng)
        self.mlp = ChannelMLP(spec.D, rng, mlp_ratio, spec.neuron)

    def __call__(self, u: Var, mode: RunMode = EVAL) -> Var:
        if u.shape[0] != self.spec.T or u.shape[2:] != (self.spec.N, self.spec.D):
            raise ShapeMismatch(f"expected [{self.spec.T}, B, {self.spec.N}, {self.spec.D}], "
                                f"got {list(u.shape)}")
        u = u + self.attn(self.sn(u, mode), mode)
        return u + self.mlp(u, mode)


class Downsample(Module):
    """``norm(conv(SN(u)))``; the first one reads the raw input and has no SN."""

    def __init__(self, cin, cout, rng, kernel=3, stride=2, first=False, cfg=NeuronConfig()):
        self.sn = None if first else Spiking(cfg)
        self.conv = Conv(cin, cout, kernel, rng, stride, spike_input=not first,
                         name="down.first" if first else "down")
        self.norm = Norm(cout)
        self.stride = stride

    def __call__(self, u: Var, mode: RunMode = EVAL) -> Var:
        if self.sn is not None:
            u = self.sn(u, mode)
        return self.norm(self.conv(u, mode), mode)


# ---------------------------------------------------------------------------
# backbone


@dataclass(frozen=True)
class BackboneConfig:
    C: int = 8
    depths: tuple = (1, 1, 2, 6, 2)
    T: int = 4
    H: int = 32
    W: int = 32
    in_channels: int = 3
    first_kernel: int = 7
    down_kernel: int = 3
    sep_kernel: int = 7
    channel_kernel: int = 3
    sep_expansion: int = 2
    conv_ratio: int = 4
    mlp_ratio: int = 4
    variant: str = "joint"
    score: str = "hamming"
    heads: int = 1
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    seed: int = 0

    def __post_init__(self):
        if self.C < 1 or self.T < 1:
            raise ConfigError("C and T must be positive")
        if len(self.depths) != 5 or any(int(d) < 0 for d in self.depths):
            raise ConfigError(f"depths needs five non-negative entries, got {self.depths}")
        if self.H % 16 or self.W % 16 or self.H <= 0 or self.W <= 0:
            raise ConfigError(f"H and W must be positive multiples of 16, got {self.H}x{self.W}")
        for k in (self.first_kernel, self.down_kernel, self.sep_kernel, self.channel_kernel):
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"kernel sizes must be odd, got {k}")
        for w in (8 * self.C, 10 * self.C):
            if w % self.heads:
                raise ConfigError(f"heads={self.heads} must divide transformer width {w}")
        if self.variant == "factorized" and (8 * self.C) % (2 * self.heads):
            raise ConfigError("factorized attention needs width divisible by 2*heads")

    @property
    def channels(self):
        c = self.C
        return (c, 2 * c, 4 * c, 8 * c, 10 * c)

    @property
    def output_shape(self):
        return (self.T, self.H // 16, self.W // 16, 10 * self.C)

    def attention_spec(self, width: int) -> AttentionSpec:
        return AttentionSpec(variant=self.variant, score=self.score, T=self.T,
                             N=(self.H // 16) * (self.W // 16), D=width, heads=self.heads,
                             neuron=self.neuron)


class Backbone(Module):
    """Five stages: three CNN stages then two transformer stages.

    Spatial schedule ``H -> H/2 -> H/4 -> H/8 -> H/16 -> H/16``.
    """

    def __init__(self, cfg: BackboneConfig):
        self.cfg = cfg
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        ch, cin = cfg.channels, cfg.in_channels
        cnn = dict(sep_kernel=cfg.sep_kernel, channel_kernel=cfg.channel_kernel,
                   expansion=cfg.sep_expansion, ratio=cfg.conv_ratio, cfg=cfg.neuron)
        self.stages = []
        for i in range(5):
            first = i == 0
            down = Downsample(cin if first else ch[i - 1], ch[i], rng,
                              cfg.first_kernel if first else cfg.down_kernel,
                              1 if i == 4 else 2, first, cfg.neuron)
            if i < 3:
                blocks = [CNNBlock(ch[i], rng, **cnn) for _ in range(cfg.depths[i])]
            else:
                spec = cfg.attention_spec(ch[i])
                blocks = [TransformerBlock(spec, rng, cfg.mlp_ratio) for _ in range(cfg.depths[i])]
            self.stages.append((down, blocks))

    def __call__(self, x, mode: RunMode = EVAL) -> Var:
        """``[T, B, H, W, C_in]`` (or unbatched ``[T, H, W, C_in]``) to ``[T, B, H/16, W/16, 10C]``."""
        cfg = self.cfg
        x = x if isinstance(x, Var) else Var(x)
        squeeze = x.ndim == 4
        if squeeze:
            x = x.reshape(x.shape[0], 1, *x.shape[1:])
        if x.ndim != 5 or x.shape[0] != cfg.T or x.shape[2:] != (cfg.H, cfg.W, cfg.in_channels):
            raise ShapeMismatch(f"expected [{cfg.T}, B, {cfg.H}, {cfg.W}, {cfg.in_channels}], "
                                f"got {list(x.shape)}")
        u = x
        for i, (down, blocks) in enumerate(self.stages):
            u = down(u, mode)
            if i >= 3:
                T, B, h, w, c = u.shape
                u = u.reshape(T, B, h * w, c)
                for blk in blocks:
                    u = blk(u, mode)
                u = u.reshape(T, B, h, w, c)
            else:
                for blk in blocks:
                    u = blk(u, mode)
        return u.reshape(u.shape[0], *u.shape[2:]) if squeeze else u

    def layer_params(self) -> dict[str, int]:
        return {name: p.value.size for name, p in self.named_parameters()}


def build_backbone(cfg: BackboneConfig = BackboneConfig()) -> Backbone:
    return Backbone(cfg)


def spike_audit(model: Module, x, mode: RunMode | None = None) -> list[tuple[str, bool, bool]]:
    """Run a forward and return ``(layer, expects_spikes, input_is_binary)`` per contraction."""
    log: list = []
    m = replace(mode or EVAL, audit=log)
    model(x, m)
    return log


# ---------------------------------------------------------------------------
# functional wrappers on unbatched, time-major arrays


def _batched(u, ndim):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != ndim:
        raise ShapeMismatch(f"expected a rank-{ndim} tensor, got shape {u.shape}")
    return Var(u[:, None])


def sep_conv_block(u, block: CNNBlock, mode: RunMode = EVAL) -> np.ndarray:
    """``[T, H, W, C]`` through one CNN block."""
    u = _batched(u, 4)
    c = block.sep.pw1.weight.shape[2]
    if u.shape[-1] != c:
        raise ShapeMismatch(f"block expects {c} channels, got {u.shape[-1]}")
    return block(u, mode).value[:, 0]


def transformer_block(u, block: TransformerBlock, mode: RunMode = EVAL) -> np.ndarray:
    """``[T, N, D]`` through one transformer block."""
    return block(_batched(u, 3), mode).value[:, 0]


def downsample(u, block: Downsample, mode: RunMode = EVAL) -> np.ndarray:
    """``[T, H, W, C]`` through one downsampling layer."""
    u = _batched(u, 4)
    if u.shape[-1] != block.conv.weight.shape[2]:
        raise ShapeMismatch(f"expected {block.conv.weight.shape[2]} channels, got {u.shape[-1]}")
    if block.stride > 1 and (u.shape[2] % block.stride or u.shape[3] % block.stride):
        raise ShapeMismatch(f"spatial dims {u.shape[2:4]} not divisible by stride {block.stride}")
    return block(u, mode).value[:, 0]
