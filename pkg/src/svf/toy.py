"""Moving-bar direction task and a two-block spiking classifier trained with BPTT.

A vertical bar drifts one pixel per frame, left-to-right for class 0 and
right-to-left for class 1, wrapping at the border. The start column is uniform,
so every single frame has the same distribution under both classes: only the
order of frames carries the label.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from svf import autodiff as ad
from svf.attention import AttentionSpec, space_time_attention
from svf.autodiff import Tape, Var
from svf.blocks import CNNBlock, Downsample, TransformerBlock
from svf.cost import CostReport, reports_from_counter
from svf.counters import OpCounter
from svf.errors import ConfigError, DivergenceError
from svf.neuron import NeuronConfig
from svf.nn import EVAL, Linear, Module, RunMode


@dataclass(frozen=True)
class ToyTask:
    seed: int = 0
    T: int = 8
    size: int = 16
    bar_width: int = 2
    n_train: int = 512
    n_test: int = 512

    def __post_init__(self):
        if self.T < 2 or self.size < 4 or self.size % 4:
            raise ConfigError("ToyTask needs T >= 2 and size a multiple of 4")
        if not 0 < self.bar_width < self.size:
            raise ConfigError("bar_width must lie in (0, size)")

    def sample(self, n: int, rng: np.random.Generator):
        """``(x [n, T, size, size, 1] in {0, 1}, y [n])``; classes are balanced."""
        y = np.arange(n) % 2
        rng.shuffle(y)
        start = rng.integers(0, self.size, n)
        step = np.where(y == 0, 1, -1)
        t = np.arange(self.T)
        x = np.zeros((n, self.T, self.size, self.size, 1))
        for w in range(self.bar_width):
            cols = (start[:, None] + step[:, None] * t[None, :] + w) % self.size
            x[np.arange(n)[:, None], t[None, :], :, cols, 0] = 1.0
        return x, y

    def splits(self):
        ss = np.random.SeedSequence(self.seed).spawn(2)
        train = self.sample(self.n_train, np.random.Generator(np.random.PCG64(ss[0])))
        test = self.sample(self.n_test, np.random.Generator(np.random.PCG64(ss[1])))
        return train, test


class ToyNet(Module):
    """Stem conv, one CNN block, a downsample to tokens, one transformer block, linear head."""

    def __init__(self, variant="joint", score="hamming", task: ToyTask = ToyTask(), C=8, D=16,
                 heads=2, cfg: NeuronConfig = NeuronConfig(), seed=0):
        rng = np.random.Generator(np.random.PCG64(seed))
        side = task.size // 4
        self.T = task.T
        self.reset = variant == "spatial_only"
        self.stem = Downsample(1, C, rng, kernel=3, stride=2, first=True, cfg=cfg)
        self.cnn = CNNBlock(C, rng, sep_kernel=3, channel_kernel=3, expansion=2, ratio=2, cfg=cfg)
        self.down = Downsample(C, D, rng, kernel=3, stride=2, cfg=cfg)
        self.spec = AttentionSpec(variant=variant, score=score, T=task.T, N=side * side, D=D,
                                  heads=heads, neuron=cfg)
        self.tf = TransformerBlock(self.spec, rng, mlp_ratio=4)
        self.head = Linear(D, 2, rng, bias=True, spike_input=False, name="head")

    def _mode(self, mode: RunMode) -> RunMode:
        if self.reset and not mode.reset:
            return RunMode(mode.smooth, True, mode.train, mode.audit)
        return mode

    def tokens(self, x, mode: RunMode = EVAL) -> Var:
        """Membrane tokens ``[T, B, N, D]`` entering the transformer block."""
        mode = self._mode(mode)
        x = x if isinstance(x, Var) else Var(x)
        u = self.down(self.cnn(self.stem(x, mode), mode), mode)
        T, B, h, w, c = u.shape
        return u.reshape(T, B, h * w, c)

    def __call__(self, x, mode: RunMode = EVAL) -> Var:
        """``x`` is time-major ``[T, B, H, W, 1]``; returns logits ``[B, 2]``."""
        mode = self._mode(mode)
        u = self.tf(self.tokens(x, mode), mode)
        return self.head(u.mean(axis=(0, 2)), mode)


@dataclass
class TrainResult:
    variant: str
    curve: list = field(default_factory=list)  # (epoch, train_loss, test_acc)
    final_accuracy: float = 0.0
    cost: list = field(default_factory=list)
    params: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "test_acc"])
        for e, loss, acc in self.curve:
            w.writerow([e, repr(float(loss)), repr(float(acc))])
        return buf.getvalue()


def _time_major(x):
    return np.ascontiguousarray(np.moveaxis(x, 1, 0))


def evaluate(model: ToyNet, x, y, batch=128) -> float:
    hits = 0
    for i in range(0, len(y), batch):
        logits = model(_time_major(x[i:i + batch])).value
        hits += int(np.sum(np.argmax(logits, axis=1) == y[i:i + batch]))
    return hits / len(y)


def attention_cost(model: ToyNet, x, batch=64) -> list[CostReport]:
    """Instrumented exact-path forward of the trained attention on test inputs."""
    counter = OpCounter()
    weights = model.tf.attn.export()
    for i in range(0, len(x), batch):
        u = model.tokens(_time_major(x[i:i + batch]))
        s = model.tf.sn(u, model._mode(EVAL)).value.astype(np.uint8)
        space_time_attention(np.moveaxis(s, 1, 0), model.spec, weights, counter)
    return reports_from_counter(counter)


def train_toy(spec: AttentionSpec | str = "joint", task: ToyTask = ToyTask(), epochs: int = 30,
              seed: int = 0, lr: float = 0.1, momentum: float = 0.9, batch: int = 32,
              cost_samples: int = 64, log=None) -> TrainResult:
    """Momentum SGD with cross-entropy; deterministic given ``seed``.

    ``log`` is called with ``(epoch, loss, acc)`` after each epoch.
    """
    if isinstance(spec, AttentionSpec):
        model = ToyNet(spec.variant, spec.score, task, D=spec.D, heads=spec.heads,
                       cfg=spec.neuron, seed=seed)
    else:
        model = ToyNet(spec, task=task, seed=seed)
    if epochs < 0:
        raise ConfigError("epochs must be non-negative")
    (xtr, ytr), (xte, yte) = task.splits()
    params = model.parameters()
    vel = [np.zeros_like(p.value) for p in params]
    order_rng = np.random.Generator(np.random.PCG64([seed, 1]))
    result = TrainResult(model.spec.variant, params=model.num_params())
    train_mode = RunMode(train=True)
    for epoch in range(1, epochs + 1):
        perm = order_rng.permutation(len(ytr))
        total, n = 0.0, 0
        for i in range(0, len(perm), batch):
            idx = perm[i:i + batch]
            with Tape() as tape:
                loss = ad.cross_entropy(model(_time_major(xtr[idx]), train_mode), ytr[idx])
                grads = tape.backward(loss, params)
            lv = float(loss.value)
            if not np.isfinite(lv):
                raise DivergenceError(f"loss became {lv} at epoch {epoch}")
            for p, v in zip(params, vel):
                v *= momentum
                v += grads[id(p)]
                p.value -= lr * v
            total += lv * len(idx)
            n += len(idx)
        acc = evaluate(model, xte, yte)
        result.curve.append((epoch, total / n, acc))
        if log is not None:
            log(epoch, total / n, acc)
    result.final_accuracy = result.curve[-1][2] if result.curve else evaluate(model, xte, yte)
    if cost_samples:
        result.cost = attention_cost(model, xte[:cost_samples])
    result.model = model
    return result
