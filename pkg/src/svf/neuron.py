"""Leaky integrate-and-fire dynamics with soft reset.

One step of the neuron::

    H = beta * U_prev + x
    S = 1 if H > scale * u_th else 0      (strict: equality does not fire)
    U = H - scale * u_th * S

The integer variant emits ``m`` in ``{0, ..., levels - 1}`` and subtracts
``m * scale * u_th``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from svf import kernels
from svf.errors import ConfigError, ShapeMismatch
from svf.tensor import SpikeTensor

SURROGATES = ("atan", "rectangular")


@dataclass(frozen=True)
class NeuronConfig:
    beta: float = 0.5
    u_th: float = 1.0
    scale: float = 1.0
    levels: int = 2
    surrogate: str = "atan"
    alpha: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.u_th > 0:
            raise ConfigError(f"u_th must be positive, got {self.u_th}")
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if int(self.levels) != self.levels or self.levels < 2:
            raise ConfigError(f"levels must be an integer >= 2, got {self.levels}")
        if self.surrogate not in SURROGATES:
            raise ConfigError(f"surrogate must be one of {SURROGATES}, got {self.surrogate!r}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")

    @property
    def threshold(self) -> float:
        """Effective firing threshold ``scale * u_th``."""
        return self.scale * self.u_th

    def with_scale(self, scale: float) -> NeuronConfig:
        return NeuronConfig(self.beta, self.u_th, scale, self.levels, self.surrogate, self.alpha)


@dataclass
class LifState:
    U: np.ndarray = field(default_factory=lambda: np.zeros(1))

    @classmethod
    def zeros(cls, shape) -> LifState:
        return cls(np.zeros(shape, dtype=np.float64))


def _check(state: LifState, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.shape(state.U) != x.shape:
        raise ShapeMismatch(f"state {np.shape(state.U)} does not match input {x.shape}")
    return x


def lif_step(state: LifState, x, cfg: NeuronConfig = NeuronConfig()):
    """Advance one step; returns ``(new_state, spikes)``."""
    x = _check(state, x)
    h = cfg.beta * state.U + x
    s = h > cfg.threshold
    return LifState(h - cfg.threshold * s), SpikeTensor.from_bits(s)


def lif_run(x, cfg: NeuronConfig = NeuronConfig(), u0=None, reset_each_step=False):
    """Fold the neuron over axis 0; returns ``(spikes as uint8 array, final U)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 1 or x.shape[0] < 1:
        raise ShapeMismatch("need a leading time axis with T >= 1")
    if u0 is not None and np.shape(u0) != x.shape[1:]:
        raise ShapeMismatch(f"initial state {np.shape(u0)} does not match {x.shape[1:]}")
    return kernels.lif_sequence(x, cfg.beta, cfg.threshold, reset_each_step, u0)


def lif_sequence(x, cfg: NeuronConfig = NeuronConfig(), u0=None, reset_each_step=False,
                 return_state=False):
    spikes, u = lif_run(x, cfg, u0, reset_each_step)
    out = SpikeTensor.from_bits(spikes)
    if return_state:
        return out, LifState(u)
    return out


def integer_lif_step(state: LifState, x, cfg: NeuronConfig):
    """Multi-level step emitting ``m = #{j in 1..levels-1 : H > j * threshold}``."""
    x = _check(state, x)
    h = cfg.beta * state.U + x
    thr = cfg.threshold
    m = np.zeros(h.shape, dtype=np.int64)
    for j in range(1, cfg.levels):
        m += h > j * thr
    return LifState(h - thr * m), m


def integer_lif_sequence(x, cfg: NeuronConfig, u0=None):
    x = np.asarray(x, dtype=np.float64)
    state = LifState(np.zeros(x.shape[1:]) if u0 is None else np.array(u0, dtype=np.float64))
    out = np.empty(x.shape, dtype=np.int64)
    for t in range(x.shape[0]):
        state, out[t] = integer_lif_step(state, x[t], cfg)
    return out, state


def surrogate_derivative(x, cfg: NeuronConfig = NeuronConfig()):
    """Derivative of the smooth spike stand-in, evaluated at ``H - threshold``."""
    x = np.asarray(x, dtype=np.float64)
    a = cfg.alpha
    if cfg.surrogate == "atan":
        return a / (2.0 * (1.0 + (np.pi * a * x / 2.0) ** 2))
    return np.where(np.abs(x) < a, 1.0 / (2.0 * a), 0.0)


def surrogate_function(x, cfg: NeuronConfig = NeuronConfig()):
    """Smooth step whose derivative is :func:`surrogate_derivative`."""
    x = np.asarray(x, dtype=np.float64)
    a = cfg.alpha
    if cfg.surrogate == "atan":
        return np.arctan(np.pi * a * x / 2.0) / np.pi + 0.5
    return np.clip((x + a) / (2.0 * a), 0.0, 1.0)
