"""INI-style workbench configuration.

Sections and keys (defaults in brackets)::

    [neuron]     beta [0.5] u_th [1.0] scale [1.0] levels [2] surrogate [atan] alpha [2.0]
    [attention]  variant [joint] score [hamming] T [4] N [16] D [32] heads [1]
                 scale [none] threshold_basis [head]
    [backbone]   C [8] depths [1,1,2,6,2] T [4] H [32] W [32] in_channels [3]
                 first_kernel [7] down_kernel [3] sep_kernel [7] channel_kernel [3]
                 sep_expansion [2] conv_ratio [4] mlp_ratio [4] seed [0]
    [cost]       e_mac [4.6] e_ac [0.9] seed [0] weights [none]
    [training]   epochs [30] lr [0.1] momentum [0.9] batch [32] seed [0]
                 n_train [512] n_test [512] T [8] size [16] bar_width [2]

The backbone takes its attention variant, score and head count from
``[attention]`` and its neuron from ``[neuron]``. Unknown sections or keys
raise :class:`ConfigError`.
"""
from __future__ import annotations

import configparser
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path

from svf.attention import AttentionSpec
from svf.blocks import BackboneConfig
from svf.cost import E_AC_PJ, E_MAC_PJ
from svf.errors import ConfigError
from svf.neuron import NeuronConfig


@dataclass(frozen=True)
class CostConfig:
    e_mac: float = E_MAC_PJ
    e_ac: float = E_AC_PJ
    seed: int = 0
    weights: str | None = None


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    lr: float = 0.1
    momentum: float = 0.9
    batch: int = 32
    seed: int = 0
    n_train: int = 512
    n_test: int = 512
    T: int = 8
    size: int = 16
    bar_width: int = 2


@dataclass(frozen=True)
class WorkbenchConfig:
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    attention: AttentionSpec = field(default_factory=AttentionSpec)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)


_SHARED = {"neuron", "variant", "score", "heads"}
_SECTIONS = {
    "neuron": NeuronConfig,
    "attention": AttentionSpec,
    "backbone": BackboneConfig,
    "cost": CostConfig,
    "training": TrainingConfig,
}


def _keys(cls, section):
    names = {f.name: f for f in fields(cls)}
    names.pop("neuron", None)
    if section == "backbone":
        for k in _SHARED:
            names.pop(k, None)
    return names


def _convert(section, key, raw: str, default):
    text = raw.strip()
    try:
        if key == "depths":
            return tuple(int(p) for p in text.replace(" ", "").split(",") if p)
        if text.lower() in ("none", ""):
            if key in ("scale", "weights") and section in ("attention", "cost"):
                return None
            raise ValueError("empty value")
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or key == "scale":
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _section(parser, name):
    cls = _SECTIONS[name]
    allowed = _keys(cls, name)
    values = {}
    if parser.has_section(name):
        for key, raw in parser.items(name):
            if key not in {k.lower(): k for k in allowed}:
                raise ConfigError(f"unknown key {key!r} in [{name}]; allowed: {sorted(allowed)}")
            real = {k.lower(): k for k in allowed}[key]
            f = allowed[real]
            default = f.default if f.default_factory is MISSING else f.default_factory()
            values[real] = _convert(name, real, raw, default)
    return values


def parse_config(text: str) -> WorkbenchConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for sec in parser.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]; allowed: {sorted(_SECTIONS)}")
    neuron = NeuronConfig(**_section(parser, "neuron"))
    attention = AttentionSpec(neuron=neuron, **_section(parser, "attention"))
    backbone = BackboneConfig(variant=attention.variant, score=attention.score,
                              heads=attention.heads, neuron=neuron, **_section(parser, "backbone"))
    cost = CostConfig(**_section(parser, "cost"))
    training = TrainingConfig(**_section(parser, "training"))
    return WorkbenchConfig(neuron, attention, backbone, cost, training)


def load_config(path) -> WorkbenchConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
