"""Per-run accumulate-operation counters.

A counter is created by whoever runs a measurement and passed explicitly to
the kernels; nothing here is global.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass
class ScopeCount:
    dense: int = 0
    measured: int = 0
    ones: int = 0
    elements: int = 0

    @property
    def rho(self) -> float:
        """Fraction of ones in the {0,1} operand feeding this scope."""
        return self.ones / self.elements if self.elements else 0.0


class OpCounter:
    """Ordered map of scope name to :class:`ScopeCount`.

    ``dense`` counts every position of every contraction, ``measured`` counts
    what the event-driven kernels actually performed.
    """

    def __init__(self, prefix: str = ""):
        self.scopes: dict[str, ScopeCount] = {}
        self.prefix = prefix

    def add(self, scope: str, dense: int, measured: int, ones: int = 0, elements: int = 0):
        c = self.scopes.setdefault(self.prefix + scope, ScopeCount())
        c.dense += int(dense)
        c.measured += int(measured)
        c.ones += int(ones)
        c.elements += int(elements)

    def child(self, prefix: str) -> OpCounter:
        """View that writes into the same table under ``prefix``."""
        view = OpCounter(self.prefix + prefix)
        view.scopes = self.scopes
        return view

    @property
    def dense(self) -> int:
        return sum(c.dense for c in self.scopes.values())

    @property
    def measured(self) -> int:
        return sum(c.measured for c in self.scopes.values())

    def total(self, match: str = "") -> ScopeCount:
        out = ScopeCount()
        for name, c in self.scopes.items():
            if match in name:
                out.dense += c.dense
                out.measured += c.measured
                out.ones += c.ones
                out.elements += c.elements
        return out

    def __repr__(self):
        return f"OpCounter(dense={self.dense}, measured={self.measured}, scopes={list(self.scopes)})"
