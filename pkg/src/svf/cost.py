"""Analytic FLOPs, measured accumulate counts and the ANN/SNN energy model."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from svf.counters import OpCounter
from svf.errors import DomainError

E_MAC_PJ = 4.6
E_AC_PJ = 0.9


def flops_attention(variant: str, T: int, N: int, D: int, M: int) -> int:
    """Closed-form FLOPs of one spike-driven space-time attention module."""
    TN = T * N
    if variant in ("joint", "neuron_level", "spatial_only"):
        return 2 * TN * (D // M) ** 2 * M + 4 * TN * (D * D + D)
    if variant == "hierarchical":
        one = 2 * TN * (D // M) ** 2 * M + 4 * TN * (D * D + D)
        return 2 * one
    if variant == "factorized":
        h = D // 2
        attn = 2 * TN * (h // M) ** 2 * M
        return attn + 3 * TN * (h * h + h) + attn + 2 * TN * (h * h + h)
    raise DomainError(f"unknown variant {variant!r}")


def ann_flops_attention(variant: str, T: int, N: int, D: int) -> int:
    """Dense MACs of the ANN counterpart's score and aggregation steps."""
    if variant in ("joint", "neuron_level", "spatial_only"):
        return 2 * (T * N) ** 2 * D
    return 2 * T * N * (T + N) * D


@dataclass(frozen=True)
class CostReport:
    scope: str
    analytic_flops: int
    measured_ops: int
    rho: float
    e_mac: float = E_MAC_PJ
    e_ac: float = E_AC_PJ

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise DomainError(f"spiking rate must lie in [0, 1], got {self.rho}")

    @property
    def e_ann(self) -> float:
        return self.analytic_flops * self.e_mac

    @property
    def e_snn(self) -> float:
        return self.rho * self.analytic_flops * self.e_ac

    @property
    def ratio(self) -> float:
        """``e_snn / e_ann`` (0 when nothing was computed)."""
        return self.e_snn / self.e_ann if self.e_ann else 0.0

    def row(self):
        return [self.scope, self.analytic_flops, self.measured_ops, repr(self.rho),
                repr(self.e_ann), repr(self.e_snn), repr(self.ratio)]


CSV_HEADER = ("scope", "analytic_flops", "measured_ops", "rho", "e_ann_pj", "e_snn_pj", "ratio")


def energy_report(analytic_flops: int, rho: float, scope: str = "total", measured_ops: int = 0,
                  e_mac: float = E_MAC_PJ, e_ac: float = E_AC_PJ) -> CostReport:
    """``e_ann = flops * e_mac`` and ``e_snn = rho * flops * e_ac``."""
    return CostReport(scope, int(analytic_flops), int(measured_ops), float(rho), e_mac, e_ac)


def reports_from_counter(counter: OpCounter, e_mac: float = E_MAC_PJ,
                         e_ac: float = E_AC_PJ) -> list[CostReport]:
    """One report per scope plus a ``total`` row.

    The total's spiking rate is the FLOPs-weighted mean of the per-scope rates,
    so its SNN energy equals the sum of the rows.
    """
    rows = [CostReport(name, c.dense, c.measured, c.rho, e_mac, e_ac)
            for name, c in counter.scopes.items()]
    flops = sum(r.analytic_flops for r in rows)
    weighted = sum(r.rho * r.analytic_flops for r in rows)
    rho = min(1.0, weighted / flops) if flops else 0.0
    rows.append(CostReport("total", flops, sum(r.measured_ops for r in rows), rho, e_mac, e_ac))
    return rows


def reports_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def measure_ops(fn, *args, **kwargs):
    """Run ``fn(*args, counter=...)`` and return ``(result, counter)``."""
    counter = OpCounter()
    result = fn(*args, counter=counter, **kwargs)
    return result, counter


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass(frozen=True)
class ProbeRow:
    T: int
    analytic_flops: int
    dense_ops: int
    measured_ops: int
    measured_attn_ops: int
    baseline_attn_ops: int
    params: int


def scaling_probe(variant: str, score: str, T_list, N: int, D: int, M: int, seed: int = 0,
                  density: float = 0.5, baseline: bool = True):
    """Measured op counts of one attention forward at each ``T``.

    Returns ``(rows, slopes)`` where ``slopes`` holds log-log fits of the spike
    module's total and attention-core measured ops, and of the quadratic ANN
    baseline's attention-core MACs.
    """
    from svf.attention import (AttentionSpec, AttentionWeights, ann_joint_attention,
                               space_time_attention)

    T_list = [int(t) for t in T_list]
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise DomainError("T_list must be strictly increasing")
    rows = []
    for T in T_list:
        spec = AttentionSpec(variant=variant, score=score, T=T, N=N, D=D, heads=M)
        weights = AttentionWeights.random(spec, seed)
        rng = np.random.Generator(np.random.PCG64([seed, T]))
        x = (rng.random((1, T, N, D)) < density).astype(np.uint8)
        counter = OpCounter()
        space_time_attention(x, spec, weights, counter)
        base = 0
        if baseline:
            bc = OpCounter()
            dense_w = {n: rng.standard_normal((D, D)) for n in "qkvo"}
            ann_joint_attention(x.astype(np.float64), dense_w, bc)
            base = bc.scopes["attn"].measured
        rows.append(ProbeRow(T, flops_attention(variant, T, N, D, M), counter.dense,
                             counter.measured, counter.total("attn").measured, base,
                             weights.num_weights()))
    slopes = {
        "measured": loglog_slope(T_list, [r.measured_ops for r in rows]),
        "measured_attn": loglog_slope(T_list, [r.measured_attn_ops for r in rows]),
    }
    if baseline:
        slopes["baseline_attn"] = loglog_slope(T_list, [r.baseline_attn_ops for r in rows])
    return rows, slopes


def probe_to_csv(rows, variant: str, score: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "variant", "score", "analytic_flops", "dense_ops", "measured_ops",
                "measured_attn_ops", "baseline_attn_ops", "params"])
    for r in rows:
        w.writerow([r.T, variant, score, r.analytic_flops, r.dense_ops, r.measured_ops,
                    r.measured_attn_ops, r.baseline_attn_ops, r.params])
    return buf.getvalue()


def energy_ratio(rho: float, e_mac: float = E_MAC_PJ, e_ac: float = E_AC_PJ) -> float:
    return rho * e_ac / e_mac


def isclose_ratio(report: CostReport, tol: float = 1e-12) -> bool:
    if report.e_ann == 0:
        return report.e_snn == 0
    return math.isclose(report.e_snn / report.e_ann, energy_ratio(report.rho, report.e_mac,
                                                                   report.e_ac), rel_tol=0, abs_tol=tol)
