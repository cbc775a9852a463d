import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from svf.attention import VARIANTS, AttentionSpec, AttentionWeights, space_time_attention
from svf.cost import (CSV_HEADER, E_AC_PJ, E_MAC_PJ, CostReport, energy_ratio, energy_report,
                      flops_attention, isclose_ratio, loglog_slope, measure_ops, reports_from_counter,
                      reports_to_csv, scaling_probe)
from svf.counters import OpCounter
from svf.errors import DomainError

from conftest import spikes


class TestFlops:
    def test_worked_examples(self):
        assert flops_attention("joint", 2, 4, 4, 2) == 2 * 8 * 4 * 2 + 4 * 8 * 20
        assert flops_attention("hierarchical", 2, 4, 4, 2) == 2 * flops_attention("joint", 2, 4, 4, 2)
        assert flops_attention("factorized", 2, 4, 4, 2) == 2 * 8 * 1 * 2 + 3 * 8 * 6 + 2 * 8 * 2 + 2 * 8 * 6

    @given(st.integers(1, 16), st.integers(1, 64), st.sampled_from([2, 4, 8, 16]))
    def test_linear_in_T(self, T, N, D):
        for v in VARIANTS:
            assert flops_attention(v, 2 * T, N, D, 1) == 2 * flops_attention(v, T, N, D, 1)

    def test_unknown_variant(self):
        with pytest.raises(DomainError):
            flops_attention("nope", 1, 1, 2, 1)


class TestEnergy:
    @given(st.integers(0, 10**9), st.floats(0, 1))
    def test_ratio_identity(self, flops, rho):
        r = energy_report(flops, rho)
        assert r.e_ann == flops * E_MAC_PJ
        assert r.e_snn == rho * flops * E_AC_PJ
        assert isclose_ratio(r)

    def test_rho_domain(self):
        with pytest.raises(DomainError):
            CostReport("x", 10, 0, 1.5)

    def test_ratio_value(self):
        assert energy_ratio(1.0) == pytest.approx(0.9 / 4.6)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_rows_from_forward(self, variant, rng):
        spec = AttentionSpec(variant=variant, T=3, N=4, D=8, heads=2)
        _, counter = measure_ops(space_time_attention, spikes(rng, (2, 3, 4, 8), 0.3), spec,
                                 AttentionWeights.random(spec, 1))
        rows = reports_from_counter(counter)
        assert rows[-1].scope == "total"
        assert rows[-1].analytic_flops == sum(r.analytic_flops for r in rows[:-1])
        assert math.isclose(rows[-1].e_snn, sum(r.e_snn for r in rows[:-1]), rel_tol=1e-12)
        for r in rows:
            assert abs(r.ratio - r.rho * 0.9 / 4.6) <= 1e-12

    def test_zero_input(self):
        spec = AttentionSpec(T=2, N=4, D=8)
        _, counter = measure_ops(space_time_attention, np.zeros((1, 2, 4, 8), np.uint8), spec,
                                 AttentionWeights.random(spec))
        assert reports_from_counter(counter)[-1].e_snn == 0.0

    def test_dense_input_projection_counts(self):
        spec = AttentionSpec(T=2, N=4, D=8)
        _, counter = measure_ops(space_time_attention, np.ones((1, 2, 4, 8), np.uint8), spec,
                                 AttentionWeights.random(spec))
        for name in ("q_proj", "k_proj", "v_proj"):
            assert counter.scopes[name].measured == counter.scopes[name].dense

    def test_csv(self):
        text = reports_to_csv([energy_report(100, 0.25, "a")])
        rows = list(csv.reader(io.StringIO(text)))
        assert tuple(rows[0]) == CSV_HEADER
        assert float(rows[1][4]) == 100 * 4.6 and float(rows[1][5]) == 0.25 * 100 * 0.9


class TestCounter:
    def test_child_prefix(self):
        c = OpCounter()
        c.child("blk0.").add("attn", 10, 4, 1, 2)
        c.add("attn", 5, 5)
        assert c.dense == 15 and c.total("blk0").measured == 4
        assert c.scopes["blk0.attn"].rho == 0.5


class TestScaling:
    def test_slopes(self):
        _, slopes = scaling_probe("joint", "hamming", [4, 8, 16, 32], 8, 16, 1, seed=0)
        assert abs(slopes["measured"] - 1.0) < 0.05
        assert abs(slopes["baseline_attn"] - 2.0) < 0.1

    def test_loglog(self):
        assert loglog_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)

    def test_increasing_T(self):
        with pytest.raises(DomainError):
            scaling_probe("joint", "hamming", [8, 4], 4, 8, 1)
