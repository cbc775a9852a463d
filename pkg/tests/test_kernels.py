import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svf import _fallback, kernels

compiled = pytest.mark.skipif(kernels.compiled is None, reason="extension not built")


def _inputs(seed, L, dk, dv):
    rng = np.random.default_rng(seed)
    return ((rng.random((L, dk)) < rng.random()).astype(np.uint8),
            (rng.random((L, dv)) < rng.random()).astype(np.uint8),
            rng)


class TestFallbackSemantics:
    def test_signed_binary_t_matmul(self, rng):
        k, v, _ = _inputs(0, 9, 5, 4)
        out, ops = _fallback.signed_binary_t_matmul(k, v)
        assert np.array_equal(out, (2 * k.astype(np.int64) - 1).T @ v)
        assert ops == int(v.sum()) * 5

    def test_binary_real_matmul_counts_only_ones(self, rng):
        x = np.array([[1, 0, 1], [0, 0, 0]], dtype=np.uint8)
        w = rng.standard_normal((3, 4))
        out, ops = _fallback.binary_real_matmul(x, w)
        assert ops == 2 * 4
        np.testing.assert_allclose(out, x @ w, rtol=0, atol=1e-15)

    def test_lif_sequence_manual(self):
        s, u = _fallback.lif_sequence(np.array([[0.6], [0.6], [1.0]]), 0.5, 1.0)
        # H: 0.6, 0.9, 1.45 -> fire only at t=2; U = 0.45
        assert s[:, 0].tolist() == [0, 0, 1]
        assert u[0] == pytest.approx(0.45, abs=1e-15)


@compiled
class TestCompiledMatchesFallback:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.integers(1, 70), st.integers(1, 20))
    def test_attention_kernels(self, seed, L, dk, dv):
        k, v, rng = _inputs(seed, L, dk, dv)
        q = (rng.random((L, dk)) < 0.5).astype(np.uint8)
        c, f = kernels.compiled, _fallback
        for a, b in [(c.signed_binary_t_matmul(k, v), f.signed_binary_t_matmul(k, v))]:
            assert np.array_equal(a[0], b[0]) and a[1] == b[1]
        m = rng.integers(-50, 50, (dk, dv))
        a, b = c.signed_int_matmul(q, m), f.signed_int_matmul(q, m)
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]
        s = rng.integers(-50, 50, (L, L))
        a, b = c.int_binary_matmul(s, v), f.int_binary_matmul(s, v)
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 200))
    def test_binary_real_bit_identical(self, seed, R, C):
        rng = np.random.default_rng(seed)
        x = (rng.random((R, C)) < 0.4).astype(np.uint8)
        w = rng.standard_normal((C, 7))
        a, b = kernels.compiled.binary_real_matmul(x, w), _fallback.binary_real_matmul(x, w)
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.booleans(), st.floats(0, 1))
    def test_lif_identical(self, seed, reset, beta):
        x = np.random.default_rng(seed).normal(0, 1.5, (12, 3, 5))
        a = kernels.compiled.lif_sequence(x, beta, 1.0, reset)
        b = _fallback.lif_sequence(x, beta, 1.0, reset)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_popcount(self, rng):
        a = rng.integers(0, 2**63, (6, 3), dtype=np.uint64)
        b = rng.integers(0, 2**63, (4, 3), dtype=np.uint64)
        assert np.array_equal(kernels.compiled.popcount_signed_matmul(a, b, 192, 2),
                              _fallback.popcount_signed_matmul(a, b, 192))


class TestSelection:
    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("SVF_THREADS", "3")
        assert kernels.threads() == 3
        monkeypatch.setenv("SVF_THREADS", "junk")
        assert kernels.threads() >= 1

    def test_backend_name(self):
        assert kernels.BACKEND in ("python", "cython")
