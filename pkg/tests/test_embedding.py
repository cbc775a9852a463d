import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from svf.embedding import (ProjectionMatrix, binarize, concentration_bound, concentration_check,
                           cosine_similarity, g_map, hamming_identity, hamming_similarity,
                           jl_error_experiment, pair_errors)
from svf.errors import DomainError, ShapeMismatch, ZeroVector
from svf.tensor import pack

pairs = st.integers(1, 300).flatmap(lambda D: st.tuples(
    arrays(np.uint8, D, elements=st.integers(0, 1)), arrays(np.uint8, D, elements=st.integers(0, 1))))


class TestHamming:
    @given(pairs)
    def test_identity(self, qk):
        q, k = qk
        assert abs(hamming_similarity(pack(q), pack(k)) - hamming_identity(q, k)) <= 1e-12

    def test_packed_and_unpacked_agree(self, rng):
        q, k = (rng.random(70) < 0.5), (rng.random(70) < 0.5)
        assert hamming_similarity(pack(q), pack(k)) == hamming_similarity(q, k)

    def test_values(self):
        assert hamming_similarity(pack([1, 0, 1, 1]), pack([1, 1, 1, 0])) == 0.5
        assert hamming_identity([1, 1], [1, 1]) == 1.0
        assert hamming_identity([1, 0], [0, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            hamming_similarity(pack([1, 0]), pack([1, 0, 1]))


class TestGMap:
    def test_anchor_values(self):
        assert g_map(1.0) == 1.0
        assert g_map(-1.0) == 0.0
        assert g_map(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_clamps_rounding(self):
        assert g_map(1.0 + 1e-13) == 1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            g_map(1.1)

    @given(st.floats(-1, 1))
    def test_monotone_symmetric(self, x):
        assert g_map(x) + g_map(-x) == pytest.approx(1.0, abs=1e-12)


class TestBinarize:
    def test_sign_convention(self):
        A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        assert binarize(A, [1.0, 0.0]).unpack().tolist() == [1, 0, 0]

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            binarize(ProjectionMatrix.gaussian(8, 4, 0), np.zeros(4))

    def test_scale_invariant(self, rng):
        A = ProjectionMatrix.gaussian(32, 6, 1)
        x = rng.standard_normal(6)
        assert binarize(A, x) == binarize(A, 3.7 * x)

    def test_seeded(self):
        assert np.array_equal(ProjectionMatrix.gaussian(8, 3, 5).A, ProjectionMatrix.gaussian(8, 3, 5).A)

    def test_cosine_zero(self):
        with pytest.raises(ZeroVector):
            cosine_similarity(np.zeros(3), np.ones(3))


class TestJL:
    def test_identical_vectors_zero_error(self, rng):
        q = rng.standard_normal((5, 8))
        # arccos near 1 turns a 1-ulp cosine error into ~1e-8
        assert np.all(pair_errors(q, q.copy(), rng.standard_normal((64, 8))) <= 1e-7)

    def test_expectation_unbiased(self):
        """Mean of f_H over many projections approaches g(cos)."""
        rng = np.random.default_rng(3)
        q = np.array([[1.0, 0.0, 0.0]])
        k = np.array([[0.6, 0.8, 0.0]])
        A = rng.standard_normal((200000, 3))
        f_h = np.mean((q @ A.T > 0) == (k @ A.T > 0))
        assert abs(f_h - g_map(0.6)) < 4 * math.sqrt(0.25 / 200000)

    def test_curve_decreasing(self):
        curve = jl_error_experiment(16, [8, 32, 128, 512], 2000, seed=2)
        assert [r.D for r in curve] == [8, 32, 128, 512]
        assert curve.is_decreasing()
        assert curve.to_csv().splitlines()[0] == "D,num_pairs,mean_error,max_error"

    def test_error_scales_like_inverse_sqrt(self):
        curve = jl_error_experiment(32, [64, 1024], 3000, seed=4)
        ratio = curve[0].mean_error / curve[1].mean_error
        assert 3.0 < ratio < 5.5  # sqrt(1024 / 64) = 4

    def test_deterministic(self):
        assert (jl_error_experiment(8, [16, 64], 500, 9).to_csv()
                == jl_error_experiment(8, [16, 64], 500, 9).to_csv())

    def test_bad_args(self):
        with pytest.raises(DomainError):
            jl_error_experiment(8, [16], 0, 1)
        with pytest.raises(DomainError):
            concentration_check(8, 16, 10, 0.0, 1)

    def test_concentration(self):
        rate, bound, slack, ok = concentration_check(32, 256, 4000, 0.1, 5)
        assert bound == pytest.approx(2 * math.exp(-2.56))
        assert ok and rate <= bound + slack
        assert concentration_bound(1024, 0.1) == pytest.approx(2 * math.exp(-10.24))
