import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from svf import svt1
from svf.errors import NonBinaryInput, ShapeMismatch
from svf.tensor import SpikeTensor, pack, reshape, signed_binary_matmul, transpose_axes, unpack

bit_arrays = arrays(np.uint8, st.tuples(st.integers(1, 4), st.integers(1, 150)),
                    elements=st.integers(0, 1))


class TestPacking:
    @given(bit_arrays)
    def test_roundtrip(self, bits):
        assert np.array_equal(unpack(pack(bits)), bits)

    @given(bit_arrays)
    def test_padding_bits_zero(self, bits):
        x = pack(bits)
        tail = bits.shape[-1] % 64
        if tail:
            assert not np.any(x.words[:, -1] >> np.uint64(tail))

    @given(bit_arrays)
    def test_count_matches_sum(self, bits):
        assert pack(bits).count() == int(bits.sum())

    def test_non_binary_rejected(self):
        with pytest.raises(NonBinaryInput):
            pack([0.0, 0.5, 1.0])

    def test_dirty_padding_rejected(self):
        with pytest.raises(NonBinaryInput):
            SpikeTensor((1, 3), np.array([[0b1000]], dtype=np.uint64))

    def test_zero_extent_rejected(self):
        with pytest.raises(ShapeMismatch):
            SpikeTensor.zeros((0, 3))

    def test_word_layout_little_endian(self):
        x = pack([1, 0, 1] + [0] * 61 + [1])
        assert x.words.tolist() == [[5, 1]]


class TestShapeOps:
    def test_reshape_keeps_bits(self, rng):
        b = (rng.random((2, 3, 70)) < 0.5).astype(np.uint8)
        assert np.array_equal(reshape(pack(b), (6, 70)).unpack(), b.reshape(6, 70))
        assert np.array_equal(reshape(pack(b), (3, 140)).unpack(), b.reshape(3, 140))

    def test_reshape_size_mismatch(self):
        with pytest.raises(ShapeMismatch):
            reshape(SpikeTensor.zeros((2, 3)), (5,))

    @pytest.mark.parametrize("perm", [(1, 0, 2), (2, 0, 1), (0, 2, 1)])
    def test_transpose(self, rng, perm):
        b = (rng.random((3, 4, 65)) < 0.5).astype(np.uint8)
        assert np.array_equal(transpose_axes(pack(b), perm).unpack(), b.transpose(perm))

    def test_equality_and_hash(self, rng):
        b = (rng.random((4, 9)) < 0.5).astype(np.uint8)
        assert pack(b) == pack(b.copy())
        assert hash(pack(b)) == hash(pack(b.copy()))


class TestSignedMatmul:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 130), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_against_naive(self, R, D, S, seed):
        rng = np.random.default_rng(seed)
        a = (rng.random((R, D)) < 0.5).astype(np.int64)
        b = (rng.random((D, S)) < 0.5).astype(np.int64)
        expect = (2 * a - 1) @ (2 * b - 1)
        assert np.array_equal(signed_binary_matmul(pack(a), pack(b)), expect)

    def test_backends_agree(self, backend, rng):
        a = (rng.random((5, 100)) < 0.5).astype(np.int64)
        b = (rng.random((100, 7)) < 0.5).astype(np.int64)
        assert np.array_equal(signed_binary_matmul(pack(a), pack(b)), (2 * a - 1) @ (2 * b - 1))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            signed_binary_matmul(SpikeTensor.zeros((2, 3)), SpikeTensor.zeros((4, 2)))


class TestSVT1:
    @given(bit_arrays)
    def test_bits_roundtrip(self, bits):
        x = pack(bits)
        assert svt1.loads(svt1.dumps(x)) == x

    def test_real_roundtrip(self, rng):
        a = rng.standard_normal((2, 3, 4))
        assert np.array_equal(svt1.loads(svt1.dumps(a)), a)

    def test_header_layout(self):
        data = svt1.dumps(pack([1, 1, 0]))
        assert data[:4] == b"SVT1"
        assert data[4] == svt1.DTYPE_BITS and data[5] == 1
        assert int.from_bytes(data[6:14], "little") == 3
        assert int.from_bytes(data[14:22], "little") == 3

    @pytest.mark.parametrize("data", [b"", b"XXXX\x00\x01", b"SVT1\x09\x01" + bytes(8),
                                      b"SVT1\x00\x01" + (2).to_bytes(8, "little") + bytes(8)])
    def test_malformed(self, data):
        with pytest.raises(svt1.FormatError):
            svt1.loads(data)

    def test_weight_manifest(self, tmp_path, rng):
        w = {"q.weight": rng.standard_normal((4, 4)), "mask": pack([1, 0, 1])}
        manifest = svt1.save_weights(tmp_path, w)
        back = svt1.load_weights(manifest)
        assert set(back) == set(w)
        assert np.array_equal(back["q.weight"], w["q.weight"])
        assert back["mask"] == w["mask"]
        assert "q.weight=q.weight.svt1" in manifest.read_text()
