import numpy as np
import pytest

from svf import autodiff as ad
from svf.autodiff import Parameter, Tape, Var, finite_diff_check
from svf.blocks import ChannelMLP
from svf.errors import GraphError, ShapeMismatch
from svf.neuron import NeuronConfig
from svf.nn import Norm, RunMode, SpaceTimeAttention
from svf.attention import AttentionSpec

SMOOTH = RunMode(smooth=True)


class TestBasics:
    def test_square(self):
        w = Parameter(3.0)
        with Tape() as t:
            loss = w * w
        assert t.backward(loss, [w])[id(w)] == 6.0

    def test_constant_has_zero_grad(self):
        w = Parameter(np.ones(3))
        with Tape() as t:
            loss = Var(np.arange(3.0)).sum()
        t.backward(loss, [w])
        assert np.array_equal(w.grad, np.zeros(3))

    def test_non_scalar_loss(self):
        w = Parameter(np.ones(3))
        with Tape() as t:
            y = w * 2.0
        with pytest.raises(ShapeMismatch):
            t.backward(y)

    def test_foreign_tape(self):
        w = Parameter(1.0)
        with Tape():
            y = w * 2.0
        with Tape() as other:
            with pytest.raises(GraphError):
                other.backward(y)

    def test_linear_map_exact(self, rng):
        w = Parameter(rng.standard_normal((4, 3)))
        x = Var(rng.standard_normal((5, 4)))
        assert finite_diff_check(lambda: (x @ w).sum(), [w]) < 1e-9

    def test_zero_function(self):
        w = Parameter(np.ones(2))
        assert finite_diff_check(lambda: (w * 0.0).sum(), [w]) == 0.0

    def test_broadcast_ops(self, rng):
        a = Parameter(rng.standard_normal((3, 1)))
        b = Parameter(rng.standard_normal(4))
        f = lambda: ad.sigmoid(ad.exp(a * b) - ad.log(ad.square(b) + 1.0)).mean()  # noqa: E731
        assert finite_diff_check(f, [a, b]) < 1e-7

    def test_shape_ops(self, rng):
        a = Parameter(rng.standard_normal((2, 3, 4)))
        def f():
            t = a.transpose(2, 0, 1).reshape(4, 6)
            picked = ad.stack([a[0, 0], a[1, 2]], axis=0).sum(axis=1, keepdims=True)
            parts = [t[1:], picked * np.ones((1, 6))]
            return ad.square(ad.concat(parts, axis=0)).mean()

        assert finite_diff_check(f, [a]) < 1e-7


class TestSpiking:
    def test_lif_chain_T8(self, rng):
        cfg = NeuronConfig(beta=0.6)
        w1 = Parameter(rng.normal(0, 0.8, (5, 6)))
        w2 = Parameter(rng.normal(0, 0.8, (6, 3)))
        x = Var(rng.normal(0.5, 1.0, (8, 4, 5)))

        def f():
            h = ad.lif(ad.lif(x, cfg, smooth=True) @ w1, cfg, smooth=True)
            return ad.square(ad.lif(h @ w2, cfg, smooth=True)).sum()

        assert finite_diff_check(f, [w1, w2]) < 1e-4

    def test_reset_variant(self, rng):
        w = Parameter(rng.normal(0, 1, (3, 3)))
        x = Var(rng.normal(0.5, 1, (8, 2, 3)))
        f = lambda: ad.lif(x @ w, smooth=True, reset_each_step=True).sum()  # noqa: E731
        assert finite_diff_check(f, [w]) < 1e-4

    def test_straight_through_forward_is_hard(self, rng):
        x = Parameter(rng.normal(1, 1, (4, 3)))
        with Tape() as t:
            s = ad.lif(x)
            t.backward(s.sum(), [x])
        assert set(np.unique(s.value)) <= {0.0, 1.0}
        assert np.all(x.grad > 0)

    def test_sdha_block(self, rng):
        spec = AttentionSpec(variant="joint", T=3, N=4, D=8, heads=2)
        layer = SpaceTimeAttention(spec, rng, gain=2.0)
        x = Var((rng.random((3, 2, 4, 8)) < 0.5).astype(float))
        params = layer.parameters()
        assert finite_diff_check(lambda: ad.square(layer(x, SMOOTH)).sum(), params) < 1e-4

    def test_channel_mlp(self, rng):
        mlp = ChannelMLP(4, rng, ratio=4)
        x = Var(rng.normal(0.8, 1.0, (4, 2, 3, 4)))
        assert mlp.fc1.weight.shape == (4, 16)
        assert finite_diff_check(lambda: ad.square(mlp(x, SMOOTH)).sum(), mlp.parameters()) < 1e-4


class TestConvNorm:
    def test_conv(self, rng):
        x = Parameter(rng.standard_normal((2, 7, 6, 3)))
        w = Parameter(rng.standard_normal((3, 3, 3, 4)))
        assert finite_diff_check(lambda: ad.square(ad.conv2d(x, w, 2, 1)).sum(), [x, w]) < 1e-7

    def test_conv_against_direct(self, rng):
        x = rng.standard_normal((1, 5, 5, 2))
        w = rng.standard_normal((3, 3, 2, 1))
        out = ad.conv2d(Var(x), Var(w), 1, 1).value
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        ref = sum(xp[0, i:i + 5, j:j + 5, :] @ w[i, j] for i in range(3) for j in range(3))
        np.testing.assert_allclose(out[0], ref, atol=1e-12)

    def test_depthwise(self, rng):
        x = Parameter(rng.standard_normal((2, 5, 5, 3)))
        w = Parameter(rng.standard_normal((3, 3, 3)))
        assert finite_diff_check(lambda: ad.square(ad.depthwise_conv2d(x, w, 1, 1)).sum(), [x, w]) < 1e-7

    def test_batch_norm(self, rng):
        x = Parameter(rng.standard_normal((6, 4)))
        g, b = Parameter(rng.uniform(0.5, 2, 4)), Parameter(rng.standard_normal(4))
        c = rng.standard_normal((6, 4))
        f = lambda: (ad.batch_norm(x, g, b)[0] * c).sum()  # noqa: E731
        assert finite_diff_check(f, [x, g, b]) < 1e-6

    def test_norm_fold(self, rng):
        n = Norm(3)
        n.running_mean = rng.standard_normal(3)
        n.running_var = rng.uniform(0.5, 2, 3)
        x = rng.standard_normal((5, 3))
        scale, shift = n.folded()
        np.testing.assert_allclose(n(Var(x)).value, x * scale + shift, atol=1e-12)

    def test_cross_entropy(self, rng):
        z = Parameter(rng.standard_normal((5, 3)))
        y = np.array([0, 2, 1, 1, 0])
        assert finite_diff_check(lambda: ad.cross_entropy(z, y), [z]) < 1e-7
