import numpy as np
import numpy.testing as npt
import pytest

from spikegrad.normalization import TdBN
from spikegrad.rng import Rng
from spikegrad.tensorops import ShapeError


class TestForward:
    def test_default_scale_is_half_threshold(self):
        # standardized input, gamma=1, beta=0, alpha=1, v_th=0.5:
        # output variance approaches (alpha*v_th)^2 = 0.25
        rng = Rng(4)
        layer = TdBN(8, v_th=0.5)
        x = rng.normal(size=(2, 8000, 8))
        out = layer.forward(x, training=True)
        assert out.var() == pytest.approx(0.25, rel=0.05)
        assert abs(out.mean()) < 0.01

    def test_constant_input_gives_beta(self):
        layer = TdBN(3)
        layer.beta[:] = [0.1, -0.2, 0.3]
        x = np.full((2, 50, 3), 7.0)
        out = layer.forward(x, training=True)
        for c, b in enumerate(layer.beta):
            npt.assert_allclose(out[:, :, c], b, atol=1e-12)

    def test_affine_mean_and_std(self):
        rng = Rng(10)
        layer = TdBN(4, v_th=0.5)
        layer.gamma[:] = 2.0
        layer.beta[:] = 1.0
        x = rng.normal(size=(1, 100_000, 4))
        out = layer.forward(x, training=True)
        assert out.mean() == pytest.approx(1.0, abs=0.01)
        assert out.std() == pytest.approx(2.0 * 0.5, rel=0.01)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            TdBN(4).forward(np.zeros((1, 10, 5)), training=True)

    def test_inference_uses_running_stats(self):
        rng = Rng(2)
        layer = TdBN(3, momentum=0.5)
        for _ in range(30):
            layer.forward(rng.normal(size=(2, 200, 3)) * 2.0 + 1.0, training=True)
        x = rng.normal(size=(1, 50, 3))
        out1 = layer.forward(x, training=False)
        out2 = layer.forward(x, training=False)
        npt.assert_array_equal(out1, out2)
        # inference output must not depend on other batch members
        sub = layer.forward(x[:, :10], training=False)
        npt.assert_allclose(out1[:, :10], sub, rtol=0, atol=0)

    def test_spatial_axes_pooled(self):
        rng = Rng(6)
        layer = TdBN(2)
        x = rng.normal(size=(3, 4, 2, 5, 5))
        out = layer.forward(x, training=True)
        for c in range(2):
            npt.assert_allclose(out[:, :, c].mean(), 0.0, atol=1e-12)
            npt.assert_allclose(out[:, :, c].var(), 0.25, rtol=1e-4)


class TestChannelMeans:
    def test_initialization(self):
        assert TdBN(5).channel_affine_means() == (1.0, 0.0)

    def test_hand_means(self):
        layer = TdBN(2)
        layer.gamma[:] = [0.5, 1.5]
        layer.beta[:] = [-0.2, 0.4]
        gbar, bbar = layer.channel_affine_means()
        assert gbar == pytest.approx(1.0)
        assert bbar == pytest.approx(0.1)

    def test_single_channel(self):
        layer = TdBN(1)
        layer.gamma[:] = [0.7]
        layer.beta[:] = [0.3]
        assert layer.channel_affine_means() == (pytest.approx(0.7), pytest.approx(0.3))


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        rng = Rng(1)
        layer = TdBN(3)
        layer.forward(rng.normal(size=(2, 20, 3)), training=True)
        gx, gg, gb = layer.backward(np.zeros((2, 20, 3)))
        npt.assert_array_equal(gx, 0.0)
        npt.assert_array_equal(gg, 0.0)
        npt.assert_array_equal(gb, 0.0)

    def test_beta_grad_is_upstream_sum(self):
        rng = Rng(9)
        layer = TdBN(2)
        layer.forward(rng.normal(size=(1, 30, 2)), training=True)
        g = rng.normal(size=(1, 30, 2))
        _, _, gb = layer.backward(g)
        npt.assert_allclose(gb, g.sum(axis=(0, 1)), rtol=1e-12)

    def test_missing_cache(self):
        with pytest.raises(RuntimeError):
            TdBN(2).backward(np.zeros((1, 5, 2)))

    def test_finite_difference_all_inputs(self):
        rng = Rng(33)
        layer = TdBN(2, v_th=0.5)
        layer.gamma[:] = [0.8, 1.3]
        layer.beta[:] = [0.1, -0.2]
        x = rng.normal(size=(1, 3, 2))
        g = rng.normal(size=(1, 3, 2))

        layer.forward(x, training=True)
        gx, gg, gb = layer.backward(g)

        def loss(xx):
            probe = TdBN(2, v_th=0.5)
            probe.gamma[:] = layer.gamma
            probe.beta[:] = layer.beta
            return float((probe.forward(xx, training=True) * g).sum())

        h = 1e-5
        flat = x.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss(x)
            flat[i] = orig - h
            dn = loss(x)
            flat[i] = orig
            fd[i] = (up - dn) / (2 * h)
        npt.assert_allclose(gx.reshape(-1), fd, rtol=1e-6, atol=1e-8)

        for arr, grad in ((layer.gamma, gg), (layer.beta, gb)):
            for i in range(arr.size):
                orig = arr[i]
                arr[i] = orig + h
                up = loss(x)
                arr[i] = orig - h
                dn = loss(x)
                arr[i] = orig
                npt.assert_allclose(grad[i], (up - dn) / (2 * h), rtol=1e-6, atol=1e-8)
