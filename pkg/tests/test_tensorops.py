import numpy as np
import numpy.testing as npt
import pytest

from spikegrad.rng import Rng
from spikegrad.tensorops import (
    ShapeError,
    avgpool2,
    avgpool2_backward,
    conv2d,
    conv2d_backward,
    matmul,
)


def naive_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for kk in range(k):
                acc += a[i, kk] * b[kk, j]
            out[i, j] = acc
    return out


def naive_conv2d(x, kernel, stride, padding):
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for b in range(n):
        for oc in range(o):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ic in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += xp[b, ic, i * stride + di, j * stride + dj] \
                                    * kernel[oc, ic, di, dj]
                    out[b, oc, i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        npt.assert_array_equal(matmul(np.eye(2), a), a)

    def test_projector(self):
        p = np.array([[1.0, 0.0], [0.0, 0.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        npt.assert_array_equal(matmul(p, b), [[5.0, 6.0], [0.0, 0.0]])

    def test_against_naive_loops(self):
        rng = Rng(101)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        npt.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-12, atol=1e-14)

    def test_random_sizes_against_naive(self):
        rng = Rng(55)
        for _ in range(10):
            m, k, n = (int(rng.integers(1, 17)) for _ in range(3))
            a = rng.normal(size=(m, k))
            b = rng.normal(size=(k, n))
            npt.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-12, atol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((4, 2)))

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_nonfinite_rejected(self):
        a = np.array([[1e308, 1e308]])
        b = np.array([[1e308], [1e308]])
        with pytest.raises(FloatingPointError):
            matmul(a, b)


class TestConv2d:
    def test_all_ones(self):
        x = np.ones((1, 1, 3, 3))
        k = np.ones((1, 1, 3, 3))
        out = conv2d(x, k, stride=1, padding=1)
        assert out[0, 0, 1, 1] == 9.0

    def test_delta_kernel_is_identity(self):
        rng = Rng(3)
        x = rng.normal(size=(1, 1, 5, 5))
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1.0
        npt.assert_allclose(conv2d(x, k, 1, 1), x, rtol=0, atol=0)

    def test_against_naive_loops(self):
        rng = Rng(77)
        x = rng.normal(size=(1, 2, 5, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        for stride, pad in ((1, 1), (1, 0), (2, 1)):
            if (5 + 2 * pad - 3) % stride:
                continue
            npt.assert_allclose(conv2d(x, k, stride, pad), naive_conv2d(x, k, stride, pad),
                                rtol=1e-12, atol=1e-13)

    def test_non_integral_output_rejected(self):
        with pytest.raises(ShapeError):
            conv2d(np.ones((1, 1, 6, 6)), np.ones((1, 1, 3, 3)), stride=2, padding=1)

    def test_backward_matches_finite_differences(self):
        rng = Rng(21)
        x = rng.normal(size=(2, 2, 4, 4))
        k = rng.normal(size=(3, 2, 3, 3))
        g = rng.normal(size=(2, 3, 4, 4))
        gx, gk = conv2d_backward(g, x, k, 1, 1)
        h = 1e-6
        for arr, grad in ((x, gx), (k, gk)):
            flat = arr.reshape(-1)
            for idx in range(0, flat.size, max(1, flat.size // 7)):
                orig = flat[idx]
                flat[idx] = orig + h
                up = float((conv2d(x, k, 1, 1) * g).sum())
                flat[idx] = orig - h
                dn = float((conv2d(x, k, 1, 1) * g).sum())
                flat[idx] = orig
                npt.assert_allclose(grad.reshape(-1)[idx], (up - dn) / (2 * h),
                                    rtol=1e-5, atol=1e-7)


class TestAvgPool:
    def test_constant_window(self):
        x = np.ones((1, 1, 2, 2))
        assert avgpool2(x)[0, 0, 0, 0] == 1.0

    def test_hand_mean(self):
        x = np.array([[[[0.0, 2.0], [4.0, 6.0]]]])
        assert avgpool2(x)[0, 0, 0, 0] == 3.0

    def test_constant_everywhere(self):
        x = np.full((2, 3, 4, 6), 0.7)
        npt.assert_array_equal(avgpool2(x), np.full((2, 3, 2, 3), 0.7))

    def test_odd_dims_rejected(self):
        with pytest.raises(ShapeError):
            avgpool2(np.ones((1, 1, 3, 4)))

    def test_backward_is_adjoint(self):
        rng = Rng(5)
        x = rng.normal(size=(2, 2, 4, 4))
        g = rng.normal(size=(2, 2, 2, 2))
        lhs = float((avgpool2(x) * g).sum())
        rhs = float((x * avgpool2_backward(g)).sum())
        npt.assert_allclose(lhs, rhs, rtol=1e-12)
