"""Network building blocks operating on time-major activations.

Activations are [T, N, C, H, W] for convolutional stages and [T, N, F] for
dense stages.  A spiking layer applies its linear map to every timestep,
normalizes the pooled currents once across the joint time-batch extent, and
then unrolls the membrane recursion; its cache records everything the
backward pass and the instrumentation need (currents, potentials, spikes,
and the surrogate width used at each timestep).
"""

from __future__ import annotations

import numpy as np

from .engine import lif_backward
from .neuron import NeuronConfig, decay_from_rho, rho_from_decay, unroll
from .normalization import TdBN
from .rng import Rng, uniform_fanin_init
from .surrogate import SgConfig
from .tensorops import (
    ShapeError,
    avgpool2,
    avgpool2_backward,
    conv2d,
    conv2d_backward,
)


def _fold_time(x: np.ndarray) -> np.ndarray:
    return x.reshape((x.shape[0] * x.shape[1],) + x.shape[2:])


def _unfold_time(x: np.ndarray, t: int, n: int) -> np.ndarray:
    return x.reshape((t, n) + x.shape[1:])


class SpikingDense:
    """Fully connected synapses -> normalization -> membrane unroll."""

    kind = "dense"
    spiking = True

    def __init__(self, name: str, in_features: int, out_features: int, rng: Rng,
                 v_th: float = 0.5, tau_init: float = 0.2):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        self.v_th = float(v_th)
        self.w = uniform_fanin_init(rng, (out_features, in_features), in_features)
        self.norm = TdBN(out_features, v_th=v_th)
        self.rho = np.full((), rho_from_decay(tau_init))

    @property
    def tau(self) -> float:
        return decay_from_rho(float(self.rho))

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ShapeError(f"{self.name}: expected ({self.in_features},), got {in_shape}")
        return (self.out_features,)

    def ann_macs(self, in_shape) -> int:
        return self.in_features * self.out_features

    def params(self):
        return [(f"{self.name}.w", self.w, True),
                (f"{self.name}.gamma", self.norm.gamma, True),
                (f"{self.name}.beta", self.norm.beta, True),
                (f"{self.name}.rho", self.rho, False)]

    def forward(self, x: np.ndarray, sg: SgConfig, training: bool = True,
                relaxed: bool = False):
        t, n = x.shape[0], x.shape[1]
        raw = _unfold_time(_fold_time(x) @ self.w.T, t, n)
        ibar = self.norm.forward(raw, training=training)
        norm_cache = self.norm.cache if training else None
        tau = self.tau
        gamma_bar = self.norm.gamma_bar
        kappas = [sg.width_at(tau, gamma_bar, self.v_th, step + 1) for step in range(t)]
        cfg = NeuronConfig(v_th=self.v_th, rho=float(self.rho))
        v, s = unroll(ibar, cfg, relax_widths=kappas if relaxed else None)
        cache = {
            "layer": self, "x": x, "ibar": ibar, "v": v, "s": s,
            "kappas": kappas, "tau": tau, "norm_cache": norm_cache,
            "sg": sg, "relaxed": relaxed,
        }
        return s, cache

    def backward(self, grad_s: np.ndarray, cache: dict, grads: dict,
                 detach_reset: bool = False) -> np.ndarray:
        grad_ibar, grad_rho = lif_backward(
            grad_s, cache["v"], cache["s"], cache["kappas"], cache["tau"],
            self.v_th, cache["sg"].family, detach_reset=detach_reset)
        grad_raw, grad_gamma, grad_beta = self.norm.backward(grad_ibar, cache["norm_cache"])
        t, n = grad_raw.shape[0], grad_raw.shape[1]
        flat = _fold_time(grad_raw)
        x_flat = _fold_time(cache["x"])
        grads[f"{self.name}.w"] += flat.T @ x_flat
        grads[f"{self.name}.gamma"] += grad_gamma
        grads[f"{self.name}.beta"] += grad_beta
        grads[f"{self.name}.rho"] += grad_rho
        return _unfold_time(flat @ self.w, t, n)


class SpikingConv:
    """3x3-style convolution -> normalization -> membrane unroll."""

    kind = "conv"
    spiking = True

    def __init__(self, name: str, in_channels: int, out_channels: int, rng: Rng,
                 kernel: int = 3, stride: int = 1, padding: int = 1,
                 v_th: float = 0.5, tau_init: float = 0.2):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.v_th = float(v_th)
        fan_in = in_channels * kernel * kernel
        self.w = uniform_fanin_init(rng, (out_channels, in_channels, kernel, kernel), fan_in)
        self.norm = TdBN(out_channels, v_th=v_th)
        self.rho = np.full((), rho_from_decay(tau_init))

    @property
    def tau(self) -> float:
        return decay_from_rho(float(self.rho))

    def _spatial_out(self, hw):
        h, w = hw
        oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
        return oh, ow

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(f"{self.name}: expected ({self.in_channels},H,W), got {in_shape}")
        h, w = in_shape[1], in_shape[2]
        if (h + 2 * self.padding - self.kernel) % self.stride or \
           (w + 2 * self.padding - self.kernel) % self.stride:
            raise ShapeError(f"{self.name}: non-integral output size for input {in_shape}")
        return (self.out_channels,) + self._spatial_out((h, w))

    def ann_macs(self, in_shape) -> int:
        oh, ow = self._spatial_out(in_shape[1:])
        return self.out_channels * self.in_channels * self.kernel * self.kernel * oh * ow

    def params(self):
        return [(f"{self.name}.w", self.w, True),
                (f"{self.name}.gamma", self.norm.gamma, True),
                (f"{self.name}.beta", self.norm.beta, True),
                (f"{self.name}.rho", self.rho, False)]

    def forward(self, x: np.ndarray, sg: SgConfig, training: bool = True,
                relaxed: bool = False):
        t, n = x.shape[0], x.shape[1]
        raw = _unfold_time(conv2d(_fold_time(x), self.w, self.stride, self.padding), t, n)
        ibar = self.norm.forward(raw, training=training)
        norm_cache = self.norm.cache if training else None
        tau = self.tau
        gamma_bar = self.norm.gamma_bar
        kappas = [sg.width_at(tau, gamma_bar, self.v_th, step + 1) for step in range(t)]
        cfg = NeuronConfig(v_th=self.v_th, rho=float(self.rho))
        v, s = unroll(ibar, cfg, relax_widths=kappas if relaxed else None)
        cache = {
            "layer": self, "x": x, "ibar": ibar, "v": v, "s": s,
            "kappas": kappas, "tau": tau, "norm_cache": norm_cache,
            "sg": sg, "relaxed": relaxed,
        }
        return s, cache

    def backward(self, grad_s: np.ndarray, cache: dict, grads: dict,
                 detach_reset: bool = False) -> np.ndarray:
        grad_ibar, grad_rho = lif_backward(
            grad_s, cache["v"], cache["s"], cache["kappas"], cache["tau"],
            self.v_th, cache["sg"].family, detach_reset=detach_reset)
        grad_raw, grad_gamma, grad_beta = self.norm.backward(grad_ibar, cache["norm_cache"])
        t, n = grad_raw.shape[0], grad_raw.shape[1]
        grad_x, grad_w = conv2d_backward(
            _fold_time(grad_raw), _fold_time(cache["x"]), self.w, self.stride, self.padding)
        grads[f"{self.name}.w"] += grad_w
        grads[f"{self.name}.gamma"] += grad_gamma
        grads[f"{self.name}.beta"] += grad_beta
        grads[f"{self.name}.rho"] += grad_rho
        return _unfold_time(grad_x, t, n)


class ResidualBlock:
    """Two 3x3 spiking conv stages with a shortcut joined before the second
    normalization, i.e. the skip current adds to the second convolution's
    raw output and the sum is normalized once.  A 1x1 strided convolution
    projects the shortcut when shape changes."""

    kind = "res"
    spiking = True

    def __init__(self, name: str, in_channels: int, out_channels: int, rng: Rng,
                 stride: int = 1, v_th: float = 0.5, tau_init: float = 0.2):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.v_th = float(v_th)
        fan1 = in_channels * 9
        fan2 = out_channels * 9
        self.w1 = uniform_fanin_init(rng, (out_channels, in_channels, 3, 3), fan1)
        self.w2 = uniform_fanin_init(rng, (out_channels, out_channels, 3, 3), fan2)
        self.norm1 = TdBN(out_channels, v_th=v_th)
        self.norm2 = TdBN(out_channels, v_th=v_th)
        self.rho1 = np.full((), rho_from_decay(tau_init))
        self.rho2 = np.full((), rho_from_decay(tau_init))
        self.projects = stride != 1 or in_channels != out_channels
        if self.projects:
            self.w_skip = uniform_fanin_init(rng, (out_channels, in_channels, 1, 1), in_channels)

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(f"{self.name}: expected ({self.in_channels},H,W), got {in_shape}")
        h, w = in_shape[1], in_shape[2]
        if (h + 2 - 3) % self.stride or (w + 2 - 3) % self.stride:
            raise ShapeError(f"{self.name}: non-integral output size for input {in_shape}")
        oh = (h + 2 - 3) // self.stride + 1
        ow = (w + 2 - 3) // self.stride + 1
        return (self.out_channels, oh, ow)

    def ann_macs(self, in_shape) -> int:
        _, oh, ow = self.out_shape(in_shape)
        macs = self.out_channels * self.in_channels * 9 * oh * ow
        macs += self.out_channels * self.out_channels * 9 * oh * ow
        if self.projects:
            macs += self.out_channels * self.in_channels * oh * ow
        return macs

    def params(self):
        out = [(f"{self.name}.w1", self.w1, True),
               (f"{self.name}.gamma1", self.norm1.gamma, True),
               (f"{self.name}.beta1", self.norm1.beta, True),
               (f"{self.name}.rho1", self.rho1, False),
               (f"{self.name}.w2", self.w2, True),
               (f"{self.name}.gamma2", self.norm2.gamma, True),
               (f"{self.name}.beta2", self.norm2.beta, True),
               (f"{self.name}.rho2", self.rho2, False)]
        if self.projects:
            out.append((f"{self.name}.w_skip", self.w_skip, True))
        return out

    def forward(self, x: np.ndarray, sg: SgConfig, training: bool = True,
                relaxed: bool = False):
        t, n = x.shape[0], x.shape[1]
        x_flat = _fold_time(x)
        tau1 = decay_from_rho(float(self.rho1))
        tau2 = decay_from_rho(float(self.rho2))

        raw1 = _unfold_time(conv2d(x_flat, self.w1, self.stride, 1), t, n)
        ibar1 = self.norm1.forward(raw1, training=training)
        cache1 = self.norm1.cache if training else None
        kappas1 = [sg.width_at(tau1, self.norm1.gamma_bar, self.v_th, step + 1) for step in range(t)]
        v1, s1 = unroll(ibar1, NeuronConfig(v_th=self.v_th, rho=float(self.rho1)),
                        relax_widths=kappas1 if relaxed else None)

        merge = conv2d(_fold_time(s1), self.w2, 1, 1)
        if self.projects:
            merge = merge + conv2d(x_flat, self.w_skip, self.stride, 0)
        else:
            merge = merge + x_flat
        merge = _unfold_time(merge, t, n)
        ibar2 = self.norm2.forward(merge, training=training)
        cache2 = self.norm2.cache if training else None
        kappas2 = [sg.width_at(tau2, self.norm2.gamma_bar, self.v_th, step + 1) for step in range(t)]
        v2, s2 = unroll(ibar2, NeuronConfig(v_th=self.v_th, rho=float(self.rho2)),
                        relax_widths=kappas2 if relaxed else None)

        cache = {
            "layer": self, "x": x, "sg": sg, "relaxed": relaxed,
            "sites": [
                {"ibar": ibar1, "v": v1, "s": s1, "kappas": kappas1, "tau": tau1,
                 "norm_cache": cache1, "suffix": "a"},
                {"ibar": ibar2, "v": v2, "s": s2, "kappas": kappas2, "tau": tau2,
                 "norm_cache": cache2, "suffix": "b"},
            ],
        }
        return s2, cache

    def backward(self, grad_s: np.ndarray, cache: dict, grads: dict,
                 detach_reset: bool = False) -> np.ndarray:
        sg = cache["sg"]
        site1, site2 = cache["sites"]
        x = cache["x"]
        t, n = x.shape[0], x.shape[1]
        x_flat = _fold_time(x)

        grad_ibar2, grad_rho2 = lif_backward(
            grad_s, site2["v"], site2["s"], site2["kappas"], site2["tau"],
            self.v_th, sg.family, detach_reset=detach_reset)
        grad_merge, g_gamma2, g_beta2 = self.norm2.backward(grad_ibar2, site2["norm_cache"])
        grad_merge_flat = _fold_time(grad_merge)

        grad_s1_flat, grad_w2 = conv2d_backward(grad_merge_flat, _fold_time(site1["s"]), self.w2, 1, 1)
        if self.projects:
            grad_x_skip, grad_w_skip = conv2d_backward(grad_merge_flat, x_flat, self.w_skip, self.stride, 0)
            grads[f"{self.name}.w_skip"] += grad_w_skip
        else:
            grad_x_skip = grad_merge_flat

        grad_ibar1, grad_rho1 = lif_backward(
            _unfold_time(grad_s1_flat, t, n), site1["v"], site1["s"], site1["kappas"],
            site1["tau"], self.v_th, sg.family, detach_reset=detach_reset)
        grad_raw1, g_gamma1, g_beta1 = self.norm1.backward(grad_ibar1, site1["norm_cache"])
        grad_x_main, grad_w1 = conv2d_backward(_fold_time(grad_raw1), x_flat, self.w1, self.stride, 1)

        grads[f"{self.name}.w1"] += grad_w1
        grads[f"{self.name}.gamma1"] += g_gamma1
        grads[f"{self.name}.beta1"] += g_beta1
        grads[f"{self.name}.rho1"] += grad_rho1
        grads[f"{self.name}.w2"] += grad_w2
        grads[f"{self.name}.gamma2"] += g_gamma2
        grads[f"{self.name}.beta2"] += g_beta2
        grads[f"{self.name}.rho2"] += grad_rho2
        return _unfold_time(grad_x_main + grad_x_skip, t, n)


class AvgPool2:
    kind = "pool"
    spiking = False

    def __init__(self, name: str):
        self.name = name

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ShapeError(f"{self.name}: avgpool needs even spatial dims, got {in_shape}")
        return (c, h // 2, w // 2)

    def ann_macs(self, in_shape) -> int:
        return 0

    def params(self):
        return []

    def forward(self, x, sg, training=True, relaxed=False):
        t, n = x.shape[0], x.shape[1]
        out = _unfold_time(avgpool2(_fold_time(x)), t, n)
        return out, {"layer": self}

    def backward(self, grad_out, cache, grads, detach_reset=False):
        t, n = grad_out.shape[0], grad_out.shape[1]
        return _unfold_time(avgpool2_backward(_fold_time(grad_out)), t, n)


class Flatten:
    kind = "flatten"
    spiking = False

    def __init__(self, name: str):
        self.name = name

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def ann_macs(self, in_shape) -> int:
        return 0

    def params(self):
        return []

    def forward(self, x, sg, training=True, relaxed=False):
        t, n = x.shape[0], x.shape[1]
        return x.reshape(t, n, -1), {"layer": self, "shape": x.shape}

    def backward(self, grad_out, cache, grads, detach_reset=False):
        return grad_out.reshape(cache["shape"])


class Readout:
    """Non-firing output stage: time-averaged weighted spike counts."""

    kind = "readout"
    spiking = False

    def __init__(self, name: str, in_features: int, classes: int, rng: Rng):
        self.name = name
        self.in_features = in_features
        self.classes = classes
        self.w = uniform_fanin_init(rng, (classes, in_features), in_features)

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ShapeError(f"{self.name}: expected ({self.in_features},), got {in_shape}")
        return (self.classes,)

    def ann_macs(self, in_shape) -> int:
        return self.in_features * self.classes

    def params(self):
        return [(f"{self.name}.w", self.w, True)]

    def forward(self, x, sg, training=True, relaxed=False):
        logits = x.mean(axis=0) @ self.w.T
        return logits, {"layer": self, "x": x}

    def backward(self, grad_logits, cache, grads, detach_reset=False):
        x = cache["x"]
        t = x.shape[0]
        grads[f"{self.name}.w"] += grad_logits.T @ x.mean(axis=0)
        per_t = (grad_logits @ self.w) / t
        return np.broadcast_to(per_t, (t,) + per_t.shape).copy()
