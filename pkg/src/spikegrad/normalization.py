"""Threshold-scaled batch normalization over the joint batch-time extent.

Pre-synaptic currents of a spiking layer are normalized per channel across
every other axis (time, batch, and space together), scaled to standard
deviation alpha * v_th instead of 1, and then shifted by the learnable
per-channel affine pair (gamma, beta):

    y_c = gamma_c * alpha * v_th * (x_c - mean_c) / sqrt(var_c + eps) + beta_c

The channel means of gamma and beta (gamma_bar, beta_bar) summarize the
affine stage; they predict the first two moments of the normalized current
and drive the adaptive surrogate-width rule.
"""

from __future__ import annotations

import numpy as np

from .tensorops import ShapeError, check_finite


class TdBN:
    """Per-channel normalize + affine with running inference statistics.

    Expects inputs whose axis 2 is the channel axis ([T, N, C, ...] in this
    library's layouts); statistics pool over all remaining axes.  Training
    mode uses batch statistics and updates the running ones by exponential
    moving average; inference mode is a pure function of the running stats.
    """

    def __init__(self, channels: int, v_th: float = 0.5, alpha: float = 1.0,
                 eps: float = 1e-5, momentum: float = 0.1, channel_axis: int = 2):
        self.channels = channels
        self.v_th = float(v_th)
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.channel_axis = channel_axis
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.cache = None

    def _axes(self, x: np.ndarray) -> tuple[int, ...]:
        if x.shape[self.channel_axis] != self.channels:
            raise ShapeError(
                f"channel mismatch: input has {x.shape[self.channel_axis]} channels "
                f"on axis {self.channel_axis}, layer has {self.channels}")
        return tuple(a for a in range(x.ndim) if a != self.channel_axis)

    def _expand(self, per_channel: np.ndarray, ndim: int) -> np.ndarray:
        shape = [1] * ndim
        shape[self.channel_axis] = self.channels
        return per_channel.reshape(shape)

    def forward(self, x, training: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        axes = self._axes(x)
        scale = self.alpha * self.v_th
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            n = int(np.prod([x.shape[a] for a in axes]))
            unbiased = var * (n / (n - 1)) if n > 1 else var
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
            inv_std = 1.0 / np.sqrt(var + self.eps)
            x_hat = (x - self._expand(mean, x.ndim)) * self._expand(inv_std, x.ndim)
            self.cache = (x_hat, inv_std, axes, n)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            x_hat = (x - self._expand(self.running_mean, x.ndim)) * self._expand(inv_std, x.ndim)
        y = self._expand(self.gamma * scale, x.ndim) * x_hat + self._expand(self.beta, x.ndim)
        return check_finite(y, "tdbn forward")

    def backward(self, grad_out: np.ndarray, cache=None):
        """Exact gradients of the training-mode forward.

        Returns (grad_x, grad_gamma, grad_beta).  Uses the supplied cache,
        or the one left by the most recent training-mode forward.
        """
        cache = cache if cache is not None else self.cache
        if cache is None:
            raise RuntimeError("tdbn backward needs a training-mode forward cache")
        x_hat, inv_std, axes, n = cache
        scale = self.alpha * self.v_th
        grad_beta = grad_out.sum(axis=axes)
        grad_gamma = (grad_out * x_hat).sum(axis=axes) * scale
        g = grad_out * self._expand(self.gamma * scale, grad_out.ndim)
        mean_g = g.mean(axis=axes)
        mean_gx = (g * x_hat).mean(axis=axes)
        grad_x = (g - self._expand(mean_g, g.ndim) - x_hat * self._expand(mean_gx, g.ndim)) \
            * self._expand(inv_std, g.ndim)
        return grad_x, grad_gamma, grad_beta

    def channel_affine_means(self) -> tuple[float, float]:
        """(gamma_bar, beta_bar): arithmetic means of the affine pairs."""
        return float(self.gamma.mean()), float(self.beta.mean())

    @property
    def gamma_bar(self) -> float:
        return float(self.gamma.mean())

    @property
    def beta_bar(self) -> float:
        return float(self.beta.mean())
