"""Iterative leaky integrate-and-fire dynamics with hard reset.

The membrane update per timestep is

    v(t) = tau * v(t-1) * (1 - s(t-1)) + i(t)
    s(t) = 1 if v(t) >= v_th else 0

so a spike at t-1 annihilates the carried potential (reset to zero via the
multiplicative gate), and the boundary v(t) == v_th fires.  The decay is a
per-layer scalar, optionally learnable through its pre-activation rho with
tau = sigmoid(rho), which keeps tau inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorops import ShapeError


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def decay_from_rho(rho: float) -> float:
    """tau = sigmoid(rho), the learnable-decay parameterization."""
    return float(sigmoid(float(rho)))


def rho_from_decay(tau: float) -> float:
    """Inverse of decay_from_rho; used to initialize rho from a target tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    return float(np.log(tau / (1.0 - tau)))


@dataclass
class NeuronConfig:
    """Per-layer neuron parameters: threshold and decay pre-activation."""

    v_th: float = 0.5
    rho: float = rho_from_decay(0.2)

    def __post_init__(self):
        if not self.v_th > 0:
            raise ValueError("v_th must be positive")

    @property
    def tau(self) -> float:
        return decay_from_rho(self.rho)


def lif_step(v_prev, s_prev, input_current, cfg: NeuronConfig):
    """One membrane update. s_prev must be binary; returns (v, s)."""
    v_prev = np.asarray(v_prev, dtype=np.float64)
    s_prev = np.asarray(s_prev, dtype=np.float64)
    i_t = np.asarray(input_current, dtype=np.float64)
    if not (v_prev.shape == s_prev.shape == i_t.shape):
        raise ShapeError("lif_step operands must share one shape")
    if not np.all((s_prev == 0.0) | (s_prev == 1.0)):
        raise ValueError("s_prev must be binary")
    v = cfg.tau * v_prev * (1.0 - s_prev) + i_t
    s = (v >= cfg.v_th).astype(np.float64)
    return v, s


def unroll(currents, cfg: NeuronConfig, relax_widths=None):
    """Run the membrane recursion over currents[T, ...] starting from rest.

    Returns (v, s) arrays shaped like the input with a leading time axis.
    With relax_widths (one width per timestep, or a scalar), the hard step
    is replaced by the clipped linear ramp of slope 1/width centered at
    v_th (used by the gradient-check oracle), and the reset gate uses the
    relaxed value.
    """
    currents = np.asarray(currents, dtype=np.float64)
    if currents.ndim < 1 or currents.shape[0] < 1:
        raise ShapeError("unroll needs a leading time axis of length >= 1")
    steps = currents.shape[0]
    if relax_widths is not None and np.isscalar(relax_widths):
        relax_widths = [float(relax_widths)] * steps
    tau = cfg.tau
    v_seq = np.empty_like(currents)
    s_seq = np.empty_like(currents)
    v = np.zeros(currents.shape[1:])
    s = np.zeros(currents.shape[1:])
    for t in range(steps):
        v = tau * v * (1.0 - s) + currents[t]
        if relax_widths is None:
            s = (v >= cfg.v_th).astype(np.float64)
        else:
            s = spike_ramp(v, cfg.v_th, relax_widths[t])
        v_seq[t] = v
        s_seq[t] = s
    return v_seq, s_seq


def spike_ramp(v, v_th: float, width: float):
    """Differentiable spike relaxation: 0 below v_th - width/2, 1 above
    v_th + width/2, linear (slope 1/width) in between.  Its derivative is
    the rectangular surrogate window, so the spiking and relaxed models
    share one backward pass."""
    return np.clip((np.asarray(v, dtype=np.float64) - v_th) / width + 0.5, 0.0, 1.0)
