"""Reverse-mode gradient flow across layers and timesteps.

The loss reaches a spiking layer twice at every timestep: spatially through
the layer above, and temporally through the next membrane state.  Walking
time backward from t = T (with the boundary adjoint at T+1 equal to zero):

    dL/dS(t) = spatial(t) + dL/dV(t+1) * (-tau * V(t))     # reset gate
    dL/dV(t) = dL/dS(t) * h(V(t)) + dL/dV(t+1) * tau * (1 - S(t))

where h is the surrogate window recorded at forward time.  Spikes are held
constant inside the carry factor tau * (1 - S(t)); the surrogate applies
only where dS/dV itself appears.  The decay adjoint accumulates the direct
partial dV(t)/dtau = V(t-1) * (1 - S(t-1)) and is chained through
dtau/drho = tau * (1 - tau) once per layer.

The reset-gate term above follows from the membrane update exactly; some
implementations detach it, so `detach_reset` switches it off and both modes
are validated against their own oracles.
"""

from __future__ import annotations

import numpy as np

from .surrogate import family_sg


def lif_backward(grad_s_spatial: np.ndarray, v: np.ndarray, s: np.ndarray,
                 kappas, tau: float, v_th: float, family: str,
                 detach_reset: bool = False):
    """Backward pass of one membrane unroll.

    grad_s_spatial, v, s are [T, ...]; kappas has one width per timestep.
    Returns (grad_currents [T, ...], grad_rho scalar).
    """
    steps = v.shape[0]
    grad_i = np.empty_like(v)
    dv_next = None
    rho_acc = 0.0
    for t in range(steps - 1, -1, -1):
        ds = grad_s_spatial[t]
        if dv_next is not None and not detach_reset:
            ds = ds + dv_next * (-tau * v[t])
        h = family_sg(family, v[t], v_th, kappas[t])
        dv = ds * h
        if dv_next is not None:
            dv = dv + dv_next * tau * (1.0 - s[t])
        grad_i[t] = dv
        if t >= 1:
            rho_acc += float(np.sum(dv * v[t - 1] * (1.0 - s[t - 1])))
        dv_next = dv
    grad_rho = rho_acc * tau * (1.0 - tau)
    return grad_i, grad_rho


def zero_gradients(network) -> dict:
    """Fresh gradient accumulator mirroring every parameter's shape."""
    return {name: np.zeros_like(arr) for name, arr, _ in network.params()}


def backward(network, tape, grad_logits: np.ndarray,
             detach_reset: bool = False) -> dict:
    """Propagate d(loss)/d(logits) through a recorded forward pass.

    Returns a dict of parameter-name -> gradient array.  Consumes the tape
    produced by the matching `network.forward`.
    """
    grads = zero_gradients(network)
    grad = grad_logits
    for cache in reversed(tape):
        grad = cache["layer"].backward(grad, cache, grads, detach_reset=detach_reset)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    return grads
