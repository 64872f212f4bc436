"""Independent gradient oracles for validating the backward engine.

Two oracles, two failure modes covered:

* relaxed finite differences: the spike step is replaced by a clipped
  linear ramp whose derivative equals the rectangular surrogate window, so
  the engine's backward pass computes the *true* gradient of the relaxed
  loss and central differences can check the complete chain-rule wiring
  (synapses, normalization, pooling, residual joins, temporal recursion,
  reset path, decay path).  Only valid with the reset path attached, since
  detaching is not expressible as a forward computation.

* forward-mode sensitivity: for tiny dense networks, propagate the
  directional derivative of every scalar parameter through the unrolled
  computation step by step, applying the surrogate window at each spike
  node.  This re-derives the chain rule in the opposite direction and
  order from the reverse engine and supports both reset modes, any
  surrogate family, and the hard (spiking) forward.
"""

from __future__ import annotations

import numpy as np

from .engine import backward
from .model import Network, build_network
from .neuron import decay_from_rho
from .rng import Rng
from .surrogate import SgConfig, family_sg
from .trainer import cross_entropy, cross_entropy_grad


def ramp_region_codes(network: Network, tape) -> list[np.ndarray]:
    """Which side of the ramp every membrane value sits on (-1, 0, +1).

    The relaxed loss is smooth in a parameter exactly while no membrane
    value moves across a ramp corner; matching codes at the two probe
    points certify that a central-difference segment stayed kink-free.
    """
    codes = []
    for _, site in network.spiking_sites(tape):
        v = site["v"]
        code = np.zeros(v.shape, dtype=np.int8)
        for t in range(v.shape[0]):
            half = site["kappas"][t] / 2.0
            code[t] = (v[t] > network.v_th + half).astype(np.int8) \
                - (v[t] < network.v_th - half).astype(np.int8)
        codes.append(code)
    return codes


def relaxed_loss_and_codes(network: Network, sg: SgConfig, x, labels):
    logits, tape = network.forward(x, sg, training=True, relaxed=True)
    return cross_entropy(logits, labels), ramp_region_codes(network, tape)


def finite_difference_check(network: Network, sg: SgConfig, x, labels,
                            n_params: int, h: float = 1e-5):
    """Compare engine gradients of the relaxed loss against central
    differences over n_params scalar parameters.

    Probes are spread evenly across every parameter array.  A probe whose
    +/-h evaluations land in different ramp regions straddles a corner of
    the piecewise-smooth loss and is discarded (the next candidate index is
    probed instead).  Returns (max_rel_err, n_probed).  Relative error uses
    a unit floor so near-zero gradient pairs compare absolutely.
    """
    logits, tape = network.forward(x, sg, training=True, relaxed=True)
    grads = backward(network, tape, cross_entropy_grad(logits, labels), detach_reset=False)

    candidates = []
    total = sum(arr.size for _, arr, _ in network.params())
    stride = max(1, total // (3 * n_params))
    for name, arr, _ in network.params():
        for idx in range(0, arr.size, stride):
            candidates.append((name, idx))

    by_name = {name: arr for name, arr, _ in network.params()}
    worst = 0.0
    probed = 0
    skipped = 0
    for name, idx in candidates:
        if probed >= n_params:
            break
        flat = by_name[name].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + h
        lp, codes_p = relaxed_loss_and_codes(network, sg, x, labels)
        flat[idx] = orig - h
        lm, codes_m = relaxed_loss_and_codes(network, sg, x, labels)
        flat[idx] = orig
        if any(np.any(cp != cm) for cp, cm in zip(codes_p, codes_m)):
            skipped += 1
            continue
        fd = (lp - lm) / (2.0 * h)
        g = grads[name].reshape(-1)[idx]
        denom = max(abs(fd), abs(g), 1.0)
        worst = max(worst, abs(fd - g) / denom)
        probed += 1
    if probed < n_params:
        raise RuntimeError(f"only {probed} kink-free probes out of {len(candidates)} "
                           f"candidates ({skipped} straddled a corner)")
    return worst, probed


def fd_suite(arch: str, input_shape, classes: int, timesteps: int, seed: int,
             n_params: int, batch: int = 3, kappa: float = 1.0):
    """Relaxed finite-difference check on a fresh random network."""
    sg = SgConfig(family="rectangular", kappa=kappa, adaptive=False)
    rng = Rng(seed)
    net = build_network(arch, input_shape, classes, rng)
    x = rng.normal(size=(timesteps, batch) + tuple(input_shape))
    labels = rng.integers(0, classes, size=batch)
    return finite_difference_check(net, sg, x, labels, n_params=n_params)


# ---------------------------------------------------------------------------
# forward-mode sensitivity oracle (tiny dense networks)
# ---------------------------------------------------------------------------

MAX_ORACLE_PARAMS = 64
MAX_ORACLE_T = 4


def _dense_layers(network: Network):
    chain = []
    for layer in network.layers:
        if layer.kind == "dense":
            chain.append(layer)
        elif layer.kind == "readout":
            chain.append(layer)
        elif layer.kind == "flatten":
            continue
        else:
            raise ValueError("forward-mode oracle supports dense chains only")
    return chain


def forward_mode_gradients(network: Network, sg: SgConfig, x, labels,
                           detach_reset: bool = False) -> dict:
    """Full gradient dict computed by per-parameter forward sensitivities."""
    chain = _dense_layers(network)
    total = sum(arr.size for _, arr, _ in network.params())
    if total > MAX_ORACLE_PARAMS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_PARAMS} parameters, got {total}")
    if x.shape[0] > MAX_ORACLE_T:
        raise ValueError(f"oracle limited to T <= {MAX_ORACLE_T}")
    x = x.reshape(x.shape[0], x.shape[1], -1)

    grads = {}
    for pname, arr, _ in network.params():
        g = np.zeros_like(arr)
        flat = g.reshape(-1)
        for idx in range(arr.size):
            flat[idx] = _directional_derivative(chain, sg, x, labels, pname, idx,
                                                detach_reset, network.v_th)
        grads[pname] = g
    return grads


def _directional_derivative(chain, sg: SgConfig, x, labels, pname: str, idx: int,
                            detach_reset: bool, v_th: float) -> float:
    """d(loss)/d(theta) for one scalar theta, by forward propagation of
    (value, derivative) pairs through the unrolled computation."""
    a = x
    da = np.zeros_like(x)
    for layer in chain:
        if layer.kind == "readout":
            w = layer.w
            dw = _seed(w, f"{layer.name}.w", pname, idx)
            m = a.mean(axis=0)
            dm = da.mean(axis=0)
            logits = m @ w.T
            dlogits = dm @ w.T + m @ dw.T
            return _ce_directional(logits, dlogits, labels)
        # dense spiking layer
        w = layer.w
        dw = _seed(w, f"{layer.name}.w", pname, idx)
        raw = np.einsum("tbi,oi->tbo", a, w)
        draw = np.einsum("tbi,oi->tbo", da, w) + np.einsum("tbi,oi->tbo", a, dw)

        gamma, beta = layer.norm.gamma, layer.norm.beta
        dgamma = _seed(gamma, f"{layer.name}.gamma", pname, idx)
        dbeta = _seed(beta, f"{layer.name}.beta", pname, idx)
        scale = layer.norm.alpha * layer.norm.v_th
        axes = (0, 1)
        mean = raw.mean(axis=axes)
        var = raw.var(axis=axes)
        dmean = draw.mean(axis=axes)
        centered = raw - mean
        dvar = 2.0 * (centered * draw).mean(axis=axes)
        inv = 1.0 / np.sqrt(var + layer.norm.eps)
        dinv = -0.5 * inv**3 * dvar
        xhat = centered * inv
        dxhat = (draw - dmean) * inv + centered * dinv
        ibar = gamma * scale * xhat + beta
        dibar = dgamma * scale * xhat + gamma * scale * dxhat + dbeta

        tau = decay_from_rho(float(layer.rho))
        drho = 1.0 if pname == f"{layer.name}.rho" else 0.0
        dtau = tau * (1.0 - tau) * drho
        gamma_bar = float(gamma.mean())

        steps = x.shape[0]
        v = np.zeros(raw.shape[1:])
        s = np.zeros_like(v)
        dv = np.zeros_like(v)
        ds = np.zeros_like(v)
        s_seq = np.empty_like(raw)
        ds_seq = np.empty_like(raw)
        for t in range(steps):
            carry = v * (1.0 - s)
            dcarry = dv * (1.0 - s)
            if not detach_reset:
                dcarry = dcarry - v * ds
            v_new = tau * carry + ibar[t]
            dv_new = tau * dcarry + dtau * carry + dibar[t]
            v, dv = v_new, dv_new
            kappa = sg.width_at(tau, gamma_bar, v_th, t + 1)
            s = (v >= v_th).astype(np.float64)
            ds = family_sg(sg.family, v, v_th, kappa) * dv
            s_seq[t] = s
            ds_seq[t] = ds
        a, da = s_seq, ds_seq
    raise RuntimeError("chain had no readout")


def _seed(arr: np.ndarray, this_name: str, pname: str, idx: int) -> np.ndarray:
    d = np.zeros_like(arr)
    if this_name == pname:
        d.reshape(-1)[idx] = 1.0
    return d


def _ce_directional(logits: np.ndarray, dlogits: np.ndarray, labels) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(labels)), labels] = 1.0
    return float(((p - onehot) * dlogits).sum() / len(labels))


def gradient_rel_err(a: dict, b: dict) -> float:
    """Largest elementwise difference, relative to the gradient set's scale.

    The denominator is the global infinity norm across all arrays (floored
    at 1e-6): an all-zero array may legitimately carry ~1e-16 float dust in
    one implementation and exact zeros in the other, which is agreement,
    not error, and must not be inflated by a per-array denominator.
    """
    diff = 0.0
    scale = 0.0
    for name in a:
        diff = max(diff, float(np.max(np.abs(a[name] - b[name]))))
        scale = max(scale, float(np.max(np.abs(a[name]))), float(np.max(np.abs(b[name]))))
    return diff / max(scale, 1e-6)


def random_tiny_instance(seed: int):
    """A random dense instance within the oracle's size limits.

    Varies depth, widths, timesteps, batch, surrogate family, adaptive
    toggle, and randomizes affine/decay parameters away from init so the
    normalization and decay paths are exercised.
    """
    rng = Rng(seed)
    depth = int(rng.integers(1, 3))
    t_steps = int(rng.integers(1, MAX_ORACLE_T + 1))
    batch = int(rng.integers(2, 4))
    classes = 2
    width = 2
    in_dim = 2
    spec = [{"kind": "dense", "out": width} for _ in range(depth)] + [{"kind": "readout"}]
    net = build_network(spec, (in_dim,), classes, rng)
    for layer in net.layers:
        if layer.kind == "dense":
            layer.norm.gamma[:] = rng.uniform(0.6, 1.4, size=layer.norm.gamma.shape)
            layer.norm.beta[:] = rng.uniform(-0.3, 0.3, size=layer.norm.beta.shape)
            layer.rho[...] = rng.uniform(-2.0, 1.0)
    family = ("rectangular", "triangular", "sigmoid", "atan")[int(rng.integers(0, 4))]
    sg = SgConfig(family=family, kappa=float(rng.uniform(0.6, 1.6)), adaptive=bool(rng.integers(0, 2)))
    x = rng.normal(size=(t_steps, batch, in_dim))
    labels = rng.integers(0, classes, size=batch)
    return net, sg, x, labels


def decision_margin(network: Network, tape, sg: SgConfig) -> float:
    """Distance of any membrane value to a discrete decision boundary.

    Spike emission flips at v == v_th; the rectangular window flips at
    |v - v_th| == kappa/2.  Two mathematically equal forwards computed in
    different operation orders may disagree on those knife edges, so
    comparisons between independent implementations are only meaningful on
    instances with a healthy margin.
    """
    margin = np.inf
    for _, site in network.spiking_sites(tape):
        v = site["v"]
        for t in range(v.shape[0]):
            d = np.abs(v[t] - network.v_th)
            margin = min(margin, float(d.min()))
            if sg.family == "rectangular":
                margin = min(margin, float(np.min(np.abs(d - site["kappas"][t] / 2.0))))
    return margin


def brute_force_suite(n_instances: int, detach_reset: bool, seed0: int = 1000,
                      margin_floor: float = 1e-6):
    """Engine-vs-forward-mode agreement over random tiny instances.

    Knife-edge instances (any membrane within margin_floor of a decision
    boundary) are redrawn.  Returns the worst relative error.
    """
    worst = 0.0
    done = 0
    attempt = 0
    while done < n_instances:
        net, sg, x, labels = random_tiny_instance(seed0 + attempt)
        attempt += 1
        if attempt > 20 * n_instances:
            raise RuntimeError("instance generator kept hitting decision boundaries")
        logits, tape = net.forward(x, sg, training=True)
        if decision_margin(net, tape, sg) < margin_floor:
            continue
        grads = backward(net, tape, cross_entropy_grad(logits, labels),
                         detach_reset=detach_reset)
        oracle = forward_mode_gradients(net, sg, x, labels, detach_reset=detach_reset)
        worst = max(worst, gradient_rel_err(grads, oracle))
        done += 1
    return worst
