"""Training loop: loss, SGD with momentum and cosine schedule, toggles.

The loop follows the usual recipe for directly trained spiking networks:
cross-entropy on the readout average, SGD with momentum 0.9, weight decay
on synapses and affine pairs (never on the decay pre-activation rho, which
would drag tau toward 0.5 regardless of data), and a cosine schedule that
anneals the learning rate to zero.  The ablation toggles select fixed
versus adaptive surrogate width and frozen versus trainable decay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import backward
from .model import Network
from .surrogate import SgConfig


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean negative log-softmax at the true class, max-stabilized."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise IndexError("label out of range")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(labels)), labels]))


def cross_entropy_grad(logits: np.ndarray, labels) -> np.ndarray:
    """d(mean cross entropy)/d(logits)."""
    labels = np.asarray(labels)
    p = softmax(logits)
    p[np.arange(len(labels)), labels] -= 1.0
    return p / len(labels)


def cosine_lr(lr0: float, epoch: int, total_epochs: int) -> float:
    """Cosine annealing from lr0 at epoch 0 to 0 at epoch == total_epochs."""
    if total_epochs <= 0:
        return lr0
    return lr0 * (1.0 + np.cos(np.pi * epoch / total_epochs)) / 2.0


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    timesteps: int = 2
    v_th: float = 0.5
    tau_init: float = 0.2
    adaptive_sg: bool = True
    trainable_decay: bool = True
    sg_family: str = "rectangular"
    kappa: float = 1.0
    detach_reset: bool = False

    def __post_init__(self):
        for positive in ("batch_size", "lr", "momentum", "timesteps", "v_th", "kappa"):
            if not getattr(self, positive) > 0:
                raise ValueError(f"{positive} must be positive")
        if self.epochs < 0 or self.weight_decay < 0:
            raise ValueError("epochs and weight_decay must be non-negative")

    def sg_config(self) -> SgConfig:
        return SgConfig(family=self.sg_family, kappa=self.kappa, adaptive=self.adaptive_sg)


class SGD:
    """Momentum SGD: m <- mu*m + g + wd*p ; p <- p - lr*m."""

    def __init__(self, momentum: float = 0.9, weight_decay: float = 1e-4):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers: dict[str, np.ndarray] = {}

    def step(self, params, grads: dict, lr: float) -> None:
        for name, p, decay in params:
            g = grads[name]
            if decay and self.weight_decay:
                g = g + self.weight_decay * p
            m = self.buffers.get(name)
            if m is None:
                m = np.zeros_like(p)
                self.buffers[name] = m
            m *= self.momentum
            m += g
            p -= lr * m


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries a per-layer statistics dump."""

    def __init__(self, message: str, diagnostics: list[str]):
        super().__init__(message + "\n" + "\n".join(diagnostics))
        self.diagnostics = diagnostics


def _divergence_dump(network: Network, tape) -> list[str]:
    rows = []
    for name, site in network.spiking_sites(tape):
        v = site["v"]
        rows.append(f"  {name}: v mean {np.nanmean(v):+.4f} var {np.nanvar(v):.4f} "
                    f"max|v| {np.nanmax(np.abs(v)):.4f} rate {site['s'].mean():.4f} "
                    f"kappa {site['kappas'][-1]:.4f}")
    return rows


def batches_for_epoch(n: int, batch_size: int, rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i: i + batch_size] for i in range(0, n, batch_size)]


def time_major(samples: np.ndarray, timesteps: int) -> np.ndarray:
    """[N, T_data, ...] -> [T, N, ...]; static data (T_data == 1) replicates."""
    t_data = samples.shape[1]
    if t_data == 1:
        rep = np.repeat(samples, timesteps, axis=1)
    elif t_data == timesteps:
        rep = samples
    else:
        raise ValueError(f"dataset time axis {t_data} incompatible with T={timesteps}")
    return np.ascontiguousarray(np.swapaxes(rep, 0, 1))


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    lr: float
    batches: int = 0


def train_epoch(network: Network, samples: np.ndarray, labels: np.ndarray,
                cfg: TrainConfig, optimizer: SGD, rng, epoch: int) -> EpochStats:
    """One pass over the data; mutates network parameters in place."""
    sg = cfg.sg_config()
    lr = cosine_lr(cfg.lr, epoch, cfg.epochs)
    total_loss = 0.0
    total_correct = 0
    total_seen = 0
    for idx in batches_for_epoch(len(labels), cfg.batch_size, rng):
        x = time_major(samples[idx], cfg.timesteps)
        y = labels[idx]
        logits, tape = network.forward(x, sg, training=True)
        loss = cross_entropy(logits, y)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}",
                                   _divergence_dump(network, tape))
        grads = backward(network, tape, cross_entropy_grad(logits, y),
                         detach_reset=cfg.detach_reset)
        if not cfg.trainable_decay:
            for name, _, _ in network.params():
                if name.split(".")[-1].startswith("rho"):
                    grads[name][...] = 0.0
        optimizer.step(network.params(), grads, lr)
        total_loss += loss * len(y)
        total_correct += int((logits.argmax(axis=1) == y).sum())
        total_seen += len(y)
    return EpochStats(epoch=epoch, loss=total_loss / total_seen,
                      accuracy=total_correct / total_seen, lr=lr,
                      batches=(len(labels) + cfg.batch_size - 1) // cfg.batch_size)


def evaluate(network: Network, samples: np.ndarray, labels: np.ndarray,
             cfg: TrainConfig, batch_size: int = 256) -> float:
    """Inference-mode accuracy (running statistics, no parameter updates)."""
    sg = cfg.sg_config()
    correct = 0
    for start in range(0, len(labels), batch_size):
        x = time_major(samples[start: start + batch_size], cfg.timesteps)
        logits, _ = network.forward(x, sg, training=False)
        correct += int((logits.argmax(axis=1) == labels[start: start + batch_size]).sum())
    return correct / len(labels)
