"""Surrogate spike derivatives and the distribution-adaptive width rule.

The spike step has no usable derivative, so the backward pass substitutes a
window function h(v) centered on the threshold.  The reference family is the
rectangle

    h(v) = (1/kappa) * 1[|v - v_th| < kappa/2]      (strict at the boundary)

which integrates to one for any width kappa.  Alternative families
(triangular, sigmoid, atan) are parameterized so their peak value matches
the rectangle's 1/kappa, making kappa comparable across families.

In adaptive mode the width follows the predicted membrane spread: the
normalized current into a layer has standard deviation ~ gamma_bar * v_th,
and after one decay step the membrane variance grows by (1 + tau^2), so

    kappa(t=1)  = 2 * gamma_bar * v_th
    kappa(t>1)  = 2 * sqrt(1 + tau^2) * gamma_bar * v_th

i.e. the window always spans two predicted standard deviations.  Widths are
recomputed from the live gamma_bar for every forward pass and clamped below
by KAPPA_FLOOR so a collapsing gamma can never zero out all gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("rectangular", "triangular", "sigmoid", "atan")

# gamma_bar can be driven toward zero by training; 1/kappa must stay finite.
KAPPA_FLOOR = 1e-3


@dataclass
class SgConfig:
    """Surrogate selection: family, fixed width, and the adaptive toggle."""

    family: str = "rectangular"
    kappa: float = 1.0
    adaptive: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown surrogate family {self.family!r}")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    def width_at(self, tau: float, gamma_bar: float, v_th: float, t: int) -> float:
        """Width used at timestep t (1-based) for a layer with the given stats."""
        if self.adaptive:
            return adaptive_width(tau, gamma_bar, v_th, t)
        return max(self.kappa, KAPPA_FLOOR)


def adaptive_width(tau: float, gamma_bar: float, v_th: float, t: int) -> float:
    """Two predicted standard deviations of the membrane distribution."""
    if t < 1:
        raise ValueError("timestep index is 1-based")
    if t == 1:
        kappa = 2.0 * gamma_bar * v_th
    else:
        kappa = 2.0 * np.sqrt(1.0 + tau * tau) * gamma_bar * v_th
    return float(max(kappa, KAPPA_FLOOR))


def rect_sg(v, v_th: float, kappa: float) -> np.ndarray:
    """Rectangular window: (1/kappa) inside |v - v_th| < kappa/2, else 0."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    v = np.asarray(v, dtype=np.float64)
    return (np.abs(v - v_th) < kappa / 2.0) / kappa


def family_sg(family: str, v, v_th: float, kappa: float) -> np.ndarray:
    """Evaluate the named surrogate family, peak-matched to height 1/kappa."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    v = np.asarray(v, dtype=np.float64)
    d = v - v_th
    if family == "rectangular":
        return rect_sg(v, v_th, kappa)
    if family == "triangular":
        return np.maximum(0.0, 1.0 - np.abs(d) / kappa) / kappa
    if family == "sigmoid":
        # logistic derivative with temperature kappa/4 peaks at 1/kappa
        temp = kappa / 4.0
        s = 1.0 / (1.0 + np.exp(-np.clip(d / temp, -500, 500)))
        return s * (1.0 - s) / temp
    if family == "atan":
        return (1.0 / kappa) / (1.0 + (np.pi * d / kappa) ** 2)
    raise ValueError(f"unknown surrogate family {family!r}")
