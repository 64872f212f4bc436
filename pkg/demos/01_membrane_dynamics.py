"""Membrane dynamics walkthrough: integrate, fire, hard-reset.

Shows the three regimes of the iterative neuron on hand-picked inputs:
sub-threshold accumulation toward the geometric limit, threshold crossing
with the multiplicative reset, and the learnable decay parameterization.
"""

import numpy as np

from spikegrad import NeuronConfig, decay_from_rho, rho_from_decay, unroll

cfg = NeuronConfig(v_th=0.5, rho=rho_from_decay(0.6))
print(f"decay tau = {cfg.tau:.3f} (rho = {cfg.rho:.3f}); threshold = {cfg.v_th}")

print("\n-- sub-threshold: constant drive i=0.15 accumulates toward i/(1-tau) =",
      f"{0.15 / (1 - cfg.tau):.4f}")
currents = np.full((12, 1), 0.15)
v, s = unroll(currents, cfg)
for t in range(12):
    bar = "#" * int(v[t, 0] * 60)
    print(f"  t={t + 1:2d}  v={v[t, 0]:.4f}  {bar}")
assert s.sum() == 0, "never crosses threshold"

print("\n-- threshold crossing: drive i=0.23 fires and hard-resets")
currents = np.full((12, 1), 0.23)
v, s = unroll(currents, cfg)
for t in range(12):
    mark = " SPIKE (carry annihilated)" if s[t, 0] else ""
    print(f"  t={t + 1:2d}  v={v[t, 0]:.4f}{mark}")

print("\n-- the reset is a multiplicative gate: after a spike the next")
print("   membrane value is independent of the carried potential")
cfg2 = NeuronConfig(v_th=0.5, rho=rho_from_decay(0.9))
for carried in (0.6, 5.0, 50.0):
    v1, s1 = unroll(np.array([[carried], [0.3]]), cfg2)
    print(f"  carry {carried:5.1f} -> fired={bool(s1[0, 0])}, v(2) = {v1[1, 0]:.3f}")

print("\n-- decay is sigmoid(rho), so any real rho keeps tau inside (0, 1)")
for rho in (-4.0, -np.log(4.0), 0.0, 2.0):
    print(f"  rho = {rho:+.3f} -> tau = {decay_from_rho(rho):.4f}")
print("  (the -ln 4 row is the standard 0.2 initialization)")
