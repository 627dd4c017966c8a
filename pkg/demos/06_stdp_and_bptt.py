"""The pairing rule, and how backprop quietly reproduces half of it.

First the classic spike-timing window: causal pairs (pre before post)
potentiate, anti-causal pairs depress, both decaying exponentially with
the gap.  Then the same exponential emerges from BPTT with the hybrid
(spike-valued) surrogate: a gradient crossing an n-step quiet gap is
scaled by beta^n, which is exactly the causal half of the window.
"""

import numpy as np

from spikegrad import (
    LifParams,
    OutputGrads,
    SnnLayer,
    SpikeRaster,
    StdpParams,
    SurrogateKind,
    backward,
    forward,
    stdp_delta_w,
    stdp_update,
)

params = StdpParams(a_plus=1.0, a_minus=-1.0, tau_plus=8.0, tau_minus=8.0, w_min=-5, w_max=5)
print("pairing-rule window (dt = t_pre - t_post):")
for dt in (-16, -8, -2, 0, 2, 8, 16):
    bar = stdp_delta_w(float(dt), params)
    print(f"  dt={dt:+3d}  dW={bar:+.4f}  {'#' * int(abs(bar) * 20)}")

# Raster-level update: one causal pair of spikes strengthens the synapse.
pre = np.zeros((30, 1))
post = np.zeros((30, 1))
pre[5, 0] = 1.0
post[9, 0] = 1.0
w = stdp_update(SpikeRaster(pre), SpikeRaster(post), np.zeros((1, 1)), params)
print(f"\nsingle causal pair, gap 4 steps: dW = {w[0, 0]:.4f} (= e^(-4/8))\n")

# BPTT side: probe input fires n steps before a driver forces the output
# spike; the probe weight's gradient decays by beta per quiet step.
beta = 0.8
lif = LifParams(beta=beta, theta0=1.0)
print(f"hybrid-surrogate gradient across a quiet gap (beta = {beta}):")
t_post, t_steps = 14, 18
mags = []
for gap in range(1, 9):
    layer = SnnLayer(w=np.array([[0.05, 2.0]]), lif=lif)
    x = np.zeros((t_steps, 2))
    x[t_post - gap, 0] = 1.0
    x[t_post, 1] = 1.0
    record = forward([layer], x)
    d_s = np.zeros((t_steps, 1))
    d_s[t_post, 0] = 1.0
    grads = backward(record, OutputGrads(d_spikes=d_s), surrogate=SurrogateKind.hybrid_spike(0.0))
    mags.append(abs(grads[0].d_w[0, 0]))
    print(f"  gap={gap}  |dW|={mags[-1]:.6f}  {'#' * int(mags[-1] * 40)}")
ratios = [float(b / a) for a, b in zip(mags, mags[1:])]
print(f"consecutive ratios: {[round(r, 12) for r in ratios[:3]]} ... all exactly beta")
print("-> the causal half of the pairing window, straight out of backprop.")
