"""Turning numbers into spikes and back.

Shows the three input encoders (rate, latency, delta modulation), the
three output decoders, and the event-file format that carries rasters
between tools.
"""

import os
import tempfile

import numpy as np

from spikegrad import (
    DeltaParams,
    LatencyParams,
    Polarity,
    delta_encode,
    latency_decode,
    latency_encode,
    load_events,
    population_decode,
    rate_decode,
    rate_encode,
    save_events,
)

rng = np.random.default_rng(7)
features = np.array([0.05, 0.35, 0.95])
print(f"features: {features.tolist()}\n")

# Rate code: intensity -> firing probability per step.
raster = rate_encode(features, t_steps=40, rng=rng)
print("rate code, 40 steps, counts per input:", raster.counts().astype(int).tolist())

# Latency code: intensity -> one early-or-late spike per input.
lat = latency_encode(features, LatencyParams(tau=8.0, theta=0.2, t_max=40))
first = [int(t) if t < 40 else None for t in np.where(lat.data.any(0), lat.data.argmax(0), 40)]
print("latency code, first-spike step per input:", first)

# Delta modulation: spikes mark big changes of a signal, silence otherwise.
time = np.linspace(0, 4 * np.pi, 60)
signal = np.sin(time)[:, None]
on, off = delta_encode(signal, DeltaParams(threshold=0.15, polarity=Polarity.BIPOLAR))
print(f"delta code of a sine: {int(on.data.sum())} onset and {int(off.data.sum())} offset events")
print("  (a constant signal would give zero events)\n")

# Decoders reduce an output raster to a class.
out = np.zeros((20, 3))
out[:8, 0] = 1.0   # neuron 0: 8 spikes, first at step 0
out[:4, 1] = 1.0
out[10:12, 2] = 1.0
counts, rate_pred = rate_decode(out)
print("output counts", counts.astype(int).tolist(), "-> rate decode picks", rate_pred)
print("latency decode picks", latency_decode(out), "(earliest first spike)")
print("population decode over groups [0,0,1]:", population_decode(out, [0, 0, 1]))

# The event file is the on-disk raster: `t,i` lines plus a size header.
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "demo.ev")
    save_events(lat, path)
    print(f"\nevent file for the latency raster:")
    print(open(path).read().rstrip())
    assert np.array_equal(load_events(path).data, lat.data)
    print("round-trip: exact")
