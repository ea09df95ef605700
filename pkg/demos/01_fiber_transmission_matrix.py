"""
Measuring the transmission matrix of a simulated fiber
======================================================

A multimode fiber scrambles the light displayed on the SLM. Before it can be
used as a programmable circuit its transmission matrix (TM) has to be
measured. Here we phase-step every Fourier mode against a static reference,
compare the result with the hidden ground truth, and focus light on one
detector with the conjugated TM row.
"""

import numpy as np

from mmfcircuit import PhaseMask, make_bench, measure_tm
from mmfcircuit.bench import propagate_half

# 64 SLM macro-pixels per polarization half, 23 detector pixels
bench = make_bench(n_modes=64, n_det=23, seed=0)

# noiseless four-step phase stepping
tm = measure_tm(bench, "H")
truth = bench.transmission("H")
cos = np.abs(np.sum(tm.t * truth.conj(), axis=1)) / (np.linalg.norm(tm.t, axis=1) * np.linalg.norm(truth, axis=1))
print(f"row collinearity with ground truth: min {cos.min():.12f}")

# finite photon numbers add shot noise to every frame
for scale in (1e4, 1e5, 1e6):
    noisy = measure_tm(bench, "H", photon_scale=scale, rng=1)
    print(f"photon scale {scale:8.0e}: error {np.linalg.norm(noisy.t - tm.t):.4f}")

# phase conjugation focuses the H half on detector 3
mask = PhaseMask(-np.angle(tm.calibrated()[3]))
power = np.abs(propagate_half(bench, "H", mask)) ** 2
print(f"focus enhancement on detector 3: {power[3] / np.delete(power, 3).mean():.1f}x")
