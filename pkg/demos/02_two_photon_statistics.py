"""
Two-photon statistics of a linear network
=========================================

One H and one V photon enter an operator whose columns are their output
amplitudes. The coincidence probabilities interpolate between classical
particles (gamma = 0) and fully indistinguishable bosons (gamma = 1), where
they reduce to squared 2x2 permanents.
"""

import numpy as np

from mmfcircuit import PhotonPairSource, coincidence_distribution, hom_scan, permanent, sylvester_operator, visibility

L = sylvester_operator(4)
print("H column:", L.column_H)
print("V column:", L.column_V)

for gamma in (0.0, 0.95, 1.0):
    d = coincidence_distribution(L, gamma)
    print(f"gamma={gamma:4.2f}  P(i<j) =", np.round(d.probs[np.triu_indices(4, 1)], 4))

# gamma = 1 agrees with the permanent of the selected rows
p01 = abs(permanent(L.matrix[[0, 1], :])) ** 2
print(f"permanent check for (0, 1): {p01:.4f}")

# a delay scan: dips where the amplitudes cancel, peaks where they add
src = PhotonPairSource(pair_rate=1e4, max_indistinguishability=0.95)
delays = np.linspace(-600e-15, 600e-15, 7)
counts = hom_scan(L, src, delays, acquisition_time=10.0)
far, zero = counts[0], counts[len(delays) // 2]
for i, j in zip(*np.triu_indices(4, 1)):
    print(f"pair ({i}, {j}): V = {visibility(far[i, j], zero[i, j]):+.3f}")
