"""
Calibrating accidentals and cross-talk with laser speckle
=========================================================

Classical light produces only accidental and cross-talk coincidences. Over many
random speckle patterns the two contributions scale differently with the
singles rates, which lets a per-pair least-squares fit separate them.
"""

import warnings

import numpy as np

from mmfcircuit import Experiment, fit_crosstalk, paper_grade

exp = Experiment(paper_grade(seed=2))
records = exp.classical_records(400)
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    model = fit_crosstalk(records)

p = exp.pixels
truth = exp.array.crosstalk_true[np.ix_(p, p)]
fit = model.beta[np.ix_(p, p)]
nn = np.isclose(truth, truth.max())
print(f"nearest-neighbour beta: fitted {fit[nn].mean():.2e} +- {fit[nn].std():.1e}, true {truth.max():.0e}")
alpha = model.alpha[np.ix_(p, p)][np.triu_indices(len(p), 1)]
print(f"accidental coefficient alpha: median {np.median(alpha):.2f} (1 for uncorrelated light)")
