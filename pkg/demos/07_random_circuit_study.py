"""
How well do random circuits work as they grow?
==============================================

Draw random operators, program them, and score each measurement against the
ideal target. Larger circuits spread the same photon budget over more pairs
and accumulate more synthesis error, so the similarity falls with the number
of detectors; indistinguishable photons also feel SLM phase errors.
"""

import sys

from mmfcircuit import Experiment, paper_grade, random_circuit_study

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 20
cfg = paper_grade(seed=1)
exp = Experiment(cfg)
model = exp.calibrate()
reports = random_circuit_study(cfg, [4, 10, 16, 22], trials, model=model, experiment=exp)
for r in reports:
    print(f"n_det={r.n_det:2d}  {r.photon_class:17s}  S = {r.mean:.3f} +- {r.std:.3f}")
