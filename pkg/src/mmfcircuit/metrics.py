"""Similarity between coincidence distributions and the random-circuit study."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidDimension, UndefinedSimilarity
from .linalg import random_operator
from .pipeline import _TRIAL, Experiment, PipelineConfig, child_rng
from .quantum import OutcomeDistribution
from .tagproc import CoincidenceRecord


def _offdiag(c) -> np.ndarray:
    if isinstance(c, OutcomeDistribution):
        m = c.probs
    elif isinstance(c, CoincidenceRecord):
        m = c.C
    else:
        m = np.asarray(c, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidDimension("expected a square coincidence matrix")
    i, j = np.triu_indices(m.shape[0], 1)
    # OutcomeDistribution stores the upper triangle only; records are symmetric
    return np.asarray(m[i, j], dtype=float)


def similarity(c_e, c_t) -> float:
    """Generalized two-fold fidelity ``(sum sqrt(E T))^2 / (sum E * sum T)`` over pairs ``i < j``.

    Accepts :class:`CoincidenceRecord`, :class:`OutcomeDistribution` or square
    arrays; same-detector terms are excluded.
    """
    e, t = _offdiag(c_e), _offdiag(c_t)
    if e.shape != t.shape:
        raise InvalidDimension("distributions cover different detector sets")
    if np.any(e < 0) or np.any(t < 0):
        raise ValueError("coincidence counts must be non-negative")
    se, st = e.sum(), t.sum()
    if se <= 0 or st <= 0:
        raise UndefinedSimilarity("similarity undefined for an all-zero distribution")
    s = np.sqrt(e * t).sum() ** 2 / (se * st)
    return float(min(s, 1.0))


@dataclass
class SimilarityReport:
    n_det: int
    photon_class: str
    per_trial: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_trial))

    @property
    def std(self) -> float:
        return float(np.std(self.per_trial, ddof=1)) if len(self.per_trial) > 1 else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(mean=self.mean, std=self.std)
        return d


def reports_to_csv(reports, path) -> None:
    """Plot data: one row per (n_det, class) with mean and standard deviation."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_det", "photon_class", "mean", "std", "trials"])
        for r in reports:
            w.writerow([r.n_det, r.photon_class, repr(r.mean), repr(r.std), len(r.per_trial)])


def reports_to_json(reports, path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=1)


PHOTON_CLASSES = ("indistinguishable", "distinguishable")


def random_circuit_study(
    config: PipelineConfig,
    detector_counts,
    trials: int = 100,
    *,
    model=None,
    experiment: Experiment | None = None,
    progress=None,
) -> list[SimilarityReport]:
    """Similarity between measured and ideal coincidences for random operators.

    One fiber and one cross-talk calibration serve every trial. Each trial
    draws a random operator, programs it once (one SLM phase-error draw) and
    acquires with indistinguishable (``gamma0``) and distinguishable photons.
    The reference is the ideal operator at ``gamma = 1`` or ``0`` respectively.
    Reports come out ordered by detector count, indistinguishable first.
    """
    exp = experiment or Experiment(config)
    c = exp.config
    if c.correct and model is None:
        model = exp.calibrate()
    use_model = model if c.correct else None
    reports = []
    for n_det in detector_counts:
        n_det = int(n_det)
        rep = {cls: SimilarityReport(n_det, cls) for cls in PHOTON_CLASSES}
        for k in range(trials):
            target = random_operator(n_det, child_rng(c.seed, _TRIAL, n_det, k, 0))
            L = exp.realize(target, child_rng(c.seed, _TRIAL, n_det, k, 1))
            for tag, (cls, g_exp, g_th) in enumerate(
                (("indistinguishable", c.gamma0, 1.0), ("distinguishable", 0.0, 0.0))
            ):
                rec = exp.acquire(L, g_exp, child_rng(c.seed, _TRIAL, n_det, k, 2 + tag))
                rec = exp.analyse(rec, n_det, use_model)
                rep[cls].per_trial.append(similarity(rec, exp.theory(target, L, g_th)))
            if progress is not None:
                progress(n_det, k)
        reports.extend(rep[cls] for cls in PHOTON_CLASSES)
    return reports
