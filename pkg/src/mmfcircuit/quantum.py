"""Two-photon output statistics of a linear network with partial distinguishability."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, UndefinedVisibility
from .linalg import TargetOperator

PROB_ATOL = 1e-10


@dataclass(frozen=True)
class PhotonPairSource:
    """SPDC pair source.

    ``coherence_delay`` sets the Gaussian width of the indistinguishability
    versus relative delay; the default corresponds to a ~1 nm filtered
    photon at 810 nm.
    """

    pair_rate: float = 1.0e5
    max_indistinguishability: float = 0.95
    coherence_delay: float = 150e-15
    delay: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.max_indistinguishability <= 1.0:
            raise InvalidParameter("max_indistinguishability must lie in [0, 1]")
        if self.pair_rate < 0:
            raise InvalidParameter("pair_rate must be >= 0")
        if self.coherence_delay <= 0:
            raise InvalidParameter("coherence_delay must be > 0")

    @property
    def gamma(self) -> float:
        return indistinguishability(self, self.delay)


def indistinguishability(source: PhotonPairSource, tau: float) -> float:
    return source.max_indistinguishability * float(np.exp(-(tau**2) / (2.0 * source.coherence_delay**2)))


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Probabilities of the two photons landing on detectors ``(i, j)``, ``i <= j``.

    ``probs`` is a symmetric-free upper-triangular array: ``probs[i, j]`` for
    ``i <= j`` holds the outcome probability, entries below the diagonal are 0.
    """

    probs: np.ndarray
    loss_prob: float

    @property
    def n_det(self) -> int:
        return self.probs.shape[0]

    def pair_probs(self) -> dict[tuple[int, int], float]:
        i, j = np.triu_indices(self.n_det)
        return {(int(a), int(b)): float(self.probs[a, b]) for a, b in zip(i, j)}

    def coincidence_matrix(self) -> np.ndarray:
        """Symmetric matrix of distinct-detector probabilities, zero diagonal."""
        off = np.triu(self.probs, 1)
        return off + off.T

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "probability"])
            for (i, j), p in self.pair_probs().items():
                w.writerow([i, j, repr(p)])
            w.writerow(["loss", "loss", repr(self.loss_prob)])


def coincidence_distribution(L: TargetOperator, gamma: float) -> OutcomeDistribution:
    """Output distribution for one H and one V photon entering ``L``.

    For ``i < j`` the probability is
    ``|a_i b_j|^2 + |a_j b_i|^2 + 2 gamma Re(a_i b_j conj(a_j b_i))`` and for
    ``i == j`` it is ``(1 + gamma) |a_i b_i|^2``, with ``a``, ``b`` the H and V
    columns. ``gamma`` = 1 reproduces the squared 2x2 permanents.
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParameter(f"gamma must lie in [0, 1], got {gamma}")
    a, b = L.column_H, L.column_V
    if L.max_singular_value() > 1.0 + 1e-12:
        raise InvalidParameter("operator is not sub-unitary; use TargetOperator.scaled_subunitary()")
    direct = np.outer(a, b)  # a_i b_j
    classical = np.abs(direct) ** 2 + np.abs(direct.T) ** 2
    interference = 2.0 * np.real(direct * np.conj(direct.T))
    probs = np.triu(classical + gamma * interference, 1)
    probs[np.diag_indices_from(probs)] = (1.0 + gamma) * np.abs(a * b) ** 2
    probs = np.clip(probs, 0.0, None)
    loss = 1.0 - probs.sum()
    if loss < -PROB_ATOL:
        raise InvalidParameter("probabilities exceed 1; operator is not sub-unitary")
    return OutcomeDistribution(probs, max(loss, 0.0))


def hom_scan(
    L: TargetOperator,
    source: PhotonPairSource,
    delays,
    acquisition_time: float = 1.0,
) -> np.ndarray:
    """Expected counts per outcome versus delay, shape ``(len(delays), n_det, n_det)``.

    Entry ``[k, i, j]`` (``i <= j``) is the expected number of pairs landing on
    ``(i, j)`` at delay ``delays[k]``.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    if delays.size == 0:
        raise InvalidParameter("delays must be non-empty")
    scale = source.pair_rate * acquisition_time
    return np.stack(
        [scale * coincidence_distribution(L, indistinguishability(source, tau)).probs for tau in delays]
    )


def visibility(c_far, c_zero):
    """HOM visibility ``(c_far - c_zero) / c_far``; dips are positive, peaks negative."""
    c_far = np.asarray(c_far, dtype=float)
    c_zero = np.asarray(c_zero, dtype=float)
    if np.any(c_far == 0):
        raise UndefinedVisibility("visibility undefined for zero far-delay counts")
    v = (c_far - c_zero) / c_far
    return float(v) if v.ndim == 0 else v
