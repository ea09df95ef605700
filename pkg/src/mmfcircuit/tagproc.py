"""Singles and windowed coincidence counting on time-tag streams."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidParameter, InvalidStream
from .spad import PS, TimeTagStream

DEFAULT_WINDOW = 1e-9


@dataclass(frozen=True, eq=False)
class CoincidenceRecord:
    """Singles rates ``n`` (counts/s) and coincidence counts ``C`` of one acquisition."""

    n: np.ndarray
    C: np.ndarray
    delta_t: float
    duration: float

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.shape != (self.n.size, self.n.size):
            raise InvalidParameter("C must be n_pix x n_pix")
        if not np.array_equal(C, C.T):
            raise InvalidParameter("coincidence matrix must be symmetric")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "n", np.asarray(self.n, dtype=float))

    @property
    def n_pix(self) -> int:
        return self.n.size

    def restrict(self, pixels) -> "CoincidenceRecord":
        """Sub-record over ``pixels`` in the given order."""
        idx = np.asarray(pixels, dtype=int)
        return CoincidenceRecord(self.n[idx], self.C[np.ix_(idx, idx)], self.delta_t, self.duration)

    def to_csv(self, path) -> None:
        """Rows ``i, j, C_ij`` for ``i < j``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "C_ij"])
            for i, j in zip(*np.triu_indices(self.n_pix, 1)):
                w.writerow([int(i), int(j), repr(float(self.C[i, j]))])

    def singles_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "rate_cps"])
            for i, r in enumerate(self.n):
                w.writerow([i, repr(float(r))])


def count_singles(stream: TimeTagStream) -> np.ndarray:
    if stream.duration <= 0:
        raise InvalidParameter("stream duration must be > 0")
    return np.bincount(stream.pixels, minlength=stream.n_pix)[: stream.n_pix] / stream.duration


@njit(cache=True)
def _greedy_pairs(pixels, times, n_pix, half_window):
    # bit p of used[k] marks that event k is already paired with some event on pixel p
    used = np.zeros(pixels.size, dtype=np.uint64)
    counts = np.zeros((n_pix, n_pix), dtype=np.int64)
    one = np.uint64(1)
    for k in range(pixels.size):
        pk = pixels[k]
        m = k - 1
        while m >= 0 and times[k] - times[m] <= half_window:
            pm = pixels[m]
            if pm != pk:
                if (used[m] >> np.uint64(pk)) & one == 0 and (used[k] >> np.uint64(pm)) & one == 0:
                    counts[pm, pk] += 1
                    used[m] |= one << np.uint64(pk)
                    used[k] |= one << np.uint64(pm)
            m -= 1
    return counts


def count_coincidences(stream: TimeTagStream, delta_t: float = DEFAULT_WINDOW) -> CoincidenceRecord:
    """Pair events on distinct pixels with ``|t_i - t_j| <= delta_t / 2``.

    Each event is paired at most once with each other pixel, taking the
    nearest earlier unpaired partner first.
    """
    if delta_t <= 0:
        raise InvalidParameter("delta_t must be > 0")
    if not stream.is_sorted():
        raise InvalidStream("time tags must be sorted")
    if stream.pixels.size and (stream.pixels.min() < 0 or stream.pixels.max() >= stream.n_pix):
        raise InvalidStream("pixel id out of range")
    counts = _greedy_pairs(stream.pixels, stream.timestamps, stream.n_pix, delta_t * PS / 2.0)
    C = counts + counts.T
    return CoincidenceRecord(count_singles(stream), C, delta_t, stream.duration)
