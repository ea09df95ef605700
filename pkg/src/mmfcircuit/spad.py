"""Monte Carlo model of a time-tagging SPAD array.

Timestamps are integer picoseconds. The detection chain per event is:
arrival time + Gaussian jitter, quantization to 1 ps, non-paralyzable dead
time per pixel, then cross-talk copies on other pixels, and a final dead-time
pass over the merged stream so the output never violates the dead time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import InvalidDimension, InvalidDistribution, InvalidParameter, InvalidStream
from .quantum import OutcomeDistribution, PhotonPairSource

PS = 1e12
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
BINARY_DTYPE = np.dtype([("pixel", "<u1"), ("timestamp_ps", "<u8")])


def hex_layout(n_pix: int, pitch: float = 23.0) -> np.ndarray:
    """Centered hexagonal packing of ``n_pix`` points, ordered by distance then angle.

    Returns an ``(n_pix, 2)`` array; point 0 is the origin and points 1-6 form
    the first ring at distance ``pitch``.
    """
    if n_pix < 1:
        raise InvalidDimension("n_pix must be >= 1")
    k = int(np.ceil(np.sqrt(n_pix))) + 2
    a, b = np.meshgrid(np.arange(-k, k + 1), np.arange(-k, k + 1), indexing="ij")
    x = (a + 0.5 * b).ravel()
    y = (np.sqrt(3.0) / 2.0 * b).ravel()
    r = np.round(np.hypot(x, y), 9)
    ang = np.round(np.mod(np.arctan2(y, x), 2 * np.pi), 9)
    order = np.lexsort((ang, r))[:n_pix]
    return pitch * np.stack([x[order], y[order]], axis=1)


def crosstalk_matrix(positions: np.ndarray, pitch: float, beta_nn: float, max_prob: float = 0.05) -> np.ndarray:
    """Cross-talk probability ``beta_nn / (d / pitch)**2`` between every pixel pair."""
    pos = np.asarray(positions, dtype=float)
    d = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = beta_nn / (d / pitch) ** 2
    np.fill_diagonal(beta, 0.0)
    return np.clip(beta, 0.0, max_prob)


@dataclass(frozen=True, eq=False)
class DetectorArray:
    positions: np.ndarray
    pitch: float
    efficiency: np.ndarray
    dark_rate: np.ndarray
    dead_time: float
    jitter_fwhm: float
    crosstalk_true: np.ndarray
    disabled_pixels: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        n = self.n_pix
        for name in ("efficiency", "dark_rate"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            object.__setattr__(self, name, arr)
        if np.any((self.efficiency < 0) | (self.efficiency > 1)):
            raise InvalidParameter("efficiencies must lie in [0, 1]")
        if np.any(self.dark_rate < 0):
            raise InvalidParameter("dark rates must be >= 0")
        beta = np.asarray(self.crosstalk_true, dtype=float)
        if beta.shape != (n, n) or np.any(np.diag(beta) != 0) or np.any((beta < 0) | (beta > 0.05)):
            raise InvalidParameter("crosstalk_true must be n_pix x n_pix, zero diagonal, entries in [0, 0.05]")
        object.__setattr__(self, "crosstalk_true", beta)
        object.__setattr__(self, "disabled_pixels", frozenset(int(p) for p in self.disabled_pixels))
        if n > 64:
            raise InvalidDimension("at most 64 pixels are supported")

    @property
    def n_pix(self) -> int:
        return len(self.positions)

    @property
    def usable_pixels(self) -> list[int]:
        """Enabled pixel ids, innermost first."""
        return [p for p in range(self.n_pix) if p not in self.disabled_pixels]

    def replace(self, **changes) -> "DetectorArray":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return DetectorArray(**kw)


def spad23(
    *,
    efficiency: float = 0.3,
    dark_rate: float = 100.0,
    dead_time: float = 50e-9,
    jitter_fwhm: float = 120e-12,
    beta_nn: float = 1e-3,
    disabled_pixels=(22,),
    pitch: float = 23.0,
) -> DetectorArray:
    """23-pixel hexagonal array with nearest-neighbor spacing ``pitch`` (micrometres)."""
    pos = hex_layout(23, pitch)
    return DetectorArray(
        positions=pos,
        pitch=pitch,
        efficiency=efficiency,
        dark_rate=dark_rate,
        dead_time=dead_time,
        jitter_fwhm=jitter_fwhm,
        crosstalk_true=crosstalk_matrix(pos, pitch, beta_nn),
        disabled_pixels=frozenset(disabled_pixels),
    )


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Time-ordered detection events: ``pixels[k]`` fired at ``timestamps[k]`` ps."""

    pixels: np.ndarray
    timestamps: np.ndarray
    duration: float
    n_pix: int

    def __post_init__(self):
        object.__setattr__(self, "pixels", np.asarray(self.pixels, dtype=np.int64))
        object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype=np.int64))
        if self.pixels.shape != self.timestamps.shape:
            raise InvalidStream("pixel and timestamp arrays differ in length")

    def __len__(self) -> int:
        return self.pixels.size

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.timestamps) >= 0))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pixel_id", "timestamp_ps"])
            w.writerows(zip(self.pixels.tolist(), self.timestamps.tolist()))

    @classmethod
    def from_csv(cls, path, duration: float, n_pix: int) -> "TimeTagStream":
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        return cls(data[:, 0], data[:, 1], duration, n_pix)

    def to_binary(self, path) -> None:
        """Packed little-endian records: uint8 pixel id, uint64 timestamp in ps."""
        rec = np.empty(len(self), dtype=BINARY_DTYPE)
        rec["pixel"] = self.pixels
        rec["timestamp_ps"] = self.timestamps
        rec.tofile(path)

    @classmethod
    def from_binary(cls, path, duration: float, n_pix: int) -> "TimeTagStream":
        rec = np.fromfile(path, dtype=BINARY_DTYPE)
        return cls(rec["pixel"].astype(np.int64), rec["timestamp_ps"].astype(np.int64), duration, n_pix)


@njit(cache=True)
def _dead_time_keep(pixels, times, n_pix, dead_ps):
    keep = np.zeros(pixels.size, dtype=np.bool_)
    last = np.full(n_pix, np.iinfo(np.int64).min // 2, dtype=np.int64)
    for k in range(pixels.size):
        p = pixels[k]
        if times[k] - last[p] >= dead_ps:
            keep[k] = True
            last[p] = times[k]
    return keep


def _sort_events(pixels, times):
    # pixel ids < 64, so (time, pixel) packs into one int64 key
    order = np.argsort(times * 64 + pixels)
    return pixels[order], times[order], order


def _merge_sorted(pix_a, t_a, pix_b, t_b):
    """Merge a small batch ``b`` into the time-sorted stream ``a``; returns the source index too."""
    pix_b, t_b, ob = _sort_events(pix_b, t_b)
    pos = np.searchsorted(t_a * 64 + pix_a, t_b * 64 + pix_b, side="right") + np.arange(t_b.size)
    n = t_a.size + t_b.size
    from_b = np.zeros(n, dtype=bool)
    from_b[pos] = True
    pix = np.empty(n, dtype=np.int64)
    t = np.empty(n, dtype=np.int64)
    src = np.empty(n, dtype=np.int64)
    pix[pos], t[pos], src[pos] = pix_b, t_b, t_a.size + ob
    pix[~from_b], t[~from_b], src[~from_b] = pix_a, t_a, np.arange(t_a.size)
    return pix, t, src


def _apply_dead_time(pixels, times, n_pix, dead_time):
    dead_ps = int(round(dead_time * PS))
    if dead_ps <= 0 or pixels.size == 0:
        return np.ones(pixels.size, dtype=bool)
    return _dead_time_keep(pixels, times, n_pix, dead_ps)


def _jitter(times_ps: np.ndarray, array: DetectorArray, rng) -> np.ndarray:
    sigma = array.jitter_fwhm * FWHM_TO_SIGMA * PS
    if sigma > 0:
        times_ps = times_ps + rng.normal(0.0, sigma, times_ps.size)
    return np.rint(times_ps).astype(np.int64)


def _dark_events(array: DetectorArray, duration: float, rng):
    counts = rng.poisson(array.dark_rate * duration)
    pixels = np.repeat(np.arange(array.n_pix), counts)
    times = np.rint(rng.uniform(0.0, duration * PS, pixels.size)).astype(np.int64)
    return pixels, times


def _detect(primary_pixels, primary_times, array: DetectorArray, duration: float, rng, truth: dict | None):
    """Dead time, cross-talk and windowing for already-jittered primary events."""
    n = array.n_pix
    end_ps = int(round(duration * PS))
    inside = (primary_times >= 0) & (primary_times < end_ps)
    pix, t, _ = _sort_events(primary_pixels[inside], primary_times[inside])
    keep = _apply_dead_time(pix, t, n, array.dead_time)
    pix, t = pix[keep], t[keep]

    beta = array.crosstalk_true
    total = beta.sum(axis=1)
    if np.any(total > 1):
        raise InvalidParameter("cross-talk probabilities from one pixel sum above 1")
    # at most one cross-talk partner per event; marginal probability per target is exact
    fire = rng.random(pix.size) < total[pix]
    src = pix[fire]
    cdf = np.cumsum(beta[src] / total[src][:, None], axis=1)
    dst = np.minimum((cdf < rng.random(src.size)[:, None]).sum(axis=1), n - 1)
    xt_times = _jitter(t[fire].astype(float), array, rng)

    inside = (xt_times >= 0) & (xt_times < end_ps)
    dst, xt_times, src = dst[inside], xt_times[inside], src[inside]
    all_pix, all_t, order = _merge_sorted(pix, t, dst, xt_times)
    origin = np.concatenate([np.full(pix.size, -1), src])[order]
    keep = _apply_dead_time(all_pix, all_t, n, array.dead_time)
    enabled = np.ones(n, dtype=bool)
    enabled[list(array.disabled_pixels)] = False
    keep &= enabled[all_pix]

    if truth is not None:
        accepted_primary = np.bincount(all_pix[keep & (origin < 0)], minlength=n)
        xt = keep & (origin >= 0)
        counts = np.zeros((n, n), dtype=np.int64)
        np.add.at(counts, (origin[xt], all_pix[xt]), 1)
        truth["accepted_primary"] = accepted_primary
        truth["crosstalk_counts"] = counts
        truth["primary_before_crosstalk"] = np.bincount(pix, minlength=n)
    return TimeTagStream(all_pix[keep], all_t[keep], duration, n)


def _check_distribution(dist: OutcomeDistribution) -> None:
    total = dist.probs.sum() + dist.loss_prob
    if np.any(dist.probs < 0) or dist.loss_prob < 0 or abs(total - 1.0) > 1e-9:
        raise InvalidDistribution(f"distribution sums to {total!r}, expected 1")


def simulate_pairs(
    dist: OutcomeDistribution,
    source: PhotonPairSource,
    array: DetectorArray,
    duration: float,
    seed=None,
    *,
    detectors=None,
    return_truth: bool = False,
):
    """Time tags for photon pairs whose landing detectors follow ``dist``.

    ``detectors`` maps distribution index ``i`` to a pixel id (default: the
    innermost usable pixels). The V photon arrives ``source.delay`` after the H
    photon; the delay only matters through ``dist``, which the caller builds
    at the matching indistinguishability.
    """
    _check_distribution(dist)
    if duration <= 0:
        raise InvalidParameter("duration must be > 0")
    det = np.asarray(array.usable_pixels[: dist.n_det] if detectors is None else detectors, dtype=np.int64)
    if det.size != dist.n_det:
        raise InvalidDimension(f"distribution has {dist.n_det} detectors, {det.size} pixels mapped")
    if set(det.tolist()) & array.disabled_pixels:
        raise InvalidDimension("cannot route photons to a disabled pixel")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    n_pairs = rng.poisson(source.pair_rate * duration)
    t_pair = rng.uniform(0.0, duration * PS, n_pairs)
    iu, ju = np.triu_indices(dist.n_det)
    p = np.append(dist.probs[iu, ju], dist.loss_prob)
    p = p / p.sum()
    outcome = rng.choice(p.size, size=n_pairs, p=p)
    landed = outcome < iu.size
    o = outcome[landed]
    t0 = t_pair[landed]
    pix_a, pix_b = det[iu[o]], det[ju[o]]
    pixels = np.concatenate([pix_a, pix_b])
    times = np.concatenate([t0, t0 + source.delay * PS])
    survive = rng.random(pixels.size) < array.efficiency[pixels]
    pixels, times = pixels[survive], _jitter(times[survive], array, rng)

    dark_p, dark_t = _dark_events(array, duration, rng)
    truth = {} if return_truth else None
    stream = _detect(np.concatenate([pixels, dark_p]), np.concatenate([times, dark_t]), array, duration, rng, truth)
    if return_truth:
        hist = np.zeros((dist.n_det, dist.n_det), dtype=np.int64)
        np.add.at(hist, (iu[o], ju[o]), 1)
        truth["outcome_counts"] = hist
        truth["n_pairs"] = int(n_pairs)
        return stream, truth
    return stream


def simulate_classical(
    intensities,
    array: DetectorArray,
    duration: float,
    seed=None,
    *,
    return_truth: bool = False,
):
    """Independent Poisson detections at ``intensities`` (counts/s per pixel) plus darks."""
    rates = np.asarray(intensities, dtype=float)
    if rates.shape != (array.n_pix,):
        raise InvalidDimension(f"need one rate per pixel ({array.n_pix})")
    if np.any(rates < 0):
        raise InvalidParameter("rates must be >= 0")
    if duration <= 0:
        raise InvalidParameter("duration must be > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    counts = rng.poisson(rates * duration)
    pixels = np.repeat(np.arange(array.n_pix), counts)
    times = np.rint(rng.uniform(0.0, duration * PS, pixels.size)).astype(np.int64)
    dark_p, dark_t = _dark_events(array, duration, rng)
    truth = {} if return_truth else None
    stream = _detect(np.concatenate([pixels, dark_p]), np.concatenate([times, dark_t]), array, duration, rng, truth)
    return (stream, truth) if return_truth else stream

