"""Transmission-matrix measurement and SLM pattern synthesis.

The TM is measured in a Fourier basis of phase ramps by phase-stepping the
signal against the bench's static reference field, then mapped back to the
macro-pixel basis. Each measured row carries an unknown factor ``conj(R_i)``
from the reference; because both SLM halves share the reference, the phase of
that factor is common to the two photons and drops out of every coincidence
probability. Its modulus is removed using the reference-only intensity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bench import BenchConfig, PhaseMask, propagate_half
from .errors import DegenerateTarget, InvalidConfig, InvalidDimension
from .linalg import TargetOperator, matrix_from_list, matrix_to_list

ENCODINGS = ("phase-only", "complex")


def _grid_shape(n_modes: int) -> tuple[int, int]:
    """Most nearly square (rows, cols) factorization of ``n_modes``."""
    rows = int(np.floor(np.sqrt(n_modes)))
    while n_modes % rows:
        rows -= 1
    return rows, n_modes // rows


def phase_ramp_basis(n_modes: int) -> list[PhaseMask]:
    """Linear phase ramps over the macro-pixel grid, one per 2D spatial frequency.

    Mode ``m`` has frequency ``(p, q) = divmod(m, cols)`` so mode 0 is flat. The
    unit-amplitude fields ``exp(i phases)`` of distinct modes are orthogonal.
    """
    if n_modes < 1:
        raise InvalidDimension("n_modes must be >= 1")
    rows, cols = _grid_shape(n_modes)
    y, x = np.divmod(np.arange(n_modes), cols)
    masks = []
    for m in range(n_modes):
        p, q = divmod(m, cols)
        masks.append(PhaseMask(2.0 * np.pi * (p * y / rows + q * x / cols)))
    return masks


def fourier_matrix(n_modes: int) -> np.ndarray:
    """Unitary whose column ``m`` is the normalized field of ramp ``m``."""
    return np.stack([mk.field() for mk in phase_ramp_basis(n_modes)], axis=1) / np.sqrt(n_modes)


@dataclass(frozen=True, eq=False)
class MeasuredTM:
    """Phase-stepping estimate of one SLM half's transmission matrix.

    ``t`` (macro-pixel basis) equals ``conj(R_i) * T_true[i, :]`` row by row;
    ``reference_intensity`` is the measured ``|R_i|**2``.
    """

    polarization: str
    t: np.ndarray
    reference_intensity: np.ndarray
    photon_scale: float | None = None

    @property
    def n_det(self) -> int:
        return self.t.shape[0]

    @property
    def n_modes(self) -> int:
        return self.t.shape[1]

    def rows(self, idx) -> "MeasuredTM":
        """TM restricted to a subset of detectors."""
        idx = np.asarray(idx, dtype=int)
        return MeasuredTM(self.polarization, self.t[idx], self.reference_intensity[idx], self.photon_scale)

    def calibrated(self) -> np.ndarray:
        """Rows divided by the measured reference modulus, leaving only a phase ambiguity."""
        return self.t / np.sqrt(self.reference_intensity)[:, None]

    def to_json(self) -> str:
        return json.dumps(
            {
                "polarization": self.polarization,
                "n_det": self.n_det,
                "n_modes": self.n_modes,
                "photon_scale": self.photon_scale,
                "reference_intensity": [float(v) for v in self.reference_intensity],
                "t": matrix_to_list(self.t),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MeasuredTM":
        d = json.loads(text)
        t = matrix_from_list(d["t"])
        if t.shape != (d["n_det"], d["n_modes"]):
            raise InvalidDimension("stored TM shape does not match its header")
        return cls(d["polarization"], t, np.asarray(d["reference_intensity"], float), d.get("photon_scale"))


def measure_tm(
    bench: BenchConfig,
    polarization: str,
    phase_steps: int = 4,
    photon_scale: float | None = None,
    rng=None,
) -> MeasuredTM:
    """Measure ``T_polarization`` by N-step phase-stepping interferometry.

    For each Fourier mode the signal is displayed with global phase offsets
    ``2 pi k / N`` on top of the static reference, and the detector intensities
    are combined as ``sum_k I_k exp(-i theta_k) / N``. With ``photon_scale``
    set, each intensity is replaced by ``Poisson(scale * I) / scale``.
    The SLM phase error of the bench is not applied here.
    """
    if phase_steps < 3:
        raise InvalidConfig("phase stepping needs at least 3 steps")
    if photon_scale is not None and photon_scale <= 0:
        raise InvalidConfig("photon_scale must be positive when noise is enabled")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    clean = bench.with_phase_error(0.0)
    n = bench.n_modes
    amp = np.full(n, 1.0 / np.sqrt(n))
    thetas = 2.0 * np.pi * np.arange(phase_steps) / phase_steps
    weights = np.exp(-1j * thetas)
    # exact roots of unity where possible, so a constant intensity cancels exactly
    weights.real[np.abs(weights.real) < 1e-15] = 0.0
    weights.imag[np.abs(weights.imag) < 1e-15] = 0.0

    def detect(field):
        intensity = np.abs(field) ** 2
        if photon_scale is None:
            return intensity
        return gen.poisson(photon_scale * intensity) / photon_scale

    t_fourier = np.empty((bench.n_det, n), dtype=complex)
    for m, mask in enumerate(phase_ramp_basis(n)):
        acc = np.zeros(bench.n_det, dtype=complex)
        for theta, w in zip(thetas, weights):
            shifted = PhaseMask(mask.phases + theta)
            acc += detect(propagate_half(clean, polarization, shifted, amp, with_reference=True)) * w
        t_fourier[:, m] = acc / phase_steps
    ref_int = detect(bench.reference_field)
    if np.any(ref_int <= 0):
        raise InvalidConfig("reference intensity too weak at the configured photon scale")
    t = t_fourier @ fourier_matrix(n).conj().T
    return MeasuredTM(polarization, t, ref_int, photon_scale)


@dataclass(frozen=True, eq=False)
class TwoPhotonTM:
    """Paired single-photon TMs for the H and V halves."""

    tm_H: MeasuredTM
    tm_V: MeasuredTM

    @property
    def n_det(self) -> int:
        return self.tm_H.n_det

    def rows(self, idx) -> "TwoPhotonTM":
        return TwoPhotonTM(self.tm_H.rows(idx), self.tm_V.rows(idx))

    def outputs(self, e_in_H, e_in_V, calibrated: bool = False):
        th, tv = (self.tm_H.calibrated(), self.tm_V.calibrated()) if calibrated else (self.tm_H.t, self.tm_V.t)
        return th @ np.asarray(e_in_H), tv @ np.asarray(e_in_V)

    def amplitudes(self, e_in_H, e_in_V, calibrated: bool = False) -> np.ndarray:
        """Two-photon amplitude tensor ``A[i, j] = out_H[i] * out_V[j]``."""
        out_h, out_v = self.outputs(e_in_H, e_in_V, calibrated)
        return np.outer(out_h, out_v)


def assemble_two_photon(tm_H: MeasuredTM, tm_V: MeasuredTM) -> TwoPhotonTM:
    if tm_H.t.shape != tm_V.t.shape:
        raise InvalidDimension(f"TM shapes differ: {tm_H.t.shape} vs {tm_V.t.shape}")
    return TwoPhotonTM(tm_H, tm_V)


class SLMPattern(NamedTuple):
    mask_H: PhaseMask
    mask_V: PhaseMask
    amp_H: np.ndarray
    amp_V: np.ndarray


def _encode(e_in: np.ndarray, encoding: str) -> tuple[PhaseMask, np.ndarray]:
    mag = np.abs(e_in)
    peak = mag.max()
    if encoding == "phase-only":
        if peak == 0:
            raise DegenerateTarget("phase-only encoding of a zero field is undefined")
        return PhaseMask(np.where(mag > 0, np.angle(e_in), 0.0)), np.ones(e_in.size)
    if peak == 0:
        return PhaseMask(np.zeros(e_in.size)), np.zeros(e_in.size)
    return PhaseMask(np.where(mag > 0, np.angle(e_in), 0.0)), mag / peak


def synthesize_slm(
    two_photon: TwoPhotonTM,
    target: TargetOperator,
    encoding: str = "phase-only",
    calibrated: bool = True,
) -> SLMPattern:
    """SLM fields ``t_H^dagger L_H`` and ``t_V^dagger L_V`` for a target operator.

    ``calibrated`` uses the reference-modulus corrected TMs; the raw TMs
    weight each detector by ``|R_i|``.
    """
    if encoding not in ENCODINGS:
        raise ValueError(f"encoding must be one of {ENCODINGS}")
    if target.n_det != two_photon.n_det:
        raise InvalidDimension(f"target has {target.n_det} detectors, TM has {two_photon.n_det}")
    th, tv = (
        (two_photon.tm_H.calibrated(), two_photon.tm_V.calibrated())
        if calibrated
        else (two_photon.tm_H.t, two_photon.tm_V.t)
    )
    mask_h, amp_h = _encode(th.conj().T @ target.column_H, encoding)
    mask_v, amp_v = _encode(tv.conj().T @ target.column_V, encoding)
    return SLMPattern(mask_h, mask_v, amp_h, amp_v)


def realized_operator(
    bench: BenchConfig, pattern: SLMPattern, rng=None, *, reference_frame: bool = True
) -> TargetOperator:
    """Operator the bench actually applies to a photon pair for ``pattern``.

    Each column is the detector field for a unit-power input photon. When the
    two columns together exceed a unitary bound, the whole operator is
    attenuated by its largest singular value.

    With ``reference_frame`` the output phase at each detector is expressed
    relative to the shared reference field, the only frame in which the TM is
    known. Such a per-detector phase is common to both photons and leaves all
    coincidence probabilities unchanged.
    """
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    cols = []
    for pol, mask, amp in (("H", pattern.mask_H, pattern.amp_H), ("V", pattern.mask_V, pattern.amp_V)):
        power = float(np.sum(np.asarray(amp, float) ** 2))
        if power == 0:
            cols.append(np.zeros(bench.n_det, dtype=complex))
            continue
        cols.append(propagate_half(bench, pol, mask, amp, gen) / np.sqrt(power))
    m = np.stack(cols, axis=1)
    if reference_frame:
        ref = bench.reference_field
        m = m * (ref.conj() / np.abs(ref))[:, None]
    s = np.linalg.norm(m, ord=2)
    if s > 1.0:
        m = m / s
    return TargetOperator.from_matrix(m)


def column_fidelity(target: TargetOperator, realized: TargetOperator) -> np.ndarray:
    """Per-column ``|<a, b>|^2 / (|a|^2 |b|^2)`` for the H and V columns."""
    out = []
    for a, b in ((target.column_H, realized.column_H), (target.column_V, realized.column_V)):
        den = np.vdot(a, a).real * np.vdot(b, b).real
        out.append(abs(np.vdot(a, b)) ** 2 / den if den > 0 else 0.0)
    return np.asarray(out)
