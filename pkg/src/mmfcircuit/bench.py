"""Virtual optical bench: SLM halves, multimode fiber, detector plane, camera.

The fiber is represented by one transmission matrix per SLM half (H and V),
each the first ``n_det`` rows and ``n_modes`` columns of an independent Haar
unitary of size ``n_fiber``. Transmission matrices act on the macro-pixel field
of the SLM half. A static reference field, shared by both halves, is available
for interferometric measurements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, InvalidDimension
from .linalg import haar_unitary

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PhaseMask:
    """Phase per SLM macro-pixel of one polarization half, wrapped to [0, 2pi)."""

    phases: np.ndarray

    def __post_init__(self):
        p = np.mod(np.asarray(self.phases, dtype=float).reshape(-1), TWO_PI)
        # mod can return exactly 2pi for tiny negative inputs
        p[p >= TWO_PI] = 0.0
        object.__setattr__(self, "phases", p)

    @property
    def n_modes(self) -> int:
        return self.phases.size

    def field(self, amplitude=None) -> np.ndarray:
        a = 1.0 if amplitude is None else np.asarray(amplitude, dtype=float)
        return a * np.exp(1j * self.phases)

    @classmethod
    def flat(cls, n_modes: int) -> "PhaseMask":
        return cls(np.zeros(n_modes))


@dataclass(frozen=True, eq=False)
class BenchConfig:
    """Immutable ground truth of one simulated setup.

    Construct with :func:`make_bench`; the matrices are regenerated
    deterministically from ``seed`` when loading from JSON.
    """

    n_modes: int
    n_det: int
    loss_fraction: float
    seed: int
    slm_phase_error_sigma: float
    n_fiber: int
    transmission_H: np.ndarray = field(repr=False)
    transmission_V: np.ndarray = field(repr=False)
    reference_field: np.ndarray = field(repr=False)

    def transmission(self, polarization: str) -> np.ndarray:
        if polarization == "H":
            return self.transmission_H
        if polarization == "V":
            return self.transmission_V
        raise ValueError(f"polarization must be 'H' or 'V', got {polarization!r}")

    def with_phase_error(self, sigma: float) -> "BenchConfig":
        """Same fiber and reference, different SLM phase-error level."""
        return BenchConfig(
            self.n_modes, self.n_det, self.loss_fraction, self.seed, float(sigma), self.n_fiber,
            self.transmission_H, self.transmission_V, self.reference_field,
        )

    def to_dict(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "n_det": self.n_det,
            "loss_fraction": self.loss_fraction,
            "seed": self.seed,
            "slm_phase_error_sigma": self.slm_phase_error_sigma,
            "n_fiber": self.n_fiber,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        return make_bench(
            int(d["n_modes"]),
            int(d["n_det"]),
            float(d.get("loss_fraction", 0.0)),
            int(d["seed"]),
            slm_phase_error_sigma=float(d.get("slm_phase_error_sigma", 0.0)),
            n_fiber=d.get("n_fiber"),
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchConfig":
        return cls.from_dict(json.loads(text))


def make_bench(
    n_modes: int = 64,
    n_det: int = 23,
    loss: float = 0.0,
    seed: int = 0,
    *,
    slm_phase_error_sigma: float = 0.0,
    n_fiber: int | None = None,
) -> BenchConfig:
    """Build a bench with Haar-random fiber transmission for each SLM half."""
    if n_modes < 1 or n_det < 1:
        raise InvalidDimension("n_modes and n_det must be >= 1")
    if n_det > n_modes:
        raise InvalidDimension(f"n_det={n_det} exceeds n_modes={n_modes}")
    n_fiber = n_modes if n_fiber is None else int(n_fiber)
    if n_fiber < n_modes:
        raise InvalidDimension("n_fiber must be >= n_modes")
    if not 0.0 <= loss < 1.0:
        raise InvalidConfig(f"loss must lie in [0, 1), got {loss}")
    if slm_phase_error_sigma < 0:
        raise InvalidConfig("slm_phase_error_sigma must be >= 0")

    ss_h, ss_v, ss_ref = np.random.SeedSequence(seed).spawn(3)
    scale = np.sqrt(1.0 - loss)
    t_h = scale * haar_unitary(n_fiber, np.random.default_rng(ss_h))[:n_det, :n_modes]
    t_v = scale * haar_unitary(n_fiber, np.random.default_rng(ss_v))[:n_det, :n_modes]

    rng = np.random.default_rng(ss_ref)
    ref = (rng.standard_normal(n_det) + 1j * rng.standard_normal(n_det)) / np.sqrt(2 * n_modes)
    # keep every detector's reference comfortably away from zero
    floor = 0.2 / np.sqrt(n_modes)
    weak = np.abs(ref) < floor
    ref[weak] = floor * np.exp(1j * np.angle(ref[weak]))
    for arr in (t_h, t_v, ref):
        arr.setflags(write=False)
    return BenchConfig(
        n_modes, n_det, float(loss), int(seed), float(slm_phase_error_sigma), n_fiber, t_h, t_v, ref
    )


def propagate_half(
    bench: BenchConfig,
    polarization: str,
    mask: PhaseMask,
    amplitude=None,
    rng=None,
    *,
    with_reference: bool = False,
) -> np.ndarray:
    """Detector field produced by one SLM half.

    ``rng`` supplies the per-macro-pixel phase error when the bench has a
    nonzero ``slm_phase_error_sigma``; pass a seed for reproducibility.
    """
    if mask.n_modes != bench.n_modes:
        raise InvalidDimension(f"mask has {mask.n_modes} modes, bench has {bench.n_modes}")
    amp = np.ones(bench.n_modes) if amplitude is None else np.asarray(amplitude, dtype=float)
    if amp.shape != (bench.n_modes,):
        raise InvalidDimension("amplitude length must equal n_modes")
    if np.any(amp < 0):
        raise ValueError("amplitudes must be non-negative")
    phases = mask.phases
    if bench.slm_phase_error_sigma > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        phases = phases + gen.normal(0.0, bench.slm_phase_error_sigma, bench.n_modes)
    out = bench.transmission(polarization) @ (amp * np.exp(1j * phases))
    if with_reference:
        out = out + bench.reference_field
    return out


def propagate(
    bench: BenchConfig,
    mask_H: PhaseMask,
    mask_V: PhaseMask,
    amp_H=None,
    amp_V=None,
    rng=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Output fields ``(T_H @ (amp_H e^{i phi_H}), T_V @ (amp_V e^{i phi_V}))``."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return (
        propagate_half(bench, "H", mask_H, amp_H, gen),
        propagate_half(bench, "V", mask_V, amp_V, gen),
    )


def render_camera(
    fields,
    detector_positions,
    psf_sigma: float,
    grid: tuple[int, int],
    background: float = 0.0,
) -> np.ndarray:
    """Render detector-plane intensities as unit-peak Gaussian spots on a camera.

    ``grid`` is ``(width, height)``; the image is indexed ``[y, x]`` and
    positions are ``(x, y)`` pixel coordinates.
    """
    width, height = grid
    pos = np.atleast_2d(np.asarray(detector_positions, dtype=float))
    power = np.abs(np.asarray(fields, dtype=complex).reshape(-1)) ** 2
    if pos.shape[0] != power.size:
        raise InvalidDimension("need one position per field")
    if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] > width - 1) or np.any(pos[:, 1] < 0) or np.any(pos[:, 1] > height - 1):
        raise ValueError("detector positions must lie inside the camera grid")
    y, x = np.mgrid[0:height, 0:width]
    img = np.full((height, width), float(background))
    for (px, py), p in zip(pos, power):
        if p == 0:
            continue
        img += p * np.exp(-((x - px) ** 2 + (y - py) ** 2) / (2.0 * psf_sigma**2))
    return img


def write_pgm(image: np.ndarray, path, scale: float | None = None) -> None:
    """Write a 16-bit binary PGM; intensities are scaled so the maximum maps to 65535."""
    img = np.asarray(image, dtype=float)
    if scale is None:
        peak = img.max()
        scale = 65535.0 / peak if peak > 0 else 1.0
    data = np.clip(np.rint(img * scale), 0, 65535).astype(">u2")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    # header: magic, width, height, maxval, then exactly one whitespace byte
    while len(fields) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = (int(f) for f in fields[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos).reshape(h, w)


def write_image_csv(image: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(image, dtype=float), delimiter=",", fmt="%.10g")
