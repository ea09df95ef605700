"""Complex matrix primitives: Haar ensembles, target operators, permanents.

Matrices are plain ``numpy`` complex arrays. The two-photon operator acting on
the (H, V) photon pair is wrapped in :class:`TargetOperator`, whose columns are
the single-photon output amplitudes of the H and V photons over the detectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimension

UNITARY_ATOL = 1e-10
NORM_SLACK = 1e-12


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(n: int, seed=None) -> np.ndarray:
    """Sample an ``n x n`` unitary from the Haar measure.

    QR decomposition of a complex Ginibre matrix, with the phases of the
    diagonal of R moved into Q so the result is uniformly distributed.
    """
    if n < 1:
        raise InvalidDimension(f"unitary dimension must be >= 1, got {n}")
    rng = _rng(seed)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def is_unitary(m: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) < atol)


@dataclass(frozen=True)
class TargetOperator:
    """Linear network acting on a photon pair, shape ``(n_det, 2)``.

    Column 0 is the H photon's output amplitude vector, column 1 the V photon's.
    Each column must have norm <= 1 (the deficit is loss).
    """

    column_H: np.ndarray
    column_V: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.column_H, dtype=complex).reshape(-1)
        v = np.asarray(self.column_V, dtype=complex).reshape(-1)
        if h.shape != v.shape or h.size == 0:
            raise InvalidDimension("columns must be non-empty and of equal length")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(v))):
            raise ValueError("operator entries must be finite")
        for name, col in (("H", h), ("V", v)):
            if np.linalg.norm(col) > 1.0 + NORM_SLACK:
                raise ValueError(f"column {name} has norm {np.linalg.norm(col):.6g} > 1")
        object.__setattr__(self, "column_H", h)
        object.__setattr__(self, "column_V", v)

    @property
    def n_det(self) -> int:
        return self.column_H.size

    @property
    def matrix(self) -> np.ndarray:
        return np.stack([self.column_H, self.column_V], axis=1)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "TargetOperator":
        m = np.asarray(m, dtype=complex)
        if m.ndim != 2 or m.shape[1] != 2:
            raise InvalidDimension(f"expected an (n_det, 2) matrix, got {m.shape}")
        return cls(m[:, 0], m[:, 1])

    def max_singular_value(self) -> float:
        return float(np.linalg.norm(self.matrix, ord=2))

    def scaled_subunitary(self) -> "TargetOperator":
        """Return ``self`` divided by its largest singular value when that exceeds 1.

        Unit-norm columns that are not orthogonal cannot be embedded in a
        unitary; a global attenuation makes the pair operator physical without
        changing the shape of any output distribution.
        """
        s = self.max_singular_value()
        if s <= 1.0:
            return self
        return TargetOperator.from_matrix(self.matrix / s)

    def to_json(self) -> str:
        return json.dumps({"n_det": self.n_det, "matrix": matrix_to_list(self.matrix)})

    @classmethod
    def from_json(cls, text: str) -> "TargetOperator":
        return cls.from_matrix(matrix_from_list(json.loads(text)["matrix"]))


def sylvester_operator(n_det: int) -> TargetOperator:
    """Normalized Sylvester benchmark: V column flat, H column alternating in sign.

    Detector indices are 1-based, so the first H entry is negative.
    """
    if n_det < 1:
        raise InvalidDimension("n_det must be >= 1")
    i = np.arange(1, n_det + 1)
    norm = 1.0 / np.sqrt(n_det)
    return TargetOperator(((-1.0) ** i) * norm, np.full(n_det, norm))


def random_operator(n_det: int, seed=None) -> TargetOperator:
    """Random operator with real and imaginary parts uniform on [-1, 1], columns unit norm."""
    if n_det < 1:
        raise InvalidDimension("n_det must be >= 1")
    rng = _rng(seed)
    m = rng.uniform(-1.0, 1.0, (n_det, 2)) + 1j * rng.uniform(-1.0, 1.0, (n_det, 2))
    m /= np.linalg.norm(m, axis=0)
    return TargetOperator.from_matrix(m)


def permanent(m: np.ndarray) -> complex:
    """Permanent of a square matrix by Ryser's formula with Gray-code ordering.

    Intended for small oracle matrices (n <= 12 or so); cost is O(2^n n).
    """
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidDimension(f"permanent needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return 1.0 + 0j
    row_sums = np.zeros(n, dtype=complex)
    total = 0j
    subset = 0
    for k in range(1, 2**n):
        # flip the column whose bit changes between successive Gray codes
        j = (k & -k).bit_length() - 1
        if subset & (1 << j):
            row_sums -= a[:, j]
        else:
            row_sums += a[:, j]
        subset ^= 1 << j
        size = bin(subset).count("1")
        total += (-1.0) ** size * np.prod(row_sums)
    return complex((-1.0) ** n * total)


def matrix_to_list(m: np.ndarray) -> list:
    """Row-major nested list of ``[re, im]`` pairs."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_list(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise InvalidDimension("expected rows of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]
