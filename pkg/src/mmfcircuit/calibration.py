"""Accidental/cross-talk calibration and detector localization.

Classical-light acquisitions give, for every pixel pair, coincidences that are
only accidentals and cross-talk::

    C_ij = alpha_ij n_i n_j dt T + beta_ij n_i T + beta_ji n_j T

with singles rates ``n`` (counts/s), window ``dt`` and duration ``T``. Fitting
this over many speckle patterns yields ``alpha`` and ``beta``, which are then
subtracted from photon-pair acquisitions.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, optimize

from .errors import InvalidDimension, LocalizationFailure, UnderdeterminedFit
from .tagproc import CoincidenceRecord


@dataclass(frozen=True, eq=False)
class CrosstalkModel:
    alpha: np.ndarray
    beta: np.ndarray
    alpha_se: np.ndarray | None = None
    beta_se: np.ndarray | None = None
    underdetermined: list = field(default_factory=list)

    @property
    def n_pix(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def zeros(cls, n_pix: int) -> "CrosstalkModel":
        return cls(np.zeros((n_pix, n_pix)), np.zeros((n_pix, n_pix)))

    def expected(self, rec: CoincidenceRecord) -> np.ndarray:
        """Accidental plus cross-talk coincidences predicted for ``rec``."""
        n, T = rec.n, rec.duration
        flow = self.beta * n[:, None] * T
        pred = self.alpha * np.outer(n, n) * rec.delta_t * T + (flow + flow.T)
        np.fill_diagonal(pred, 0.0)
        return pred

    def to_json(self) -> str:
        d = {"alpha": self.alpha.tolist(), "beta": self.beta.tolist(), "underdetermined": self.underdetermined}
        if self.alpha_se is not None:
            d["alpha_se"] = self.alpha_se.tolist()
            d["beta_se"] = self.beta_se.tolist()
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "CrosstalkModel":
        d = json.loads(text)
        se = lambda k: np.asarray(d[k]) if k in d else None  # noqa: E731
        return cls(
            np.asarray(d["alpha"], float),
            np.asarray(d["beta"], float),
            se("alpha_se"),
            se("beta_se"),
            [tuple(p) for p in d.get("underdetermined", [])],
        )


def fit_crosstalk(records, delta_t: float | None = None, *, strict: bool = False) -> CrosstalkModel:
    """Per-pair least squares of ``C_ij`` on ``[n_i n_j dt T, n_i T, n_j T]``.

    Standard errors are heteroscedasticity-robust (HC1). Pairs whose design matrix is rank deficient (for example a pixel that never
    fires) are listed in ``underdetermined`` and left at zero, or raise
    :class:`UnderdeterminedFit` when ``strict``. Negative estimates are clamped
    to zero with a warning.
    """
    records = list(records)
    if len(records) < 3:
        raise UnderdeterminedFit("need at least 3 records to fit 3 coefficients per pair")
    n_pix = records[0].n_pix
    if any(r.n_pix != n_pix for r in records):
        raise InvalidDimension("records cover different pixel sets")
    dt = np.array([r.delta_t if delta_t is None else delta_t for r in records])
    T = np.array([r.duration for r in records])
    n = np.stack([r.n for r in records])  # (m, n_pix)
    C = np.stack([r.C for r in records])  # (m, n_pix, n_pix)

    alpha = np.zeros((n_pix, n_pix))
    beta = np.zeros((n_pix, n_pix))
    alpha_se = np.full((n_pix, n_pix), np.nan)
    beta_se = np.full((n_pix, n_pix), np.nan)
    bad = []
    n_clamped = 0
    m = len(records)
    for i, j in zip(*np.triu_indices(n_pix, 1)):
        X = np.column_stack([n[:, i] * n[:, j] * dt * T, n[:, i] * T, n[:, j] * T])
        y = C[:, i, j]
        # column scaling keeps the rank test meaningful across very different magnitudes
        scale = np.linalg.norm(X, axis=0)
        if np.any(scale == 0) or np.linalg.matrix_rank(X / np.where(scale == 0, 1, scale)) < 3:
            if strict:
                raise UnderdeterminedFit(f"pair ({i}, {j}) has a rank-deficient design")
            bad.append((int(i), int(j)))
            continue
        Xs = X / scale
        coef_s, *_ = np.linalg.lstsq(Xs, y, rcond=None)
        coef = coef_s / scale
        resid = y - X @ coef
        # counting noise is heteroscedastic, so use the HC1 sandwich covariance
        bread = np.linalg.inv(Xs.T @ Xs)
        meat = (Xs * resid[:, None] ** 2).T @ Xs * (m / max(m - 3, 1))
        cov = bread @ meat @ bread / np.outer(scale, scale)
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
        n_clamped += int(np.sum(coef < 0))
        coef = np.clip(coef, 0.0, None)
        alpha[i, j] = alpha[j, i] = coef[0]
        beta[i, j], beta[j, i] = coef[1], coef[2]
        alpha_se[i, j] = alpha_se[j, i] = se[0]
        beta_se[i, j], beta_se[j, i] = se[1], se[2]
    if n_clamped:
        warnings.warn(f"{n_clamped} negative coefficient estimates clamped to 0", RuntimeWarning, stacklevel=2)
    return CrosstalkModel(alpha, beta, alpha_se, beta_se, bad)


def fit_residuals(records, model: CrosstalkModel) -> np.ndarray:
    """``C - model.expected`` for each record, shape ``(m, n_pix, n_pix)``."""
    return np.stack([r.C - model.expected(r) for r in records])


def correct_coincidences(rec: CoincidenceRecord, model: CrosstalkModel) -> CoincidenceRecord:
    """Subtract predicted accidentals and cross-talk, clamping at zero."""
    if model.n_pix != rec.n_pix:
        raise InvalidDimension(f"model covers {model.n_pix} pixels, record {rec.n_pix}")
    C = np.clip(rec.C - model.expected(rec), 0.0, None)
    return CoincidenceRecord(rec.n.copy(), C, rec.delta_t, rec.duration)


@dataclass(frozen=True)
class GaussianFit:
    center: tuple[float, float]
    sigma: tuple[float, float]
    amplitude: float
    offset: float


def _gauss2d(params, x, y):
    x0, y0, sx, sy, a, b = params
    return a * np.exp(-((x - x0) ** 2) / (2 * sx**2) - ((y - y0) ** 2) / (2 * sy**2)) + b


def fit_gaussian2d(image) -> GaussianFit:
    """Least-squares fit of an axis-aligned 2D Gaussian plus constant offset.

    Coordinates are ``(x, y)`` = (column, row). The start point comes from the
    background-subtracted centroid and second moments.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise InvalidDimension("image must be 2D")
    lo, hi = np.min(img), np.max(img)
    if not np.isfinite(hi - lo) or hi - lo <= 0:
        raise LocalizationFailure("image is constant")
    y, x = np.mgrid[0 : img.shape[0], 0 : img.shape[1]]
    w = np.clip(img - np.median(img), 0, None)
    if w.sum() <= 0:
        w = img - lo
    tot = w.sum()
    cx, cy = (w * x).sum() / tot, (w * y).sum() / tot
    sx0 = np.sqrt(max((w * (x - cx) ** 2).sum() / tot, 0.25))
    sy0 = np.sqrt(max((w * (y - cy) ** 2).sum() / tot, 0.25))
    p0 = [cx, cy, sx0, sy0, hi - np.median(img), np.median(img)]

    xr, yr, zr = x.ravel(), y.ravel(), img.ravel()
    res = optimize.least_squares(
        lambda p: _gauss2d(p, xr, yr) - zr, p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000
    )
    x0, y0, sx, sy, a, b = res.x
    h, wd = img.shape
    if (
        not res.success
        or not np.all(np.isfinite(res.x))
        or not (0 <= x0 <= wd - 1 and 0 <= y0 <= h - 1)
        or a <= 0
        or min(abs(sx), abs(sy)) < 1e-3
        or max(abs(sx), abs(sy)) > max(h, wd)
    ):
        raise LocalizationFailure("Gaussian fit did not converge to a spot inside the image")
    return GaussianFit((float(x0), float(y0)), (float(abs(sx)), float(abs(sy))), float(a), float(b))


@dataclass(frozen=True, eq=False)
class LocalizationResult:
    positions: np.ndarray  # (n, 2), NaN rows for flagged detectors
    sigmas: np.ndarray
    flagged: list
    spacing_cv: float

    @property
    def hex_consistent(self) -> bool:
        return bool(np.isfinite(self.spacing_cv) and self.spacing_cv < 0.1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detector", "x", "y", "sigma_x", "sigma_y"])
            for k, ((px, py), (sx, sy)) in enumerate(zip(self.positions, self.sigmas)):
                w.writerow([k, repr(float(px)), repr(float(py)), repr(float(sx)), repr(float(sy))])


def nearest_neighbor_cv(points) -> float:
    pts = np.asarray(points, dtype=float)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if len(pts) < 2:
        return float("nan")
    d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    nn = d.min(axis=1)
    return float(nn.std() / nn.mean())


def localize_detectors(focus_images, expected_n: int | None = None, half_window: int = 12) -> LocalizationResult:
    """Fit one focus image per detector and check hexagonal-grid regularity.

    Each fit runs on a ``(2 half_window + 1)`` square around the brightest
    smoothed pixel. Detectors whose fit fails are flagged and get NaN positions.
    """
    images = list(focus_images)
    if expected_n is not None and len(images) != expected_n:
        raise InvalidDimension(f"expected {expected_n} images, got {len(images)}")
    pos = np.full((len(images), 2), np.nan)
    sig = np.full((len(images), 2), np.nan)
    flagged = []
    for k, image in enumerate(images):
        img = np.asarray(image, dtype=float)
        try:
            if np.ptp(img) <= 0:
                raise LocalizationFailure("blank image")
            py, px = np.unravel_index(np.argmax(ndimage.gaussian_filter(img, 1.0)), img.shape)
            y0, x0 = max(py - half_window, 0), max(px - half_window, 0)
            crop = img[y0 : py + half_window + 1, x0 : px + half_window + 1]
            fit = fit_gaussian2d(crop)
        except LocalizationFailure:
            flagged.append(k)
            continue
        pos[k] = (fit.center[0] + x0, fit.center[1] + y0)
        sig[k] = fit.sigma
    return LocalizationResult(pos, sig, flagged, nearest_neighbor_cv(pos))
