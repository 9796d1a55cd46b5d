"""Plug-in variance estimation, confidence intervals, and ellipsoids.

Slope covariances come from the average squared score of out-of-sample
residuals; intercept-augmented covariances add a correction driven by the
asymptotic variance of the centring functional (mean or quantile).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._special import chi2_quantile, norm_quantile
from .errors import InvalidDensityError, InvalidInputError
from .score_estimation import kde

_SYM_TOL = 1e-12
_PSD_SLACK = -1e-10


def estimate_i_star(score, residuals) -> float:
    """Mean squared score over residuals, the plug-in information value."""

    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise InvalidInputError("empty residual vector")
    vals = np.asarray(score(r), dtype=float)
    return float(np.mean(np.square(vals)))


def estimate_i_star_pooled(scores, residual_groups) -> float:
    """Fold-pooled version: each score is evaluated on its own residuals."""

    scores = list(scores)
    groups = [np.asarray(g, dtype=float) for g in residual_groups]
    if len(scores) != len(groups) or not scores:
        raise InvalidInputError("scores and residual groups must align")
    total = 0.0
    count = 0
    for score, r in zip(scores, groups):
        total += float(np.sum(np.square(np.asarray(score(r), dtype=float))))
        count += r.size
    if count == 0:
        raise InvalidInputError("empty residual groups")
    return total / count


def estimate_upsilon(
    zeta: str,
    residuals,
    kde_at_zero: float | None = None,
    tau: float = 0.5,
) -> float:
    """Asymptotic variance of the centring step on pilot residuals.

    For the mean this is the raw second moment.  For the tau-th quantile
    it is ``mean((1{r < 0} - tau)^2) / density(0)^2`` with the residual
    density at zero either supplied or taken from a kernel estimate.
    """

    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise InvalidInputError("empty residual vector")
    if zeta == "mean":
        return float(np.mean(np.square(r)))
    if zeta == "quantile":
        if not 0.0 < tau < 1.0:
            raise InvalidInputError("tau must lie in (0, 1)")
        if kde_at_zero is None:
            kde_at_zero = float(kde(r).pdf(0.0))
        if not kde_at_zero > 0.0:
            raise InvalidDensityError(
                "residual density estimate at zero is not positive"
            )
        num = float(np.mean(np.square((r < 0.0).astype(float) - tau)))
        return num / (kde_at_zero * kde_at_zero)
    raise InvalidInputError(f"unknown zeta {zeta!r}")


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (np.isfinite(value) and value > 0.0):
        raise InvalidInputError(f"{name} must be a positive finite number")
    return value


def _invert_spd(m: np.ndarray, what: str) -> np.ndarray:
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise InvalidInputError(f"{what} is not positive definite") from None
    inv = np.linalg.inv(c)
    out = inv.T @ inv
    return (out + out.T) / 2.0


def covariance_symmetric(design, i_star_hat: float) -> np.ndarray:
    """Finite-sample covariance of the slope vector in the symmetric model.

    Returns ``inv(X'X) / i_star_hat``; interval half-widths are plain
    z-multiples of the square roots of its diagonal.
    """

    x = np.asarray(design, dtype=float)
    if x.ndim != 2 or x.shape[0] < x.shape[1]:
        raise InvalidInputError("design must be n x d with n >= d")
    i_star = _check_positive("i_star_hat", i_star_hat)
    return _invert_spd(x.T @ x, "design gram matrix") / i_star


def covariance_intercept(
    design, i_star_hat: float, upsilon_hat: float
) -> np.ndarray:
    """Covariance for slopes plus intercept when centring is separate.

    The information for the full coefficient vector is the score-scaled
    gram matrix minus a rank-one correction at the design mean whose size
    reflects the gap between the score information and the centring
    functional's precision.
    """

    x = np.asarray(design, dtype=float)
    if x.ndim != 2 or x.shape[0] < x.shape[1]:
        raise InvalidInputError("design must be n x d with n >= d")
    if not np.all(x[:, -1] == 1.0):
        raise InvalidInputError("intercept covariance needs an all-ones column")
    i_star = _check_positive("i_star_hat", i_star_hat)
    upsilon = _check_positive("upsilon_hat", upsilon_hat)
    n = x.shape[0]
    xbar = x.mean(axis=0)
    info = (i_star / n) * (x.T @ x) - (i_star - 1.0 / upsilon) * np.outer(
        xbar, xbar
    )
    return _invert_spd(info, "intercept information matrix") / n


def confidence_intervals(beta, cov, alpha: float) -> np.ndarray:
    """Per-coordinate normal intervals from a covariance matrix.

    Returns a (d, 2) array of lower and upper endpoints at level
    1 - alpha.
    """

    b = np.asarray(beta, dtype=float)
    c = np.asarray(cov, dtype=float)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    if c.shape != (b.size, b.size):
        raise InvalidInputError("covariance shape does not match beta")
    var = np.diag(c)
    if np.any(var < 0.0):
        raise InvalidInputError("covariance has negative diagonal entries")
    z = norm_quantile(1.0 - alpha / 2.0)
    half = z * np.sqrt(var)
    return np.column_stack([b - half, b + half])


@dataclass(eq=False)
class Ellipsoid:
    """The set of points b with (b - center)' matrix (b - center) <= threshold."""

    center: np.ndarray
    matrix: np.ndarray
    threshold: float
    volume: float

    def contains(self, point) -> bool:
        diff = np.asarray(point, dtype=float) - self.center
        return bool(diff @ self.matrix @ diff <= self.threshold)


def confidence_ellipsoid(beta, info_matrix, alpha: float) -> Ellipsoid:
    """Joint confidence set from the inverse-covariance (information) matrix.

    The threshold is the 1 - alpha chi-square quantile with d degrees of
    freedom; the reported volume follows from the matrix determinant and
    is infinite when the matrix is singular.
    """

    b = np.asarray(beta, dtype=float)
    m = np.asarray(info_matrix, dtype=float)
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    if m.shape != (b.size, b.size):
        raise InvalidInputError("information matrix shape does not match beta")
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    if scale > 0.0 and float(np.max(np.abs(m - m.T))) > _SYM_TOL * scale:
        raise InvalidInputError("information matrix must be symmetric")
    m = (m + m.T) / 2.0
    eigs = np.linalg.eigvalsh(m)
    if eigs[0] < _PSD_SLACK * max(scale, 1.0):
        raise InvalidInputError("information matrix must be positive semidefinite")
    d = b.size
    threshold = chi2_quantile(1.0 - alpha, d)
    sign, logdet = np.linalg.slogdet(m)
    if sign <= 0.0:
        volume = math.inf
    else:
        unit_ball = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
        volume = unit_ball * threshold ** (d / 2.0) * math.exp(-0.5 * logdet)
    return Ellipsoid(center=b, matrix=m, threshold=threshold, volume=volume)


@dataclass(eq=False)
class InferenceResult:
    """Covariance, per-coordinate intervals, and a joint ellipsoid."""

    beta: np.ndarray
    cov_matrix: np.ndarray
    intervals: np.ndarray
    ellipsoid: Ellipsoid
    i_star_hat: float
    upsilon_hat: float | None
    alpha: float

    def __post_init__(self) -> None:
        _check_positive("i_star_hat", self.i_star_hat)
        if self.upsilon_hat is not None:
            _check_positive("upsilon_hat", self.upsilon_hat)
        c = np.asarray(self.cov_matrix, dtype=float)
        scale = float(np.max(np.abs(c)))
        if float(np.max(np.abs(c - c.T))) > _SYM_TOL * max(scale, 1.0):
            raise InvalidInputError("covariance must be symmetric")
        eigs = np.linalg.eigvalsh((c + c.T) / 2.0)
        if eigs[0] < _PSD_SLACK * max(scale, 1.0):
            raise InvalidInputError("covariance must be positive semidefinite")
        lo, hi = self.intervals[:, 0], self.intervals[:, 1]
        if np.any(lo > self.beta) or np.any(hi < self.beta):
            raise InvalidInputError("intervals must contain the point estimate")


def inference_summary(
    design,
    beta,
    i_star_hat: float,
    upsilon_hat: float | None = None,
    alpha: float = 0.05,
    mode: str = "symmetric",
) -> InferenceResult:
    """Bundle covariance, intervals, and ellipsoid for a fitted model."""

    x = np.asarray(design, dtype=float)
    b = np.asarray(beta, dtype=float)
    if mode == "symmetric":
        cov = covariance_symmetric(x, i_star_hat)
        info = _check_positive("i_star_hat", i_star_hat) * (x.T @ x)
    elif mode == "intercept":
        if upsilon_hat is None:
            raise InvalidInputError("intercept mode requires upsilon_hat")
        cov = covariance_intercept(x, i_star_hat, upsilon_hat)
        n = x.shape[0]
        xbar = x.mean(axis=0)
        info = i_star_hat * (x.T @ x) - n * (
            i_star_hat - 1.0 / upsilon_hat
        ) * np.outer(xbar, xbar)
    else:
        raise InvalidInputError(f"unknown mode {mode!r}")
    info = (info + info.T) / 2.0
    return InferenceResult(
        beta=b,
        cov_matrix=cov,
        intervals=confidence_intervals(b, cov, alpha),
        ellipsoid=confidence_ellipsoid(b, info, alpha),
        i_star_hat=float(i_star_hat),
        upsilon_hat=None if upsilon_hat is None else float(upsilon_hat),
        alpha=float(alpha),
    )
