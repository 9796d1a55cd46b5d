"""From residuals to an estimated convex loss.

Pipeline: kernel density and derivative estimation on the residuals, a
truncated score ratio, the quantile-transform antitonic projection of that
score, optional antisymmetrization, and the empirical score matching
objective used to compare candidate scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._special import norm_cdf, norm_pdf
from .errors import DegenerateSampleError, InvalidInputError, NumericError
from .monotone import MonotoneScore, lcm, pava_decreasing

__all__ = [
    "KdeModel",
    "TruncationParams",
    "kde",
    "truncated_score",
    "projected_score_estimate",
    "antisymmetrize",
    "empirical_score_matching_objective",
]

# evaluation cost cap: points-times-centers per vectorized batch
_PAIR_BUDGET = 4_000_000


def _gaussian_kernel(t):
    return norm_pdf(t)


def _gaussian_kernel_deriv(t):
    return -t * norm_pdf(t)


def _gaussian_kernel_cdf(t):
    return norm_cdf(t)


def _quartic_kernel(t):
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) <= 1.0
    return np.where(inside, 0.9375 * (1.0 - t * t) ** 2, 0.0)


def _quartic_kernel_deriv(t):
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) <= 1.0
    return np.where(inside, -3.75 * t * (1.0 - t * t), 0.0)


def _quartic_kernel_cdf(t):
    tc = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    raw = 0.5 + 0.9375 * (tc - 2.0 / 3.0 * tc**3 + 0.2 * tc**5)
    return np.clip(raw, 0.0, 1.0)


# kernel -> (pdf, derivative, cdf, support radius in bandwidth units);
# the gaussian radius is where the double-precision tail underflows
_KERNELS = {
    "gaussian": (_gaussian_kernel, _gaussian_kernel_deriv, _gaussian_kernel_cdf, 39.0),
    "quartic": (_quartic_kernel, _quartic_kernel_deriv, _quartic_kernel_cdf, 1.0),
}
_KERNEL_ALIASES = {"quartic-compact": "quartic"}


class KdeModel:
    """Kernel density model over residuals with exact sum evaluations.

    Exposes pdf, pdf_deriv, and cdf as plain kernel sums.  Evaluations sort
    the query points and window the centers by the kernel support (for the
    gaussian kernel, the radius beyond which the tail underflows), so sums
    are exact in double precision at linear-ish cost.  Immutable once built;
    evaluations are pure.
    """

    def __init__(self, centers, bandwidth: float, kernel: str = "gaussian"):
        name = str(kernel).strip().lower()
        name = _KERNEL_ALIASES.get(name, name)
        if name not in _KERNELS:
            raise InvalidInputError(
                f"unknown kernel {kernel!r}; known: gaussian, quartic (quartic-compact)"
            )
        c = np.asarray(centers, dtype=float).ravel()
        if c.size < 2:
            raise InvalidInputError("need at least two residuals")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("residuals must be finite")
        if np.all(c == c[0]):
            raise DegenerateSampleError("all residuals are identical")
        bandwidth = float(bandwidth)
        if not (np.isfinite(bandwidth) and bandwidth > 0.0):
            raise InvalidInputError("bandwidth must be a finite positive number")
        self.centers = c.copy()
        self.bandwidth = bandwidth
        self.kernel = name
        self._sorted = np.sort(c)
        self._k, self._kd, self._kc, self._radius = _KERNELS[name]

    @property
    def n(self) -> int:
        return int(self.centers.size)

    def _accumulate(self, z, mode: int):
        zf = np.asarray(z, dtype=float)
        flat = np.atleast_1d(zf).ravel()
        order = np.argsort(flat, kind="stable")
        zs = flat[order]
        cs = self._sorted
        h = self.bandwidth
        reach = self._radius * h
        n = cs.size
        res = np.empty(zs.size, dtype=float)
        i = 0
        while i < zs.size:
            lo = int(np.searchsorted(cs, zs[i] - reach, side="left"))
            hi = int(np.searchsorted(cs, zs[i] + reach, side="right"))
            j = i + 1
            while j < zs.size:
                hi2 = int(np.searchsorted(cs, zs[j] + reach, side="right"))
                if (j + 1 - i) * max(hi2 - lo, 1) > _PAIR_BUDGET:
                    break
                hi = hi2
                j += 1
            t = (zs[i:j, None] - cs[None, lo:hi]) / h
            if mode == 0:
                res[i:j] = self._k(t).sum(axis=1) / (n * h)
            elif mode == 1:
                res[i:j] = self._kd(t).sum(axis=1) / (n * h * h)
            else:
                # centers entirely left of the window contribute one each
                res[i:j] = (lo + self._kc(t).sum(axis=1)) / n
            i = j
        out = np.empty_like(res)
        out[order] = res
        return float(out[0]) if zf.ndim == 0 else out.reshape(zf.shape)

    def pdf(self, z):
        return self._accumulate(z, 0)

    def pdf_deriv(self, z):
        return self._accumulate(z, 1)

    def cdf(self, z):
        return self._accumulate(z, 2)


def kde(residuals, kernel: str = "gaussian", h="auto") -> KdeModel:
    """Build a KdeModel; h="auto" applies Silverman's bandwidth.

    Silverman: 0.9 * min(sd, IQR / 1.34) * n^(-1/5), skipping a zero IQR
    when ties collapse the quartiles.
    """
    r = np.asarray(residuals, dtype=float).ravel()
    if h is None or (isinstance(h, str) and h.strip().lower() == "auto"):
        if r.size < 2:
            raise InvalidInputError("need at least two residuals")
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("residuals must be finite")
        sd = float(np.std(r, ddof=1))
        iqr = float(np.quantile(r, 0.75) - np.quantile(r, 0.25))
        spreads = [s for s in (sd, iqr / 1.34) if s > 0.0]
        if not spreads:
            raise DegenerateSampleError("all residuals are identical")
        h = 0.9 * min(spreads) * r.size ** (-0.2)
    else:
        try:
            h = float(h)
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"bad bandwidth {h!r}") from exc
    return KdeModel(r, h, kernel)


@dataclass(frozen=True)
class TruncationParams:
    """Score truncation: zero the ratio where |pdf'| > alpha or pdf < gamma.

    Defaults disable truncation (alpha infinite, gamma at the smallest
    positive normal float).
    """

    alpha: float = np.inf
    gamma: float = field(default_factory=lambda: float(np.finfo(float).tiny))

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise InvalidInputError("alpha must be positive")
        if not (np.isfinite(self.gamma) and self.gamma > 0.0):
            raise InvalidInputError("gamma must be a finite positive number")

    @classmethod
    def theory(cls, n: int) -> "TruncationParams":
        """Rate-admissible preset: alpha = log n, gamma = 1 / log n."""
        n = int(n)
        if n < 3:
            raise InvalidInputError("theory preset needs n >= 3")
        return cls(alpha=float(np.log(n)), gamma=1.0 / float(np.log(n)))


def truncated_score(model: KdeModel, trunc: TruncationParams | None = None):
    """The ratio pdf'/pdf, zeroed outside the truncation region."""
    params = trunc if trunc is not None else TruncationParams()

    def psi(z):
        zf = np.asarray(z, dtype=float)
        p = np.atleast_1d(model.pdf(zf)).astype(float)
        dp = np.atleast_1d(model.pdf_deriv(zf)).astype(float)
        keep = (p >= params.gamma) & (np.abs(dp) <= params.alpha)
        out = np.zeros_like(p)
        np.divide(dp, p, out=out, where=keep)
        return float(out[0]) if zf.ndim == 0 else out.reshape(zf.shape)

    return psi


def projected_score_estimate(
    model: KdeModel,
    trunc: TruncationParams | None = None,
    grid_size: int = 2049,
) -> MonotoneScore:
    """Decreasing score estimate via the quantile-domain concave majorant.

    Evaluates the truncated score at model-quantiles of a uniform grid,
    accumulates its trapezoid antiderivative, and takes the least concave
    majorant over all of [0, 1].  The antiderivative of the untruncated
    ratio is exactly pdf(quantile(u)), which vanishes at both endpoints,
    so the curve is anchored there with the exact edge rise and drop
    (density at the extreme grid quantiles, less the density floor).
    This lets the majorant pool sparse-tail cells into boundary chords
    instead of chasing the noisy raw ratio where kernel bumps are
    isolated.  Grid points where the majorant touches the antiderivative
    keep their score value (there the majorant's derivative is the score
    itself); pooled stretches take the majorant slope.  A final monotone
    regression removes the roundoff-scale seams between the two regimes.
    """
    grid_size = int(grid_size)
    if grid_size < 64:
        raise InvalidInputError("grid_size must be at least 64")
    u = np.linspace(0.0, 1.0, grid_size)[1:-1]

    lo0 = float(model._sorted[0] - 10.0 * model.bandwidth)
    hi0 = float(model._sorted[-1] + 10.0 * model.bandwidth)
    f_lo = float(np.atleast_1d(model.cdf(lo0))[0])
    f_hi = float(np.atleast_1d(model.cdf(hi0))[0])
    if not (f_lo <= u[0] and f_hi >= u[-1]):
        raise NumericError(
            f"cannot bracket model quantiles: F({lo0:.6g}) = {f_lo:.6g} and "
            f"F({hi0:.6g}) = {f_hi:.6g} do not cover the grid "
            f"[{u[0]:.6g}, {u[-1]:.6g}]"
        )
    lo = np.full(u.size, lo0)
    hi = np.full(u.size, hi0)
    cur = 0.5 * (lo + hi)
    # the model cdf is a length-n kernel average, so a residual within a
    # few dozen ulps pins the quantile as tightly as any bracket could
    floor = 64.0 * np.finfo(float).eps
    resid_prev = np.full(u.size, np.inf)
    active = np.arange(u.size)
    for _ in range(200):
        ca = cur[active]
        ua = u[active]
        f = np.atleast_1d(model.cdf(ca))
        resid = np.abs(f - ua)
        ge = f >= ua
        ha = np.where(ge, ca, hi[active])
        la = np.where(ge, lo[active], ca)
        done = resid <= floor
        la = np.where(done, ca, la)
        ha = np.where(done, ca, ha)
        lo[active] = la
        hi[active] = ha
        # Newton steps are kept only while they halve the cdf residual;
        # everything else bisects, so 200 rounds always suffice (at most
        # ~50 productive Newton rounds from residual 1 down to the floor
        # plus ~130 halvings of any starting bracket)
        pz = np.atleast_1d(model.pdf(ca))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            cand = ca - (f - ua) / pz
        good = (
            np.isfinite(cand)
            & (cand > la)
            & (cand < ha)
            & (resid <= 0.5 * resid_prev[active])
        )
        cur[active] = np.where(good, cand, 0.5 * (la + ha))
        resid_prev[active] = resid
        active = active[(ha - la) > 1e-10]
        if active.size == 0:
            break
    else:
        raise NumericError("quantile search did not reach 1e-10 in 200 rounds")
    z = 0.5 * (lo + hi)

    params = trunc if trunc is not None else TruncationParams()
    p = np.atleast_1d(model.pdf(z)).astype(float)
    dp = np.atleast_1d(model.pdf_deriv(z)).astype(float)
    keep_pt = (p >= params.gamma) & (np.abs(dp) <= params.alpha)
    v = np.zeros_like(p)
    np.divide(dp, p, out=v, where=keep_pt)
    du = 1.0 / (grid_size - 1)
    # between grid quantiles the untruncated antiderivative equals the
    # density difference exactly; trapezoid only bridges truncated stretches
    exact = keep_pt[:-1] & keep_pt[1:]
    seg = np.where(exact, np.diff(p), 0.5 * (v[:-1] + v[1:]) * du)
    inner = np.cumsum(seg)
    rise = max(float(p[0]) - params.gamma, 0.0)
    drop = max(float(p[-1]) - params.gamma, 0.0)
    ug = np.concatenate(([0.0], u, [1.0]))
    area = np.concatenate(([0.0, rise], rise + inner, [rise + inner[-1] - drop]))
    hull = lcm(ug, area)
    rd = hull.right_derivative
    ld = np.concatenate(([np.inf], rd[:-1]))
    # at discrete touch points the raw ratio is trusted only inside the
    # hull kink sandwich; junk pokes from sparse tails get chord slopes
    clipped = np.clip(v, rd[1:-1], ld[1:-1])
    levels = pava_decreasing(np.where(hull.touch_set[1:-1], clipped, rd[1:-1]))
    keep = np.ones(z.size, dtype=bool)
    keep[:-1] = np.diff(z) > 0.0  # ties from flat model cdf: keep the last
    return MonotoneScore(z[keep], levels[keep], mode="linear")


def antisymmetrize(score: MonotoneScore) -> MonotoneScore:
    """The odd part (score(z) - score(-z)) / 2 as a MonotoneScore.

    Knots are the union of the knots and their negations.  In step mode the
    right-continuous representative uses the left limit of the reflected
    term; the result is odd off the jump points.
    """
    union = np.union1d(score.knots, -score.knots)
    if score.mode == "linear":
        vals = 0.5 * (score(union) - score(-union))
        return MonotoneScore(union, vals, mode="linear")
    vals = 0.5 * (score(union) - score.value_left(-union))
    gap = union[1] - union[0] if union.size > 1 else 1.0
    first = 0.5 * (score.left_limit - score.right_limit)
    knots = np.concatenate(([union[0] - max(1.0, gap)], union))
    levels = np.concatenate(([first], vals))
    merge = np.ones(levels.size, dtype=bool)
    merge[1:] = np.diff(levels) != 0.0
    return MonotoneScore(knots[merge], levels[merge], mode="step")


def empirical_score_matching_objective(score: MonotoneScore, residuals) -> float:
    """Sample mean of score(r)^2 + 2 * score'(r).

    The derivative uses interval slopes, taking the left interval at exact
    knots; a lower value means a better candidate score for the sample.
    """
    if score.mode != "linear":
        raise InvalidInputError("objective needs a piecewise-linear score")
    r = np.asarray(residuals, dtype=float).ravel()
    if r.size == 0:
        raise InvalidInputError("residuals must be non-empty")
    vals = score(r)
    return float(np.mean(vals * vals + 2.0 * score.slope(r)))
