"""Optimal decreasing scores and the information functionals built on them.

Given a reference error density, the optimal monotone score is obtained by
projecting the density quantile function onto concave functions: transport
the density to the unit interval through its own quantiles, take the least
concave majorant, and read off right-hand slopes.  The slopes, pushed back
to the real line, form a decreasing step (or piecewise linear) score whose
squared norm is the attainable information for convex M-estimation.

`projected_score_numeric` performs this construction on a uniform grid for
any density with a usable quantile.  `projected_score_closed_form` returns
hand-derived scores and constants for the families where the construction
is available in closed form, which anchors the numeric path in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from ._quad import bisect_root, simpson_doubling
from .densities import ReferenceDensity, _piecewise_exp_constants
from .errors import DomainError, InvalidDensityError, InvalidInputError
from .monotone import ConvexLoss, MonotoneScore, lcm, negative_antiderivative

__all__ = [
    "ProjectedScore",
    "projected_score_numeric",
    "projected_score_closed_form",
    "fisher_divergence_projection",
    "two_sided_hazard",
    "v_cq",
    "huber_relative_efficiency",
    "cauchy_hull_constants",
    "prop1_constants",
    "prop1_ml_variance_ratio",
]


@dataclass(eq=False)
class ProjectedScore:
    """A decreasing score with its attainable and classical information.

    Fields:
        score        decreasing MonotoneScore, zero-mean under the density
        i_star       squared norm of the score under the density; the
                     information attainable with a convex loss
        fisher_info  classical score information of the density
        are_star     i_star / fisher_info, in (0, 1]
        density      the reference density that was projected, when known
        u_grid       unit-interval grid used by the numeric construction
        hull_slopes  majorant right-slopes on u_grid segments
        exact_score  closed-form score callable, when available
        exact_loss   closed-form convex loss, when available
    """

    score: MonotoneScore
    i_star: float
    fisher_info: float
    are_star: float
    density: Optional[ReferenceDensity] = None
    u_grid: Optional[np.ndarray] = None
    hull_slopes: Optional[np.ndarray] = None
    exact_score: Optional[Callable] = None
    exact_loss: Optional[ConvexLoss] = None

    def loss(self, anchor: float = 0.0) -> ConvexLoss:
        """Convex loss whose derivative is the negated score."""
        if self.exact_loss is not None:
            return self.exact_loss
        return negative_antiderivative(self.score, anchor)


def _step_score_from_slopes(z_inner: np.ndarray, slopes: np.ndarray) -> MonotoneScore:
    # slopes[k] rules [u_k, u_{k+1}); in z this is [z_inner[k-1], z_inner[k]),
    # so slopes[0] needs a dummy knot strictly left of the data range.
    gap = z_inner[1] - z_inner[0] if z_inner.size > 1 else 1.0
    knots = np.concatenate(([z_inner[0] - max(1.0, gap)], z_inner))
    levels = np.asarray(slopes, dtype=float).copy()
    keep = np.ones(knots.size, dtype=bool)
    keep[:-1] = np.diff(knots) > 0  # duplicate z: keep the last level
    knots, levels = knots[keep], levels[keep]
    merge = np.ones(levels.size, dtype=bool)
    merge[1:] = np.diff(levels) != 0
    return MonotoneScore(knots[merge], levels[merge], mode="step")


def projected_score_numeric(density: ReferenceDensity, grid_size: int = 2049) -> ProjectedScore:
    """Project the density quantile function on a uniform unit-interval grid.

    The grid value J(u_k) = pdf(quantile(u_k)) is pinned to zero at u = 0, 1.
    Both informations are evaluated on the same grid: i_star from majorant
    slopes, fisher_info from raw secant slopes.  This keeps the projection
    inequality i_star <= fisher_info and the zero-mean identity exact in
    floating point rather than merely asymptotic.
    """
    grid_size = int(grid_size)
    if grid_size < 64:
        raise InvalidInputError("grid_size must be at least 64")
    u = np.linspace(0.0, 1.0, grid_size)
    z_inner = np.asarray(density.quantile(u[1:-1]), dtype=float)
    if not np.all(np.isfinite(z_inner)):
        raise DomainError("quantile returned non-finite values on the interior grid")
    j_inner = np.asarray(density.pdf(z_inner), dtype=float)
    if not np.all(np.isfinite(j_inner)) or np.any(j_inner < 0.0):
        raise InvalidDensityError("density must be finite and nonnegative at grid quantiles")
    j = np.concatenate(([0.0], j_inner, [0.0]))
    hull = lcm(u, j)
    slopes = hull.right_derivative[:-1]
    du = 1.0 / (grid_size - 1)
    i_star = float(np.sum(slopes * slopes) * du)
    fisher = float(np.sum((np.diff(j) / du) ** 2) * du)
    if fisher <= 0.0:
        raise InvalidDensityError("density quantile function is flat; no score information")
    return ProjectedScore(
        score=_step_score_from_slopes(z_inner, slopes),
        i_star=i_star,
        fisher_info=fisher,
        are_star=i_star / fisher,
        density=density,
        u_grid=u,
        hull_slopes=np.asarray(slopes, dtype=float),
    )


@lru_cache(maxsize=1)
def cauchy_hull_constants() -> tuple:
    """(t0, z0): the majorant tangency angle and score clipping point.

    t0 solves tan(t/2) = t on (2, 3); the majorant of the Cauchy density
    quantile function leaves its initial chord at u = t0 / (2 pi).  z0 is
    the matching clipping point, the root of z * arctan(1/z) = 1/2.
    """
    t0 = bisect_root(lambda t: np.tan(0.5 * t) - t, 2.0, 3.0)
    z0 = bisect_root(lambda z: z * np.arctan(1.0 / z) - 0.5, 0.1, 1.0)
    return float(t0), float(z0)


@lru_cache(maxsize=1)
def _cauchy_i_star() -> float:
    t0, _ = cauchy_hull_constants()
    return float(0.5 - (2.0 * t0 * np.cos(2.0 * t0) - np.sin(2.0 * t0)) / (4.0 * np.pi))


def prop1_constants(eps: float) -> tuple:
    """(a, b) for the two-rate symmetric exponential family.

    a = (1 - eps^2) / eps^2 is the tail rate; the interior rate b in (0, a]
    solves eps * a * (1 - exp(-b)) / b = 1 - eps so the density integrates
    to one.
    """
    eps = float(eps)
    if not (0.0 < eps < 0.5):
        raise InvalidInputError("eps must lie in (0, 0.5)")
    return _piecewise_exp_constants(eps)


def prop1_ml_variance_ratio(eps: float) -> float:
    """Sandwich variance of the clipped score relative to the ML score.

    For the two-rate exponential family the ratio V(best convex) / V(ML)
    equals exp(-a * delta) where delta > 0 solves
    eps * (a * (1 + delta) + 1) * exp(-a * delta) = 1.
    """
    a, _ = prop1_constants(eps)
    eps = float(eps)
    delta = bisect_root(
        lambda t: eps * (a * (1.0 + t) + 1.0) * np.exp(-a * t) - 1.0, 0.0, 10.0
    )
    return float(np.exp(-a * delta))


def _dense_linear_score(fn: Callable, cut: float, n_knots: int = 4097) -> MonotoneScore:
    knots = np.linspace(-cut, cut, n_knots)
    return MonotoneScore(knots, fn(knots), mode="linear")


def _closed_form_cauchy() -> ProjectedScore:
    t0, z0 = cauchy_hull_constants()
    sin_t0 = 2.0 * z0 / (1.0 + z0 * z0)
    edge = float(np.log1p(z0 * z0))

    def exact_score(z):
        zc = np.clip(np.asarray(z, dtype=float), -z0, z0)
        return -2.0 * zc / (1.0 + zc * zc)

    def loss_value(z):
        t = np.abs(np.asarray(z, dtype=float))
        inner = np.log1p(np.minimum(t, z0) ** 2)
        return np.where(t <= z0, inner, (t - z0) * sin_t0 + edge)

    def loss_derivative(z):
        zc = np.clip(np.asarray(z, dtype=float), -z0, z0)
        return 2.0 * zc / (1.0 + zc * zc)

    def loss_second(z):
        z = np.asarray(z, dtype=float)
        inner = 2.0 * (1.0 - z * z) / (1.0 + z * z) ** 2
        return np.where(np.abs(z) < z0, inner, 0.0)

    i_star = _cauchy_i_star()
    return ProjectedScore(
        score=_dense_linear_score(lambda z: -2.0 * z / (1.0 + z * z), z0),
        i_star=i_star,
        fisher_info=0.5,
        are_star=i_star / 0.5,
        exact_score=exact_score,
        exact_loss=ConvexLoss(loss_value, loss_derivative, loss_second),
    )


def _closed_form_t2_scaled() -> ProjectedScore:
    cut = 3.0 ** -0.5
    level = 3.0 * np.sqrt(3.0) / 4.0
    edge = 1.5 * float(np.log(4.0 / 3.0))

    def exact_score(z):
        zc = np.clip(np.asarray(z, dtype=float), -cut, cut)
        return -3.0 * zc / (1.0 + zc * zc)

    def loss_value(z):
        t = np.abs(np.asarray(z, dtype=float))
        inner = 1.5 * np.log1p(np.minimum(t, cut) ** 2)
        return np.where(t <= cut, inner, (t - cut) * level + edge)

    def loss_derivative(z):
        zc = np.clip(np.asarray(z, dtype=float), -cut, cut)
        return 3.0 * zc / (1.0 + zc * zc)

    def loss_second(z):
        z = np.asarray(z, dtype=float)
        inner = 3.0 * (1.0 - z * z) / (1.0 + z * z) ** 2
        return np.where(np.abs(z) < cut, inner, 0.0)

    return ProjectedScore(
        score=_dense_linear_score(lambda z: -3.0 * z / (1.0 + z * z), cut),
        i_star=93.0 / 80.0,
        fisher_info=6.0 / 5.0,
        are_star=93.0 / 96.0,
        exact_score=exact_score,
        exact_loss=ConvexLoss(loss_value, loss_derivative, loss_second),
    )


def _closed_form_sym_pareto(alpha: float, sigma: float) -> ProjectedScore:
    if not (alpha > 0.0 and sigma > 0.0):
        raise InvalidInputError("sym_pareto needs alpha > 0 and sigma > 0")
    rate = alpha / sigma

    def exact_score(z):
        z = np.asarray(z, dtype=float)
        return np.where(z >= 0.0, -rate, rate)

    def loss_value(z):
        return rate * np.abs(np.asarray(z, dtype=float))

    def loss_derivative(z):
        z = np.asarray(z, dtype=float)
        return np.where(z >= 0.0, rate, -rate)

    def loss_second(z):
        return np.zeros_like(np.asarray(z, dtype=float))

    fisher = alpha * (alpha + 1.0) ** 2 / ((alpha + 2.0) * sigma * sigma)
    return ProjectedScore(
        score=MonotoneScore([-sigma, 0.0], [rate, -rate], mode="step"),
        i_star=rate * rate,
        fisher_info=fisher,
        are_star=rate * rate / fisher,
        exact_score=exact_score,
        exact_loss=ConvexLoss(loss_value, loss_derivative, loss_second),
    )


def _closed_form_laplace_mixture(rho: float, mu: float) -> ProjectedScore:
    if not (0.0 < rho < 1.0):
        raise InvalidInputError("laplace_mixture needs rho in (0, 1)")
    if not mu > 0.0:
        raise InvalidInputError("laplace_mixture needs mu > 0")
    half_logit = 0.5 * float(np.log(rho / (1.0 - rho)))
    f_lo = 0.5 * ((1.0 - rho) + rho * np.exp(-2.0 * mu))
    f_hi = 1.0 - 0.5 * ((1.0 - rho) * np.exp(-2.0 * mu) + rho)
    mid = 2.0 * rho - 1.0
    i_star = float(f_lo + mid * mid * (f_hi - f_lo) + (1.0 - f_hi))

    def pdf(z):
        z = np.asarray(z, dtype=float)
        return 0.5 * ((1.0 - rho) * np.exp(-np.abs(z + mu)) + rho * np.exp(-np.abs(z - mu)))

    inner = simpson_doubling(
        lambda z: np.tanh(z + half_logit) ** 2 * pdf(z), -mu, mu, rel_tol=1e-10
    )
    fisher = float(f_lo + (1.0 - f_hi) + inner)
    return ProjectedScore(
        score=MonotoneScore([-mu - 1.0, -mu, mu], [1.0, mid, -1.0], mode="step"),
        i_star=i_star,
        fisher_info=fisher,
        are_star=i_star / fisher,
    )


def _closed_form_prop1(eps: float) -> ProjectedScore:
    a, b = prop1_constants(eps)
    eps = float(eps)
    i_star = a * a * eps
    fisher = a * a * eps + b * b * (1.0 - eps)
    return ProjectedScore(
        score=MonotoneScore([-2.0, -1.0, 1.0], [a, 0.0, -a], mode="step"),
        i_star=i_star,
        fisher_info=fisher,
        are_star=i_star / fisher,
    )


def projected_score_closed_form(family: str, params=()) -> ProjectedScore:
    """Hand-derived projected scores for the analytically tractable families.

    Families: "cauchy", "t2_scaled", "sym_pareto" (alpha, sigma),
    "laplace_mixture" (rho, mu), "prop1" (eps).
    """
    fam = str(family).strip().lower()
    params = tuple(float(p) for p in params)
    try:
        if fam == "cauchy":
            if params:
                raise InvalidInputError("cauchy takes no parameters")
            return _closed_form_cauchy()
        if fam == "t2_scaled":
            if params:
                raise InvalidInputError("t2_scaled takes no parameters")
            return _closed_form_t2_scaled()
        if fam == "sym_pareto":
            if len(params) != 2:
                raise InvalidInputError("sym_pareto needs (alpha, sigma)")
            return _closed_form_sym_pareto(*params)
        if fam == "laplace_mixture":
            if len(params) != 2:
                raise InvalidInputError("laplace_mixture needs (rho, mu)")
            return _closed_form_laplace_mixture(*params)
        if fam == "prop1":
            if len(params) != 1:
                raise InvalidInputError("prop1 needs (eps,)")
            return _closed_form_prop1(params[0])
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for {fam}: {exc}") from exc
    raise InvalidInputError(
        f"no closed form for family {family!r}; "
        "known: cauchy, t2_scaled, sym_pareto, laplace_mixture, prop1"
    )


def _segment_exp_integral(c: np.ndarray, dx: np.ndarray) -> np.ndarray:
    # int_0^dx exp(c t) dt, elementwise, with the c = 0 limit handled
    c = np.asarray(c, dtype=float)
    dx = np.asarray(dx, dtype=float)
    flat = c == 0.0
    safe = np.where(flat, 1.0, c)
    return np.where(flat, dx, np.expm1(safe * dx) / safe)


def _segment_exp_inverse(c: np.ndarray, q0: np.ndarray, mass: np.ndarray) -> np.ndarray:
    # solve int_0^d q0 exp(c t) dt = mass for d, elementwise
    c = np.asarray(c, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    mass = np.asarray(mass, dtype=float)
    flat = c == 0.0
    safe = np.where(flat, 1.0, c)
    arg = np.maximum(safe * mass / q0, np.nextafter(-1.0, 0.0))
    return np.where(flat, mass / q0, np.log1p(arg) / safe)


def fisher_divergence_projection(
    projected: ProjectedScore, density: Optional[ReferenceDensity] = None
) -> ReferenceDensity:
    """The log-concave density whose score is the given decreasing score.

    Integrates exp of the antiderivative of the score and normalizes.  The
    result is the closest log-concave density to the projected one in the
    Fisher-divergence sense; it reproduces the input density wherever the
    projection left the original score untouched.

    Raises InvalidDensityError when the score does not change sign, since
    exp of its antiderivative is then not integrable.
    """
    score = projected.score
    if not (score.left_limit > 0.0 and score.right_limit < 0.0):
        raise InvalidDensityError(
            "projected score must be positive on the left and negative on the right"
        )

    if score.mode == "step":
        nodes = score.knots.copy()
        svals = score.levels.copy()
        lq = np.concatenate(([0.0], np.cumsum(svals[:-1] * np.diff(nodes))))
        c_left = float(svals[0])
        c_right = float(svals[-1])

        def lq_of(z):
            z = np.asarray(z, dtype=float)
            idx = np.clip(np.searchsorted(nodes, z, side="right") - 1, 0, nodes.size - 1)
            return lq[idx] + svals[idx] * (z - nodes[idx])

        peak = float(lq.max())
        q = np.exp(lq - peak)
        seg = q[:-1] * _segment_exp_integral(svals[:-1], np.diff(nodes))
    else:
        knots = score.knots
        nodes = np.union1d(knots, np.linspace(knots[0], knots[-1], 16385))
        s = np.asarray(score(nodes), dtype=float)
        dx = np.diff(nodes)
        lq = np.concatenate(([0.0], np.cumsum(0.5 * (s[:-1] + s[1:]) * dx)))
        c_left = float(score.left_limit)
        c_right = float(score.right_limit)

        def lq_of(z):
            z = np.asarray(z, dtype=float)
            zc = np.clip(z, nodes[0], nodes[-1])
            idx = np.clip(np.searchsorted(nodes, zc, side="right") - 1, 0, nodes.size - 2)
            base = lq[idx] + 0.5 * (s[idx] + np.asarray(score(zc), dtype=float)) * (zc - nodes[idx])
            return (
                base
                + c_left * np.minimum(z - nodes[0], 0.0)
                + c_right * np.maximum(z - nodes[-1], 0.0)
            )

        peak = float(lq.max())
        q = np.exp(lq - peak)
        # per-segment Simpson; the midpoint log-value is exact for a linear score
        lq_mid = lq[:-1] + 0.5 * (s[:-1] + 0.5 * (s[:-1] + s[1:])) * (0.5 * dx)
        seg = dx / 6.0 * (q[:-1] + 4.0 * np.exp(lq_mid - peak) + q[1:])

    left_mass = q[0] / c_left
    right_mass = q[-1] / (-c_right)
    cum = left_mass + np.concatenate(([0.0], np.cumsum(seg)))
    total = float(cum[-1] + right_mass)

    def pdf(z):
        return np.exp(lq_of(z) - peak) / total

    if score.mode == "step":

        def cdf(z):
            z = np.asarray(z, dtype=float)
            idx = np.clip(np.searchsorted(nodes, z, side="right") - 1, 0, nodes.size - 1)
            val = cum[idx] + q[idx] * _segment_exp_integral(svals[idx], z - nodes[idx])
            return np.clip(val / total, 0.0, 1.0)

        def quantile(u):
            u = np.asarray(u, dtype=float)
            t = u * total
            idx = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, nodes.size - 1)
            z = nodes[idx] + _segment_exp_inverse(svals[idx], q[idx], t - cum[idx])
            left = nodes[0] + np.log(np.maximum(t, 5e-324) / left_mass) / c_left
            return np.where(t < cum[0], left, z)

    else:

        def cdf(z):
            z = np.asarray(z, dtype=float)
            zc = np.clip(z, nodes[0], nodes[-1])
            idx = np.clip(np.searchsorted(nodes, zc, side="right") - 1, 0, nodes.size - 2)
            qz = np.exp(lq_of(zc) - peak)
            mid = cum[idx] + 0.5 * (q[idx] + qz) * (zc - nodes[idx])
            edge = np.exp(lq_of(z) - peak)
            val = np.where(
                z < nodes[0],
                edge / c_left,
                np.where(z > nodes[-1], total + edge / c_right, mid),
            )
            return np.clip(val / total, 0.0, 1.0)

        def quantile(u):
            u = np.asarray(u, dtype=float)
            t = u * total
            z = np.interp(t, cum, nodes)
            left = nodes[0] + np.log(np.maximum(t, 5e-324) / left_mass) / c_left
            right = nodes[-1] + np.log(np.maximum((total - t) / right_mass, 5e-324)) / c_right
            z = np.where(t < cum[0], left, np.where(t > cum[-1], right, z))
            for _ in range(4):
                qz = np.exp(lq_of(z) - peak)
                ok = qz > 1e-280
                resid = cdf(z) * total - t
                z = z - np.where(ok, resid / np.where(ok, qz, 1.0), 0.0)
            return z

    base = density if density is not None else projected.density
    label = base.name if base is not None else "score"
    return ReferenceDensity(
        name=f"fisher_projection({label})",
        pdf=pdf,
        cdf=cdf,
        quantile=quantile,
        score=score,
        params=(),
    )


def two_sided_hazard(density: ReferenceDensity, z):
    """Density over the smaller of the two tail probabilities, with 0/0 = 0."""
    arr = np.asarray(z, dtype=float)
    scalar = arr.ndim == 0
    p = np.asarray(density.pdf(arr), dtype=float)
    tail = np.minimum(
        np.asarray(density.cdf(arr), dtype=float),
        1.0 - np.asarray(density.cdf(arr), dtype=float),
    )
    pos = tail > 0.0
    out = np.where(pos, p / np.where(pos, tail, 1.0), np.where(p > 0.0, np.inf, 0.0))
    return float(out) if scalar else out


def v_cq(density: ReferenceDensity) -> float:
    """Sandwich variance of the sample median: 1 / (12 * (int_0^1 J)^2).

    J(u) = pdf(quantile(u)) is integrated adaptively with the endpoint
    values pinned to zero.
    """

    def j_of(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        inner = (u > 0.0) & (u < 1.0)
        out[inner] = density.pdf(density.quantile(u[inner]))
        return out

    total = simpson_doubling(j_of, 0.0, 1.0, rel_tol=1e-8)
    if not np.isfinite(total) or total <= 1e-12:
        raise InvalidDensityError("density quantile integral is degenerate")
    return float(1.0 / (12.0 * total * total))


def huber_relative_efficiency(threshold: float) -> float:
    """Efficiency of the Huber loss at Cauchy errors relative to the best convex loss.

    Ratio of sandwich variances: best attainable over Huber with the given
    clipping threshold.  Tends to 4 / (pi^2 i*) as the threshold shrinks to
    zero (the least absolute deviations limit) and to 0 as it grows.
    """
    k = float(threshold)
    if not (np.isfinite(k) and k > 0.0):
        raise InvalidInputError("threshold must be a finite positive number")
    at = float(np.arctan(k))
    denom = np.pi * (np.pi * k * k + 2.0 * k - 2.0 * (1.0 + k * k) * at) * _cauchy_i_star()
    return float(4.0 * at * at / denom)
