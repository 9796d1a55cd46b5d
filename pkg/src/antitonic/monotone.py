"""Shape-constrained primitives.

This module provides the geometric core reused everywhere else: least
concave majorants of gridded functions, weighted decreasing (antitonic)
regression, projection of scattered points onto the decreasing cone, and
construction of convex losses as negative antiderivatives of decreasing
score functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "ConvexLoss",
    "GridFunction",
    "LcmResult",
    "MonotoneScore",
    "antitonic_project",
    "lcm",
    "negative_antiderivative",
    "pava_decreasing",
]


def _as_float_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must contain only finite values")
    return arr


def _scalar_or_array(z):
    arr = np.asarray(z, dtype=float)
    return arr, arr.ndim == 0


class GridFunction:
    """Piecewise-linear function on a strictly increasing knot grid.

    Evaluation interpolates linearly between knots and clamps to the
    boundary values outside the grid.
    """

    def __init__(self, knots, values):
        knots = _as_float_vector(knots, "knots")
        values = _as_float_vector(values, "values")
        if knots.size != values.size:
            raise InvalidInputError("knots and values must have equal length")
        if knots.size < 2:
            raise InvalidInputError("a grid function needs at least two knots")
        if np.any(np.diff(knots) <= 0):
            raise InvalidInputError("knots must be strictly increasing")
        self.knots = knots
        self.values = values

    def __call__(self, z):
        za, scalar = _scalar_or_array(z)
        out = np.interp(za, self.knots, self.values)
        return float(out) if scalar else out


class MonotoneScore:
    """Non-increasing score function.

    Two evaluation modes:

    * ``"step"``: right-continuous step function; the value on
      ``[knots[i], knots[i+1])`` is ``levels[i]`` and the last level
      extends to the right.
    * ``"linear"``: piecewise-linear interpolation between knots.

    Both modes extrapolate with the boundary level. Levels must be
    non-increasing; violations below roundoff size are clamped.
    """

    def __init__(self, knots, levels, mode: str = "step"):
        knots = _as_float_vector(knots, "knots")
        levels = _as_float_vector(levels, "levels")
        if knots.size != levels.size:
            raise InvalidInputError("knots and levels must have equal length")
        if knots.size < 1:
            raise InvalidInputError("a score needs at least one knot")
        if np.any(np.diff(knots) <= 0):
            raise InvalidInputError("knots must be strictly increasing")
        if mode not in ("step", "linear"):
            raise InvalidInputError("mode must be 'step' or 'linear'")
        clamped = np.minimum.accumulate(levels)
        scale = max(1.0, float(np.max(np.abs(levels))))
        if float(np.max(levels - clamped)) > 1e-12 * scale:
            raise InvalidInputError("levels must be non-increasing")
        self.knots = knots
        self.levels = clamped
        self.mode = mode

    @property
    def left_limit(self) -> float:
        return float(self.levels[0])

    @property
    def right_limit(self) -> float:
        return float(self.levels[-1])

    def __call__(self, z):
        za, scalar = _scalar_or_array(z)
        if self.mode == "linear":
            out = np.interp(za, self.knots, self.levels)
        else:
            idx = np.searchsorted(self.knots, za, side="right") - 1
            out = self.levels[np.clip(idx, 0, self.levels.size - 1)]
        return float(out) if scalar else out

    def value_left(self, z):
        """Left-hand limit at ``z`` (differs from ``__call__`` only at step knots)."""
        za, scalar = _scalar_or_array(z)
        if self.mode == "linear":
            out = np.interp(za, self.knots, self.levels)
        else:
            idx = np.searchsorted(self.knots, za, side="left") - 1
            out = self.levels[np.clip(idx, 0, self.levels.size - 1)]
        return float(out) if scalar else out

    def slope(self, z):
        """Piecewise slope; at a knot the left interval's slope is used.

        Step mode and points outside the knot range report slope zero.
        """
        za, scalar = _scalar_or_array(z)
        if self.mode == "step" or self.knots.size < 2:
            out = np.zeros_like(np.atleast_1d(za))
            return 0.0 if scalar else out
        seg = np.diff(self.levels) / np.diff(self.knots)
        idx = np.searchsorted(self.knots, za, side="left") - 1
        valid = (idx >= 0) & (idx <= seg.size - 1)
        out = np.where(valid, seg[np.clip(idx, 0, seg.size - 1)], 0.0)
        return float(out) if scalar else out


@dataclass
class LcmResult:
    """Least concave majorant of gridded values.

    majorant: the hull as a piecewise-linear grid function
    right_derivative: hull slope immediately right of each grid point
      (the final entry repeats the last segment's slope)
    touch_set: whether the hull touches the input at each grid point
    """

    majorant: GridFunction
    right_derivative: np.ndarray
    touch_set: np.ndarray


class ConvexLoss:
    """Convex loss exposed as value, derivative, and second derivative."""

    def __init__(self, value, derivative, second_derivative):
        self._value = value
        self._derivative = derivative
        self._second_derivative = second_derivative

    def __call__(self, z):
        za, scalar = _scalar_or_array(z)
        out = self._value(za)
        return float(np.squeeze(out)) if scalar else np.asarray(out, dtype=float)

    def derivative(self, z):
        za, scalar = _scalar_or_array(z)
        out = self._derivative(za)
        return float(np.squeeze(out)) if scalar else np.asarray(out, dtype=float)

    def second_derivative(self, z):
        za, scalar = _scalar_or_array(z)
        out = self._second_derivative(za)
        return float(np.squeeze(out)) if scalar else np.asarray(out, dtype=float)


def lcm(xs, ys) -> LcmResult:
    """Least concave majorant of the points ``(xs[i], ys[i])``.

    Uses a single upper-hull scan; the majorant agrees with the input at
    hull vertices and interpolates linearly between them.
    """
    xs = _as_float_vector(xs, "xs")
    ys = _as_float_vector(ys, "ys")
    if xs.size != ys.size:
        raise InvalidInputError("xs and ys must have equal length")
    if xs.size < 2:
        raise InvalidInputError("need at least two points")
    if np.any(np.diff(xs) <= 0):
        raise InvalidInputError("xs must be strictly increasing")

    hull = [0]
    for i in range(1, xs.size):
        while len(hull) >= 2:
            a = hull[-2]
            b = hull[-1]
            cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (
                xs[i] - xs[a]
            )
            if cross >= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)

    hull_idx = np.asarray(hull)
    hx = xs[hull_idx]
    hy = ys[hull_idx]
    majorant_values = np.interp(xs, hx, hy)
    # vertices are exact; interpolation noise elsewhere cannot push below ys
    majorant_values[hull_idx] = hy
    seg_slopes = np.diff(hy) / np.diff(hx)
    # hull construction guarantees monotone slopes up to roundoff
    seg_slopes = np.minimum.accumulate(seg_slopes)
    seg = np.clip(np.searchsorted(hx, xs, side="right") - 1, 0, seg_slopes.size - 1)
    right_derivative = seg_slopes[seg]
    scale = max(1.0, float(np.max(np.abs(ys))))
    touch = np.abs(majorant_values - ys) <= 1e-12 * scale
    return LcmResult(
        majorant=GridFunction(xs, majorant_values),
        right_derivative=right_derivative,
        touch_set=touch,
    )


def _pava_increasing(ys: np.ndarray, w: np.ndarray) -> np.ndarray:
    vals: list[float] = []
    weights: list[float] = []
    counts: list[int] = []
    for y_i, w_i in zip(ys, w):
        cv = float(y_i)
        cw = float(w_i)
        cn = 1
        while vals and vals[-1] > cv:
            pv = vals.pop()
            pw = weights.pop()
            pn = counts.pop()
            cv = (cv * cw + pv * pw) / (cw + pw)
            cw += pw
            cn += pn
        vals.append(cv)
        weights.append(cw)
        counts.append(cn)
    return np.repeat(vals, counts)


def pava_decreasing(ys, weights=None) -> np.ndarray:
    """Weighted least-squares projection onto non-increasing sequences."""
    ys = _as_float_vector(ys, "ys")
    if ys.size == 0:
        raise InvalidInputError("ys must be non-empty")
    if weights is None:
        w = np.ones(ys.size)
    else:
        w = _as_float_vector(weights, "weights")
        if w.size != ys.size:
            raise InvalidInputError("weights must match ys in length")
        if np.any(w <= 0):
            raise InvalidInputError("weights must be positive")
    return -_pava_increasing(-ys, w)


def antitonic_project(xs, ys, weights=None) -> MonotoneScore:
    """Project scattered points onto non-increasing functions of ``x``.

    Points are sorted by ``x``; exact ties are merged by weighted
    averaging before the pooled decreasing regression. The result is a
    right-continuous step function with knots at the distinct ``x``.
    """
    xs = _as_float_vector(xs, "xs")
    ys = _as_float_vector(ys, "ys")
    if xs.size == 0:
        raise InvalidInputError("xs must be non-empty")
    if xs.size != ys.size:
        raise InvalidInputError("xs and ys must have equal length")
    if weights is None:
        w = np.ones(xs.size)
    else:
        w = _as_float_vector(weights, "weights")
        if w.size != xs.size:
            raise InvalidInputError("weights must match xs in length")
        if np.any(w <= 0):
            raise InvalidInputError("weights must be positive")
    unique_x, inverse = np.unique(xs, return_inverse=True)
    w_grouped = np.bincount(inverse, weights=w)
    y_grouped = np.bincount(inverse, weights=w * ys) / w_grouped
    fitted = pava_decreasing(y_grouped, w_grouped)
    return MonotoneScore(unique_x, fitted, mode="step")


def negative_antiderivative(score: MonotoneScore, anchor: float = 0.0) -> ConvexLoss:
    """Convex loss ``z -> -∫_anchor^z score``.

    The integral is evaluated in closed form from the score's piecewise
    representation, so the loss is exactly piecewise linear (step score)
    or piecewise quadratic (linear score).
    """
    if not isinstance(score, MonotoneScore):
        raise InvalidInputError("score must be a MonotoneScore")
    anchor = float(anchor)
    if not np.isfinite(anchor):
        raise InvalidInputError("anchor must be finite")
    k = score.knots
    v = score.levels
    n_knots = k.size
    if n_knots >= 2:
        if score.mode == "linear":
            seg_int = (v[:-1] + v[1:]) / 2.0 * np.diff(k)
            seg_slope = np.diff(v) / np.diff(k)
        else:
            seg_int = v[:-1] * np.diff(k)
            seg_slope = np.zeros(n_knots - 1)
    else:
        seg_int = np.zeros(0)
        seg_slope = np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(seg_int)])
    slope_ext = np.concatenate([seg_slope, [0.0]])

    def antider(za: np.ndarray) -> np.ndarray:
        za = np.atleast_1d(za)
        idx = np.searchsorted(k, za, side="right") - 1
        idx_c = np.clip(idx, 0, n_knots - 1)
        t = za - k[idx_c]
        quad = np.where(idx < 0, 0.0, slope_ext[idx_c])
        return cum[idx_c] + v[idx_c] * t + 0.5 * quad * t * t

    shift = float(antider(np.asarray(anchor))[0])

    def value(za):
        return shift - antider(za)

    def derivative(za):
        return -score(za)

    def second_derivative(za):
        return -score.slope(za)

    return ConvexLoss(value, derivative, second_derivative)
