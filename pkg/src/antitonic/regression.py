"""Convex M-estimation engine and the estimator pipelines built on it.

The core solver is a damped Newton iteration with an adaptive identity
ridge and Armijo backtracking, adequate both for classical smooth losses
and for the piecewise-quadratic losses induced by monotone score
estimates.  On top of it sit the pilot estimators (OLS, LAD, Huber), the
single-pass data-driven fit, its three-fold cross-fitted variants for
symmetric and intercept models, the alternating refinement, and the
one-step baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import inference
from .errors import (
    DegenerateSampleError,
    InvalidInputError,
    StalledSolverError,
)
from .monotone import ConvexLoss, MonotoneScore, negative_antiderivative
from .score_estimation import (
    TruncationParams,
    antisymmetrize,
    empirical_score_matching_objective,
    kde,
    projected_score_estimate,
    truncated_score,
)

_MODES = ("plain", "symmetric", "intercept")
_FOLD_CHOICES = ("none", "three-fold")
_CROSSFIT_CHOICES = ("average", "pooled")
_PILOTS = ("ols", "lad", "huber")

_RANK_TOL = 1e-10
_RIDGE_TRIGGER = 1e-8
_ARMIJO_C1 = 1e-4
_MAX_HALVINGS = 60
_LAD_FLOOR = 1e-8
_LAD_MAX_ITER = 200
_LAD_REL_TOL = 1e-10
_ALT_MAX_ITER = 50
_ALT_REL_TOL = 1e-6
_COLLAPSE_TOL = 1e-12


def _pivoted_cholesky_pivots(gram: np.ndarray) -> np.ndarray:
    # greedy diagonal pivoting; pivots are the Schur-complement diagonals
    g = np.array(gram, dtype=float, copy=True)
    d = g.shape[0]
    active = np.ones(d, dtype=bool)
    pivots = np.zeros(d)
    for k in range(d):
        diag = np.where(active, np.diag(g), -np.inf)
        j = int(np.argmax(diag))
        pj = float(diag[j])
        pivots[k] = pj
        if pj <= 0.0:
            pivots[k + 1 :] = 0.0
            break
        active[j] = False
        col = np.where(active, g[:, j], 0.0)
        g -= np.outer(col, col) / pj
    return pivots


def _is_rank_deficient(design: np.ndarray) -> bool:
    pivots = _pivoted_cholesky_pivots(design.T @ design)
    # pivots live on the squared column-norm scale
    return bool(pivots[-1] <= (_RANK_TOL**2) * pivots[0]) or not np.all(
        pivots > 0.0
    )


@dataclass(eq=False)
class RegressionData:
    """Design matrix and response vector for a linear model.

    In intercept mode the last design column is all ones.  The design is
    required to have full column rank, checked through a pivoted
    factorization with tolerance 1e-10 relative to the largest pivot.
    """

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float)
        if x.ndim != 2:
            raise InvalidInputError("design must be a 2-d array")
        if y.ndim != 1:
            raise InvalidInputError("response must be a 1-d array")
        n, d = x.shape
        if y.size != n:
            raise InvalidInputError("design and response lengths differ")
        if not (n > d >= 1):
            raise InvalidInputError("need n > d >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInputError("design and response must be finite")
        if _is_rank_deficient(x):
            raise InvalidInputError("design is rank deficient")
        self.design = x
        self.response = y

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def d(self) -> int:
        return self.design.shape[1]


@dataclass(eq=False)
class SolverOptions:
    """Damped-Newton controls: iteration cap, gradient tolerance, ridge."""

    max_iter: int = 100
    grad_tol: float = 1e-9
    hessian_ridge: float = 1.0
    always_ridge: bool = False

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be positive")
        if not (self.grad_tol > 0.0 and np.isfinite(self.grad_tol)):
            raise InvalidInputError("grad_tol must be positive")
        if not (self.hessian_ridge > 0.0 and np.isfinite(self.hessian_ridge)):
            raise InvalidInputError("hessian_ridge must be positive")


@dataclass(eq=False)
class FitConfig:
    """Pipeline configuration shared by all data-driven fits."""

    mode: str = "symmetric"
    folds: str = "none"
    crossfit: str = "average"
    pilot: str = "lad"
    huber_k: float = 1.345
    kernel: str = "gaussian"
    bandwidth: float | str = "auto"
    truncation: TruncationParams | None = None
    grid_size: int = 2049
    zeta: str = "mean"
    tau: float = 0.5
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.folds not in _FOLD_CHOICES:
            raise InvalidInputError(f"unknown folds choice {self.folds!r}")
        if self.crossfit not in _CROSSFIT_CHOICES:
            raise InvalidInputError(f"unknown crossfit {self.crossfit!r}")
        if self.pilot not in _PILOTS:
            raise InvalidInputError(f"unknown pilot {self.pilot!r}")
        if not (self.huber_k > 0.0 and np.isfinite(self.huber_k)):
            raise InvalidInputError("huber_k must be positive")
        if self.zeta not in ("mean", "quantile"):
            raise InvalidInputError(f"unknown zeta {self.zeta!r}")
        if not 0.0 < self.tau < 1.0:
            raise InvalidInputError("tau must lie in (0, 1)")
        if self.grid_size < 64:
            raise InvalidInputError("grid_size must be at least 64")


@dataclass(eq=False)
class FitResult:
    """Solution of one fit together with its optimality certificate."""

    beta: np.ndarray
    objective_trace: np.ndarray
    residuals: np.ndarray
    i_star_hat: float | None
    upsilon_hat: float | None
    score_at_optimum: np.ndarray
    converged: bool
    iterations: int
    score: MonotoneScore | None = None
    score_residuals: np.ndarray | None = None
    pilot_beta: np.ndarray | None = None
    fold_betas: list | None = None
    folds: list | None = None
    flag: str | None = None


def huber_loss(k: float) -> ConvexLoss:
    """Quadratic loss inside [-k, k], linear continuation outside."""

    k = float(k)
    if not (k > 0.0 and np.isfinite(k)):
        raise InvalidInputError("huber threshold must be positive")

    def value(z):
        z = np.asarray(z, dtype=float)
        a = np.abs(z)
        return np.where(a <= k, 0.5 * z * z, k * a - 0.5 * k * k)

    def derivative(z):
        return np.clip(np.asarray(z, dtype=float), -k, k)

    def second_derivative(z):
        return (np.abs(np.asarray(z, dtype=float)) <= k).astype(float)

    return ConvexLoss(value, derivative, second_derivative)


def squared_loss() -> ConvexLoss:
    return ConvexLoss(
        lambda z: 0.5 * np.square(np.asarray(z, dtype=float)),
        lambda z: np.asarray(z, dtype=float),
        lambda z: np.ones_like(np.asarray(z, dtype=float)),
    )


def _objective_value(groups, beta: np.ndarray) -> float:
    total = 0.0
    for x, y, loss in groups:
        total += float(np.sum(loss(y - x @ beta)))
    return total


def _objective_state(groups, beta: np.ndarray):
    d = beta.size
    val = 0.0
    grad = np.zeros(d)
    hess = np.zeros((d, d))
    for x, y, loss in groups:
        r = y - x @ beta
        val += float(np.sum(loss(r)))
        lp = np.asarray(loss.derivative(r), dtype=float)
        grad -= x.T @ lp
        w = np.asarray(loss.second_derivative(r), dtype=float)
        hess += (x * w[:, None]).T @ x
    # grad equals the estimating-equation residual sum_i x_i psi(r_i)
    return val, grad, hess


def _newton_minimize(groups, init: np.ndarray, opts: SolverOptions):
    beta = np.array(init, dtype=float, copy=True)
    d = beta.size
    trace: list[float] = []
    converged = False
    iterations = 0
    for _ in range(opts.max_iter):
        val, grad, hess = _objective_state(groups, beta)
        trace.append(val)
        if np.linalg.norm(grad) <= opts.grad_tol * (1.0 + np.linalg.norm(beta)):
            converged = True
            break
        iterations += 1
        h = hess
        if opts.always_ridge:
            h = h + opts.hessian_ridge * np.eye(d)
        else:
            pivots = _pivoted_cholesky_pivots(h)
            if pivots[-1] < _RIDGE_TRIGGER * np.trace(h) / d:
                h = h + opts.hessian_ridge * np.eye(d)
        try:
            step = np.linalg.solve(h, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(h + opts.hessian_ridge * np.eye(d), -grad)
        slope = float(grad @ step)
        t = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            cand = beta + t * step
            if _objective_value(groups, cand) <= val + _ARMIJO_C1 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # a descent prediction below float resolution means the
            # iterate already sits at the attainable optimum
            if abs(slope) <= 1e-9 * (1.0 + abs(val)):
                converged = True
                break
            raise StalledSolverError(
                "line search made no progress after 60 halvings",
                trace=trace,
            )
        beta = beta + t * step
    final_val, final_grad, _ = _objective_state(groups, beta)
    if not trace or final_val != trace[-1]:
        trace.append(final_val)
    if not converged:
        converged = np.linalg.norm(final_grad) <= opts.grad_tol * (
            1.0 + np.linalg.norm(beta)
        )
    return beta, np.asarray(trace), final_grad, converged, iterations


def solve_convex_m(
    data: RegressionData,
    loss: ConvexLoss,
    init=None,
    solver: SolverOptions | None = None,
) -> FitResult:
    """Minimize ``sum_i loss(y_i - x_i' beta)`` by damped Newton steps.

    The Hessian gains an identity ridge whenever its smallest pivot drops
    below 1e-8 of the average diagonal, and steps are halved under an
    Armijo test.  Iteration stops once the gradient norm falls below
    ``grad_tol * (1 + |beta|)``.
    """

    if not isinstance(data, RegressionData):
        data = RegressionData(*data)
    opts = solver if solver is not None else SolverOptions()
    if init is None:
        init = np.zeros(data.d)
    init = np.asarray(init, dtype=float)
    if init.shape != (data.d,):
        raise InvalidInputError("init must have one entry per design column")
    groups = [(data.design, data.response, loss)]
    beta, trace, grad, converged, iters = _newton_minimize(groups, init, opts)
    return FitResult(
        beta=beta,
        objective_trace=trace,
        residuals=data.response - data.design @ beta,
        i_star_hat=None,
        upsilon_hat=None,
        score_at_optimum=grad,
        converged=converged,
        iterations=iters,
    )


def _fit_ols(data: RegressionData) -> FitResult:
    beta, *_ = np.linalg.lstsq(data.design, data.response, rcond=None)
    r = data.response - data.design @ beta
    return FitResult(
        beta=beta,
        objective_trace=np.asarray([0.5 * float(r @ r)]),
        residuals=r,
        i_star_hat=None,
        upsilon_hat=None,
        score_at_optimum=-data.design.T @ r,
        converged=True,
        iterations=1,
    )


def _fit_lad(data: RegressionData) -> FitResult:
    # iteratively reweighted least squares with a residual floor
    x, y = data.design, data.response
    beta = np.linalg.lstsq(x, y, rcond=None)[0]
    converged = False
    iterations = 0
    for _ in range(_LAD_MAX_ITER):
        iterations += 1
        w = 1.0 / np.maximum(np.abs(y - x @ beta), _LAD_FLOOR)
        sw = np.sqrt(w)
        new = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)[0]
        if np.linalg.norm(new - beta) <= _LAD_REL_TOL * (
            1.0 + np.linalg.norm(beta)
        ):
            beta = new
            converged = True
            break
        beta = new
    r = y - x @ beta
    return FitResult(
        beta=beta,
        objective_trace=np.asarray([float(np.sum(np.abs(r)))]),
        residuals=r,
        i_star_hat=None,
        upsilon_hat=None,
        score_at_optimum=-x.T @ np.sign(r),
        converged=converged,
        iterations=iterations,
    )


def fit_pilot(
    data: RegressionData,
    kind: str = "lad",
    huber_k: float = 1.345,
    solver: SolverOptions | None = None,
) -> FitResult:
    """Root-n-consistent initial estimators: OLS, LAD, or Huber."""

    if kind == "ols":
        return _fit_ols(data)
    if kind == "lad":
        return _fit_lad(data)
    if kind == "huber":
        init = np.linalg.lstsq(data.design, data.response, rcond=None)[0]
        return solve_convex_m(data, huber_loss(huber_k), init, solver)
    raise InvalidInputError(f"unknown pilot kind {kind!r}")


def fit_intercept(residual_base, zeta: str = "mean", tau: float = 0.5) -> float:
    """Location step for the intercept: mean or lower-interpolated quantile."""

    r = np.asarray(residual_base, dtype=float)
    if r.size == 0:
        raise InvalidInputError("empty residual vector")
    if zeta == "mean":
        return float(np.mean(r))
    if zeta == "quantile":
        if not 0.0 < tau < 1.0:
            raise InvalidInputError("tau must lie in (0, 1)")
        return float(np.quantile(r, tau, method="lower"))
    raise InvalidInputError(f"unknown zeta {zeta!r}")


def _score_is_one_sided(score: MonotoneScore) -> bool:
    # the induced loss is coercive only when the score changes sign
    return bool(score.levels.min() >= 0.0 or score.levels.max() <= 0.0)


def _collapsed_value(resid: np.ndarray) -> float | None:
    # residuals within float resolution of a single point carry no shape
    # information; report the common value so callers can absorb it
    lo = float(np.min(resid))
    hi = float(np.max(resid))
    if hi - lo <= _COLLAPSE_TOL * (1.0 + max(abs(lo), abs(hi))):
        return 0.5 * (lo + hi)
    return None


def _estimate_score(residuals, config: FitConfig, antisym: bool):
    model = kde(residuals, config.kernel, config.bandwidth)
    score = projected_score_estimate(model, config.truncation, config.grid_size)
    if antisym:
        score = antisymmetrize(score)
    return score


def _pilot_result(data: RegressionData, config: FitConfig) -> FitResult:
    return fit_pilot(data, config.pilot, config.huber_k, config.solver)


def _fallback_to_pilot(pilot: FitResult, flag: str, converged: bool) -> FitResult:
    return FitResult(
        beta=pilot.beta.copy(),
        objective_trace=pilot.objective_trace,
        residuals=pilot.residuals.copy(),
        i_star_hat=None,
        upsilon_hat=None,
        score_at_optimum=pilot.score_at_optimum,
        converged=converged,
        iterations=pilot.iterations,
        pilot_beta=pilot.beta.copy(),
        flag=flag,
    )


def _check_intercept_column(data: RegressionData) -> None:
    if data.d < 2 or not np.all(data.design[:, -1] == 1.0):
        raise InvalidInputError(
            "intercept mode requires an all-ones final design column"
        )


def asm_fit(data: RegressionData, config: FitConfig | None = None) -> FitResult:
    """Single-pass fit with a data-driven convex loss, no sample splitting.

    A pilot fit supplies residuals, a kernel density estimate of those
    residuals yields a decreasing projected score, and the induced convex
    loss is minimized by damped Newton.  In intercept mode the covariates
    are centred, the fitted location at the covariate mean is pinned to
    the pilot's value, and the intercept is re-estimated from the final
    residuals via the centring function.
    """

    config = config if config is not None else FitConfig()
    if config.mode not in ("symmetric", "intercept"):
        raise InvalidInputError("asm_fit requires symmetric or intercept mode")
    pilot = _pilot_result(data, config)
    y = data.response

    if config.mode == "symmetric":
        resid = y - data.design @ pilot.beta
        if _collapsed_value(resid) is not None:
            return _fallback_to_pilot(
                pilot, "degenerate-pilot-residuals", pilot.converged
            )
        try:
            score = _estimate_score(resid, config, antisym=True)
        except DegenerateSampleError:
            return _fallback_to_pilot(
                pilot, "degenerate-pilot-residuals", pilot.converged
            )
        if _score_is_one_sided(score):
            return _fallback_to_pilot(pilot, "degenerate-score", False)
        loss = negative_antiderivative(score)
        groups = [(data.design, y, loss)]
        beta, trace, grad, converged, iters = _newton_minimize(
            groups, pilot.beta, config.solver
        )
        return FitResult(
            beta=beta,
            objective_trace=trace,
            residuals=y - data.design @ beta,
            i_star_hat=inference.estimate_i_star(score, resid),
            upsilon_hat=None,
            score_at_optimum=grad,
            converged=converged,
            iterations=iters,
            score=score,
            score_residuals=resid,
            pilot_beta=pilot.beta.copy(),
        )

    _check_intercept_column(data)
    covars = data.design[:, :-1]
    theta_pilot = pilot.beta[:-1]
    resid = y - covars @ theta_pilot  # intercept left inside the residuals
    if _collapsed_value(y - data.design @ pilot.beta) is not None:
        return _fallback_to_pilot(
            pilot, "degenerate-pilot-residuals", pilot.converged
        )
    try:
        score = _estimate_score(resid, config, antisym=False)
    except DegenerateSampleError:
        return _fallback_to_pilot(
            pilot, "degenerate-pilot-residuals", pilot.converged
        )
    if _score_is_one_sided(score):
        return _fallback_to_pilot(pilot, "degenerate-score", False)
    loss = negative_antiderivative(score)
    xbar = covars.mean(axis=0)
    offset = float(xbar @ theta_pilot)
    groups = [(covars - xbar, y - offset, loss)]
    theta, trace, grad, converged, iters = _newton_minimize(
        groups, theta_pilot, config.solver
    )
    mu = fit_intercept(y - covars @ theta, config.zeta, config.tau)
    beta = np.concatenate([theta, [mu]])
    return FitResult(
        beta=beta,
        objective_trace=trace,
        residuals=y - data.design @ beta,
        i_star_hat=inference.estimate_i_star(score, resid),
        upsilon_hat=inference.estimate_upsilon(
            config.zeta, y - data.design @ pilot.beta, tau=config.tau
        ),
        score_at_optimum=grad,
        converged=converged,
        iterations=iters,
        score=score,
        score_residuals=resid,
        pilot_beta=pilot.beta.copy(),
    )


def _three_folds(n: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    m = n // 3
    return [perm[:m], perm[m : 2 * m], perm[2 * m :]]


def asm_fit_crossfit(
    data: RegressionData, config: FitConfig | None = None
) -> FitResult:
    """Three-fold cross-fitted variant of :func:`asm_fit`.

    Fold j supplies the pilot, fold j+1 the score estimate, and fold j+2
    the convex fit; the three fits are averaged, or the three empirical
    risks are pooled into one minimization, per ``config.crossfit``.  In
    intercept mode each fold's covariates are centred at that fold's mean
    and the intercept is re-estimated on all data at the end.
    """

    config = config if config is not None else FitConfig()
    if config.mode not in ("symmetric", "intercept"):
        raise InvalidInputError(
            "asm_fit_crossfit requires symmetric or intercept mode"
        )
    n, d = data.n, data.d
    if n < 3 * (d + 2):
        raise InvalidInputError("need n >= 3 (d + 2) for three-fold fitting")
    intercept = config.mode == "intercept"
    if intercept:
        _check_intercept_column(data)
    x, y = data.design, data.response
    covars = x[:, :-1] if intercept else x
    folds = _three_folds(n, config.seed)

    fold_betas = []
    groups = []
    pilots = []
    sq_sum = 0.0
    pilot_resid_all = np.zeros(n)
    for j in range(3):
        idx_pilot = folds[j]
        idx_score = folds[(j + 1) % 3]
        idx_fit = folds[(j + 2) % 3]
        sub = RegressionData(x[idx_pilot], y[idx_pilot])
        pilot = _pilot_result(sub, config)
        pilots.append(pilot)
        if intercept:
            theta_pilot = pilot.beta[:-1]
            resid_score = y[idx_score] - covars[idx_score] @ theta_pilot
        else:
            resid_score = y[idx_score] - x[idx_score] @ pilot.beta
        if _collapsed_value(y[idx_score] - x[idx_score] @ pilot.beta) is not None:
            full_pilot = _pilot_result(data, config)
            return _fallback_to_pilot(
                full_pilot, "degenerate-pilot-residuals", full_pilot.converged
            )
        try:
            score = _estimate_score(resid_score, config, antisym=not intercept)
        except DegenerateSampleError:
            full_pilot = _pilot_result(data, config)
            return _fallback_to_pilot(
                full_pilot, "degenerate-pilot-residuals", full_pilot.converged
            )
        if _score_is_one_sided(score):
            full_pilot = _pilot_result(data, config)
            return _fallback_to_pilot(full_pilot, "degenerate-score", False)
        loss = negative_antiderivative(score)
        if intercept:
            xbar = covars[idx_fit].mean(axis=0)
            offset = float(xbar @ theta_pilot)
            grp = (covars[idx_fit] - xbar, y[idx_fit] - offset, loss)
            init = theta_pilot
            eval_resid = y[idx_fit] - covars[idx_fit] @ theta_pilot
        else:
            grp = (x[idx_fit], y[idx_fit], loss)
            init = pilot.beta
            eval_resid = y[idx_fit] - x[idx_fit] @ pilot.beta
        groups.append(grp)
        sq_sum += float(np.sum(np.square(score(eval_resid))))
        pilot_resid_all[idx_fit] = y[idx_fit] - x[idx_fit] @ pilot.beta
        beta_j, _, _, conv_j, iters_j = _newton_minimize(
            [grp], init, config.solver
        )
        fold_betas.append((beta_j, conv_j, iters_j))

    i_star_hat = sq_sum / n
    per_fold = [b for b, _, _ in fold_betas]
    if config.crossfit == "average":
        point = np.mean(per_fold, axis=0)
        grad = np.zeros(point.size)
        trace = np.asarray([_objective_value(groups, point)])
        converged = all(c for _, c, _ in fold_betas)
        iterations = max(i for _, _, i in fold_betas)
    else:
        init = np.mean(per_fold, axis=0)
        point, trace, grad, converged, iterations = _newton_minimize(
            groups, init, config.solver
        )

    if intercept:
        mu = fit_intercept(y - covars @ point, config.zeta, config.tau)
        beta = np.concatenate([point, [mu]])
        upsilon = inference.estimate_upsilon(
            config.zeta, pilot_resid_all, tau=config.tau
        )
    else:
        beta = point
        upsilon = None
    return FitResult(
        beta=beta,
        objective_trace=trace,
        residuals=y - x @ beta,
        i_star_hat=i_star_hat,
        upsilon_hat=upsilon,
        score_at_optimum=grad,
        converged=converged,
        iterations=iterations,
        pilot_beta=np.mean([p.beta for p in pilots], axis=0),
        fold_betas=per_fold,
        folds=folds,
    )


def alternating_fit(
    data: RegressionData, config: FitConfig | None = None
) -> FitResult:
    """Alternate score estimation and joint coefficient updates.

    Starting from all-zero coefficients, each round estimates a projected
    score from the current residuals and then jointly refits every
    coefficient (intercept included) under the induced loss.  Rounds stop
    once the empirical score matching objective stabilizes.
    """

    config = config if config is not None else FitConfig()
    _check_intercept_column(data)
    x, y = data.design, data.response
    beta = np.zeros(data.d)
    trace: list[float] = []
    converged = False
    iterations = 0
    flag = None
    score = None
    score_resid = None
    for _ in range(_ALT_MAX_ITER):
        iterations += 1
        resid = y - x @ beta
        common = _collapsed_value(resid)
        if common is not None:
            # residuals collapsed to a point: absorb it into the intercept
            beta = beta.copy()
            beta[-1] += common
            converged = True
            flag = "residuals-collapsed"
            break
        model = kde(resid, config.kernel, config.bandwidth)
        new_score = projected_score_estimate(
            model, config.truncation, config.grid_size
        )
        obj = empirical_score_matching_objective(new_score, resid)
        trace.append(obj)
        score, score_resid = new_score, resid
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= _ALT_REL_TOL * (
            1.0 + abs(trace[-1])
        ):
            converged = True
            break
        if _score_is_one_sided(new_score):
            flag = "degenerate-score"
            break
        loss = negative_antiderivative(new_score)
        beta, _, _, _, _ = _newton_minimize(
            [(x, y, loss)], beta, config.solver
        )
    resid = y - x @ beta
    return FitResult(
        beta=beta,
        objective_trace=np.asarray(trace),
        residuals=resid,
        i_star_hat=(
            inference.estimate_i_star(score, score_resid)
            if score is not None
            else None
        ),
        upsilon_hat=None,
        score_at_optimum=np.zeros(data.d),
        converged=converged,
        iterations=iterations,
        score=score,
        score_residuals=score_resid,
        flag=flag,
    )


def one_step_fit(
    data: RegressionData, config: FitConfig | None = None
) -> FitResult:
    """Single cross-fitted Newton update from raw kernel score ratios.

    The pilot's residuals are split into two folds; each fold receives a
    kernel density estimate and the raw (not monotone) score ratio of the
    opposite fold is used to take one Newton step on the slope
    coefficients.  The intercept keeps its pilot value.
    """

    config = config if config is not None else FitConfig()
    _check_intercept_column(data)
    x, y = data.design, data.response
    covars = x[:, :-1]
    n = data.n
    if n < 4:
        raise InvalidInputError("need at least four observations")
    pilot = _pilot_result(data, config)
    theta_pilot = pilot.beta[:-1]
    mu_pilot = pilot.beta[-1]
    resid = y - covars @ theta_pilot - mu_pilot
    if _collapsed_value(resid) is not None:
        return _fallback_to_pilot(
            pilot, "degenerate-pilot-residuals", pilot.converged
        )
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    half = n // 2
    idx = [perm[:half], perm[half:]]
    trunc = (
        config.truncation if config.truncation is not None else TruncationParams()
    )
    models = [
        kde(resid[idx[j]], config.kernel, config.bandwidth) for j in range(2)
    ]
    scores = [truncated_score(models[j], trunc) for j in range(2)]
    d1 = covars.shape[1]
    a = np.zeros((d1, d1))
    b = np.zeros(d1)
    for j in range(2):
        other = scores[1 - j]
        vals = other(resid[idx[j]])
        xj = covars[idx[j]]
        a += (xj * np.square(vals)[:, None]).T @ xj
        b += xj.T @ vals
    flag = None
    pivots = _pivoted_cholesky_pivots(a)
    if pivots[-1] <= 1e-12 * max(pivots[0], 1.0):
        a = a + 1e-8 * np.eye(d1)
        flag = "ridged-gram"
    theta = theta_pilot - np.linalg.solve(a, b)
    beta = np.concatenate([theta, [mu_pilot]])
    return FitResult(
        beta=beta,
        objective_trace=np.asarray([]),
        residuals=y - x @ beta,
        i_star_hat=None,
        upsilon_hat=None,
        score_at_optimum=np.zeros(data.d),
        converged=True,
        iterations=1,
        pilot_beta=pilot.beta.copy(),
        folds=idx,
        flag=flag,
    )
