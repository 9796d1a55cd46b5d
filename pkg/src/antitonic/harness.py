"""Monte Carlo experiment engine behind the command-line front end.

Data generating process: covariate rows are standard normal around the
all-ones vector, the slope vector is drawn uniformly from a centred
sphere, the intercept is fixed, and errors come from a named reference
density.  Replication r uses the dedicated stream default_rng([seed, r])
and results are reduced in replication order, so every report is
independent of the worker count.  Squared-error comparisons between
estimators cover the slope coefficients only, because pilots with
different centring conventions target different intercepts.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.random import default_rng

from .densities import ReferenceDensity, density_from_spec
from .errors import AntitonicError, InvalidInputError
from .inference import confidence_ellipsoid, confidence_intervals
from .projection import projected_score_closed_form, projected_score_numeric
from .regression import (
    FitConfig,
    RegressionData,
    alternating_fit,
    asm_fit,
    asm_fit_crossfit,
    fit_pilot,
    one_step_fit,
    solve_convex_m,
)

ESTIMATORS = ("oracle", "asm", "alt", "1s", "lad", "ols")

_ORACLE_GRID = 2049
_REFERENCE_GRID = 8193


@dataclass(frozen=True)
class ExperimentSpec:
    """One batch of replications: noise family, sizes, estimators, seeds."""

    noise: str = "gaussian"
    n: int = 600
    d: int = 6
    reps: int = 200
    seed: int = 0
    estimators: tuple = ESTIMATORS
    mode: str = "intercept"
    zeta: str = "mean"
    out: str | None = None
    mu0: float = 2.0
    theta_radius: float = 3.0
    redraw_theta: bool = False
    threads: int = 1
    config: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self) -> None:
        if int(self.reps) < 1:
            raise InvalidInputError("reps must be at least 1")
        if not int(self.n) > int(self.d):
            raise InvalidInputError("need n > d")
        if int(self.d) < 2:
            raise InvalidInputError("need d >= 2 (at least one slope)")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise InvalidInputError(
                f"unknown estimators {unknown}; choose from {list(ESTIMATORS)}"
            )
        if not self.estimators:
            raise InvalidInputError("need at least one estimator")
        if int(self.threads) < 1:
            raise InvalidInputError("threads must be at least 1")

    @property
    def slopes(self) -> int:
        return int(self.d) - 1


def draw_theta(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """Uniform draw from the centred sphere of the given radius."""
    while True:
        g = rng.normal(size=dim)
        norm = float(np.linalg.norm(g))
        if norm > 1e-12:
            return radius * g / norm


def batch_theta(spec: ExperimentSpec) -> np.ndarray:
    """The slope vector shared by every replication of a batch."""
    return draw_theta(default_rng([spec.seed]), spec.slopes, spec.theta_radius)


def make_dataset(
    spec: ExperimentSpec,
    density: ReferenceDensity,
    rng: np.random.Generator,
    theta0: np.ndarray,
) -> RegressionData:
    xt = rng.normal(loc=1.0, size=(spec.n, spec.slopes))
    eps = density.sample(spec.n, rng)
    x = np.column_stack([xt, np.ones(spec.n)])
    return RegressionData(x, xt @ theta0 + spec.mu0 + eps)


def oracle_loss_for(density: ReferenceDensity):
    """Convex loss induced by the density's own projected score."""
    try:
        return projected_score_closed_form(density.name, density.params).loss()
    except InvalidInputError:
        return projected_score_numeric(density, _ORACLE_GRID).loss()


def reference_i_star(density: ReferenceDensity) -> float:
    try:
        return projected_score_closed_form(density.name, density.params).i_star
    except InvalidInputError:
        return projected_score_numeric(density, _REFERENCE_GRID).i_star


def _effective_config(spec: ExperimentSpec) -> FitConfig:
    zeta, tau = spec.zeta, spec.config.tau
    if zeta.startswith("quantile:"):
        zeta, tau = "quantile", float(zeta.split(":", 1)[1])
    return replace(spec.config, mode=spec.mode, zeta=zeta, tau=tau)


def run_estimator(name: str, data: RegressionData, config: FitConfig, oracle_loss):
    if name in ("ols", "lad"):
        return fit_pilot(data, name).beta
    if name == "oracle":
        if oracle_loss is None:
            raise InvalidInputError("oracle estimator needs an oracle loss")
        init = fit_pilot(data, "ols").beta
        return solve_convex_m(data, oracle_loss, init=init).beta
    if name == "asm":
        if config.folds != "none":
            return asm_fit_crossfit(data, config).beta
        return asm_fit(data, config).beta
    if name == "alt":
        return alternating_fit(data, config).beta
    if name == "1s":
        return one_step_fit(data, config).beta
    raise InvalidInputError(f"unknown estimator {name!r}")


def _map_reps(spec: ExperimentSpec, worker):
    """Run worker(rep) for every replication, preserving order."""
    reps = range(spec.reps)
    if spec.threads <= 1:
        return [worker(r) for r in reps]
    with ThreadPoolExecutor(max_workers=spec.threads) as pool:
        return list(pool.map(worker, reps))


@dataclass(frozen=True)
class MseRow:
    estimator: str
    reps: int
    failures: int
    mse: float
    mse_x1000: float
    mc_se: float
    time_mean_s: float
    time_median_s: float


def run_mse_experiment(spec: ExperimentSpec) -> list[MseRow]:
    """Slope-error comparison of the requested estimators, one row each."""
    density = density_from_spec(spec.noise)
    config = _effective_config(spec)
    needs_oracle = "oracle" in spec.estimators
    oracle_loss = oracle_loss_for(density) if needs_oracle else None
    theta_fixed = batch_theta(spec)
    k = spec.slopes

    def one_rep(rep: int):
        rng = default_rng([spec.seed, rep])
        theta0 = (
            draw_theta(rng, k, spec.theta_radius)
            if spec.redraw_theta
            else theta_fixed
        )
        data = make_dataset(spec, density, rng, theta0)
        out = {}
        for name in spec.estimators:
            start = time.perf_counter()
            try:
                beta = run_estimator(name, data, config, oracle_loss)
                err = float(np.sum((beta[:k] - theta0) ** 2))
            except (AntitonicError, np.linalg.LinAlgError):
                err = None
            out[name] = (err, time.perf_counter() - start)
        return out

    results = _map_reps(spec, one_rep)

    rows = []
    for name in spec.estimators:
        errs = np.array(
            [r[name][0] for r in results if r[name][0] is not None], dtype=float
        )
        times = np.array([r[name][1] for r in results], dtype=float)
        failures = spec.reps - errs.size
        if errs.size:
            mse = float(errs.mean())
            se = float(errs.std(ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else 0.0
        else:
            mse, se = float("nan"), float("nan")
        rows.append(
            MseRow(
                estimator=name,
                reps=spec.reps,
                failures=failures,
                mse=mse,
                mse_x1000=1000.0 * mse,
                mc_se=se,
                time_mean_s=float(times.mean()),
                time_median_s=float(np.median(times)),
            )
        )
    return rows


@dataclass(frozen=True)
class CoverageResult:
    """Confidence-set calibration over a replication batch.

    Per level: marginal interval coverage for each slope, joint ellipsoid
    coverage for the fitted loss and for least squares.  Batch-wide: the
    mean ratio of ellipsoid volumes (level independent, both sets use the
    same chi-square law) and the quality of the plug-in information
    estimate against its large-grid reference value.
    """

    levels: tuple
    slope_names: tuple
    interval_coverage: dict
    ellipsoid_coverage: dict
    ols_ellipsoid_coverage: dict
    volume_ratio_mean: float
    i_star_ref: float
    i_star_hat_mean: float
    i_star_hat_rmse: float
    reps: int
    failures: int


def run_coverage_experiment(
    spec: ExperimentSpec, alpha_levels=(0.05,)
) -> CoverageResult:
    levels = tuple(float(a) for a in alpha_levels)
    for a in levels:
        if not 0.0 < a < 1.0:
            raise InvalidInputError("alpha levels must lie in (0, 1)")
    if not levels:
        raise InvalidInputError("need at least one alpha level")
    density = density_from_spec(spec.noise)
    config = _effective_config(spec)
    theta_fixed = batch_theta(spec)
    k = spec.slopes

    def one_rep(rep: int):
        rng = default_rng([spec.seed, rep])
        theta0 = (
            draw_theta(rng, k, spec.theta_radius)
            if spec.redraw_theta
            else theta_fixed
        )
        data = make_dataset(spec, density, rng, theta0)
        try:
            if config.folds != "none":
                fit = asm_fit_crossfit(data, config)
            else:
                fit = asm_fit(data, config)
            i_hat = fit.i_star_hat
            if i_hat is None or not np.isfinite(i_hat) or i_hat <= 0.0:
                return None
            xt = data.design[:, :k]
            xc = xt - xt.mean(axis=0)
            gram_c = xc.T @ xc
            info_fit = i_hat * gram_c
            ols = fit_pilot(data, "ols")
            sigma2 = float(np.mean(ols.residuals**2))
            if sigma2 <= 0.0:
                return None
            info_ols = gram_c / sigma2
            theta_hat = fit.beta[:k]
            theta_ols = ols.beta[:k]
            cov_fit = np.linalg.inv(info_fit)
            per_level = {}
            ratio = None
            for a in levels:
                ival = confidence_intervals(theta_hat, cov_fit, a)
                covered = (ival[:, 0] <= theta0) & (theta0 <= ival[:, 1])
                e_fit = confidence_ellipsoid(theta_hat, info_fit, a)
                e_ols = confidence_ellipsoid(theta_ols, info_ols, a)
                if ratio is None:
                    ratio = e_fit.volume / e_ols.volume
                per_level[a] = (
                    covered,
                    e_fit.contains(theta0),
                    e_ols.contains(theta0),
                )
            return {"i_hat": float(i_hat), "ratio": float(ratio), "levels": per_level}
        except (AntitonicError, np.linalg.LinAlgError):
            return None

    results = _map_reps(spec, one_rep)
    kept = [r for r in results if r is not None]
    failures = spec.reps - len(kept)
    if not kept:
        raise InvalidInputError("every replication failed; nothing to report")

    i_ref = reference_i_star(density)
    i_hats = np.array([r["i_hat"] for r in kept])
    ratios = np.array([r["ratio"] for r in kept])
    interval_cov, ell_cov, ols_cov = {}, {}, {}
    for a in levels:
        coords = np.array([r["levels"][a][0] for r in kept], dtype=float)
        interval_cov[a] = coords.mean(axis=0)
        ell_cov[a] = float(np.mean([r["levels"][a][1] for r in kept]))
        ols_cov[a] = float(np.mean([r["levels"][a][2] for r in kept]))

    return CoverageResult(
        levels=levels,
        slope_names=tuple(f"x{j + 1}" for j in range(k)),
        interval_coverage=interval_cov,
        ellipsoid_coverage=ell_cov,
        ols_ellipsoid_coverage=ols_cov,
        volume_ratio_mean=float(ratios.mean()),
        i_star_ref=float(i_ref),
        i_star_hat_mean=float(i_hats.mean()),
        i_star_hat_rmse=float(np.sqrt(np.mean((i_hats - i_ref) ** 2))),
        reps=spec.reps,
        failures=failures,
    )


def simulate_rows(spec: ExperimentSpec):
    """Header and rows for one simulated dataset (replication 0's stream)."""
    density = density_from_spec(spec.noise)
    theta0 = batch_theta(spec)
    rng = default_rng([spec.seed, 0])
    if spec.redraw_theta:
        theta0 = draw_theta(rng, spec.slopes, spec.theta_radius)
    data = make_dataset(spec, density, rng, theta0)
    header = [f"x{j + 1}" for j in range(spec.slopes)] + ["y"]
    body = np.column_stack([data.design[:, : spec.slopes], data.response])
    return header, body, theta0


def csv_cell(value) -> str:
    """Shortest decimal that round-trips the value exactly."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(stream, header, rows) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow([str(h) for h in header])
    for row in rows:
        writer.writerow([csv_cell(v) for v in row])


def mse_csv_rows(rows: list[MseRow]):
    header = ["estimator", "reps", "failures", "mse", "mse_x1000", "mc_se"]
    body = [
        [r.estimator, r.reps, r.failures, r.mse, r.mse_x1000, r.mc_se] for r in rows
    ]
    return header, body


def timing_csv_rows(rows: list[MseRow]):
    header = ["estimator", "time_mean_s", "time_median_s"]
    body = [[r.estimator, r.time_mean_s, r.time_median_s] for r in rows]
    return header, body


def coverage_csv_rows(result: CoverageResult):
    header = (
        ["level"]
        + [f"cover_{name}" for name in result.slope_names]
        + [
            "cover_ellipsoid",
            "cover_ellipsoid_ols",
            "volume_ratio_mean",
            "i_star_ref",
            "i_star_hat_mean",
            "i_star_hat_rmse",
            "reps",
            "failures",
        ]
    )
    body = []
    for a in result.levels:
        body.append(
            [a]
            + [float(c) for c in result.interval_coverage[a]]
            + [
                result.ellipsoid_coverage[a],
                result.ols_ellipsoid_coverage[a],
                result.volume_ratio_mean,
                result.i_star_ref,
                result.i_star_hat_mean,
                result.i_star_hat_rmse,
                result.reps,
                result.failures,
            ]
        )
    return header, body
