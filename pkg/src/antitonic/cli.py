"""Command-line front end.

Subcommands: simulate (write a dataset), fit (lm-style summary of one
CSV), mse-compare (estimator error table), coverage (confidence-set
calibration), oracle (information report and curve export for a named
density).  Flags beat config-file entries, which beat defaults.  Exit
codes: 0 ok, 2 usage, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from contextlib import nullcontext

import numpy as np

from . import __version__
from .densities import density_from_spec
from .errors import (
    AntitonicError,
    DataError,
    DegenerateSampleError,
    DomainError,
    InvalidDensityError,
    InvalidInputError,
    NumericError,
)
from .harness import (
    ESTIMATORS,
    ExperimentSpec,
    coverage_csv_rows,
    csv_cell,
    mse_csv_rows,
    run_coverage_experiment,
    run_mse_experiment,
    simulate_rows,
    timing_csv_rows,
    write_csv,
)
from .inference import inference_summary
from .projection import (
    fisher_divergence_projection,
    projected_score_closed_form,
    projected_score_numeric,
    two_sided_hazard,
    v_cq,
)
from .regression import FitConfig, RegressionData, asm_fit, asm_fit_crossfit
from .score_estimation import TruncationParams


class UsageError(Exception):
    """A flag or config value that cannot be acted on."""


_DEFAULTS = {
    "mode": "intercept",
    "folds": "none",
    "crossfit": "avg",
    "pilot": "lad",
    "zeta": "mean",
    "kernel": "gaussian",
    "bandwidth": "silverman",
    "grid": None,
    "alpha": "0.05",
    "gamma": None,
    "seed": 0,
    "threads": None,
    "out": None,
    "noise": "gaussian",
    "n": 600,
    "d": 6,
    "reps": 200,
    "estimators": ",".join(ESTIMATORS),
    "redraw_theta": False,
    "timing_out": None,
    "points": 401,
}

_INT_KEYS = {"grid", "seed", "threads", "n", "d", "reps", "points"}
_FLOAT_KEYS = {"gamma"}
_BOOL_KEYS = {"redraw_theta"}


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--mode", choices=["plain", "symmetric", "intercept"])
    shared.add_argument("--folds", choices=["none", "three"])
    shared.add_argument("--crossfit", choices=["avg", "pooled"])
    shared.add_argument("--pilot", help="ols | lad | huber:K")
    shared.add_argument("--zeta", help="mean | quantile:TAU")
    shared.add_argument("--kernel", choices=["gaussian", "quartic"])
    shared.add_argument("--bandwidth", help="silverman | positive float")
    shared.add_argument("--grid", type=int, help="score-estimation grid size")
    shared.add_argument("--alpha", help="level(s) in (0,1), comma separated")
    shared.add_argument("--gamma", type=float, help="score truncation floor")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--threads", type=int, help="worker count (default: all)")
    shared.add_argument("--out", help="CSV output path (default: stdout)")
    shared.add_argument("--config", help="flat key=value file; flags win")

    batch = argparse.ArgumentParser(add_help=False)
    batch.add_argument("--noise", help="density spec, e.g. cauchy or gaussian_mix:...")
    batch.add_argument("--n", type=int)
    batch.add_argument("--d", type=int, help="columns including the intercept")
    batch.add_argument(
        "--redraw-theta",
        dest="redraw_theta",
        action="store_true",
        default=None,
        help="draw a fresh slope vector every replication",
    )

    parser = argparse.ArgumentParser(
        prog="antitonic",
        description="Data-driven convex-loss regression: simulate, fit, compare, calibrate.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", parents=[shared], help="fit one CSV dataset")
    p_fit.add_argument("data_file")

    sub.add_parser(
        "simulate", parents=[shared, batch], help="write a simulated dataset"
    )

    p_mse = sub.add_parser(
        "mse-compare", parents=[shared, batch], help="estimator error table"
    )
    p_mse.add_argument("--reps", type=int)
    p_mse.add_argument("--estimators", help=f"comma list from {','.join(ESTIMATORS)}")
    p_mse.add_argument("--timing-out", dest="timing_out", help="runtime CSV path")

    p_cov = sub.add_parser(
        "coverage", parents=[shared, batch], help="confidence-set calibration"
    )
    p_cov.add_argument("--reps", type=int)

    p_orc = sub.add_parser(
        "oracle", parents=[shared], help="information report for a density"
    )
    p_orc.add_argument("density")
    p_orc.add_argument("--points", type=int, help="rows in the curves CSV")

    return parser


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"cannot read {text!r} as a boolean")


def _read_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}: line {lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        if key not in _DEFAULTS:
            raise UsageError(f"{path}: line {lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _convert(key: str, value):
    if not isinstance(value, str):
        return value
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            return _parse_bool(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc
    return value


def _merge(ns: argparse.Namespace) -> argparse.Namespace:
    """Apply flag > config-file > default precedence in place."""
    file_values = _read_config_file(ns.config) if getattr(ns, "config", None) else {}
    for key, default in _DEFAULTS.items():
        if not hasattr(ns, key):
            continue
        if getattr(ns, key) is None:
            raw = file_values[key] if key in file_values else default
            setattr(ns, key, _convert(key, raw))
    if getattr(ns, "grid", None) is None:
        ns.grid = 8193 if ns.command == "oracle" else 2049
    if getattr(ns, "threads", None) is None:
        ns.threads = os.cpu_count() or 1
    return ns


def _parse_pilot(text: str):
    if text in ("ols", "lad"):
        return text, 1.345
    if text == "huber":
        return "huber", 1.345
    if text.startswith("huber:"):
        try:
            k = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad pilot spec {text!r}") from exc
        return "huber", k
    raise UsageError(f"bad pilot spec {text!r}; expected ols, lad, or huber:K")


def _parse_zeta(text: str):
    if text == "mean":
        return "mean", 0.5
    if text == "quantile":
        return "quantile", 0.5
    if text.startswith("quantile:"):
        try:
            tau = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad zeta spec {text!r}") from exc
        return "quantile", tau
    raise UsageError(f"bad zeta spec {text!r}; expected mean or quantile:TAU")


def _parse_levels(text: str):
    try:
        levels = tuple(float(part) for part in str(text).split(","))
    except ValueError as exc:
        raise UsageError(f"bad alpha list {text!r}") from exc
    for a in levels:
        if not 0.0 < a < 1.0:
            raise UsageError(f"alpha {a} outside (0, 1)")
    return levels


def _make_config(ns: argparse.Namespace) -> FitConfig:
    pilot, huber_k = _parse_pilot(ns.pilot)
    zeta, tau = _parse_zeta(ns.zeta)
    if ns.bandwidth in ("silverman", "auto"):
        bandwidth = "auto"
    else:
        try:
            bandwidth = float(ns.bandwidth)
        except ValueError as exc:
            raise UsageError(f"bad bandwidth {ns.bandwidth!r}") from exc
        if not (np.isfinite(bandwidth) and bandwidth > 0.0):
            raise UsageError("bandwidth must be positive")
    truncation = None if ns.gamma is None else TruncationParams(gamma=ns.gamma)
    try:
        return FitConfig(
            mode=ns.mode,
            folds={"none": "none", "three": "three-fold"}[ns.folds],
            crossfit={"avg": "average", "pooled": "pooled"}[ns.crossfit],
            pilot=pilot,
            huber_k=huber_k,
            kernel=ns.kernel,
            bandwidth=bandwidth,
            truncation=truncation,
            grid_size=ns.grid,
            zeta=zeta,
            tau=tau,
            seed=ns.seed,
        )
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc


def _require_fit_mode(ns: argparse.Namespace) -> None:
    if ns.mode not in ("symmetric", "intercept"):
        raise UsageError("fitting requires --mode symmetric or --mode intercept")


def _make_spec(ns: argparse.Namespace, config: FitConfig) -> ExperimentSpec:
    estimators = tuple(
        part.strip()
        for part in getattr(ns, "estimators", ",".join(ESTIMATORS)).split(",")
        if part.strip()
    )
    try:
        return ExperimentSpec(
            noise=ns.noise,
            n=ns.n,
            d=ns.d,
            reps=getattr(ns, "reps", 1),
            seed=ns.seed,
            estimators=estimators,
            mode=ns.mode,
            zeta=ns.zeta,
            out=ns.out,
            redraw_theta=ns.redraw_theta,
            threads=ns.threads,
            config=config,
        )
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc


def _open_out(path):
    """Writable stream for a CSV artifact; stdout when no path is given."""
    if path is None:
        return nullcontext(sys.stdout)
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _echo(ns, *lines) -> None:
    """Status text; kept off stdout when stdout carries the CSV."""
    stream = sys.stdout if ns.out else sys.stderr
    for line in lines:
        print(line, file=stream)


# ---------------------------------------------------------------- fit


def _read_design_csv(path: str):
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    rows = [row for row in rows if row]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [cell.strip() for cell in rows[0]]
    if "y" not in header:
        raise DataError(f"{path}: line 1: header must contain a 'y' column")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: line 1: duplicate column names")
    y_col = header.index("y")
    width = len(header)
    if width < 2:
        raise DataError(f"{path}: line 1: need at least one covariate column")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(
                f"{path}: line {lineno}: expected {width} fields, got {len(row)}"
            )
        try:
            values.append([float(cell) for cell in row])
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise DataError(
                f"{path}: line {lineno}: cannot read {bad.strip()!r} as a number"
            ) from None
    if not values:
        raise DataError(f"{path}: no data rows")
    table = np.array(values, dtype=float)
    response = table[:, y_col]
    design = np.delete(table, y_col, axis=1)
    names = [h for i, h in enumerate(header) if i != y_col]
    return names, design, response


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _check_columns(design: np.ndarray, names) -> None:
    """Rank check that names the first offending column."""
    n, d = design.shape
    if n <= d:
        raise DataError(f"need more rows ({n}) than columns ({d})")
    if not np.all(np.isfinite(design)):
        j = int(np.nonzero(~np.isfinite(design).all(axis=0))[0][0])
        raise DataError(f"column '{names[j]}' contains non-finite values")
    _, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    tol = max(design.shape) * np.finfo(float).eps * (float(diag.max()) or 1.0)
    bad = np.nonzero(diag <= tol)[0]
    if bad.size:
        raise DataError(f"design is rank deficient at column '{names[int(bad[0])]}'")


def _format_p(p: float) -> str:
    return "<2e-16" if p < 2e-16 else f"{p:.4g}"


def cmd_fit(ns: argparse.Namespace) -> int:
    _require_fit_mode(ns)
    config = _make_config(ns)
    levels = _parse_levels(ns.alpha)
    alpha = levels[0]

    names, covariates, response = _read_design_csv(ns.data_file)
    names = names + ["(intercept)"]
    design = np.column_stack([covariates, np.ones(len(response))])
    _check_columns(design, names)
    if not np.all(np.isfinite(response)):
        raise DataError("column 'y' contains non-finite values")
    try:
        data = RegressionData(design, response)
    except InvalidInputError as exc:
        raise DataError(str(exc)) from exc

    if config.folds != "none":
        fit = asm_fit_crossfit(data, config)
    else:
        fit = asm_fit(data, config)

    print(f"antitonic fit: {ns.data_file}")
    print(
        f"n = {data.n}, d = {data.d}, mode = {config.mode}, "
        f"folds = {config.folds}, pilot = {config.pilot}"
    )
    if fit.flag:
        print(f"note: {fit.flag}")
    print()

    have_information = (
        fit.i_star_hat is not None
        and np.isfinite(fit.i_star_hat)
        and fit.i_star_hat > 0.0
        and (config.mode != "intercept" or fit.upsilon_hat is not None)
    )
    rows = []
    if have_information:
        summary = inference_summary(
            design,
            fit.beta,
            fit.i_star_hat,
            fit.upsilon_hat,
            alpha=alpha,
            mode=config.mode,
        )
        ses = np.sqrt(np.diag(summary.cov_matrix))
        print("Coefficients:")
        print(f"{'':>14}  {'Estimate':>12}  {'Std. Error':>12}  {'z value':>9}  Pr(>|z|)")
        for name, est, se, (lo, hi) in zip(
            names, fit.beta, ses, summary.intervals, strict=True
        ):
            z = est / se if se > 0.0 else math.inf
            p = math.erfc(abs(z) / math.sqrt(2.0))
            print(f"{name:>14}  {est:>12.6f}  {se:>12.6f}  {z:>9.3f}  {_format_p(p)}")
            rows.append([name, est, se, z, p, lo, hi])
        print()
        print(f"Antitonic information estimate: {fit.i_star_hat:.6f}")
        if fit.upsilon_hat is not None:
            print(f"Intercept variance factor (upsilon): {fit.upsilon_hat:.6f}")
        pct = 100.0 * (1.0 - alpha)
        print(f"{pct:g}% confidence intervals:")
        for name, (lo, hi) in zip(names, summary.intervals, strict=True):
            print(f"{name:>14}  [{lo:.6f}, {hi:.6f}]")
    else:
        print("Coefficients (no usable score; standard errors unavailable):")
        for name, est in zip(names, fit.beta, strict=True):
            print(f"{name:>14}  {est:>12.6f}")
            rows.append([name, est, "", "", "", "", ""])
    print()
    state = "yes" if fit.converged else "no"
    print(f"Converged: {state} ({fit.iterations} iterations)")

    if ns.out:
        with _open_out(ns.out) as stream:
            write_csv(
                stream,
                ["name", "estimate", "std_error", "z_value", "p_value", "ci_low", "ci_high"],
                rows,
            )
        print(f"wrote {ns.out}")
    return 0


# ----------------------------------------------------------- simulate


def cmd_simulate(ns: argparse.Namespace) -> int:
    config = _make_config(ns)
    spec = _make_spec(ns, config)
    header, body, theta0 = simulate_rows(spec)
    with _open_out(ns.out) as stream:
        write_csv(stream, header, body)
    if ns.out:
        print(f"wrote {ns.out}: n = {spec.n}, d = {spec.d}, noise = {spec.noise}")
        print(f"slopes: {np.array2string(theta0, precision=6)}  intercept: {spec.mu0}")
    return 0


# -------------------------------------------------------- mse-compare


def _print_table(ns, header, rows) -> None:
    widths = [
        max(len(str(header[i])), max((len(_short(r[i])) for r in rows), default=0))
        for i in range(len(header))
    ]
    _echo(ns, "  ".join(str(h).ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        _echo(ns, "  ".join(_short(v).ljust(w) for v, w in zip(row, widths)))


def _short(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def cmd_mse_compare(ns: argparse.Namespace) -> int:
    _require_fit_mode(ns)
    config = _make_config(ns)
    spec = _make_spec(ns, config)
    rows = run_mse_experiment(spec)
    header, body = mse_csv_rows(rows)
    with _open_out(ns.out) as stream:
        write_csv(stream, header, body)
    if ns.out:
        print(f"wrote {ns.out}")
    _print_table(ns, header, body)
    t_header, t_body = timing_csv_rows(rows)
    if ns.timing_out:
        with _open_out(ns.timing_out) as stream:
            write_csv(stream, t_header, t_body)
        _echo(ns, f"wrote {ns.timing_out}")
    _echo(ns, "")
    _print_table(ns, t_header, t_body)
    return 0


# ----------------------------------------------------------- coverage


def cmd_coverage(ns: argparse.Namespace) -> int:
    _require_fit_mode(ns)
    config = _make_config(ns)
    spec = _make_spec(ns, config)
    levels = _parse_levels(ns.alpha)
    try:
        result = run_coverage_experiment(spec, levels)
    except InvalidInputError as exc:
        raise NumericError(str(exc)) from exc
    header, body = coverage_csv_rows(result)
    with _open_out(ns.out) as stream:
        write_csv(stream, header, body)
    if ns.out:
        print(f"wrote {ns.out}")
    _print_table(ns, header, body)
    return 0


# ------------------------------------------------------------- oracle


def cmd_oracle(ns: argparse.Namespace) -> int:
    try:
        density = density_from_spec(ns.density)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from exc
    try:
        projected = projected_score_closed_form(density.name, density.params)
        source = "closed form"
    except InvalidInputError:
        projected = projected_score_numeric(density, ns.grid)
        source = f"numeric grid {ns.grid}"

    u = np.linspace(1e-4, 1.0 - 1e-4, 4097)
    peak = float(np.max(density.pdf(density.quantile(u))))
    bound = 4.0 * peak * peak / projected.fisher_info
    far_left = float(density.quantile(1e-9))
    far_right = float(density.quantile(1.0 - 1e-9))

    print(f"density: {ns.density}")
    print(f"projection: {source}")
    print(f"score information (i): {projected.fisher_info:.12g}")
    print(f"antitonic information (i_star): {projected.i_star:.12g}")
    print(f"efficiency ratio (i_star / i): {projected.are_star:.12g}")
    print(f"best sandwich variance (1 / i_star): {1.0 / projected.i_star:.12g}")
    print(f"efficiency lower bound 4*peak^2/i: {bound:.12g}")
    try:
        print(f"composite-quantile variance (v_cq): {v_cq(density):.12g}")
    except AntitonicError as exc:
        print(f"composite-quantile variance (v_cq): unavailable ({exc})")
    print(f"two-sided hazard near left tail: {two_sided_hazard(density, far_left):.6g}")
    print(f"two-sided hazard near right tail: {two_sided_hazard(density, far_right):.6g}")

    if ns.out:
        points = int(ns.points)
        if points < 2:
            raise UsageError("need at least 2 curve points")
        z = np.asarray(
            density.quantile(np.linspace(0.002, 0.998, points)), dtype=float
        )
        loss = projected.loss()
        score_fn = (
            projected.exact_score if projected.exact_score is not None else projected.score
        )
        raw = density.score(z) if density.score is not None else None
        try:
            log_concave = fisher_divergence_projection(projected, density)
            lc_pdf = np.asarray(log_concave.pdf(z), dtype=float)
        except AntitonicError:
            lc_pdf = None
        rows = []
        for i, zi in enumerate(z):
            rows.append(
                [
                    float(zi),
                    float(density.pdf(zi)),
                    "" if raw is None else float(raw[i]),
                    float(score_fn(zi)),
                    float(loss(zi)),
                    "" if lc_pdf is None else float(lc_pdf[i]),
                ]
            )
        with _open_out(ns.out) as stream:
            write_csv(
                stream,
                ["z", "density", "score", "projected_score", "convex_loss", "projected_density"],
                rows,
            )
        print(f"wrote {ns.out}")
    return 0


_HANDLERS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "mse-compare": cmd_mse_compare,
    "coverage": cmd_coverage,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code in (0, None):
            return 0
        return 2
    try:
        ns = _merge(ns)
        return _HANDLERS[ns.command](ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, InvalidDensityError, DomainError, DegenerateSampleError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except np.linalg.LinAlgError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
