"""Reference error densities with closed-form cdfs, quantiles, and samplers.

Every density here is a plain value object bundling vectorized callables.
Families are addressable by string spec ("cauchy", "gaussian_mix:0.4,-2,1,
0.6,2,1") so the CLI and experiment harness can name them directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import _special as _sp
from ._quad import bisect_root
from .errors import InvalidInputError

__all__ = [
    "ReferenceDensity",
    "affine_density",
    "mixture",
    "density_from_spec",
    "sample",
]


@dataclass(frozen=True)
class ReferenceDensity:
    """Univariate density with its cdf, quantile, and optional score/sampler.

    The callables accept scalars or arrays. `score` is the derivative of the
    log density where it exists; `sampler(n, rng)` draws n variates and is
    preferred over inverse-cdf sampling when present.
    """

    name: str
    pdf: Callable
    cdf: Callable
    quantile: Callable
    score: Optional[Callable] = None
    sampler: Optional[Callable] = None
    params: tuple = field(default=())

    def sample(self, n: int, rng=None) -> np.ndarray:
        if int(n) < 1:
            raise InvalidInputError("sample size must be at least 1")
        n = int(n)
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        if self.sampler is not None:
            return np.asarray(self.sampler(n, gen), dtype=float)
        u = gen.uniform(size=n)
        u = np.where(u == 0.0, 5e-17, u)
        return np.asarray(self.quantile(u), dtype=float)


def sample(density: ReferenceDensity, n: int, seed=None) -> np.ndarray:
    """Draw n i.i.d. variates, deterministic for a fixed seed."""
    return density.sample(n, np.random.default_rng(seed))


def _invert_cdf(cdf, u, lo, hi, tol: float = 1e-13, expand: bool = False) -> np.ndarray:
    """Vectorized bisection for quantiles; lo/hi must bracket (or `expand`)."""
    u = np.asarray(u, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), u.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), u.shape).copy()
    if expand:
        span = np.maximum(hi - lo, 1.0)
        for _ in range(80):
            bad = np.asarray(cdf(lo)) > u
            if not bad.any():
                break
            lo = np.where(bad, lo - span, lo)
            span = span * 2.0
        span = np.maximum(hi - lo, 1.0)
        for _ in range(80):
            bad = np.asarray(cdf(hi)) < u
            if not bad.any():
                break
            hi = np.where(bad, hi + span, hi)
            span = span * 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        go_left = np.asarray(cdf(mid)) >= u
        hi = np.where(go_left, mid, hi)
        lo = np.where(go_left, lo, mid)
        scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        if np.all(hi - lo <= tol * scale):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------


def _gaussian(mu: float = 0.0, sigma: float = 1.0) -> ReferenceDensity:
    if not (sigma > 0):
        raise InvalidInputError("gaussian needs sigma > 0")

    def pdf(z):
        return _sp.norm_pdf((np.asarray(z, float) - mu) / sigma) / sigma

    def cdf(z):
        return _sp.norm_cdf((np.asarray(z, float) - mu) / sigma)

    def quantile(u):
        return mu + sigma * _sp.norm_quantile(np.asarray(u, float))

    def score(z):
        return -(np.asarray(z, float) - mu) / (sigma * sigma)

    def sampler(n, rng):
        return mu + sigma * rng.standard_normal(n)

    return ReferenceDensity("gaussian", pdf, cdf, quantile, score, sampler, (mu, sigma))


def _cauchy() -> ReferenceDensity:
    def pdf(z):
        z = np.asarray(z, float)
        return 1.0 / (np.pi * (1.0 + z * z))

    def cdf(z):
        return 0.5 + np.arctan(np.asarray(z, float)) / np.pi

    def quantile(u):
        return np.tan(np.pi * (np.asarray(u, float) - 0.5))

    def score(z):
        z = np.asarray(z, float)
        return -2.0 * z / (1.0 + z * z)

    def sampler(n, rng):
        return rng.standard_cauchy(n)

    return ReferenceDensity("cauchy", pdf, cdf, quantile, score, sampler)


def _t2_scaled() -> ReferenceDensity:
    # t distribution with 2 degrees of freedom rescaled to unit parameter:
    # p(z) = (1 + z^2)^(-3/2) / 2

    def pdf(z):
        z = np.asarray(z, float)
        return 0.5 * (1.0 + z * z) ** -1.5

    def cdf(z):
        z = np.asarray(z, float)
        t = -np.abs(z)
        s = np.sqrt(1.0 + t * t)
        half = 0.5 / (s * (s - t))
        return np.where(z < 0, half, 1.0 - half)

    def quantile(u):
        u = np.asarray(u, float)
        return (2.0 * u - 1.0) / (2.0 * np.sqrt(u * (1.0 - u)))

    def score(z):
        z = np.asarray(z, float)
        return -3.0 * z / (1.0 + z * z)

    def sampler(n, rng):
        return rng.standard_t(2, n) / np.sqrt(2.0)

    return ReferenceDensity("t2_scaled", pdf, cdf, quantile, score, sampler)


def _sym_pareto(alpha: float, sigma: float) -> ReferenceDensity:
    if not (alpha > 0 and sigma > 0):
        raise InvalidInputError("sym_pareto needs alpha > 0 and sigma > 0")

    def pdf(z):
        t = np.abs(np.asarray(z, float))
        return 0.5 * alpha * sigma**alpha * (t + sigma) ** -(alpha + 1.0)

    def cdf(z):
        z = np.asarray(z, float)
        half = 0.5 * (sigma / (sigma + np.abs(z))) ** alpha
        return np.where(z < 0, half, 1.0 - half)

    def quantile(u):
        u = np.asarray(u, float)
        v = np.minimum(u, 1.0 - u)
        r = sigma * ((2.0 * v) ** (-1.0 / alpha) - 1.0)
        return np.where(u < 0.5, -r, r)

    def score(z):
        z = np.asarray(z, float)
        return -(alpha + 1.0) * np.sign(z) / (np.abs(z) + sigma)

    return ReferenceDensity("sym_pareto", pdf, cdf, quantile, score, None, (alpha, sigma))


def _laplace(loc: float = 0.0, scale: float = 1.0) -> ReferenceDensity:
    if not (scale > 0):
        raise InvalidInputError("laplace needs scale > 0")

    def pdf(z):
        z = np.asarray(z, float)
        return np.exp(-np.abs(z - loc) / scale) / (2.0 * scale)

    def cdf(z):
        z = np.asarray(z, float)
        half = 0.5 * np.exp(-np.abs(z - loc) / scale)
        return np.where(z < loc, half, 1.0 - half)

    def quantile(u):
        u = np.asarray(u, float)
        v = np.minimum(u, 1.0 - u)
        r = -scale * np.log(2.0 * v)
        return loc + np.where(u < 0.5, -r, r)

    def score(z):
        return -np.sign(np.asarray(z, float) - loc) / scale

    def sampler(n, rng):
        return rng.laplace(loc, scale, n)

    return ReferenceDensity("laplace", pdf, cdf, quantile, score, sampler, (loc, scale))


def _logistic() -> ReferenceDensity:
    def pdf(z):
        z = np.asarray(z, float)
        e = np.exp(-np.abs(z))
        return e / (1.0 + e) ** 2

    def cdf(z):
        z = np.asarray(z, float)
        t = -np.abs(z)
        e = np.exp(t)
        half = e / (1.0 + e)
        return np.where(z < 0, half, 1.0 - half)

    def quantile(u):
        u = np.asarray(u, float)
        return np.log(u) - np.log1p(-u)

    def score(z):
        return -np.tanh(np.asarray(z, float) / 2.0)

    def sampler(n, rng):
        return rng.logistic(0.0, 1.0, n)

    return ReferenceDensity("logistic", pdf, cdf, quantile, score, sampler)


def _laplace_mixture(rho: float, mu: float) -> ReferenceDensity:
    if not (0.0 < rho < 1.0):
        raise InvalidInputError("laplace_mixture needs rho in (0, 1)")
    if not (mu > 0):
        raise InvalidInputError("laplace_mixture needs mu > 0")
    c_left = (1.0 - rho) * np.exp(mu) + rho * np.exp(-mu)
    c_right = (1.0 - rho) * np.exp(-mu) + rho * np.exp(mu)
    u_lo = 0.5 * c_left * np.exp(-mu)
    u_hi = 1.0 - 0.5 * c_right * np.exp(-mu)
    half_logit = 0.5 * np.log(rho / (1.0 - rho))

    def pdf(z):
        z = np.asarray(z, float)
        return 0.5 * ((1.0 - rho) * np.exp(-np.abs(z + mu)) + rho * np.exp(-np.abs(z - mu)))

    def cdf(z):
        z = np.asarray(z, float)
        left = 0.5 * c_left * np.exp(np.minimum(z, -mu))
        right = 1.0 - 0.5 * c_right * np.exp(-np.maximum(z, mu))
        zc = np.clip(z, -mu, mu)
        middle = (1.0 - rho) * (1.0 - 0.5 * np.exp(-(zc + mu))) + 0.5 * rho * np.exp(zc - mu)
        return np.where(z <= -mu, left, np.where(z < mu, middle, right))

    def quantile(u):
        u = np.asarray(u, float)
        left = np.log(np.maximum(2.0 * u, 5e-324) / c_left)
        right = -np.log(np.maximum(2.0 * (1.0 - u), 5e-324) / c_right)
        # middle region: solve the piecewise-exponential cdf for w = exp(z)
        bq = 2.0 * np.exp(mu) * (u - (1.0 - rho))
        disc = np.sqrt(bq * bq + 4.0 * rho * (1.0 - rho))
        w = np.where(bq >= 0, (bq + disc) / (2.0 * rho), 2.0 * (1.0 - rho) / (disc - bq))
        middle = np.log(w)
        return np.where(u <= u_lo, left, np.where(u < u_hi, middle, right))

    def score(z):
        z = np.asarray(z, float)
        inner = np.tanh(np.clip(z, -mu, mu) + half_logit)
        return np.where(z < -mu, 1.0, np.where(z >= mu, -1.0, inner))

    def sampler(n, rng):
        centers = np.where(rng.random(n) < rho, mu, -mu)
        return centers + rng.laplace(0.0, 1.0, n)

    return ReferenceDensity("laplace_mixture", pdf, cdf, quantile, score, sampler, (rho, mu))


@lru_cache(maxsize=None)
def _piecewise_exp_constants(eps: float) -> tuple:
    """Slopes (a, b) of the two-rate symmetric piecewise-exponential family."""
    a = (1.0 - eps * eps) / (eps * eps)
    b = bisect_root(lambda t: eps * a * (-np.expm1(-t)) / t - (1.0 - eps), 1e-12, a)
    return a, float(b)


def _prop1(eps: float) -> ReferenceDensity:
    if not (0.0 < eps < 0.5):
        raise InvalidInputError("prop1 needs eps in (0, 0.5)")
    a, b = _piecewise_exp_constants(eps)
    peak = 0.5 * eps * a

    def pdf(z):
        t = np.abs(np.asarray(z, float))
        expo = np.where(t < 1.0, -b * (1.0 - t), -a * (t - 1.0))
        return peak * np.exp(expo)

    def cdf(z):
        z = np.asarray(z, float)
        t = -np.abs(z)
        tail = 0.5 * eps * np.exp(np.minimum(a * (t + 1.0), 0.0))
        zc = np.clip(t, -1.0, 0.0)
        middle = 0.5 * eps + (eps * a / (2.0 * b)) * (-np.expm1(-b * (1.0 + zc)))
        half = np.where(t <= -1.0, tail, middle)
        return np.where(z <= 0, half, 1.0 - half)

    def quantile(u):
        u = np.asarray(u, float)
        v = np.maximum(np.minimum(u, 1.0 - u), 5e-324)
        z_tail = np.log(np.minimum(2.0 * v / eps, 1.0)) / a - 1.0
        frac = np.clip(1.0 - 2.0 * b * (v - eps / 2.0) / (eps * a), 5e-324, 1.0)
        z_mid = -1.0 - np.log(frac) / b
        half = np.where(v <= eps / 2.0, z_tail, z_mid)
        return np.where(u <= 0.5, half, -half)

    def score(z):
        z = np.asarray(z, float)
        return np.where(np.abs(z) >= 1.0, -a * np.sign(z), b * np.sign(z))

    return ReferenceDensity("prop1", pdf, cdf, quantile, score, None, (eps,))


def _gaussian_mix(*params: float, quantile_tol: float = 1e-13) -> ReferenceDensity:
    if len(params) == 0 or len(params) % 3 != 0:
        raise InvalidInputError("gaussian_mix needs weight,mean,sd triples")
    ws = np.asarray(params[0::3], dtype=float)
    mus = np.asarray(params[1::3], dtype=float)
    sds = np.asarray(params[2::3], dtype=float)
    if np.any(ws <= 0) or abs(ws.sum() - 1.0) > 1e-9:
        raise InvalidInputError("gaussian_mix weights must be positive and sum to 1")
    if np.any(sds <= 0):
        raise InvalidInputError("gaussian_mix needs positive sds")

    def pdf(z):
        t = (np.asarray(z, float)[..., None] - mus) / sds
        return np.sum(ws / sds * _sp.norm_pdf(t), axis=-1)

    def cdf(z):
        t = (np.asarray(z, float)[..., None] - mus) / sds
        return np.sum(ws * _sp.norm_cdf(t), axis=-1)

    def score(z):
        t = (np.asarray(z, float)[..., None] - mus) / sds
        e = -0.5 * t * t
        m = np.max(e, axis=-1, keepdims=True)
        comp = ws / sds * np.exp(e - m)
        num = np.sum(comp * (-t / sds), axis=-1)
        return num / np.sum(comp, axis=-1)

    def quantile(u):
        u = np.asarray(u, float)
        base = _sp.norm_quantile(u)[..., None]
        cand = mus + sds * base
        return _invert_cdf(cdf, u, cand.min(axis=-1), cand.max(axis=-1), tol=quantile_tol)

    def sampler(n, rng):
        idx = rng.choice(len(ws), size=n, p=ws)
        return mus[idx] + sds[idx] * rng.standard_normal(n)

    return ReferenceDensity("gaussian_mix", pdf, cdf, quantile, score, sampler, tuple(params))


def _smooth_uniform(sigma: float = 0.1) -> ReferenceDensity:
    # uniform on [-1, 1] convolved with a N(0, sigma^2) kernel
    if not (sigma > 0):
        raise InvalidInputError("smooth_uniform needs sigma > 0")

    def pdf(z):
        t = -np.abs(np.asarray(z, float))
        return 0.5 * (_sp.norm_cdf((t + 1.0) / sigma) - _sp.norm_cdf((t - 1.0) / sigma))

    def cdf(z):
        z = np.asarray(z, float)
        t = -np.abs(z)
        va = (t + 1.0) / sigma
        vb = (t - 1.0) / sigma
        ga = va * _sp.norm_cdf(va) + _sp.norm_pdf(va)
        gb = vb * _sp.norm_cdf(vb) + _sp.norm_pdf(vb)
        half = 0.5 * sigma * (ga - gb)
        return np.where(z <= 0, half, 1.0 - half)

    def score(z):
        z = np.asarray(z, float)
        sgn = np.where(z >= 0, 1.0, -1.0)
        t = -np.abs(z)
        va = (t + 1.0) / sigma
        vb = (t - 1.0) / sigma
        num = _sp.norm_pdf(va) - _sp.norm_pdf(vb)
        den = sigma * (_sp.norm_cdf(va) - _sp.norm_cdf(vb))
        rising = num / np.where(den > 0, den, 1.0)
        far = t < -1.0 - 20.0 * sigma
        rising = np.where(far, (-t - 1.0) / (sigma * sigma), rising)
        return -sgn * rising

    def quantile(u):
        u = np.asarray(u, float)
        base = sigma * _sp.norm_quantile(u)
        return _invert_cdf(cdf, u, base - 1.0, base + 1.0)

    def sampler(n, rng):
        return rng.uniform(-1.0, 1.0, n) + sigma * rng.standard_normal(n)

    return ReferenceDensity("smooth_uniform", pdf, cdf, quantile, score, sampler, (sigma,))


def _smooth_exp(sigma: float = np.sqrt(3.0) / 10.0) -> ReferenceDensity:
    # centred exponential (rate 1, shifted to mean 0) convolved with N(0, sigma^2)
    if not (sigma > 0):
        raise InvalidInputError("smooth_exp needs sigma > 0")
    s2 = sigma * sigma

    def pdf(x):
        x = np.asarray(x, float)
        c = _sp.norm_cdf((x + 1.0) / sigma - sigma)
        return np.exp(np.minimum(0.5 * s2 - (x + 1.0), 700.0)) * c

    def cdf(x):
        x = np.asarray(x, float)
        v = (x + 1.0) / sigma
        c = _sp.norm_cdf(v - sigma)
        val = _sp.norm_cdf(v) - np.exp(np.minimum(0.5 * s2 - (x + 1.0), 700.0)) * c
        return np.clip(val, 0.0, 1.0)

    def score(x):
        x = np.asarray(x, float)
        w = (x + 1.0) / sigma - sigma
        wc = np.maximum(w, -26.0)
        main = -1.0 + _sp.norm_pdf(wc) / (sigma * _sp.norm_cdf(wc))
        ws = np.minimum(w, -26.0)
        mills = -1.0 + (-ws - 1.0 / ws) / sigma
        return np.where(w < -26.0, mills, main)

    def quantile(u):
        u = np.asarray(u, float)
        base = _sp.norm_quantile(u)
        lo = -1.0 + sigma * base - 1.0
        hi = -np.log1p(-np.minimum(u, 1.0 - 1e-17)) - 1.0 + sigma * np.abs(base) + 1.0
        return _invert_cdf(cdf, u, lo, hi, expand=True)

    def sampler(n, rng):
        return rng.exponential(1.0, n) - 1.0 + sigma * rng.standard_normal(n)

    return ReferenceDensity("smooth_exp", pdf, cdf, quantile, score, sampler, (sigma,))


# ---------------------------------------------------------------------------
# combinators
# ---------------------------------------------------------------------------


def affine_density(base: ReferenceDensity, a: float, b: float = 0.0) -> ReferenceDensity:
    """Density of (X - b)/a for X ~ base, i.e. p(z) = a * base.pdf(a z + b)."""
    if not (np.isfinite(a) and a > 0 and np.isfinite(b)):
        raise InvalidInputError("affine_density needs finite a > 0 and finite b")

    def pdf(z):
        return a * base.pdf(a * np.asarray(z, float) + b)

    def cdf(z):
        return base.cdf(a * np.asarray(z, float) + b)

    def quantile(u):
        return (base.quantile(u) - b) / a

    score = None
    if base.score is not None:
        def score(z):  # noqa: F811 - deliberate conditional definition
            return a * base.score(a * np.asarray(z, float) + b)

    def sampler(n, rng):
        return (base.sample(n, rng) - b) / a

    return ReferenceDensity(
        f"affine({base.name})", pdf, cdf, quantile, score, sampler, (a, b) + base.params
    )


def mixture(densities, weights, quantile_tol: float = 1e-13) -> ReferenceDensity:
    """Finite mixture of reference densities with positive weights summing to 1."""
    dens = list(densities)
    ws = np.asarray(list(weights), dtype=float)
    if len(dens) == 0 or len(dens) != len(ws):
        raise InvalidInputError("mixture needs matching densities and weights")
    if np.any(ws <= 0) or abs(ws.sum() - 1.0) > 1e-9:
        raise InvalidInputError("mixture weights must be positive and sum to 1")

    def pdf(z):
        z = np.asarray(z, float)
        return sum(w * d.pdf(z) for w, d in zip(ws, dens))

    def cdf(z):
        z = np.asarray(z, float)
        return sum(w * d.cdf(z) for w, d in zip(ws, dens))

    score = None
    if all(d.score is not None for d in dens):
        def score(z):  # noqa: F811 - deliberate conditional definition
            z = np.asarray(z, float)
            parts = np.stack([w * np.asarray(d.pdf(z), float) for w, d in zip(ws, dens)])
            slopes = np.stack([np.asarray(d.score(z), float) for d in dens])
            tot = parts.sum(axis=0)
            safe = np.where(tot > 0, tot, 1.0)
            return np.where(tot > 0, (parts * slopes).sum(axis=0) / safe, 0.0)

    def quantile(u):
        u = np.asarray(u, float)
        cand = np.stack([np.asarray(d.quantile(u), float) for d in dens])
        return _invert_cdf(cdf, u, cand.min(axis=0), cand.max(axis=0), tol=quantile_tol)

    def sampler(n, rng):
        idx = rng.choice(len(dens), size=n, p=ws)
        out = np.empty(n, dtype=float)
        for j, d in enumerate(dens):
            m = idx == j
            cnt = int(m.sum())
            if cnt:
                out[m] = d.sample(cnt, rng)
        return out

    name = "mixture(" + ",".join(d.name for d in dens) + ")"
    return ReferenceDensity(name, pdf, cdf, quantile, score, sampler, tuple(ws))


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_REGISTRY = {
    "gaussian": _gaussian,
    "cauchy": _cauchy,
    "t2_scaled": _t2_scaled,
    "sym_pareto": _sym_pareto,
    "laplace": _laplace,
    "logistic": _logistic,
    "laplace_mixture": _laplace_mixture,
    "prop1": _prop1,
    "gaussian_mix": _gaussian_mix,
    "smooth_uniform": _smooth_uniform,
    "smooth_exp": _smooth_exp,
}


def density_from_spec(spec: str) -> ReferenceDensity:
    """Build a density from a "name" or "name:p1,p2,..." string."""
    if not isinstance(spec, str) or not spec.strip():
        raise InvalidInputError("density spec must be a non-empty string")
    head, _, tail = spec.partition(":")
    name = head.strip().lower()
    builder = _REGISTRY.get(name)
    if builder is None:
        known = ", ".join(sorted(_REGISTRY))
        raise InvalidInputError(f"unknown density family {name!r} (known: {known})")
    params = ()
    if tail.strip():
        try:
            params = tuple(float(p) for p in tail.split(","))
        except ValueError as exc:
            raise InvalidInputError(f"bad parameter list in density spec {spec!r}") from exc
    try:
        return builder(*params)
    except TypeError as exc:
        raise InvalidInputError(f"wrong parameter count for density family {name!r}") from exc
