"""Tests for reference densities and their antitonic score projections.

Closed-form constants are re-derived in-test with scipy (root finding,
adaptive quadrature) so the library values are checked against an
independent route, never against themselves.
"""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from antitonic import DomainError, InvalidDensityError, InvalidInputError
from antitonic.densities import (
    ReferenceDensity,
    affine_density,
    density_from_spec,
    mixture,
    sample,
)
from antitonic.monotone import pava_decreasing
from antitonic.projection import (
    ProjectedScore,
    cauchy_hull_constants,
    fisher_divergence_projection,
    huber_relative_efficiency,
    projected_score_closed_form,
    projected_score_numeric,
    prop1_constants,
    prop1_ml_variance_ratio,
    two_sided_hazard,
    v_cq,
)

# frozen constants, derived by hand + scipy in a scratch session from the
# closed forms (root of t=tan(t/2) on (2,3), exact piecewise integrals)
T0 = 2.3311223704144224
Z0 = 0.42897790896417937
SIN_T0 = 0.7246113537767086
ISTAR_CAUCHY = 0.4391187552740554
LM_RHO, LM_MU = 0.3, 1.0
LM_ISTAR = 0.6368408189593774
LM_FISHER = 0.7226816250031146
P1_B = {0.1: 10.999816247529436, 0.2: 5.984901226402593, 0.25: 4.965114231744277}
P1_ARE = {0.1: 0.9000030068435403, 0.2: 0.8008050640577232, 0.25: 0.7526164006656707}
P1_VRATIO = {0.1: 0.09772727927048289, 0.2: 0.18744661622838313}
HUBER_LIMIT = 0.9229501807920084


def quad_split(f, pts, lo=-np.inf, hi=np.inf):
    edges = [lo] + list(pts) + [hi]
    return sum(quad(f, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))


FAMILIES = [
    ("gaussian", ()),
    ("gaussian:1.5,2", ()),
    ("cauchy", ()),
    ("t2_scaled", ()),
    ("sym_pareto:3,2", (0.0,)),
    ("laplace_mixture:0.3,1", (-1.0, 1.0)),
    ("laplace_mixture:0.5,2", (-2.0, 2.0)),
    ("prop1:0.2", (-1.0, 0.0, 1.0)),
    ("logistic", ()),
    ("laplace", (0.0,)),
    ("laplace:0.5,2", (0.5,)),
    ("gaussian_mix:0.5,0,1,0.5,0,4", ()),
    ("gaussian_mix:0.5,-1.5,0.1,0.5,1.5,0.1", ()),
    ("gaussian_mix:0.4,-2,1,0.6,2,1", ()),
    ("smooth_uniform", ()),
    ("smooth_exp", ()),
]


# ---------------------------------------------------------------------------
# ReferenceDensity contract
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("spec,breaks", FAMILIES, ids=[f[0] for f in FAMILIES])
class TestReferenceDensityInvariants:
    def test_pdf_integrates_to_one(self, spec, breaks):
        d = density_from_spec(spec)
        mass = quad_split(lambda z: d.pdf(z), list(breaks) or [0.0])
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_quantile_inverts_cdf(self, spec, breaks):
        d = density_from_spec(spec)
        us = np.array([1e-6, 1e-4, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1 - 1e-4, 1 - 1e-6])
        z = d.quantile(us)
        assert np.all(np.diff(z) >= 0)
        np.testing.assert_allclose(d.cdf(z), us, atol=1e-8)

    def test_cdf_derivative_matches_pdf(self, spec, breaks):
        d = density_from_spec(spec)
        z = d.quantile(np.array([0.07, 0.23, 0.41, 0.59, 0.77, 0.93]))
        keep = np.ones(len(z), dtype=bool)
        for b in breaks:
            keep &= np.abs(z - b) > 1e-2
        z = z[keep]
        assert len(z) >= 3
        h = 1e-5
        approx = (d.cdf(z + h) - d.cdf(z - h)) / (2 * h)
        np.testing.assert_allclose(approx, d.pdf(z), atol=1e-5, rtol=1e-4)

    def test_sampler_deterministic_and_calibrated(self, spec, breaks):
        d = density_from_spec(spec)
        x1 = sample(d, 4000, seed=7)
        x2 = sample(d, 4000, seed=7)
        np.testing.assert_array_equal(x1, x2)
        # probability integral transform has mean 1/2, sd sqrt(1/12)
        pit = d.cdf(x1)
        assert abs(pit.mean() - 0.5) < 4 * np.sqrt(1 / 12 / 4000)


class TestSamplerExamples:
    def test_gaussian_mean(self):
        x = sample(density_from_spec("gaussian"), 10**5, seed=1)
        assert abs(x.mean()) < 3 / np.sqrt(10**5)

    def test_cauchy_median(self):
        x = sample(density_from_spec("cauchy"), 10**4, seed=2)
        assert abs(np.median(x)) < 0.05

    def test_mixture_mass_split(self):
        x = sample(density_from_spec("gaussian_mix:0.4,-2,1,0.6,2,1"), 10**5, seed=3)
        assert abs(np.mean(x < 0) - 0.4) < 0.01

    def test_smooth_exp_mean(self):
        x = sample(density_from_spec("smooth_exp"), 10**5, seed=4)
        assert abs(x.mean()) < 4 * 1.01 / np.sqrt(10**5)


class TestRegistry:
    def test_unknown_family(self):
        with pytest.raises(InvalidInputError):
            density_from_spec("weibull")

    def test_malformed_params(self):
        with pytest.raises(InvalidInputError):
            density_from_spec("sym_pareto:3")
        with pytest.raises(InvalidInputError):
            density_from_spec("sym_pareto:3,abc")
        with pytest.raises(InvalidInputError):
            density_from_spec("sym_pareto:-1,2")
        with pytest.raises(InvalidInputError):
            density_from_spec("gaussian_mix:0.5,0,1")
        with pytest.raises(InvalidInputError):
            density_from_spec("laplace_mixture:1.5,1")
        with pytest.raises(InvalidInputError):
            density_from_spec("prop1:0.7")

    def test_mixture_weights_must_sum_to_one(self):
        with pytest.raises(InvalidInputError):
            density_from_spec("gaussian_mix:0.5,0,1,0.4,2,1")

    def test_score_matches_log_pdf_derivative(self):
        for spec in ("gaussian", "cauchy", "t2_scaled", "logistic",
                     "gaussian_mix:0.4,-2,1,0.6,2,1", "smooth_uniform", "smooth_exp"):
            d = density_from_spec(spec)
            z = np.array([-1.7, -0.4, 0.3, 1.9])
            h = 1e-6
            expect = (np.log(d.pdf(z + h)) - np.log(d.pdf(z - h))) / (2 * h)
            np.testing.assert_allclose(d.score(z), expect, atol=1e-4, rtol=1e-4)


# ---------------------------------------------------------------------------
# numeric antitonic projection
# ---------------------------------------------------------------------------


class TestProjectedScoreNumeric:
    def test_gaussian_score_is_identity_negated(self):
        ps = projected_score_numeric(density_from_spec("gaussian"), 8193)
        z = np.linspace(-2, 2, 41)
        np.testing.assert_allclose(ps.score(z), -z, atol=5e-3)
        assert abs(ps.are_star - 1.0) < 1e-3
        assert abs(ps.i_star - 1.0) < 5e-3

    def test_cauchy_matches_paperless_constants(self):
        # the exact information constant, re-derived from the tangency root
        t0 = brentq(lambda t: np.tan(t / 2) - t, 2.0, 3.0, xtol=1e-14)
        i_exact = 0.5 - (2 * t0 * np.cos(2 * t0) - np.sin(2 * t0)) / (4 * np.pi)
        ps = projected_score_numeric(density_from_spec("cauchy"), 8193)
        assert abs(ps.i_star - i_exact) < 2e-3
        assert abs(ps.are_star - i_exact / 0.5) < 2e-3

    def test_t2_matches_exact_information(self):
        ps = projected_score_numeric(density_from_spec("t2_scaled"), 8193)
        assert abs(1.0 / ps.i_star - 80.0 / 93.0) < 2e-3

    def test_fisher_consistency_exact_on_grid(self):
        for spec in ("gaussian", "cauchy", "sym_pareto:3,2", "laplace_mixture:0.3,1"):
            ps = projected_score_numeric(density_from_spec(spec), 2049)
            du = np.diff(ps.u_grid)
            assert abs(float(np.sum(ps.hull_slopes * du))) < 1e-10

    def test_fisher_consistency_by_z_quadrature(self):
        # integrate the step score against the density exactly via the cdf:
        # sum of level_k * (F(k_{k+1}) - F(k_k)) with exponential-free tails
        d = density_from_spec("cauchy")
        ps = projected_score_numeric(d, 8193)
        knots, levels = ps.score.knots, ps.score.levels
        cdf_at = d.cdf(knots)
        # level_k rules [knot_k, knot_{k+1}); level_0 extends below knot_0
        pieces = np.concatenate(
            ([levels[0] * cdf_at[0]],
             levels[:-1] * np.diff(cdf_at),
             [levels[-1] * (1.0 - cdf_at[-1])])
        )
        assert abs(float(np.sum(pieces))) < 1e-4

    def test_information_lower_bound_via_sup_pdf(self):
        for spec, sup in (("cauchy", 1 / np.pi), ("gaussian", 1 / np.sqrt(2 * np.pi)),
                          ("laplace", 0.5), ("sym_pareto:3,2", 0.75)):
            ps = projected_score_numeric(density_from_spec(spec), 4097)
            assert ps.i_star >= 4 * sup**2 - 5e-3

    def test_laplace_attains_lower_bound(self):
        ps = projected_score_numeric(density_from_spec("laplace"), 8193)
        assert abs(ps.i_star - 1.0) < 1e-3

    def test_i_star_not_above_fisher_info(self):
        for spec, _ in FAMILIES:
            ps = projected_score_numeric(density_from_spec(spec), 1025)
            assert ps.i_star <= ps.fisher_info + 1e-12
            assert 0 < ps.are_star <= 1.0 + 1e-12

    def test_dual_route_pava_of_scores(self):
        # project score values directly (isotone regression route) and compare
        # with the hull-of-density-quantile route
        d = density_from_spec("cauchy")
        m = 20001
        u = (np.arange(m) + 0.5) / m
        z = d.quantile(u)
        direct = pava_decreasing(d.score(z))
        ps = projected_score_numeric(d, 8193)
        central = (u > 0.001) & (u < 0.999)
        np.testing.assert_allclose(ps.score(z[central]), direct[central], atol=5e-3)
        assert abs(float(np.mean(direct**2)) - ps.i_star) < 1e-3

    def test_small_grid_rejected(self):
        with pytest.raises(InvalidInputError):
            projected_score_numeric(density_from_spec("gaussian"), 63)

    def test_quantile_failure_propagates(self):
        def bad_quantile(u):
            raise DomainError("no quantile")

        d = ReferenceDensity(
            "broken", pdf=lambda z: np.exp(-np.abs(z)) / 2,
            cdf=lambda z: np.where(z < 0, np.exp(z) / 2, 1 - np.exp(-z) / 2),
            quantile=bad_quantile,
        )
        with pytest.raises(DomainError):
            projected_score_numeric(d, 129)

    def test_nonfinite_density_rejected(self):
        d = ReferenceDensity(
            "nan_pdf", pdf=lambda z: np.full_like(np.asarray(z, float), np.nan),
            cdf=lambda z: np.clip(z, 0, 1),
            quantile=lambda u: np.asarray(u, float),
        )
        with pytest.raises(InvalidDensityError):
            projected_score_numeric(d, 129)


# ---------------------------------------------------------------------------
# closed-form projections
# ---------------------------------------------------------------------------


class TestClosedFormCauchy:
    def test_constants_solve_their_equations(self):
        t0, z0 = cauchy_hull_constants()
        assert abs(np.tan(t0 / 2) - t0) < 1e-9
        assert abs(z0 * np.arctan(1 / z0) - 0.5) < 1e-12
        assert abs(t0 - T0) < 1e-11
        assert abs(z0 - Z0) < 1e-12
        assert abs(2 * z0 / (1 + z0 * z0) - SIN_T0) < 1e-12
        assert abs(z0 - 0.43) < 5e-3

    def test_information_formula_and_quadrature(self):
        ps = projected_score_closed_form("cauchy")
        assert abs(ps.i_star - ISTAR_CAUCHY) < 1e-12
        p = lambda z: 1 / (np.pi * (1 + z * z))
        by_quad = quad_split(lambda z: ps.exact_score(z) ** 2 * p(z), [-Z0, Z0])
        assert abs(ps.i_star - by_quad) < 1e-9
        # slope-measure identity: i* = -∫ p dψ*
        dpsi = lambda z: -2 * (1 - z * z) / (1 + z * z) ** 2
        other = quad(lambda z: -dpsi(z) * p(z), -Z0, Z0, limit=200)[0]
        assert abs(ps.i_star - other) < 1e-9
        assert ps.fisher_info == pytest.approx(0.5, abs=1e-12)
        assert ps.are_star == pytest.approx(ISTAR_CAUCHY / 0.5, abs=1e-12)

    def test_score_clips_smoothly(self):
        ps = projected_score_closed_form("cauchy")
        assert ps.exact_score(0.2) == pytest.approx(-0.4 / 1.04, abs=1e-14)
        assert ps.exact_score(5.0) == pytest.approx(-SIN_T0, abs=1e-12)
        assert ps.exact_score(-5.0) == pytest.approx(SIN_T0, abs=1e-12)
        z = np.linspace(-3, 3, 601)
        np.testing.assert_allclose(ps.score(z), ps.exact_score(z), atol=1e-6)

    def test_loss_huber_like(self):
        ps = projected_score_closed_form("cauchy")
        loss = ps.exact_loss
        assert loss(0.0) == 0.0
        assert loss(0.3) == pytest.approx(np.log(1.09), abs=1e-14)
        z = 4.0
        assert loss(z) == pytest.approx((z - Z0) * SIN_T0 + np.log(1 + Z0**2), abs=1e-12)
        assert loss.derivative(0.3) == pytest.approx(0.6 / 1.09, abs=1e-14)
        assert loss.derivative(-9.0) == pytest.approx(-SIN_T0, abs=1e-12)
        assert loss.second_derivative(0.3) == pytest.approx(
            2 * (1 - 0.09) / 1.09**2, abs=1e-14
        )
        assert loss.second_derivative(2.0) == 0.0
        # continuity at the knee
        eps = 1e-9
        assert abs(loss(Z0 - eps) - loss(Z0 + eps)) < 1e-8


class TestClosedFormT2:
    def test_exact_values(self):
        ps = projected_score_closed_form("t2_scaled")
        assert ps.i_star == pytest.approx(93 / 80, abs=1e-14)
        assert ps.fisher_info == pytest.approx(6 / 5, abs=1e-14)
        assert ps.are_star == pytest.approx(93 / 96, abs=1e-14)
        zc = 3**-0.5
        assert ps.exact_score(10.0) == pytest.approx(-3 * np.sqrt(3) / 4, abs=1e-14)
        assert ps.exact_score(zc / 2) == pytest.approx(
            -3 * (zc / 2) / (1 + zc**2 / 4), abs=1e-14
        )

    def test_quadrature_cross_check(self):
        ps = projected_score_closed_form("t2_scaled")
        zc = 3**-0.5
        p = lambda z: 0.5 * (1 + z * z) ** -1.5
        by_quad = quad_split(lambda z: ps.exact_score(z) ** 2 * p(z), [-zc, zc])
        assert abs(ps.i_star - by_quad) < 1e-10
        fisher = quad_split(lambda z: (3 * z / (1 + z * z)) ** 2 * p(z), [-1, 1])
        assert abs(ps.fisher_info - fisher) < 1e-10


class TestClosedFormPareto:
    def test_levels_and_information(self):
        ps = projected_score_closed_form("sym_pareto", (3.0, 2.0))
        assert ps.score(-1.0) == 1.5
        assert ps.score(1.0) == -1.5
        assert ps.score(0.0) == -1.5  # right-continuous at the break
        assert ps.i_star == pytest.approx(2.25, abs=1e-14)
        al, sg = 3.0, 2.0
        assert ps.fisher_info == pytest.approx(al * (al + 1) ** 2 / ((al + 2) * sg * sg), abs=1e-12)
        p = lambda z: al * sg**al / (2 * (abs(z) + sg) ** (al + 1))
        fisher = quad_split(lambda z: ((al + 1) / (abs(z) + sg)) ** 2 * p(z), [0.0])
        assert abs(ps.fisher_info - fisher) < 1e-9

    def test_loss_is_scaled_absolute_error(self):
        ps = projected_score_closed_form("sym_pareto", (3.0, 2.0))
        z = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
        np.testing.assert_allclose(ps.exact_loss(z), 1.5 * np.abs(z), atol=1e-12)

    def test_information_attains_laplace_bound(self):
        # the projected density is Laplace, so i* equals 4 sup(p*)^2
        ps = projected_score_closed_form("sym_pareto", (3.0, 2.0))
        proj = fisher_divergence_projection(ps)
        assert ps.i_star == pytest.approx(4 * proj.pdf(0.0) ** 2, abs=1e-6)


class TestClosedFormLaplaceMixture:
    def test_symmetric_case_has_flat_middle(self):
        ps = projected_score_closed_form("laplace_mixture", (0.5, 1.0))
        assert ps.score(0.0) == 0.0
        assert ps.score(-2.0) == 1.0
        assert ps.score(2.0) == -1.0

    def test_information_and_identities(self):
        ps = projected_score_closed_form("laplace_mixture", (LM_RHO, LM_MU))
        assert abs(ps.i_star - LM_ISTAR) < 2e-14
        pm = lambda z: 0.5 * ((1 - LM_RHO) * np.exp(-abs(z + LM_MU)) + LM_RHO * np.exp(-abs(z - LM_MU)))
        by_quad = quad_split(lambda z: ps.score(z) ** 2 * pm(z), [-LM_MU, LM_MU])
        assert abs(ps.i_star - by_quad) < 1e-9
        # jump-measure route: -∫ p dψ* over the two break points
        jump = 2 * (1 - LM_RHO) * pm(-LM_MU) + 2 * LM_RHO * pm(LM_MU)
        assert abs(ps.i_star - jump) < 1e-12
        assert abs(ps.fisher_info - LM_FISHER) < 1e-8
        assert ps.are_star == pytest.approx(LM_ISTAR / LM_FISHER, rel=1e-7)

    def test_middle_level(self):
        ps = projected_score_closed_form("laplace_mixture", (LM_RHO, LM_MU))
        assert ps.score(0.5) == pytest.approx(2 * LM_RHO - 1, abs=1e-14)
        assert ps.score(-LM_MU) == pytest.approx(2 * LM_RHO - 1, abs=1e-14)
        assert ps.score(LM_MU) == -1.0


class TestClosedFormPiecewiseExponential:
    @pytest.mark.parametrize("eps", [0.1, 0.2, 0.25])
    def test_constants(self, eps):
        a, b = prop1_constants(eps)
        assert a == pytest.approx((1 - eps * eps) / eps**2, abs=1e-12)
        assert b == pytest.approx(P1_B[eps], abs=1e-9)
        # normalization equation satisfied
        assert abs(eps * a * (1 - np.exp(-b)) / b - (1 - eps)) < 1e-11

    @pytest.mark.parametrize("eps", [0.1, 0.2, 0.25])
    def test_projection_values(self, eps):
        ps = projected_score_closed_form("prop1", (eps,))
        a, b = prop1_constants(eps)
        assert ps.score(-1.5) == a
        assert ps.score(0.0) == 0.0
        assert ps.score(1.5) == -a
        assert ps.i_star == pytest.approx(a * a * eps, rel=1e-12)
        assert ps.fisher_info == pytest.approx(a * a * eps + b * b * (1 - eps), rel=1e-10)
        assert ps.are_star == pytest.approx(P1_ARE[eps], abs=1e-8)

    def test_quadrature_cross_check(self):
        eps = 0.2
        ps = projected_score_closed_form("prop1", (eps,))
        d = density_from_spec("prop1:0.2")
        by_quad = quad_split(lambda z: ps.score(z) ** 2 * d.pdf(z), [-1.0, 0.0, 1.0])
        assert ps.i_star == pytest.approx(by_quad, rel=1e-8)
        fisher = quad_split(lambda z: d.score(z) ** 2 * d.pdf(z), [-1.0, 0.0, 1.0])
        assert ps.fisher_info == pytest.approx(fisher, rel=1e-8)

    @pytest.mark.parametrize("eps", [0.1, 0.2])
    def test_efficiency_targets(self, eps):
        # relative variance vs the log-concave MLE score stays below eps,
        # while the efficiency relative to the oracle stays above 1 - eps
        ps = projected_score_closed_form("prop1", (eps,))
        ratio = prop1_ml_variance_ratio(eps)
        assert ratio == pytest.approx(P1_VRATIO[eps], abs=1e-9)
        assert ratio <= eps
        assert ps.are_star >= 1 - eps

    def test_ml_ratio_identity_by_quadrature(self):
        # V(projected)/V(MLE-score) = exp(-a*delta) via the variance functional
        eps = 0.2
        a, _ = prop1_constants(eps)
        d = density_from_spec("prop1:0.2")
        delta = brentq(lambda t: eps * (a * (1 + t) + 1) * np.exp(-a * t) - 1, 0.0, 5.0, xtol=1e-14)
        cut = 1 + delta
        num = quad_split(lambda z: (a if abs(z) > cut else 0.0) ** 2 * d.pdf(z), [-cut, cut])
        den = (2 * a * d.pdf(cut)) ** 2
        v_ml = num / den
        ps = projected_score_closed_form("prop1", (eps,))
        v_star = 1.0 / ps.i_star
        assert v_star / v_ml == pytest.approx(np.exp(-a * delta), rel=1e-7)
        assert v_star / v_ml == pytest.approx(prop1_ml_variance_ratio(eps), rel=1e-7)

    def test_unknown_family_rejected(self):
        with pytest.raises(InvalidInputError):
            projected_score_closed_form("huber")


# ---------------------------------------------------------------------------
# closed-form vs numeric agreement (module invariant)
# ---------------------------------------------------------------------------


def l2_distance_in_probability(ps_num, exact_score, quantile):
    u = ps_num.u_grid
    mids = (u[:-1] + u[1:]) / 2
    z_m = quantile(mids)
    du = np.diff(u)
    diff_sq = (ps_num.hull_slopes - exact_score(z_m)) ** 2
    return float(np.sqrt(np.sum(diff_sq * du)))


CLOSED_FORMS = [
    ("cauchy", (), "cauchy"),
    ("t2_scaled", (), "t2_scaled"),
    ("sym_pareto", (3.0, 2.0), "sym_pareto:3,2"),
    ("laplace_mixture", (0.3, 1.0), "laplace_mixture:0.3,1"),
    ("prop1", (0.25,), "prop1:0.25"),
]


class TestClosedVsNumeric:
    @pytest.mark.parametrize("family,params,spec", CLOSED_FORMS, ids=[c[2] for c in CLOSED_FORMS])
    def test_l2_distance(self, family, params, spec):
        d = density_from_spec(spec)
        num = projected_score_numeric(d, 8193)
        exact = projected_score_closed_form(family, params)
        score_fn = exact.exact_score if exact.exact_score is not None else exact.score
        assert l2_distance_in_probability(num, score_fn, d.quantile) <= 1e-2

    @pytest.mark.parametrize(
        "family,params,spec",
        CLOSED_FORMS + [("prop1", (0.1,), "prop1:0.1"), ("prop1", (0.2,), "prop1:0.2")],
        ids=[c[2] for c in CLOSED_FORMS] + ["prop1:0.1", "prop1:0.2"],
    )
    def test_i_star_relative(self, family, params, spec):
        d = density_from_spec(spec)
        num = projected_score_numeric(d, 8193)
        exact = projected_score_closed_form(family, params)
        assert num.i_star == pytest.approx(exact.i_star, rel=5e-3)


# ---------------------------------------------------------------------------
# Fisher-divergence projection to a log-concave density
# ---------------------------------------------------------------------------


class TestFisherDivergenceProjection:
    def test_cauchy_touches_inside_and_exponential_outside(self):
        ps = projected_score_closed_form("cauchy")
        proj = fisher_divergence_projection(ps)
        p = lambda z: 1 / (np.pi * (1 + z * z))
        z_in = np.linspace(-0.4, 0.4, 17)
        np.testing.assert_allclose(proj.pdf(z_in), p(z_in), atol=1e-6)
        # outside: log-density decays linearly with slope sin(t0)
        lo = np.log(proj.pdf(2.0)) - np.log(proj.pdf(3.0))
        assert lo == pytest.approx(SIN_T0, abs=1e-6)
        mass = quad_split(lambda z: proj.pdf(z), [-Z0, Z0])
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_cauchy_projection_information(self):
        ps = projected_score_closed_form("cauchy")
        proj = fisher_divergence_projection(ps)
        num = projected_score_numeric(proj, 8193)
        assert abs(num.fisher_info - ps.i_star) < 2e-3
        assert num.are_star > 1 - 1e-6

    @pytest.mark.parametrize("spec", ["gaussian", "laplace", "logistic"])
    def test_log_concave_fixed_point(self, spec):
        d = density_from_spec(spec)
        ps = projected_score_numeric(d, 8193)
        proj = fisher_divergence_projection(ps, d)
        z = np.linspace(-3, 3, 61)
        np.testing.assert_allclose(proj.pdf(z), d.pdf(z), atol=1e-4)

    def test_gaussian_mixture_within_modal_gap(self):
        d = density_from_spec("gaussian_mix:0.5,-1,1,0.5,1,1")
        ps = projected_score_numeric(d, 8193)
        proj = fisher_divergence_projection(ps, d)
        z = np.linspace(-2.5, 2.5, 51)
        np.testing.assert_allclose(proj.pdf(z), d.pdf(z), atol=1e-4)

    def test_laplace_mixture_closed_form_normalizer(self):
        rho, mu = LM_RHO, LM_MU
        ps = projected_score_closed_form("laplace_mixture", (rho, mu))
        proj = fisher_divergence_projection(ps)
        c_mid = quad(lambda z: np.exp((2 * rho - 1) * z), 0.0, 2 * mu, limit=100)[0]
        c = 1.0 / (1.0 + np.exp((2 * rho - 1) * 2 * mu) + c_mid)
        assert proj.pdf(-mu) == pytest.approx(c, abs=1e-8)
        assert proj.pdf(mu) == pytest.approx(c * np.exp((2 * rho - 1) * 2 * mu), abs=1e-8)
        pm = lambda z: 0.5 * ((1 - rho) * np.exp(-abs(z + mu)) + rho * np.exp(-abs(z - mu)))
        assert proj.pdf(-mu) < pm(-mu)
        assert proj.pdf(mu) < pm(mu)

    def test_projection_is_proper_density(self):
        ps = projected_score_closed_form("laplace_mixture", (0.3, 1.0))
        proj = fisher_divergence_projection(ps)
        mass = quad_split(lambda z: proj.pdf(z), [-1.0, 1.0])
        assert mass == pytest.approx(1.0, abs=1e-6)
        us = np.array([1e-5, 0.05, 0.35, 0.5, 0.8, 0.99, 1 - 1e-5])
        np.testing.assert_allclose(proj.cdf(proj.quantile(us)), us, atol=1e-7)
        x = proj.sample(1000, np.random.default_rng(5))
        assert abs(np.mean(proj.cdf(x)) - 0.5) < 4 * np.sqrt(1 / 12 / 1000)

    def test_score_without_sign_change_rejected(self):
        from antitonic.monotone import MonotoneScore

        bad = ProjectedScore(
            score=MonotoneScore([0.0, 1.0], [2.0, 1.0], mode="step"),
            i_star=1.0, fisher_info=1.0, are_star=1.0,
        )
        with pytest.raises(InvalidDensityError):
            fisher_divergence_projection(bad)


# ---------------------------------------------------------------------------
# hazard, rank-based bound, Huber diagnostic
# ---------------------------------------------------------------------------


class TestTwoSidedHazard:
    def test_laplace_constant_tail_hazard(self):
        d = density_from_spec("laplace")
        assert two_sided_hazard(d, 3.0) == pytest.approx(1.0, abs=1e-12)
        assert two_sided_hazard(d, -3.0) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_value(self):
        d = density_from_spec("gaussian")
        assert two_sided_hazard(d, 2.0) == pytest.approx(2.373215532822843, abs=1e-9)

    def test_cauchy_vanishes_in_tails(self):
        d = density_from_spec("cauchy")
        assert two_sided_hazard(d, 1e4) < 1e-3
        assert two_sided_hazard(d, -1e4) < 1e-3

    def test_zero_over_zero_convention(self):
        d = ReferenceDensity(
            "unit_uniform",
            pdf=lambda z: ((z >= 0) & (z <= 1)).astype(float),
            cdf=lambda z: np.clip(z, 0.0, 1.0),
            quantile=lambda u: np.asarray(u, dtype=float),
        )
        assert two_sided_hazard(d, -1.0) == 0.0
        out = two_sided_hazard(d, np.array([-1.0, 0.5, 2.0]))
        assert out[0] == 0.0 and out[2] == 0.0
        assert out[1] == pytest.approx(2.0)


class TestVCq:
    def test_logistic_equality_case(self):
        d = density_from_spec("logistic")
        v = v_cq(d)
        assert v == pytest.approx(3.0, abs=1e-6)
        ps = projected_score_numeric(d, 8193)
        assert v == pytest.approx(1.0 / ps.i_star, rel=1e-3)

    def test_laplace_value(self):
        assert v_cq(density_from_spec("laplace")) == pytest.approx(4.0 / 3.0, abs=1e-6)

    def test_cauchy_strict_inequality(self):
        d = density_from_spec("cauchy")
        v = v_cq(d)
        assert v == pytest.approx(np.pi**2 / 3, abs=1e-6)
        ps = projected_score_numeric(d, 8193)
        assert v > 1.0 / ps.i_star + 0.5

    def test_degenerate_rejected(self):
        d = ReferenceDensity(
            "zero", pdf=lambda z: np.zeros_like(np.asarray(z, float)),
            cdf=lambda z: np.clip(z, 0, 1), quantile=lambda u: np.asarray(u, float),
        )
        with pytest.raises(InvalidDensityError):
            v_cq(d)


class TestHuberRelativeEfficiency:
    def test_matches_variance_ratio_oracle(self):
        p = lambda z: 1 / (np.pi * (1 + z * z))
        for K in (0.2, 0.394, 1.0, 3.0):
            mass = (2 / np.pi) * np.arctan(K)
            second = quad_split(lambda z: min(z * z, K * K) * p(z), [-K, K])
            oracle = mass**2 / (ISTAR_CAUCHY * second)
            assert huber_relative_efficiency(K) == pytest.approx(oracle, rel=1e-7)

    def test_small_threshold_limit(self):
        assert huber_relative_efficiency(1e-4) == pytest.approx(HUBER_LIMIT, abs=1e-4)
        assert abs(huber_relative_efficiency(1e-4) - 0.922) < 2e-3

    def test_near_optimal_threshold(self):
        r_star = huber_relative_efficiency(0.394)
        assert r_star == pytest.approx(0.9998430962555701, abs=5e-7)
        assert r_star > huber_relative_efficiency(0.3)
        assert r_star > huber_relative_efficiency(0.5)

    def test_large_threshold_decays(self):
        assert huber_relative_efficiency(100.0) < 0.05

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            huber_relative_efficiency(0.0)
        with pytest.raises(InvalidInputError):
            huber_relative_efficiency(-1.0)


# ---------------------------------------------------------------------------
# structural invariants
# ---------------------------------------------------------------------------


class TestAffineEquivariance:
    @pytest.mark.parametrize("spec", ["cauchy", "t2_scaled", "laplace_mixture:0.3,1"])
    @pytest.mark.parametrize("a,b", [(2.0, 0.7), (0.5, -1.0)])
    def test_score_and_information(self, spec, a, b):
        base = density_from_spec(spec)
        moved = affine_density(base, a, b)
        ps0 = projected_score_numeric(base, 4097)
        ps1 = projected_score_numeric(moved, 4097)
        assert ps1.i_star == pytest.approx(a * a * ps0.i_star, rel=1e-3)
        assert ps1.are_star == pytest.approx(ps0.are_star, abs=1e-6)
        z = np.linspace(-2.0, 2.0, 101)
        np.testing.assert_allclose(ps1.score(z), a * ps0.score(a * z + b), atol=1e-3 * max(1.0, a))

    def test_affine_density_is_consistent(self):
        base = density_from_spec("cauchy")
        moved = affine_density(base, 2.0, 0.7)
        z = np.array([-1.0, 0.0, 0.4])
        np.testing.assert_allclose(moved.pdf(z), 2.0 * base.pdf(2.0 * z + 0.7), atol=1e-14)
        np.testing.assert_allclose(moved.cdf(z), base.cdf(2.0 * z + 0.7), atol=1e-14)
        u = np.array([0.2, 0.5, 0.9])
        np.testing.assert_allclose(moved.cdf(moved.quantile(u)), u, atol=1e-10)


class TestInformationConvexity:
    def test_mixtures_do_not_exceed_segment(self):
        pairs = [
            ("gaussian", "cauchy"),
            ("laplace", "t2_scaled"),
            ("cauchy", "laplace_mixture:0.3,1"),
        ]
        for sa, sb in pairs:
            da, db = density_from_spec(sa), density_from_spec(sb)
            ia = projected_score_numeric(da, 4097).i_star
            ib = projected_score_numeric(db, 4097).i_star
            for t in (0.25, 0.5, 0.75):
                mix = mixture([da, db], [1 - t, t])
                im = projected_score_numeric(mix, 4097).i_star
                assert im <= (1 - t) * ia + t * ib + 1e-3


class TestBoundednessLink:
    def test_bounded_closed_forms(self):
        for family, params, bound in (
            ("cauchy", (), SIN_T0),
            ("t2_scaled", (), 3 * np.sqrt(3) / 4),
            ("sym_pareto", (3.0, 2.0), 1.5),
        ):
            ps = projected_score_closed_form(family, params)
            assert float(np.max(np.abs(ps.score.levels))) <= bound + 1e-9

    def test_gaussian_projection_unbounded_with_grid(self):
        d = density_from_spec("gaussian")
        small = projected_score_numeric(d, 1025)
        big = projected_score_numeric(d, 8193)
        assert np.max(np.abs(big.score.levels)) > np.max(np.abs(small.score.levels)) + 0.3
