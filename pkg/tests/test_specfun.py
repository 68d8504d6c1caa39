import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochprox.errors import DomainError
from stochprox.specfun import (
    cap_mean,
    chi_mean,
    erfcx,
    gaussian_radial_tail,
    gaussian_tail_bounds,
    log_gamma,
    mills_ratio,
    normal_cdf,
    normal_pdf,
    radial_tail_bound,
)

# reference values from 40-digit mpmath, computed before the implementation
CDF_REFERENCE = {
    -8.0: 6.2209605742717841235e-16,
    -5.0: 2.866515718791939e-7,
    -3.5: 0.00023262907903552503635,
    -1.0: 0.15865525393145705141,
    2.5: 0.99379033467422386483,
    7.0: 0.99999999999872018746,
}
ERFCX_REFERENCE = {
    -1.0: 5.0089800807622834663,
    0.5: 0.61569034419292587487,
    3.0: 0.17900115118138995042,
    10.0: 0.056140992743822585858,
    100.0: 0.0056416137829894329036,
}
LGAMMA_REFERENCE = {
    0.5: 0.5723649429247000870717,
    5.0: 3.178053830347945619647,
    37.3: 96.80012703802329123411,
    100.0: 359.134205369575398776,
}


class TestNormal:
    def test_pdf_values(self):
        assert normal_pdf(0.0) == pytest.approx(0.3989422804014327, rel=1e-15)
        assert normal_pdf(1.0) == pytest.approx(0.24197072451914337, rel=1e-15)
        assert normal_pdf(-1.0) == normal_pdf(1.0)

    @pytest.mark.parametrize("t, expected", sorted(CDF_REFERENCE.items()))
    def test_cdf_matches_reference(self, t, expected):
        assert normal_cdf(t) == pytest.approx(expected, rel=1e-14)

    def test_cdf_center_and_saturation(self):
        assert normal_cdf(0.0) == 0.5
        hi = normal_cdf(40.0)
        assert math.isfinite(hi) and hi >= 1.0 - 1e-300
        lo = normal_cdf(-40.0)
        assert math.isfinite(lo) and lo >= 0.0

    @given(st.floats(-8, 8))
    def test_cdf_complement(self, t):
        assert normal_cdf(t) + normal_cdf(-t) == pytest.approx(1.0, abs=2e-16)

    def test_cdf_monotone(self):
        ts = np.linspace(-10, 10, 2001)
        values = [normal_cdf(t) for t in ts]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_derivative_of_cdf_is_pdf(self):
        h = 1e-5
        for t in np.linspace(-5, 5, 101):
            fd = (normal_cdf(t + h) - normal_cdf(t - h)) / (2 * h)
            assert fd == pytest.approx(normal_pdf(t), abs=1e-6)

    @pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(DomainError):
            normal_pdf(bad)
        with pytest.raises(DomainError):
            normal_cdf(bad)


class TestErfcx:
    @pytest.mark.parametrize("x, expected", sorted(ERFCX_REFERENCE.items()))
    def test_reference(self, x, expected):
        assert erfcx(x) == pytest.approx(expected, rel=1e-14)

    def test_branch_switch_is_continuous(self):
        below, above = erfcx(3.0 - 1e-12), erfcx(3.0 + 1e-12)
        assert below == pytest.approx(above, rel=1e-11)

    def test_mills_ratio_matches_definition(self):
        for t in (-2.0, 0.0, 1.0, 5.0):
            assert mills_ratio(t) == pytest.approx(normal_cdf(-t) / normal_pdf(t), rel=1e-13)

    def test_mills_ratio_far_tail(self):
        # Phi(-t)/phi(t) ~ 1/t (1 - 1/t^2 + 3/t^4)
        t = 60.0
        assert mills_ratio(t) == pytest.approx((1 - 1 / t**2 + 3 / t**4) / t, rel=1e-8)


class TestGamma:
    @pytest.mark.parametrize("x, expected", sorted(LGAMMA_REFERENCE.items()))
    def test_reference(self, x, expected):
        assert log_gamma(x) == pytest.approx(expected, rel=1e-12)

    def test_one(self):
        assert log_gamma(1.0) == 0.0

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            log_gamma(bad)

    def test_chi_mean_small_n(self):
        assert chi_mean(1) == pytest.approx(0.7978845608028654, rel=1e-14)
        assert chi_mean(2) == pytest.approx(1.2533141373155003, rel=1e-14)
        assert chi_mean(3) == pytest.approx(1.5957691216057307118, rel=1e-14)

    def test_chi_mean_large_n(self):
        ratio = chi_mean(10**4) / 100.0
        assert 0.99997 < ratio < 1.0

    @pytest.mark.parametrize("bad", [0, -2, 1.5])
    def test_chi_mean_domain(self, bad):
        with pytest.raises(DomainError):
            chi_mean(bad)


class TestCapMean:
    def test_three_dimensional_closed_form(self):
        assert cap_mean(math.pi / 3, 3) == pytest.approx(0.75, rel=1e-12)

    def test_planar_value(self):
        # n = 2: uniform angle on [-alpha, alpha], mean cosine sin(alpha)/alpha
        assert cap_mean(math.pi / 4, 2) == pytest.approx(0.9003163161571061, rel=1e-12)

    def test_small_angle(self):
        assert abs(cap_mean(1e-4, 2) - 1.0) <= 1e-6

    @given(st.floats(1e-3, math.pi / 2 - 1e-3))
    @settings(max_examples=40)
    def test_three_dimensional_any_angle(self, alpha):
        assert cap_mean(alpha, 3) == pytest.approx((1 + math.cos(alpha)) / 2, rel=1e-11)

    @given(st.floats(1e-3, math.pi / 2 - 1e-3), st.integers(2, 12))
    @settings(max_examples=60)
    def test_range(self, alpha, n):
        value = cap_mean(alpha, n)
        assert math.cos(alpha) <= value <= 1.0

    @pytest.mark.parametrize("alpha, n", [(0.0, 2), (math.pi / 2, 2), (-0.1, 3), (0.5, 1)])
    def test_domain(self, alpha, n):
        with pytest.raises(DomainError):
            cap_mean(alpha, n)


class TestTailBounds:
    def test_unit_example(self):
        rep = gaussian_tail_bounds(1.0, 1.0)
        assert rep.integral == pytest.approx(0.39768974542335145, rel=1e-13)
        assert rep.lower == pytest.approx(0.30326532985631671, rel=1e-13)
        assert rep.upper == pytest.approx(0.60653065971263342, rel=1e-13)
        assert rep.holds

    def test_tiny_values_keep_order(self):
        rep = gaussian_tail_bounds(3.0, 0.1)
        assert rep.upper < 1e-18
        assert rep.holds
        assert rep.log_lower < rep.log_integral < rep.log_upper

    def test_underflowed_values_compare_in_log_space(self):
        rep = gaussian_tail_bounds(10.0, 1e-4)
        assert rep.integral == 0.0
        assert rep.holds and math.isfinite(rep.log_integral)

    def test_wide_case(self):
        assert gaussian_tail_bounds(0.01, 10.0).holds

    def test_grid(self):
        for y in np.geomspace(1e-2, 10, 30):
            for d in np.geomspace(1e-4, 10, 30):
                rep = gaussian_tail_bounds(y, d)
                assert rep.holds
                assert all(v >= 0 and math.isfinite(v) for v in (rep.integral, rep.lower, rep.upper))

    @pytest.mark.parametrize("y, d", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_domain(self, y, d):
        with pytest.raises(DomainError):
            gaussian_tail_bounds(y, d)


class TestRadialTail:
    def test_chi_square_survival(self):
        assert gaussian_radial_tail(3, 2.0) == pytest.approx(0.2614641299491106222, rel=1e-13)
        assert gaussian_radial_tail(1, 1.0) == pytest.approx(2 * normal_cdf(-1.0), rel=1e-14)
        assert gaussian_radial_tail(2, 1.5) == pytest.approx(math.exp(-1.125), rel=1e-14)
        assert gaussian_radial_tail(4, 0.0) == 1.0

    def test_integral_one_dimension_closed_form(self):
        # n = 1, k = 0: 2 sqrt(2 pi delta) Phi(-R/sqrt(delta)), scaled by exp(R^2/2delta)
        R, delta = 1.0, 0.1
        rep = radial_tail_bound(1, R, 0.0, 0, delta)
        exact = 2 * math.sqrt(2 * math.pi * delta) * 0.5 * erfcx(R / math.sqrt(2 * delta))
        assert rep.integral == pytest.approx(exact, rel=1e-12)

    def test_integral_two_dimensions_closed_form(self):
        # n = 2, k = 0: 2 pi delta exp(-R^2/2delta)
        rep = radial_tail_bound(2, 1.5, 0.0, 0, 0.2)
        assert rep.integral == pytest.approx(2 * math.pi * 0.2, rel=1e-12)

    def test_bound_grid(self):
        for n in (1, 2, 3):
            for R in (0.3, 1.0, 3.0):
                for d in (0.0, 0.2, 2.0):
                    for k in (0, 1):
                        for frac in (1.0, 0.3, 0.01):
                            rep = radial_tail_bound(n, R, d, k, frac * R * R / (2 * n))
                            assert rep.holds, rep

    def test_domain(self):
        with pytest.raises(DomainError):
            radial_tail_bound(2, 1.0, 0.0, 2, 0.1)
        with pytest.raises(DomainError):
            radial_tail_bound(2, -1.0, 0.0, 0, 0.1)
