import math

import numpy as np
import pytest

from stochprox.errors import DegenerateFitError, ParameterError
from stochprox.estimator import EstimatorConfig
from stochprox.problems import catalog_ids, instance, make_log_cosh, resolve
from stochprox.rates import (
    RateSweep,
    check_bound,
    concentration_check,
    default_bound_kind,
    default_window,
    fit_loglog,
    geometric_grid,
    run_sweep,
    sharpness_constant,
    theory_bound,
)
from stochprox.specfun import cap_mean, chi_mean

SQRT_2_OVER_PI = math.sqrt(2 / math.pi)
L_LOGCOSH = 4 / (3 * math.sqrt(3))


@pytest.fixture(scope="module")
def sum_max_sweeps():
    grid = geometric_grid(1e-1, 1e-5)
    return {n: run_sweep(f"sum_max:n={n}", "quadrature", grid) for n in (1, 2, 3)}


class TestGrid:
    def test_default_ratio(self):
        g = geometric_grid(1e-1, 1e-5)
        assert len(g) == 9
        assert g[0] == 0.1 and g[-1] == pytest.approx(1e-5, rel=1e-15)
        assert np.allclose(g[:-1] / g[1:], math.sqrt(10), rtol=1e-12)

    def test_explicit_points(self):
        g = geometric_grid(1.0, 1e-2, 5)
        assert np.allclose(g, [1.0, 10**-0.5, 0.1, 10**-1.5, 0.01], rtol=1e-14)

    @pytest.mark.parametrize("args", [(1e-5, 1e-1), (0.1, 0.0), (0.1, 0.01, 1), (math.inf, 1.0)])
    def test_rejects(self, args):
        with pytest.raises(ParameterError):
            geometric_grid(*args)


class TestBounds:
    def test_values(self):
        assert theory_bound("sqrt_thm31", 2, 0.5, 0.02) == pytest.approx(math.sqrt(0.08))
        assert theory_bound("linear_thm41", 1, 1.0, 0.1, L_LOGCOSH) == pytest.approx(0.1 * L_LOGCOSH)
        assert theory_bound("linear_thm41", 2, 0.5, 0.1, 1.0) == pytest.approx(0.8)
        assert theory_bound("proj_sqrt_cor35", 2, 1.0, 0.08) == pytest.approx(0.4)
        assert math.isnan(theory_bound("none", 1, 1.0, 0.1))
        assert math.isnan(theory_bound("proj_linear_thm43", 1, 1.0, 0.1))
        with pytest.raises(ParameterError):
            theory_bound("bogus", 1, 1.0, 0.1)

    def test_default_kinds(self):
        assert default_bound_kind(instance("sum_max:n=1")) == "sqrt_thm31"
        assert default_bound_kind(instance("logcosh")) == "linear_thm41"
        assert default_bound_kind(instance("ball:n=2,r=1")) == "proj_sqrt_cor35"


class TestFit:
    def test_exact_power_law(self):
        d = geometric_grid(1e-1, 1e-5)
        fit = fit_loglog(RateSweep.from_errors(d, 3 * d**0.5), window=range(len(d)))
        assert fit.slope == pytest.approx(0.5, abs=1e-12)
        assert fit.constant == pytest.approx(3.0, rel=1e-12)
        assert fit.r_squared == 1.0

    def test_perturbed_power_law(self):
        d = geometric_grid(1e-1, 1e-5)
        fit = fit_loglog(RateSweep.from_errors(d, 3 * d**0.5 * (1 + d)))
        assert 0.5 < fit.slope < 0.52
        assert fit.window == tuple(range(2, 9))
        assert 0.0 <= fit.r_squared <= 1.0

    def test_zero_error_is_degenerate(self):
        d = geometric_grid(1e-1, 1e-4)
        with pytest.raises(DegenerateFitError, match="exactness"):
            fit_loglog(RateSweep.from_errors(d, np.zeros_like(d)))

    def test_too_few_points(self):
        d = geometric_grid(1e-1, 1e-2)
        with pytest.raises(DegenerateFitError):
            fit_loglog(RateSweep.from_errors(d, d))

    def test_monte_carlo_window_drops_noisy_points(self):
        d = geometric_grid(1e-1, 1e-4)
        sweep = RateSweep.from_errors(d, d, stderrs=[0.0, 0.0, 0.0, 0.5 * d[3], 0.0, 0.0, 0.0], method="monte_carlo")
        assert default_window(sweep) == (2, 4, 5, 6)


class TestSweeps:
    def test_sum_max_bound_and_slope(self, sum_max_sweeps):
        for n, sweep in sum_max_sweeps.items():
            assert sweep.ok_count == 9
            assert check_bound(sweep).passed, n
            assert 0.45 <= fit_loglog(sweep).slope <= 0.55
            assert sweep.monotone

    def test_quadratic_is_exact(self):
        for ident in ("quadratic:id=iso1", "quadratic:id=iso2", "quadratic:id=diag2"):
            sweep = run_sweep(ident, "quadrature", geometric_grid(1.0, 1e-5))
            assert all(r.error <= 1e-9 for r in sweep.records)

    def test_log_cosh_linear_bound(self):
        sweep = run_sweep("logcosh", "quadrature", geometric_grid(1e-1, 1e-5))
        assert sweep.bound_kind == "linear_thm41"
        report = check_bound(sweep, slack=0.0)
        assert report.passed and report.worst_margin > 0
        assert 0.9 <= fit_loglog(sweep).slope <= 1.1

    def test_ball_projection(self):
        # far enough out that sqrt(delta) is small against the distance to the sphere
        sweep = run_sweep("ball:n=2,r=1", "quadrature", geometric_grid(1e-1, 1e-4), x=[2.0, 0.0])
        assert sweep.bound_kind == "proj_sqrt_cor35"
        assert all(r.error <= math.sqrt(2 * r.delta) for r in sweep.records)
        assert 0.9 <= fit_loglog(sweep).slope <= 1.1

    def test_halfspace_projection(self):
        sweep = run_sweep("halfspace:d=1,n=2", "quadrature", geometric_grid(1e-1, 1e-5))
        assert check_bound(sweep).passed
        assert 0.95 <= fit_loglog(sweep).slope <= 1.05

    def test_monotone_on_catalog(self):
        for ident in catalog_ids():
            sweep = run_sweep(ident, "quadrature", geometric_grid(1e-1, 1e-3))
            assert sweep.monotone, ident

    def test_monotone_ignores_rounding_noise(self):
        d = geometric_grid(1e-1, 1e-3)
        assert RateSweep.from_errors(d, [2e-16, 0.0, 4e-16, 1e-16, 3e-16]).monotone
        assert not RateSweep.from_errors(d, [1e-3, 1e-4, 2e-4, 1e-5, 1e-6]).monotone

    def test_failed_points_are_recorded(self):
        cfg = EstimatorConfig(0.1, 1000)
        sweep = run_sweep("ball:n=2,r=1", "monte_carlo", geometric_grid(1e-1, 1e-4), cfg, x=[2.0, 0.0])
        statuses = [r.status for r in sweep.records]
        assert statuses[0] == "ok" and statuses[-1] == "zero_mass"
        assert all(math.isnan(r.error) for r in sweep.records if not r.ok)
        assert not check_bound(sweep).passed

    def test_monte_carlo_sweep(self):
        cfg = EstimatorConfig(0.1, 100_000, seed=5)
        sweep = run_sweep("sum_max:n=2", "monte_carlo", geometric_grid(1e-1, 1e-3), cfg)
        assert sweep.ok_count == 5 and sweep.seed == 5
        assert check_bound(sweep).passed

    def test_jobs_do_not_change_results(self):
        cfg = EstimatorConfig(0.1, 20_000, seed=3)
        grid = geometric_grid(1e-1, 1e-3)
        a = run_sweep("logcosh", "monte_carlo", grid, cfg, jobs=1)
        b = run_sweep("logcosh", "monte_carlo", grid, cfg, jobs=4)
        assert [r.error for r in a.records] == [r.error for r in b.records]

    def test_instance_target_and_overrides(self):
        inst = instance("logcosh")
        sweep = run_sweep(inst, "quadrature", [0.1, 0.01], x=[2.0], lam=0.5, instance_id="lc")
        assert sweep.instance_id == "lc" and sweep.lam == 0.5

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(method="exact"),
            dict(deltas=[0.01, 0.1]),
            dict(deltas=[0.1, -0.1]),
            dict(deltas=[]),
            dict(config=EstimatorConfig(0.1, 10)),
            dict(bound_kind="thm99"),
        ],
    )
    def test_rejects(self, kwargs):
        args = dict(target="sum_max:n=1", method="quadrature", deltas=[0.1, 0.01])
        args.update(kwargs)
        with pytest.raises(ParameterError):
            run_sweep(**args)

    def test_bound_needs_constant(self):
        sweep = RateSweep.from_errors([0.1, 0.01], [0.1, 0.01], bound_kind="none")
        with pytest.raises(ParameterError):
            check_bound(sweep)


class TestSharpness:
    def test_sum_max_one(self, sum_max_sweeps):
        res = sharpness_constant(sum_max_sweeps[1], 0.5)
        assert res.delta == pytest.approx(1e-5)
        assert res.value == pytest.approx(SQRT_2_OVER_PI, rel=0.02)
        assert res.extrapolated == pytest.approx(SQRT_2_OVER_PI, rel=0.005)
        assert res.interval[0] <= SQRT_2_OVER_PI <= res.interval[1]
        assert not res.widened

    def test_sum_max_three(self, sum_max_sweeps):
        res = sharpness_constant(sum_max_sweeps[3], 0.5)
        assert res.value == pytest.approx(math.sqrt(6 / math.pi), rel=0.02)

    def test_at_delta(self, sum_max_sweeps):
        res = sharpness_constant(sum_max_sweeps[1], 0.5, at_delta=1e-3)
        assert res.delta == pytest.approx(1e-3)

    def test_cone_monte_carlo(self):
        cfg = EstimatorConfig(0.1, 200_000, seed=2)
        sweep = run_sweep("cone:alpha=0.7853981634,n=2", "monte_carlo", geometric_grid(1e-1, 1e-3), cfg)
        res = sharpness_constant(sweep, 0.5)
        target = chi_mean(2) * cap_mean(math.pi / 4, 2)
        assert abs(res.value - target) <= 3 * res.value_stderr

    def test_noisy_tail_is_flagged(self):
        d = geometric_grid(1e-1, 1e-3)
        sweep = RateSweep.from_errors(d, d**0.5, stderrs=0.3 * d**0.5, method="monte_carlo")
        assert sharpness_constant(sweep, 0.5).widened

    def test_zero_error(self):
        d = geometric_grid(1e-1, 1e-3)
        with pytest.raises(DegenerateFitError):
            sharpness_constant(RateSweep.from_errors(d, np.zeros_like(d)), 0.5)


class TestConcentration:
    def test_sum_max_remark_values(self):
        inst = instance("sum_max:n=2")
        rep = concentration_check(inst, 0.01, [0.05, 0.1, 0.5], EstimatorConfig(0.01, 100_000))
        assert rep.passed
        tail = {r.parameter: r for r in rep.rows if r.kind == "tail"}
        assert tail[0.5].bound == pytest.approx(0.08)
        ball = {r.parameter: r for r in rep.rows if r.kind == "ball"}
        assert ball[0.1].observed >= 0.9 - 4 * ball[0.1].stderr

    def test_tiny_radius_is_trivial(self):
        rep = concentration_check(instance("logcosh"), 0.1, [1e-8], EstimatorConfig(0.1, 10_000))
        row = rep.rows[0]
        assert row.bound == 1.0 and row.observed == 1.0 and row.passed

    def test_catalog(self):
        for ident in ("sum_max:n=1", "sum_max:n=3", "logcosh", "quadratic:id=zero2", "ball:n=2,r=1"):
            inst = resolve(ident).instance()
            rep = concentration_check(inst, 0.1, [0.3, 1.0], EstimatorConfig(0.1, 50_000, seed=4))
            assert rep.passed, ident

    def test_scaled_log_cosh(self):
        from stochprox.problems import ProxInstance

        inst = ProxInstance(make_log_cosh(2.0), [0.5], 0.5)
        rep = concentration_check(inst, 0.05, [0.2], EstimatorConfig(0.05, 50_000))
        assert rep.passed
