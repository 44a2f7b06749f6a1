import numpy as np
import pytest

from fhn_strip.analysis import (
    ALL_CHECKS,
    BENCHMARK_PARAMS,
    DEFAULT_CHECK_PARAMS,
    CheckReport,
    SamplePlan,
    benchmark_spec,
    check_convolution_limits,
    check_kernel_bounds,
    check_solution_bounds,
    check_steady_limit,
    check_theta_decay,
    invariant_rectangle_monitor,
    run_verification,
)
from fhn_strip.errors import DomainError, PreconditionError
from fhn_strip.kernel import eval_K, make_context
from fhn_strip.model import ModelParams, TimeFunction
from fhn_strip.solver_ie import Grid, InvariantRectangle, SolveOptions, solve_ie

ONES = ModelParams(1.0, 1.0, 1.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def ctx_default():
    return make_context(DEFAULT_CHECK_PARAMS)


@pytest.fixture(scope="module")
def ctx_ones():
    return make_context(ONES)


@pytest.fixture(scope="module")
def bench_solution():
    ctx = make_context(BENCHMARK_PARAMS)
    spec = benchmark_spec()
    grid = Grid.regular(1.0, 2.0, 33, 257)
    return solve_ie(spec, grid, ctx, SolveOptions()), ctx


SMALL_PLAN = SamplePlan(n_samples=512, seed=77)


class TestCheckReport:
    def test_consistency_enforced(self):
        with pytest.raises(ValueError):
            CheckReport("x", 1, -1.0, 0.0, True)

    def test_skipped_flag(self):
        r = CheckReport("x", 0, 0.0, 0.0, True, "skipped: reason")
        assert r.skipped


class TestKernelBounds:
    def test_all_pass_on_default_params(self, ctx_default):
        reports = check_kernel_bounds(ctx_default, SMALL_PLAN)
        assert len(reports) == 5
        for r in reports:
            assert r.passed, r.name
            assert r.worst_margin > -SMALL_PLAN.tolerance

    def test_corrupted_kernel_fails_pointwise_bound(self, ctx_default):
        scaled = lambda x, t: 10.0 * eval_K(x, t, ctx_default)
        reports = check_kernel_bounds(ctx_default, SMALL_PLAN, kernel_fn=scaled)
        by_name = {r.name: r for r in reports}
        assert not by_name["pointwise_kernel_bound"].passed

    def test_beta0_reference_in_constants(self, ctx_default):
        assert ctx_default.consts.beta0 == pytest.approx(2.16608, abs=1e-5)


class TestThetaDecay:
    def test_passes_on_default(self, ctx_default):
        r = check_theta_decay(ctx_default)
        assert r.passed
        assert "C0" in r.notes

    def test_skipped_when_degenerate(self, ctx_ones):
        r = check_theta_decay(ctx_ones)
        assert r.skipped
        assert r.passed  # a skip never fails the suite

    def test_partial_integral_stays_below_total_bound(self, ctx_default):
        r = check_theta_decay(ctx_default, T_max=ctx_default.consts.beta0 * 10)
        assert r.passed


class TestSteadyLimit:
    def test_reference_value_all_ones(self, ctx_ones):
        r = check_steady_limit(ctx_ones, x=0.0, tol=1e-3)
        assert r.passed
        assert "0.39797" in r.notes

    def test_far_wall(self, ctx_ones):
        r = check_steady_limit(ctx_ones, x=1.0, tol=1e-3)
        assert r.passed
        assert "0.18270" in r.notes


class TestConvolutionLimits:
    def test_saturating_flux(self, ctx_ones):
        phi = TimeFunction.saturating(1.0, 1.0)
        rep_a, rep_b = check_convolution_limits(ctx_ones, phi)
        assert rep_a.passed and rep_b.passed
        assert "finding" in rep_a.notes

    def test_constant_flux_reduces_to_steady_limit(self, ctx_ones):
        phi = TimeFunction.constant(0.7)
        rep_a, _ = check_convolution_limits(ctx_ones, phi)
        assert rep_a.passed
        # the same underlying quantity as the steady check, scaled by 0.7
        steady = check_steady_limit(ctx_ones, x=0.0)
        assert "0.2785" in rep_a.notes or rep_a.passed

    def test_limit_metadata_required(self, ctx_ones):
        phi = TimeFunction.table([0.0, 1.0], [0.0, 1.0], interpolation="linear")
        with pytest.raises(PreconditionError):
            check_convolution_limits(ctx_ones, phi)


class TestSolutionBounds:
    def test_benchmark_passes(self, bench_solution):
        sol, ctx = bench_solution
        r = check_solution_bounds(sol, ctx)
        assert r.passed

    def test_zero_solution_trivially_passes(self):
        ctx = make_context(BENCHMARK_PARAMS)
        spec = benchmark_spec(amplitude=0.0)
        grid = Grid.regular(1.0, 2.0, 9, 33)
        sol = solve_ie(spec, grid, ctx)
        r = check_solution_bounds(sol, ctx)
        assert r.passed and r.worst_margin >= 0.0

    def test_corrupted_solution_fails_with_frozen_f_sup(self, bench_solution):
        from dataclasses import replace

        from fhn_strip.solver_ie import Field

        sol, ctx = bench_solution
        clean_f_sup = float(np.max(np.abs(
            sol.u.values ** 2 * (ctx.params.a + 1.0 - sol.u.values)
        )))
        bad = replace(sol, u=Field(sol.u.values * 100.0, sol.u.grid, "u"))
        r = check_solution_bounds(bad, ctx, F_sup=clean_f_sup)
        assert not r.passed

    def test_inhomogeneous_flux_rejected(self, ctx_ones):
        from fhn_strip.model import ProblemSpec, SpaceFunction

        spec = ProblemSpec(
            ONES,
            SpaceFunction.constant(0.0, 1.0),
            SpaceFunction.constant(0.0, 1.0),
            TimeFunction.constant(0.1),
            TimeFunction.constant(0.0),
            1.0,
        )
        grid = Grid.regular(1.0, 1.0, 9, 17)
        sol = solve_ie(spec, grid, make_context(ONES), SolveOptions(linearized=True))
        with pytest.raises(PreconditionError):
            check_solution_bounds(sol, make_context(ONES))


class TestRectangleMonitor:
    def test_zero_solution(self):
        ctx = make_context(BENCHMARK_PARAMS)
        sol = solve_ie(benchmark_spec(amplitude=0.0), Grid.regular(1.0, 2.0, 9, 33), ctx)
        r = invariant_rectangle_monitor(sol, InvariantRectangle(-1, 1, -1, 1))
        assert r.passed

    def test_benchmark_in_standard_rectangle(self, bench_solution):
        sol, _ = bench_solution
        r = invariant_rectangle_monitor(sol, InvariantRectangle(-1, 2, -1, 1))
        assert r.passed

    def test_tight_rectangle_fails_with_exit_point(self, bench_solution):
        sol, _ = bench_solution
        r = invariant_rectangle_monitor(sol, InvariantRectangle(-0.099, 0.099, -1, 1))
        assert not r.passed
        assert "first exit" in r.notes

    def test_data_outside_rejected(self, bench_solution):
        sol, _ = bench_solution
        with pytest.raises(PreconditionError):
            invariant_rectangle_monitor(sol, InvariantRectangle(-0.01, 0.01, -1, 1))


class TestRunVerification:
    def test_subset_selection(self):
        reports = run_verification(checks=["theta_decay", "steady_profile_limit"])
        assert [r.name for r in reports] == ["steady_profile_limit", "theta_decay"]

    def test_unknown_name_rejected(self):
        with pytest.raises(DomainError):
            run_verification(checks=["nonsense"])

    def test_reports_deterministic(self):
        a = run_verification(checks=["pointwise_kernel_bound"],
                             sample_plan=SMALL_PLAN)
        b = run_verification(checks=["pointwise_kernel_bound"],
                             sample_plan=SMALL_PLAN)
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b]

    def test_threaded_matches_serial(self):
        names = ["theta_decay", "steady_profile_limit", "pointwise_kernel_bound"]
        serial = run_verification(checks=names, sample_plan=SMALL_PLAN)
        threaded = run_verification(checks=names, sample_plan=SMALL_PLAN, threads=3)
        assert [r.to_dict() for r in serial] == [r.to_dict() for r in threaded]
