import numpy as np
import pytest

from fhn_strip.errors import DivergenceError, PreconditionError, ValidationError
from fhn_strip.kernel import eval_G, eval_theta, make_context
from fhn_strip.model import ModelParams, ProblemSpec, SpaceFunction, TimeFunction
from fhn_strip.quadrature import integrate
from fhn_strip.solver_ie import (
    Field,
    Grid,
    InvariantRectangle,
    SolveOptions,
    StripPropagator,
    assemble_N,
    contraction_window,
    cosine_coefficients,
    cosine_values,
    picard_window,
    recover_v,
    residual_ie,
    solve_ie,
    space_fn_coefficients,
    theta_conv_moments,
)

BENCH = ModelParams(0.1, 0.25, 1.0, 0.8, 1.0)
ZERO_S = SpaceFunction.constant(0.0, 1.0)
ZERO_T = TimeFunction.constant(0.0)


def make_spec(u0=None, v0=None, phi1=None, phi2=None, T=1.0, params=BENCH):
    L = params.L
    return ProblemSpec(
        params,
        u0 or SpaceFunction.constant(0.0, L),
        v0 or SpaceFunction.constant(0.0, L),
        phi1 or ZERO_T,
        phi2 or ZERO_T,
        T,
    )


@pytest.fixture(scope="module")
def ctx():
    return make_context(BENCH)


class TestCosineTransforms:
    def test_roundtrip(self):
        rng = np.random.default_rng(2)
        vals = rng.normal(size=(17, 5))
        back = cosine_values(cosine_coefficients(vals, axis=0), axis=0)
        np.testing.assert_allclose(back, vals, atol=1e-12)

    @pytest.mark.parametrize("k", [0, 1, 7, 16])
    def test_single_modes(self, k):
        n = 17
        x = np.linspace(0.0, 1.0, n)
        vals = np.cos(k * np.pi * x)
        c = cosine_coefficients(vals)
        expect = np.zeros(n)
        expect[k] = 1.0
        np.testing.assert_allclose(c, expect, atol=1e-12)

    def test_space_fn_coefficients_kinds(self):
        coeffs = space_fn_coefficients(SpaceFunction.cosine([0.2, 0.0, 0.1], 1.0), 9)
        np.testing.assert_allclose(coeffs[[0, 2]], [0.2, 0.1], atol=1e-15)
        coeffs = space_fn_coefficients(SpaceFunction.constant(0.7, 1.0), 9)
        assert coeffs[0] == 0.7 and np.all(coeffs[1:] == 0)
        # a flux-compatible polynomial (zero slope at both walls) projects
        # onto the cosine basis with fast-decaying coefficients
        f = SpaceFunction.polynomial([0.0, 0.0, 0.3, -0.2], 1.0)
        c = space_fn_coefficients(f, 65)
        x = np.linspace(0.0, 1.0, 65)
        np.testing.assert_allclose(cosine_values(c), f(x), atol=1e-5)


class TestAssembleN:
    def test_zero_data(self, ctx):
        grid = Grid.regular(1.0, 1.0, 9, 17)
        N = assemble_N(make_spec(), grid, ctx)
        np.testing.assert_array_equal(N.values, 0.0)

    def test_constant_initial_profile_against_green_row_quadrature(self, ctx):
        # u0 = c alone gives N(x,t) = c * integral of G(x, xi, t) over xi,
        # cross-checked against adaptive quadrature of the image-sum kernel.
        c = 0.3
        grid = Grid.regular(1.0, 0.8, 9, 9)
        N = assemble_N(make_spec(u0=SpaceFunction.constant(c, 1.0), T=0.8), grid, ctx)
        for xi_idx, ti in [(0, 2), (4, 4), (8, 8), (2, 1)]:
            x = grid.x_nodes[xi_idx]
            t = grid.t_nodes[ti]
            row = integrate(
                lambda xi: eval_G(x, xi, t, ctx), 0.0, 1.0, tol=1e-11
            )
            assert N.values[xi_idx, ti] == pytest.approx(c * row.value, abs=1e-8)

    def test_initial_condition_column(self, ctx):
        grid = Grid.regular(1.0, 1.0, 17, 9)
        u0 = SpaceFunction.cosine([0.05, 0.1, 0.0, 0.02], 1.0)
        N = assemble_N(make_spec(u0=u0), grid, ctx)
        np.testing.assert_allclose(N.values[:, 0], u0(grid.x_nodes), atol=1e-12)

    def test_slow_data_term_sign(self, ctx):
        # v0 = c > 0 contributes negatively while the Green mass is positive.
        grid = Grid.regular(1.0, 0.5, 9, 17)
        N = assemble_N(make_spec(v0=SpaceFunction.constant(0.5, 1.0), T=0.5), grid, ctx)
        assert np.all(N.values[:, 1:] < 0.0)
        np.testing.assert_allclose(N.values[:, 0], 0.0, atol=1e-14)

    def test_boundary_moments_match_kernel_quadrature(self, ctx):
        grid = Grid.regular(1.0, 0.4, 9, 5)
        m0, m1 = theta_conv_moments(grid, ctx, tol=1e-10)
        dt = grid.dt
        for x_idx in (0, 2, 8):
            x = grid.x_nodes[x_idx]
            for j in (0, 1, 3):
                lo, hi = grid.t_nodes[j], grid.t_nodes[j + 1]
                if j == 0 and x < 0.2:
                    # wall singularity: integrate theta * sqrt(s) against the
                    # inverse-sqrt weight
                    ref0 = integrate(
                        lambda s: eval_theta(x, s, ctx) * np.sqrt(s),
                        lo, hi, weight="inv_sqrt_lower", tol=1e-11,
                    ).value
                else:
                    ref0 = integrate(
                        lambda s: eval_theta(x, s, ctx), lo, hi, tol=1e-11
                    ).value
                assert m0[x_idx, j] == pytest.approx(ref0, abs=5e-9)
                ref1 = integrate(
                    lambda s: eval_theta(x, s, ctx) * np.sqrt(s) * (s - lo) / dt
                    if j == 0 and x < 0.2
                    else eval_theta(x, s, ctx) * (s - lo) / dt,
                    lo, hi,
                    weight="inv_sqrt_lower" if (j == 0 and x < 0.2) else "none",
                    tol=1e-11,
                ).value
                assert m1[x_idx, j] == pytest.approx(ref1, abs=5e-9)

    def test_spec_grid_mismatch(self, ctx):
        grid = Grid.regular(1.0, 2.0, 9, 9)
        with pytest.raises(ValidationError):
            assemble_N(make_spec(T=1.0), grid, ctx)


class TestPicardWindow:
    def test_zero_fixed_point_single_sweep(self, ctx):
        grid = Grid.regular(1.0, 1.0, 9, 17)
        N = assemble_N(make_spec(), grid, ctx)
        u = Field(np.zeros((9, 17)), grid, "u")
        out, stats = picard_window(N, u, (1, 17), make_spec(), grid, ctx)
        assert stats.iterations == 1
        assert stats.final_residual == 0.0
        np.testing.assert_array_equal(out.values, 0.0)

    def test_divergence_detected(self, ctx):
        grid = Grid.regular(1.0, 1.0, 9, 17)
        N = Field(np.full((9, 17), 10.0), grid, "N")
        u = Field(np.zeros((9, 17)), grid, "u")
        with pytest.raises(DivergenceError):
            picard_window(N, u, (1, 17), make_spec(), grid, ctx)

    def test_geometric_residual_decay(self, ctx):
        # Successive sweeps on a small-amplitude window must contract at
        # least as fast as the recorded a-priori estimate.
        grid = Grid.regular(1.0, 0.5, 17, 65)
        spec = make_spec(u0=SpaceFunction.cosine([0.0, 0.05], 1.0), T=0.5)
        prop = StripPropagator(grid, ctx)
        N = assemble_N(spec, grid, ctx, propagator=prop)
        from fhn_strip.special import nagumo_F_nonlinear

        U = np.tile(N.values[:, :1], (1, 65))
        residuals = []
        for _ in range(6):
            U_new = N.values + prop.apply_source(nagumo_F_nonlinear(U, BENCH.a))
            residuals.append(float(np.max(np.abs(U_new - U))))
            U = U_new
        _, q = contraction_window(ctx, 2.0, grid.dt, 0.5, target=np.inf)
        ratios = [r2 / r1 for r1, r2 in zip(residuals, residuals[1:]) if r1 > 1e-14]
        assert all(r <= q for r in ratios)
        # and the estimate itself respects the coarse decay-mass envelope
        from fhn_strip.special import lipschitz_F

        assert q <= lipschitz_F(2.0, BENCH.a) * ctx.consts.beta0 * 2.0


class TestSolveIE:
    def test_zero_data(self, ctx):
        grid = Grid.regular(1.0, 1.0, 9, 33)
        sol = solve_ie(make_spec(), grid, ctx)
        assert sol.u.sup_norm() == 0.0
        assert sol.v.sup_norm() == 0.0
        assert residual_ie(sol, ctx) < 1e-12

    def test_small_amplitude_certificate(self, ctx):
        grid = Grid.regular(1.0, 1.0, 17, 129)
        spec = make_spec(u0=SpaceFunction.cosine([0.0, 0.05], 1.0))
        opts = SolveOptions(tol_fix=1e-10)
        sol = solve_ie(spec, grid, ctx, opts)
        assert residual_ie(sol, ctx, opts) <= 10 * opts.tol_fix
        assert sol.report.converged
        assert all(w.final_residual <= 1e-10 for w in sol.report.windows)

    def test_perturbed_solution_raises_residual(self, ctx):
        grid = Grid.regular(1.0, 1.0, 17, 129)
        spec = make_spec(u0=SpaceFunction.cosine([0.0, 0.05], 1.0))
        sol = solve_ie(spec, grid, ctx)
        from dataclasses import replace

        bad_u = Field(sol.u.values + 0.1, grid, "u")
        bad = replace(sol, u=bad_u)
        assert residual_ie(bad, ctx) >= 0.05

    def test_linearized_is_data_term(self, ctx):
        grid = Grid.regular(1.0, 1.0, 9, 33)
        spec = make_spec(u0=SpaceFunction.cosine([0.1], 1.0))
        sol = solve_ie(spec, grid, ctx, SolveOptions(linearized=True))
        N = assemble_N(spec, grid, ctx)
        np.testing.assert_array_equal(sol.u.values, N.values)
        assert sol.report.windows[0].iterations == 1

    def test_initial_data_outside_rectangle(self, ctx):
        grid = Grid.regular(1.0, 1.0, 9, 33)
        spec = make_spec(u0=SpaceFunction.constant(0.5, 1.0))
        with pytest.raises(PreconditionError):
            solve_ie(spec, grid, ctx, SolveOptions(rect=InvariantRectangle(-0.1, 0.1, -1, 1)))

    def test_reflection_symmetry_of_flux_terms(self, ctx):
        # phi2 = -c mirrors phi1 = c through x -> L - x.
        grid = Grid.regular(1.0, 0.5, 17, 65)
        c = 0.05
        left = solve_ie(
            make_spec(phi1=TimeFunction.constant(c), T=0.5), grid, ctx,
            SolveOptions(linearized=True),
        )
        right = solve_ie(
            make_spec(phi2=TimeFunction.constant(-c), T=0.5), grid, ctx,
            SolveOptions(linearized=True),
        )
        np.testing.assert_allclose(
            left.u.values, right.u.values[::-1, :], atol=1e-10
        )


class TestRecoverV:
    def test_zero_potential(self, ctx):
        grid = Grid.regular(1.0, 1.0, 9, 65)
        spec = make_spec(v0=SpaceFunction.constant(0.4, 1.0))
        u = Field(np.zeros((9, 65)), grid, "u")
        v = recover_v(u, spec, grid)
        expect = 0.4 * np.exp(-BENCH.beta * grid.t_nodes)
        np.testing.assert_allclose(v.values, np.tile(expect, (9, 1)), rtol=1e-13)

    def test_unit_potential_closed_form(self):
        # b/beta*(1 - exp(-beta t)) with beta=2, b=1 at t=1 is 0.432332.
        p = ModelParams(1.0, 0.5, 1.0, 2.0, 1.0)
        grid = Grid.regular(1.0, 1.0, 9, 256)
        spec = make_spec(params=p)
        u = Field(np.ones((9, 256)), grid, "u")
        v = recover_v(u, spec, grid)
        expect = 0.5 * (1.0 - np.exp(-2.0 * grid.t_nodes))
        assert abs(v.values[0, -1] - 0.5 * (1 - np.exp(-2.0))) < 2e-4
        np.testing.assert_allclose(v.values[4], expect, atol=2e-4)

    def test_recovery_equation_residual_second_order(self, ctx):
        # v_t - (b u - beta v) -> 0 at second order under time refinement.
        def run(nt):
            grid = Grid.regular(1.0, 1.0, 5, nt)
            t = grid.t_nodes
            u_vals = np.tile(np.exp(-t) * np.cos(t), (5, 1))
            u = Field(u_vals, grid, "u")
            v = recover_v(u, make_spec(), grid)
            dv = np.gradient(v.values, t, axis=1, edge_order=2)
            resid = dv - (BENCH.b * u_vals - BENCH.beta * v.values)
            return np.max(np.abs(resid[:, 2:-2]))

        e1, e2 = run(101), run(201)
        assert e1 / e2 > 3.0


class TestCrossSolver:
    def test_benchmark_agreement_fast(self, ctx):
        from fhn_strip.solver_fd import FDConfig, solve_fd

        spec = make_spec(u0=SpaceFunction.cosine([0.0, 0.1], 1.0), T=2.0)
        grid = Grid.regular(1.0, 2.0, 33, 257)
        ie = solve_ie(spec, grid, ctx)
        fd = solve_fd(spec, FDConfig(nx=129, dt=2.0 / 1024))
        diff = np.max(np.abs(ie.u.values - fd.u.values[::4, ::4]))
        assert diff < 1e-3
        diff_v = np.max(np.abs(ie.v.values - fd.v.values[::4, ::4]))
        assert diff_v < 1e-3
