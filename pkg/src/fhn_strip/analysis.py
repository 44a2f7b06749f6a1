"""Executable verification of the kernel bounds, decay statements, steady
limits, convolution asymptotics and solution estimates.

Every check returns a :class:`CheckReport` whose ``worst_margin`` is the
minimum of (bound - quantity) over the sampled set: negative means a
violation. Violations are data, not exceptions; the suite exists to report
margins, including for bounds that may be stated tightly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator, RegularGridInterpolator
from scipy.stats import qmc

from .errors import AccuracyError, DomainError, PreconditionError
from .kernel import (
    KernelContext,
    eval_K,
    eval_theta,
    gauss_rule,
    kernel_envelope,
    make_context,
    steady_profile,
    theta_tail_bound,
)
from .model import ModelParams, ProblemSpec, SpaceFunction, TimeFunction
from .quadrature import integrate
from .solver_ie import Grid, Solution, SolveOptions, solve_ie
from .special import eval_E

# Kernel studies run here by default; the kinetic threshold sits outside the
# excitable range on purpose, which the bound statements do not require.
DEFAULT_CHECK_PARAMS = ModelParams(1.0, 2.0, 1.0, 1.0, 1.0)

# Homogeneous benchmark exercised by the solution-level checks.
BENCHMARK_PARAMS = ModelParams(0.1, 0.25, 1.0, 0.8, 1.0)


def benchmark_spec(amplitude: float = 0.1, T: float = 2.0) -> ProblemSpec:
    p = BENCHMARK_PARAMS
    zero_t = TimeFunction.constant(0.0)
    return ProblemSpec(
        p,
        SpaceFunction.cosine([0.0, amplitude], p.L),
        SpaceFunction.constant(0.0, p.L),
        zero_t,
        zero_t,
        T,
    )


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one bound or asymptotic verification."""

    name: str
    samples: int
    worst_margin: float
    tolerance: float
    passed: bool
    notes: str = ""

    def __post_init__(self):
        if self.passed != (self.worst_margin >= -self.tolerance):
            raise ValueError("inconsistent pass flag for the recorded margin")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "worst_margin": self.worst_margin,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "notes": self.notes,
        }

    @property
    def skipped(self) -> bool:
        return self.notes.startswith("skipped")


def _report(name: str, samples: int, margin: float, tol: float, notes: str = "") -> CheckReport:
    return CheckReport(name, samples, float(margin), tol, bool(margin >= -tol), notes)


def _skipped(name: str, reason: str) -> CheckReport:
    return CheckReport(name, 0, 0.0, 0.0, True, f"skipped: {reason}")


@dataclass(frozen=True)
class SamplePlan:
    """Quasi-random sampling policy shared by the kernel-bound checks."""

    n_samples: int = 10_000
    seed: int = 20240601
    r_max: float = 5.0
    t_max: float = 10.0
    tolerance: float = 1e-8

    def draw(self) -> np.ndarray:
        engine = qmc.Sobol(d=2, scramble=True, seed=self.seed)
        m = max(1, math.ceil(math.log2(max(2, self.n_samples))))
        pts = engine.random_base2(m)[: self.n_samples]
        return pts


# ---------------------------------------------------------------------------
# Kernel bound suite
# ---------------------------------------------------------------------------

def _abs_kernel_row_integral_table(ctx: KernelContext, t_grid: np.ndarray,
                                   kernel_fn: Callable) -> np.ndarray:
    """Whole-line integral of |K(., t)| on a table of times.

    Composite Gauss panels on [0, 14*sqrt(eps*t)] (columns scale with the
    diffusive width); the remainder beyond the window is bounded by the
    envelope tail erfc(7) ~ 4e-23 and ignored.
    """
    p = ctx.params
    nodes, weights = gauss_rule(8)
    n_panels = 48
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    unit = (mid[:, None] + half * nodes[None, :]).ravel()
    w_unit = np.tile(half * weights, n_panels)
    out = np.empty_like(t_grid)
    for i, t in enumerate(t_grid):
        width = 14.0 * math.sqrt(p.epsilon * t)
        y = unit * width
        vals = np.abs(kernel_fn(y, np.full_like(y, t)))
        out[i] = 2.0 * width * float(vals @ w_unit)
    return out


def _theta_abs_cumulative_tables(ctx: KernelContext, t_grid: np.ndarray, ny: int = 257):
    """Cumulative integral of |theta(y, t)| in y, tabulated over (y, t).

    The y nodes cluster quadratically at the wall, where the kernel peak
    narrows like sqrt(t) at small times.
    """
    p = ctx.params
    u = np.linspace(0.0, 1.0, ny)
    y = p.L * u * u
    th = np.abs(eval_theta(y[:, None], t_grid[None, :], ctx))
    dy = np.diff(y)
    cum = np.zeros((ny, t_grid.size))
    cum[1:, :] = np.cumsum(0.5 * (th[1:, :] + th[:-1, :]) * dy[:, None], axis=0)
    return y, cum


def check_kernel_bounds(ctx: KernelContext, sample_plan: Optional[SamplePlan] = None,
                        kernel_fn: Optional[Callable] = None) -> list:
    """The five kernel inequalities, sampled on a Sobol plan.

    ``kernel_fn`` (a test hook) replaces the fundamental-solution evaluator
    in the K-based checks; the image-sum checks always use the context.
    """
    plan = sample_plan or SamplePlan()
    p = ctx.params
    consts = ctx.consts
    # Tables tolerate 1e-9 kernel error, an order under the margin slack.
    tab_ctx = replace(ctx, tol_kernel=max(ctx.tol_kernel, 1e-9))
    k_fn = kernel_fn or (lambda x, t: eval_K(x, t, tab_ctx))
    pts = plan.draw()
    r = plan.r_max * (1.0 - pts[:, 0])
    t = plan.t_max * (1.0 - pts[:, 1])
    reports = []
    note_seed = f"sobol seed {plan.seed}"

    # |K| against the Gaussian-bracket envelope, pointwise.
    lhs = np.abs(k_fn(r * math.sqrt(p.epsilon), t))
    rhs = np.exp(-r * r / (4.0 * t)) / (2.0 * np.sqrt(math.pi * p.epsilon * t)) \
        * kernel_envelope(t, ctx)
    reports.append(_report(
        "pointwise_kernel_bound", r.size, np.min(rhs - lhs), plan.tolerance,
        f"{note_seed}; scaled offsets in (0, {plan.r_max}], times in (0, {plan.t_max}]",
    ))

    # Whole-line row integral of |K| against the decay bound, as a function
    # of time (translation invariance), interpolated from a dense table.
    t_lo = float(np.min(t)) * 0.5
    t_table = np.geomspace(t_lo, plan.t_max, 240)
    row = _abs_kernel_row_integral_table(ctx, t_table, k_fn)
    row_interp = PchipInterpolator(t_table, row)
    lhs_row = row_interp(t)
    rhs_row = np.exp(-p.a * t) + math.sqrt(p.b) * math.pi * t * np.exp(-consts.omega * t)
    reports.append(_report(
        "kernel_row_integral", t.size, np.min(rhs_row - lhs_row), plan.tolerance,
        f"{note_seed}; 240-node quadrature table, monotone interpolation",
    ))

    # Time-cumulative row integral against beta0.
    cum = row_interp.antiderivative()
    stub = t_table[0] * 0.5 * (1.0 + row[0])  # coarse bound on the [0, t0] sliver
    lhs_cum = cum(t) - cum(t_table[0]) + stub
    reports.append(_report(
        "kernel_time_integral", t.size, float(np.min(consts.beta0 - lhs_cum)),
        plan.tolerance,
        f"{note_seed}; cumulative of the row-integral table plus an origin sliver bound",
    ))

    # Strip row integral of |theta| against the same decay form, sampled in
    # (x, t): the row integral splits into two wall-anchored cumulatives.
    x = p.L * pts[:, 0]
    y_grid, theta_cum = _theta_abs_cumulative_tables(tab_ctx, t_table)
    interp = RegularGridInterpolator((y_grid, t_table), theta_cum)
    lhs_theta = interp(np.column_stack([x, t])) + interp(np.column_stack([p.L - x, t]))
    rhs_theta = (1.0 + math.sqrt(p.b) * math.pi * t) * np.exp(-consts.omega * t)
    reports.append(_report(
        "theta_row_integral", x.size, np.min(rhs_theta - lhs_theta), plan.tolerance,
        f"{note_seed}; 257x240 wall-clustered cumulative table, linear interpolation",
    ))

    # Its time cumulative against beta0.
    full_row = theta_cum[-1, :]  # integral over the whole strip at x = 0
    # For arbitrary x the row integral is below the x = 0 + reflected sum;
    # integrate the tabulated rows in t per sample via the x = 0 and L - x
    # split evaluated on the cumulative-in-t tables.
    dt_w = np.gradient(t_table)
    cum_t = np.cumsum(theta_cum * dt_w[None, :], axis=1)
    interp_ct = RegularGridInterpolator((y_grid, t_table), cum_t)
    lhs_theta_cum = (
        interp_ct(np.column_stack([x, t])) + interp_ct(np.column_stack([p.L - x, t]))
        + t_table[0] * 1.0
    )
    reports.append(_report(
        "theta_time_integral", x.size, float(np.min(consts.beta0 - lhs_theta_cum)),
        plan.tolerance,
        f"{note_seed}; rectangle-rule cumulative over the table grid",
    ))
    return reports


# ---------------------------------------------------------------------------
# Decay, steady limit, convolution limits
# ---------------------------------------------------------------------------

def _theta_product_integral(ctx: KernelContext, x: float, T: float,
                            factor: Optional[Callable] = None,
                            absolute: bool = False, tol: float = 1e-9) -> float:
    """integral over [0, T] of theta(x, s) * factor(T - s) with wall-aware
    handling of the 1/sqrt singularity of the first span when x sits on a
    wall image."""
    p = ctx.params
    edges = [0.0]
    step = min(1.0, T)
    while edges[-1] < T:
        edges.append(min(edges[-1] + step, T))
        step *= 4.0
    folded = abs(x - 2.0 * p.L * round(x / (2.0 * p.L)))
    singular_first = folded < 1e-9 * max(1.0, p.L)

    def f(s):
        th = eval_theta(x, s, ctx)
        if absolute:
            th = np.abs(th)
        if factor is not None:
            th = th * factor(T - s)
        return th

    total = 0.0
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        if i == 0 and singular_first:
            res = integrate(lambda s: f(s) * np.sqrt(s), lo, hi,
                            weight="inv_sqrt_lower", tol=tol)
        else:
            res = integrate(f, lo, hi, tol=tol)
        total += res.value
    return total


def check_theta_decay(ctx: KernelContext, x: float = 0.0,
                      T_max: Optional[float] = None,
                      tol_decay: float = 1e-6) -> CheckReport:
    """Vanishing of theta at the far horizon plus the total-variation bound.

    Skipped (with status) when the total-integral constant is undefined,
    i.e. for degenerate kinetic rates.
    """
    consts = ctx.consts
    if consts.C0 is None:
        return _skipped("theta_decay", "C0 undefined for a = beta")
    T = T_max if T_max is not None else 40.0 / consts.omega
    theta_T = abs(float(eval_theta(x, T, ctx)))
    margin_decay = tol_decay - theta_T
    partial = _theta_product_integral(ctx, x, T, absolute=True)
    tail = theta_tail_bound(T, ctx)
    margin_total = consts.C0 - (partial + tail)
    worst = min(margin_decay, margin_total)
    notes = (
        f"|theta({x:g}, {T:g})| = {theta_T:.3e}; "
        f"integral {partial:.6f} + tail {tail:.3e} vs C0 = {consts.C0:.6f}"
    )
    return _report("theta_decay", 2, worst, 1e-10, notes)


def check_steady_limit(ctx: KernelContext, x: float = 0.0,
                       tol: float = 1e-3) -> CheckReport:
    """Convergence of the running time integral of theta to the steady
    profile, with the horizon chosen so the analytic tail stays under tol/2."""
    consts = ctx.consts
    omega = consts.omega
    T = 8.0 / omega
    while theta_tail_bound(T, ctx) > 0.5 * tol:
        T *= 2.0
        if T > 400.0 / omega:
            raise AccuracyError("tail bound cannot reach tol/2 at any usable horizon")
    value = _theta_product_integral(ctx, x, T)
    target = steady_profile(x, ctx)
    margin = tol - abs(value - target)
    notes = (
        f"T = {T:g}; running integral {value:.8f} vs steady profile {target:.8f} "
        f"(same closed form as the zero-frequency transform)"
    )
    return _report("steady_profile_limit", 1, margin, 0.0, notes)


def check_convolution_limits(ctx: KernelContext, phi: TimeFunction,
                             x: float = 0.0, T: Optional[float] = None):
    """Large-time boundary-convolution checks for a declared flux programme.

    Report A compares (theta(x,.) * phi)(T) with phi_limit * steady_profile(x).
    Report B evaluates (theta(x,.) * dphi/dt)(T) against zero, the form in
    which the vanishing statement is realised. A convergent flux with a
    nonzero limit makes A's target nonzero while B still vanishes; that
    contrast is recorded as a finding in the notes, not as a failure.
    """
    if phi.limit is None:
        raise PreconditionError("flux programme must declare a limit")
    consts = ctx.consts
    horizon = T if T is not None else 40.0 / consts.omega
    target = phi.limit * steady_profile(x, ctx)
    tol = max(1e-3, 1e-2 * abs(target))

    val_a = _theta_product_integral(ctx, x, horizon, factor=phi)
    margin_a = tol - abs(val_a - target)
    report_a = _report(
        "flux_convolution_limit", 1, margin_a, 0.0,
        f"T = {horizon:g}; convolution {val_a:.8f} vs limit target {target:.8f}; "
        "finding: a convergent flux drives the convolution to the nonzero "
        "steady product, so the literal vanishing statement applies to "
        "report B's derivative form, not to this one",
    )

    if not phi.derivative_in_l1:
        raise PreconditionError("flux derivative must be declared integrable")
    val_b = _theta_product_integral(ctx, x, horizon, factor=phi.derivative)
    tol_b = 1e-2
    margin_b = tol_b - abs(val_b)
    report_b = _report(
        "flux_derivative_convolution", 1, margin_b, 0.0,
        f"T = {horizon:g}; derivative convolution {val_b:.3e} vs 0",
    )
    return report_a, report_b


# ---------------------------------------------------------------------------
# Solution-level checks
# ---------------------------------------------------------------------------

def check_solution_bounds(sol: Solution, ctx: KernelContext,
                          F_sup: Optional[float] = None) -> CheckReport:
    """Pointwise a-priori estimates for a homogeneous-flux solution.

    ``F_sup`` overrides the realised sup of |u^2(a+1-u)| (the default),
    which exists because a corrupted field inflates its own realised bound.
    """
    spec = sol.spec
    if not spec.homogeneous_flux():
        raise PreconditionError("solution bounds require homogeneous flux data")
    p = spec.params
    consts = ctx.consts
    grid = sol.u.grid
    t = grid.t_nodes
    u = sol.u.values
    v = sol.v.values
    u0_norm = spec.u0.sup_norm()
    v0_norm = spec.v0.sup_norm()
    if F_sup is None:
        F_sup = float(np.max(np.abs(u * u * (p.a + 1.0 - u))))
    E = eval_E(t, p.a, p.beta)
    decay = (1.0 + math.pi * math.sqrt(p.b) * t) * np.exp(-consts.omega * t)
    rhs_u = 2.0 * (u0_norm * decay + v0_norm * E + consts.beta0 * F_sup)
    rhs_v = v0_norm * np.exp(-p.beta * t) + 2.0 * (
        p.b * (u0_norm + t * v0_norm) * E + p.b / (p.a * p.beta) * F_sup
    )
    margin_u = np.min(rhs_u[None, :] - np.abs(u))
    margin_v = np.min(rhs_v[None, :] - np.abs(v))
    worst = float(min(margin_u, margin_v))
    notes = (
        f"|u0| = {u0_norm:g}, |v0| = {v0_norm:g}, F sup = {F_sup:g}; "
        f"potential margin {margin_u:.3e}, recovery margin {margin_v:.3e}"
    )
    return _report("solution_sup_bounds", u.size + v.size, worst, 1e-10, notes)


def invariant_rectangle_monitor(sol: Solution, rect) -> CheckReport:
    """Pass iff every (u, v) sample stays inside the rectangle.

    The first exit point (if any) is recorded in the notes.
    """
    grid = sol.u.grid
    u = sol.u.values
    v = sol.v.values
    u0 = u[:, 0]
    v0 = v[:, 0]
    if not (rect.contains_u(u0) and rect.contains_v(v0)):
        raise PreconditionError("initial data must start inside the rectangle")
    margins = np.minimum.reduce([
        u - rect.u_min, rect.u_max - u, v - rect.v_min, rect.v_max - v,
    ])
    worst = float(np.min(margins))
    notes = f"rectangle [{rect.u_min}, {rect.u_max}] x [{rect.v_min}, {rect.v_max}]"
    if worst < 0:
        # first violating time, then position
        bad = np.argwhere(margins < 0)
        first = bad[np.argmin(bad[:, 1] * grid.nx + bad[:, 0])]
        notes += (
            f"; first exit at x = {grid.x_nodes[first[0]]:g}, "
            f"t = {grid.t_nodes[first[1]]:g}"
        )
    return _report("invariant_rectangle", u.size, worst, 0.0, notes)


# ---------------------------------------------------------------------------
# Named registry for the verification entry point
# ---------------------------------------------------------------------------

KERNEL_CHECKS = (
    "pointwise_kernel_bound",
    "kernel_row_integral",
    "kernel_time_integral",
    "theta_row_integral",
    "theta_time_integral",
)
ASYMPTOTIC_CHECKS = (
    "theta_decay",
    "steady_profile_limit",
    "flux_convolution_limit",
    "flux_derivative_convolution",
)
SOLUTION_CHECKS = ("solution_sup_bounds", "invariant_rectangle")
ALL_CHECKS = KERNEL_CHECKS + ASYMPTOTIC_CHECKS + SOLUTION_CHECKS


def run_verification(params: Optional[ModelParams] = None,
                     checks: Optional[list] = None,
                     sample_plan: Optional[SamplePlan] = None,
                     threads: int = 1) -> list:
    """Run a named subset (default: all) of the verification suite.

    Kernel and asymptotic checks run on ``params`` (default study
    parameters); the solution checks always run on the small homogeneous
    benchmark so they exercise a genuine nonlinear solve. Independent check
    groups may run on ``threads`` workers; reports are merged by name, so
    the output is identical either way.
    """
    wanted = list(checks) if checks else list(ALL_CHECKS)
    unknown = sorted(set(wanted) - set(ALL_CHECKS))
    if unknown:
        raise DomainError(f"unknown check name(s): {', '.join(unknown)}")
    ctx = make_context(params or DEFAULT_CHECK_PARAMS)

    tasks = []
    if any(name in wanted for name in KERNEL_CHECKS):
        tasks.append(lambda: [r for r in check_kernel_bounds(ctx, sample_plan)
                              if r.name in wanted])
    if "theta_decay" in wanted:
        tasks.append(lambda: [check_theta_decay(ctx)])
    if "steady_profile_limit" in wanted:
        tasks.append(lambda: [check_steady_limit(ctx)])
    if "flux_convolution_limit" in wanted or "flux_derivative_convolution" in wanted:
        def conv_task():
            phi = TimeFunction.saturating(1.0, 1.0)
            rep_a, rep_b = check_convolution_limits(ctx, phi)
            out = []
            if "flux_convolution_limit" in wanted:
                out.append(rep_a)
            if "flux_derivative_convolution" in wanted:
                out.append(rep_b)
            return out

        tasks.append(conv_task)
    if any(name in wanted for name in SOLUTION_CHECKS):
        def solution_task():
            bench_ctx = make_context(BENCHMARK_PARAMS)
            spec = benchmark_spec()
            grid = Grid.regular(BENCHMARK_PARAMS.L, spec.T, 33, 257)
            sol = solve_ie(spec, grid, bench_ctx, SolveOptions())
            out = []
            if "solution_sup_bounds" in wanted:
                out.append(check_solution_bounds(sol, bench_ctx))
            if "invariant_rectangle" in wanted:
                from .solver_ie import InvariantRectangle

                out.append(invariant_rectangle_monitor(sol, InvariantRectangle()))
            return out

        tasks.append(solution_task)

    reports = []
    if threads > 1 and len(tasks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(lambda f: f(), tasks):
                reports.extend(chunk)
    else:
        for task in tasks:
            reports.extend(task())
    return sorted(reports, key=lambda r: r.name)
