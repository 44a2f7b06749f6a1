"""Integral-equation solver: data-term assembly, windowed Picard iteration
for the potential, and recovery of the slow variable.

The Green operator is applied through the cosine eigenbasis of the strip:
each mode carries the explicit two-exponential impulse response supplied by
:mod:`fhn_strip.kernel`, and the time convolutions use exact exponential
panel moments, so the only discretisation errors are the piecewise-linear
interpolation of the nonlinearity in time and the collocation bandwidth nx
in space. The image-sum kernel route stays available as an independent
oracle and is what the boundary-flux moments use near lag zero, where the
wall kernel carries its integrable 1/sqrt singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.fft import dct

from .errors import (
    AccuracyError,
    DivergenceError,
    DomainError,
    NonContractionError,
    PreconditionError,
    ValidationError,
)
from .kernel import (
    KernelContext,
    eval_theta,
    gauss_rule,
    mode_response,
    mode_response_decay_conv,
    mode_response_moments,
    strip_wavenumbers,
)
from .model import ProblemSpec, SpaceFunction
from .quadrature import build_conv_grid, convolve, lower_triangular_conv
from .special import lipschitz_F, nagumo_F_nonlinear


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform space-time grid: nx nodes on [0, L], nt nodes on [0, T]."""

    x_nodes: np.ndarray
    t_nodes: np.ndarray

    def __post_init__(self):
        x, t = self.x_nodes, self.t_nodes
        if x.ndim != 1 or x.size < 3:
            raise ValidationError("x_nodes", "need at least 3 spatial nodes")
        if t.ndim != 1 or t.size < 2:
            raise ValidationError("t_nodes", "need at least 2 time nodes")
        if t[0] != 0.0:
            raise ValidationError("t_nodes", "time grid must start at 0")
        for name, nodes in (("x_nodes", x), ("t_nodes", t)):
            d = np.diff(nodes)
            if np.any(d <= 0) or abs(d.max() - d.min()) > 1e-9 * d.max():
                raise ValidationError(name, "nodes must be uniformly increasing")

    @staticmethod
    def regular(L: float, T: float, nx: int, nt: int) -> "Grid":
        return Grid(np.linspace(0.0, L, nx), np.linspace(0.0, T, nt))

    @property
    def nx(self) -> int:
        return self.x_nodes.size

    @property
    def nt(self) -> int:
        return self.t_nodes.size

    @property
    def dx(self) -> float:
        return float(self.x_nodes[1] - self.x_nodes[0])

    @property
    def dt(self) -> float:
        return float(self.t_nodes[1] - self.t_nodes[0])

    @property
    def L(self) -> float:
        return float(self.x_nodes[-1])

    @property
    def T(self) -> float:
        return float(self.t_nodes[-1])


@dataclass(frozen=True, eq=False)
class Field:
    """Values of u, v or the data term on a grid; rows are x, columns t."""

    values: np.ndarray
    grid: Grid
    label: str

    def __post_init__(self):
        if self.values.shape != (self.grid.nx, self.grid.nt):
            raise ValidationError("values", "array shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("values", "field contains non-finite entries")

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class WindowStats:
    t_start: float
    t_end: float
    iterations: int
    final_residual: float
    contraction_estimate: float

    def to_dict(self) -> dict:
        return {
            "t_start": self.t_start,
            "t_end": self.t_end,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "contraction_estimate": self.contraction_estimate,
        }


@dataclass(frozen=True)
class PicardReport:
    windows: tuple
    converged: bool

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "windows": [w.to_dict() for w in self.windows],
        }


@dataclass(frozen=True)
class Solution:
    u: Field
    v: Field
    report: object
    spec: ProblemSpec


@dataclass(frozen=True)
class InvariantRectangle:
    u_min: float = -1.0
    u_max: float = 2.0
    v_min: float = -1.0
    v_max: float = 1.0

    def contains_u(self, values: np.ndarray) -> bool:
        return bool(np.all(values >= self.u_min) and np.all(values <= self.u_max))

    def contains_v(self, values: np.ndarray) -> bool:
        return bool(np.all(values >= self.v_min) and np.all(values <= self.v_max))

    @property
    def u_amplitude(self) -> float:
        return max(abs(self.u_min), abs(self.u_max))


@dataclass(frozen=True)
class SolveOptions:
    tol_fix: float = 1e-9
    max_iter: int = 60
    linearized: bool = False
    contraction_target: float = 0.5
    rect: InvariantRectangle = field(default_factory=InvariantRectangle)
    boundary_tol: float = 1e-9


# ---------------------------------------------------------------------------
# Discrete cosine transforms on the closed uniform grid
# ---------------------------------------------------------------------------

def cosine_coefficients(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Coefficients c_k with values = sum_k c_k cos(k*pi*x/L) at the nodes."""
    y = dct(values, type=1, axis=axis)
    m = values.shape[axis] - 1
    scale = np.ones(m + 1)
    scale[0] = 2.0
    scale[-1] = 2.0
    shape = [1] * values.ndim
    shape[axis] = m + 1
    return y / (m * scale.reshape(shape))


def cosine_values(coeffs: np.ndarray, axis: int = 0) -> np.ndarray:
    """Inverse of :func:`cosine_coefficients` on the same node set."""
    m = coeffs.shape[axis] - 1
    y = dct(coeffs, type=1, axis=axis)
    first = np.take(coeffs, [0], axis=axis)
    last = np.take(coeffs, [m], axis=axis)
    signs = np.where(np.arange(m + 1) % 2 == 0, 1.0, -1.0)
    shape = [1] * coeffs.ndim
    shape[axis] = m + 1
    return 0.5 * (y + first + last * signs.reshape(shape))


def space_fn_coefficients(f: SpaceFunction, n_modes: int) -> np.ndarray:
    """First n_modes cosine coefficients of an initial profile.

    Declared cosine series pass through exactly; other kinds are projected
    on a fine auxiliary grid before truncation.
    """
    out = np.zeros(n_modes)
    if f.kind == "constant":
        out[0] = f.params[0]
        return out
    if f.kind == "cosine":
        coeffs = np.asarray(f.params, dtype=float)
        if coeffs.size > n_modes:
            raise ValidationError(
                "u0", f"cosine profile has {coeffs.size} modes but the grid resolves {n_modes}"
            )
        out[: coeffs.size] = coeffs
        return out
    n_fine = max(4097, 8 * n_modes + 1)
    fine = np.linspace(0.0, f.L, n_fine)
    c = cosine_coefficients(f(fine))
    return c[:n_modes]


# ---------------------------------------------------------------------------
# Boundary-flux kernel moments
# ---------------------------------------------------------------------------

_PSI_LEVELS = (16, 32, 64, 128, 256, 512)


def theta_conv_moments(grid: Grid, ctx: KernelContext, tol: float = 1e-9):
    """Panel moments of the wall kernel theta(x, .) on the time grid.

    Returns (m0, m1) of shape (nx, nt-1): the integrals of theta and
    theta * (local panel coordinate) over each time panel, for every grid
    position. The first panel, where theta carries its integrable
    1/sqrt(lag) wall singularity and its near-wall transition layer, is
    integrated by an adaptive substituted Gauss rule on the image sum; later
    panels come from the closed-form mode-response moments.
    """
    p = ctx.params
    x = grid.x_nodes
    nt = grid.nt
    dt = grid.dt
    m0 = np.zeros((grid.nx, nt - 1))
    m1 = np.zeros((grid.nx, nt - 1))

    prev = None
    for n in _PSI_LEVELS:
        nodes, w = gauss_rule(n)
        psi = 0.25 * math.pi * (nodes + 1.0)
        wpsi = 0.25 * math.pi * w
        sin_psi, cos_psi = np.sin(psi), np.cos(psi)
        sin2 = sin_psi * sin_psi
        s = dt * sin2
        jac = 2.0 * dt * sin_psi * cos_psi * wpsi
        th = eval_theta(x[:, None], s[None, :], ctx)
        cur0 = th @ jac
        cur1 = (th * sin2[None, :]) @ jac
        if prev is not None and max(
            np.max(np.abs(cur0 - prev[0])), np.max(np.abs(cur1 - prev[1]))
        ) <= tol:
            break
        prev = (cur0, cur1)
    m0[:, 0], m1[:, 0] = cur0, cur1

    if nt > 2:
        opts_block = 256
        k_start = 0
        inv_2l = 1.0 / (2.0 * p.L)
        while True:
            k = np.arange(k_start, k_start + opts_block)
            lam = (k * math.pi / p.L) ** 2
            w0, w1 = mode_response_moments(lam, grid.t_nodes, p)
            weights = np.where(k == 0, 1.0, 2.0)
            cos_mat = np.cos(np.sqrt(lam)[None, :] * x[:, None])
            add0 = inv_2l * cos_mat @ (weights[:, None] * w0[:, 1:])
            add1 = inv_2l * cos_mat @ (weights[:, None] * w1[:, 1:])
            m0[:, 1:] += add0
            m1[:, 1:] += add1
            block_scale = inv_2l * 2.0 * np.sum(np.max(np.abs(w0[:, 1:]), axis=1))
            k_start += opts_block
            if block_scale < 0.05 * tol:
                break
            if k_start > 20000:
                raise AccuracyError(
                    "boundary kernel mode expansion did not reach the tolerance"
                )
    return m0, m1


# ---------------------------------------------------------------------------
# The discrete Green operator
# ---------------------------------------------------------------------------

class StripPropagator:
    """Precomputed mode responses and convolution weights for one grid."""

    def __init__(self, grid: Grid, ctx: KernelContext):
        if abs(grid.L - ctx.params.L) > 1e-12 * max(1.0, ctx.params.L):
            raise ValidationError("grid", "grid length does not match the parameters")
        self.grid = grid
        self.ctx = ctx
        self.lam = strip_wavenumbers(grid.nx, ctx.params.L)
        self.w0, self.w1 = mode_response_moments(self.lam, grid.t_nodes, ctx.params)
        self.g = mode_response(self.lam, grid.t_nodes, ctx.params)

    def apply_source(self, source_values: np.ndarray) -> np.ndarray:
        """Space-time action: integral of G against the source history.

        ``source_values`` holds the source on the grid; the result at
        (x, t_i) is the double integral of G(x, xi, t_i - tau) * source(xi, tau).
        """
        s_hat = cosine_coefficients(source_values, axis=0)
        conv = lower_triangular_conv(self.w0, self.w1, s_hat)
        return cosine_values(conv, axis=0)

    def apply_initial(self, coeffs: np.ndarray) -> np.ndarray:
        """Evolution of an initial profile given by cosine coefficients."""
        return cosine_values(coeffs[:, None] * self.g, axis=0)

    def apply_initial_with_decay_conv(self, coeffs: np.ndarray) -> np.ndarray:
        """exp(-beta t) * (evolution of the profile), the slow-data term."""
        h = mode_response_decay_conv(self.lam, self.grid.t_nodes, self.ctx.params)
        return cosine_values(coeffs[:, None] * h, axis=0)


def assemble_N(spec: ProblemSpec, grid: Grid, ctx: KernelContext,
               propagator: Optional[StripPropagator] = None,
               boundary_tol: float = 1e-9) -> Field:
    """Known data term: boundary-flux convolutions plus evolved initial data.

    N(x,t) = -2*eps*(phi1 * theta(x, .))(t) + 2*eps*(phi2 * theta(L-x, .))(t)
             + [evolution of u0](x,t) - [exp(-beta .) * evolution of v0](x,t)
    """
    _check_spec_matches(spec, grid, ctx)
    prop = propagator or StripPropagator(grid, ctx)
    nx = grid.nx
    values = np.zeros((nx, grid.nt))

    u0_hat = space_fn_coefficients(spec.u0, nx)
    if np.any(u0_hat != 0.0):
        values += prop.apply_initial(u0_hat)
    v0_hat = space_fn_coefficients(spec.v0, nx)
    if np.any(v0_hat != 0.0):
        values -= prop.apply_initial_with_decay_conv(v0_hat)

    if not (spec.phi1.is_zero() and spec.phi2.is_zero()):
        m0, m1 = theta_conv_moments(grid, ctx, tol=boundary_tol)
        eps = ctx.params.epsilon
        if not spec.phi1.is_zero():
            phi1 = np.atleast_1d(spec.phi1(grid.t_nodes))
            values -= 2.0 * eps * lower_triangular_conv(m0, m1, phi1)
        if not spec.phi2.is_zero():
            phi2 = np.atleast_1d(spec.phi2(grid.t_nodes))
            # theta(L - x, .) moments are the x-reversed wall moments.
            values += 2.0 * eps * lower_triangular_conv(m0[::-1], m1[::-1], phi2)
    return Field(values, grid, "N")


def _check_spec_matches(spec: ProblemSpec, grid: Grid, ctx: KernelContext):
    if spec.params != ctx.params:
        raise ValidationError("params", "spec and kernel context disagree")
    if abs(grid.L - spec.params.L) > 1e-12 * max(1.0, spec.params.L):
        raise ValidationError("grid", "grid does not span [0, L]")
    if abs(grid.T - spec.T) > 1e-9 * max(1.0, spec.T):
        raise ValidationError("grid", "grid does not span [0, T]")


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------

def contraction_window(ctx: KernelContext, amplitude: float, dt: float, T: float,
                       target: float = 0.5):
    """Largest window length whose a-priori contraction factor stays under
    ``target``, together with that factor.

    The factor is lipschitz_F(M) times the decay-bound mass of the Green
    row integral over the window: q(D) = Lip * 2 * int_0^D (1 + sqrt(b)*pi*s)
    * exp(-omega*s) ds.
    """
    p = ctx.params
    omega = ctx.consts.omega
    lip = lipschitz_F(amplitude, p.a)

    def q(delta):
        if omega > 0:
            base = (1.0 - math.exp(-omega * delta)) / omega
            lin = (1.0 - (1.0 + omega * delta) * math.exp(-omega * delta)) / omega**2
        else:
            base, lin = delta, delta * delta / 2.0
        return lip * 2.0 * (base + math.sqrt(p.b) * math.pi * lin)

    if q(T) <= target:
        return T, q(T)
    lo, hi = 0.0, T
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if q(mid) <= target:
            lo = mid
        else:
            hi = mid
    delta = max(lo, dt)
    return delta, q(delta)


def picard_window(N: Field, u: Field, window: tuple, spec: ProblemSpec,
                  grid: Grid, ctx: KernelContext, tol_fix: float = 1e-9,
                  max_iter: int = 60, propagator: Optional[StripPropagator] = None,
                  rect: InvariantRectangle = InvariantRectangle(),
                  contraction_estimate: Optional[float] = None):
    """Run fixed-point sweeps on the time-index window [i0, i1).

    ``u`` carries the already-converged history in columns below i0; only
    window columns are updated. Returns (updated Field, WindowStats).
    Raises :class:`NonContractionError` if the update never reaches tol_fix
    and :class:`DivergenceError` if an iterate leaves the rectangle.
    """
    i0, i1 = window
    if not (1 <= i0 < i1 <= grid.nt):
        raise DomainError(f"bad window {window}")
    prop = propagator or StripPropagator(grid, ctx)
    a = ctx.params.a
    U = u.values.copy()
    U[:, i0:i1] = U[:, i0 - 1][:, None]

    if contraction_estimate is None:
        delta = grid.t_nodes[i1 - 1] - grid.t_nodes[i0 - 1]
        _, contraction_estimate = contraction_window(
            ctx, rect.u_amplitude, grid.dt, max(delta, grid.dt), target=np.inf
        )

    residual = math.inf
    for iteration in range(1, max_iter + 1):
        source = nagumo_F_nonlinear(U, a)
        U_new = N.values + prop.apply_source(source)
        residual = float(np.max(np.abs(U_new[:, i0:i1] - U[:, i0:i1])))
        U[:, i0:i1] = U_new[:, i0:i1]
        if not rect.contains_u(U[:, i0:i1]):
            raise DivergenceError(
                f"iterate left the invariant rectangle in window t = "
                f"[{grid.t_nodes[i0]:.4g}, {grid.t_nodes[i1 - 1]:.4g}]"
            )
        if residual <= tol_fix:
            break
    else:
        raise NonContractionError(
            f"window [{grid.t_nodes[i0]:.4g}, {grid.t_nodes[i1 - 1]:.4g}] did not "
            f"converge in {max_iter} sweeps",
            residual=residual,
        )
    stats = WindowStats(
        t_start=float(grid.t_nodes[i0 - 1]),
        t_end=float(grid.t_nodes[i1 - 1]),
        iterations=iteration,
        final_residual=residual,
        contraction_estimate=float(contraction_estimate),
    )
    return Field(U, grid, "u"), stats


def solve_ie(spec: ProblemSpec, grid: Grid, ctx: KernelContext,
             options: SolveOptions = SolveOptions()) -> Solution:
    """Solve the strip problem through the nonlinear integral equation.

    The horizon is covered by windows sized from the a-priori contraction
    estimate; each window is iterated to ``options.tol_fix``. In linearized
    mode the cubic source is dropped and the data term is the solution.
    """
    _check_spec_matches(spec, grid, ctx)
    rect = options.rect
    if not rect.contains_u(np.atleast_1d(spec.u0(grid.x_nodes))):
        raise PreconditionError("initial potential lies outside the invariant rectangle")
    if not rect.contains_v(np.atleast_1d(spec.v0(grid.x_nodes))):
        raise PreconditionError("initial recovery lies outside the invariant rectangle")

    prop = StripPropagator(grid, ctx)
    N = assemble_N(spec, grid, ctx, propagator=prop, boundary_tol=options.boundary_tol)

    if options.linearized:
        u = Field(N.values.copy(), grid, "u")
        stats = WindowStats(0.0, grid.T, 1, 0.0, 0.0)
        report = PicardReport((stats,), True)
        v = recover_v(u, spec, grid)
        return Solution(u, v, report, spec)

    # Window length from the a-priori contraction estimate. The estimate is
    # a worst case over the whole rectangle; when even a single step exceeds
    # the target we still proceed step by step and let the runtime residuals
    # (or a rectangle exit) decide, rather than refusing coarse grids.
    delta, q = contraction_window(ctx, rect.u_amplitude, grid.dt, grid.T,
                                  target=options.contraction_target)
    steps = max(1, int(delta / grid.dt + 1e-12))

    u = Field(np.tile(N.values[:, :1], (1, grid.nt)), grid, "u")
    windows = []
    i0 = 1
    while i0 < grid.nt:
        i1 = min(i0 + steps, grid.nt)
        delta_here = grid.t_nodes[i1 - 1] - grid.t_nodes[i0 - 1]
        _, q_here = contraction_window(ctx, rect.u_amplitude, grid.dt,
                                       max(delta_here, grid.dt), target=np.inf)
        u, stats = picard_window(
            N, u, (i0, i1), spec, grid, ctx,
            tol_fix=options.tol_fix, max_iter=options.max_iter,
            propagator=prop, rect=rect, contraction_estimate=q_here,
        )
        windows.append(stats)
        i0 = i1
    report = PicardReport(tuple(windows), True)
    v = recover_v(u, spec, grid)
    return Solution(u, v, report, spec)


def recover_v(u: Field, spec: ProblemSpec, grid: Grid) -> Field:
    """Slow variable from the solved potential:
    v(x,t) = v0(x)*exp(-beta*t) + b*(exp(-beta .) * u(x, .))(t)."""
    p = spec.params
    t = grid.t_nodes
    conv_grid = build_conv_grid(grid.T, grid.nt)
    decay = np.exp(-p.beta * t)
    memory = convolve(conv_grid, np.broadcast_to(decay, u.values.shape), u.values)
    v0 = np.atleast_1d(spec.v0(grid.x_nodes))
    values = v0[:, None] * decay[None, :] + p.b * memory
    return Field(values, grid, "v")


def residual_ie(sol: Solution, ctx: KernelContext,
                options: SolveOptions = SolveOptions()) -> float:
    """Sup-norm defect of the solution in the discrete integral equation.

    The Green action is re-applied from scratch with its exact exponential
    panel moments (there is no quadrature knob left to refine), so this is
    the certificate that the returned iterate is a fixed point.
    """
    grid = sol.u.grid
    prop = StripPropagator(grid, ctx)
    N = assemble_N(sol.spec, grid, ctx, propagator=prop,
                   boundary_tol=options.boundary_tol)
    if options.linearized:
        rhs = N.values
    else:
        rhs = N.values + prop.apply_source(
            nagumo_F_nonlinear(sol.u.values, ctx.params.a)
        )
    return float(np.max(np.abs(sol.u.values - rhs)))
