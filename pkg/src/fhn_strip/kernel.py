"""Fundamental solution K, image-sum theta function, Neumann Green function,
their Laplace-domain closed forms, and the steady boundary profile.

Spatial arguments are physical offsets; the internal scaling r = |x|/sqrt(eps)
is applied here so callers never juggle the scaled coordinate. All evaluators
broadcast over numpy arrays.

The module also exposes the cosine-mode impulse responses of the linear
operator (its Fourier symbol): each mode k relaxes with an explicit
two-exponential response g_k(t), which is what the strip solver uses to apply
the Green operator, and which doubles as an independent oracle for the image
sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaincc, gamma as gamma_fn

from .errors import AccuracyError, BudgetExceededError, DomainError
from .model import DerivedConstants, ModelParams, derive_constants
from .special import bessel_j1, eval_E

_K_NODE_LEVELS = (32, 64, 128, 256, 512, 1024)
_CHUNK = 1 << 14


@lru_cache(maxsize=32)
def gauss_rule(n: int):
    """Cached Gauss-Legendre nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights


@dataclass(frozen=True)
class KernelContext:
    """Parameters plus evaluation policy for the kernel routines."""

    params: ModelParams
    consts: DerivedConstants
    tol_kernel: float = 1e-10
    n_image_max: int = 400

    def __post_init__(self):
        if self.tol_kernel <= 0:
            raise DomainError("tol_kernel must be positive")
        if self.n_image_max < 1:
            raise DomainError("n_image_max must be at least 1")


def make_context(params: ModelParams, tol_kernel: float = 1e-10,
                 n_image_max: int = 400) -> KernelContext:
    """Build a :class:`KernelContext`, deriving the constants once."""
    return KernelContext(params, derive_constants(params), tol_kernel, n_image_max)


def kernel_envelope(t, ctx: KernelContext):
    """The decay bracket exp(-a*t) + b*t*E(t) of the pointwise kernel bound."""
    p = ctx.params
    t = np.asarray(t, dtype=float)
    return np.exp(-p.a * t) + p.b * t * eval_E(t, p.a, p.beta)


def kernel_pointwise_bound(x, t, ctx: KernelContext):
    """Gaussian-times-bracket envelope that |K| never exceeds."""
    p = ctx.params
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    r = np.abs(x) / math.sqrt(p.epsilon)
    return np.exp(-r * r / (4.0 * t)) / (2.0 * np.sqrt(math.pi * p.epsilon * t)) \
        * kernel_envelope(t, ctx)


def theta_envelope(t, ctx: KernelContext, image_constant: float | None = None):
    """x-independent envelope of |theta|: (1 + C*t) * pointwise bracket.

    ``image_constant`` defaults to the derived constant C; internal tail
    bounds pass 2*C, which is the provably safe variant of the image-sum
    estimate.
    """
    p = ctx.params
    c = ctx.consts.bigC if image_constant is None else image_constant
    t = np.asarray(t, dtype=float)
    return (1.0 + c * t) / (2.0 * np.sqrt(math.pi * p.epsilon * t)) * kernel_envelope(t, ctx)


def theta_tail_bound(T: float, ctx: KernelContext) -> float:
    """Rigorous bound on the integral of the theta envelope over [T, inf).

    Uses E(t) <= t*exp(-omega*t) and the safe image constant 2*C, reducing
    every term to an upper incomplete gamma function.
    """
    p = ctx.params
    omega = ctx.consts.omega
    if omega <= 0:
        raise DomainError("tail bound requires positive decay rate")
    c2 = 2.0 * ctx.consts.bigC

    def upper_gamma(s, x):
        return gammaincc(s, x) * gamma_fn(s)

    total = upper_gamma(0.5, p.a * T) / p.a ** 0.5
    total += c2 * upper_gamma(1.5, p.a * T) / p.a ** 1.5
    if p.b > 0:
        total += p.b * upper_gamma(2.5, omega * T) / omega ** 2.5
        total += c2 * p.b * upper_gamma(3.5, omega * T) / omega ** 3.5
    return float(total / (2.0 * math.sqrt(math.pi * p.epsilon)))


# ---------------------------------------------------------------------------
# Fundamental solution
# ---------------------------------------------------------------------------

def _k_integral(r: np.ndarray, t: np.ndarray, ctx: KernelContext,
                tol: float) -> np.ndarray:
    """The memory integral of the fundamental solution.

    Integrates exp(-r^2/4y - a*y) * exp(-beta*(t-y)) * J1(2*sqrt(b*y*(t-y)))
    / sqrt(t-y) over y in (0, t). The substitution y = t*sin^2(phi) removes
    the endpoint singularity; node counts double until the change falls
    below ``tol`` everywhere.
    """
    p = ctx.params
    flat_r = r.ravel()
    flat_t = t.ravel()
    out = np.empty_like(flat_r)
    for lo in range(0, flat_r.size, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, flat_r.size))
        out[sl] = _k_integral_chunk(flat_r[sl], flat_t[sl], p, tol)
    return out.reshape(r.shape)


def _k_integral_fixed(r, t, p: ModelParams, n: int) -> np.ndarray:
    sqrt_b = math.sqrt(p.b)
    nodes, weights = gauss_rule(n)
    phi = 0.25 * math.pi * (nodes + 1.0)
    w = 0.25 * math.pi * weights
    sin_phi = np.sin(phi)
    sin2 = sin_phi * sin_phi
    y = t[:, None] * sin2[None, :]
    t_minus_y = t[:, None] * (1.0 - sin2)[None, :]
    with np.errstate(divide="ignore", over="ignore"):
        expo = np.where(
            r[:, None] > 0.0,
            -(r * r)[:, None] / (4.0 * y) - p.a * y,
            -p.a * y,
        )
        vals = (
            np.exp(expo)
            * np.exp(-p.beta * t_minus_y)
            * bessel_j1(2.0 * sqrt_b * np.sqrt(y * t_minus_y))
        )
    return (2.0 * np.sqrt(t)) * ((vals * sin_phi[None, :]) @ w)


def _k_integral_chunk(r, t, p: ModelParams, tol: float) -> np.ndarray:
    """Doubling refinement with per-entry convergence masking.

    Most points settle at the first comparison; only the boundary-layer
    stragglers ride the node count up.
    """
    out = np.empty_like(r)
    idx = np.arange(r.size)
    cur = _k_integral_fixed(r, t, p, _K_NODE_LEVELS[0])
    for n in _K_NODE_LEVELS[1:]:
        nxt = _k_integral_fixed(r, t, p, n)
        done = np.abs(nxt - cur) <= tol
        out[idx[done]] = nxt[done]
        if np.all(done):
            return out
        keep = ~done
        idx, r, t, cur = idx[keep], r[keep], t[keep], nxt[keep]
    raise AccuracyError(
        f"kernel time integral did not converge to {tol:.2e} within "
        f"{_K_NODE_LEVELS[-1]} nodes"
    )


def eval_K(x, t, ctx: KernelContext):
    """Fundamental solution at physical offset x and time t > 0.

    Absolute error is at most ctx.tol_kernel. The recovery coupling term
    vanishes identically when the context was built with b = 0, which is the
    pure heat-with-decay limit used by test builds.
    """
    p = ctx.params
    x_arr, t_arr = np.broadcast_arrays(np.asarray(x, dtype=float),
                                       np.asarray(t, dtype=float))
    if np.any(t_arr <= 0.0):
        raise DomainError("eval_K requires t > 0")
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr).astype(float)
    t_arr = np.atleast_1d(t_arr).astype(float)
    r = np.abs(x_arr) / math.sqrt(p.epsilon)
    with np.errstate(over="ignore"):
        first = np.exp(-r * r / (4.0 * t_arr) - p.a * t_arr) / np.sqrt(t_arr)
    if p.b > 0:
        tol_int = ctx.tol_kernel * 2.0 * math.sqrt(math.pi * p.epsilon) / p.b
        first = first - p.b * _k_integral(r, t_arr, ctx, tol_int)
    out = first / (2.0 * math.sqrt(math.pi * p.epsilon))
    return float(out[0]) if scalar else out


def laplace_K_closed(x, s, ctx: KernelContext):
    """Closed-form Laplace transform of the fundamental solution.

    Valid for real s > max(-a, -beta); the transform variable enters through
    sigma = sqrt(s + a + b/(s + beta)).
    """
    p = ctx.params
    x_arr, s_arr = np.broadcast_arrays(np.asarray(x, dtype=float),
                                       np.asarray(s, dtype=float))
    if np.any(s_arr <= max(-p.a, -p.beta)):
        raise DomainError("laplace transform requires s > max(-a, -beta)")
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr).astype(float)
    s_arr = np.atleast_1d(s_arr).astype(float)
    sigma = np.sqrt(s_arr + p.a + (p.b / (s_arr + p.beta) if p.b > 0 else 0.0))
    r = np.abs(x_arr) / math.sqrt(p.epsilon)
    out = np.exp(-r * sigma) / (2.0 * math.sqrt(p.epsilon) * sigma)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Image sums
# ---------------------------------------------------------------------------

def _fold_periodic(x: np.ndarray, L: float) -> np.ndarray:
    """Reduce positions to the fundamental cell [-L, L] of the image set."""
    return x - 2.0 * L * np.round(x / (2.0 * L))


def _image_tail(n_images: int, x_red: np.ndarray, t: np.ndarray,
                ctx: KernelContext) -> np.ndarray:
    """Envelope bound on the images dropped beyond |n| = n_images."""
    p = ctx.params
    pref = kernel_envelope(t, ctx) / (2.0 * np.sqrt(math.pi * p.epsilon * t))
    four_eps_t = 4.0 * p.epsilon * t
    total = np.zeros_like(t)
    for sign in (1.0, -1.0):
        d = 2.0 * (n_images + 1) * p.L + sign * x_red
        q = np.exp(-(4.0 * p.L * d + 4.0 * p.L ** 2) / four_eps_t)
        total = total + np.exp(-d * d / four_eps_t) / (1.0 - q)
    return pref * total


def eval_theta(x, t, ctx: KernelContext):
    """Image-sum kernel on the strip: sum over n of K(x + 2nL, t).

    Truncation is driven by the envelope bound of the dropped images; if the
    bound cannot reach ctx.tol_kernel within ctx.n_image_max images a
    :class:`BudgetExceededError` carrying the partial sum is raised.
    """
    p = ctx.params
    x_arr, t_arr = np.broadcast_arrays(np.asarray(x, dtype=float),
                                       np.asarray(t, dtype=float))
    if np.any(t_arr <= 0.0):
        raise DomainError("eval_theta requires t > 0")
    scalar = x_arr.ndim == 0
    shape = np.atleast_1d(x_arr).shape
    x_flat = np.atleast_1d(x_arr).astype(float).ravel()
    t_flat = np.atleast_1d(t_arr).astype(float).ravel()
    x_red = _fold_periodic(x_flat, p.L)

    # Image counts are chosen per entry (large times need wide sums, small
    # times almost none), then equal-count groups are evaluated together.
    n_req = np.zeros(x_red.size, dtype=int)
    pending = np.ones(x_red.size, dtype=bool)
    n = 0
    while np.any(pending):
        tail = _image_tail(n, x_red[pending], t_flat[pending], ctx)
        ok = tail <= 0.5 * ctx.tol_kernel
        sel = np.flatnonzero(pending)
        n_req[sel[ok]] = n
        pending[sel[ok]] = False
        n += 1
        if n > ctx.n_image_max and np.any(pending):
            n_cap = ctx.n_image_max
            offsets = 2.0 * p.L * np.arange(-n_cap, n_cap + 1)
            partial = eval_K(x_red[:, None] + offsets, t_flat[:, None], ctx).sum(axis=-1)
            partial = partial.reshape(shape)
            raise BudgetExceededError(
                f"image sum tail above tol_kernel at n_image_max={ctx.n_image_max}",
                partial=float(partial.ravel()[0]) if scalar else partial,
                err_estimate=float(np.max(tail)),
            )

    out = np.empty(x_red.size)
    for count in np.unique(n_req):
        sel = n_req == count
        offsets = 2.0 * p.L * np.arange(-count, count + 1)
        sub = KernelContext(p, ctx.consts,
                            ctx.tol_kernel / (2.0 * (2 * count + 1)),
                            ctx.n_image_max)
        vals = eval_K(x_red[sel, None] + offsets, t_flat[sel, None], sub)
        out[sel] = vals.sum(axis=-1)
    out = out.reshape(shape)
    return float(out.ravel()[0]) if scalar else out


def eval_G(x, xi, t, ctx: KernelContext):
    """Neumann Green function theta(|x - xi|, t) + theta(x + xi, t)."""
    p = ctx.params
    x_arr = np.asarray(x, dtype=float)
    xi_arr = np.asarray(xi, dtype=float)
    slack = 1e-12 * max(1.0, p.L)
    if np.any(x_arr < -slack) or np.any(x_arr > p.L + slack) \
            or np.any(xi_arr < -slack) or np.any(xi_arr > p.L + slack):
        raise DomainError(f"positions must lie in [0, {p.L}]")
    return eval_theta(x_arr - xi_arr, t, ctx) + eval_theta(x_arr + xi_arr, t, ctx)


def laplace_theta_closed(y, s, ctx: KernelContext):
    """Closed form of the Laplace-transformed image sum on [0, L].

    cosh((sigma/sqrt(eps))*(L - y)) / (2*sqrt(eps)*sigma*sinh((sigma/sqrt(eps))*L)),
    evaluated through exponentials so large sigma*L cannot overflow.
    """
    p = ctx.params
    y_arr, s_arr = np.broadcast_arrays(np.asarray(y, dtype=float),
                                       np.asarray(s, dtype=float))
    if np.any(s_arr <= max(-p.a, -p.beta)):
        raise DomainError("laplace transform requires s > max(-a, -beta)")
    slack = 1e-12 * max(1.0, p.L)
    if np.any(y_arr < -slack) or np.any(y_arr > p.L + slack):
        raise DomainError(f"position must lie in [0, {p.L}]")
    scalar = y_arr.ndim == 0
    y_arr = np.clip(np.atleast_1d(y_arr).astype(float), 0.0, p.L)
    s_arr = np.atleast_1d(s_arr).astype(float)
    sigma = np.sqrt(s_arr + p.a + (p.b / (s_arr + p.beta) if p.b > 0 else 0.0))
    st = sigma / math.sqrt(p.epsilon)
    numer = np.exp(-st * y_arr) + np.exp(-st * (2.0 * p.L - y_arr))
    denom = 2.0 * math.sqrt(p.epsilon) * sigma * (1.0 - np.exp(-2.0 * st * p.L))
    out = numer / denom
    return float(out[0]) if scalar else out


def steady_profile(x, ctx: KernelContext):
    """Large-time spatial profile of the time-integrated boundary kernel:
    cosh(sigma0*(x - L)) / (2*eps*sigma0*sinh(sigma0*L)), in the stable
    exponential form for x in [0, L]."""
    p = ctx.params
    s0 = ctx.consts.sigma0
    x_arr = np.asarray(x, dtype=float)
    slack = 1e-12 * max(1.0, p.L)
    if np.any(x_arr < -slack) or np.any(x_arr > p.L + slack):
        raise DomainError(f"position must lie in [0, {p.L}]")
    e1 = np.exp(-s0 * x_arr) + np.exp(-s0 * (2.0 * p.L - x_arr))
    out = e1 / (2.0 * p.epsilon * s0 * (1.0 - np.exp(-2.0 * s0 * p.L)))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Cosine-mode impulse responses (Fourier symbol of the fundamental solution)
# ---------------------------------------------------------------------------

def _phi0(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1)/z, series near zero, complex-safe."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    acc = np.zeros_like(zs)
    term = np.ones_like(zs)
    for k in range(1, 18):
        acc = acc + term / math.factorial(k)
        term = term * zs
    out[small] = acc
    zb = z[~small]
    out[~small] = (np.exp(zb) - 1.0) / zb
    return out


def _phi1(z: np.ndarray) -> np.ndarray:
    """integral of w*exp(z*w) over [0,1], series near zero, complex-safe."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zs = z[small]
    acc = np.zeros_like(zs)
    term = np.ones_like(zs)
    for k in range(0, 18):
        acc = acc + term / (math.factorial(k) * (k + 2))
        term = term * zs
    out[small] = acc
    zb = z[~small]
    out[~small] = (np.exp(zb) * (zb - 1.0) + 1.0) / (zb * zb)
    return out


def mode_rates(lam, params: ModelParams):
    """Complex decay rates (p1, p2) of the cosine mode with wavenumber^2 lam.

    Roots of p^2 + B*p + C with B = eps*lam + a + beta and
    C = (eps*lam + a)*beta + b, computed cancellation-free (the large root
    directly, the small one through the product identity p1*p2 = C).
    """
    lam = np.asarray(lam, dtype=float)
    p = params
    s1 = p.epsilon * lam + p.a
    B = s1 + p.beta
    C = s1 * p.beta + p.b
    D = (s1 - p.beta) ** 2 - 4.0 * p.b
    sq = np.sqrt(D.astype(complex))
    p2 = -(B + sq) / 2.0
    p1 = C / p2
    return p1, p2


def _split_rates(lam, params: ModelParams, t_scale: float):
    """Mean rate and half-separation, the latter clamped away from zero.

    The mode response is an even function of the half-separation nu, so
    clamping |nu| to 1e-5/t_scale perturbs values by at most O(1e-10) while
    removing the 0/0 of an exactly critically damped mode.
    """
    p1, p2 = mode_rates(lam, params)
    mean = 0.5 * (p1 + p2)
    nu = 0.5 * (p1 - p2)
    floor = 1e-5 / max(t_scale, 1e-300)
    absnu = np.abs(nu)
    tiny = absnu < floor
    if np.any(tiny):
        phase = np.where(absnu > 0, nu / np.where(absnu > 0, absnu, 1.0), 1.0)
        nu = np.where(tiny, floor * phase, nu)
    return mean, nu


def mode_response(lam, t, params: ModelParams):
    """Impulse response g(t) of a cosine mode: unit initial value relaxing
    under diffusion, linear decay and the exponential recovery memory.

    g(t) = exp(mean*t) * [cosh(nu*t) + (beta + mean)*t*sinhc(nu*t)] with
    (mean, nu) from :func:`_split_rates`. Returns a (len(lam), len(t)) array.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    t_scale = float(np.max(t)) if t.size else 1.0
    mean, nu = _split_rates(lam, params, max(t_scale, 1e-12))
    zt = nu[:, None] * t[None, :]
    with np.errstate(all="ignore"):
        sinhc = np.where(np.abs(zt) < 1e-4,
                         1.0 + zt * zt / 6.0,
                         np.sinh(zt) / np.where(zt == 0, 1.0, zt))
        factored = np.exp(mean[:, None] * t[None, :]) * (
            np.cosh(zt) + (params.beta + mean)[:, None] * t[None, :] * sinhc
        )
        # The factored form overflows for |nu*t| large; there the plain
        # two-exponential sum is cancellation-free, so switch to it.
        p1 = mean + nu
        p2 = mean - nu
        direct = (
            (p1 + params.beta)[:, None] * np.exp(p1[:, None] * t[None, :])
            - (p2 + params.beta)[:, None] * np.exp(p2[:, None] * t[None, :])
        ) / (2.0 * nu[:, None])
        g = np.where(np.abs(zt) > 30.0, direct, factored)
    return g.real


def mode_response_moments(lam, t_nodes, params: ModelParams):
    """Per-panel moments (W0, W1) of the mode responses on a uniform grid.

    W0[k, j] integrates g_k over panel j, W1[k, j] integrates g_k times the
    local panel coordinate; both come from exponential antiderivatives, so
    the only discretisation error left in a convolution against these
    weights is the piecewise-linear interpolation of the data factor.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t_nodes = np.asarray(t_nodes, dtype=float)
    dt = t_nodes[1] - t_nodes[0]
    t0 = t_nodes[:-1]
    mean, nu = _split_rates(lam, params, float(t_nodes[-1]))
    p1 = mean + nu
    p2 = mean - nu
    a1 = (p1 + params.beta) / (2.0 * nu)
    a2 = -(p2 + params.beta) / (2.0 * nu)

    def moments(p):
        z = p[:, None] * dt
        base = dt * np.exp(p[:, None] * t0[None, :])
        return base * _phi0(z), base * _phi1(z)

    m0_1, m1_1 = moments(p1)
    m0_2, m1_2 = moments(p2)
    w0 = (a1[:, None] * m0_1 + a2[:, None] * m0_2).real
    w1 = (a1[:, None] * m1_1 + a2[:, None] * m1_2).real
    return w0, w1


def mode_response_decay_conv(lam, t, params: ModelParams):
    """Closed form of the convolution exp(-beta*t) * g_k(t).

    Each exponential component integrates to t*exp(-beta*t)*phi0((p+beta)*t),
    stable even when a rate sits next to -beta.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    mean, nu = _split_rates(lam, params, float(np.max(t)) if t.size else 1.0)
    p1 = mean + nu
    p2 = mean - nu
    a1 = (p1 + params.beta) / (2.0 * nu)
    a2 = -(p2 + params.beta) / (2.0 * nu)

    def comp(p):
        z = (p + params.beta)[:, None] * t[None, :]
        return t[None, :] * np.exp(-params.beta * t)[None, :] * _phi0(z)

    return (a1[:, None] * comp(p1) + a2[:, None] * comp(p2)).real


def strip_wavenumbers(n_modes: int, L: float) -> np.ndarray:
    """Squared wavenumbers (k*pi/L)^2 for k = 0 .. n_modes-1."""
    k = np.arange(n_modes)
    return (k * math.pi / L) ** 2


def theta_modal(x, t, ctx: KernelContext, n_modes: int = 512):
    """Cosine-series evaluation of theta, accurate once the mode responses
    have decayed under the truncation (large t); serves as an independent
    cross-check of the image sum."""
    p = ctx.params
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lam = strip_wavenumbers(n_modes, p.L)
    g = mode_response(lam, t, p)                      # (k, nt)
    weights = np.full(n_modes, 2.0)
    weights[0] = 1.0
    cosines = np.cos(np.sqrt(lam)[:, None] * x[None, :])  # (k, nx)
    return (cosines.T @ (weights[:, None] * g)) / (2.0 * p.L)
