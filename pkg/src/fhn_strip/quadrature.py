"""Reusable integration machinery.

Three tools live here:

* :func:`integrate` -- adaptive Gauss quadrature on a finite interval, with
  optional inverse-square-root endpoint weights absorbed analytically by the
  substitution y = lo + (hi-lo)*sin^2(phi).
* :func:`integrate_semi_infinite` -- panelled integration on [0, inf) for
  integrands with an exponential tail, the tail bounded analytically from a
  caller-supplied decay-rate hint.
* :func:`build_conv_grid` / :func:`convolve` -- product-integration
  convolution on a uniform time grid. Both factors are approximated
  piecewise-linearly and integrated exactly against the grid's weight
  function, so a kernel with an integrable 1/sqrt singularity at lag zero is
  handled without losing the O(dt^2) order on smooth data.

Integrand callables must accept numpy arrays (scalar-returning callables are
broadcast automatically).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import AccuracyError, BudgetExceededError, DomainError

_GL_COARSE = np.polynomial.legendre.leggauss(15)
_GL_FINE = np.polynomial.legendre.leggauss(30)

WEIGHT_KINDS = ("none", "inv_sqrt_upper", "inv_sqrt_lower")

DEFAULT_EVAL_BUDGET = 200_000


@dataclass(frozen=True)
class QuadResult:
    """Value, absolute error estimate and evaluation count of a quadrature."""

    value: float
    err_estimate: float
    evaluations: int

    def __post_init__(self):
        if self.err_estimate < 0 or self.evaluations < 1:
            raise ValueError("malformed QuadResult")


def _call(f, x: np.ndarray) -> np.ndarray:
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape).copy()
    return y


def _panel(f, a: float, b: float):
    """Gauss 15/30 pair on [a, b]; returns (fine value, error estimate, evals).

    The estimate is floored at a multiple of eps * integral of |f| so that it
    stays an upper bound once accumulation roundoff dominates.
    """
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    xc, wc = _GL_COARSE
    xf, wf = _GL_FINE
    coarse = half * np.dot(wc, _call(f, mid + half * xc))
    fv = _call(f, mid + half * xf)
    fine = half * np.dot(wf, fv)
    floor = 50.0 * np.finfo(float).eps * half * np.dot(wf, np.abs(fv))
    return fine, max(abs(fine - coarse), floor), xc.size + xf.size


def integrate(f, lo: float, hi: float, weight: str = "none",
              tol: float = 1e-10, max_evals: int = DEFAULT_EVAL_BUDGET) -> QuadResult:
    """Adaptively integrate f over [lo, hi], optionally against an
    inverse-square-root endpoint weight.

    ``weight='inv_sqrt_upper'`` computes the integral of f(y)/sqrt(hi-y),
    ``'inv_sqrt_lower'`` that of f(y)/sqrt(y-lo); both absorb the singular
    factor exactly through a trigonometric substitution so the transformed
    integrand is smooth. Raises :class:`BudgetExceededError` (carrying the
    best estimate) if ``max_evals`` is exhausted first.
    """
    if not hi > lo:
        raise DomainError("integrate requires lo < hi")
    if tol <= 0:
        raise DomainError("integrate requires tol > 0")
    if weight not in WEIGHT_KINDS:
        raise DomainError(f"unknown weight kind {weight!r}")

    if weight == "none":
        g, a0, b0 = f, lo, hi
    else:
        width = hi - lo
        root = 2.0 * np.sqrt(width)

        if weight == "inv_sqrt_upper":
            def g(phi, _f=f, _lo=lo, _w=width, _r=root):
                s = np.sin(phi)
                return _r * _call(_f, _lo + _w * s * s) * s
        else:
            def g(phi, _f=f, _lo=lo, _w=width, _r=root):
                s = np.sin(phi)
                return _r * _call(_f, _lo + _w * s * s) * np.cos(phi)
        a0, b0 = 0.0, 0.5 * np.pi

    value, err, evals = _panel(g, a0, b0)
    # Max-heap of panels keyed by error; the counter keeps ordering stable.
    heap = [(-err, 0, a0, b0, value)]
    counter = 1
    total_err = err
    while total_err > tol:
        if evals >= max_evals:
            raise BudgetExceededError(
                f"integrate exceeded {max_evals} evaluations (err {total_err:.3e} > tol {tol:.3e})",
                partial=QuadResult(_heap_value(heap), total_err, evals),
                err_estimate=total_err,
            )
        neg_e, _, a, b, _v = heapq.heappop(heap)
        total_err += neg_e  # remove this panel's error
        m = 0.5 * (a + b)
        for aa, bb in ((a, m), (m, b)):
            v, e, n = _panel(g, aa, bb)
            evals += n
            total_err += e
            heapq.heappush(heap, (-e, counter, aa, bb, v))
            counter += 1
    return QuadResult(_heap_value(heap), total_err, evals)


def _heap_value(heap) -> float:
    return float(sum(item[4] for item in heap))


def integrate_semi_infinite(f, decay_rate_hint: float, tol: float = 1e-10,
                            singular_origin: bool = False,
                            max_scaled_cut: float = 400.0,
                            max_evals: int = 4 * DEFAULT_EVAL_BUDGET) -> QuadResult:
    """Integrate f over [0, inf) assuming |f(t)| decays like exp(-rate*t).

    Panels are cut at points scaled by 1/decay_rate_hint and extended until
    the analytic tail bound (safety factor two over back-extrapolated probe
    values) falls below tol/2. ``singular_origin`` routes the first panel
    through the inv_sqrt_lower weight for integrands with a 1/sqrt(t)
    singularity at zero; the weighted callable then receives f(t)*sqrt(t).
    """
    if decay_rate_hint <= 0:
        raise DomainError("decay_rate_hint must be positive")
    if tol <= 0:
        raise DomainError("tol must be positive")
    lam = decay_rate_hint
    edges = [0.0, 2.0 / lam]
    while edges[-1] < max_scaled_cut / lam:
        edges.append(min(2.0 * edges[-1] + 2.0 / lam, max_scaled_cut / lam))

    total = 0.0
    total_err = 0.0
    evals = 0
    panel_tol = tol / (2.0 * (len(edges) - 1))
    for i in range(len(edges) - 1):
        a, b = edges[i], edges[i + 1]
        if i == 0 and singular_origin:
            res = integrate(lambda y: _call(f, y) * np.sqrt(y), a, b,
                            weight="inv_sqrt_lower", tol=panel_tol,
                            max_evals=max_evals - evals)
        else:
            res = integrate(f, a, b, tol=panel_tol, max_evals=max_evals - evals)
        total += res.value
        total_err += res.err_estimate
        evals += res.evaluations

        probes = np.array([b, 1.05 * b, 1.2 * b])
        fp = np.abs(_call(f, probes))
        amp = float(np.max(fp * np.exp(lam * (probes - b))))
        tail = 2.0 * amp / lam
        if tail <= 0.5 * tol:
            return QuadResult(total, total_err + tail, evals)
    raise AccuracyError(
        f"tail bound {tail:.3e} still above tol/2 at the maximum cut {edges[-1]:.3e}"
    )


@dataclass(frozen=True)
class ConvGrid:
    """Uniform time grid with per-panel moments of the convolution weight.

    ``s0[j]``, ``s1[j]``, ``s2[j]`` are the integrals over panel j of
    w(s), w(s)*u and w(s)*u^2, where u is the local panel coordinate in
    [0, 1] and w is 1 (kind 'none') or s^{-1/2} (kind 'inv_sqrt').
    """

    t_nodes: np.ndarray
    kind: str
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    @property
    def n(self) -> int:
        return self.t_nodes.size

    @property
    def dt(self) -> float:
        return float(self.t_nodes[1] - self.t_nodes[0])


def build_conv_grid(t_max: float, n: int, kernel_singularity: str = "none") -> ConvGrid:
    """Build the uniform grid and weight moments for :func:`convolve`.

    With ``kernel_singularity='inv_sqrt'`` the weights integrate the factor
    s^{-1/2} exactly on every panel, so the pure weight against constant
    data reproduces 2*sqrt(t) at every node with no quadrature error.
    """
    if n < 2:
        raise DomainError("build_conv_grid requires n >= 2")
    if t_max <= 0:
        raise DomainError("t_max must be positive")
    if kernel_singularity not in ("none", "inv_sqrt"):
        raise DomainError(f"unknown kernel singularity {kernel_singularity!r}")
    t = np.linspace(0.0, t_max, n)
    dt = t[1] - t[0]
    if kernel_singularity == "none":
        s0 = np.full(n - 1, dt)
        s1 = np.full(n - 1, dt / 2.0)
        s2 = np.full(n - 1, dt / 3.0)
    else:
        lo, hi = t[:-1], t[1:]
        ra, rb = np.sqrt(lo), np.sqrt(hi)
        d = dt / (ra + rb)  # sqrt(hi) - sqrt(lo), cancellation-free
        # Power differences hi^{k/2} - lo^{k/2} factored through d.
        d32 = d * (rb * rb + ra * rb + ra * ra)
        d52 = d * (rb**4 + rb**3 * ra + rb**2 * ra**2 + rb * ra**3 + ra**4)
        s0 = 2.0 * d
        s1 = ((2.0 / 3.0) * d32 - 2.0 * lo * d) / dt
        s2 = ((2.0 / 5.0) * d52 - (4.0 / 3.0) * lo * d32 + 2.0 * lo * lo * d) / dt**2
    return ConvGrid(t, kernel_singularity, s0, s1, s2)


def lower_triangular_conv(w0: np.ndarray, w1: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Causal product-integration sum from per-panel kernel moments.

    Given panel weights w0_j = integral of the kernel over panel j and
    w1_j = integral of kernel * u (u the local coordinate), returns

        out_i = sum_{j<i} [ w0_j * g_{i-j} + w1_j * (g_{i-j-1} - g_{i-j}) ]

    for every node i, which is the convolution of the kernel with the
    piecewise-linear interpolant of g. Batched over leading axes of w0/w1.
    """
    w0 = np.asarray(w0, dtype=float)
    w1 = np.asarray(w1, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.shape[-1]
    if w0.shape[-1] != n - 1 or w1.shape != w0.shape:
        raise DomainError("weight arrays must have length len(g) - 1")
    alpha = w0 - w1
    batch = w0.shape[:-1]
    gb = np.broadcast_to(g, batch + (n,))
    full_a = fftconvolve(alpha, gb, axes=-1)
    full_b = fftconvolve(w1, gb, axes=-1)
    out = np.zeros(batch + (n,))
    out[..., 1:] = full_a[..., 1:n] + full_b[..., 0:n - 1]
    # The j == i term of the first sum does not belong; remove it where defined.
    out[..., 1:n - 1] -= alpha[..., 1:n - 1] * gb[..., :1]
    return out


def convolve(grid: ConvGrid, k_samples, g_samples) -> np.ndarray:
    """Product-integration convolution of sampled kernel and data.

    Computes (k * g)(t_i) = integral_0^{t_i} w(s) k(s) g(t_i - s) ds for
    every grid node, where w is the grid's weight function and both k and g
    are the piecewise-linear interpolants of the given samples. For an
    'inv_sqrt' grid, ``k_samples`` are samples of the smooth cofactor
    k(s)*sqrt(s) (finite at s = 0).
    """
    k = np.asarray(k_samples, dtype=float)
    g = np.asarray(g_samples, dtype=float)
    n = grid.n
    if k.shape[-1] != n or g.shape != k.shape:
        raise DomainError("sample arrays must match the grid length")
    # Panel-local linear factors: k = a0 + a1*u, g(t_i - s) = b0 + b1*u.
    # Their product integrates against the stored moments; grouping by
    # sample products turns the double sum into two causal convolutions.
    a0 = k[..., :-1]
    a1 = k[..., 1:] - a0
    w0 = a0 * grid.s0 + a1 * grid.s1
    w1 = a0 * grid.s1 + a1 * grid.s2
    return lower_triangular_conv(w0, w1, g)
