"""Model parameters, derived constants and declarative data functions.

All types are frozen dataclasses; every operation is pure, so the whole
module is safe to use from concurrent sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, DomainError, UnsupportedOperationError, ValidationError

# Exact closed forms; no special-function dependence needed for these two.
ZETA_2 = math.pi ** 2 / 6.0
GAMMA_3_HALVES = math.sqrt(math.pi) / 2.0


@dataclass(frozen=True)
class ModelParams:
    """Physical and kinetic constants of the strip problem.

    ``epsilon`` is the diffusion coefficient, ``a`` the kinetic threshold,
    ``b`` the recovery coupling, ``beta`` the recovery decay rate, ``L`` the
    strip length. Direct construction enforces positivity only; the full
    kinetic range 0 < a < 1 (and strictly positive b, beta) is enforced on
    the configuration path by :func:`validate_params`, so kernel studies may
    build contexts with a >= 1 or degenerate b explicitly.
    """

    epsilon: float
    a: float
    b: float
    beta: float
    L: float

    def __post_init__(self):
        for name in ("epsilon", "a", "L"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(name, f"must be finite and > 0, got {v!r}")
        for name in ("b", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(name, f"must be finite and >= 0, got {v!r}")


_REQUIRED_PARAM_FIELDS = ("epsilon", "a", "b", "beta", "L")


def validate_params(raw, *, allow_degenerate: bool = False,
                    enforce_kinetic_range: bool = True) -> ModelParams:
    """Validate a name->number map into :class:`ModelParams`.

    Raises :class:`ValidationError` naming the offending field. With
    ``allow_degenerate`` (test contexts only) b = 0 and beta = 0 pass;
    ``enforce_kinetic_range=False`` relaxes 0 < a < 1 for kernel studies.
    """
    if not isinstance(raw, dict):
        raise ValidationError("params", f"expected a mapping, got {type(raw).__name__}")
    for name in _REQUIRED_PARAM_FIELDS:
        if name not in raw:
            raise ValidationError(name, "missing required parameter")
        v = raw[name]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not np.isfinite(v):
            raise ValidationError(name, f"must be a finite number, got {v!r}")
    extra = set(raw) - set(_REQUIRED_PARAM_FIELDS)
    if extra:
        raise ValidationError(sorted(extra)[0], "unknown parameter")
    eps, a, b, beta, L = (float(raw[k]) for k in _REQUIRED_PARAM_FIELDS)
    if eps <= 0:
        raise ValidationError("epsilon", f"must be > 0, got {eps}")
    if L <= 0:
        raise ValidationError("L", f"must be > 0, got {L}")
    if enforce_kinetic_range and not (0.0 < a < 1.0):
        raise ValidationError("a", f"must lie in (0, 1), got {a}")
    if a <= 0:
        raise ValidationError("a", f"must be > 0, got {a}")
    floor = 0.0 if allow_degenerate else None
    for name, v in (("b", b), ("beta", beta)):
        if floor is None and v <= 0:
            raise ValidationError(name, f"must be > 0, got {v}")
        if v < 0:
            raise ValidationError(name, f"must be >= 0, got {v}")
    return ModelParams(eps, a, b, beta, L)


@dataclass(frozen=True)
class DerivedConstants:
    """Constants computed once from :class:`ModelParams`.

    ``C0`` is None (explicit undefined state) when |a - beta| falls below
    ``tol_degenerate``: its formula carries 1/|a - beta| and no degenerate
    form is available.
    """

    omega: float
    beta0: float
    sigma0: float
    bigC: float
    C0: Optional[float]

    @property
    def c0_defined(self) -> bool:
        return self.C0 is not None


def derive_constants(p: ModelParams, tol_degenerate: Optional[float] = None) -> DerivedConstants:
    """Compute omega, beta0, sigma0, the image-sum growth constant and C0.

    Deterministic and pure: identical inputs give bit-identical outputs.
    """
    if tol_degenerate is None:
        tol_degenerate = 1e-8 * max(p.a, p.beta)
    omega = min(p.a, p.beta)
    beta0 = 1.0 / p.a
    if p.b > 0 and p.beta > 0:
        beta0 += math.pi * math.sqrt(p.b) * (p.a + p.beta) / (2.0 * (p.a * p.beta) ** 1.5)
    ratio = p.b / p.beta if p.b > 0 else 0.0
    sigma0 = math.sqrt((p.a + ratio) / p.epsilon)
    bigC = 2.0 * p.epsilon * ZETA_2 / (math.e * p.L ** 2)
    if abs(p.a - p.beta) < tol_degenerate or omega == 0.0:
        C0 = None
    else:
        C0 = 1.0 / (2.0 * math.sqrt(p.epsilon * omega))
        if p.b > 0:
            C0 += (
                p.b * GAMMA_3_HALVES * omega ** -1.5
                / (2.0 * math.sqrt(math.pi * p.epsilon) * abs(p.a - p.beta))
            ) * (1.0 + bigC / p.b * abs(p.a - p.beta) + 3.0 * bigC / (2.0 * omega))
    return DerivedConstants(omega, beta0, sigma0, bigC, C0)


TIME_KINDS = ("constant", "saturating", "decaying", "ramp", "table")
SPACE_KINDS = ("constant", "polynomial", "cosine", "table")


@dataclass(frozen=True)
class TimeFunction:
    """Boundary-flux programme phi(t), defined for all t >= 0.

    ``limit`` is the declared value of phi at t -> infinity (None when no
    limit is declared) and ``derivative_in_l1`` records whether the
    derivative is declared integrable on [0, inf). Both drive the
    asymptotic checks; they are metadata, not enforced constraints.
    """

    kind: str
    params: tuple
    limit: Optional[float]
    derivative_in_l1: bool
    _interp: object = field(default=None, repr=False, compare=False)

    # -- constructors ------------------------------------------------------
    @staticmethod
    def constant(c: float) -> "TimeFunction":
        return TimeFunction("constant", (float(c),), float(c), True)

    @staticmethod
    def saturating(limit: float, rate: float) -> "TimeFunction":
        """phi(t) = limit * (1 - exp(-rate*t))."""
        if rate <= 0:
            raise ValidationError("rate", "saturating rate must be > 0")
        return TimeFunction("saturating", (float(limit), float(rate)), float(limit), True)

    @staticmethod
    def decaying(amplitude: float, rate: float) -> "TimeFunction":
        """phi(t) = amplitude * exp(-rate*t)."""
        if rate <= 0:
            raise ValidationError("rate", "decaying rate must be > 0")
        return TimeFunction("decaying", (float(amplitude), float(rate)), 0.0, True)

    @staticmethod
    def ramp(target: float, t_ramp: float) -> "TimeFunction":
        """Linear rise to ``target`` over [0, t_ramp], constant afterwards."""
        if t_ramp <= 0:
            raise ValidationError("t_ramp", "ramp duration must be > 0")
        return TimeFunction("ramp", (float(target), float(t_ramp)), float(target), True)

    @staticmethod
    def table(times, values, interpolation: str = "pchip",
              limit: Optional[float] = None,
              derivative_in_l1: bool = False) -> "TimeFunction":
        """Sampled table, held constant beyond the last sample.

        ``interpolation`` is 'pchip' (monotone cubic, differentiable) or
        'linear' (no derivative rule).
        """
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.size < 2 or v.shape != t.shape:
            raise ValidationError("times", "table needs matching 1-d arrays, >= 2 samples")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValidationError("times", "table times must start at 0 and increase")
        if interpolation not in ("pchip", "linear"):
            raise ValidationError("interpolation", f"unknown rule {interpolation!r}")
        interp = PchipInterpolator(t, v) if interpolation == "pchip" else None
        return TimeFunction("table", (tuple(t), tuple(v), interpolation),
                            limit, derivative_in_l1, interp)

    # -- evaluation --------------------------------------------------------
    def __call__(self, t):
        tv = np.asarray(t, dtype=float)
        if np.any(tv < 0):
            raise DomainError("time functions are defined for t >= 0 only")
        if self.kind == "constant":
            out = np.full_like(tv, self.params[0])
        elif self.kind == "saturating":
            limit, rate = self.params
            out = limit * -np.expm1(-rate * tv)
        elif self.kind == "decaying":
            amp, rate = self.params
            out = amp * np.exp(-rate * tv)
        elif self.kind == "ramp":
            target, t_ramp = self.params
            out = target * np.clip(tv / t_ramp, 0.0, 1.0)
        else:
            times, values, rule = self.params
            tc = np.minimum(tv, times[-1])
            if rule == "pchip":
                out = np.asarray(self._interp(tc), dtype=float)
            else:
                out = np.interp(tc, times, values)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        tv = np.asarray(t, dtype=float)
        if np.any(tv < 0):
            raise DomainError("time functions are defined for t >= 0 only")
        if self.kind == "constant":
            out = np.zeros_like(tv)
        elif self.kind == "saturating":
            limit, rate = self.params
            out = limit * rate * np.exp(-rate * tv)
        elif self.kind == "decaying":
            amp, rate = self.params
            out = -amp * rate * np.exp(-rate * tv)
        elif self.kind == "ramp":
            target, t_ramp = self.params
            out = np.where(tv < t_ramp, target / t_ramp, 0.0)
        else:
            times, values, rule = self.params
            if rule != "pchip":
                raise UnsupportedOperationError(
                    "a linearly interpolated table has no derivative rule"
                )
            deriv = self._interp.derivative()
            out = np.where(tv < times[-1], np.asarray(deriv(np.minimum(tv, times[-1]))), 0.0)
        return float(out) if out.ndim == 0 else out

    def is_zero(self) -> bool:
        if self.kind == "constant":
            return self.params[0] == 0.0
        if self.kind == "table":
            return all(v == 0.0 for v in self.params[1])
        if self.kind in ("saturating", "ramp"):
            return self.params[0] == 0.0
        return self.params[0] == 0.0


def eval_time_fn(f: TimeFunction, t):
    """Evaluate phi(t); t >= 0."""
    return f(t)


def eval_time_fn_deriv(f: TimeFunction, t):
    """Evaluate d(phi)/dt where the kind admits a derivative rule."""
    return f.derivative(t)


@dataclass(frozen=True)
class SpaceFunction:
    """Initial-profile function on [0, L]."""

    kind: str
    params: tuple
    L: float
    _interp: object = field(default=None, repr=False, compare=False)

    @staticmethod
    def constant(c: float, L: float) -> "SpaceFunction":
        return SpaceFunction("constant", (float(c),), float(L))

    @staticmethod
    def polynomial(coefficients, L: float) -> "SpaceFunction":
        """c[0] + c[1]*x + c[2]*x^2 + ... on [0, L]."""
        return SpaceFunction("polynomial", tuple(float(c) for c in coefficients), float(L))

    @staticmethod
    def cosine(coefficients, L: float) -> "SpaceFunction":
        """Sum over k of c[k] * cos(k*pi*x/L); compatible with zero-flux walls."""
        return SpaceFunction("cosine", tuple(float(c) for c in coefficients), float(L))

    @staticmethod
    def table(xs, values, L: float) -> "SpaceFunction":
        """Monotone piecewise-cubic interpolant of samples spanning [0, L]."""
        x = np.asarray(xs, dtype=float)
        v = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.size < 2 or v.shape != x.shape:
            raise ValidationError("xs", "table needs matching 1-d arrays, >= 2 samples")
        if x[0] != 0.0 or abs(x[-1] - L) > 1e-12 * max(1.0, L) or np.any(np.diff(x) <= 0):
            raise ValidationError("xs", "table nodes must increase from 0 to L")
        return SpaceFunction("table", (tuple(x), tuple(v)), float(L), PchipInterpolator(x, v))

    def __call__(self, x):
        xv = np.asarray(x, dtype=float)
        slack = 1e-12 * max(1.0, self.L)
        if np.any(xv < -slack) or np.any(xv > self.L + slack):
            raise DomainError(f"position outside [0, {self.L}]")
        xv = np.clip(xv, 0.0, self.L)
        if self.kind == "constant":
            out = np.full_like(xv, self.params[0])
        elif self.kind == "polynomial":
            out = np.polyval(self.params[::-1], xv)
        elif self.kind == "cosine":
            out = np.zeros_like(xv)
            for k, c in enumerate(self.params):
                if c != 0.0 or k == 0:
                    out = out + c * np.cos(k * np.pi * xv / self.L)
        else:
            out = np.asarray(self._interp(xv), dtype=float)
        if not np.all(np.isfinite(out)):
            raise DomainError("space function produced non-finite values")
        return float(out) if out.ndim == 0 else out

    def sup_norm(self, n_probe: int = 4001) -> float:
        """Sup of |f| on [0, L] estimated on a dense probe grid."""
        x = np.linspace(0.0, self.L, n_probe)
        return float(np.max(np.abs(self(x))))

    def is_zero(self) -> bool:
        if self.kind == "constant":
            return self.params[0] == 0.0
        if self.kind in ("polynomial", "cosine"):
            return all(c == 0.0 for c in self.params)
        return all(v == 0.0 for v in self.params[1])


def eval_space_fn(f: SpaceFunction, x):
    """Evaluate the profile at x in [0, L]."""
    return f(x)


@dataclass(frozen=True)
class ProblemSpec:
    """A complete initial/boundary-value problem on the strip."""

    params: ModelParams
    u0: SpaceFunction
    v0: SpaceFunction
    phi1: TimeFunction
    phi2: TimeFunction
    T: float

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValidationError("T", f"horizon must be finite and > 0, got {self.T!r}")
        for name in ("u0", "v0"):
            f = getattr(self, name)
            if abs(f.L - self.params.L) > 1e-12 * max(1.0, self.params.L):
                raise ValidationError(name, "space function domain does not match L")

    def homogeneous_flux(self) -> bool:
        return self.phi1.is_zero() and self.phi2.is_zero()


# ---------------------------------------------------------------------------
# Configuration documents
# ---------------------------------------------------------------------------

def _build_time_fn(name: str, node) -> TimeFunction:
    if isinstance(node, (int, float)) and not isinstance(node, bool):
        return TimeFunction.constant(float(node))
    if not isinstance(node, dict) or "kind" not in node:
        raise ConfigError(name, "expected a number or a mapping with a 'kind'")
    kind = node["kind"]
    try:
        if kind == "constant":
            return TimeFunction.constant(node["value"])
        if kind == "saturating":
            return TimeFunction.saturating(node["limit"], node["rate"])
        if kind == "decaying":
            return TimeFunction.decaying(node["amplitude"], node["rate"])
        if kind == "ramp":
            return TimeFunction.ramp(node["target"], node["t_ramp"])
        if kind == "table":
            return TimeFunction.table(
                node["times"], node["values"],
                interpolation=node.get("interpolation", "pchip"),
                limit=node.get("limit"),
                derivative_in_l1=bool(node.get("derivative_in_l1", False)),
            )
    except KeyError as exc:
        raise ConfigError(f"{name}.{exc.args[0]}", "missing field") from None
    raise ConfigError(f"{name}.kind", f"unknown time-function kind {kind!r}")


def _build_space_fn(name: str, node, L: float) -> SpaceFunction:
    if isinstance(node, (int, float)) and not isinstance(node, bool):
        return SpaceFunction.constant(float(node), L)
    if not isinstance(node, dict) or "kind" not in node:
        raise ConfigError(name, "expected a number or a mapping with a 'kind'")
    kind = node["kind"]
    try:
        if kind == "constant":
            return SpaceFunction.constant(node["value"], L)
        if kind == "polynomial":
            return SpaceFunction.polynomial(node["coefficients"], L)
        if kind == "cosine":
            return SpaceFunction.cosine(node["coefficients"], L)
        if kind == "table":
            return SpaceFunction.table(node["xs"], node["values"], L)
    except KeyError as exc:
        raise ConfigError(f"{name}.{exc.args[0]}", "missing field") from None
    raise ConfigError(f"{name}.kind", f"unknown space-function kind {kind!r}")


def problem_from_config(cfg: dict, *, allow_degenerate: bool = False):
    """Build (ProblemSpec, extras) from a parsed configuration mapping.

    ``extras`` passes through auxiliary sections (currently ``grid`` and
    ``solver``) untouched. Field names match the type definitions verbatim.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("document", "top level must be a mapping")
    if "params" not in cfg:
        raise ConfigError("params", "missing section")
    try:
        params = validate_params(cfg["params"], allow_degenerate=allow_degenerate)
    except ValidationError as exc:
        raise ConfigError(exc.field, str(exc)) from None
    if "T" not in cfg:
        raise ConfigError("T", "missing horizon")
    fields = {}
    for name in ("u0", "v0"):
        fields[name] = _build_space_fn(name, cfg.get(name, 0.0), params.L)
    for name in ("phi1", "phi2"):
        fields[name] = _build_time_fn(name, cfg.get(name, 0.0))
    try:
        spec = ProblemSpec(params=params, T=float(cfg["T"]), **fields)
    except ValidationError as exc:
        raise ConfigError(exc.field, str(exc)) from None
    extras = {k: cfg[k] for k in ("grid", "solver") if k in cfg}
    return spec, extras


def load_config(path) -> dict:
    """Read a YAML configuration document."""
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("document", f"not parseable: {exc}") from None
    if doc is None:
        raise ConfigError("document", "empty configuration")
    return doc


def load_problem(path, *, allow_degenerate: bool = False):
    """Read a configuration file and build (ProblemSpec, extras)."""
    return problem_from_config(load_config(path), allow_degenerate=allow_degenerate)
