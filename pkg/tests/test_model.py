import numpy as np
import pytest

from fhn_strip.errors import (
    ConfigError,
    DomainError,
    UnsupportedOperationError,
    ValidationError,
)
from fhn_strip.model import (
    ModelParams,
    ProblemSpec,
    SpaceFunction,
    TimeFunction,
    derive_constants,
    eval_space_fn,
    eval_time_fn,
    eval_time_fn_deriv,
    problem_from_config,
    validate_params,
)


def params_map(**overrides):
    base = {"epsilon": 1.0, "a": 0.5, "b": 1.0, "beta": 1.0, "L": 1.0}
    base.update(overrides)
    return base


class TestValidateParams:
    def test_valid(self):
        p = validate_params(params_map())
        assert p == ModelParams(1.0, 0.5, 1.0, 1.0, 1.0)

    def test_threshold_above_one_rejected(self):
        with pytest.raises(ValidationError) as exc:
            validate_params(params_map(a=1.5))
        assert exc.value.field == "a"

    def test_negative_diffusion_rejected(self):
        with pytest.raises(ValidationError) as exc:
            validate_params(params_map(epsilon=-1.0))
        assert exc.value.field == "epsilon"

    def test_missing_field_named(self):
        raw = params_map()
        del raw["L"]
        with pytest.raises(ValidationError) as exc:
            validate_params(raw)
        assert exc.value.field == "L"

    def test_degenerate_gated(self):
        with pytest.raises(ValidationError):
            validate_params(params_map(b=0.0))
        p = validate_params(params_map(b=0.0), allow_degenerate=True)
        assert p.b == 0.0

    def test_kinetic_range_relaxable(self):
        with pytest.raises(ValidationError):
            validate_params(params_map(a=2.0))
        p = validate_params(params_map(a=2.0), enforce_kinetic_range=False)
        assert p.a == 2.0

    def test_unknown_field_rejected(self):
        with pytest.raises(ValidationError):
            validate_params(params_map(gamma=1.0))


class TestDeriveConstants:
    def test_all_equal_ones(self):
        c = derive_constants(ModelParams(1, 1, 1, 1, 1))
        assert c.omega == 1.0
        assert c.beta0 == pytest.approx(1.0 + np.pi, rel=1e-15)
        assert c.sigma0 == pytest.approx(np.sqrt(2.0), rel=1e-15)
        assert c.C0 is None and not c.c0_defined

    def test_reference_params(self):
        # 20-digit references frozen from 40-digit evaluation of the formulas.
        c = derive_constants(ModelParams(1, 2, 1, 1, 1))
        assert c.omega == 1.0
        assert c.beta0 == pytest.approx(2.1660811018093873426, rel=1e-14)
        assert c.bigC == pytest.approx(1.2102748505519869772, rel=1e-14)
        assert c.C0 == pytest.approx(1.5064217815949918607, rel=1e-14)
        assert c.sigma0 == pytest.approx(np.sqrt(3.0), rel=1e-15)

    def test_deterministic(self):
        p = ModelParams(0.3, 0.25, 1.7, 0.8, 2.0)
        c1, c2 = derive_constants(p), derive_constants(p)
        assert c1 == c2

    def test_lower_bounds_hold_for_sampled_params(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            eps, a, b, beta, L = rng.uniform(0.1, 3.0, size=5)
            if abs(a - beta) < 1e-6:
                continue
            c = derive_constants(ModelParams(eps, a, b, beta, L))
            assert c.beta0 > 1.0 / a
            assert c.C0 > 1.0 / (2.0 * np.sqrt(eps * c.omega))

    def test_sigma0_identity(self):
        for p in [ModelParams(0.7, 0.3, 2.0, 1.1, 1.0), ModelParams(2.0, 0.9, 0.2, 0.4, 3.0)]:
            c = derive_constants(p)
            lhs = c.sigma0 ** 2 * p.epsilon
            rhs = p.a + p.b / p.beta
            assert abs(lhs - rhs) <= 4 * np.finfo(float).eps * abs(rhs)

    def test_degenerate_threshold_scale(self):
        p = ModelParams(1.0, 1.0, 1.0, 1.0 + 0.9e-8, 1.0)
        assert derive_constants(p).C0 is None
        p = ModelParams(1.0, 1.0, 1.0, 1.0 + 1.1e-8, 1.0)
        assert derive_constants(p).C0 is not None


class TestTimeFunction:
    def test_saturating_endpoints(self):
        f = TimeFunction.saturating(2.0, 1.0)
        assert f(0.0) == 0.0
        assert f.limit == 2.0
        assert f(80.0) == pytest.approx(2.0)

    def test_constant_derivative(self):
        f = TimeFunction.constant(3.0)
        assert eval_time_fn_deriv(f, 1.234) == 0.0
        assert eval_time_fn(f, 7.0) == 3.0

    def test_decaying(self):
        f = TimeFunction.decaying(2.0, 0.5)
        assert f(2.0) == pytest.approx(2.0 * np.exp(-1.0))
        assert f.derivative(0.0) == pytest.approx(-1.0)
        assert f.limit == 0.0

    def test_ramp(self):
        f = TimeFunction.ramp(4.0, 2.0)
        assert f(1.0) == pytest.approx(2.0)
        assert f(3.0) == 4.0
        assert f.derivative(0.5) == pytest.approx(2.0)
        assert f.derivative(2.5) == 0.0

    def test_saturating_derivative_matches_fd(self):
        f = TimeFunction.saturating(1.5, 0.7)
        t = np.linspace(0.1, 5.0, 17)
        h = 1e-6
        fd = (f(t + h) - f(t - h)) / (2 * h)
        np.testing.assert_allclose(f.derivative(t), fd, rtol=1e-8)

    def test_table_pchip_interpolates_and_clamps(self):
        f = TimeFunction.table([0.0, 1.0, 2.0], [0.0, 1.0, 0.5], limit=0.5)
        assert f(1.0) == pytest.approx(1.0)
        assert f(10.0) == pytest.approx(0.5)
        assert np.isfinite(f.derivative(0.5))
        assert f.derivative(5.0) == 0.0

    def test_linear_table_has_no_derivative(self):
        f = TimeFunction.table([0.0, 1.0], [0.0, 1.0], interpolation="linear")
        assert f(0.5) == pytest.approx(0.5)
        with pytest.raises(UnsupportedOperationError):
            f.derivative(0.5)

    def test_negative_time_rejected(self):
        with pytest.raises(DomainError):
            TimeFunction.constant(1.0)(-0.1)

    def test_declared_limit_numerically_reached(self):
        for f in [
            TimeFunction.constant(0.7),
            TimeFunction.saturating(2.0, 1.3),
            TimeFunction.decaying(1.0, 0.4),
            TimeFunction.ramp(-0.3, 1.0),
        ]:
            assert abs(f(200.0) - f.limit) < 1e-12


class TestSpaceFunction:
    def test_constant(self):
        f = SpaceFunction.constant(0.2, 1.0)
        assert eval_space_fn(f, 0.5) == 0.2

    def test_cosine_walls(self):
        f = SpaceFunction.cosine([0.0, 0.1], 1.0)
        assert f(0.0) == pytest.approx(0.1)
        assert f(1.0) == pytest.approx(-0.1)

    def test_polynomial(self):
        f = SpaceFunction.polynomial([1.0, 2.0, 3.0], 2.0)  # 1 + 2x + 3x^2
        assert f(0.5) == pytest.approx(1 + 1 + 0.75)

    def test_domain_enforced(self):
        f = SpaceFunction.constant(1.0, 1.0)
        with pytest.raises(DomainError):
            f(1.5)
        with pytest.raises(DomainError):
            f(-0.5)

    def test_table(self):
        f = SpaceFunction.table([0.0, 0.5, 1.0], [0.0, 1.0, 0.0], 1.0)
        assert f(0.5) == pytest.approx(1.0)
        assert f.sup_norm() == pytest.approx(1.0, abs=1e-6)

    def test_is_zero(self):
        assert SpaceFunction.constant(0.0, 1.0).is_zero()
        assert not SpaceFunction.cosine([0.0, 0.1], 1.0).is_zero()


class TestProblemSpec:
    def test_valid_roundtrip(self):
        cfg = {
            "params": params_map(epsilon=0.1, a=0.25, b=1.0, beta=0.8),
            "u0": {"kind": "cosine", "coefficients": [0.0, 0.1]},
            "v0": 0.0,
            "phi1": 0.0,
            "phi2": {"kind": "saturating", "limit": 1.0, "rate": 2.0},
            "T": 2.0,
            "grid": {"nx": 33, "nt": 129},
        }
        spec, extras = problem_from_config(cfg)
        assert spec.params.a == 0.25
        assert spec.u0(0.0) == pytest.approx(0.1)
        assert spec.phi2.limit == 1.0
        assert not spec.homogeneous_flux()
        assert extras["grid"] == {"nx": 33, "nt": 129}

    def test_missing_length_named(self):
        cfg = {"params": {"epsilon": 1.0, "a": 0.5, "b": 1.0, "beta": 1.0}, "T": 1.0}
        with pytest.raises(ConfigError) as exc:
            problem_from_config(cfg)
        assert exc.value.field == "L"

    def test_missing_horizon(self):
        with pytest.raises(ConfigError) as exc:
            problem_from_config({"params": params_map()})
        assert exc.value.field == "T"

    def test_homogeneous_detection(self):
        cfg = {"params": params_map(), "u0": 0.1, "T": 1.0}
        spec, _ = problem_from_config(cfg)
        assert spec.homogeneous_flux()

    def test_bad_horizon(self):
        with pytest.raises(ValidationError):
            ProblemSpec(
                params=validate_params(params_map()),
                u0=SpaceFunction.constant(0.0, 1.0),
                v0=SpaceFunction.constant(0.0, 1.0),
                phi1=TimeFunction.constant(0.0),
                phi2=TimeFunction.constant(0.0),
                T=-1.0,
            )

    def test_mismatched_domain(self):
        with pytest.raises(ValidationError):
            ProblemSpec(
                params=validate_params(params_map()),
                u0=SpaceFunction.constant(0.0, 2.0),
                v0=SpaceFunction.constant(0.0, 1.0),
                phi1=TimeFunction.constant(0.0),
                phi2=TimeFunction.constant(0.0),
                T=1.0,
            )
