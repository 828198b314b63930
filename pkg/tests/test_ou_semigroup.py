"""Endpoint simulation, semigroup estimation, and the factorization probe."""

import math

import numpy as np
import pytest

from harnacklab import (
    OUPathConfig,
    OUSpec,
    SeedSpec,
    SemigroupSampler,
    StableSpec,
    TruncatedStableSpec,
    ball_indicator,
    compute_c0,
    constant,
    default_n_steps,
    empirical_cf,
    estimate_Ptf,
    exp_cap,
    factorization_check,
    gaussian_bump,
    matrix_exp,
    ou_noise,
    sample_increment,
    sample_ou,
    symbol_radial,
)
from harnacklab.ou_semigroup import TestFunction as ParametricFunction


def stable_ou(A, d=1, alpha=1.0, c=1.0):
    return OUSpec(A=np.asarray(A, dtype=float), driver=StableSpec(d=d, alpha=alpha, c=c))


class TestMatrixExp:
    def test_diagonal(self):
        out = matrix_exp(np.diag([0.5, -1.0]), 2.0)
        assert np.allclose(out, np.diag([math.e, math.exp(-2.0)]), rtol=1e-13)

    def test_nilpotent(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert np.allclose(matrix_exp(A, 3.0), np.array([[1.0, 3.0], [0.0, 1.0]]), atol=1e-14)

    def test_semigroup_property(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(3, 3)) * 0.4
        ab = matrix_exp(A, 0.3) @ matrix_exp(A, 0.7)
        assert np.allclose(ab, matrix_exp(A, 1.0), atol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            matrix_exp(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            matrix_exp(np.array([[np.inf]]))
        with np.errstate(over="ignore"), pytest.raises(OverflowError):
            matrix_exp(np.array([[710.0]]), 1.0)


class TestPathConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            OUPathConfig(n_steps=0, t=1.0)
        with pytest.raises(ValueError):
            OUPathConfig(n_steps=1, t=0.0)

    def test_default_steps(self):
        assert default_n_steps(0.0, 5.0) == 1
        assert default_n_steps(0.5, 2.0) == 50
        assert default_n_steps(1.0, 1.0) == 50
        assert default_n_steps(0.013, 1.0) == 1
        assert default_n_steps(0.03, 1.0) == 2


class TestSampleOU:
    def test_zero_drift_single_step_is_exact_increment(self):
        driver = StableSpec(d=1, alpha=1.5, c=1.0)
        spec = OUSpec(A=np.zeros((1, 1)), driver=driver)
        seed = SeedSpec(81)
        got = sample_ou(spec, np.array([2.0]), OUPathConfig(n_steps=1, t=0.7), 500, seed)
        want = sample_increment(driver, 0.7, 500, seed.rng(0)) + 2.0
        assert np.array_equal(got, want)

    def test_single_step_weights(self):
        driver = StableSpec(d=2, alpha=1.0, c=1.0)
        A = np.array([[0.0, 0.3], [-0.3, 0.0]])
        spec = OUSpec(A=A, driver=driver)
        seed = SeedSpec(82)
        t = 0.5
        got = sample_ou(spec, np.array([1.0, -1.0]), OUPathConfig(n_steps=1, t=t), 200, seed)
        dz = sample_increment(driver, t, 200, seed.rng(0))
        want = dz @ matrix_exp(A, t).T + matrix_exp(A, t) @ np.array([1.0, -1.0])
        assert np.allclose(got, want, rtol=0, atol=1e-12)

    def test_deterministic_across_calls(self):
        spec = stable_ou([[-0.5]])
        cfg = OUPathConfig(n_steps=4, t=1.0)
        a = sample_ou(spec, None, cfg, 100, SeedSpec(83))
        b = sample_ou(spec, None, cfg, 100, SeedSpec(83))
        assert np.array_equal(a, b)

    def test_ou_noise_wrapper(self):
        spec = stable_ou([[-0.5]])
        a = ou_noise(spec, 1.0, 50, SeedSpec(84))
        b = sample_ou(spec, None, OUPathConfig(n_steps=default_n_steps(0.5, 1.0), t=1.0),
                      50, SeedSpec(84))
        assert np.array_equal(a, b)

    def test_increment_additivity_in_law(self):
        # endpoints over [0, s+t] and the sum of independent endpoints over
        # [0, s], [0, t] share the cf exp(-(s+t) psi)
        for d, alpha, s, t in [(1, 1.3, 0.4, 0.6), (1, 0.7, 0.2, 0.3)]:
            driver = StableSpec(d=d, alpha=alpha, c=1.0)
            spec = OUSpec(A=np.zeros((d, d)), driver=driver)
            n = 2 * 10**4
            summed = (
                ou_noise(spec, s, n, SeedSpec(85).substream(1))
                + ou_noise(spec, t, n, SeedSpec(85).substream(2))
            )
            radii = np.array([0.5, 1.0])
            means, ses = empirical_cf(summed, radii[:, None])
            target = np.exp(-(s + t) * symbol_radial(driver, radii))
            assert np.all(np.abs(means - target) < 4.0 * ses)

    def test_step_doubling_bias_within_noise(self):
        spec = stable_ou([[-0.5]])
        f = gaussian_bump(0.0, 1.0)
        coarse = estimate_Ptf(spec, f, [0.5], 1.0, 5000, SeedSpec(86), n_steps=25)
        fine = estimate_Ptf(spec, f, [0.5], 1.0, 5000, SeedSpec(87), n_steps=50)
        assert abs(coarse.mean - fine.mean) < 3.0 * (coarse.std_err + fine.std_err) + 0.01

    def test_validation(self):
        spec = stable_ou([[0.0]])
        with pytest.raises(ValueError):
            sample_ou(spec, None, OUPathConfig(n_steps=1, t=1.0), 0, SeedSpec(0))


class TestTestFunctions:
    def test_ball_indicator_values(self):
        f = ball_indicator([1.0, 0.0], 0.5, offset=0.25)
        pts = np.array([[1.0, 0.0], [1.0, 0.5], [1.0, 0.51], [-2.0, 0.0]])
        assert f(pts).tolist() == [1.25, 1.25, 0.25, 0.25]
        assert f.bound == 1.25
        assert f.min_value == 0.25
        assert not f.geq_one

    def test_gaussian_bump_values(self):
        f = gaussian_bump(0.0, 2.0)
        assert f(np.array([[0.0]]))[0] == 1.0
        assert f(np.array([[2.0]]))[0] == pytest.approx(math.exp(-0.5))
        assert f.bound == 1.0

    def test_constant(self):
        f = constant(2.5)
        pts = np.random.default_rng(0).normal(size=(7, 3))
        assert np.all(f(pts) == 2.5)
        assert f.bound == 2.5 and f.min_value == 2.5 and f.geq_one
        assert f.shifted([1.0]) is f

    def test_exp_cap_range_and_endpoints(self):
        level = 100.0
        f = exp_cap(level, center=0.0, width=2.0)
        pts = np.linspace(-8.0, 8.0, 41)[:, None]
        vals = f(pts)
        assert np.all(vals >= 1.0)
        assert np.all(vals <= level)
        assert f(np.array([[0.0]]))[0] == pytest.approx(level)
        assert f(np.array([[50.0]]))[0] == pytest.approx(1.0, abs=1e-12)
        assert f.geq_one and f.min_value == 1.0 and f.bound == level

    def test_shifted(self):
        f = ball_indicator([0.0], 1.0)
        g = f.shifted([2.0])
        x = np.array([[0.5]])
        assert g(x)[0] == f(x + 2.0)[0]
        assert g.center == (-2.0,)

    def test_center_broadcast(self):
        f = ball_indicator(0.0, 1.0, d=3)
        assert f.center == (0.0, 0.0, 0.0)

    def test_tags(self):
        assert constant(2.0).tag == "constant(2)"
        assert ball_indicator([0.0], 1.0).tag == "ball_indicator(center=[0],scale=1)"
        assert exp_cap(math.e, 0.0, 1.0).tag.startswith("exp_cap(center=[0],scale=1,level=")
        assert ball_indicator([0.0], 1.0, offset=0.5).tag.endswith("+0.5")

    def test_validation(self):
        with pytest.raises(ValueError):
            ParametricFunction("nope")
        with pytest.raises(ValueError):
            ball_indicator([0.0], 0.0)
        with pytest.raises(ValueError):
            ball_indicator([0.0], 1.0, offset=-0.1)
        with pytest.raises(ValueError):
            exp_cap(0.5)


class TestSemigroupSampler:
    def test_noise_cached_and_read_only(self):
        spec = stable_ou([[0.0]])
        s = SemigroupSampler(spec, 100, SeedSpec(91))
        w1 = s.noise(0.5)
        w2 = s.noise(0.5)
        assert w1 is w2
        with pytest.raises(ValueError):
            w1[0, 0] = 1.0

    def test_noise_order_independent(self):
        spec = stable_ou([[-1.0]])
        a = SemigroupSampler(spec, 100, SeedSpec(92))
        b = SemigroupSampler(spec, 100, SeedSpec(92))
        a05, a10 = a.noise(0.5), a.noise(1.0)
        b10, b05 = b.noise(1.0), b.noise(0.5)
        assert np.array_equal(a05, b05)
        assert np.array_equal(a10, b10)

    def test_unit_function_exact(self):
        spec = stable_ou([[0.0]])
        est = SemigroupSampler(spec, 2000, SeedSpec(93)).estimate(constant(1.0), [3.0], 0.5)
        assert est.mean == 1.0
        assert est.std_err == 0.0

    def test_translation_covariance(self):
        # common random numbers make P_t f(. + v)(x) and P_t f(x + v) agree
        # exactly at x = 0 (identical float arrays) and to rounding elsewhere
        spec = stable_ou([[0.0]], alpha=1.5)
        s = SemigroupSampler(spec, 3000, SeedSpec(94))
        f = gaussian_bump(0.0, 1.0)
        v = np.array([1.7])
        a = s.estimate(f.shifted(v), [0.0], 1.0)
        b = s.estimate(f, v, 1.0)
        assert a.mean == b.mean
        assert a.std_err == b.std_err
        c = s.estimate(f.shifted(v), [0.3], 1.0)
        d = s.estimate(f, np.array([0.3]) + v, 1.0)
        assert c.mean == pytest.approx(d.mean, rel=1e-12)

    def test_cauchy_ball_closed_form(self):
        # A = 0, alpha = 1, c = 1/pi: P_t 1_[-1,1](0) = 2 arctan(1/t) / pi
        spec = stable_ou([[0.0]], alpha=1.0, c=1.0 / math.pi)
        est = estimate_Ptf(spec, ball_indicator([0.0], 1.0), [0.0], 1.0, 10**5, SeedSpec(95))
        assert abs(est.mean - 0.5) < 4.0 * est.std_err

    def test_estimate_fields(self):
        spec = stable_ou([[0.0]])
        est = estimate_Ptf(spec, ball_indicator([0.0], 1.0), [1.0], 0.5, 2000, SeedSpec(96))
        d = est.to_dict()
        assert d["t"] == 0.5
        assert d["x"] == [1.0]
        assert d["n"] == 2000
        assert d["f_tag"] == "ball_indicator(center=[0],scale=1)"
        assert 0.0 <= d["mean"] <= 1.0

    def test_validation(self):
        spec = stable_ou([[0.0]])
        with pytest.raises(ValueError):
            SemigroupSampler(spec, 0, SeedSpec(0))
        with pytest.raises(ValueError):
            estimate_Ptf(spec, constant(1.0), [0.0], 1.0, 999, SeedSpec(0))

    def test_truncated_driver_endpoint_moments(self):
        driver = TruncatedStableSpec(d=1, alpha=1.0, c=1.0, r=1.0)
        spec = OUSpec(A=np.zeros((1, 1)), driver=driver)
        t, n = 0.5, 4 * 10**4
        w = SemigroupSampler(spec, n, SeedSpec(97)).noise(t).ravel()
        target = 2.0 * t  # t * integral z^2 over the truncated measure
        fourth = 3.0 * target**2 + t * 2.0 / 3.0
        se = math.sqrt((fourth - target**2) / n)
        assert abs(np.var(w) - target) < 3.0 * se


class TestFactorization:
    def test_zero_drift_stable(self):
        spec = stable_ou([[0.0]], alpha=1.0, c=1.0)
        rep = factorization_check(spec, 1.0)
        assert rep.passed
        assert rep.max_excess <= 1e-8
        assert rep.probes.shape == (10, 1)
        assert np.allclose(np.abs(np.linalg.norm(rep.probes, axis=1)), np.geomspace(1, 8, 10))
        # with A = 0 the exact marginal cf is exp(-t psi)
        for xi, mu in zip(rep.probes, rep.mu_hat):
            psi = symbol_radial(StableSpec(d=1, alpha=1.0, c=1.0), abs(float(xi[0])))[0]
            assert mu == pytest.approx(math.exp(-psi), rel=1e-9)
        # and the subtracted factor is exp(-t c0 c |xi|^alpha) by definition
        c0 = compute_c0(0.0, 1)
        for xi, sf in zip(rep.probes, rep.stable_factor):
            assert sf == pytest.approx(math.exp(-c0 * abs(float(xi[0]))), rel=1e-12)

    def test_drift_and_truncated(self):
        spec = OUSpec(A=np.array([[-0.5]]), driver=TruncatedStableSpec(d=1, alpha=1.0, r=1.0))
        rep = factorization_check(spec, 0.5)
        assert rep.passed
        assert rep.c0 == pytest.approx(compute_c0(0.5, 1), rel=1e-12)
        assert rep.op_norm == 0.5

    def test_custom_probes_and_to_dict(self):
        spec = stable_ou([[0.0]], alpha=1.5)
        rep = factorization_check(spec, 0.25, probe_xis=np.array([[1.0], [2.0]]))
        assert rep.probes.shape == (2, 1)
        doc = rep.to_dict()
        for key in ("t", "probes", "mu_hat", "stable_factor", "pi_hat",
                    "max_excess", "passed", "c0", "op_norm"):
            assert key in doc
        assert isinstance(doc["pi_hat"], list)

    def test_time_domain(self):
        spec = stable_ou([[0.0]])
        with pytest.raises(ValueError):
            factorization_check(spec, 1.5)
        with pytest.raises(ValueError):
            factorization_check(spec, 0.0)
