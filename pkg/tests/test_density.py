"""Density inversion, envelope constants, and KDE machinery.

Closed-form references (Cauchy in one and two dimensions, the origin value,
the Gaussian endpoint, the convergent jump-tail series) are evaluated from
textbook formulas with the normalization constant taken from its own closed
form, so none of them route through the package quadrature being tested.
"""

import math

import numpy as np
import pytest
from helpers import tail_complement_series

from harnacklab import (
    DensityEstimateError,
    DensityGrid,
    QuadratureError,
    SeedSpec,
    StableSpec,
    TruncatedStableSpec,
    check_truncated_bounds,
    estimate_bound_constants,
    grid_interp,
    grid_mass,
    kde_1d,
    phi_envelope,
    stable_cdf_1d,
    stable_density,
    stable_density_grid,
    tail_asymptotic,
    tail_convexity_profile,
    truncated_density_estimate,
)
from harnacklab.density import _fit_tail_envelope
from harnacklab.levy_core import sphere_surface


def sigma_closed_form(d: int, alpha: float) -> float:
    return (
        2.0 ** (1.0 - alpha)
        * math.pi ** (d / 2.0)
        * math.gamma(1.0 - alpha / 2.0)
        / (alpha * math.gamma((d + alpha) / 2.0))
    )


class TestClosedForms:
    def test_cauchy_1d(self):
        # cf exp(-a|xi|) inverts to a / (pi (a^2 + x^2))
        c = 1.0 / math.pi
        spec = StableSpec(d=1, alpha=1.0, c=c)
        for t in (0.5, 1.0, 2.0):
            a = t * sigma_closed_form(1, 1.0) * c
            for x in (-5.0, -0.7, 0.0, 0.3, 2.0, 9.0):
                ref = a / (math.pi * (a * a + x * x))
                assert stable_density(spec, t, x) == pytest.approx(ref, rel=1e-9)

    def test_cauchy_2d(self):
        # cf exp(-a|xi|) in the plane inverts to a / (2 pi (a^2 + |x|^2)^(3/2))
        c = 0.35
        spec = StableSpec(d=2, alpha=1.0, c=c)
        t = 0.8
        a = t * sigma_closed_form(2, 1.0) * c
        for xv in ([0.0, 0.0], [1.0, 0.0], [0.6, -0.8], [3.0, 4.0]):
            r2 = xv[0] ** 2 + xv[1] ** 2
            ref = a / (2.0 * math.pi * (a * a + r2) ** 1.5)
            assert stable_density(spec, t, np.array(xv)) == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("d,alpha", [(1, 0.7), (1, 1.5), (2, 1.2), (3, 0.9)])
    def test_origin_value(self, d, alpha):
        c = 0.8
        spec = StableSpec(d=d, alpha=alpha, c=c)
        t = 1.3
        tb = t * sigma_closed_form(d, alpha) * c
        ref = (
            (2.0 * math.pi) ** (-d)
            * sphere_surface(d)
            * math.gamma(d / alpha)
            / (alpha * tb ** (d / alpha))
        )
        val, tag = stable_density(spec, t, np.zeros(d), detail=True)
        assert tag == "origin"
        assert val == pytest.approx(ref, rel=1e-11)

    def test_gaussian_endpoint(self):
        # at alpha near 2 the law approaches N(0, 2 t b); the remaining gap is
        # a few percent at this alpha, which is what the tolerance encodes
        alpha = 1.95
        spec = StableSpec(d=1, alpha=alpha, c=1.0)
        var = 2.0 * sigma_closed_form(1, alpha)
        sd = math.sqrt(var)
        for x in np.linspace(0.0, 1.5 * sd, 7):
            ref = math.exp(-x * x / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
            assert stable_density(spec, 1.0, x) == pytest.approx(ref, rel=0.05)


class TestScalingAndSymmetry:
    @pytest.mark.parametrize("d,alpha", [(1, 0.8), (2, 1.3)])
    def test_self_similarity(self, d, alpha):
        spec = StableSpec(d=d, alpha=alpha, c=1.0)
        rng = np.random.default_rng(7)
        for _ in range(15):
            t = float(rng.uniform(0.2, 2.0))
            x = rng.normal(size=d) * 2.0
            lhs = stable_density(spec, t, x)
            rhs = t ** (-d / alpha) * stable_density(spec, 1.0, t ** (-1.0 / alpha) * x)
            assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_rotation_invariance(self):
        spec = StableSpec(d=2, alpha=1.5, c=1.0)
        p1 = stable_density(spec, 1.0, np.array([5.0, 0.0]))
        p2 = stable_density(spec, 1.0, np.array([3.0, 4.0]))
        assert p1 == pytest.approx(p2, rel=1e-11)

    def test_input_validation(self):
        spec = StableSpec(d=2, alpha=1.0)
        with pytest.raises(ValueError):
            stable_density(spec, 0.0, np.zeros(2))
        with pytest.raises(ValueError):
            stable_density(spec, 1.0, np.zeros(3))


class TestTailAsymptote:
    def test_precondition(self):
        spec = StableSpec(d=1, alpha=1.0, c=1.0)
        with pytest.raises(ValueError):
            tail_asymptotic(spec, 1.0, 3.9)
        assert tail_asymptotic(spec, 1.0, 5.0) == pytest.approx(5.0**-2.0, rel=1e-14)
        with pytest.raises(ValueError):
            tail_asymptotic(spec, 0.0, 10.0)

    def test_quadrature_approaches_asymptote_heavy_tail(self):
        spec = StableSpec(d=1, alpha=0.5, c=1.0)
        rels = []
        for r in (3e3, 3e4):
            p, tag = stable_density(spec, 1.0, r, max_segments=10**6, detail=True)
            assert tag == "quadrature"
            rels.append(abs(p / tail_asymptotic(spec, 1.0, r) - 1.0))
        assert rels[0] < 0.1
        assert rels[1] < 0.04
        assert rels[1] < rels[0]

    def test_quadrature_approaches_asymptote_light_tail(self):
        spec = StableSpec(d=1, alpha=1.5, c=1.0)
        rels = []
        for r in (20.0, 80.0):
            p = stable_density(spec, 1.0, r)
            rels.append(abs(p / tail_asymptotic(spec, 1.0, r) - 1.0))
        assert rels[0] < 0.2
        assert rels[1] < 0.05
        assert rels[1] < rels[0]

    def test_detail_tags_and_switch(self):
        spec = StableSpec(d=1, alpha=1.0, c=1.0)
        _, tag = stable_density(spec, 1.0, 1.0, detail=True)
        assert tag == "quadrature"
        val, tag = stable_density(spec, 1.0, 8.0, detail=True, tail_switch=5.0)
        assert tag == "asymptotic"
        assert val == tail_asymptotic(spec, 1.0, 8.0)
        _, tag = stable_density(spec, 1.0, 4.0, detail=True, tail_switch=5.0)
        assert tag == "quadrature"

    def test_segment_exhaustion_fallback(self):
        # far out, an exhausted oscillation budget falls back to the asymptote
        spec = StableSpec(d=1, alpha=0.5, c=1.0)
        val, tag = stable_density(spec, 1.0, 1e6, detail=True)
        assert tag == "asymptotic"
        assert val == pytest.approx(tail_asymptotic(spec, 1.0, 1e6), rel=1e-14)

    def test_segment_exhaustion_near_origin_raises(self):
        # inside 4 t^(1/alpha) there is no valid fallback
        spec = StableSpec(d=1, alpha=0.5, c=1.0)
        with pytest.raises(QuadratureError):
            stable_density(spec, 1.0, 2.0, max_segments=10)


class TestCdf1d:
    def test_cauchy_oracle(self):
        c = 1.0 / math.pi
        spec = StableSpec(d=1, alpha=1.0, c=c)
        for t in (0.5, 2.0):
            for x in (-4.0, -0.5, 0.0, 1.0, 7.0):
                ref = 0.5 + math.atan(x / t) / math.pi
                assert stable_cdf_1d(spec, t, x) == pytest.approx(ref, abs=1e-10)

    def test_symmetry(self):
        spec = StableSpec(d=1, alpha=1.3, c=1.0)
        for x in (0.4, 2.0, 11.0):
            assert stable_cdf_1d(spec, 1.0, x) + stable_cdf_1d(spec, 1.0, -x) == pytest.approx(
                1.0, abs=1e-11
            )

    def test_monotone(self):
        spec = StableSpec(d=1, alpha=0.7, c=1.0)
        xs = np.linspace(-20.0, 20.0, 41)
        vals = [stable_cdf_1d(spec, 0.5, float(x)) for x in xs]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_series_cross_validation(self):
        # quadrature inversion and the independent jump-tail series must agree
        # where both are accurate; this anchors the sampler-test oracle
        spec = StableSpec(d=1, alpha=0.5, c=1.0)
        tb = sigma_closed_form(1, 0.5)
        x = 50.0 * tb**2.0
        quad_tail = 1.0 - stable_cdf_1d(spec, 1.0, x)
        series_tail = tail_complement_series(0.5, tb, x)
        assert quad_tail == pytest.approx(series_tail, abs=1e-10)

    def test_far_radius_rejected(self):
        spec = StableSpec(d=1, alpha=0.5, c=1.0)
        with pytest.raises(QuadratureError):
            stable_cdf_1d(spec, 1.0, 1e12)

    def test_d2_rejected(self):
        with pytest.raises(ValueError):
            stable_cdf_1d(StableSpec(d=2, alpha=1.0), 1.0, 1.0)


class TestEnvelope:
    def test_phi_formula_and_kink(self):
        d, alpha, t = 1, 1.0, 0.25
        r = np.array([0.01, 0.25, 0.3, 5.0])
        expect = np.minimum(t ** (-d / alpha), t * r ** (-(d + alpha)))
        assert np.allclose(phi_envelope(d, alpha, t, r), expect, rtol=1e-14)
        # the two branches cross exactly at radius t^(1/alpha)
        kink = t ** (1.0 / alpha)
        assert t ** (-d / alpha) == pytest.approx(t * kink ** (-(d + alpha)), rel=1e-12)

    def test_zero_radius(self):
        assert phi_envelope(1, 1.0, 2.0, 0.0) == pytest.approx(0.5)

    def test_constants_bracket_ratio(self):
        spec = StableSpec(d=1, alpha=1.0, c=1.0)
        x_grid = np.linspace(0.0, 6.0, 13)[1:, None]
        bc = estimate_bound_constants(spec, [0.5, 1.0], x_grid)
        assert 0.0 < bc.c1_hat <= bc.c2_hat
        for t in (0.5, 1.0):
            for x in x_grid.ravel():
                ratio = stable_density(spec, t, x) / float(phi_envelope(1, 1.0, t, x))
                assert bc.c1_hat <= ratio <= bc.c2_hat

    def test_refined_constants_certify_off_grid_nodes(self):
        spec = StableSpec(d=1, alpha=1.5, c=1.0)
        train = np.linspace(0.0, 8.0, 9)[1:, None]
        bc = estimate_bound_constants(spec, [1.0], train, refine=True)
        hi = bc.grid_meta["certified_scaled_radius"]
        assert hi == pytest.approx(1.1 * bc.grid_meta["max_scaled_radius"])
        rng = np.random.default_rng(3)
        for _ in range(25):
            t = float(rng.uniform(0.3, 1.8))
            scaled = float(rng.uniform(0.05, hi))
            x = scaled * t ** (1.0 / 1.5)
            p = stable_density(spec, t, x)
            phi = float(phi_envelope(1, 1.5, t, x))
            assert bc.c1_hat * phi <= p * (1.0 + 1e-9)
            assert p <= bc.c2_hat * phi * (1.0 + 1e-9)

    def test_empty_grid_rejected(self):
        spec = StableSpec(d=1, alpha=1.0)
        with pytest.raises(ValueError):
            estimate_bound_constants(spec, [], np.array([[1.0]]))
        with pytest.raises(ValueError):
            estimate_bound_constants(spec, [1.0], np.zeros((0, 1)))


class TestDensityGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            DensityGrid(t=1.0, points=np.zeros((3, 1)), values=np.zeros(2))
        with pytest.raises(ValueError):
            DensityGrid(t=1.0, points=np.zeros((2, 1)), values=np.array([1.0, -0.1]))
        with pytest.raises(ValueError):
            DensityGrid(t=1.0, points=np.zeros((2, 1)), values=np.array([1.0, np.nan]))

    def test_properties(self):
        g = DensityGrid(t=1.0, points=np.array([[3.0, 4.0], [0.0, 1.0]]), values=np.ones(2))
        assert g.d == 2
        assert np.allclose(g.radii(), [5.0, 1.0])

    def test_grid_thread_invariance(self):
        spec = StableSpec(d=1, alpha=1.0, c=1.0)
        pts = np.linspace(-3.0, 3.0, 25)[:, None]
        g1 = stable_density_grid(spec, 0.5, pts, threads=1)
        g3 = stable_density_grid(spec, 0.5, pts, threads=3)
        assert np.array_equal(g1.values, g3.values)
        assert g1.meta["method_counts"] == g3.meta["method_counts"]
        assert sum(g1.meta["method_counts"].values()) == 25

    def test_grid_interp_and_mass(self):
        pts = np.linspace(-1.0, 1.0, 201)
        vals = np.maximum(1.0 - np.abs(pts), 0.0)  # triangle density, mass 1
        g = DensityGrid(t=1.0, points=pts[:, None], values=vals)
        assert grid_mass(g) == pytest.approx(1.0, rel=1e-12)
        assert np.allclose(grid_interp(g, pts), vals)
        assert grid_interp(g, np.array([-5.0, 5.0])).tolist() == [0.0, 0.0]
        g2 = DensityGrid(t=1.0, points=np.zeros((2, 2)), values=np.ones(2))
        with pytest.raises(ValueError):
            grid_interp(g2, [0.0])
        with pytest.raises(ValueError):
            grid_mass(g2)


class TestKde:
    def test_gaussian_recovery(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal(10**5)
        centers, density, se, h, dropped = kde_1d(x)
        step = centers[1] - centers[0]
        assert density.sum() * step + dropped == pytest.approx(1.0, abs=1e-6)
        peak = density[np.argmin(np.abs(centers))]
        assert peak == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), rel=0.03)
        assert h > 0.0
        assert np.all(se >= 0.0)
        assert np.any(se > 0.0)

    def test_manual_bandwidth_and_range(self):
        x = np.random.default_rng(16).standard_normal(5000)
        centers, density, _, h, dropped = kde_1d(x, bandwidth=0.25, lo=-2.0, hi=2.0)
        assert h == 0.25
        assert centers[0] > -2.0 and centers[-1] < 2.0
        assert dropped > 0.0  # mass beyond +-2 exists and is reported

    def test_validation(self):
        with pytest.raises(ValueError):
            kde_1d(np.array([1.0]))
        with pytest.raises(ValueError):
            kde_1d(np.ones(100), bandwidth=0.0)


class TestTruncatedEstimate:
    SPEC = TruncatedStableSpec(d=1, alpha=1.0, c=1.0, r=1.0)

    def test_basic_estimate(self):
        g = truncated_density_estimate(self.SPEC, 0.5, 3 * 10**4, seed=SeedSpec(71))
        assert 0.98 <= g.meta["mass"] <= 1.02
        assert grid_mass(g) == pytest.approx(1.0, abs=0.02)
        assert g.t == 0.5
        for key in ("se", "bandwidth", "bin_width", "n", "dropped_fraction", "epsilon"):
            assert key in g.meta
        # symmetric law: compare the two sides of the KDE loosely
        mid = grid_interp(g, np.array([0.6, -0.6]))
        assert mid[0] == pytest.approx(mid[1], rel=0.15)

    def test_sample_floor(self):
        with pytest.raises(ValueError):
            truncated_density_estimate(self.SPEC, 0.5, 10**3)

    def test_d2_unimplemented(self):
        spec = TruncatedStableSpec(d=2, alpha=1.0, c=1.0, r=1.0)
        with pytest.raises(NotImplementedError):
            truncated_density_estimate(spec, 0.5, 10**4)


@pytest.fixture(scope="module")
def estimates():
    spec = TruncatedStableSpec(d=1, alpha=1.0, c=1.0, r=1.0)
    return [
        truncated_density_estimate(spec, t, 4 * 10**4, seed=SeedSpec(72).substream(i))
        for i, t in enumerate((0.5, 1.0))
    ]


class TestTruncatedBounds:
    SPEC = TruncatedStableSpec(d=1, alpha=1.0, c=1.0, r=1.0)

    def test_fit_and_recount(self, estimates):
        tb = check_truncated_bounds(self.SPEC, [0.5, 1.0], estimates)
        assert 0.0 < tb.c2 <= tb.c1
        assert tb.c7 > 0.0
        assert tb.grid_meta["bulk_violations"] == 0
        assert tb.grid_meta["tail_fit"] == "ok"
        assert tb.grid_meta["tail_violations"] == {"upper": 0, "lower": 0}
        assert set(tb.grid_meta["per_t_c7"]) == {0.5, 1.0}

    def test_argument_validation(self, estimates):
        with pytest.raises(ValueError):
            check_truncated_bounds(self.SPEC, [0.5], estimates)
        with pytest.raises(ValueError):
            check_truncated_bounds(self.SPEC, [0.5, 2.0], estimates)
        with pytest.raises(ValueError):
            check_truncated_bounds(self.SPEC, [1.0, 0.5], estimates)

    def test_unreliable_tail_falls_back(self):
        # a grid with no support beyond |x| = 1 cannot inform the tail fit
        pts = np.linspace(-0.9, 0.9, 301)
        vals = np.maximum(1.0 - np.abs(pts) / 0.9, 0.0) / 0.9
        g = DensityGrid(
            t=0.5,
            points=pts[:, None],
            values=vals,
            meta={"se": np.full(301, 1e-4), "bin_width": pts[1] - pts[0], "n": 10**4},
        )
        tb = check_truncated_bounds(self.SPEC, [0.5], [g])
        assert tb.grid_meta["tail_fit"] == "unreliable"
        assert (tb.c3, tb.c4, tb.c5, tb.c6) == (1.0, 1.0, 1.0, 1.0)


class TestTailEnvelopeFit:
    def test_affine_data_recovered_exactly(self):
        u = -np.array([1.0, 2.0, 3.0, 4.0])
        logp = 0.3 + 0.7 * u
        for side in ("upper", "lower"):
            C, k = _fit_tail_envelope(u, logp, side)
            assert math.log(C) == pytest.approx(0.3, abs=1e-9)
            assert k == pytest.approx(0.7, abs=1e-9)

    def test_envelopes_bracket_data(self):
        rng = np.random.default_rng(8)
        u = -np.sort(rng.uniform(0.5, 5.0, 40))
        logp = 1.2 * u - 0.4 + 0.05 * np.sin(7.0 * u)
        cu, ku = _fit_tail_envelope(u, logp, "upper")
        cl, kl = _fit_tail_envelope(u, logp, "lower")
        assert np.all(math.log(cu) + ku * u >= logp - 1e-9)
        assert np.all(math.log(cl) + kl * u <= logp + 1e-9)


class TestConvexityProfile:
    def _grid(self, f):
        pts = np.linspace(-4.0, 4.0, 801)
        return DensityGrid(t=0.5, points=pts[:, None], values=f(pts))

    def test_exponential_type_tail_is_increasing(self):
        g = self._grid(lambda x: np.exp(-(x**2)))
        radii, prof, se = tail_convexity_profile(g)
        assert np.all(np.diff(prof) > 0.0)
        assert np.allclose(radii, [1.5, 2.0, 3.0])
        assert np.allclose(se, 0.0)  # no se in meta -> zeros

    def test_polynomial_tail_is_decreasing(self):
        g = self._grid(lambda x: (1.0 + np.abs(x)) ** -3.0)
        _, prof, _ = tail_convexity_profile(g)
        assert np.all(np.diff(prof) < 0.0)

    def test_vanishing_probe_raises(self):
        pts = np.linspace(-1.0, 1.0, 101)
        g = DensityGrid(t=0.5, points=pts[:, None], values=np.ones(101))
        with pytest.raises(DensityEstimateError):
            tail_convexity_profile(g)
