import math

import numpy as np
import pytest
from scipy import integrate, stats

import hamjump as hj
from hamjump.model import Density, ModelError

# frozen oracle values (normal pdf/cdf evaluations)
PHI_2 = 0.05399096651318806  # standard normal pdf at 2
PHI_0 = 0.3989422804014327  # standard normal pdf at 0
OVERLAP_XI2 = 0.31731050786291415  # 2 Phi(-1)
OVERLAP_HALF = 0.6170750774519738  # 2 Phi(-0.5)

ALL_KINDS = [
    ("standard_gaussian", None),
    ("heavy_tail", 3.0),
    ("heavy_tail", 1.0),
    ("stretched_exp", 1.0),
    ("stretched_exp", 0.5),
]


class TestTruncate:
    def test_zero_branch(self):
        assert np.array_equal(hj.truncate(np.zeros(2), 1.0), np.zeros(2))

    def test_unit_cap(self):
        np.testing.assert_allclose(hj.truncate([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)

    def test_inside_identity(self):
        np.testing.assert_array_equal(hj.truncate([0.3, 0.4], 1.0), [0.3, 0.4])

    def test_norm_and_direction(self, rng):
        for _ in range(50):
            z = rng.normal(size=3)
            kappa = float(rng.uniform(0.1, 3.0))
            out = hj.truncate(z, kappa)
            assert np.linalg.norm(out) == pytest.approx(min(np.linalg.norm(z), kappa))
            # nonnegative multiple of z: aligned and not anti-parallel
            assert np.dot(out, z) >= 0
            assert np.dot(out, z) == pytest.approx(
                np.linalg.norm(out) * np.linalg.norm(z), rel=1e-12
            )

    def test_rejects_bad_input(self):
        with pytest.raises(ModelError):
            hj.truncate([np.inf, 0.0], 1.0)
        with pytest.raises(ModelError):
            hj.truncate([1.0, 0.0], 0.0)


class TestReflect:
    def test_axis_component_flips(self):
        np.testing.assert_allclose(hj.reflect([1.0, 0.0], [3.0, 4.0]), [-3.0, 4.0])

    def test_zero_axis_negates(self):
        np.testing.assert_allclose(hj.reflect([0.0, 0.0], [3.0, 4.0]), [-3.0, -4.0])

    def test_orthogonal_fixed(self):
        np.testing.assert_allclose(hj.reflect([1.0, 0.0], [0.0, 7.0]), [0.0, 7.0])

    def test_isometric_involution(self, rng):
        for _ in range(50):
            a = rng.normal(size=4)
            u = rng.normal(size=4)
            r = hj.reflect(a, u)
            assert np.linalg.norm(r) == pytest.approx(np.linalg.norm(u), rel=1e-12)
            np.testing.assert_allclose(hj.reflect(a, r), u, atol=1e-12)
        a = rng.normal(size=4)
        np.testing.assert_allclose(hj.reflect(a, a), -a, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ModelError):
            hj.reflect([1.0, 0.0, 0.0], [1.0, 0.0])


class TestDensity:
    @pytest.mark.parametrize("kind,param", ALL_KINDS)
    def test_radial_pdf_normalized(self, kind, param):
        for d in (1, 2, 3):
            dens = Density(kind, d, param)
            val, err = integrate.quad(dens.radial_pdf, 0, np.inf, limit=200)
            assert val == pytest.approx(1.0, abs=max(1e-9, 10 * err))

    @pytest.mark.parametrize("kind,param", ALL_KINDS)
    def test_sampler_matches_radial_law(self, kind, param, rng):
        dens = Density(kind, 2, param)
        radii = np.linalg.norm(dens.sample(rng, 4000), axis=1)
        p = stats.kstest(radii, dens.radial_cdf).pvalue
        assert p > 0.01

    @pytest.mark.parametrize("kind,param", ALL_KINDS)
    def test_moments_match_samples(self, kind, param, rng):
        dens = Density(kind, 2, param)
        order = dens.moment_order_beta
        m = dens.moment(order)
        radii = np.linalg.norm(dens.sample(rng, 200_000), axis=1)
        vals = radii**order
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - m) < 4 * se

    @pytest.mark.parametrize("kind,param", ALL_KINDS)
    def test_pdf_positive_bounded_decreasing(self, kind, param):
        dens = Density(kind, 2, param)
        r = np.linspace(0, 20, 200)
        vals = np.exp(dens.log_pdf_radius(r))
        assert np.all(vals > 0)
        assert np.all(np.isfinite(vals))
        assert np.all(np.diff(vals) <= 1e-300)

    def test_heavy_tail_infinite_moment(self):
        dens = Density("heavy_tail", 2, 1.0)
        assert dens.moment(1.0) == math.inf
        assert dens.moment_order_beta == 0.5
        assert math.isfinite(dens.m_beta)

    def test_heavy_tail_half_moment_value(self):
        # beta-prime(2, 1) half moment equals 3 pi / 4
        dens = Density("heavy_tail", 2, 1.0)
        assert dens.moment(0.5) == pytest.approx(3 * math.pi / 4, rel=1e-12)

    def test_gaussian_second_moment_is_dimension(self):
        for d in (1, 2, 5):
            assert Density("standard_gaussian", d).moment(2.0) == pytest.approx(d)

    def test_bad_kind_and_param(self):
        with pytest.raises(ModelError):
            Density("lognormal", 2, 1.0)
        with pytest.raises(ModelError):
            Density("heavy_tail", 2, None)
        with pytest.raises(ModelError):
            Density("standard_gaussian", 2, 1.0)


class TestOverlapPrimitives:
    def test_psi_zero_shift_is_pdf(self, rng):
        dens = Density("standard_gaussian", 2)
        u = rng.normal(size=(20, 2))
        np.testing.assert_array_equal(dens.psi(np.zeros(2), u), dens.pdf(u))

    def test_psi_gaussian_value(self):
        dens = Density("standard_gaussian", 1)
        assert dens.psi(np.array([2.0]), np.array([0.0])) == pytest.approx(PHI_2, rel=1e-12)

    def test_psi_shift_symmetry(self, rng):
        for kind, param in ALL_KINDS:
            dens = Density(kind, 2, param)
            for _ in range(20):
                xi = rng.normal(size=2)
                u = rng.normal(size=2)
                assert dens.psi(xi, u) == pytest.approx(dens.psi(-xi, u + xi), rel=1e-12)

    def test_capital_psi_partition_of_unity(self, rng):
        for kind, param in ALL_KINDS:
            dens = Density(kind, 2, param)
            xi = rng.normal(size=2)
            u = rng.normal(size=(50, 2))
            np.testing.assert_allclose(
                dens.psi(xi, u) + dens.capital_psi(xi, u), dens.pdf(u), rtol=1e-12
            )

    def test_capital_psi_zero_shift_vanishes(self, rng):
        dens = Density("heavy_tail", 2, 3.0)
        u = rng.normal(size=(10, 2))
        np.testing.assert_array_equal(dens.capital_psi(np.zeros(2), u), np.zeros(10))

    def test_capital_psi_gaussian_value(self):
        dens = Density("standard_gaussian", 1)
        got = dens.capital_psi(np.array([2.0]), np.array([0.0]))
        assert got == pytest.approx(PHI_0 - PHI_2, rel=1e-12)

    def test_radial_change_of_variables(self, rng):
        # for radial densities, reflecting the residual draw about the
        # truncated gap equals flipping the shift sign: MC means of
        # Theta(reflect(zk, u)) Psi_xi(u) and Theta(u) Psi_{-xi}(u) agree
        dens = Density("standard_gaussian", 2)
        zk = np.array([0.8, 0.6])
        xi = 0.9 * zk
        target = np.array([0.3, -1.1])

        def theta(u):
            return np.exp(-np.sum((u - target) ** 2, axis=-1))

        n = 400_000
        u = dens.sample(rng, n)
        w1 = theta(hj.reflect(zk, u)) * (1.0 - dens.accept_ratio(xi, u))
        w2 = theta(u) * (1.0 - dens.accept_ratio(-xi, u))
        se = math.hypot(w1.std(ddof=1), w2.std(ddof=1)) / math.sqrt(n)
        assert abs(w1.mean() - w2.mean()) <= 3 * se


class TestOverlapMass:
    def test_zero_shift_exact_one(self, rng):
        est = hj.overlap_mc(Density("standard_gaussian", 2), 0.0, 100, rng)
        assert est.value == 1.0 and est.stderr == 0.0

    def test_gaussian_value_mc(self, rng):
        est = hj.overlap_mc(Density("standard_gaussian", 2), 2.0, 200_000, rng)
        assert abs(est.value - OVERLAP_XI2) <= 3 * est.stderr

    def test_gaussian_quadrature_closed_form(self):
        val, err = hj.overlap_quadrature(Density("standard_gaussian", 3), 2.0)
        assert val == pytest.approx(OVERLAP_XI2, abs=1e-12)

    def test_heavy_d1_closed_form(self):
        # one-dimensional tail reduction: A(s) = (1 + s/2)^(-beta)
        dens = Density("heavy_tail", 1, 3.0)
        val, _ = hj.overlap_quadrature(dens, 0.5)
        assert val == pytest.approx(1.25**-3, rel=1e-9)
        assert 0 < val < 1

    @pytest.mark.parametrize("kind,param", ALL_KINDS)
    def test_quadrature_matches_mc(self, kind, param, rng):
        dens = Density(kind, 2, param)
        for s in (0.4, 1.7):
            est = hj.overlap_mc(dens, s, 150_000, rng)
            val, err = hj.overlap_quadrature(dens, s)
            assert abs(est.value - val) <= 3 * est.stderr + err

    @pytest.mark.parametrize("kind,param", ALL_KINDS)
    @pytest.mark.parametrize("d", [1, 2])
    def test_monotone_in_shift(self, kind, param, d):
        dens = Density(kind, d, param)
        grid = [0.0, 0.3, 0.8, 1.5, 3.0, 6.0]
        vals = [hj.overlap_quadrature(dens, s)[0] for s in grid]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))

    def test_rejects_bad_args(self, rng):
        dens = Density("standard_gaussian", 2)
        with pytest.raises(ModelError):
            hj.overlap_mc(dens, 1.0, 0, rng)
        with pytest.raises(ModelError):
            hj.overlap_mc(dens, -1.0, 10, rng)


class TestOverlapConstants:
    def test_gaussian_reference_grid(self, rng):
        dens = Density("standard_gaussian", 2)
        oc = hj.estimate_overlap_constants(dens, 1.0, 1.0, [0.25, 0.5, 1.0], 200_000, rng)
        # worst radius is r = 1 where the mass is 2 Phi(-1/2)
        assert oc.c_star <= OVERLAP_HALF
        assert oc.c_star == pytest.approx(OVERLAP_HALF, abs=0.01)
        assert oc.c_star <= 1.0 and oc.c_upper_star >= 0.0

    @pytest.mark.parametrize("kind,param", ALL_KINDS)
    def test_positive_for_admissible_densities(self, kind, param, rng):
        # bounded decreasing positive density -> both constants positive
        dens = Density(kind, 2, param)
        oc = hj.estimate_overlap_constants(dens, 1.0, 2.0, [0.5, 1.0, 2.0], 50_000, rng)
        assert 0 < oc.c_star <= 1.0 and oc.c_upper_star > 0

    def test_quadrature_variant_agrees(self, rng):
        dens = Density("standard_gaussian", 2)
        mc = hj.estimate_overlap_constants(dens, 1.0, 1.0, [0.5, 1.0], 200_000, rng)
        qd = hj.overlap_constants_quadrature(dens, 1.0, 1.0, [0.5, 1.0])
        assert qd.method == "quadrature"
        assert mc.c_star <= qd.c_star  # MC subtracts a statistical margin
        assert qd.c_star == pytest.approx(OVERLAP_HALF, abs=1e-9)

    def test_quadrature_handles_deep_tail(self):
        # far beyond any MC resolution, the bound stays strictly positive
        dens = Density("standard_gaussian", 2)
        qd = hj.overlap_constants_quadrature(dens, 1.0, 30.0, [30.0])
        assert 0 < qd.c_star < 1e-12

    def test_empty_or_bad_grid(self, rng):
        dens = Density("standard_gaussian", 2)
        with pytest.raises(ModelError):
            hj.estimate_overlap_constants(dens, 1.0, 1.0, [], 100, rng)
        with pytest.raises(ModelError):
            hj.estimate_overlap_constants(dens, 1.0, 1.0, [2.0], 100, rng)


class TestJumpRates:
    def test_constant(self):
        rate = hj.constant_rate(2.0)
        assert rate(np.zeros(2), np.ones(2)) == 2.0
        assert rate.lambda1 == rate.lambda2 == 2.0 and rate.lambda_lip == 0.0

    def test_sinusoidal_bounds(self, rng):
        rate = hj.sinusoidal_rate(1.0, 3.0)
        xs = rng.normal(scale=4, size=(500, 2))
        vs = rng.normal(scale=4, size=(500, 2))
        vals = rate(xs, vs)
        assert np.all(vals >= 1.0 - 1e-12) and np.all(vals <= 3.0 + 1e-12)
        assert rate.lambda_lip == pytest.approx(1.0)

    def test_expression_rate_bounds(self):
        rate = hj.expression_rate("2 + 0.5*sin(x_norm + v_norm)")
        assert rate.lambda1 == pytest.approx(1.5)
        assert rate.lambda2 == pytest.approx(2.5)
        assert rate.lambda_lip == pytest.approx(0.5)

    def test_expression_rate_rejects_tight_declaration(self):
        with pytest.raises(ModelError):
            hj.expression_rate("2 + 0.5*sin(x_norm)", declared=(1.9, 2.5, 0.5))

    def test_expression_rate_rejects_unbounded(self):
        with pytest.raises(ModelError):
            hj.expression_rate("1 + x_norm")

    def test_spot_check_catches_lying_bounds(self, rng):
        from hamjump.model import JumpRate

        def fn(x, v):
            x = np.asarray(x, dtype=float)
            return 1.0 + np.linalg.norm(x, axis=-1)

        bad = JumpRate(fn, 1.0, 1.5, 1.0, kind="custom")
        with pytest.raises(ModelError):
            bad.spot_check(2, rng)


class TestModelSpec:
    def test_dimension_mismatch(self):
        with pytest.raises(ModelError):
            hj.ModelSpec(
                3,
                1.0,
                hj.QuadraticPotential(1.0),
                hj.constant_rate(1.0),
                Density("standard_gaussian", 2),
            )

    def test_bad_gamma(self):
        with pytest.raises(ModelError):
            hj.ModelSpec(
                2,
                0.0,
                hj.QuadraticPotential(1.0),
                hj.constant_rate(1.0),
                Density("standard_gaussian", 2),
            )

    def test_phase_state_invariants(self):
        with pytest.raises(ModelError):
            hj.PhaseState(np.zeros(2), np.zeros(3))
        with pytest.raises(ModelError):
            hj.PhaseState(np.array([np.nan, 0.0]), np.zeros(2))
