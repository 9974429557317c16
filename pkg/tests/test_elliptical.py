import math

import numpy as np
import pytest
import scipy.stats as st
from hypothesis import given, settings
from hypothesis import strategies as hst

from robust_scatter.elliptical import EllipticalModel, GeneratingFunction, mahalanobis, phi_eval

from conftest import FAMILY_CASES, make_gen


class TestPhiEval:
    def test_gaussian_exact_at_2(self):
        # differentiate exp(-d/2) by hand
        gen = GeneratingFunction("gaussian", p=5)
        phi, dphi, ddphi = phi_eval(gen, 2.0)
        assert phi == pytest.approx(math.exp(-1.0), rel=1e-14)
        assert dphi == pytest.approx(-math.exp(-1.0) / 2.0, rel=1e-14)
        assert ddphi == pytest.approx(math.exp(-1.0) / 4.0, rel=1e-14)

    def test_cauchy_at_zero(self):
        gen = GeneratingFunction("cauchy", p=3)
        assert phi_eval(gen, 0.0)[0] == 1.0

    def test_pearson2_outside_support(self):
        gen = make_gen("pearson2")
        assert phi_eval(gen, 1.5) == (0.0, 0.0, 0.0)

    @pytest.mark.parametrize("family,params", FAMILY_CASES)
    def test_derivatives_match_finite_differences(self, family, params):
        gen = GeneratingFunction(family, 5, **params)
        top = 0.95 if family == "pearson2" else 12.0
        grid = np.linspace(0.05, top, 20)
        for d in grid:
            h = 1e-5 * max(1.0, d)
            if family == "pearson2":
                h = min(h, 0.4 * min(d, 1.0 - d))
            phi, dphi, ddphi = phi_eval(gen, d)
            pp = phi_eval(gen, d + h)[0]
            pm = phi_eval(gen, d - h)[0]
            fd1 = (pp - pm) / (2.0 * h)
            fd2 = (pp - 2.0 * phi + pm) / h**2
            assert fd1 == pytest.approx(dphi, rel=1e-6)
            assert fd2 == pytest.approx(ddphi, rel=5e-4, abs=1e-10)

    def test_negative_d_rejected(self):
        with pytest.raises(ValueError):
            phi_eval(GeneratingFunction("gaussian", p=5), -0.5)


class TestValidation:
    @pytest.mark.parametrize(
        "family,params",
        [
            ("kotz", dict(N=0.0, r=-1.0, s=1.0)),
            ("kotz", dict(N=0.0, r=0.5, s=0.0)),
            ("kotz", dict(N=-3.0, r=0.5, s=1.0)),  # N <= -p/2 at p=5
            ("pearson2", dict(m=0.0)),
            ("pearson7", dict(N=2.0, s=1.0)),  # N <= p/2 at p=5
            ("t", dict(nu=0.0)),
            ("vg", dict(lam=0.0, psi=2.0)),
            ("vg", dict(lam=1.0, psi=-2.0)),
            ("nig", dict(chi=0.0, psi=2.0)),
            ("genhyp", dict(lam=-1.0, chi=0.0, psi=1.0)),
        ],
    )
    def test_out_of_range_parameters_rejected(self, family, params):
        with pytest.raises(ValueError):
            GeneratingFunction(family, 5, **params)

    def test_dimension_must_be_at_least_two(self):
        with pytest.raises(ValueError):
            GeneratingFunction("gaussian", p=1)

    def test_wrong_parameter_names_rejected(self):
        with pytest.raises(ValueError):
            GeneratingFunction("t", 5, df=3.0)

    def test_sigma_must_be_symmetric(self):
        gen = GeneratingFunction("gaussian", p=3)
        sigma = np.eye(3)
        sigma[0, 1] = 1e-6
        with pytest.raises(ValueError):
            EllipticalModel(gen, sigma=sigma)

    def test_sigma_must_be_positive_definite(self):
        gen = GeneratingFunction("gaussian", p=3)
        with pytest.raises(ValueError):
            EllipticalModel(gen, sigma=-np.eye(3))


class TestAliases:
    def test_gaussian_is_kotz(self):
        gauss = GeneratingFunction("gaussian", p=5)
        kotz = GeneratingFunction("kotz", 5, N=0.0, r=0.5, s=1.0)
        grid = np.linspace(0.01, 30.0, 50)
        assert np.allclose(gauss.phi(grid), kotz.phi(grid), rtol=1e-12)

    def test_t_is_pearson7(self):
        t3 = GeneratingFunction("t", 5, nu=3.0)
        pvii = GeneratingFunction("pearson7", 5, N=(3.0 + 5.0) / 2.0, s=3.0)
        grid = np.linspace(0.01, 30.0, 50)
        assert np.allclose(t3.phi(grid), pvii.phi(grid), rtol=1e-12)
        m1, m2 = EllipticalModel(t3), EllipticalModel(pvii)
        for u in (0.1, 0.5, 0.9):
            assert m1.quantile_d(u) == pytest.approx(m2.quantile_d(u), rel=1e-10)
        for d in (0.5, 3.0, 20.0):
            assert m1.cdf_d(d) == pytest.approx(m2.cdf_d(d), rel=1e-10, abs=1e-12)

    def test_cauchy_is_t1(self):
        cauchy = GeneratingFunction("cauchy", p=4)
        t1 = GeneratingFunction("t", 4, nu=1.0)
        assert cauchy == t1

    def test_laplace_is_vg(self):
        assert GeneratingFunction("laplace", p=5) == GeneratingFunction("vg", 5, lam=1.0, psi=2.0)


class TestDensity:
    def test_gaussian_d_density_is_chi_squared(self):
        model = EllipticalModel(GeneratingFunction("gaussian", p=5))
        grid = np.linspace(0.1, 20.0, 25)
        assert np.allclose(model.density_d(grid), st.chi2.pdf(grid, 5), rtol=1e-9)

    def test_gaussian_p2_density_at_zero(self):
        model = EllipticalModel(GeneratingFunction("gaussian", p=2))
        assert model.density_d(0.0) == pytest.approx(0.5, rel=1e-10)
        assert model.density_d(3.0) == pytest.approx(math.exp(-1.5) / 2.0, rel=1e-10)

    def test_density_zero_at_origin_p4(self):
        for family, params in FAMILY_CASES:
            gen = GeneratingFunction(family, 4, **params)
            assert EllipticalModel(gen).density_d(0.0) == 0.0

    @pytest.mark.parametrize("family,params", FAMILY_CASES)
    def test_normalization_p5(self, family, params):
        model = EllipticalModel(GeneratingFunction(family, 5, **params))
        upper = model.gen.support_upper
        total = model.cdf_d(upper if math.isfinite(upper) else 1e300)
        assert total == pytest.approx(1.0, abs=1e-8)


class TestCdfQuantile:
    def test_cdf_at_zero(self, gauss5_model):
        assert gauss5_model.cdf_d(0.0) == 0.0

    def test_gaussian_median_matches_chi_squared(self):
        for p in (2, 5, 20):
            model = EllipticalModel(GeneratingFunction("gaussian", p=p))
            assert model.quantile_d(0.5) == pytest.approx(st.chi2.ppf(0.5, p), rel=1e-9)

    def test_gaussian_p2_median_closed_form(self):
        model = EllipticalModel(GeneratingFunction("gaussian", p=2))
        assert model.quantile_d(0.5) == pytest.approx(2.0 * math.log(2.0), rel=1e-10)

    @pytest.mark.parametrize("family", ["gaussian", "t", "laplace", "pearson2", "nig"])
    def test_round_trip(self, family):
        model = EllipticalModel(make_gen(family))
        for u in (0.001, 0.25, 0.5, 0.9, 0.9999):
            assert model.cdf_d(model.quantile_d(u)) == pytest.approx(u, rel=1e-8, abs=1e-10)

    def test_quantile_domain(self, gauss5_model):
        for u in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                gauss5_model.quantile_d(u)

    def test_cdf_monotone(self, gauss5_model):
        grid = np.linspace(0.0, 30.0, 40)
        vals = [gauss5_model.cdf_d(float(d)) for d in grid]
        assert np.all(np.diff(vals) >= 0)


class TestSampling:
    def test_gaussian_mean_d(self, gauss5_model):
        x = gauss5_model.sample(100_000, seed=1)
        d = gauss5_model.mahalanobis(x)
        assert d.mean() == pytest.approx(5.0, abs=0.1)

    def test_single_row_shape(self, gauss5_model):
        assert gauss5_model.sample(1, seed=42).shape == (1, 5)

    def test_cauchy_median_round_trip(self):
        model = EllipticalModel(GeneratingFunction("cauchy", p=3))
        d = model.sample_d(100_000, seed=5)
        assert (d <= model.median_d).mean() == pytest.approx(0.5, abs=0.01)

    @pytest.mark.parametrize("family,params", [("gaussian", {}), ("t", dict(nu=3.0)), ("laplace", {})])
    def test_sampling_law_ks(self, family, params):
        model = EllipticalModel(GeneratingFunction(family, 5, **params))
        d = model.sample_d(100_000, seed=9)
        ks = st.kstest(d, lambda v: model.cdf_d(np.asarray(v))).statistic
        assert ks < 0.01

    def test_determinism(self, gauss5_model):
        a = gauss5_model.sample(100, seed=7)
        b = gauss5_model.sample(100, seed=7)
        assert np.array_equal(a, b)
        c = gauss5_model.sample(100, seed=8)
        assert not np.array_equal(a, c)

    def test_pair_seeds_are_independent_streams(self, gauss5_model):
        a = gauss5_model.sample(50, seed=(3, 1))
        b = gauss5_model.sample(50, seed=(3, 2))
        assert not np.array_equal(a, b)

    def test_nonpositive_n_rejected(self, gauss5_model):
        with pytest.raises(ValueError):
            gauss5_model.sample(0, seed=1)


class TestMahalanobis:
    def test_zero_at_center(self):
        mu = np.array([1.0, -2.0, 3.0])
        assert mahalanobis(mu, mu, np.eye(3)) == 0.0

    def test_euclidean_case(self):
        mu = np.zeros(2)
        assert mahalanobis(np.array([3.0, 4.0]), mu, np.eye(2)) == pytest.approx(25.0, rel=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(hst.integers(min_value=0, max_value=10_000))
    def test_affine_invariance(self, seed):
        rng = np.random.default_rng(seed)
        p = 4
        x = rng.normal(size=p)
        mu = rng.normal(size=p)
        a = rng.normal(size=(p, p)) + 3.0 * np.eye(p)
        bvec = rng.normal(size=p)
        sigma = a @ a.T + p * np.eye(p)
        lhs = mahalanobis(x, mu, sigma)
        rhs = mahalanobis(a @ x + bvec, a @ mu + bvec, a @ sigma @ a.T)
        assert rhs == pytest.approx(lhs, rel=1e-10)

    def test_singular_sigma_raises(self):
        from robust_scatter.errors import DegenerateDataError

        with pytest.raises(DegenerateDataError):
            mahalanobis(np.ones(2), np.zeros(2), np.zeros((2, 2)))

    def test_matrix_input(self, gauss5_model):
        x = gauss5_model.sample(10, seed=3)
        d = gauss5_model.mahalanobis(x)
        assert d.shape == (10,)
        assert np.all(d >= 0)


class TestModelInvariants:
    def test_shape_has_unit_determinant(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 4))
        sigma = a @ a.T + 4 * np.eye(4)
        model = EllipticalModel(GeneratingFunction("t", 4, nu=3.0), sigma=sigma)
        assert np.linalg.det(model.shape) == pytest.approx(1.0, abs=1e-10)

    def test_beta_p_normalizes(self, gauss5_model):
        # beta_p for the Gaussian is 1 / (2^{p/2} Gamma(p/2))
        expected = 1.0 / (2.0 ** (5 / 2) * math.gamma(5 / 2))
        assert gauss5_model.beta_p == pytest.approx(expected, rel=1e-10)
