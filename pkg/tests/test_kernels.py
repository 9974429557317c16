import math

import numpy as np
import pytest

from robust_scatter.elliptical import GeneratingFunction, phi_eval
from robust_scatter.errors import TuningError
from robust_scatter.kernels import (
    BisquareKernel,
    MleKernel,
    RockeKernel,
    ShrKernel,
    SqKernel,
    SqType,
    rejection_points,
    rejection_points_numeric,
    sq_rho_tilde,
    sq_weight_tilde,
    valid_q_range,
)

from conftest import make_gen


def proper_kernel_zoo(gauss5):
    laplace = GeneratingFunction("laplace", p=5)
    return [
        SqKernel(gauss5, 0.5),
        SqKernel(gauss5, 0.9),
        SqKernel(laplace, 0.9),
        RockeKernel(1.0),
        RockeKernel(0.6),
        BisquareKernel(),
        ShrKernel(4.0),
    ]


class TestRhoTilde:
    def test_gaussian_q1_closed_form(self):
        # rho-tilde at q=1 is t/2 - s_p for the Gaussian
        for p, t in ((2, 4.0), (5, 3.0), (10, 0.5)):
            k = SqKernel(GeneratingFunction("gaussian", p=p), 1.0)
            sp = p / 2.0 - 1.0
            assert sq_rho_tilde(k, t) == pytest.approx(t / 2.0 - sp, rel=1e-12)
        assert sq_rho_tilde(SqKernel(GeneratingFunction("gaussian", p=2), 1.0), 4.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("family", ["gaussian", "t", "laplace", "kotz"])
    def test_q1_matches_scale_mle_rho(self, family):
        gen = make_gen(family)
        k = SqKernel(gen, 1.0)
        for t in (0.5, 2.0, 7.0):
            phi, dphi, _ = phi_eval(gen, t)
            expected = -(t * dphi / phi + gen.s_p)
            assert sq_rho_tilde(k, t) == pytest.approx(expected, rel=1e-10)

    def test_zero_at_origin_for_q_below_one(self, gauss5):
        k = SqKernel(gauss5, 0.5)
        assert sq_rho_tilde(k, 0.0) == 0.0

    def test_pearson2_zero_outside_support(self):
        k = SqKernel(make_gen("pearson2"), 0.5)
        assert sq_rho_tilde(k, 1.2) == 0.0
        assert sq_weight_tilde(k, 1.2) == 0.0


class TestWeightTilde:
    def test_matches_finite_difference_of_rho_tilde(self, gauss5):
        k = SqKernel(gauss5, 0.5)
        t, h = 3.0, 1e-6
        fd = (sq_rho_tilde(k, t + h) - sq_rho_tilde(k, t - h)) / (2.0 * h)
        assert sq_weight_tilde(k, t) == pytest.approx(fd, rel=1e-6)

    def test_zero_at_rejection_points(self, gauss5):
        k = SqKernel(gauss5, 0.5)
        assert sq_weight_tilde(k, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert sq_weight_tilde(k, 9.0) == pytest.approx(0.0, abs=1e-12)

    def test_gaussian_q1_weight_is_half(self, gauss5):
        # Gaussian raw q=1 weight: -phi'/phi + t(phi'/phi)^2 - t phi''/phi = 1/2
        k = SqKernel(gauss5, 1.0)
        for t in (0.3, 1.0, 5.0, 20.0):
            assert k.weight(t) == pytest.approx(0.5, rel=1e-12)


class TestRejectionPoints:
    def test_gaussian_p5_q05_closed_form(self, gauss5):
        a, c, sq_type = rejection_points(gauss5, 0.5)
        assert a == pytest.approx(1.0, abs=1e-12)
        assert c == pytest.approx(9.0, abs=1e-12)
        assert sq_type is SqType.TYPE_II

    def test_root_finder_agrees_with_closed_form(self, gauss5):
        a_n, c_n, type_n = rejection_points_numeric(gauss5, 0.5)
        assert a_n == pytest.approx(1.0, abs=1e-10)
        assert c_n == pytest.approx(9.0, abs=1e-10)
        assert type_n is SqType.TYPE_II

    @pytest.mark.parametrize("q", [0.9, 0.5, 0.0, -2.0])
    def test_laplace_is_type_one(self, q):
        a, c, sq_type = rejection_points(GeneratingFunction("laplace", p=5), q)
        assert a == 0.0
        assert sq_type is SqType.TYPE_I
        assert c > 0

    def test_outlier_rejection_grows_toward_q_one(self, gauss5):
        cs = [rejection_points(gauss5, q)[1] for q in (0.5, 0.9, 0.99)]
        assert cs[0] < cs[1] < cs[2]

    @pytest.mark.parametrize("family", ["kotz", "pearson2", "pearson7", "t", "cauchy"])
    def test_closed_forms_match_root_finder(self, family):
        gen = make_gen(family)
        q = 0.6 if family != "pearson2" else 0.5
        a, c, _ = rejection_points(gen, q)
        a_n, c_n, _ = rejection_points_numeric(gen, q)
        assert a_n == pytest.approx(a, rel=1e-9, abs=1e-10)
        assert c_n == pytest.approx(c, rel=1e-9)

    def test_gaussian_type_flips_at_p2(self):
        # s_p = 0 at p=2 puts the inlier rejection point at the origin
        a, _, sq_type = rejection_points(GeneratingFunction("gaussian", p=2), 0.5)
        assert a == 0.0 and sq_type is SqType.TYPE_I


class TestValidQRange:
    def test_gaussian_unbounded_below(self, gauss5):
        rng = valid_q_range(gauss5)
        assert rng.upper == 1.0 and math.isinf(rng.lower)
        assert rng.contains(1.0) and rng.contains(-50.0)

    def test_pearson2_gap(self):
        rng = valid_q_range(make_gen("pearson2", m=4.0))
        assert rng.gap == (0.75, 1.0)
        assert rng.contains(1.0) and rng.contains(0.74)
        assert not rng.contains(0.8)

    def test_kotz_restricted_band(self):
        # p=5: s_p = 1.5; N in (-2.5, -1.5) restricts q from below
        gen = GeneratingFunction("kotz", 5, N=-2.0, r=0.5, s=1.0)
        rng = valid_q_range(gen)
        assert rng.lower == pytest.approx(1.0 + 1.0 / (4.0 * (1.5 - 2.0)))
        with pytest.raises(TuningError):
            SqKernel(gen, rng.lower - 0.1)

    def test_kotz_n0_unrestricted(self):
        rng = valid_q_range(GeneratingFunction("kotz", 5, N=0.0, r=0.5, s=1.0))
        assert math.isinf(rng.lower)

    def test_genhyp_exclusion_gap(self):
        rng = valid_q_range(GeneratingFunction("laplace", p=5))
        assert rng.gap == (0.998, 1.0)
        with pytest.raises(TuningError):
            SqKernel(GeneratingFunction("laplace", p=5), 0.999)

    def test_genhyp_chi0_small_lam_heuristic(self):
        rng = valid_q_range(GeneratingFunction("vg", 5, lam=0.5, psi=2.0))
        assert rng.lower_heuristic
        assert rng.contains(0.99)


class TestRhoWeightProperties:
    def test_rho_grid_properties(self, gauss5):
        for kernel in proper_kernel_zoo(gauss5):
            top = kernel.c * 1.5 if math.isfinite(kernel.c) else 50.0
            grid = np.linspace(0.0, top, 200)
            rho = kernel.rho(grid)
            assert np.all(rho >= -1e-15) and np.all(rho <= 1.0 + 1e-12)
            assert np.all(np.diff(rho) >= -1e-12)
            assert kernel.rho(0.0) == 0.0
            assert kernel.rho(kernel.c) == pytest.approx(1.0, abs=1e-9)
            assert kernel.rho(kernel.c * 1.3) == 1.0

    def test_weight_is_derivative_of_rho(self, gauss5):
        for kernel in proper_kernel_zoo(gauss5):
            a = kernel.a
            c = kernel.c
            inner = np.linspace(a + 0.05 * (c - a), c - 0.05 * (c - a), 25)
            h = 1e-6 * max(1.0, c)
            for t in inner:
                fd = (kernel.rho(t + h) - kernel.rho(t - h)) / (2.0 * h)
                w = kernel.weight(t)
                assert w == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_positive_weight_region_narrows_as_q_decreases(self, gauss5):
        widths = [rejection_points(gauss5, q)[1] - rejection_points(gauss5, q)[0] for q in (-2.0, 0.0, 0.5, 0.9)]
        assert widths[0] < widths[1] < widths[2] < widths[3]

    def test_rocke_support(self):
        k = RockeKernel(0.7)
        assert k.weight(0.29) == 0.0 and k.weight(1.71) == 0.0
        assert k.weight(0.31) > 0.0 and k.weight(1.69) > 0.0

    def test_bisquare_support(self):
        k = BisquareKernel()
        assert k.weight(1.0 + 1e-12) == 0.0
        assert k.weight(0.999) > 0.0

    def test_type_classification_matches_weight_roots(self, gauss5):
        assert SqKernel(gauss5, 0.5).sq_type is SqType.TYPE_II
        assert SqKernel(GeneratingFunction("laplace", p=5), 0.5).sq_type is SqType.TYPE_I


class TestKernelValues:
    def test_rocke_rho_at_one_is_half(self):
        for gamma in (0.2, 0.5, 1.0):
            assert RockeKernel(gamma).rho(1.0) == pytest.approx(0.5, rel=1e-14)

    def test_bisquare_values(self):
        k = BisquareKernel()
        assert k.rho(0.0) == 0.0
        assert k.rho(1.0) == pytest.approx(1.0)
        assert k.weight(0.0) == pytest.approx(3.0)

    def test_sq_rho_endpoints(self, gauss5):
        k = SqKernel(gauss5, 0.5)
        assert k.rho(1.0) == 0.0
        assert k.rho(9.0) == 1.0
        grid = np.linspace(1.001, 8.999, 50)
        assert np.all(np.diff(k.rho(grid)) > 0)

    def test_mle_gaussian_weight_is_one(self, gauss5):
        k = MleKernel(gauss5)
        for t in (0.0, 0.5, 5.0, 50.0):
            assert k.weight(t) == pytest.approx(1.0, rel=1e-12)

    def test_mle_not_proper(self, gauss5):
        assert not MleKernel(gauss5).proper
        assert not SqKernel(gauss5, 1.0).proper

    def test_shr_weight_plateau_and_cutoff(self):
        k = ShrKernel(4.0)
        z = 1.0 + 0.5 * 3.0
        assert k.weight(0.5) == pytest.approx(1.0 / z)
        assert k.weight(4.0) == 0.0
        assert k.weight(2.5) == pytest.approx((1.0 - 3.0 * 0.25 + 2.0 * 0.125) / z)

    def test_tuning_validation(self, gauss5):
        with pytest.raises(TuningError):
            SqKernel(gauss5, 1.5)
        with pytest.raises(TuningError):
            RockeKernel(0.0)
        with pytest.raises(TuningError):
            RockeKernel(1.5)
        with pytest.raises(TuningError):
            ShrKernel(1.0)
        with pytest.raises(TuningError):
            SqKernel(make_gen("pearson2", m=4.0), 0.8)  # inside the (0.75, 1) gap

    def test_negative_t_rejected(self, gauss5):
        with pytest.raises(ValueError):
            SqKernel(gauss5, 0.5).rho(-1.0)

    def test_kernels_are_hashable_value_objects(self, gauss5):
        assert SqKernel(gauss5, 0.5) == SqKernel(gauss5, 0.5)
        assert hash(RockeKernel(0.9)) == hash(RockeKernel(0.9))
        assert SqKernel(gauss5, 0.5) != SqKernel(gauss5, 0.9)
