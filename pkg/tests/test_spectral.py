import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ma1lab import spectral as S
from ma1lab.spectral import Arma, Bloomfield, DomainError, ModelError, QuadratureSpec, WhiteNoise

from conftest import CORPUS, THETA_GRID

WN = WhiteNoise(1.0)
MA5 = Arma(ma=(0.5,))
AR5 = Arma(ar=(0.5,))


class TestModels:
    def test_arma_rejects_unit_root(self):
        with pytest.raises(ModelError):
            Arma(ar=(1.0,))
        with pytest.raises(ModelError):
            Arma(ma=(1.2,))

    def test_arma_rejects_common_root(self):
        with pytest.raises(ModelError):
            Arma(ar=(0.5,), ma=(-0.5,))

    def test_rejects_bad_sigma2(self):
        with pytest.raises(ModelError):
            WhiteNoise(0.0)

    def test_kappa_ar1(self):
        np.testing.assert_allclose(AR5.kappa(5), 0.5 ** np.arange(5))

    def test_kappa_bloomfield_matches_transfer(self):
        # |kappa(e^{iw})|^2 from the truncated expansion equals exp(2 sum c cos)
        m = Bloomfield((0.4, -0.2))
        k = m.kappa_until(1e-14)
        w = np.linspace(0, math.pi, 7)
        val = np.abs(np.polynomial.polynomial.polyval(np.exp(1j * w), k)) ** 2
        np.testing.assert_allclose(val, m.transfer_sq(w), rtol=1e-12)

    def test_config_round_trip(self, corpus_model):
        assert S.model_from_config(corpus_model.to_config()) == corpus_model


class TestDensity:
    def test_white_noise_at_zero(self):
        assert S.density(WN, 0.0) == pytest.approx(1 / (2 * math.pi), rel=1e-15)

    def test_ma1_at_zero(self):
        assert S.density(MA5, 0.0) == pytest.approx(2.25 / (2 * math.pi), rel=1e-14)

    def test_ar1_at_pi(self):
        assert S.density(AR5, math.pi) == pytest.approx(1 / (4.5 * math.pi), rel=1e-14)

    def test_domain(self):
        with pytest.raises(DomainError):
            S.density(WN, 3.2)

    @given(st.floats(0, math.pi))
    @settings(max_examples=40, deadline=None)
    def test_symmetry_exact(self, w):
        for m in CORPUS.values():
            assert S.density(m, w) == S.density(m, -w)


class TestAutocovariance:
    def test_white_lag1(self):
        assert abs(S.autocovariance(WN, 1)) < 1e-14

    @pytest.mark.parametrize("theta0", [0.3, 0.5, 0.8])
    def test_ma1_lag1(self, theta0):
        assert S.autocovariance(Arma(ma=(theta0,), sigma2=2.0), 1) == pytest.approx(2.0 * theta0, rel=1e-12)

    def test_ar1_lag0(self):
        assert S.autocovariance(AR5, 0) == pytest.approx(4 / 3, rel=1e-12)

    def test_ar1_high_lag(self):
        assert S.autocovariance(AR5, 7) == pytest.approx(4 / 3 * 0.5 ** 7, rel=1e-10)


class TestLoss:
    def test_white_at_zero(self):
        assert S.loss(WN, 0.0) == pytest.approx(1.0, rel=1e-14)

    def test_white_closed_form(self):
        assert S.loss(WN, 0.5) == pytest.approx(4 / 3, rel=1e-13)

    def test_correct_model(self):
        assert S.loss(MA5, 0.5) == pytest.approx(1.0, rel=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            S.loss(WN, 1.0)
        with pytest.raises(DomainError):
            S.loss(WN, -0.9999995)

    def test_bounds(self, corpus_model):
        b = S.density_bounds(corpus_model)
        L = S.loss(corpus_model, THETA_GRID)
        a = np.abs(THETA_GRID)
        assert np.all(L > 0)
        assert np.all(2 * math.pi * b.lower / (1 + a) ** 2 <= L)
        assert np.all(L <= 2 * math.pi * b.upper / (1 - a) ** 2)


class TestMeanField:
    def test_theta_zero_is_minus_gamma1(self, corpus_model):
        g1 = S.autocovariance(corpus_model, 1)
        for beta in (0.0, 0.5, 1.0):
            assert S.f_value(corpus_model, 0.0, beta) == pytest.approx(-g1, abs=1e-13)

    def test_white_noise(self):
        assert S.f_value(WN, 0.5, 0.0) == pytest.approx(2 / 3, rel=1e-13)

    @pytest.mark.parametrize("beta", [0.0, 0.3, 0.5, 1.0])
    def test_correct_model_zero(self, beta):
        assert abs(S.f_value(MA5, 0.5, beta)) < 1e-10

    def test_white_noise_beta_dependence(self):
        # independent full-range midpoint rule with complex arithmetic
        th, b = 0.6, 0.7
        w = (np.arange(200000) + 0.5) * (2 * math.pi / 200000) - math.pi
        num = np.cos(w) + b * th
        den = np.abs((1 + th * np.exp(1j * w)) * (1 + b * th * np.exp(1j * w))) ** 2
        ref = -np.sum(num / den) / 200000
        assert S.f_value(WN, th, b) == pytest.approx(ref, rel=1e-10)

    def test_array_input(self):
        vals = S.f_value(AR5, THETA_GRID, 0.5)
        assert vals.shape == THETA_GRID.shape
        assert vals[5] == S.f_value(AR5, THETA_GRID[5], 0.5)

    def test_beta_domain(self):
        with pytest.raises(DomainError):
            S.f_value(WN, 0.1, 1.5)


class TestMoments:
    def test_white_theta_zero(self):
        for beta in (0.0, 0.5, 1.0):
            assert S.phi_second_moment(WN, 0.0, beta) == pytest.approx(1.0, rel=1e-14)

    def test_white_beta0_equals_loss(self):
        assert S.phi_second_moment(WN, 0.5, 0.0) == pytest.approx(4 / 3, rel=1e-13)

    def test_halved_step_agreement(self):
        # the converged value does not move when the node count is doubled
        integ_a = S.SpectralIntegrator(MA5, QuadratureSpec(4096))
        integ_b = S.SpectralIntegrator(MA5, QuadratureSpec(8192))
        a = integ_a.integrate(S._phi2_integrand, np.array([0.5]), 1.0)[0]
        b = integ_b.integrate(S._phi2_integrand, np.array([0.5]), 1.0)[0]
        assert abs(a - b) < 1e-10 * abs(a)
        lo, hi = S.phi_moment_bracket(MA5, 0.5)
        assert lo <= a <= hi

    def test_bracket(self, corpus_model):
        b = S.density_bounds(corpus_model)
        a = np.abs(THETA_GRID)
        for beta in (0.0, 0.5, 1.0):
            P = S.phi_second_moment(corpus_model, THETA_GRID, beta)
            assert np.all(2 * math.pi * b.lower / (1 + a) ** 4 <= P)
            assert np.all(P <= 2 * math.pi * b.upper / (1 - a) ** 4)

    def test_cross_moment_at_zero(self, corpus_model):
        g1 = S.autocovariance(corpus_model, 1)
        assert S.z_phi_cross_moment(corpus_model, 0.0, 0.5) == pytest.approx(g1, abs=1e-13)

    def test_cross_moment_white(self):
        assert abs(S.z_phi_cross_moment(WN, 0.5, 0.0)) < 1e-14

    def test_identity(self, corpus_model):
        th = np.linspace(-0.99, 0.99, 45)
        for beta in (0.0, 0.25, 0.5, 0.75, 1.0):
            P = S.phi_second_moment(corpus_model, th, beta)
            Z = S.z_phi_cross_moment(corpus_model, th, beta)
            F = S.f_value(corpus_model, th, beta)
            assert np.max(np.abs(Z - (th * P - F)) / np.maximum(1.0, np.abs(P))) < 1e-12

    def test_moments_batch(self):
        th = np.array([0.1, 0.2, 0.1 + 1e-14, 0.2])
        P, Z = S.moments(AR5, th, 0.5)
        assert P[0] == P[2] and P[1] == P[3]
        assert P[1] == pytest.approx(S.phi_second_moment(AR5, 0.2, 0.5), rel=1e-14)


def central_difference(fun, x, h=1e-5):
    """Fourth-order central difference; the h^2 term of the 3-point rule
    would dominate near stationary points."""
    return (8 * (fun(x + h) - fun(x - h)) - (fun(x + 2 * h) - fun(x - 2 * h))) / (12 * h)


class TestLossDerivative:
    def test_white_at_zero(self):
        assert abs(S.loss_derivative(WN, 0.0)) < 1e-15

    def test_correct_model(self):
        assert abs(S.loss_derivative(MA5, 0.5)) < 2e-10

    def test_finite_difference(self, corpus_model):
        fd = central_difference(lambda t: S.loss(corpus_model, t), THETA_GRID)
        d = S.loss_derivative(corpus_model, THETA_GRID)
        scale = np.maximum(np.abs(d), 1e-3 * S.loss(corpus_model, THETA_GRID))
        assert np.max(np.abs(fd - d) / scale) < 1e-6


class TestQuadrature:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(initial_nodes=8)
        with pytest.raises(ValueError):
            QuadratureSpec(rel_tol=0)
        with pytest.raises(ValueError):
            QuadratureSpec(initial_nodes=101)

    def test_refuses_when_budget_exhausted(self):
        integ = S.SpectralIntegrator(WN, QuadratureSpec(16, 1e-14, 1))
        with pytest.raises(S.QuadratureError):
            integ.integrate(S._loss_integrand, np.array([0.999]), 0.0)

    def test_near_boundary_converges(self):
        # poles at distance ~1e-5 from the real axis need a few million nodes; a
        # private integrator keeps the large node levels out of the shared cache
        th = 1 - 1e-5
        integ = S.SpectralIntegrator(WN, QuadratureSpec(4096, 1e-10, 12))
        v = integ.integrate(S._loss_integrand, np.array([th, -th]), 0.0)
        np.testing.assert_allclose(v, 1 / (1 - th * th), rtol=1e-9)
        del integ

    def test_near_boundary_default_budget_refuses(self):
        with pytest.raises(S.QuadratureError):
            S.loss(WN, 1 - 1e-6)

    def test_divergence_signs(self, corpus_model):
        for beta in (0.0, 0.5, 1.0):
            assert S.f_value(corpus_model, -0.999, beta) < -10
            assert S.f_value(corpus_model, 0.999, beta) > 10

    def test_fixed_level_matches_adaptive(self):
        fl = S.FixedLevelFunctional(AR5, "f", 0.5, QuadratureSpec(256), 0.96)
        th = np.linspace(-0.96, 0.96, 17)
        np.testing.assert_allclose(fl(th), S.f_value(AR5, th, 0.5), rtol=1e-10, atol=1e-12)
