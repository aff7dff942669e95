import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sabr_heatkernel.expansion import (
    ATM_STEPS,
    ExtrapolationWarning,
    Proxy,
    atm_limits,
    cev_path_derivatives,
    cev_reference,
    hklw_baseline,
    implied_vol_expansion,
    ladder_steps,
    proxy_lambda_expansion,
    sigma0_black,
    sigma1_ratio,
    sigma2_ratio,
    smile,
)
from sabr_heatkernel.geometry import SabrParams, rescale
from sabr_heatkernel.kernel import kernel_coefficients


def _hklw_atm_slope(p):
    e = 1.0 - p.beta
    fe = p.f0**e
    return (e**2 * p.alpha**2 / (24 * fe**2) + p.rho * p.beta * p.nu * p.alpha / (4 * fe)
            + (2 - 3 * p.rho**2) * p.nu**2 / 24)


class TestProxy:
    def test_constructors(self):
        assert Proxy.black() == Proxy("black", 1.0)
        assert Proxy.bachelier().beta0 == 0.0
        assert Proxy.cev(0.5).label() == "cev(0.5)"
        assert Proxy.black().label() == "black"

    @pytest.mark.parametrize("args", [("lognormal", 1.0), ("cev", 1.5), ("black", 0.5),
                                      ("bachelier", 0.3)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            Proxy(*args)


class TestCevReference:
    def test_black_quantities(self):
        ref = cev_reference(5.0, 4.0, 1.0, 0.2)
        assert ref.q0 == pytest.approx(math.log(1.25), rel=1e-14)
        assert ref.B0 == pytest.approx(math.log(1.25) ** 2 / 0.08, rel=1e-14)
        assert ref.Ctilde0 == pytest.approx(-math.log(0.2) - 0.5 * math.log(20.0))
        assert ref.Dtilde0 == pytest.approx(0.04 / 8.0)

    def test_bachelier_has_no_drift_term(self):
        ref = cev_reference(5.0, 4.0, 0.0, 0.8)
        assert ref.Dtilde0 == 0.0
        assert ref.q0 == pytest.approx(1.0)
        assert ref.Ctilde0 == pytest.approx(-math.log(0.8))

    def test_at_the_money(self):
        ref = cev_reference(4.0, 4.0, 0.5, 0.3)
        assert ref.q0 == 0.0 and ref.B0 == 0.0

    def test_rejects_beta(self):
        with pytest.raises(ValueError):
            cev_reference(5.0, 4.0, 1.1, 0.2)

    def test_black_ratios_reproduce_black(self):
        # a Black target must map to its own constant vol
        ref = cev_reference(5.0, 4.0, 1.0, 0.25)
        s0 = sigma0_black(ref.B0, 5.0, 4.0)
        r1 = sigma1_ratio(ref.B0, ref.Ctilde0, s0, 5.0, 4.0)
        r2 = sigma2_ratio(ref.B0, ref.Dtilde0, s0, r1, 5.0, 4.0)
        assert s0 == pytest.approx(0.25, rel=1e-14)
        assert r1 == pytest.approx(0.0, abs=1e-14)
        assert r2 == pytest.approx(0.0, abs=1e-13)


class TestLambdaExpansion:
    @pytest.fixture
    def kc(self, scaled):
        return kernel_coefficients(scaled, 5.0)

    def test_identity_path(self):
        B, Bp, Bpp, C, Cp, D = cev_path_derivatives(5.0, 4.0, 1.0, 0.2)
        lam = proxy_lambda_expansion(B, C, D, B, Bp, Bpp, C, Cp, D)
        assert lam.lambda1 == 0.0 and lam.lambda2 == 0.0

    def test_black_path_matches_ratios(self, kc):
        s0 = sigma0_black(kc.B, 5.0, 4.0)
        r1 = sigma1_ratio(kc.B, kc.Ctilde, s0, 5.0, 4.0)
        r2 = sigma2_ratio(kc.B, kc.Dtilde, s0, r1, 5.0, 4.0)
        star = cev_path_derivatives(5.0, 4.0, 1.0, s0)
        lam = proxy_lambda_expansion(kc.B, kc.Ctilde, kc.Dtilde, *star)
        assert lam.Bstar == pytest.approx(kc.B, rel=1e-13)
        assert lam.lambda1 == pytest.approx(s0 * r1, rel=1e-12)
        assert lam.lambda2 == pytest.approx(s0 * r2, rel=1e-10)

    def test_reversed_path_flips_first_order(self, kc):
        s0 = sigma0_black(kc.B, 5.0, 4.0)
        B, Bp, Bpp, C, Cp, D = cev_path_derivatives(5.0, 4.0, 1.0, s0)
        fwd = proxy_lambda_expansion(kc.B, kc.Ctilde, kc.Dtilde, B, Bp, Bpp, C, Cp, D)
        back = proxy_lambda_expansion(kc.B, kc.Ctilde, kc.Dtilde, B, -Bp, Bpp, C, -Cp, D)
        assert back.lambda1 == pytest.approx(-fwd.lambda1, rel=1e-14)

    def test_flat_path(self):
        with pytest.raises(ZeroDivisionError):
            proxy_lambda_expansion(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)


class TestAtm:
    def test_leading_order_closed_form(self, ref_params):
        res = implied_vol_expansion(ref_params, 4.0)
        assert res.atm
        assert res.sigma0 == pytest.approx(0.3 * 4.0 ** (-0.3), rel=1e-7)

    def test_slope_matches_hklw(self, ref_params):
        lim = atm_limits(ref_params)
        s0 = ref_params.alpha * ref_params.f0 ** (ref_params.beta - 1)
        assert lim.r1_closed == pytest.approx(_hklw_atm_slope(ref_params), rel=1e-8)
        assert lim.sigma0_closed == pytest.approx(s0, rel=1e-12)
        assert lim.r1 == pytest.approx(lim.r1_closed, abs=1e-6)

    def test_continuous_through_the_money(self, ref_params):
        f0 = ref_params.f0
        far, near, inside = (implied_vol_expansion(ref_params, f0 * math.exp(-m))
                             for m in (1.03e-4, 1.01e-4, 0.99e-4))
        assert not near.atm and inside.atm
        # step the outside values across the switch along the smile slope
        for name, tol in (("sigma0", 1e-6), ("r1", 1e-6), ("r2", 1e-4)):
            a, b = getattr(far, name), getattr(near, name)
            assert getattr(inside, name) == pytest.approx(2 * b - a, rel=tol, abs=tol)

    def test_warns_on_poor_ladder(self, ref_params):
        with pytest.warns(ExtrapolationWarning):
            atm_limits(ref_params, steps=(0.5, 0.4, 0.3))

    def test_ladder_not_stretched_for_moderate_nu(self, ref_params):
        assert ladder_steps(ref_params) == ATM_STEPS

    def test_ladder_stretched_for_tiny_nu(self):
        p = SabrParams(4.0, 0.3, 0.7, 2e-5, -0.5)
        steps = ladder_steps(p)
        assert steps[-1] > ATM_STEPS[-1]
        assert np.allclose(np.array(steps) / steps[0], np.array(ATM_STEPS) / ATM_STEPS[0])


class TestExpansion:
    def test_vol_orders(self, ref_params):
        res = implied_vol_expansion(ref_params, 5.0, T=0.5)
        assert res.vol(0.5, 0) == res.sigma0
        assert res.vol(0.5, 1) == pytest.approx(res.sigma0 * (1 + 0.5 * res.r1))
        assert res.vol(0.5) == pytest.approx(res.sigma_of_T, rel=1e-15)
        with pytest.raises(ValueError):
            res.vol(0.5, 3)

    def test_no_maturity(self, ref_params):
        res = implied_vol_expansion(ref_params, 5.0)
        assert math.isnan(res.sigma_of_T) and res.valid

    def test_rejects_strike(self, ref_params):
        with pytest.raises(ValueError):
            implied_vol_expansion(ref_params, 0.0)

    def test_validity_bound(self, ref_params):
        assert implied_vol_expansion(ref_params, 5.0, T=6.0).valid
        assert not implied_vol_expansion(ref_params, 5.0, T=7.0).valid
        assert implied_vol_expansion(ref_params, 5.0, T=7.0, validity_bound=2.0).valid

    def test_small_nu_uses_cev(self):
        p = SabrParams(4.0, 0.3, 0.7, 0.0, -0.5)
        res = implied_vol_expansion(p, 5.0, T=1.0, proxy=Proxy.cev(0.7))
        assert (res.sigma0, res.r1, res.r2) == pytest.approx((0.3, 0.0, 0.0), abs=1e-14)

    def test_cev_proxy_at_one_is_black(self, ref_params):
        a = implied_vol_expansion(ref_params, 5.0, T=1.0)
        b = implied_vol_expansion(ref_params, 5.0, T=1.0, proxy=Proxy.cev(1.0))
        assert b.sigma_of_T == pytest.approx(a.sigma_of_T, rel=1e-12)

    def test_bachelier_scale(self, ref_params):
        # normal vol is roughly the lognormal one times the forward
        res = implied_vol_expansion(ref_params, 4.5, proxy=Proxy.bachelier())
        blk = implied_vol_expansion(ref_params, 4.5)
        assert res.sigma0 == pytest.approx(blk.sigma0 * math.sqrt(4.0 * 4.5), rel=2e-3)

    def test_exponent_residual_is_second_order(self, ref_params):
        # order-2 matching leaves an O(T**2) mismatch in the log time value
        m = rescale(ref_params)
        k, f0 = 5.0, ref_params.f0
        kc = kernel_coefficients(m, k)
        s0 = sigma0_black(kc.B, k, f0)
        r1 = sigma1_ratio(kc.B, kc.Ctilde, s0, k, f0)
        r2 = sigma2_ratio(kc.B, kc.Dtilde, s0, r1, k, f0)

        def log_tv(B, C, D, t):
            return -B / t - C - math.log(B) - D * t - 1.5 * t / B

        def residual(t):
            ref = cev_reference(k, f0, 1.0, s0 * (1 + r1 * t + r2 * t * t))
            return (log_tv(ref.B0, ref.Ctilde0, ref.Dtilde0, t)
                    - log_tv(kc.B, kc.Ctilde, kc.Dtilde, t))

        ratio = residual(1e-2) / residual(1e-3)
        assert 50.0 < ratio < 200.0

    def test_smile(self, ref_params, band_strikes):
        vols, valid = smile(ref_params, band_strikes, 1.0)
        assert vols.shape == band_strikes.shape and valid.all()
        v0, _ = smile(ref_params, band_strikes, 1.0, order=0)
        assert np.all(np.abs(vols / v0 - 1) < 0.05)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(2.5, 6.5).filter(lambda k: abs(math.log(k / 4.0)) > 1e-3))
    def test_kappa_zero_is_plain_sabr(self, k):
        p = SabrParams(4.0, 0.3, 0.7, 0.4, -0.5)
        q = SabrParams(4.0, 0.3, 0.7, 0.4, -0.5, kappa=0.0, vbar=0.3)
        a, b = implied_vol_expansion(p, k, 1.0), implied_vol_expansion(q, k, 1.0)
        assert (a.sigma0, a.r1, a.r2) == (b.sigma0, b.r1, b.r2)


class TestHklw:
    def test_black_limit(self):
        p = SabrParams(4.0, 0.25, 1.0, 0.0, 0.0)
        assert hklw_baseline(p, np.array([3.0, 4.0, 5.0]), 1.0) == pytest.approx(0.25)

    def test_atm_slope(self, ref_params):
        s = hklw_baseline(ref_params, 4.0, np.array([0.0, 1.0]))
        assert (s[1] / s[0] - 1) == pytest.approx(_hklw_atm_slope(ref_params), rel=1e-12)

    def test_near_atm_smooth(self, ref_params):
        k = 4.0 * np.exp(np.array([-1e-9, 0.0, 1e-9]))
        s = hklw_baseline(ref_params, k, 1.0)
        assert np.ptp(s) < 1e-9

    def test_agrees_with_expansion_at_short_maturity(self, ref_params, band_strikes):
        h = hklw_baseline(ref_params, band_strikes, 0.0)
        e, _ = smile(ref_params, band_strikes, 0.0, order=0)
        assert np.all(np.abs(h / e - 1) < 1e-2)
