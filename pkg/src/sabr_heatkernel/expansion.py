"""Implied volatilities from the heat-kernel coefficients.

The time value of an option at short maturity behaves as

    T**(3/2) exp(-B/T - C~ - ln B - D~ T - 3T/(2B)) / (2 sqrt(2 pi)),

and matching this against the same expansion for a proxy model with vol
``sigma(T) = sigma0 (1 + r1 T + r2 T**2)`` gives ``sigma0``, ``r1`` and
``r2``. Proxies are Black (lognormal), CEV with exponent ``beta0`` and
Bachelier (``beta0 = 0``).

Ratios ``r1`` and ``r2`` are returned per unit (physical) time and time
squared.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import SMALL_NU, SabrParams, min_distance, q_transform, rescale
from .kernel import kernel_coefficients

#: Below this absolute log-moneyness the strike is treated as at the money.
ATM_THRESHOLD = 1e-4
#: Moneyness ladder used to extrapolate to the money.
ATM_STEPS = (1e-2, 5e-3, 2.5e-3)
#: Shortest geodesic (rescaled units) on which ``r2`` is resolved directly.
#: The order-two ratio is a difference of terms of size ``alpha**4 / q**2``
#: whose closed forms lose relative precision like ``eps / d``.
MIN_LADDER_DISTANCE = 1e-6


class ExtrapolationWarning(UserWarning):
    """The ATM extrapolation ladder did not settle."""


@dataclass(frozen=True)
class Proxy:
    """Reference model against which implied vols are quoted."""

    name: str = "black"
    beta0: float = 1.0

    def __post_init__(self):
        if self.name not in ("black", "cev", "bachelier"):
            raise ValueError(f"unknown proxy {self.name!r}")
        if not 0.0 <= self.beta0 <= 1.0:
            raise ValueError(f"beta0 must lie in [0, 1], got {self.beta0}")
        if self.name == "black" and self.beta0 != 1.0:
            raise ValueError("the Black proxy has beta0 = 1")
        if self.name == "bachelier" and self.beta0 != 0.0:
            raise ValueError("the Bachelier proxy has beta0 = 0")

    @classmethod
    def black(cls) -> "Proxy":
        return cls("black", 1.0)

    @classmethod
    def cev(cls, beta0: float) -> "Proxy":
        return cls("cev", float(beta0))

    @classmethod
    def bachelier(cls) -> "Proxy":
        return cls("bachelier", 0.0)

    def label(self) -> str:
        if self.name == "cev":
            return f"cev({self.beta0:g})"
        return self.name


@dataclass(frozen=True)
class ExpansionResult:
    """Implied vol expansion ``sigma0 (1 + r1 T + r2 T**2)`` at one strike.

    ``sigma_of_T`` holds the order-2 vol at the requested maturity (``nan``
    when no maturity was given). ``valid`` is false when ``nu**2 T`` exceeds
    the validity bound or the assembled vol is not positive.
    """

    strike: float
    sigma0: float
    r1: float
    r2: float
    maturity: float
    sigma_of_T: float
    proxy: Proxy
    valid: bool
    atm: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False)

    def vol(self, T, order=2):
        """Vol at maturity ``T`` truncated after ``order`` (0, 1 or 2)."""
        if order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {order}")
        T = np.asarray(T, dtype=float)
        poly = 1.0 + (order >= 1) * self.r1 * T + (order == 2) * self.r2 * T**2
        return self.sigma0 * poly


@dataclass(frozen=True)
class CevReference:
    """Heat-kernel quantities of the CEV model ``dF = sigma F**beta0 dW``."""

    beta0: float
    q0: float
    B0: float
    Ctilde0: float
    Dtilde0: float


@dataclass(frozen=True)
class ProxyExpansion:
    """Taylor coefficients of a proxy parameter path ``lambda(T)``.

    The proxy quantities and their derivatives are taken at ``lambda = 0``.
    """

    lambda1: float
    lambda2: float
    Bstar: float
    Bstar_p: float
    Bstar_pp: float
    Ctilde_star: float
    Ctilde_star_p: float
    Dtilde_star: float


@dataclass(frozen=True)
class AtmLimits:
    """ATM order 0/1/2 from moneyness extrapolation, with closed-form checks."""

    sigma0: float
    r1: float
    r2: float
    sigma0_closed: float
    r1_closed: float
    spread: tuple


# ---------------------------------------------------------------------------
# proxy formulas


def _cev_q(k, f0, beta0):
    return float(q_transform(f0, k, beta0))


def cev_reference(K, F0, beta0, sigma) -> CevReference:
    """``B``, ``C~`` and ``D~`` of the CEV model at strike ``K``.

    ``beta0 = 1`` gives the Black quantities and ``beta0 = 0`` the
    Bachelier ones.
    """
    if not 0.0 <= beta0 <= 1.0:
        raise ValueError(f"beta0 must lie in [0, 1], got {beta0}")
    q0 = _cev_q(K, F0, beta0)
    B0 = q0**2 / (2.0 * sigma**2)
    C0 = -math.log(sigma) - 0.5 * beta0 * math.log(K * F0)
    D0 = beta0 * (2.0 - beta0) * sigma**2 / (8.0 * (K * F0) ** (1.0 - beta0))
    return CevReference(beta0, q0, B0, C0, D0)


def sigma0_black(B, K, F0):
    """Order-0 Black vol ``|ln(K/F0)| / sqrt(2B)``."""
    return abs(math.log(K / F0)) / math.sqrt(2.0 * B)


def sigma0_cev(B, K, F0, beta0):
    """Order-0 CEV vol ``|q0| / sqrt(2B)``."""
    return abs(_cev_q(K, F0, beta0)) / math.sqrt(2.0 * B)


def _d_proxy(sigma0, K, F0, beta0):
    return beta0 * (2.0 - beta0) * sigma0**2 / (8.0 * (K * F0) ** (1.0 - beta0))


def sigma1_ratio(B, Ctilde, sigma0, K, F0, beta0=1.0):
    """``sigma1 / sigma0`` from the constant term of the expansion."""
    return -(Ctilde + math.log(sigma0) + 0.5 * beta0 * math.log(K * F0)) / (2.0 * B)


def sigma2_ratio(B, Dtilde, sigma0, r1, K, F0, beta0=1.0):
    """``sigma2 / sigma0`` from the order-``T`` term of the expansion."""
    d0 = _d_proxy(sigma0, K, F0, beta0)
    return 1.5 * r1**2 - (Dtilde + 3.0 * r1 - d0) / (2.0 * B)


def cev_path_derivatives(K, F0, beta0, sigma):
    """Proxy quantities along the path ``sigma + lambda`` at ``lambda = 0``.

    Returns ``(B*, B*', B*'', C~*, C~*', D~*)``.
    """
    ref = cev_reference(K, F0, beta0, sigma)
    B = ref.B0
    return (B, -2.0 * B / sigma, 6.0 * B / sigma**2,
            ref.Ctilde0, -1.0 / sigma, ref.Dtilde0)


def proxy_lambda_expansion(B, Ctilde, Dtilde, Bs, Bsp, Bspp, Cs, Csp, Ds):
    """First two Taylor coefficients of the proxy parameter path.

    ``(B, Ctilde, Dtilde)`` are the target quantities; the starred ones
    describe the proxy along its path at ``lambda = 0``, where ``Bs`` should
    equal ``B``.
    """
    if Bsp == 0.0:
        raise ZeroDivisionError("B*' vanishes: the path does not move B*")
    lam1 = (Ctilde - Cs + math.log(B) - math.log(Bs)) / Bsp
    lam2 = (Dtilde - Ds - lam1 * Bsp / Bs - lam1 * Csp - 0.5 * lam1**2 * Bspp) / Bsp
    return ProxyExpansion(lam1, lam2, Bs, Bsp, Bspp, Cs, Csp, Ds)


def _ratios(B, Ctilde, Dtilde, K, F0, beta0):
    s0 = sigma0_cev(B, K, F0, beta0)
    r1 = sigma1_ratio(B, Ctilde, s0, K, F0, beta0)
    r2 = sigma2_ratio(B, Dtilde, s0, r1, K, F0, beta0)
    return s0, r1, r2


# ---------------------------------------------------------------------------
# SABR


def _cev_target(params: SabrParams, K):
    """Target quantities of the pure CEV model (the ``nu -> 0`` limit)."""
    ref = cev_reference(K, params.f0, params.beta, params.alpha)
    return ref.B0, ref.Ctilde0, ref.Dtilde0


def _off_atm(params: SabrParams, K, beta0, quad_order):
    """``(sigma0, r1, r2)`` in physical units away from the money."""
    if params.nu < SMALL_NU:
        B, C, D = _cev_target(params, K)
        return _ratios(B, C, D, K, params.f0, beta0), {}
    m = rescale(params)
    kc = kernel_coefficients(m, K, quad_order=quad_order)
    s0, r1, r2 = _ratios(kc.B, kc.Ctilde, kc.Dtilde, K, params.f0, beta0)
    r1, r2 = m.restore_ratios(r1, r2)
    diag = dict(B=kc.B, Ctilde=kc.Ctilde, Dtilde=kc.Dtilde, **kc.parts)
    return (m.restore_vol(s0), r1, r2), diag


def _atm_closed(params: SabrParams, beta0, quad_order):
    """Closed-form ATM ``sigma0`` and ``r1``."""
    f0 = params.f0
    if params.nu < SMALL_NU:
        s0 = params.alpha * f0 ** (params.beta - beta0)
        dt = params.beta * (2.0 - params.beta) * params.alpha**2 / (8.0 * f0 ** (2 * (1 - params.beta)))
        d0 = _d_proxy(s0, f0, f0, beta0)
        return s0, (d0 - dt) / 3.0
    m = rescale(params)
    kc = kernel_coefficients(m, f0, quad_order=quad_order)
    s0 = math.exp(-kc.Ctilde) / f0**beta0
    r1 = (_d_proxy(s0, f0, f0, beta0) - kc.Dtilde) / 3.0
    r1, _ = m.restore_ratios(r1, 0.0)
    return m.restore_vol(s0), r1


def ladder_steps(params: SabrParams):
    """``ATM_STEPS``, stretched when the innermost geodesic is too short.

    Only small vol-of-vol (``alpha / nu`` large) stretches the ladder; the
    distance grows linearly with moneyness near the money.
    """
    if params.nu < SMALL_NU:
        return ATM_STEPS
    m = rescale(params)
    inner = ATM_STEPS[-1]
    d = min(float(min_distance(m.alpha, _cev_q(params.f0 * math.exp(sg * inner),
                                                params.f0, params.beta), m.rho))
            for sg in (-1.0, 1.0))
    if d >= MIN_LADDER_DISTANCE:
        return ATM_STEPS
    stretch = MIN_LADDER_DISTANCE / d
    return tuple(h * stretch for h in ATM_STEPS)


def atm_limits(params: SabrParams, proxy: Proxy = Proxy.black(),
               moneyness=0.0, steps=None, quad_order=16, tol=1e-6):
    """Order 0/1/2 at (or within ``ATM_THRESHOLD`` of) the money.

    The off-ATM formulas are evaluated on the moneyness ladder ``steps`` on
    the side of ``moneyness`` and extrapolated quadratically to it.
    ``sigma0`` and ``r1`` are also returned from their closed forms at the
    money; exactly at the money a warning is issued if the two routes differ
    by more than ``tol``.
    """
    if steps is None:
        steps = ladder_steps(params)
    sign = -1.0 if moneyness < 0 else 1.0
    ms = np.array([sign * h for h in steps])
    vals = np.array([
        _off_atm(params, params.f0 * math.exp(mm), proxy.beta0, quad_order)[0]
        for mm in ms
    ])
    # quadratic through the three points, evaluated at the target moneyness
    est = np.array([np.polyval(np.polyfit(ms, vals[:, j], len(ms) - 1), moneyness)
                    for j in range(3)])
    linear = np.array([np.polyval(np.polyfit(ms[1:], vals[1:, j], 1), moneyness)
                       for j in range(3)])
    s0c, r1c = _atm_closed(params, proxy.beta0, quad_order)
    spread = tuple(float(v) for v in np.abs(est - linear))
    if abs(est[0] - s0c) > tol * max(1.0, abs(s0c)) and moneyness == 0.0:
        warnings.warn(f"ATM sigma0 extrapolation off closed form by {est[0] - s0c:.3g}",
                      ExtrapolationWarning, stacklevel=2)
    if abs(est[1] - r1c) > tol and moneyness == 0.0:
        warnings.warn(f"ATM r1 extrapolation off closed form by {est[1] - r1c:.3g}",
                      ExtrapolationWarning, stacklevel=2)
    return AtmLimits(float(est[0]), float(est[1]), float(est[2]), s0c, r1c, spread)


def implied_vol_expansion(params: SabrParams, K, T=None, proxy: Proxy = Proxy.black(),
                          validity_bound=1.0, quad_order=16) -> ExpansionResult:
    """Order-2 implied vol expansion of SABR at strike ``K``.

    Strikes within ``ATM_THRESHOLD`` in log-moneyness are handled by
    :func:`atm_limits`.
    """
    if not K > 0:
        raise ValueError(f"strike must be positive, got {K}")
    mny = math.log(K / params.f0)
    atm = abs(mny) < ATM_THRESHOLD
    if atm:
        lim = atm_limits(params, proxy, mny, quad_order=quad_order)
        s0, r1, r2, diag = lim.sigma0, lim.r1, lim.r2, {"spread": lim.spread}
    else:
        (s0, r1, r2), diag = _off_atm(params, K, proxy.beta0, quad_order)
        if abs(mny) < ladder_steps(params)[-1]:
            # r2 cancels O(1) terms against B**2 here; take it from the
            # ladder polynomial, which passes through the direct value at
            # the innermost step
            r2 = atm_limits(params, proxy, mny, quad_order=quad_order).r2
    if T is None:
        T, sig, valid = math.nan, math.nan, bool(s0 > 0)
    else:
        sig = s0 * (1.0 + r1 * T + r2 * T**2)
        valid = bool(params.nu**2 * T <= validity_bound and sig > 0 and math.isfinite(sig))
    return ExpansionResult(float(K), float(s0), float(r1), float(r2), float(T),
                           float(sig), proxy, valid, atm, diag)


def smile(params: SabrParams, strikes, T, order=2, proxy: Proxy = Proxy.black(),
          validity_bound=1.0):
    """Vols and validity flags over a strike grid at maturity ``T``."""
    res = [implied_vol_expansion(params, k, T, proxy, validity_bound) for k in strikes]
    vols = np.array([r.vol(T, order) for r in res])
    valid = np.array([params.nu**2 * T <= validity_bound and v > 0 for v in vols])
    return vols, valid


# ---------------------------------------------------------------------------
# baseline


def _z_over_x(z, rho):
    z = np.asarray(z, dtype=float)
    root = np.sqrt(1.0 - 2.0 * rho * z + z * z)
    xz = np.log1p(((z * z - 2.0 * rho * z) / (root + 1.0) + z) / (1.0 - rho))
    small = np.abs(z) < 1e-8
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(small, 1.0 - 0.5 * rho * z, z / np.where(small, 1.0, xz))
    return ratio


def hklw_baseline(params: SabrParams, K, T):
    """Classic lognormal SABR implied vol formula (the HKLW baseline).

    Mean reversion, if any, is ignored.
    """
    f, a, b, nu, rho = params.f0, params.alpha, params.beta, params.nu, params.rho
    K = np.asarray(K, dtype=float)
    e = 1.0 - b
    lfk = np.log(f / K)
    fk = (f * K) ** (e / 2.0)
    denom = fk * (1.0 + e**2 / 24.0 * lfk**2 + e**4 / 1920.0 * lfk**4)
    z = nu / a * fk * lfk
    corr = 1.0 + (e**2 * a**2 / (24.0 * fk**2) + rho * b * nu * a / (4.0 * fk)
                  + (2.0 - 3.0 * rho**2) * nu**2 / 24.0) * T
    out = a / denom * _z_over_x(z, rho) * corr
    return out[()] if np.ndim(out) == 0 else out
