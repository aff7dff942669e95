"""European option prices on a forward: Black, Bachelier and CEV.

Prices are forward (undiscounted) values multiplied by a flat discount
factor. Also holds the time-value integral of a density of the form
``exp(-B/t - C~ - D~ t) / sqrt(2 pi t)``, which is exact for Black.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)
#: CEV exponents this close to one are priced with Black.
CEV_BLACK_BAND = 1e-6


@dataclass(frozen=True)
class OptionSpec:
    """European option on a forward.

    Parameters
    ----------
    strike : float
        Must be positive for Black and CEV; any real for Bachelier.
    maturity : float
        Time to expiry in years.
    call : bool
        ``False`` for a put.
    df : float
        Discount factor in ``(0, 1]``.
    """

    strike: float
    maturity: float
    call: bool = True
    df: float = 1.0

    def __post_init__(self):
        if not self.maturity > 0:
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if not 0.0 < self.df <= 1.0:
            raise ValueError(f"discount factor must lie in (0, 1], got {self.df}")

    def intrinsic(self, f0):
        """Discounted intrinsic value."""
        w = 1.0 if self.call else -1.0
        return self.df * max(w * (f0 - self.strike), 0.0)

    def otm_is_call(self, f0) -> bool:
        return self.strike >= f0


def _from_otm(otm, f0, spec: OptionSpec, otm_call: bool):
    """Forward price of the requested payoff from the out-of-the-money one."""
    if spec.call == otm_call:
        return otm
    fwd = f0 - spec.strike
    return otm + fwd if spec.call else otm - fwd


def _to_otm(price_fwd, f0, spec: OptionSpec):
    otm_call = spec.otm_is_call(f0)
    if spec.call == otm_call:
        return price_fwd, otm_call
    fwd = f0 - spec.strike
    return (price_fwd - fwd if spec.call else price_fwd + fwd), otm_call


# ---------------------------------------------------------------------------
# Black


def _black_otm(f0, k, total_sd, call):
    if total_sd == 0.0:
        return 0.0
    d1 = math.log(f0 / k) / total_sd + 0.5 * total_sd
    d2 = d1 - total_sd
    # F exp(-d1**2/2) == K exp(-d2**2/2) turns the difference of normal
    # tails into one of erfcx values, free of cancellation far from the money
    r2 = 1.0 / math.sqrt(2.0)
    if call:
        diff = special.erfcx(-d1 * r2) - special.erfcx(-d2 * r2)
    else:
        diff = special.erfcx(d2 * r2) - special.erfcx(d1 * r2)
    return 0.5 * k * math.exp(-0.5 * d2 * d2) * diff


def black_time_value(f0, k, T, sigma):
    """Undiscounted Black time value, computed as the out-of-the-money price."""
    if k <= 0:
        raise ValueError("Black needs a positive strike")
    return float(_black_otm(f0, k, sigma * math.sqrt(T), k >= f0))


def black_price(f0, spec: OptionSpec, sigma):
    """Discounted Black price."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if spec.strike <= 0:
        if spec.strike == 0 or spec.call:
            return spec.df * max(f0 - spec.strike, 0.0) if spec.call else 0.0
        raise ValueError("Black needs a positive strike")
    otm_call = spec.otm_is_call(f0)
    otm = _black_otm(f0, spec.strike, sigma * math.sqrt(spec.maturity), otm_call)
    return spec.df * _from_otm(float(otm), f0, spec, otm_call)


def black_vega(f0, spec: OptionSpec, sigma):
    """Derivative of the discounted Black price in ``sigma``."""
    sd = sigma * math.sqrt(spec.maturity)
    if sd == 0.0:
        return 0.0
    d1 = math.log(f0 / spec.strike) / sd + 0.5 * sd
    return spec.df * f0 * math.exp(-0.5 * d1 * d1) / SQRT_2PI * math.sqrt(spec.maturity)


def _check_band(price, f0, spec, upper):
    intrinsic = spec.intrinsic(f0)
    tol = 1e-14 * spec.df * max(abs(f0), abs(spec.strike), 1.0)
    if price < intrinsic - tol or (upper is not None and price > upper + tol):
        raise ValueError(
            f"price {price} outside the no-arbitrage band [{intrinsic}, {upper}]"
        )


def _newton_bisect(fn, vega, target, lo, hi, abs_tol, max_iter=200):
    """Safeguarded Newton on an increasing function, bracket ``[lo, hi]``."""
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        diff = fn(x) - target
        if abs(diff) <= abs_tol:
            return x
        if diff > 0:
            hi = x
        else:
            lo = x
        v = vega(x)
        step_ok = False
        if v > 0:
            xn = x - diff / v
            step_ok = lo < xn < hi
        x = xn if step_ok else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return x
    return x


def _expand_bracket(fn, target, hi):
    while fn(hi) < target:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("price too close to its upper bound to invert")
    return hi


def black_implied(price, f0, spec: OptionSpec):
    """Black vol reproducing ``price`` to ``1e-12 df F0``."""
    _check_band(price, f0, spec, spec.df * (f0 if spec.call else spec.strike))
    otm, otm_call = _to_otm(price / spec.df, f0, spec)
    if otm <= 0.0:
        return 0.0
    k, T = spec.strike, spec.maturity
    sq = math.sqrt(T)

    def fn(s):
        return _black_otm(f0, k, s * sq, otm_call)

    def vega(s):
        return black_vega(f0, OptionSpec(k, T), s)

    hi = _expand_bracket(fn, otm, 1.0)
    return _newton_bisect(fn, vega, otm, 0.0, hi, 1e-12 * f0)


# ---------------------------------------------------------------------------
# Bachelier


def _bachelier_otm(f0, k, sd, call):
    if sd == 0.0:
        return 0.0
    w = 1.0 if call else -1.0
    d = w * (f0 - k) / sd
    return sd * (d * special.ndtr(d) + math.exp(-0.5 * d * d) / SQRT_2PI)


def bachelier_price(f0, spec: OptionSpec, sigma):
    """Discounted normal-model price; ``sigma`` is an absolute vol."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    otm_call = spec.otm_is_call(f0)
    otm = _bachelier_otm(f0, spec.strike, sigma * math.sqrt(spec.maturity), otm_call)
    return spec.df * _from_otm(float(otm), f0, spec, otm_call)


def bachelier_implied(price, f0, spec: OptionSpec):
    """Normal vol reproducing ``price``."""
    _check_band(price, f0, spec, None)
    otm, otm_call = _to_otm(price / spec.df, f0, spec)
    if otm <= 0.0:
        return 0.0
    k, T = spec.strike, spec.maturity
    sq = math.sqrt(T)

    def fn(s):
        return _bachelier_otm(f0, k, s * sq, otm_call)

    def vega(s):
        if s == 0.0:
            return sq / SQRT_2PI if k == f0 else 0.0
        d = (f0 - k) / (s * sq)
        return sq * math.exp(-0.5 * d * d) / SQRT_2PI

    hi = _expand_bracket(fn, otm, max(abs(f0), abs(k), 1.0))
    return _newton_bisect(fn, vega, otm, 0.0, hi, 1e-12 * max(abs(f0), 1.0))


# ---------------------------------------------------------------------------
# CEV with absorption at zero


# Debye polynomials u_k(p) of the uniform large-order expansion of I_nu
_DEBYE = (
    (1.0,),
    (0.0, 3 / 24, 0.0, -5 / 24),
    (0.0, 0.0, 81 / 1152, 0.0, -462 / 1152, 0.0, 385 / 1152),
    (0.0, 0.0, 0.0, 30375 / 414720, 0.0, -369603 / 414720, 0.0, 765765 / 414720,
     0.0, -425425 / 414720),
    (0.0, 0.0, 0.0, 0.0, 4465125 / 39813120, 0.0, -94121676 / 39813120, 0.0,
     349922430 / 39813120, 0.0, -446185740 / 39813120, 0.0, 185910725 / 39813120),
)
#: Above this noncentrality the chi-square tails come from quadrature.
NCX2_QUAD_LAMBDA = 1e7


def _log_ive(nu, z):
    """``ln(I_nu(z) exp(-z))`` for ``nu >= 0``, ``z > 0``, including huge ``z``."""
    if nu >= 1000.0:
        w = z / nu
        r = math.sqrt(1.0 + w * w)
        p = 1.0 / r
        ser = sum(np.polynomial.polynomial.polyval(p, c) / nu**k
                  for k, c in enumerate(_DEBYE))
        # nu (sqrt(1 + w**2) - w + ln(w / (1 + sqrt(1 + w**2))))
        expo = nu * (1.0 / (r + w) - math.asinh(1.0 / w))
        return expo - 0.5 * math.log(2.0 * math.pi * nu * r) + math.log(ser)
    if z > 1e8:
        # Hankel expansion; nu**2 / z < 1e-2 so terms fall off fast
        mu = 4.0 * nu * nu
        term = tot = 1.0
        for k in range(1, 40):
            term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
            tot += term
            if abs(term) < 1e-17:
                break
        return -0.5 * math.log(2.0 * math.pi * z) + math.log(tot)
    return math.log(special.ive(nu, z))


def _ncx2_tail_quad(x, k, lam, upper):
    """Noncentral chi-square tail by quadrature of its Bessel density.

    Integrates in ``s = sqrt(t)``, where the density is a narrow bump of
    unit width around ``sqrt(lam + k)``.
    """
    nu = 0.5 * k - 1.0
    sl = math.sqrt(lam)

    def dens(s):
        if s <= 0.0:
            return 0.0
        lg = -0.5 * (s - sl) ** 2 + 0.5 * nu * 2.0 * math.log(s / sl) + _log_ive(abs(nu), s * sl)
        return s * math.exp(lg)

    c = math.sqrt(lam + k)
    reach = 40.0
    sx = math.sqrt(x)
    a, b = (sx, max(c, sx) + reach) if upper else (max(0.0, c - reach), sx)
    if b <= a:
        return 0.0
    pts = [p for p in (c - 8.0, c, c + 8.0) if a < p < b]
    val, _ = integrate.quad(dens, a, b, points=pts or None, epsabs=0.0,
                            epsrel=1e-13, limit=400)
    return val


def _ncx2_tail(x, k, lam, upper):
    if lam < NCX2_QUAD_LAMBDA:
        dist = stats.ncx2(k, lam)
        return float(dist.sf(x) if upper else dist.cdf(x))
    return _ncx2_tail_quad(x, k, lam, upper)


def _cev_otm(f0, k, T, sigma, beta0, call):
    if sigma == 0.0:
        return 0.0
    e = 1.0 - beta0
    scale = (e * sigma) ** 2 * T
    x = f0 ** (2 * e) / scale
    y = k ** (2 * e) / scale
    delta = 1.0 / e
    if call:
        return f0 * _ncx2_tail(y, delta + 2.0, x, True) - k * _ncx2_tail(x, delta, y, False)
    return k * _ncx2_tail(x, delta, y, True) - f0 * _ncx2_tail(y, delta + 2.0, x, False)


def _cev_route(beta0):
    if not 0.0 <= beta0 <= 1.0:
        raise ValueError(f"beta0 must lie in [0, 1], got {beta0}")
    if beta0 == 1.0:
        return "black"
    if beta0 > 1.0 - CEV_BLACK_BAND:
        warnings.warn(f"beta0={beta0} within {CEV_BLACK_BAND} of one; using Black",
                      RuntimeWarning, stacklevel=3)
        return "black"
    if beta0 == 0.0:
        return "bachelier"
    return "cev"


def cev_price(f0, spec: OptionSpec, sigma, beta0):
    """Discounted price under ``dF = sigma F**beta0 dW`` absorbed at zero.

    ``beta0 = 1`` (or within ``CEV_BLACK_BAND`` of it) is priced with Black
    and ``beta0 = 0`` with Bachelier.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    route = _cev_route(beta0)
    if route == "black":
        return black_price(f0, spec, sigma)
    if route == "bachelier":
        return bachelier_price(f0, spec, sigma)
    if spec.strike <= 0:
        raise ValueError("CEV needs a positive strike")
    otm_call = spec.otm_is_call(f0)
    otm = _cev_otm(f0, spec.strike, spec.maturity, sigma, beta0, otm_call)
    return spec.df * _from_otm(float(max(otm, 0.0)), f0, spec, otm_call)


def cev_implied(price, f0, spec: OptionSpec, beta0):
    """CEV vol reproducing ``price`` (Brent on the out-of-the-money price)."""
    route = _cev_route(beta0)
    if route == "black":
        return black_implied(price, f0, spec)
    if route == "bachelier":
        return bachelier_implied(price, f0, spec)
    _check_band(price, f0, spec, spec.df * (f0 if spec.call else spec.strike))
    otm, otm_call = _to_otm(price / spec.df, f0, spec)
    if otm <= 0.0:
        return 0.0
    k, T = spec.strike, spec.maturity

    def fn(s):
        return _cev_otm(f0, k, T, s, beta0, otm_call) - otm

    # a Black-equivalent guess in local-vol units sets the bracket scale
    hi = f0 ** (1.0 - beta0)
    while fn(hi) < 0:
        hi *= 2.0
        if hi > 1e6 * f0 ** (1.0 - beta0):
            raise ValueError("price too close to its upper bound to invert")
    return optimize.brentq(fn, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                           maxiter=200)


# ---------------------------------------------------------------------------
# time value of a heat-kernel density


def _erfcx_derivatives(u, n):
    """``erfcx`` and its first ``n`` derivatives at real ``u``."""
    out = [special.erfcx(u)]
    out.append(2.0 * u * out[0] - 2.0 / SQRT_PI)
    for k in range(1, n):
        out.append(2.0 * u * out[k] + 2.0 * k * out[k - 1])
    return out


def _kernel_integral(a, d, T):
    """``int_0^T t**(-1/2) exp(-a**2/t - d t) dt`` for ``a >= 0``, real ``d``."""
    sq = math.sqrt(T)
    u0 = a / sq
    b2T = d * T
    base = math.exp(-u0 * u0 - b2T)
    if b2T == 0.0:
        # also catches d * T underflowing, where exp(-d t) is exactly one
        return 2.0 * sq * math.exp(-u0 * u0) * (1.0 - SQRT_PI * u0 * special.erfcx(u0))
    bsT = math.sqrt(abs(b2T))
    # series in d around zero: its recurrence loses about u0**2 per term,
    # the closed form about u0 / (b sqrt(T)) overall
    nterms = max(1, math.ceil(16.0 / max(-math.log10(abs(b2T)), 1e-3)))
    series_loss = 2.0 * nterms * math.log(max(u0, 1.0))
    direct_loss = math.log(max(u0, 1.0) / bsT)
    if abs(b2T) < 1e-2 and series_loss < direct_loss:
        ders = _erfcx_derivatives(u0, 2 * nterms + 2)
        tot, term_pow, fact = 0.0, 1.0, 1.0
        for j in range(nterms + 1):
            k = 2 * j + 1
            fact *= k * (k - 1) if k > 1 else 1.0
            tot += (-1.0) ** k * ders[k] * term_pow / fact
            term_pow *= b2T
        return SQRT_PI * base * sq * tot
    if d > 0:
        b = math.sqrt(d)
        u1, u2 = u0 - bsT, u0 + bsT
        if u1 >= 0:
            diff = base * (special.erfcx(u1) - special.erfcx(u2))
        else:
            diff = math.exp(-2.0 * a * b) * special.erfc(u1) - base * special.erfcx(u2)
        return SQRT_PI / (2.0 * b) * diff
    bi = math.sqrt(-d)
    w = special.erfcx(complex(u0, bsT))
    return -SQRT_PI / bi * base * w.imag


def time_value_erfc(B, Ctilde, Dtilde, T, first_order=False):
    """Time value ``(1/2) int_0^T E[sigma_F**2 delta(F_t - K)] dt``.

    The density is taken as ``exp(-B/t - C~ - D~ t) / sqrt(2 pi t)`` and
    integrated exactly in terms of ``erfc``. With ``first_order`` the factor
    ``exp(-D~ t)`` is replaced by ``1 - D~ t``, which gives the classical
    bracket of ``erfc`` terms; that form is exact only when ``D~ = 0``.
    """
    if not B >= 0 or not T > 0:
        raise ValueError("need B >= 0 and T > 0")
    pref = math.exp(-Ctilde) / (2.0 * SQRT_2PI)
    if first_order:
        sB = math.sqrt(B)
        g = math.sqrt(T / math.pi) * math.exp(-B / T)
        ec = special.erfc(sB / math.sqrt(T))
        bracket = g - sB * ec - Dtilde / 3.0 * (g * (T - 2.0 * B) + 2.0 * B * sB * ec)
        return math.exp(-Ctilde) / math.sqrt(2.0) * bracket
    return pref * _kernel_integral(math.sqrt(B), Dtilde, T)


def time_value_asymptotic(B, Ctilde, Dtilde, T):
    """Leading small-``T`` form of :func:`time_value_erfc` for ``B > 0``."""
    if not B > 0:
        raise ValueError("the asymptotic form needs B > 0")
    expo = -B / T - Ctilde - math.log(B) - Dtilde * T - 1.5 * T / B
    return T**1.5 / (2.0 * SQRT_2PI) * math.exp(expo)
