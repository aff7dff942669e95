"""Heat-kernel coefficients ``B``, ``C~`` and ``D~`` of the SABR model.

All inputs are in rescaled units (vol-of-vol one, see
:func:`sabr_heatkernel.geometry.rescale`). For a strike ``K`` the density of
``sigma_F**2 delta(F_t - K)`` behaves as

    exp(-B / t - C~ - D~ t) / sqrt(2 pi t)

with ``B`` half the squared geodesic distance to the strike line, ``C~``
coming from the parallel transport of the drift connection and ``D~`` from
the first heat-kernel coefficient.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ScaledSabr,
    _circle_from_deltas,
    geodesic,
    q_transform,
    van_vleck,
)

EPS = np.finfo(float).eps
#: Relative step of the default five-point stencils in the volatility.
WIDE_STEP = 1e-2
_SERIES_RATIO = 1e-2
_SERIES_TERMS = 12


class QuadratureWarning(UserWarning):
    """Order doubling changed a numerical quadrature by more than its tolerance."""


@dataclass(frozen=True)
class ConnectionConstants:
    """``F**(1 - beta) = a + b x + c y`` along the half-plane."""

    a: float
    b: float
    c: float

    @classmethod
    def from_model(cls, m: ScaledSabr) -> "ConnectionConstants":
        e = 1.0 - m.beta
        return cls(m.f0**e, e * m.srho, e * m.rho)


# ---------------------------------------------------------------------------
# primitive integrals along the circle, written in z = c R + t (a + b (X - R))
# so that dt / P(t) = dz / (z**2 + D) with D = (a + b X)**2 - (1 - beta)**2 R**2


def _discriminant(consts, X, R, beta):
    return (consts.a + consts.b * X) ** 2 - ((1.0 - beta) * R) ** 2


def _z(consts, X, R, t):
    return consts.c * R + t * (consts.a + consts.b * (X - R))


def _atan_diff(u2, u1):
    """``atan(u2) - atan(u1)`` without cancellation."""
    return np.arctan2(u2 - u1, 1.0 + u1 * u2)


def _j0_diff(z1, z2, D):
    """``int_{z1}^{z2} dz / (z**2 + D)``."""
    z1, z2, D = np.broadcast_arrays(*map(np.asarray, (z1, z2, D)))
    out = np.empty(z1.shape)
    pos = D > 0
    neg = D < 0
    zero = ~(pos | neg)
    sd = np.sqrt(np.where(pos, D, 1.0))
    out[pos] = (np.arctan2(sd * (z2 - z1), D + z1 * z2) / sd)[pos]
    c = np.sqrt(np.where(neg, -D, 1.0))
    outer = np.abs(z1) > c
    with np.errstate(divide="ignore", invalid="ignore"):
        w_out = -np.arctanh(c * (z1 - z2) / (z1 * z2 - c**2)) / c
        w_in = -np.arctanh(c * (z2 - z1) / (c**2 - z1 * z2)) / c
        out[neg] = np.where(outer, w_out, w_in)[neg]
        out[zero] = ((z2 - z1) / (z1 * z2))[zero]
    return out


def _k2_series(z, D):
    # antiderivative of (z**2 + D)**-2 expanded in D / z**2
    tot = np.zeros(np.shape(z))
    ratio = -D / z**2
    term = np.ones(np.shape(z))
    for n in range(_SERIES_TERMS):
        tot += (n + 1) * term / (-(2 * n + 3))
        term = term * ratio
    return tot / z**3


def _k2_diff(z1, z2, D):
    """``int_{z1}^{z2} dz / (z**2 + D)**2``."""
    z1, z2, D = np.broadcast_arrays(*map(np.asarray, (z1, z2, D)))
    small = np.abs(D) < _SERIES_RATIO * np.minimum(z1**2, z2**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = (z2 / (z2**2 + D) - z1 / (z1**2 + D) + _j0_diff(z1, z2, D)) / (2.0 * D)
        series = _k2_series(z2, D) - _k2_series(z1, D)
    return np.where(small, series, closed)


def connection_G_diff(t1, t2, consts, X, R, beta):
    """``G(t2) - G(t1)``, with ``G(t) = atan(t) - (a + bX) int dt / P(t)``.

    Differences are formed analytically so the result is continuous across
    the sign change of the discriminant.
    """
    D = _discriminant(consts, X, R, beta)
    z1 = _z(consts, X, R, t1)
    z2 = _z(consts, X, R, t2)
    return _atan_diff(t2, t1) - (consts.a + consts.b * X) * _j0_diff(z1, z2, D)


def connection_G(t, consts, X, R, beta):
    """The antiderivative ``G`` itself, branch by branch.

    Prefer :func:`connection_G_diff` for differences; this form is kept for
    inspection and for checking continuity across the discriminant.
    """
    D = _discriminant(consts, X, R, beta)
    z = _z(consts, X, R, t)
    ab = consts.a + consts.b * X
    if D > 0:
        r = math.sqrt(D)
        return math.atan(t) - ab / r * math.atan(z / r)
    if D < 0:
        r = math.sqrt(-D)
        w = z / r
        th = math.atanh(1.0 / w) if abs(w) > 1 else math.atanh(w)
        return math.atan(t) + ab / r * th
    return math.atan(t) + ab / z


# ---------------------------------------------------------------------------
# connection integral M1 for arbitrary endpoints


_NEAR_VERTICAL = 1e-6


def _m1_circle(m: ScaledSabr, consts, x1, y1, dx, dy):
    X, R, t1, t2 = _circle_from_deltas(x1, y1, dx, dy)
    dG = connection_G_diff(t1, t2, consts, X, R, m.beta)
    return -m.rho * m.beta / ((1.0 - m.beta) * m.srho) * dG


def _m1_sabr(m: ScaledSabr, consts, x1, y1, x, y):
    """``M1`` along the geodesic from ``(x1, y1)`` to ``(x, y)`` (arrays)."""
    s = m.srho
    dx = np.asarray(x, dtype=float) - x1
    dy = np.asarray(y, dtype=float) - y1
    dx, dy = np.broadcast_arrays(dx, dy)
    if m.beta == 1.0:
        return m.rho**2 / (2.0 * s) * dx - 0.5 * m.rho * dy
    if m.rho == 0.0 or m.beta == 0.0:
        return np.zeros(dx.shape)
    # on a vertical line the full connection integrates to zero, so M1 is
    # minus its exact part (beta/2) ln(F/F0)
    w1 = consts.a + consts.b * x1 + consts.c * y1
    vert_val = -0.5 * m.beta / (1.0 - m.beta) * np.log1p(consts.c * dy / w1)
    # nearly vertical circles lose precision as X grows like dy/dx; bridge
    # that band linearly between circles at dx = +-delta
    delta = _NEAR_VERTICAL * np.abs(dy)
    near = np.abs(dx) < delta
    dxs = np.where(near, 1.0, dx)
    out = _m1_circle(m, consts, x1, y1, dxs, dy)
    if np.any(near):
        dyn = np.where(near, dy, 1.0)
        dn = np.where(near, delta, 1.0)
        up = _m1_circle(m, consts, x1, y1, dn, dyn)
        dn_val = _m1_circle(m, consts, x1, y1, -dn, dyn)
        bridge = vert_val + (up - dn_val) / (2.0 * dn) * dx
        out = np.where(near, bridge, out)
    both_zero = (dx == 0) & (dy == 0)
    return np.where(both_zero, 0.0, out)


def _m_mr_curved(m: ScaledSabr, x1, y1, x, y):
    """Non-exact part of the mean-reversion connection integral."""
    dx = np.asarray(x, dtype=float) - x1
    dy = np.asarray(y, dtype=float) - y1
    if m.kappa == 0.0 or m.rho == 0.0:
        return np.zeros(np.broadcast(dx, dy).shape)
    vert = np.abs(dx) < 1e-12 * np.maximum(1.0, np.abs(x1) + np.abs(dx))
    dxs = np.where(vert, 1.0, dx)
    X, R, t1, t2 = _circle_from_deltas(x1, y1, dxs, dy)
    val = m.rho * m.kappa / m.srho * (
        2.0 * _atan_diff(t2, t1) - m.vbar / R * np.log(t2 / t1)
    )
    return np.where(vert, 0.0, val)


def _m_mr_exact(m: ScaledSabr, y1, y):
    if m.kappa == 0.0:
        return np.zeros(np.shape(y))
    y = np.asarray(y, dtype=float)
    return m.kappa * (np.log(y / y1) + m.vbar / y - m.vbar / y1)


def m1_total(m: ScaledSabr, x1, y1, x, y):
    """Connection integral minus its pure-gauge part ``(beta/2) ln(F/F0)``."""
    consts = ConnectionConstants.from_model(m)
    out = _m1_sabr(m, consts, x1, y1, x, y)
    if m.kappa > 0:
        out = out + _m_mr_curved(m, x1, y1, x, y) + _m_mr_exact(m, y1, y)
    return out


def connection_M(m: ScaledSabr, k, v=None):
    """Integral of the drift connection from ``(F0, alpha)`` to ``(k, v)``.

    ``v`` defaults to the distance-minimizing volatility.
    """
    q = float(q_transform(m.f0, k, m.beta))
    geo = geodesic(m.alpha, q, m.rho, v)
    m1 = m1_total(m, geo.x1, geo.y1, geo.x2, geo.y2)
    return 0.5 * m.beta * math.log(k / m.f0) + float(m1)


# ---------------------------------------------------------------------------
# scalar part Q and the a1 pieces


def q_sabr_coefficient(beta, rho):
    return 0.25 * beta * (1.0 - beta + beta / (2.0 * (1.0 - rho**2)))


def q_scalar(m: ScaledSabr, x, y):
    """The scalar ``Q`` of the SABR (or mean-reverting SABR) connection."""
    consts = ConnectionConstants.from_model(m)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fpow = consts.a + consts.b * x + consts.c * y  # F**(1 - beta)
    out = q_sabr_coefficient(m.beta, m.rho) * y**2 / fpow**2
    if m.kappa > 0:
        k, vb, r2 = m.kappa, m.vbar, 1.0 - m.rho**2
        out = out + (
            0.5 * k**2 * (y - vb) ** 2 / (y**2 * r2)
            + 0.5 * k
            - k * vb / y
            - 0.5 * m.rho * m.beta * k * (y - vb) / (r2 * fpow)
        )
    return out


def a1_Q(m: ScaledSabr, geo) -> float:
    """``-(1/d) int Q ds`` for the SABR scalar, in closed form off the vertical."""
    if m.beta == 0.0:
        return 0.0
    kq = q_sabr_coefficient(m.beta, m.rho)
    if geo.d == 0.0:
        return -float(q_scalar(_no_mr(m), geo.x1, geo.y1))
    if geo.vertical:
        from scipy.integrate import quad

        sm = _no_mr(m)
        val, _ = quad(lambda y: float(q_scalar(sm, geo.x1, y)) / y,
                      min(geo.y1, geo.y2), max(geo.y1, geo.y2),
                      epsabs=0.0, epsrel=1e-13)
        return -val / geo.d
    if m.beta == 1.0:
        return -geo.R * abs(geo.x2 - geo.x1) / (8.0 * (1.0 - m.rho**2) * geo.d)
    consts = ConnectionConstants.from_model(m)
    D = _discriminant(consts, geo.X, geo.R, m.beta)
    z1 = _z(consts, geo.X, geo.R, geo.t1)
    z2 = _z(consts, geo.X, geo.R, geo.t2)
    # int t dt / P**2 = int (z - cR) dz / (z**2 + D)**2
    di1 = (-0.5 * (1.0 / (z2**2 + D) - 1.0 / (z1**2 + D))
           - consts.c * geo.R * float(_k2_diff(z1, z2, D)))
    dlnt = math.log(geo.t2 / geo.t1)
    return float(-4.0 * kq * geo.R**2 * di1 / dlnt)


def a1_R(d):
    """Curvature part ``-(1/8)[1 + (coth d - 1/d)/d]`` of ``a1``."""
    d = np.asarray(d, dtype=float)
    # the direct form loses about eps / d**2 to cancellation
    small = d < 0.1
    ds = np.where(small, 1.0, d)
    d2 = d**2
    ser = 1.0 / 3.0 + d2 * (-1.0 / 45.0 + d2 * (2.0 / 945.0 + d2 * (
        -1.0 / 4725.0 + d2 * (2.0 / 93555.0 - d2 * 1382.0 / 638512875.0))))
    exact = (1.0 / np.tanh(ds) - 1.0 / ds) / ds
    out = -0.125 * (1.0 + np.where(small, ser, exact))
    return out[()] if out.ndim == 0 else out


def _no_mr(m: ScaledSabr) -> ScaledSabr:
    if m.kappa == 0.0:
        return m
    return ScaledSabr(m.f0, m.alpha, m.beta, m.rho, m.nu)


def _geodesic_points(geo, u):
    """Points at signed arclength parameter ``u`` (``ln t`` off the vertical)."""
    if geo.vertical:
        sign = 1.0 if geo.y2 >= geo.y1 else -1.0
        return np.full_like(u, geo.x1), geo.y1 * np.exp(sign * u)
    return geo.X - geo.R * np.tanh(u), geo.R / np.cosh(u)


def _arclength_range(geo):
    if geo.vertical:
        return 0.0, geo.d
    return math.log(geo.t1), math.log(geo.t2)


def _connection_field(m: ScaledSabr, consts, x, y):
    """Components of the curved connection ``A1`` (plus mean reversion)."""
    if m.beta == 1.0:
        cp = np.ones_like(y)
    else:
        cp = m.beta / (consts.a + consts.b * x + consts.c * y)
    ax = m.rho**2 / (2.0 * m.srho) * cp
    ay = -0.5 * m.rho * cp
    if m.kappa > 0:
        ax = ax - m.rho * m.kappa / m.srho * (y - m.vbar) / y**2
    return ax, ay


def _field_strength(m: ScaledSabr, consts, x, y):
    """``G = Omega y**2`` and its gradient, ``Omega`` the curl of the connection."""
    zero = np.zeros_like(y)
    om, omx, omy = zero, zero, zero
    if 0.0 < m.beta < 1.0:
        k0 = m.rho * m.beta * (1.0 - m.beta) / (2.0 * m.srho)
        w = consts.a + consts.b * x + consts.c * y
        om = k0 / w**2
        omx = -2.0 * k0 * consts.b / w**3
        omy = -2.0 * k0 * consts.c / w**3
    if m.kappa > 0:
        k1 = m.rho * m.kappa / m.srho
        om = om + k1 * (2.0 * m.vbar / y**3 - 1.0 / y**2)
        omy = omy + k1 * (2.0 / y**3 - 6.0 * m.vbar / y**4)
    return om * y**2, omx * y**2, omy * y**2 + 2.0 * y * om


def _radial_frame(geo, r):
    """Points at distance ``r`` from the start and the unit normal there.

    The normal is the direction of travel turned by +90 degrees, so that
    ``(r, phi)`` polar coordinates share the orientation of ``(x, y)``.
    """
    if geo.vertical:
        sg = 1.0 if geo.y2 >= geo.y1 else -1.0
        x = np.full_like(r, geo.x1)
        y = geo.y1 * np.exp(sg * r)
        tx, ty = np.zeros_like(r), np.full_like(r, sg)
    else:
        u1, u2 = math.log(geo.t1), math.log(geo.t2)
        sg = 1.0 if u2 >= u1 else -1.0
        u = u1 + sg * r
        x, y = _geodesic_points(geo, u)
        tx, ty = -sg / np.cosh(u), -sg * np.tanh(u)
    return x, y, -ty, tx


def _a1A_radial(m: ScaledSabr, geo, order):
    consts = ConnectionConstants.from_model(m)
    xi, wi = np.polynomial.legendre.leggauss(order)
    r = 0.5 * geo.d * (xi + 1.0)
    # inner rule on [0, r_i] for every outer node
    rr = 0.5 * r[:, None] * (xi[None, :] + 1.0)
    x, y, nx, ny = _radial_frame(geo, rr)
    G, Gx, Gy = _field_strength(m, consts, x, y)
    sh = np.sinh(rr)
    pot = 0.5 * r * ((G * sh) @ wi)
    dphi = 0.5 * r * ((sh**2 * y * (nx * Gx + ny * Gy)) @ wi)
    f = (dphi + pot**2) / np.sinh(r) ** 2
    return 0.25 * float(f @ wi)


def _gauss_on_geodesic(func, geo, order):
    u0, u1 = _arclength_range(geo)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (u1 - u0)
    u = u0 + half * (nodes + 1.0)
    x, y = _geodesic_points(geo, u)
    return abs(half) * float(np.dot(weights, func(x, y)))


def a1_A(m: ScaledSabr, geo, order=16, tol=1e-8):
    """Curvature of the drift connection integrated along the geodesic.

    Evaluated in the radial gauge around the starting point, where the
    potential is the radial integral of the field strength ``F_{r phi}``:

        a1A = 1/(2d) int_0^d (d_phi A_phi + A_phi**2) / sinh(r)**2 dr,
        A_phi(r) = int_0^r F_{r phi} dr'.

    The connection is divergence free, so no other term enters. Nested
    Gauss-Legendre rules of ``order`` points are used; returns
    ``(value, change)`` with ``change`` the difference with twice the order.
    Vanishes for ``beta`` in ``{0, 1}`` or ``rho == 0`` without mean reversion.
    """
    if (m.beta == 1.0 or m.rho == 0.0 or m.beta == 0.0) and m.kappa == 0.0:
        return 0.0, 0.0
    if m.kappa > 0 and m.rho == 0.0:
        return 0.0, 0.0
    if geo.d == 0.0:
        return 0.0, 0.0
    lo = _a1A_radial(m, geo, order)
    hi = _a1A_radial(m, geo, 2 * order)
    change = hi - lo
    if abs(change) > tol * max(1.0, abs(hi)):
        warnings.warn(
            f"a1_A quadrature moved by {change:.3g} on order doubling",
            QuadratureWarning,
            stacklevel=2,
        )
    return lo, change


def a1_Q_mean_reversion(m: ScaledSabr, geo, order=16):
    """``-(1/d) int dQ ds`` for the extra scalar terms of mean reversion."""
    if m.kappa == 0.0:
        return 0.0
    full, base = m, _no_mr(m)

    def f(x, y):
        return q_scalar(full, x, y) - q_scalar(base, x, y)

    if geo.d == 0.0:
        return -float(f(np.array([geo.x1]), np.array([geo.y1]))[0])
    return -_gauss_on_geodesic(f, geo, order) / geo.d


def m1_derivatives(m: ScaledSabr, geo, scale=1.0, stencil="wide"):
    """First and second derivatives of ``M1`` in the terminal volatility.

    ``stencil="wide"`` (default) uses five-point fourth-order central
    differences with steps ``h`` and ``h/2``, ``h = 1e-2 max(vmin, 1)``
    capped by ``1e-2`` times the distance to the line ``F = 0``, combined
    by one Richardson step. ``stencil="short"`` uses
    three-point differences with steps ``max(vmin, 1) eps**(1/3)`` and
    ``max(vmin, 1) eps**(1/4)``; its second derivative carries round-off
    near ``1e-8``, which the near-money order-two ratio divides by ``B``.
    Steps are multiplied by ``scale``.
    """
    v = geo.vmin
    if m.beta == 1.0 and m.kappa == 0.0:
        return -m.rho / (2.0 * (1.0 - m.rho**2)), 0.0
    s = m.srho

    def m1(vv):
        x2 = (geo.q - m.rho * vv) / s
        return float(m1_total(m, geo.x1, geo.y1, x2, vv))

    if stencil == "wide":
        # M1 varies on the scale of y or of the distance to the line F = 0,
        # whichever is smaller; the latter matters when alpha / nu is large
        consts = ConnectionConstants.from_model(m)
        grad = math.hypot(consts.b, consts.c)
        length = max(v, 1.0)
        if grad > 0:
            w1 = consts.a + consts.b * geo.x1 + consts.c * geo.y1
            w2 = consts.a + consts.b * geo.x2 + consts.c * geo.y2
            length = min(length, min(w1, w2) / grad)
        h = scale * length * WIDE_STEP
        f0 = m1(v)

        def five_point(h):
            fp1, fm1 = m1(v + h), m1(v - h)
            fp2, fm2 = m1(v + 2.0 * h), m1(v - 2.0 * h)
            d1 = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h)
            d2 = (-(fp2 + fm2) + 16.0 * (fp1 + fm1) - 30.0 * f0) / (12.0 * h**2)
            return d1, d2

        (c1, c2), (f1, f2) = five_point(h), five_point(0.5 * h)
        # one Richardson step removes the h**4 term
        return f1 + (f1 - c1) / 15.0, f2 + (f2 - c2) / 15.0
    if stencil != "short":
        raise ValueError(f"unknown stencil {stencil!r}")
    h1 = scale * max(v, 1.0) * EPS ** (1.0 / 3.0)
    h2 = scale * max(v, 1.0) * EPS**0.25
    d1 = (m1(v + h1) - m1(v - h1)) / (2.0 * h1)
    d2 = (m1(v + h2) - 2.0 * m1(v) + m1(v - h2)) / h2**2
    return d1, d2


@dataclass(frozen=True)
class BLadder:
    ddpp: float  # d'' (inf at the money)
    Bpp: float
    B3overBpp: float
    B4overBpp: float


def b_derivative_ladder(m: ScaledSabr, geo) -> BLadder:
    """Derivatives of ``B(V) = d(V)**2 / 2`` in ``V`` at ``vmin``."""
    d, v, a = geo.d, geo.vmin, m.alpha
    r2 = 1.0 - m.rho**2
    bpp = float(van_vleck(d)) / (a * r2 * v)
    ddpp = 1.0 / (a * r2 * v * math.sinh(d)) if d > 0 else math.inf
    # d'' (coth d - 1/d) written as B'' (coth d - 1/d) / d
    coth_term = bpp * (-8.0 * float(a1_R(d)) - 1.0)
    return BLadder(ddpp, bpp, -3.0 / v, 12.0 / v**2 - 3.0 * coth_term)


@dataclass(frozen=True)
class KernelCoefficients:
    """``B``, ``C~``, ``D~`` at a strike, with their building blocks."""

    B: float
    Ctilde: float
    Dtilde: float
    geo: object
    parts: dict = field(default_factory=dict)


def ctilde(m: ScaledSabr, geo, k, m1=None) -> float:
    """``C~ = -ln(sqrt(alpha Vmin) K**beta) + M`` at the minimizing volatility."""
    if m1 is None:
        m1 = float(m1_total(m, geo.x1, geo.y1, geo.x2, geo.y2))
    return -0.5 * math.log(m.alpha * m.f0**m.beta * geo.vmin * k**m.beta) + m1


def dtilde(a1q, a1a, ladder: BLadder, m1p, m1pp, v):
    """Simplified order-``t`` coefficient."""
    bracket = m1pp - m1p**2 + 3.0 / v * m1p - 0.75 / v**2
    return -a1q - a1a + 0.125 + bracket / (2.0 * ladder.Bpp)


def kernel_coefficients(m: ScaledSabr, k, quad_order=16, quad_tol=1e-8):
    """All heat-kernel quantities at strike ``k`` (rescaled units)."""
    q = float(q_transform(m.f0, k, m.beta))
    geo = geodesic(m.alpha, q, m.rho)
    m1 = float(m1_total(m, geo.x1, geo.y1, geo.x2, geo.y2))
    c_t = ctilde(m, geo, k, m1)
    a1q = a1_Q(m, geo)
    a1q_mr = a1_Q_mean_reversion(m, geo, quad_order)
    a1a, a1a_change = a1_A(m, geo, quad_order, quad_tol)
    a1r = float(a1_R(geo.d))
    ladder = b_derivative_ladder(m, geo)
    m1p, m1pp = m1_derivatives(m, geo)
    dt = dtilde(a1q + a1q_mr, a1a, ladder, m1p, m1pp, geo.vmin)
    parts = dict(
        M1=m1,
        M=0.5 * m.beta * math.log(k / m.f0) + m1,
        M1p=m1p,
        M1pp=m1pp,
        a1Q=a1q + a1q_mr,
        a1Q_mr=a1q_mr,
        a1R=a1r,
        a1A=a1a,
        a1A_change=a1a_change,
        ddpp=ladder.ddpp,
        Bpp=ladder.Bpp,
        B3overBpp=ladder.B3overBpp,
        B4overBpp=ladder.B4overBpp,
    )
    return KernelCoefficients(0.5 * geo.d**2, c_t, dt, geo, parts)


def mean_reversion_adjustments(m: ScaledSabr, k, quad_order=16):
    """Extra connection integral and extra ``D~`` due to mean reversion.

    Both vanish identically for ``kappa == 0``.
    """
    if m.kappa == 0.0:
        return 0.0, 0.0
    with_mr = kernel_coefficients(m, k, quad_order)
    without = kernel_coefficients(_no_mr(m), k, quad_order)
    return (with_mr.parts["M"] - without.parts["M"],
            with_mr.Dtilde - without.Dtilde)
