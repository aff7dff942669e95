"""Hyperbolic-plane geometry of the SABR diffusion.

After the change of variable ``q = int dF / F**beta`` and the time rescaling
that sets the vol-of-vol to one, the SABR metric becomes the Poincare
half-plane metric ``ds**2 = (dx**2 + dy**2) / y**2`` in the coordinates

    x = (q - rho * V) / sqrt(1 - rho**2),    y = V.

Everything in this module works in those rescaled units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Below this vol-of-vol the time rescaling is ill conditioned and callers
#: switch to the pure CEV limit.
SMALL_NU = 1e-6

VERTICAL_TOL = 1e-12


class SmallVolOfVolError(ValueError):
    """Raised by :func:`rescale` when ``nu`` is too small to divide by."""


@dataclass(frozen=True)
class SabrParams:
    """SABR parameters, optionally with mean reversion of the volatility.

    ``dF = V F**beta dW1``, ``dV = nu V dW2 + kappa (vbar - V) dt``,
    ``<dW1, dW2> = rho dt``, ``V(0) = alpha``.
    """

    f0: float
    alpha: float
    beta: float
    nu: float
    rho: float
    kappa: float = 0.0
    vbar: float | None = None

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.nu >= 0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        if self.kappa > 0 and not (self.vbar is not None and self.vbar > 0):
            raise ValueError("vbar must be positive when kappa > 0")


@dataclass(frozen=True)
class ScaledSabr:
    """SABR parameters in units where the vol-of-vol is one.

    ``alpha``, ``vbar`` are divided by ``nu`` and ``kappa`` by ``nu**2``;
    maturities are multiplied by ``time_scale = nu**2``. Implied vols computed
    in these units are multiplied by ``nu`` to restore them.
    """

    f0: float
    alpha: float
    beta: float
    rho: float
    nu: float
    kappa: float = 0.0
    vbar: float = 0.0

    @property
    def time_scale(self) -> float:
        return self.nu**2

    @property
    def srho(self) -> float:
        return math.sqrt(1.0 - self.rho**2)

    def restore_vol(self, sigma):
        return sigma * self.nu

    def restore_ratios(self, r1, r2):
        """Map ``sigma1/sigma0`` and ``sigma2/sigma0`` back to physical time."""
        return r1 * self.nu**2, r2 * self.nu**4


def q_transform(f0, k, beta):
    """``int_{f0}^{k} dF / F**beta``; ``ln(k/f0)`` when ``beta == 1``."""
    f0 = np.asarray(f0, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(f0 <= 0) or np.any(k <= 0):
        raise ValueError("forward and strike must be positive")
    logm = np.log(k / f0)
    if beta == 1.0:
        out = logm
    else:
        e = 1.0 - beta
        # expm1 keeps full precision near the money
        out = f0**e * np.expm1(e * logm) / e
    return out[()] if out.ndim == 0 else out


def rescale(params: SabrParams, small_nu: float = SMALL_NU) -> ScaledSabr:
    if params.nu < small_nu:
        raise SmallVolOfVolError(
            f"nu={params.nu} below {small_nu}; use the CEV limit instead"
        )
    nu = params.nu
    vbar = params.vbar / nu if params.kappa > 0 else 0.0
    return ScaledSabr(
        f0=params.f0,
        alpha=params.alpha / nu,
        beta=params.beta,
        rho=params.rho,
        nu=nu,
        kappa=params.kappa / nu**2,
        vbar=vbar,
    )


def _distance_from_deltas(dx, dy, y1, y2):
    # 2 asinh(chord / (2 sqrt(y1 y2))) == acosh(1 + chord**2 / (2 y1 y2)),
    # but keeps precision for nearby points.
    chord = np.hypot(dx, dy)
    return 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(y1 * y2)))


def hyperbolic_distance(x1, y1, x2, y2):
    """Geodesic distance between two points of the Poincare half-plane."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise ValueError("half-plane points need y > 0")
    d = _distance_from_deltas(np.subtract(x2, x1), y2 - y1, y1, y2)
    return d[()] if np.ndim(d) == 0 else d


def vmin(alpha_hat, q, rho):
    """Terminal volatility minimizing the distance to the line of fixed ``q``."""
    return np.sqrt(alpha_hat**2 + 2.0 * rho * alpha_hat * q + q**2)


def _vmin_minus_alpha(alpha_hat, q, rho):
    v = vmin(alpha_hat, q, rho)
    return (2.0 * rho * alpha_hat * q + q**2) / (v + alpha_hat)


def min_distance(alpha_hat, q, rho, form="log"):
    """Distance from ``(q, V) = (0, alpha_hat)`` to the line of fixed ``q``.

    ``form="log"`` uses ``|ln((Vmin + rho a + q) / ((1 + rho) a))|``,
    ``form="acosh"`` the equivalent inverse hyperbolic cosine.
    """
    a = alpha_hat
    v = vmin(a, q, rho)
    if form == "acosh":
        arg = (v - rho * q - rho**2 * a) / ((1.0 - rho**2) * a)
        return np.arccosh(np.maximum(arg, 1.0))
    if form != "log":
        raise ValueError(f"unknown form {form!r}")
    q = np.asarray(q, dtype=float)
    u = (_vmin_minus_alpha(a, q, rho) + q) / ((1.0 + rho) * a)
    near = np.abs(u) < 0.5
    # for q + rho a < 0 the numerator cancels; use its conjugate instead
    conj = np.log(a * (1.0 - rho)) - np.log(np.where(near, 1.0, v - rho * a - q))
    direct = np.log1p(np.where(near | (q + rho * a >= 0), u, 0.0))
    out = np.where(near | (q + rho * a >= 0), np.abs(direct), np.abs(conj))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class Circle:
    X: float
    R: float
    t1: float
    t2: float
    vertical: bool


def _circle_from_deltas(x1, y1, dx, dy):
    """Geodesic circle through ``(x1, y1)`` and ``(x1 + dx, y1 + dy)``.

    Returns ``(X, R, t1, t2)`` with ``t = tan(theta / 2)`` the half-angle
    parameter; vectorized over arrays. Callers handle ``dx == 0``.
    """
    y2 = y1 + dy
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = -(dx**2 + dy * (y1 + y2)) / (2.0 * dx)  # x1 - X
    u2 = u1 + dx
    X = x1 - u1
    R = np.hypot(y1, u1)
    return X, R, _half_angle(u1, y1, R), _half_angle(u2, y2, R)


def _half_angle(u, y, R):
    # tan(theta/2) = y / (R + u) = (R - u) / y, picking the form free of
    # cancellation
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(u >= 0, y / (R + np.abs(u)), (R + np.abs(u)) / y)


def is_vertical(x1, x2):
    return abs(x2 - x1) < VERTICAL_TOL * max(1.0, abs(x1), abs(x2))


def geodesic_circle(x1, y1, x2, y2) -> Circle:
    """Centre, radius and half-angle endpoints of the geodesic joining two points."""
    if y1 <= 0 or y2 <= 0:
        raise ValueError("half-plane points need y > 0")
    if is_vertical(x1, x2):
        return Circle(math.nan, math.nan, math.nan, math.nan, True)
    X, R, t1, t2 = _circle_from_deltas(x1, y1, x2 - x1, y2 - y1)
    return Circle(float(X), float(R), float(t1), float(t2), False)


def van_vleck(d):
    """Van Vleck-Morette determinant ``d / sinh(d)`` of the hyperbolic plane."""
    d = np.asarray(d, dtype=float)
    small = d < 1e-4
    ds = np.where(small, 1.0, d)
    out = np.where(small, 1.0 - d**2 / 6.0 + 7.0 * d**4 / 360.0, ds / np.sinh(ds))
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class GeodesicData:
    """Geodesic from ``(q, V) = (0, alpha_hat)`` to ``(q, v)`` in rescaled units."""

    q: float
    x1: float
    y1: float
    x2: float
    y2: float
    X: float
    R: float
    t1: float
    t2: float
    d: float
    vmin: float
    vertical: bool

    @property
    def dx(self) -> float:
        return self.x2 - self.x1


def geodesic(alpha_hat, q, rho, v=None) -> GeodesicData:
    """Geodesic data for the transformed strike ``q``.

    The endpoint volatility defaults to the distance minimizer ``vmin``;
    passing ``v`` gives the geodesic to ``(q, v)`` instead.
    """
    s = math.sqrt(1.0 - rho**2)
    vm = float(vmin(alpha_hat, q, rho))
    if v is None:
        v = vm
        dy = float(_vmin_minus_alpha(alpha_hat, q, rho))
    else:
        dy = v - alpha_hat
    x1 = -rho * alpha_hat / s
    dx = (q - rho * dy) / s
    x2 = x1 + dx
    d = float(_distance_from_deltas(dx, dy, alpha_hat, v))
    if is_vertical(x1, x2):
        return GeodesicData(q, x1, alpha_hat, x2, v, math.nan, math.nan,
                            math.nan, math.nan, d, vm, True)
    X, R, t1, t2 = _circle_from_deltas(x1, alpha_hat, dx, dy)
    return GeodesicData(q, x1, alpha_hat, x2, v, float(X), float(R),
                        float(t1), float(t2), d, vm, False)
