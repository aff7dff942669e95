"""Finite-difference reference prices for SABR European options.

The backward equation is solved in ``(F, y)`` with ``y = ln(V / alpha)``:

    u_tau = 1/2 V**2 F**(2 beta) u_FF + rho nu V F**beta u_Fy
            + 1/2 nu**2 u_yy + (-1/2 nu**2 + kappa (vbar / V - 1)) u_y,

with ``tau`` the time to expiry. Time stepping is the Hundsdorfer-Verwer
alternating-direction scheme: the mixed derivative is explicit, the ``F``
and ``y`` operators are implicit one-dimensional sweeps, and the ``y``
sweep uses exponentially fitted diffusion. All strikes are solved at once
as right-hand sides of the same banded systems.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .geometry import SabrParams
from .pricers import OptionSpec, black_implied, cev_implied

HV_THETA = 0.5 + math.sqrt(3.0) / 6.0


class FdmError(RuntimeError):
    """The solver produced non-finite values or was misconfigured."""


class StabilityWarning(UserWarning):
    """The explicit mixed-derivative step is outside its stability bound."""


@dataclass(frozen=True)
class FdmConfig:
    """Grid and scheme settings.

    ``f_std`` and ``v_std`` set the domain half-widths in standard
    deviations of ``ln F`` and ``ln V`` over the maturity; ``f_stretch`` and
    ``v_stretch`` set the sinh concentration scale as fractions of ``F0``
    and of the ``y`` half-width. Time levels are ``T (i / nT)**time_grading``.
    """

    nF: int = 400
    nV: int = 200
    nT: int = 30
    f_std: float = 4.0
    v_std: float = 5.0
    f_stretch: float = 1.0
    v_stretch: float = 0.5
    boundary: str = "absorbing"
    theta: float = HV_THETA
    time_grading: float = 2.0

    def __post_init__(self):
        if self.nF < 3 or self.nV < 3:
            raise ValueError("nF and nV must be at least 3")
        if self.nT < 1:
            raise ValueError("nT must be at least 1")
        if self.f_std <= 0 or self.v_std <= 0:
            raise ValueError("domain widths must be positive")
        if self.f_stretch <= 0 or self.v_stretch <= 0:
            raise ValueError("stretch scales must be positive")
        if self.boundary not in ("absorbing", "reflecting"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    def refined(self, factor_space=1, factor_time=1) -> "FdmConfig":
        return replace(self,
                       nF=(self.nF - 1) * factor_space + 1,
                       nV=(self.nV - 1) * factor_space + 1,
                       nT=self.nT * factor_time)


@dataclass
class FdmSolution:
    """Prices on the grid and at ``(F0, alpha)``.

    ``grid_otm`` holds, per strike, the out-of-the-money option (put below
    the forward, call above) on the full ``(V, F)`` grid; ``calls`` and
    ``puts`` are the discounted values at ``(F0, alpha)``.
    """

    params: SabrParams
    strikes: np.ndarray
    maturity: float
    df: float
    F: np.ndarray
    V: np.ndarray
    grid_otm: np.ndarray
    calls: np.ndarray
    puts: np.ndarray
    config: FdmConfig = field(repr=False, default=None)

    def price(self, k_index, call=True):
        return float(self.calls[k_index] if call else self.puts[k_index])

    def otm_prices(self):
        above = self.strikes >= self.params.f0
        return np.where(above, self.calls, self.puts)

    def implied_vols(self, beta0=1.0):
        """Implied vols at ``(F0, alpha)`` in the Black or CEV(``beta0``) model."""
        out = np.empty(len(self.strikes))
        for n, k in enumerate(self.strikes):
            call = k >= self.params.f0
            spec = OptionSpec(float(k), self.maturity, call, self.df)
            price = self.calls[n] if call else self.puts[n]
            if beta0 == 1.0:
                out[n] = black_implied(price, self.params.f0, spec)
            else:
                out[n] = cev_implied(price, self.params.f0, spec, beta0)
        return out


# ---------------------------------------------------------------------------
# grids


def _stretched(lo, hi, centre, scale, n):
    """``n`` sinh-stretched points on ``[lo, hi]`` with ``centre`` a node."""
    xi_lo = math.asinh((lo - centre) / scale)
    xi_hi = math.asinh((hi - centre) / scale)
    m_lo = int(round((n - 1) * -xi_lo / (xi_hi - xi_lo)))
    m_lo = min(max(m_lo, 1), n - 2)
    m_hi = n - 1 - m_lo
    xi = np.concatenate([np.linspace(xi_lo, 0.0, m_lo + 1),
                         np.linspace(0.0, xi_hi, m_hi + 1)[1:]])
    pts = centre + scale * np.sinh(xi)
    pts[0], pts[m_lo], pts[-1] = lo, centre, hi
    return pts, m_lo


def build_grids(params: SabrParams, strikes, T, config: FdmConfig):
    """``F`` and ``y`` grids and the indices of ``F0`` and ``y = 0``."""
    f0, a = params.f0, params.alpha
    sig_loc = a * f0 ** (params.beta - 1.0)
    vol_spread = math.exp(params.nu * math.sqrt(T))
    f_max = f0 * math.exp(config.f_std * sig_loc * vol_spread * math.sqrt(T))
    f_max = max(f_max, 1.5 * float(np.max(strikes)))
    F, iF0 = _stretched(0.0, f_max, f0, config.f_stretch * f0, config.nF)
    half = max(config.v_std * params.nu * math.sqrt(T), 0.5)
    lo, hi = -half, half
    if params.kappa > 0:
        shift = math.log(params.vbar / a)
        lo, hi = min(lo, shift - 0.5), max(hi, shift + 0.5)
    y, jV0 = _stretched(lo, hi, 0.0, config.v_stretch * half, config.nV)
    return F, iF0, y, jV0


def cell_average_payoff(F, strikes, call):
    """Average of the payoff over each node's control volume."""
    mid = 0.5 * (F[1:] + F[:-1])
    left = np.concatenate([[F[0]], mid])
    right = np.concatenate([mid, [F[-1]]])
    K = np.asarray(strikes, dtype=float)[None, :]
    L, R = left[:, None], right[:, None]
    width = R - L

    def integral_call(a, b):
        # int_a^b (F - K)^+ dF
        a_, b_ = np.maximum(a, K), np.maximum(b, K)
        return 0.5 * ((b_ - K) ** 2 - (a_ - K) ** 2)

    ic = integral_call(L, R)
    if call:
        avg = ic / width
    else:
        # put = call - (F - K), averaged
        fwd = 0.5 * (L + R) - K
        avg = ic / width - fwd
    avg = np.where(width > 0, avg, np.maximum((F[:, None] - K) * (1 if call else -1), 0.0))
    return avg


# ---------------------------------------------------------------------------
# one-dimensional operators as tridiagonal coefficient triples


def _second_derivative_weights(x):
    hm = np.diff(x)[:-1]
    hp = np.diff(x)[1:]
    lo = 2.0 / (hm * (hm + hp))
    up = 2.0 / (hp * (hm + hp))
    return lo, -(lo + up), up


def _first_derivative_weights(x):
    hm = np.diff(x)[:-1]
    hp = np.diff(x)[1:]
    lo = -hp / (hm * (hm + hp))
    up = hm / (hp * (hm + hp))
    return lo, -(lo + up), up


def _fitted_diffusion(diff, conv, h):
    """Il'in fitting: ``D * P coth(P)`` with Peclet ``P = conv h / (2 D)``."""
    diff = np.broadcast_to(np.asarray(diff, dtype=float), np.shape(conv))
    out = np.abs(conv) * h / 2.0
    pos = diff > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        pe = conv * h / (2.0 * diff)
        small = np.abs(pe) < 1e-6
        fitted = np.where(small, diff * (1.0 + pe**2 / 3.0), diff * pe / np.tanh(pe))
    return np.where(pos, np.where(np.isfinite(fitted), fitted, out), out)


@dataclass
class _Operators:
    # coefficient arrays shaped (nV, nF); rows on the boundary are zero
    f_lo: np.ndarray
    f_di: np.ndarray
    f_up: np.ndarray
    y_lo: np.ndarray
    y_di: np.ndarray
    y_up: np.ndarray
    mix: np.ndarray
    dF2: np.ndarray
    dy2: np.ndarray


def _build_operators(params: SabrParams, F, y, config: FdmConfig) -> _Operators:
    nV, nF = len(y), len(F)
    V = params.alpha * np.exp(y)
    Fb = np.where(F > 0, F, 0.0) ** params.beta if params.beta > 0 else np.ones(nF)
    # diffusion coefficient in F
    aF = 0.5 * (V[:, None] ** 2) * (Fb[None, :] ** 2)
    w_lo, w_di, w_up = _second_derivative_weights(F)
    f_lo = np.zeros((nV, nF))
    f_di = np.zeros((nV, nF))
    f_up = np.zeros((nV, nF))
    f_lo[:, 1:-1] = aF[:, 1:-1] * w_lo
    f_di[:, 1:-1] = aF[:, 1:-1] * w_di
    f_up[:, 1:-1] = aF[:, 1:-1] * w_up
    if config.boundary == "reflecting" and params.beta == 0.0:
        h0 = F[1] - F[0]
        f_di[:, 0] = -2.0 * aF[:, 0] / h0**2
        f_up[:, 0] = 2.0 * aF[:, 0] / h0**2

    # convection-diffusion in y with fitted diffusion, zero on all boundaries
    nu2 = params.nu**2
    conv = -0.5 * nu2 + params.kappa * ((params.vbar or 0.0) / V - 1.0)
    hbar = 0.5 * (y[2:] - y[:-2])
    dcoef = _fitted_diffusion(0.5 * nu2, conv[1:-1], hbar)
    s_lo, s_di, s_up = _second_derivative_weights(y)
    c_lo, c_di, c_up = _first_derivative_weights(y)
    y_lo = np.zeros((nV, nF))
    y_di = np.zeros((nV, nF))
    y_up = np.zeros((nV, nF))
    row_lo = dcoef * s_lo + conv[1:-1] * c_lo
    row_di = dcoef * s_di + conv[1:-1] * c_di
    row_up = dcoef * s_up + conv[1:-1] * c_up
    y_lo[1:-1, 1:-1] = row_lo[:, None]
    y_di[1:-1, 1:-1] = row_di[:, None]
    y_up[1:-1, 1:-1] = row_up[:, None]

    mix = np.zeros((nV, nF))
    mix[1:-1, 1:-1] = params.rho * params.nu * V[1:-1, None] * Fb[None, 1:-1]
    dF2 = F[2:] - F[:-2]
    dy2 = y[2:] - y[:-2]
    return _Operators(f_lo, f_di, f_up, y_lo, y_di, y_up, mix, dF2, dy2)


def _apply_F(op: _Operators, u):
    out = op.f_di[..., None] * u
    out[:, 1:] += op.f_lo[:, 1:, None] * u[:, :-1]
    out[:, :-1] += op.f_up[:, :-1, None] * u[:, 1:]
    return out


def _apply_y(op: _Operators, u):
    out = op.y_di[..., None] * u
    out[1:] += op.y_lo[1:, :, None] * u[:-1]
    out[:-1] += op.y_up[:-1, :, None] * u[1:]
    return out


def _apply_mixed(op: _Operators, u):
    out = np.zeros_like(u)
    cross = u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]
    denom = op.dy2[:, None, None] * op.dF2[None, :, None]
    out[1:-1, 1:-1] = op.mix[1:-1, 1:-1, None] * cross / denom
    return out


def _solve_F(op: _Operators, rhs, c):
    """Solve ``(I - c A_F) x = rhs`` along every ``F`` line."""
    nV, nF, nK = rhs.shape
    ab = np.zeros((3, nV * nF))
    ab[1] = 1.0 - c * op.f_di.ravel()
    ab[0, 1:] = -c * op.f_up.ravel()[:-1]
    ab[2, :-1] = -c * op.f_lo.ravel()[1:]
    x = solve_banded((1, 1), ab, rhs.reshape(nV * nF, nK), check_finite=False)
    return x.reshape(nV, nF, nK)


def _solve_y(op: _Operators, rhs, c):
    """Solve ``(I - c A_y) x = rhs`` along every ``y`` line."""
    nV, nF, nK = rhs.shape
    ab = np.zeros((3, nV * nF))
    ab[1] = 1.0 - c * op.y_di.T.ravel()
    ab[0, 1:] = -c * op.y_up.T.ravel()[:-1]
    ab[2, :-1] = -c * op.y_lo.T.ravel()[1:]
    rt = np.ascontiguousarray(rhs.transpose(1, 0, 2)).reshape(nF * nV, nK)
    x = solve_banded((1, 1), ab, rt, check_finite=False)
    return x.reshape(nF, nV, nK).transpose(1, 0, 2)


def _hv_step(op: _Operators, u, dt, theta):
    fF = _apply_F(op, u)
    fy = _apply_y(op, u)
    f0 = _apply_mixed(op, u)
    y0 = u + dt * (f0 + fF + fy)
    y1 = _solve_F(op, y0 - theta * dt * fF, theta * dt)
    y2 = _solve_y(op, y1 - theta * dt * fy, theta * dt)
    gF = _apply_F(op, y2)
    gy = _apply_y(op, y2)
    g0 = _apply_mixed(op, y2)
    z0 = y0 + 0.5 * dt * ((g0 + gF + gy) - (f0 + fF + fy))
    z1 = _solve_F(op, z0 - theta * dt * gF, theta * dt)
    return _solve_y(op, z1 - theta * dt * gy, theta * dt)


def time_levels(T, config: FdmConfig):
    i = np.arange(config.nT + 1) / config.nT
    return T * i**config.time_grading


def solve(params: SabrParams, strikes, T, config: FdmConfig = FdmConfig(), df=1.0):
    """Prices of European options at ``(F0, alpha)`` for every strike.

    Each strike is solved for its out-of-the-money payoff; the other side
    follows from parity, which the scheme preserves exactly because it maps
    linear functions of ``F`` to themselves.
    """
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    if not T > 0:
        raise ValueError(f"maturity must be positive, got {T}")
    if np.any(strikes <= 0):
        raise ValueError("strikes must be positive")
    if config.theta < HV_THETA and params.rho != 0.0 and params.nu > 0.0:
        # below this the explicit cross term limits the step size
        warnings.warn(f"theta={config.theta:.4f} is below {HV_THETA:.4f}; the "
                      "explicit mixed term is only conditionally stable",
                      StabilityWarning, stacklevel=2)
    F, iF0, y, jV0 = build_grids(params, strikes, T, config)
    op = _build_operators(params, F, y, config)
    above = strikes >= params.f0
    u = np.where(above[None, :],
                 cell_average_payoff(F, strikes, True),
                 cell_average_payoff(F, strikes, False))
    u = np.broadcast_to(u[None], (len(y),) + u.shape).copy()
    levels = time_levels(T, config)
    for dt in np.diff(levels):
        u = _hv_step(op, u, dt, config.theta)
    if not np.all(np.isfinite(u)):
        raise FdmError("non-finite values in the solution")
    otm = u[jV0, iF0]
    fwd = params.f0 - strikes
    calls = df * np.where(above, otm, otm + fwd)
    puts = df * np.where(above, otm - fwd, otm)
    return FdmSolution(params, strikes, float(T), df, F,
                       params.alpha * np.exp(y), u, calls, puts, config)


def solve_extrapolated(params: SabrParams, strikes, T, config: FdmConfig = FdmConfig(), df=1.0):
    """Richardson extrapolation of :func:`solve` over one grid doubling.

    Space and time are both refined by two, so the second-order error
    terms cancel. ``grid_otm`` is taken from the fine run.
    """
    coarse = solve(params, strikes, T, config, df)
    fine = solve(params, strikes, T, config.refined(2, 2), df)
    calls = fine.calls + (fine.calls - coarse.calls) / 3.0
    puts = fine.puts + (fine.puts - coarse.puts) / 3.0
    return replace(fine, calls=calls, puts=puts)


@dataclass(frozen=True)
class ConvergenceReport:
    """Observed orders ``log2(|u_n - u_2n| / |u_2n - u_4n|)``.

    Per-strike orders are noisy where error contributions of opposite sign
    nearly cancel; the ``*_order_max`` fields use the largest change over
    all strikes instead.
    """

    strikes: np.ndarray
    space_values: np.ndarray
    space_order: np.ndarray
    time_values: np.ndarray
    time_order: np.ndarray
    extrapolated: np.ndarray
    error_estimate: np.ndarray
    space_order_max: float
    time_order_max: float


def _orders(vals):
    d1 = np.abs(vals[0] - vals[1])
    d2 = np.abs(vals[1] - vals[2])
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(d1 / d2)


def _order_max(vals):
    d1 = np.max(np.abs(vals[0] - vals[1]))
    d2 = np.max(np.abs(vals[1] - vals[2]))
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.log2(d1 / d2))


def convergence_report(params: SabrParams, strikes, T, base: FdmConfig = FdmConfig(nF=50, nV=25, nT=20)):
    """Grid-doubling study in space (``nF``, ``nV`` together) and in time.

    The spatial study runs with four times the base number of time steps so
    that time error does not pollute it.
    """
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    fine_t = replace(base, nT=base.nT * 4)
    sv = np.array([solve(params, strikes, T, fine_t.refined(f, 1)).otm_prices()
                   for f in (1, 2, 4)])
    tv = np.array([solve(params, strikes, T, base.refined(1, f)).otm_prices()
                   for f in (1, 2, 4)])
    p = _orders(sv)
    # Richardson with the nominal order two
    extra = sv[2] + (sv[2] - sv[1]) / 3.0
    return ConvergenceReport(strikes, sv, p, tv, _orders(tv), extra,
                             np.abs(sv[2] - sv[1]) / 3.0,
                             _order_max(sv), _order_max(tv))
