"""Short-maturity SABR implied volatility by heat-kernel expansion.

Modules
-------
geometry
    Hyperbolic half-plane picture of SABR: distances, geodesics.
kernel
    Heat-kernel coefficients ``B``, ``C~`` and ``D~`` at a strike.
expansion
    Implied vols at orders 0, 1 and 2 against Black, CEV or Bachelier
    proxies, and the HKLW baseline.
pricers
    Black, Bachelier and CEV prices and implied vols; time value of a
    heat-kernel density.
fdm
    Two-dimensional ADI finite-difference reference solver.
cli
    Command-line driver.
"""

from .expansion import (
    ExpansionResult,
    Proxy,
    atm_limits,
    hklw_baseline,
    implied_vol_expansion,
    smile,
)
from .fdm import FdmConfig, FdmSolution, convergence_report, solve, solve_extrapolated
from .geometry import SabrParams, rescale
from .kernel import kernel_coefficients
from .pricers import (
    OptionSpec,
    bachelier_implied,
    bachelier_price,
    black_implied,
    black_price,
    cev_implied,
    cev_price,
    time_value_erfc,
)

__version__ = "0.1.0"

__all__ = [
    "ExpansionResult",
    "FdmConfig",
    "FdmSolution",
    "OptionSpec",
    "Proxy",
    "SabrParams",
    "atm_limits",
    "bachelier_implied",
    "bachelier_price",
    "black_implied",
    "black_price",
    "cev_implied",
    "cev_price",
    "convergence_report",
    "hklw_baseline",
    "implied_vol_expansion",
    "kernel_coefficients",
    "rescale",
    "smile",
    "solve",
    "solve_extrapolated",
    "time_value_erfc",
]
