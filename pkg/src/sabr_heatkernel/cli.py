"""Command-line driver for smiles, prices, comparisons and FDM studies.

Runs are described by a JSON config file::

    {
      "params": {"f0": 4, "alpha": 0.3, "beta": 0.7, "nu": 0.4, "rho": -0.5},
      "mean_reversion": {"kappa": 0.1, "vbar": 0.3},
      "strikes": {"min": 2.5, "max": 6.5, "count": 17, "spacing": "linear"},
      "maturities": [2.5, 10],
      "methods": ["order1", "order2", "hklw", "fdm"],
      "proxy": {"name": "black"},
      "reference": "fdm",
      "fdm": {"nF": 400, "nV": 200, "nT": 30},
      "validity_bound": 1.0,
      "df": 1.0,
      "option": "call",
      "output": "smile.csv"
    }

Only ``params``, ``strikes`` and ``maturities`` are required. ``strikes``
may also be an explicit list. Every command writes long-format CSV with the
columns ``method,K,T,value,flag``; numbers carry 17 significant digits and
rows are sorted, so identical configs give byte-identical files.

Methods
-------
order1, order2
    Heat-kernel expansion truncated after ``T`` or ``T**2``.
hklw
    The classic lognormal SABR formula.
cev-proxy
    Order two computed against a CEV proxy with ``beta0 = beta``.
mean-reverting
    Order two including the mean reversion of the volatility.
fdm
    Finite-difference reference (mean reversion included when
    ``"fdm_mean_reversion": true``).

Vols of every method are quoted in the configured proxy convention (Black,
CEV or Bachelier), converting through prices where needed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .expansion import Proxy, hklw_baseline, implied_vol_expansion
from .fdm import FdmConfig, convergence_report, solve
from .geometry import SabrParams
from .pricers import OptionSpec, cev_implied, cev_price

METHODS = ("order1", "order2", "hklw", "fdm", "cev-proxy", "mean-reverting")
HEADER = ("method", "K", "T", "value", "flag")

# exit codes; argparse itself exits with 2 on usage errors
OK, CONFIG_ERROR, USAGE_ERROR, CELL_ERROR = 0, 1, 2, 3


class ConfigError(ValueError):
    """The run configuration is malformed or inconsistent."""


@dataclass
class RunConfig:
    params: SabrParams
    strikes: tuple
    maturities: tuple
    methods: tuple = ("order2",)
    proxy: Proxy = field(default_factory=Proxy.black)
    reference: str = "fdm"
    fdm: FdmConfig = field(default_factory=FdmConfig)
    fdm_mean_reversion: bool = False
    validity_bound: float = 1.0
    df: float = 1.0
    option: str = "call"
    output: str | None = None

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if not self.strikes or any(not k > 0 for k in self.strikes):
            raise ConfigError("strikes must be a non-empty list of positive numbers")
        if not self.maturities or any(not t > 0 for t in self.maturities):
            raise ConfigError("maturities must be a non-empty list of positive numbers")
        if self.option not in ("call", "put", "otm"):
            raise ConfigError(f"option must be call, put or otm, got {self.option!r}")
        if not self.df > 0:
            raise ConfigError("df must be positive")
        if self.reference not in METHODS:
            raise ConfigError(f"unknown reference {self.reference!r}; choose from {list(METHODS)}")
        if "mean-reverting" in self.methods and self.params.kappa == 0.0:
            raise ConfigError("method mean-reverting needs a mean_reversion block")

    @property
    def sabr(self) -> SabrParams:
        """The parameters without mean reversion."""
        return replace(self.params, kappa=0.0, vbar=None)


def _strike_grid(spec):
    if isinstance(spec, list):
        return tuple(float(k) for k in spec)
    if not isinstance(spec, dict):
        raise ConfigError("strikes must be a list or a {min, max, count} object")
    try:
        lo, hi, n = float(spec["min"]), float(spec["max"]), int(spec["count"])
    except KeyError as exc:
        raise ConfigError(f"strike grid is missing {exc}") from None
    spacing = spec.get("spacing", "linear")
    if spacing == "linear":
        grid = np.linspace(lo, hi, n)
    elif spacing == "geometric":
        if lo <= 0:
            raise ConfigError("a geometric strike grid needs min > 0")
        grid = np.geomspace(lo, hi, n)
    else:
        raise ConfigError(f"unknown strike spacing {spacing!r}")
    return tuple(float(k) for k in grid)


def _proxy(spec):
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name", "black")
    try:
        if name == "black":
            return Proxy.black()
        if name == "bachelier":
            return Proxy.bachelier()
        if name == "cev":
            return Proxy.cev(float(spec["beta0"]))
    except KeyError:
        raise ConfigError("a cev proxy needs beta0") from None
    raise ConfigError(f"unknown proxy {name!r}")


def parse_config(raw: dict) -> RunConfig:
    """Build a :class:`RunConfig` from decoded JSON."""
    if not isinstance(raw, dict):
        raise ConfigError("the config must be a JSON object")
    for key in ("params", "strikes", "maturities"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    try:
        return _build(raw)
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _build(raw: dict) -> RunConfig:
    p = dict(raw["params"])
    mr = raw.get("mean_reversion")
    if mr:
        p["kappa"] = float(mr["kappa"])
        p["vbar"] = float(mr["vbar"])
    params = SabrParams(**p)
    known = {f.name for f in fields(FdmConfig)}
    over = raw.get("fdm", {})
    unknown = set(over) - known
    if unknown:
        raise ConfigError(f"unknown fdm settings {sorted(unknown)}")
    fdm = FdmConfig(**over)
    methods = raw.get("methods", ("order2",))
    if isinstance(methods, str):
        methods = (methods,)
    return RunConfig(
        params=params,
        strikes=_strike_grid(raw["strikes"]),
        maturities=tuple(float(t) for t in raw["maturities"]),
        methods=tuple(methods),
        proxy=_proxy(raw.get("proxy", "black")),
        reference=raw.get("reference", "fdm"),
        fdm=fdm,
        fdm_mean_reversion=bool(raw.get("fdm_mean_reversion", False)),
        validity_bound=float(raw.get("validity_bound", 1.0)),
        df=float(raw.get("df", 1.0)),
        option=raw.get("option", "call"),
        output=raw.get("output"),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class Cell:
    method: str
    K: float
    T: float
    value: float
    flag: str = "ok"

    def sort_key(self):
        return (self.method, self.T, self.K)


def _quote(vol, beta_from, cfg: RunConfig, K, T):
    """Re-express a ``beta_from`` vol in the proxy convention of ``cfg``."""
    beta_to = cfg.proxy.beta0
    if beta_from == beta_to:
        return vol
    spec = OptionSpec(K, T, K >= cfg.params.f0)
    price = cev_price(cfg.params.f0, spec, vol, beta_from)
    return cev_implied(price, cfg.params.f0, spec, beta_to)


def _expansion_cells(cfg: RunConfig, method):
    out = []
    for T in cfg.maturities:
        for K in cfg.strikes:
            try:
                out.append(_expansion_cell(cfg, method, K, T))
            except (ValueError, ArithmeticError) as exc:
                warnings.warn(f"{method} K={K} T={T}: {exc}", RuntimeWarning)
                out.append(Cell(method, K, T, math.nan, "error"))
    return out


def _expansion_cell(cfg: RunConfig, method, K, T):
    if method == "hklw":
        vol = float(hklw_baseline(cfg.sabr, K, T))
        ok = vol > 0 and math.isfinite(vol)
        if ok:
            vol = _quote(vol, 1.0, cfg, K, T)
        return Cell(method, K, T, vol, "ok" if ok else "invalid")
    params = cfg.params if method == "mean-reverting" else cfg.sabr
    proxy = Proxy.cev(cfg.params.beta) if method == "cev-proxy" else cfg.proxy
    res = implied_vol_expansion(params, K, T, proxy, cfg.validity_bound)
    order = 1 if method == "order1" else 2
    vol = float(res.vol(T, order))
    ok = params.nu**2 * T <= cfg.validity_bound and vol > 0 and math.isfinite(vol)
    if ok and method == "cev-proxy":
        vol = _quote(vol, proxy.beta0, cfg, K, T)
    return Cell(method, K, T, vol, "ok" if ok else "invalid")


def _fdm_solution(cfg: RunConfig, T):
    params = cfg.params if cfg.fdm_mean_reversion else cfg.sabr
    return solve(params, np.array(cfg.strikes), T, cfg.fdm, cfg.df)


def _fdm_cells(cfg: RunConfig):
    out = []
    for T in cfg.maturities:
        sol = _fdm_solution(cfg, T)
        for n, K in enumerate(cfg.strikes):
            try:
                call = K >= cfg.params.f0
                spec = OptionSpec(K, T, call, cfg.df)
                vol = cev_implied(sol.price(n, call), cfg.params.f0, spec, cfg.proxy.beta0)
                out.append(Cell("fdm", K, T, vol))
            except (ValueError, ArithmeticError) as exc:
                warnings.warn(f"fdm K={K} T={T}: {exc}", RuntimeWarning)
                out.append(Cell("fdm", K, T, math.nan, "error"))
    return out


def smile_cells(cfg: RunConfig):
    cells = []
    for method in cfg.methods:
        cells += _fdm_cells(cfg) if method == "fdm" else _expansion_cells(cfg, method)
    return sorted(cells, key=Cell.sort_key)


def _option_is_call(cfg: RunConfig, K):
    if cfg.option == "otm":
        return K >= cfg.params.f0
    return cfg.option == "call"


def price_cells(cfg: RunConfig):
    """Prices of every method's vols through the proxy pricer (FDM prices direct)."""
    cells = []
    f0 = cfg.params.f0
    others = tuple(m for m in cfg.methods if m != "fdm")
    vols = smile_cells(replace(cfg, methods=others)) if others else []
    for c in vols:
        spec = OptionSpec(c.K, c.T, _option_is_call(cfg, c.K), cfg.df)
        if c.flag == "error":
            cells.append(Cell(c.method, c.K, c.T, math.nan, "error"))
        elif not c.value > 0:
            cells.append(Cell(c.method, c.K, c.T, math.nan, "invalid"))
        else:
            price = cev_price(f0, spec, c.value, cfg.proxy.beta0)
            cells.append(Cell(c.method, c.K, c.T, price, c.flag))
    if "fdm" in cfg.methods:
        for T in cfg.maturities:
            sol = _fdm_solution(cfg, T)
            for n, K in enumerate(cfg.strikes):
                cells.append(Cell("fdm", K, T, sol.price(n, _option_is_call(cfg, K))))
    return sorted(cells, key=Cell.sort_key)


def compare_cells(cfg: RunConfig):
    """Relative errors against the reference method plus per-(method, T) maxima."""
    methods = tuple(dict.fromkeys(cfg.methods + (cfg.reference,)))
    vols = smile_cells(replace(cfg, methods=methods))
    ref = {(c.K, c.T): c for c in vols if c.method == cfg.reference}
    rows, summary = [], []
    for c in vols:
        if c.method == cfg.reference and cfg.reference not in cfg.methods:
            continue
        r = ref[(c.K, c.T)]
        if c.flag == "error" or r.flag == "error":
            rows.append(Cell(c.method, c.K, c.T, math.nan, "error"))
            continue
        rows.append(Cell(c.method, c.K, c.T, c.value / r.value - 1.0, c.flag))
    for method in cfg.methods:
        for T in cfg.maturities:
            errs = [abs(c.value) for c in rows
                    if c.method == method and c.T == T and math.isfinite(c.value)]
            summary.append(Cell(method, math.nan, T, max(errs) if errs else math.nan,
                                "max-abs"))
    return sorted(rows, key=Cell.sort_key), sorted(summary, key=Cell.sort_key), vols


def convergence_cells(cfg: RunConfig):
    base = cfg.fdm
    rows, summary = [], []
    params = cfg.params if cfg.fdm_mean_reversion else cfg.sabr
    for T in cfg.maturities:
        rep = convergence_report(params, np.array(cfg.strikes), T, base)
        for n, K in enumerate(cfg.strikes):
            rows.append(Cell("fdm-space-order", K, T, float(rep.space_order[n])))
            rows.append(Cell("fdm-time-order", K, T, float(rep.time_order[n])))
            rows.append(Cell("fdm-extrapolated", K, T, float(rep.extrapolated[n])))
            rows.append(Cell("fdm-error-estimate", K, T, float(rep.error_estimate[n])))
        summary.append(Cell("fdm-space-order", math.nan, T, rep.space_order_max, "max-norm"))
        summary.append(Cell("fdm-time-order", math.nan, T, rep.time_order_max, "max-norm"))
    return sorted(rows, key=Cell.sort_key), sorted(summary, key=Cell.sort_key)


# ---------------------------------------------------------------------------
# output


def _num(x):
    return "nan" if math.isnan(x) else format(float(x), ".17g")


def _summary_key(x):
    return "*" if math.isnan(x) else _num(x)


def render(cells, summary=()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for c in cells:
        w.writerow((c.method, _num(c.K), _num(c.T), _num(c.value), c.flag))
    for c in summary:
        w.writerow((c.method, _summary_key(c.K), _num(c.T), _num(c.value), c.flag))
    return buf.getvalue()


def write_figure(path, cfg: RunConfig, vols, errors):
    """Smiles (left) and relative errors (right), one row per maturity."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    nT = len(cfg.maturities)
    fig, axes = plt.subplots(nT, 2, figsize=(10, 3.6 * nT), squeeze=False)
    for row, T in zip(axes, cfg.maturities):
        for method in dict.fromkeys(c.method for c in vols):
            pts = [(c.K, c.value) for c in vols if c.method == method and c.T == T]
            style = "k-" if method == cfg.reference else "-"
            row[0].plot(*zip(*pts), style, label=method, lw=1.2)
        for method in cfg.methods:
            if method == cfg.reference:
                continue
            pts = [(c.K, c.value) for c in errors if c.method == method and c.T == T]
            row[1].plot(*zip(*pts), "-", label=method, lw=1.2)
        row[1].axhline(0.0, color="0.6", lw=0.8)
        row[0].set_title(f"T = {T:g}")
        row[0].set_xlabel("strike")
        row[1].set_xlabel("strike")
        row[0].set_ylabel("implied vol")
        row[1].set_ylabel(f"relative error vs {cfg.reference}")
        row[0].legend(frameon=False, fontsize=8)
        row[1].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# entry point


def _parser():
    ap = argparse.ArgumentParser(
        prog="sabr-heatkernel",
        description="SABR implied vols by heat-kernel expansion, with FDM and HKLW comparisons.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in [("smile", "implied vols per method"),
                       ("compare", "relative errors against a reference method"),
                       ("price", "option prices through the proxy pricer"),
                       ("fdm-convergence", "grid-doubling study of the FDM solver")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output CSV (default: config output, else stdout)")
        p.add_argument("--seed-free", action="store_true",
                       help="accepted for scripting; no command uses randomness")
        p.add_argument("--methods", help="comma-separated method set overriding the config")
        p.add_argument("--maturities", help="comma-separated maturities overriding the config")
        p.add_argument("--proxy", help="black, bachelier or cev:<beta0>")
        if name == "compare":
            p.add_argument("--reference", help="reference method (default fdm)")
            p.add_argument("--figure", help="also write a PNG of smiles and errors")
    return ap


def _apply_overrides(raw: dict, args, ap):
    if args.methods is not None:
        methods = [m for m in args.methods.split(",") if m]
        if not methods:
            ap.error("--methods must name at least one method")
        raw["methods"] = methods
    try:
        if args.maturities is not None:
            raw["maturities"] = [float(t) for t in args.maturities.split(",") if t]
        if args.proxy is not None:
            name, _, b = args.proxy.partition(":")
            raw["proxy"] = {"name": name, "beta0": float(b)} if b else {"name": name}
    except ValueError as exc:
        ap.error(str(exc))
    if getattr(args, "reference", None):
        raw["reference"] = args.reference


def main(argv=None) -> int:
    ap = _parser()
    args = ap.parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return CONFIG_ERROR
    except json.JSONDecodeError as exc:
        print(f"error: {args.config}: invalid JSON ({exc})", file=sys.stderr)
        return CONFIG_ERROR
    if isinstance(raw, dict) and "methods" in raw and not raw["methods"]:
        ap.error("the method set is empty")
    if isinstance(raw, dict):
        _apply_overrides(raw, args, ap)
    try:
        cfg = parse_config(raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR

    summary = ()
    if args.command == "smile":
        cells = smile_cells(cfg)
    elif args.command == "price":
        cells = price_cells(cfg)
    elif args.command == "compare":
        cells, summary, vols = compare_cells(cfg)
        if args.figure:
            write_figure(args.figure, cfg, vols, cells)
    else:
        cells, summary = convergence_cells(cfg)

    text = render(cells, summary)
    out = args.out or cfg.output
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return CELL_ERROR if any(c.flag == "error" for c in cells) else OK


if __name__ == "__main__":
    sys.exit(main())
