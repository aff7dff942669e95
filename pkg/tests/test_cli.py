import csv
import json
import math
import subprocess
import sys

import pytest

from sabr_heatkernel.cli import (
    CELL_ERROR,
    CONFIG_ERROR,
    HEADER,
    OK,
    ConfigError,
    load_config,
    main,
    parse_config,
)

BASE = {
    "params": {"f0": 4.0, "alpha": 0.3, "beta": 0.7, "nu": 0.4, "rho": -0.5},
    "strikes": {"min": 3.0, "max": 5.0, "count": 5},
    "maturities": [0.5],
    "methods": ["order1", "order2", "hklw"],
    "fdm": {"nF": 60, "nV": 20, "nT": 10},
}


@pytest.fixture
def write_config(tmp_path):
    def write(**changes):
        raw = json.loads(json.dumps(BASE))
        raw.update(changes)
        path = tmp_path / "run.json"
        path.write_text(json.dumps(raw))
        return str(path)

    return write


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({k: BASE[k] for k in ("params", "strikes", "maturities")})
        assert cfg.methods == ("order2",)
        assert cfg.proxy.name == "black" and cfg.reference == "fdm"
        assert cfg.strikes == pytest.approx((3.0, 3.5, 4.0, 4.5, 5.0))

    def test_geometric_and_list_strikes(self):
        cfg = parse_config(dict(BASE, strikes={"min": 2, "max": 8, "count": 3,
                                               "spacing": "geometric"}))
        assert cfg.strikes == pytest.approx((2.0, 4.0, 8.0))
        assert parse_config(dict(BASE, strikes=[4, 5])).strikes == (4.0, 5.0)

    def test_mean_reversion_block(self):
        cfg = parse_config(dict(BASE, mean_reversion={"kappa": 0.5, "vbar": 0.3}))
        assert cfg.params.kappa == 0.5 and cfg.sabr.kappa == 0.0

    def test_string_method(self):
        assert parse_config(dict(BASE, methods="hklw")).methods == ("hklw",)

    @pytest.mark.parametrize("change", [
        {"methods": ["order3"]},
        {"reference": "nope"},
        {"strikes": [4.0, -1.0]},
        {"strikes": {"min": 1, "max": 2}},
        {"strikes": {"min": 1, "max": 2, "count": 3, "spacing": "log"}},
        {"maturities": []},
        {"option": "straddle"},
        {"df": 0.0},
        {"proxy": {"name": "cev"}},
        {"proxy": "student"},
        {"fdm": {"nX": 10}},
        {"params": {"f0": 4.0, "alpha": 0.3, "beta": 1.5, "nu": 0.4, "rho": -0.5}},
        {"params": {"f0": 4.0, "alpha": 0.3}},
        {"methods": ["mean-reverting"]},
    ])
    def test_rejects(self, change):
        with pytest.raises(ConfigError):
            parse_config(dict(BASE, **change))

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="maturities"):
            parse_config({"params": BASE["params"], "strikes": [4.0]})
        with pytest.raises(ConfigError):
            parse_config([1, 2])

    def test_load_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(bad))
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "missing.json"))


class TestCommands:
    def test_smile_rows(self, write_config, tmp_path):
        out = tmp_path / "smile.csv"
        assert main(["smile", "--config", write_config(), "--out", str(out)]) == OK
        rows = _rows(out)
        assert tuple(rows[0]) == HEADER
        assert len(rows) == 3 * 5
        assert all(r["flag"] == "ok" and float(r["value"]) > 0 for r in rows)
        assert [r["method"] for r in rows] == sorted(r["method"] for r in rows)

    def test_repeat_runs_are_byte_identical(self, write_config, tmp_path):
        cfg = write_config(methods=["order2", "fdm"])
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["compare", "--config", cfg, "--out", str(a)])
        main(["compare", "--config", cfg, "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_compare_self_reference(self, write_config, tmp_path):
        out = tmp_path / "cmp.csv"
        cfg = write_config(methods=["order2", "hklw"], reference="order2")
        assert main(["compare", "--config", cfg, "--out", str(out)]) == OK
        rows = _rows(out)
        own = [float(r["value"]) for r in rows if r["method"] == "order2" and r["K"] != "*"]
        assert own == [0.0] * 5
        summary = [r for r in rows if r["K"] == "*"]
        assert {r["method"] for r in summary} == {"order2", "hklw"}
        assert all(r["flag"] == "max-abs" for r in summary)

    def test_compare_against_fdm_not_listed(self, write_config, tmp_path):
        out = tmp_path / "cmp.csv"
        cfg = write_config(methods=["order2"])
        main(["compare", "--config", cfg, "--out", str(out)])
        rows = [r for r in _rows(out) if r["K"] != "*"]
        assert {r["method"] for r in rows} == {"order2"}
        assert max(abs(float(r["value"])) for r in rows) < 2e-2

    def test_price_round_trip(self, write_config, tmp_path):
        from sabr_heatkernel.pricers import OptionSpec, black_implied

        vol_out, px_out = tmp_path / "v.csv", tmp_path / "p.csv"
        cfg = write_config(methods=["order2"], option="otm")
        main(["smile", "--config", cfg, "--out", str(vol_out)])
        main(["price", "--config", cfg, "--out", str(px_out)])
        for v, p in zip(_rows(vol_out), _rows(px_out)):
            k, t = float(p["K"]), float(p["T"])
            spec = OptionSpec(k, t, k >= 4.0)
            assert black_implied(float(p["value"]), 4.0, spec) == pytest.approx(
                float(v["value"]), rel=1e-9)

    def test_price_discount_factor(self, write_config, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["price", "--config", write_config(methods=["fdm", "order2"]), "--out", str(a)])
        main(["price", "--config", write_config(methods=["fdm", "order2"], df=0.5),
              "--out", str(b)])
        for x, y in zip(_rows(a), _rows(b)):
            assert float(y["value"]) == pytest.approx(0.5 * float(x["value"]), rel=1e-12)

    def test_single_atm_strike(self, write_config, tmp_path):
        out = tmp_path / "atm.csv"
        assert main(["smile", "--config", write_config(strikes=[4.0]), "--out", str(out)]) == OK
        vals = {r["method"]: float(r["value"]) for r in _rows(out)}
        assert vals["order2"] == pytest.approx(vals["hklw"], rel=1e-3)

    def test_overrides(self, write_config, tmp_path):
        out = tmp_path / "o.csv"
        main(["smile", "--config", write_config(), "--methods", "order2",
              "--maturities", "0.25,1", "--proxy", "cev:0.5", "--out", str(out)])
        rows = _rows(out)
        assert {r["method"] for r in rows} == {"order2"}
        assert sorted({float(r["T"]) for r in rows}) == [0.25, 1.0]
        # a CEV(0.5) vol is near the Black one times F**0.5
        atm = [float(r["value"]) for r in rows if float(r["K"]) == 4.0]
        assert atm[0] == pytest.approx(0.3 * 4.0**0.2, rel=2e-2)

    def test_invalid_cells_are_flagged(self, write_config, tmp_path):
        out = tmp_path / "inv.csv"
        assert main(["smile", "--config", write_config(maturities=[8.0]),
                     "--out", str(out)]) == OK
        flags = {r["method"]: r["flag"] for r in _rows(out)}
        assert flags["order2"] == "invalid" and flags["hklw"] == "ok"

    def test_fdm_convergence(self, write_config, tmp_path):
        out = tmp_path / "conv.csv"
        cfg = write_config(strikes=[3.5, 4.5], fdm={"nF": 30, "nV": 15, "nT": 8})
        assert main(["fdm-convergence", "--config", cfg, "--out", str(out)]) == OK
        rows = _rows(out)
        methods = {r["method"] for r in rows}
        assert {"fdm-space-order", "fdm-time-order", "fdm-extrapolated",
                "fdm-error-estimate"} <= methods
        norm = [r for r in rows if r["flag"] == "max-norm" and r["method"] == "fdm-space-order"]
        assert 1.5 < float(norm[0]["value"]) < 2.6

    def test_figure(self, write_config, tmp_path):
        pytest.importorskip("matplotlib")
        png = tmp_path / "fig.png"
        cfg = write_config(methods=["order2", "hklw"], reference="order2")
        main(["compare", "--config", cfg, "--out", str(tmp_path / "c.csv"),
              "--figure", str(png)])
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_stdout(self, write_config, capsys):
        main(["smile", "--config", write_config(methods=["hklw"])])
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == ",".join(HEADER) and len(lines) == 6

    def test_cell_error_exit(self, write_config, tmp_path, monkeypatch):
        from sabr_heatkernel import cli

        def boom(*args, **kw):
            raise ValueError("no solution")

        monkeypatch.setattr(cli, "hklw_baseline", boom)
        out = tmp_path / "e.csv"
        with pytest.warns(RuntimeWarning):
            code = main(["smile", "--config", write_config(methods=["hklw"]), "--out", str(out)])
        assert code == CELL_ERROR
        assert all(r["flag"] == "error" and r["value"] == "nan" for r in _rows(out))


class TestExitCodes:
    def test_empty_method_override(self, write_config):
        with pytest.raises(SystemExit) as exc:
            main(["smile", "--config", write_config(), "--methods", ","])
        assert exc.value.code == 2

    def test_empty_method_list(self, write_config):
        with pytest.raises(SystemExit) as exc:
            main(["smile", "--config", write_config(methods=[])])
        assert exc.value.code == 2

    def test_bad_maturity_override(self, write_config):
        with pytest.raises(SystemExit) as exc:
            main(["smile", "--config", write_config(), "--maturities", "soon"])
        assert exc.value.code == 2

    def test_config_errors(self, write_config, tmp_path, capsys):
        assert main(["smile", "--config", write_config(reference="nope")]) == CONFIG_ERROR
        assert main(["smile", "--config", str(tmp_path / "none.json")]) == CONFIG_ERROR
        bad = tmp_path / "bad.json"
        bad.write_text("[")
        assert main(["smile", "--config", str(bad)]) == CONFIG_ERROR
        assert "error:" in capsys.readouterr().err

    def test_console_entry_point(self, write_config):
        proc = subprocess.run([sys.executable, "-m", "sabr_heatkernel.cli", "smile",
                               "--config", write_config(methods=["hklw"])],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0
        assert proc.stdout.startswith("method,K,T,value,flag\n")
        assert not math.isnan(float(proc.stdout.splitlines()[1].split(",")[3]))
