import json
import math

import numpy as np
import pytest

from magres.cli import (ConfigError, Grid, dhva_fft, fold_frequency, main, parse_scenario, point_state,
                        run_scenario, write_csv)

LANDAU = """\
[scenario]
kind = "landau-limit"
name = "landau-small"
seed = 3
output = "landau_limit.csv"

[potential]
dimension = 2
offset = 1.0
[potential.coefficients]
"2,0" = 0.5
"0,2" = 0.5

[gauge]
kind = "symmetric"
field = 1.0

[state]
mu = 2.0
kappa = 0.0
beta_exponent = 0.6

[grid]
variable = "hbar"
values = [0.05, 0.02]
"""


@pytest.fixture()
def landau_cfg(tmp_path):
    p = tmp_path / "landau.toml"
    p.write_text(LANDAU)
    return p


def test_parse_and_point_state():
    sc = parse_scenario(LANDAU)
    assert sc.kind == "landau-limit" and sc.seed == 3 and sc.grid.values == (0.05, 0.02)
    st = point_state(sc, 0.02)
    assert st.beta == pytest.approx(0.02 ** -0.6)
    assert parse_scenario(LANDAU, seed=11).seed == 11


def test_validate_ok(landau_cfg, capsys):
    assert main(["validate", str(landau_cfg)]) == 0
    assert "landau-limit" in capsys.readouterr().out


def test_missing_potential_is_line_anchored(tmp_path, capsys):
    text = LANDAU.split("[potential]")[0] + LANDAU[LANDAU.index("[gauge]"):]
    p = tmp_path / "bad.toml"
    p.write_text(text)
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{p}:1:" in err and "[potential]" in err


def test_bad_kind_anchored_to_its_line():
    with pytest.raises(ConfigError) as exc:
        parse_scenario(LANDAU.replace('"landau-limit"', '"nope"'), "x.toml")
    assert exc.value.line == 2


def test_unreadable_config_exit_code(tmp_path):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2


def test_grid_spacing():
    def anchor(msg, needle=None):
        return ConfigError(msg)

    g = Grid.from_dict({"variable": "hbar", "min": 0.01, "max": 1.0, "count": 3, "spacing": "log"}, anchor)
    assert g.values == pytest.approx((0.01, 0.1, 1.0))
    with pytest.raises(ConfigError):
        Grid.from_dict({"variable": "hbar", "min": 0.01}, anchor)
    with pytest.raises(ConfigError):
        Grid.from_dict({"variable": "temperature", "values": [1]}, anchor)


def test_run_landau_and_rerun_byte_identical(landau_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(landau_cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(landau_cfg), "--out", str(b), "--workers", "2"]) == 0
    body_a = (a / "landau_limit.csv").read_bytes()
    assert body_a == (b / "landau_limit.csv").read_bytes()
    lines = body_a.decode().split("\r\n")
    header = lines[0].split(",")
    assert header[0] == "seed" and "chi" in header and "chi_L" in header
    row = dict(zip(header, lines[2].split(",")))
    assert float(row["chi"]) == pytest.approx(1 / 12, rel=1e-5)
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 3 and len(man["config_sha256"]) == 64 and len(man["points"]) == 2


def test_workers_from_environment(landau_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("MAGRES_WORKERS", "2")
    assert main(["run", str(landau_cfg), "--out", str(tmp_path / "c")]) == 0
    assert json.loads((tmp_path / "c" / "manifest.json").read_text())["workers"] == 2


def test_run_scenario_thermo_identities(tmp_path):
    text = LANDAU.replace('"landau-limit"', '"thermo-sweep"').replace("beta_exponent = 0.6", "beta = 5.0\nhbar = 0.1")
    text = text.replace('variable = "hbar"\nvalues = [0.05, 0.02]', 'variable = "kappa"\nvalues = [0.0, 0.5]')
    man = run_scenario(parse_scenario(text), tmp_path)
    lines = (tmp_path / man["outputs"][0]).read_text().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
    assert float(rows[0]["M_exact"]) == pytest.approx(0.0, abs=1e-12)  # kappa = 0: paired angular momenta
    assert float(rows[1]["N"]) > 0


def test_dhva_single_tone():
    # cos(S/hbar) with S = 2 pi 3 sampled well above Nyquist
    x = np.linspace(100.0, 120.0, 512)
    t = dhva_fft(np.cos(2 * math.pi * 3.0 * x), x)
    k = int(np.argmax(t.amplitude))
    assert abs(t.frequency[k] - 3.0) <= t.resolution
    assert t.amplitude[k] == pytest.approx(1.0, rel=0.05)
    assert np.all(t.amplitude[np.arange(len(t)) != k] < 1e-3)


def test_dhva_undersampled_tone_folds():
    x = np.linspace(100.0, 300.0, 512)
    t = dhva_fft(np.cos(2 * math.pi * 3.0 * x), x)
    k = int(np.argmax(t.amplitude))
    assert abs(t.frequency[k] - fold_frequency(3.0, t.nyquist)) <= t.resolution


def test_dhva_zero_signal_and_bad_grid():
    x = np.linspace(100.0, 300.0, 512)
    assert len(dhva_fft(np.zeros(512), x)) == 0
    with pytest.raises(ValueError):
        dhva_fft(np.ones(512), np.sort(np.random.default_rng(0).uniform(100, 300, 512)))


def test_fold_frequency():
    assert fold_frequency(3.0, 1.28) == pytest.approx(3.0 - 2 * 1.28)
    assert fold_frequency(0.5, 1.28) == pytest.approx(0.5)


def test_write_csv_crlf_and_seed(tmp_path):
    p = write_csv(tmp_path / "x.csv", [{"a": 0.1, "b": "s"}, {"a": 1.0 / 3.0}], seed=9)
    assert p.read_bytes() == b"seed,a,b\r\n9,0.1,s\r\n9,0.3333333333333333,\r\n"


def test_oracle_subcommand(capsys):
    assert main(["oracle"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6
