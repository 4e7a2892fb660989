import json
from pathlib import Path

import pytest

from dpim import __version__
from dpim.cli import EXIT_CONFIG, EXIT_MODEL, EXIT_OK, OUTPUT_ENV, main, monomial_table
from dpim.config import defaults_toml, load_config
from dpim.polyalgebra import TruncationRule

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

QUICK = """
[model]
source = "duffing"
xi = 0.02
h = 1.0

[parametrisation]
order = 3
eps_order = 1

[forcing]
kappa = [0.01]
window = [0.95, 1.05]

[continuation]
harmonics = 3
"""


@pytest.fixture
def quick(tmp_path):
    path = tmp_path / "quick.toml"
    path.write_text(QUICK)
    return path


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_print_defaults_roundtrip(capsys, tmp_path):
    assert main(["--print-defaults"]) == EXIT_OK
    text = capsys.readouterr().out
    assert text == defaults_toml()
    path = tmp_path / "d.toml"
    path.write_text(text)
    assert load_config(path).to_dict() == load_config(None).to_dict()


def test_unknown_key_is_config_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[forcing]\nkapa = [1.0]\n")
    assert main(["run", str(path)]) == EXIT_CONFIG


def test_bad_value_is_config_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text('[parametrisation]\nstyle = "normal"\n')
    assert main(["run", str(path)]) == EXIT_CONFIG


def test_missing_model_file(tmp_path):
    path = tmp_path / "m.toml"
    path.write_text('[model]\nsource = "file"\npath = "nowhere.model"\n')
    assert main(["spectrum", str(path), "--output", str(tmp_path / "o")]) == EXIT_MODEL


def test_spectrum_only(quick, tmp_path):
    out = tmp_path / "spectrum_only"
    assert main(["spectrum", str(quick), "--output", str(out)]) == EXIT_OK
    assert (out / "spectrum.json").exists()
    assert not (out / "parametrisation.json").exists()


def test_report_monomials(capsys, tmp_path):
    out = tmp_path / "mono"
    assert main(["parametrise", str(CONFIGS / "duffing_31.toml"), "--order", "6", "--eps-order", "3",
                 "--output", str(out), "--report-monomials"]) == EXIT_OK
    assert "22 cells" in capsys.readouterr().out


def test_monomial_table_counts():
    def cells(*args, **kw):
        return len(monomial_table(TruncationRule(*args, **kw), 1)[0])

    assert cells("coupled", 6, 3) == 22
    assert cells("disjoint", 6, 3) == 28
    assert cells("asymptotic", 6, 3, m=3) == 12
    rows, total = monomial_table(TruncationRule("coupled", 6, 3), 2)
    assert total == sum(r[2] for r in rows)
    assert (1, 0, 4) in rows


def test_env_overrides_output(quick, tmp_path, monkeypatch):
    env_dir = tmp_path / "env"
    monkeypatch.setenv(OUTPUT_ENV, str(env_dir))
    assert main(["parametrise", str(quick), "--output", str(tmp_path / "flag")]) == EXIT_OK
    assert (env_dir / "parametrisation.json").exists()
    assert not (tmp_path / "flag").exists()


def test_parametrisation_bit_identical(quick, tmp_path):
    for d in ("a", "b"):
        assert main(["parametrise", str(quick), "--output", str(tmp_path / d)]) == EXIT_OK
    a = (tmp_path / "a" / "parametrisation.json").read_bytes()
    b = (tmp_path / "b" / "parametrisation.json").read_bytes()
    assert a == b


def test_superharmonic_warning(capsys, tmp_path):
    cfg = str(CONFIGS / "duffing_31.toml")
    assert main(["parametrise", cfg, "--eps-order", "1", "--output", str(tmp_path / "w")]) == EXIT_OK
    assert "WARNING" in capsys.readouterr().out
    assert main(["parametrise", cfg, "--output", str(tmp_path / "ok")]) == EXIT_OK
    assert "WARNING" not in capsys.readouterr().out


def test_run_writes_csv_and_plots(quick, tmp_path):
    out = tmp_path / "run"
    text = QUICK + "\n[oracle]\nhbm = true\nharmonics = 3\n"
    quick.write_text(text)
    assert main(["run", str(quick), "--output", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    for name in ("frc_rom_0.csv", "frc_oracle_0.csv", "parametrisation.json"):
        assert (out / name).exists()
    assert any(a.endswith(".png") for a in summary["artifacts"])
    header = (out / "frc_rom_0.csv").read_text().splitlines()[0]
    assert header == "omega,amplitude,stable,fold"


def test_legacy_mode_runs(quick, tmp_path):
    out = tmp_path / "legacy"
    assert main(["frc", str(quick), "--style", "graph", "--eps-order", "0", "--no-plots",
                 "--output", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["parametrisation"]["legacy_forcing"]
