import json
from importlib import resources

import pytest

from dispersive_lab.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, ConfigError, main, parse_config

CONFIGS = resources.files("dispersive_lab") / "configs"


def _bundled(name):
    return (CONFIGS / name).read_text()


def _write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.mark.parametrize("name", ["nls_mass.toml", "kleingordon_block.toml", "canonical_random.toml"])
def test_bundled_configs_parse(name):
    cfg = parse_config(_bundled(name), name)
    assert cfg.grid["n_points"] >= 8


def test_nls_mass_run(tmp_path, capsys):
    cfg = _write(tmp_path, _bundled("nls_mass.toml"))
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--output", str(out)]) == EXIT_OK
    rows = (out / "mass.csv").read_text().splitlines()[1:]
    drifts = [float(r.split(",")[0]) for r in rows]
    assert drifts and max(drifts) < 1e-8
    report = json.loads((out / "report.json").read_text())
    assert report["header"]["exponents"]["s_c"] == "-1/2"
    assert "completed" in capsys.readouterr().out


def test_run_is_deterministic(tmp_path):
    cfg = _write(tmp_path, _bundled("canonical_random.toml"))
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        main(["run", "--config", cfg, "--output", str(out), "--seed", "7"])
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    assert any(name.endswith(".csv") for name in outs[0])


def test_gamma_minus_one_rejected(tmp_path, capsys):
    text = _bundled("nls_mass.toml").replace('dispersion = "nls"', 'dispersion = "canonical"\ngamma = -1.0')
    cfg = _write(tmp_path, text)
    assert main(["run", "--config", cfg]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "gamma = -1" in err and "exp.toml:5" in err


def test_block_beyond_nyquist_rejected(tmp_path, capsys):
    text = _bundled("kleingordon_block.toml")
    import re
    text = re.sub(r"block = \[[^\]]*\]", "block = [1, 40]", text)
    cfg = _write(tmp_path, text)
    assert main(["run", "--config", cfg]) == EXIT_CONFIG
    assert "Nyquist" in capsys.readouterr().err


def test_unknown_key_reported_with_line(tmp_path):
    text = _bundled("nls_mass.toml").replace("dt = 0.05", "dt = 0.05\nstep_size = 1")
    with pytest.raises(ConfigError, match=r"exp.toml:\d+: \[run\] step_size: unknown key"):
        parse_config(text, "exp.toml")


def test_carrier_beyond_nyquist(tmp_path):
    text = _bundled("nls_mass.toml").replace("frequency = 0.5", "frequency = 1000.0")
    with pytest.raises(ConfigError, match="Nyquist"):
        parse_config(text, "exp.toml")


def test_missing_config_file(capsys):
    assert main(["run", "--config", "/nonexistent/x.toml"]) == EXIT_CONFIG


def test_wrap_guard_exit_code(tmp_path):
    text = _bundled("nls_mass.toml").replace("frequency = 0.5", "frequency = 2.0").replace("t_end = 5.0", "t_end = 40.0")
    cfg = _write(tmp_path, text)
    assert main(["run", "--config", cfg, "--output", str(tmp_path / "o")]) == EXIT_ABORT


def test_exponents_table(capsys):
    assert main(["exponents", "--gamma", "0", "--delta", "0"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "s_c" in out and "-1/2" in out and "s_lwp" in out


def test_exponents_json(capsys):
    assert main(["exponents", "--gamma", "-3", "--delta", "0", "--json"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["exponents"]["s_c"] == "1" and data["exponents"]["s_lwp"] == "1/2"


def test_exponents_reject_threshold(capsys):
    assert main(["exponents", "--gamma", "-1", "--delta", "0"]) == EXIT_CONFIG


def test_division_example(tmp_path, capsys):
    assert main(["division", "--model", "nls", "--block", "+,12", "--output", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["residual"] < 1e-8


def test_decay_example(capsys):
    assert main(["decay", "--model", "nls", "--lambda", "8"]) == EXIT_OK


def test_bad_block_syntax():
    with pytest.raises(SystemExit):
        main(["division", "--block", "12"])
