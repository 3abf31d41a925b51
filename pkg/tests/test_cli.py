import subprocess
import sys
from importlib import resources

import pytest

from mfglab.cli import SUBCOMMANDS, config_to_text, main, parse_config_text, read_manifest
from mfglab.errors import ConfigError
from mfglab.experiments import default_config

FAST = ["--N-list", "8,16,32,64", "--replications", "200", "--n-steps", "20", "--chunk-size", "50"]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.ini"}


@pytest.mark.parametrize("argv,expected", [
    (["rate", "--N", "100", "--M", "1", "--k", "6", "--p", "2"], "0.14642"),
    (["rate", "--N", "10000", "--M", "6", "--k", "8"], "0.047416"),
    (["rate", "--N", "1", "--M", "1", "--k", "8"], "2"),
])
def test_rate_subcommand(argv, expected, capsys):
    assert main(argv) == 0
    assert capsys.readouterr().out.strip() == expected


def test_rate_errors_are_config_errors(capsys):
    assert main(["rate", "--N", "10", "--M", "4", "--k", "4", "--p", "2"]) == 2
    assert "UndefinedRegime" in capsys.readouterr().err
    assert main(["rate", "--N", "10", "--M", "1", "--k", "1"]) == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "mfglab", "rate", "--N", "100", "--M", "1", "--k", "6"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "0.14642"


def test_bundled_configs_equal_defaults():
    for command, study in SUBCOMMANDS.items():
        text = resources.files("mfglab").joinpath("configs", f"{command}.ini").read_text()
        assert parse_config_text(text, study) == default_config(study)


def test_config_text_round_trip():
    cfg = default_config("concentration", seed=9, thresholds=(0.1, 0.7))
    assert parse_config_text(config_to_text(cfg), "concentration") == cfg
    fb = default_config("fbsde")
    assert parse_config_text(config_to_text(fb), "fbsde") == fb


def test_strict_config_parsing():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("[study]\nreplicatons = 5\n", "nash_gap")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("[spec]\nAbarr = 1\n", "nash_gap")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text("[solver]\ntol = 1\n", "nash_gap")
    with pytest.raises(ConfigError):
        parse_config_text("[study]\nstudy = offdiag\n", "nash_gap")
    with pytest.raises(ConfigError):
        parse_config_text("[study]\nreplications = many\n", "nash_gap")


def test_bundle_section_merges_parameters():
    cfg = parse_config_text("[bundle]\nT = 0.4\n", "fbsde")
    assert dict(cfg.bundle_params) == {"T": 0.4, "mu0_std": 0.0}
    other = parse_config_text("[bundle]\nname = tanh-flocking\nkappa = 0.2\n", "fbsde")
    assert other.bundle == "tanh-flocking" and dict(other.bundle_params) == {"kappa": 0.2}


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[study]\nN_lst = 8, 16\n")
    assert main(["mfg-gap", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert main(["mfg-gap", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["mfg-gap", "--set", "spec.gamma=1"]) == 2


def test_solver_error_exits_3(tmp_path):
    argv = ["fbsde", "--set", "bundle.T=40", "--n-steps", "40", "--N-list", "10", "--picard-max-iter", "60",
            "--out-dir", str(tmp_path)]
    assert main(argv) == 3


def test_check_mode_exit_codes(tmp_path, capsys):
    # the small-N default run sits outside the rate window
    assert main(["mfg-gap", *FAST, "--check", "--out-dir", str(tmp_path / "a")]) == 4
    assert "acceptance check failed" in capsys.readouterr().out
    zero = ["price-impact", *FAST, "--set", "bundle.h1_slope=0", "--check", "--out-dir", str(tmp_path / "b")]
    assert main(zero) == 0
    assert "zero impact: gap at floor: pass" in capsys.readouterr().out


def test_print_config(capsys):
    assert main(["offdiag", "--seed", "5", "--print-config"]) == 0
    out = capsys.readouterr().out
    assert parse_config_text(out, "offdiag") == default_config("offdiag", seed=5)


def test_manifest_replay_is_byte_identical_and_thread_invariant(tmp_path):
    first = tmp_path / "first"
    assert main(["coop-gap", *FAST, "--seed", "3", "--out-dir", str(first)]) == 0
    manifest = first / "manifest.ini"
    command, cfg = read_manifest(manifest)
    assert command == "coop-gap" and cfg.seed == 3 and cfg.N_list == (8, 16, 32, 64)
    text = manifest.read_text()
    for key in ("config_hash", "wall_clock_seconds", "numpy", "cooperative_gap.gap.csv"):
        assert key in text
    second = tmp_path / "second"
    assert main(["replay", str(manifest), "--threads", "3", "--out-dir", str(second)]) == 0
    assert _files(first) == _files(second)


def test_replay_rejects_bad_manifest(tmp_path):
    assert main(["replay", str(tmp_path / "none.ini"), "--out-dir", str(tmp_path)]) == 2
    bogus = tmp_path / "m.ini"
    bogus.write_text("[study]\nreplications = 3\n")
    assert main(["replay", str(bogus), "--out-dir", str(tmp_path)]) == 2
