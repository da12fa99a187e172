import subprocess
import sys

import pytest

from sysid.cli import main
from sysid.harness import ExperimentConfig


def test_config_defaults(capsys, tmp_path):
    assert main(["config", "--defaults"]) == 0
    text = capsys.readouterr().out
    assert "[experiment]" in text and "delta0 = 0.3" in text
    path = tmp_path / "defaults.ini"
    path.write_text(text)
    assert ExperimentConfig.from_file(path) == ExperimentConfig()


def test_run_plot_verdict(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\ncase = linear\nseeds = 2\niterations = 8\n")
    assert main(["run", "--config", str(cfg), "--case", "henon", "--out", str(out)]) == 0
    assert "henon: 16 records" in capsys.readouterr().out
    for name in ("records.csv", "summary.csv", "meta.json", "logdet.svg"):
        assert (out / name).exists()

    figs = tmp_path / "figs"
    assert main(["plot", "--in", str(out), "--out", str(figs), "--seed", "1"]) == 0
    assert (figs / "trajectory.svg").exists() and (figs / "summary.csv").exists()
    capsys.readouterr()

    assert main(["verdict", "--in", str(out)]) == 0
    captured = capsys.readouterr()
    assert captured.out.strip() in ("adequate", "inadequate")
    assert "warm-up" in captured.err


def test_verdict_unavailable(tmp_path, capsys):
    out = tmp_path / "short"
    assert main(["run", "--case", "linear", "--seeds", "1", "--iterations", "3", "--no-plots",
                 "--warmup", "5", "--out", str(out)]) == 0
    assert not (out / "logdet.svg").exists()
    capsys.readouterr()
    assert main(["verdict", "--in", str(out)]) == 2
    err = capsys.readouterr().err
    assert "unavailable" in err and "warm-up" not in err


def test_bad_case_rejected():
    with pytest.raises(SystemExit):
        main(["run", "--case", "pendulum", "--out", "x"])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sysid", "config", "--defaults"], capture_output=True, text=True)
    assert proc.returncode == 0 and "rng_seed" in proc.stdout
