from pathlib import Path

import pytest

from porefill import cli, voxelgrid as vg
from porefill.errors import NotConverged

SMOKE = Path(__file__).parent / "data" / "smoke.ini"


def test_generate_extract_percolate_transport(tmp_path, capsys):
    assert cli.main(["--config", str(SMOKE), "--out", str(tmp_path), "generate"]) == 0
    img = tmp_path / "structure.vxi"
    assert vg.read_vxi(img).shape == (32, 32, 32)
    assert cli.main(["classify", str(img), "--out", str(tmp_path)]) == 0
    assert cli.main(["extract", str(tmp_path / "classified.vxi"), "--out", str(tmp_path)]) == 0
    assert "pore_count=" in capsys.readouterr().out
    assert cli.main(["percolate", str(tmp_path / "pores.csv"), str(tmp_path / "throats.csv"),
                     "--sigma", "0.03", "--theta", "120", "--trapping", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "ps_s0.03_t120.csv").exists()
    assert cli.main(["transport", str(img), "--axis", "y"]) == 0
    assert "tortuosity=" in capsys.readouterr().out
    assert cli.main(["plot", str(tmp_path)]) == 0


def test_calibrate_command(tmp_path):
    lbm = tmp_path / "l.csv"
    pnm = tmp_path / "p.csv"
    lbm.write_text("pressure_pa,saturation\n1,0.2\n2,0.5\n3,0.8\n")
    pnm.write_text("pressure_pa,saturation\n2,0.2\n4,0.5\n6,0.8\n")
    assert cli.main(["calibrate", str(lbm), str(pnm), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "calibration.txt").read_text().startswith("k=0.5")


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text(SMOKE.read_text().replace("thetas = 100, 60", "thetas ="))
    assert cli.main(["workflow", "--config", str(bad)]) == 2
    assert cli.main(["workflow"]) == 2


def test_stage_failure_exit_code(tmp_path):
    assert cli.main(["plot", str(tmp_path)]) == 3
    assert cli.main(["classify", str(tmp_path / "missing.vxi")]) == 3


def test_numeric_failure_exit_code(monkeypatch):
    def boom(args):
        raise NotConverged("did not settle")

    monkeypatch.setattr(cli, "cmd_plot", boom)
    assert cli.main(["plot"]) == 4


def test_bench_command(tmp_path):
    assert cli.main(["bench", "--dims", "12", "--steps", "5", "--workers-list", "1,2",
                     "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "bench.csv").read_text().splitlines()) == 3


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    for name in ("generate", "classify", "extract", "percolate", "fill", "calibrate",
                 "transport", "workflow", "bench", "plot"):
        assert name in out
