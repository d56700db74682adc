import pytest

from porefill.curves import PressureSaturationCurve, write_curve
from porefill.errors import MissingArtifact
from porefill.plots import emit_plots


def populate(d):
    write_curve(PressureSaturationCurve([1.0, 2.0], [0.2, 0.6]), d / "lbm_curve_pa.csv")
    for t in (30, 60):
        write_curve(PressureSaturationCurve([1.0, 3.0], [0.3, 0.9]), d / f"ps_s0.03_t{t}.csv")


def test_overlay_references_three_files(tmp_path):
    populate(tmp_path)
    written = emit_plots(tmp_path)
    assert [p.name for p in written] == ["ps_overlay.gp"]
    text = (tmp_path / "ps_overlay.gp").read_text()
    refs = {n for n in ("lbm_curve_pa.csv", "ps_s0.03_t30.csv", "ps_s0.03_t60.csv") if f"'{n}'" in text}
    assert len(refs) == 3 and text.count(".csv'") == 3


def test_scaling_script(tmp_path):
    populate(tmp_path)
    (tmp_path / "bench.csv").write_text("workers\n1\n")
    assert [p.name for p in emit_plots(tmp_path)] == ["ps_overlay.gp", "scaling.gp"]
    assert "'bench.csv'" in (tmp_path / "scaling.gp").read_text()


def test_empty_dir(tmp_path):
    with pytest.raises(MissingArtifact):
        emit_plots(tmp_path)


def test_byte_identical(tmp_path):
    populate(tmp_path)
    emit_plots(tmp_path)
    first = (tmp_path / "ps_overlay.gp").read_bytes()
    emit_plots(tmp_path)
    assert (tmp_path / "ps_overlay.gp").read_bytes() == first
