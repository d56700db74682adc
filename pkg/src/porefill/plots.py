"""Gnuplot scripts for the pressure-saturation overlay and the scaling curve."""

from pathlib import Path

from .errors import MissingArtifact

LBM_CURVE = "lbm_curve_pa.csv"
BENCH_CSV = "bench.csv"


def _pnm_title(name):
    # ps_s0.03_t60.csv -> "PNM sigma=0.03 theta=60"
    s, t = name[len("ps_s"):-len(".csv")].split("_t")
    return f"PNM sigma={s} theta={t}"


def emit_plots(directory):
    """Write ``ps_overlay.gp`` (and ``scaling.gp`` if ``bench.csv`` exists).

    Returns the list of scripts written.

    Raises
    ------
    MissingArtifact
        If the directory holds no curve file at all.
    """
    d = Path(directory)
    pnm = sorted(p.name for p in d.glob("ps_s*_t*.csv"))
    has_lbm = (d / LBM_CURVE).exists()
    if not pnm and not has_lbm:
        raise MissingArtifact(f"no pressure-saturation curves in {d}")
    plots = []
    if has_lbm:
        plots.append(f"'{LBM_CURVE}' every ::1 using 1:2 with points pt 7 title 'LBM'")
    for name in pnm:
        plots.append(f"'{name}' every ::1 using 1:2 with steps title '{_pnm_title(name)}'")
    lines = [
        "# pressure-saturation overlay: LBM points and PNM staircases",
        "set datafile separator ','",
        "set xlabel 'capillary pressure [Pa]'",
        "set ylabel 'electrolyte saturation [-]'",
        "set yrange [0:1.05]",
        "set key left top",
        "plot " + ", \\\n     ".join(plots),
    ]
    written = [d / "ps_overlay.gp"]
    written[0].write_text("\n".join(lines) + "\n", encoding="utf-8")

    if (d / BENCH_CSV).exists():
        scaling = [
            "# strong scaling of the LBM stepper",
            "set datafile separator ','",
            "set xlabel 'workers'",
            "set ylabel 'speedup vs. 1 worker'",
            "set logscale xy 2",
            "set key left top",
            f"plot '{BENCH_CSV}' every ::1 using 1:8 with linespoints title 'measured', \\",
            f"     '{BENCH_CSV}' every ::1 using 1:1 with lines dashtype 2 title 'ideal'",
        ]
        written.append(d / "scaling.gp")
        written[1].write_text("\n".join(scaling) + "\n", encoding="utf-8")
    return written
