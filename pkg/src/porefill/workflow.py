"""End-to-end driver: structure -> network -> one LBM fill -> calibration ->
PNM sweep -> transport feedback.

Every stage writes its outputs into the run directory and records them in
``manifest.json`` together with a hash of its inputs.  A rerun skips any
stage whose input hash is unchanged and whose outputs are still on disk
with the recorded content.
"""

from dataclasses import asdict
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import voxelgrid as vg
from .config import structure_params
from .curves import read_curve, write_curve
from .errors import PorefillError, StageError
from .lbm.calibrate import laplace_test
from .lbm.fill import fill_simulation, phase_image, residual_gas_analysis
from .netextract import extract_network, median_pore_diameter, network_stats, read_network, write_network
from .plots import emit_plots
from .pnmperc import FluidPair, invasion_percolation, percolation_sweep, staircase, sweep_filename
from .transport import append_feedback, entrapment_penalty, feedback_row
from .unitbridge import build_units, calibrate_pnm, convert_curve, write_calibration_report

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _key(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


class _Run:
    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.path = self.out / MANIFEST
        self.previous = {}
        if self.path.exists():
            try:
                self.previous = json.loads(self.path.read_text(encoding="utf-8")).get("stages", {})
            except ValueError:
                self.previous = {}
        self.stages = {}
        self.executed = []

    def hashes(self, names):
        return {n: file_hash(self.out / n) for n in names}

    def stage(self, name, inputs, compute):
        """Run ``compute`` (which returns its output file names) unless cached."""
        key = _key(inputs)
        prev = self.previous.get(name)
        if prev and prev["input_hash"] == key:
            outs = prev["outputs"]
            if all((self.out / f).exists() and file_hash(self.out / f) == h for f, h in outs.items()):
                logger.info("stage %s: up to date", name)
                self.stages[name] = prev
                return outs
        logger.info("stage %s: running", name)
        try:
            names = compute()
        except (PorefillError, ValueError, OSError) as exc:
            raise StageError(name, exc) from exc
        self.stages[name] = {"input_hash": key, "outputs": self.hashes(names)}
        self.executed.append(name)
        self._write()
        return self.stages[name]["outputs"]

    def _write(self):
        artifacts = {}
        for st in self.stages.values():
            artifacts.update(st["outputs"])
        blob = {"stages": self.stages, "artifacts": dict(sorted(artifacts.items()))}
        self.path.write_text(json.dumps(blob, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load_network(out):
    net = read_network(out / "pores.csv", out / "throats.csv")
    net.regions = np.load(out / "regions.npy")
    return net


def pnm_phase_image(structure, net, result):
    """Phase image predicted by a percolation run: invaded pores are
    ELECTROLYTE, all other pore space GAS."""
    invaded = np.zeros(net.n_pores + 1, dtype=bool)
    invaded[np.asarray(result.invaded_pores, dtype=np.int64) + 1] = True
    labels = structure.labels.copy()
    open_ = structure.mask(vg.FLUID_LABELS)
    labels[open_] = np.where(invaded[net.regions[open_]], vg.ELECTROLYTE, vg.GAS)
    return structure.with_labels(labels)


def run_workflow(cfg, out=None, workers=None):
    """Execute (or resume) the full workflow; returns the run directory."""
    run = _Run(out or cfg.out)
    o = run.out
    workers = workers or cfg.workers
    outlet = vg.opposite_face(cfg.inlet)
    sc = cfg.shan_chen

    # structure ----------------------------------------------------------
    gen, perf = structure_params(cfg)
    s_inputs = {"structure": cfg.structure, "gen": gen, "perf": perf}
    if cfg.structure["source"] == "file":
        s_inputs["file"] = file_hash(cfg.structure["path"])

    def do_structure():
        if cfg.structure["source"] == "file":
            img = vg.read_vxi(cfg.structure["path"])
        else:
            img = vg.generate_sphere_pack(**gen)
        if perf:
            img = vg.perforate(img, **perf)
        img = vg.classify_solid(img)
        vg.write_vxi(img, o / "structure.vxi")
        return ["structure.vxi"]

    h = run.stage("structure", s_inputs, do_structure)
    structure = vg.read_vxi(o / "structure.vxi")

    # network ------------------------------------------------------------
    def do_extract():
        net = extract_network(structure, cfg.snow)
        write_network(net, o / "pores.csv", o / "throats.csv")
        np.save(o / "regions.npy", net.regions.astype(np.int32))
        stats = network_stats(net)
        (o / "network_stats.txt").write_text(
            "".join(f"{k}={v!r}\n" for k, v in stats.items()), encoding="utf-8")
        return ["pores.csv", "throats.csv", "regions.npy", "network_stats.txt"]

    h_net = run.stage("extract", {"structure": h, "snow": asdict(cfg.snow)}, do_extract)
    net = _load_network(o)

    # lattice surface tension ----------------------------------------------
    if cfg.sigma_lat is None:
        def do_laplace():
            res = laplace_test(cfg.laplace_radius, sc, workers=workers)
            (o / "laplace.txt").write_text(
                f"sigma_lat={res.sigma!r}\nradius={res.radius!r}\ndelta_p={res.delta_p!r}\n"
                f"steps={res.steps}\n", encoding="utf-8")
            return ["laplace.txt"]

        h_lap = run.stage("laplace", {"params": asdict(sc), "radius": cfg.laplace_radius}, do_laplace)
        sigma_lat = float((o / "laplace.txt").read_text().split("\n")[0].split("=")[1])
    else:
        h_lap, sigma_lat = {"sigma_lat": cfg.sigma_lat}, cfg.sigma_lat

    # reference LBM fill ----------------------------------------------------
    def do_fill():
        res = fill_simulation(structure, sc, cfg.protocol, inlet=cfg.inlet, outlet=outlet,
                              workers=workers)
        write_curve(res.curve, o / "lbm_curve_lu.csv")
        vg.write_vxi(phase_image(res.final_state, structure), o / "lbm_phase.vxi")
        gas = residual_gas_analysis(res.final_state, structure)
        (o / "gas_report.txt").write_text(
            f"final_saturation={gas.final_saturation!r}\ncluster_count={gas.cluster_count}\n"
            f"cluster_volumes={','.join(map(str, gas.cluster_volumes))}\n"
            f"isolated_from_inlet={sum(not t for t in gas.touches_inlet)}\n"
            f"wetted_solid_fraction={gas.wetted_solid_fraction!r}\n", encoding="utf-8")
        return ["lbm_curve_lu.csv", "lbm_phase.vxi", "gas_report.txt"]

    h_fill = run.stage("lbm_fill", {"structure": h, "params": asdict(sc),
                                    "protocol": asdict(cfg.protocol), "inlet": cfg.inlet}, do_fill)

    # units and calibration --------------------------------------------------
    ref_sigma, ref_theta = cfg.reference

    def do_calibrate():
        d50 = median_pore_diameter(net)
        units = build_units(d50, d50 / structure.voxel_size, ref_sigma, sigma_lat, cfg.nu_phys,
                            sc.viscosity("a"))
        lbm_pa = convert_curve(read_curve(o / "lbm_curve_lu.csv"), units)
        write_curve(lbm_pa, o / "lbm_curve_pa.csv")
        ref = invasion_percolation(net, FluidPair(ref_sigma, ref_theta), cfg.inlet, outlet,
                                   cfg.trapping)
        write_curve(staircase(ref), o / "pnm_reference.csv")
        cal = calibrate_pnm(lbm_pa, staircase(ref))
        write_calibration_report(cal, o / "calibration.txt",
                                 inputs={"lbm_curve": o / "lbm_curve_pa.csv",
                                         "pnm_curve": o / "pnm_reference.csv"}, units=units)
        return ["lbm_curve_pa.csv", "pnm_reference.csv", "calibration.txt"]

    h_cal = run.stage("calibrate", {"net": h_net, "fill": h_fill, "laplace": h_lap,
                                    "reference": cfg.reference, "nu": cfg.nu_phys,
                                    "trapping": cfg.trapping}, do_calibrate)
    k = float((o / "calibration.txt").read_text().split("\n")[0].split("=")[1])

    # PNM sweep ---------------------------------------------------------------
    sweep_inputs = {"net": h_net, "cal": h_cal, "sigmas": cfg.sigmas, "thetas": cfg.thetas,
                    "trapping": cfg.trapping, "inlet": cfg.inlet}

    def do_sweep():
        percolation_sweep(net, cfg.sigmas, cfg.thetas, cfg.inlet, outlet, cfg.trapping,
                          correction=k, workers=workers, outdir=o)
        return [sweep_filename(s, t) for s in cfg.sigmas for t in cfg.thetas]

    run.stage("sweep", sweep_inputs, do_sweep)

    # transport feedback --------------------------------------------------------
    def do_transport():
        path = o / "feedback.csv"
        if path.exists():
            path.unlink()
        digest = structure.digest()
        lbm_after = vg.read_vxi(o / "lbm_phase.vxi")
        rep = entrapment_penalty(structure, lbm_after, cfg.transport_axis)
        append_feedback(path, feedback_row(rep, digest, ref_theta, ref_sigma, "lbm"))
        results = percolation_sweep(net, cfg.sigmas, cfg.thetas, cfg.inlet, outlet,
                                    cfg.trapping, correction=k)
        for s in cfg.sigmas:
            for t in cfg.thetas:
                res = results[(s, t)]
                after = pnm_phase_image(structure, net, res)
                rep = entrapment_penalty(structure, after, cfg.transport_axis)
                append_feedback(path, feedback_row(rep, digest, t, s, "pnm"))
        return ["feedback.csv"]

    run.stage("transport", {"structure": h, "fill": h_fill, "net": h_net, "sweep": sweep_inputs,
                            "axis": cfg.transport_axis}, do_transport)

    def do_plots():
        return [p.name for p in emit_plots(o)]

    run.stage("plots", {"artifacts": {k_: v for st in run.stages.values()
                                      for k_, v in st["outputs"].items()}}, do_plots)
    run._write()
    return o
