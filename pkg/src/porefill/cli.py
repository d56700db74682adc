"""``porefill`` command line.

Exit codes: 0 ok, 2 configuration error, 3 stage failure, 4 numeric failure.
"""

import argparse
import logging
from pathlib import Path
import sys

from . import voxelgrid as vg
from .config import load_config, structure_params
from .curves import read_curve, write_curve
from .errors import ConfigError, PorefillError

logger = logging.getLogger("porefill")


def _out(args, default="."):
    p = Path(args.out or default)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _config(args):
    if not args.config:
        raise ConfigError("this command needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def cmd_generate(args):
    cfg = _config(args)
    if cfg.structure["source"] != "generate":
        raise ConfigError("[structure] source must be 'generate' for this command")
    gen, perf = structure_params(cfg)
    img = vg.generate_sphere_pack(**gen)
    if perf:
        img = vg.perforate(img, **perf)
    path = _out(args) / "structure.vxi"
    vg.write_vxi(img, path)
    print(f"{path} porosity={vg.porosity(img):.4f}")


def cmd_classify(args):
    img = vg.classify_solid(vg.read_vxi(args.input))
    path = _out(args) / (args.output or "classified.vxi")
    vg.write_vxi(img, path)
    print(path)


def cmd_extract(args):
    from .netextract import SnowParams, extract_network, network_stats, write_network

    snow = load_config(args.config).snow if args.config else SnowParams()
    net = extract_network(vg.read_vxi(args.input), snow)
    o = _out(args)
    write_network(net, o / "pores.csv", o / "throats.csv")
    for k, v in network_stats(net).items():
        print(f"{k}={v}")


def cmd_percolate(args):
    from .netextract import read_network
    from .pnmperc import FluidPair, invasion_percolation, staircase, sweep_filename

    net = read_network(args.pores, args.throats)
    outlet = args.outlet or vg.opposite_face(args.inlet)
    res = invasion_percolation(net, FluidPair(args.sigma, args.theta), args.inlet, outlet,
                               args.trapping)
    path = _out(args) / sweep_filename(args.sigma, args.theta)
    write_curve(staircase(res), path)
    print(f"{path} final_saturation={res.final_saturation:.4f}")


def cmd_fill(args):
    from .lbm.fill import fill_simulation, phase_image

    cfg = _config(args)
    img = vg.read_vxi(args.input)
    res = fill_simulation(img, cfg.shan_chen, cfg.protocol, inlet=cfg.inlet,
                          outlet=vg.opposite_face(cfg.inlet), workers=cfg.workers)
    o = _out(args)
    write_curve(res.curve, o / "lbm_curve_lu.csv")
    vg.write_vxi(phase_image(res.final_state, img), o / "lbm_phase.vxi")
    print(f"final_saturation={res.final_saturation:.4f}")


def cmd_calibrate(args):
    from .unitbridge import calibrate_pnm, write_calibration_report

    lbm, pnm = read_curve(args.lbm), read_curve(args.pnm)
    cal = calibrate_pnm(lbm, pnm)
    path = _out(args) / "calibration.txt"
    write_calibration_report(cal, path, inputs={"lbm_curve": args.lbm, "pnm_curve": args.pnm})
    print(f"k={cal.pressure_scale_correction!r} residual={cal.residual!r}")


def cmd_transport(args):
    from .transport import append_feedback, effective_diffusivity, entrapment_penalty, feedback_row

    before = vg.read_vxi(args.input)
    if args.after is None:
        r = effective_diffusivity(before, axis=args.axis)
        print(f"d_eff_ratio={r.d_eff_ratio!r} tortuosity={r.tortuosity!r} {r.flag}".rstrip())
        return
    rep = entrapment_penalty(before, vg.read_vxi(args.after), args.axis)
    append_feedback(_out(args) / "feedback.csv",
                    feedback_row(rep, before.digest(), args.theta, args.sigma, args.model))
    print(f"delta_d_eff={rep.delta_d_eff!r} delta_tau={rep.delta_tau!r}")


def cmd_workflow(args):
    from .workflow import run_workflow

    cfg = _config(args)
    print(run_workflow(cfg, out=args.out))


def cmd_bench(args):
    from .bench import bench_scaling, write_bench

    dims = tuple(int(v) for v in args.dims.split(","))
    if len(dims) == 1:
        dims = dims * 3
    workers = [int(v) for v in args.workers_list.split(",")]
    res = bench_scaling(dims, args.steps, workers, seed=args.seed or 0)
    path = _out(args) / "bench.csv"
    write_bench(res, path)
    for r in res.rows:
        print(f"workers={r.workers} seconds={r.wall_seconds:.3f} mlups={r.mlups:.2f} "
              f"speedup={r.speedup:.2f}")


def cmd_plot(args):
    from .plots import emit_plots

    for p in emit_plots(args.dir or args.out or "."):
        print(p)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="workflow config file")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    p = argparse.ArgumentParser(prog="porefill", description=__doc__.split("\n")[0])
    p.add_argument("--config")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    add("generate", cmd_generate, "generate a sphere-pack structure from [structure]")
    sp = add("classify", cmd_classify, "mark solid interface voxels")
    sp.add_argument("input")
    sp.add_argument("--output")
    sp = add("extract", cmd_extract, "extract a pore network")
    sp.add_argument("input")
    sp = add("percolate", cmd_percolate, "invasion percolation on an extracted network")
    sp.add_argument("pores")
    sp.add_argument("throats")
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--theta", type=float, required=True)
    sp.add_argument("--inlet", default="xmin", choices=vg.FACES)
    sp.add_argument("--outlet", choices=vg.FACES)
    sp.add_argument("--trapping", action="store_true")
    sp = add("fill", cmd_fill, "lattice Boltzmann filling simulation")
    sp.add_argument("input")
    sp = add("calibrate", cmd_calibrate, "fit the PNM pressure correction to an LBM curve")
    sp.add_argument("lbm")
    sp.add_argument("pnm")
    sp = add("transport", cmd_transport, "effective diffusivity / entrapment penalty")
    sp.add_argument("input")
    sp.add_argument("--after", help="phase image after filling")
    sp.add_argument("--axis", default="x", choices=("x", "y", "z"))
    sp.add_argument("--sigma", type=float, default=float("nan"))
    sp.add_argument("--theta", type=float, default=float("nan"))
    sp.add_argument("--model", default="lbm")
    add("workflow", cmd_workflow, "run or resume the full workflow")
    sp = add("bench", cmd_bench, "strong-scaling benchmark of the LBM stepper")
    sp.add_argument("--dims", default="64")
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--workers-list", default="1,2,4,8")
    sp = add("plot", cmd_plot, "write gnuplot scripts for an artifact directory")
    sp.add_argument("dir", nargs="?")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except PorefillError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
