"""Strong-scaling benchmark of the lattice Boltzmann stepper."""

from dataclasses import dataclass
import csv
import logging
import os
import time

from . import voxelgrid as vg
from .errors import ResultMismatch
from .lbm.lattice import ShanChenParams, Stepper, init_lattice

logger = logging.getLogger(__name__)

BENCH_FIELDS = ("workers", "nx", "ny", "nz", "steps", "wall_seconds", "mlups", "speedup",
                "efficiency")


@dataclass(frozen=True)
class BenchRow:
    workers: int
    dims: tuple
    steps: int
    wall_seconds: float
    mlups: float  # million fluid-site updates per second
    speedup: float
    efficiency: float


@dataclass(frozen=True)
class BenchResult:
    rows: tuple
    digest: str  # final-state hash shared by every worker count
    fluid_cells: int
    cpu_count: int


def bench_image(dims, seed=0):
    """Sphere pack used as the benchmark workload (porosity 0.5)."""
    nx, ny, nz = dims
    r = max(2.0, min(dims) / 10.0)
    return vg.generate_sphere_pack(nx, ny, nz, 1.0, r, 0.15 * r, 0.5, seed=seed, tolerance=0.02)


def _final_digest(state, workers):
    return state.digest()


def bench_scaling(dims, steps, workers, params=None, seed=0, warmup=50, img=None):
    """Time ``steps`` LBM steps for each worker count.

    The same initial state is advanced ``warmup + steps`` steps per worker
    count; only the last ``steps`` are timed.  All final states must hash
    identically before any timing is reported.

    Raises
    ------
    ResultMismatch
        If two worker counts end in different states.
    """
    workers = [int(w) for w in workers]
    if not workers or min(workers) < 1:
        raise ValueError("worker counts must be >= 1")
    params = params or ShanChenParams(G_ads_a=-0.2, G_ads_b=0.2)
    img = img if img is not None else bench_image(dims, seed)
    base = init_lattice(img, params, inlet="xmin", outlet="xmax", perturbation=0.01, seed=seed)
    timings, digests = {}, {}
    for w in workers:
        state = base.copy()
        with Stepper(state, w) as stepper:
            stepper.step(warmup)
            t0 = time.perf_counter()
            stepper.step(steps)
            timings[w] = time.perf_counter() - t0
        digests[w] = _final_digest(state, w)
        logger.info("workers=%d: %.3f s", w, timings[w])
    if len(set(digests.values())) != 1:
        detail = ", ".join(f"{w}:{d[:12]}" for w, d in digests.items())
        raise ResultMismatch(f"final states differ across worker counts ({detail})")

    ref = timings[1] if 1 in timings else timings[min(workers)] * min(workers)
    rows = []
    for w in workers:
        t = timings[w]
        speed = ref / t
        rows.append(BenchRow(w, tuple(img.shape), steps, t,
                             base.n_cells * steps / t / 1e6, speed, speed / w))
    return BenchResult(tuple(rows), next(iter(digests.values())), base.n_cells,
                       os.cpu_count() or 1)


def write_bench(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_FIELDS)
        for r in result.rows:
            w.writerow([r.workers, *r.dims, r.steps, f"{r.wall_seconds:.6f}", f"{r.mlups:.6f}",
                        f"{r.speedup:.6f}", f"{r.efficiency:.6f}"])
