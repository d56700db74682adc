"""Lattice/physical unit conversion and the PNM pressure calibration.

Lengths are anchored on the median pore diameter, times on the kinematic
viscosity and pressures on the surface tension (Laplace scaling
``p ~ sigma / L``).
"""

from dataclasses import dataclass
import hashlib
import math
from pathlib import Path

import numpy as np

from .curves import PressureSaturationCurve
from .errors import NonpositiveInput, NoOverlap

K_RANGE = (1e-2, 1e2)
MIN_SATURATION_OVERLAP = 0.3


@dataclass(frozen=True)
class UnitSystem:
    dx: float  # m per lattice length
    dt: float  # s per time step
    pressure_scale: float  # Pa per lattice pressure unit

    def __post_init__(self):
        if not (self.dx > 0 and self.dt > 0 and self.pressure_scale > 0):
            raise NonpositiveInput("unit factors must be positive")

    def length(self, lat):
        return lat * self.dx

    def time(self, lat):
        return lat * self.dt

    def pressure(self, lat):
        return lat * self.pressure_scale

    def to_lattice_pressure(self, pa):
        return pa / self.pressure_scale

    def to_lattice_length(self, m):
        return m / self.dx


def build_units(d50_phys, d50_lat, sigma_phys, sigma_lat, nu_phys, nu_lat):
    """Unit system from matching d50 (um / lattice), surface tension and viscosity.

    Raises
    ------
    NonpositiveInput
        If any argument is not strictly positive.
    """
    args = dict(d50_phys=d50_phys, d50_lat=d50_lat, sigma_phys=sigma_phys,
                sigma_lat=sigma_lat, nu_phys=nu_phys, nu_lat=nu_lat)
    bad = [k for k, v in args.items() if not (v > 0 and math.isfinite(v))]
    if bad:
        raise NonpositiveInput(f"must be positive and finite: {', '.join(bad)}")
    dx = d50_phys * 1e-6 / d50_lat
    dt = nu_lat * dx * dx / nu_phys
    return UnitSystem(dx, dt, sigma_phys / sigma_lat / dx)


def convert_curve(curve, units):
    """Multiply the pressure axis by ``units.pressure_scale``; the result is in Pa."""
    return PressureSaturationCurve(curve.pressures * units.pressure_scale,
                                   curve.saturations, "Pa")


@dataclass(frozen=True)
class Calibration:
    pressure_scale_correction: float
    residual: float

    def __post_init__(self):
        if not self.pressure_scale_correction > 0:
            raise ValueError("correction must be positive")


def calibration_objective(lbm, pnm, k):
    """RMS saturation mismatch between ``lbm`` and ``pnm`` with PNM pressures times ``k``.

    Both curves are sampled (right-continuous steps) on the union of their
    pressure points, restricted to the pressure range they share.  Returns
    ``inf`` if that range is empty.
    """
    pk = pnm.pressures * k
    lo = max(lbm.pressures[0], pk[0])
    hi = min(lbm.pressures[-1], pk[-1])
    if lo > hi:
        return math.inf
    grid = np.union1d(lbm.pressures, pk)
    grid = grid[(grid >= lo) & (grid <= hi)]
    scaled = PressureSaturationCurve(pk, pnm.saturations, pnm.unit)
    diff = lbm.saturation_at(grid) - scaled.saturation_at(grid)
    return float(np.sqrt(np.mean(diff ** 2)))


def _candidates(lbm, pnm, k_range):
    """Every ``k`` where a scaled PNM point meets an LBM point, plus one
    point inside each interval between them (the objective is piecewise
    constant in between)."""
    pl = lbm.pressures[lbm.pressures != 0]
    pp = pnm.pressures[pnm.pressures != 0]
    ratios = (pl[:, None] / pp[None, :]).ravel()
    lo, hi = k_range
    ratios = ratios[(ratios >= lo) & (ratios <= hi)]
    brk = np.unique(np.concatenate([ratios, [lo, hi, 1.0]]))
    mids = np.sqrt(brk[1:] * brk[:-1])
    return np.concatenate([brk, mids])


def calibrate_pnm(lbm_curve, pnm_curve, k_range=K_RANGE):
    """One-parameter fit of the PNM pressure axis to an LBM curve.

    Returns the correction ``k`` minimising :func:`calibration_objective`
    over ``k_range``.  Among equally good values the one closest to 1 (in
    log distance) wins.

    Raises
    ------
    NoOverlap
        Either curve is empty, or their saturation ranges share less than 0.3.
    """
    if len(lbm_curve) == 0 or len(pnm_curve) == 0:
        raise NoOverlap("calibration needs two non-empty curves")
    s_lo = max(lbm_curve.saturations.min(), pnm_curve.saturations.min())
    s_hi = min(lbm_curve.saturations.max(), pnm_curve.saturations.max())
    if s_hi - s_lo < MIN_SATURATION_OVERLAP:
        raise NoOverlap(f"saturation ranges overlap by {max(s_hi - s_lo, 0):.3g} < "
                        f"{MIN_SATURATION_OVERLAP}")
    best = None
    for k in _candidates(lbm_curve, pnm_curve, k_range):
        f = calibration_objective(lbm_curve, pnm_curve, k)
        key = (f, abs(math.log(k)), k)
        if best is None or key < best:
            best = key
    if not math.isfinite(best[0]):
        raise NoOverlap("curves share no pressure range for any correction")
    return Calibration(float(best[2]), best[0])


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_calibration_report(cal, path, inputs=None, units=None):
    """Plain ``key=value`` report; ``inputs`` maps names to files to hash."""
    lines = [f"k={cal.pressure_scale_correction!r}", f"residual={cal.residual!r}"]
    if units is not None:
        lines += [f"dx={units.dx!r}", f"dt={units.dt!r}",
                  f"pressure_scale={units.pressure_scale!r}"]
    for name, p in sorted((inputs or {}).items()):
        lines.append(f"sha256_{name}={_sha256(p)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_calibration_report(path):
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out
