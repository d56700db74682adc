"""Quasi-static electrolyte filling driven by a stepped inlet pressure."""

from dataclasses import dataclass, field
import logging

import numpy as np

from .. import voxelgrid as vg
from ..curves import PressureSaturationCurve
from .lattice import Stepper, init_lattice, _K_OUTLET

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FillProtocol:
    """Inlet density offsets applied one after another.

    Each level runs in chunks of ``check_interval`` steps until the relative
    saturation change over a chunk drops below ``convergence_tol`` or
    ``steps_per_level`` is used up.
    """

    pressure_steps: tuple = (0.0,)
    steps_per_level: int = 200_000
    convergence_tol: float = 1e-3
    check_interval: int = 1000

    def __post_init__(self):
        steps = tuple(float(p) for p in self.pressure_steps)
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("pressure_steps must be strictly ascending")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.steps_per_level < 1 or self.check_interval < 1:
            raise ValueError("step budgets must be positive")
        object.__setattr__(self, "pressure_steps", steps)


@dataclass
class FillResult:
    curve: PressureSaturationCurve  # lattice pressure units
    final_state: object
    offsets: tuple = ()
    level_steps: list = field(default_factory=list)
    converged: list = field(default_factory=list)

    @property
    def final_saturation(self):
        return pore_saturation(self.final_state)


def _counted(state):
    # the outlet layer is a fixed gas reservoir, not pore space being filled
    return state.kind != _K_OUTLET


def pore_saturation(state):
    """Fraction of pore cells (outlet reservoir excluded) where electrolyte is
    the majority; ties count as gas."""
    counted = _counted(state)
    return float(np.count_nonzero(state.electrolyte_mask() & counted)) / np.count_nonzero(counted)


def fill_simulation(img, params, protocol, inlet="xmin", outlet=None, workers=1, state=None):
    """Fill ``img`` from the ``inlet`` face in quasi-static pressure steps.

    Parameters
    ----------
    img : VoxelImage
    params : ShanChenParams
    protocol : FillProtocol
    inlet, outlet : str
        Reservoir faces; ``outlet`` defaults to the face opposite ``inlet``.
    workers : int
        Number of z-slab threads.
    state : LatticeState, optional
        Continue from this state instead of a fresh initialisation.

    Returns
    -------
    FillResult
        The curve holds ``(p_in - p_out, saturation)`` per level, in lattice
        pressure units.

    Raises
    ------
    NumericBlowup
        Carries the offending time step in ``step_index``.
    """
    outlet = outlet or vg.opposite_face(inlet)
    if state is None:
        state = init_lattice(img, params, inlet=inlet, outlet=outlet)
    pressures, sats, level_steps, converged = [], [], [], []
    with Stepper(state, workers) as stepper:
        for offset in protocol.pressure_steps:
            state.set_inlet_offset(offset)
            start = state.step_index
            prev = pore_saturation(state)
            ok = False
            while state.step_index - start < protocol.steps_per_level:
                chunk = min(protocol.check_interval,
                            protocol.steps_per_level - (state.step_index - start))
                stepper.step(chunk)
                sat = pore_saturation(state)
                change = abs(sat - prev) / max(prev, 1e-12)
                prev = sat
                if change < protocol.convergence_tol:
                    ok = True
                    break
            p_in, p_out = state.boundary_pressures()
            pressures.append(p_in - p_out)
            sats.append(prev)
            level_steps.append(state.step_index - start)
            converged.append(ok)
            logger.info("offset %.4g: saturation %.4f after %d steps%s", offset, prev,
                        level_steps[-1], "" if ok else " (budget exhausted)")
    curve = PressureSaturationCurve(pressures, sats, "lu")
    return FillResult(curve, state, protocol.pressure_steps, level_steps, converged)


def phase_image(state, img):
    """Label image with open voxels set to ELECTROLYTE or GAS by majority."""
    labels = vg.classify_solid(img).labels.copy()
    ra, rb = state.density_fields()
    open_mask = img.mask(vg.FLUID_LABELS)
    labels[open_mask] = np.where(ra[open_mask] > rb[open_mask], vg.ELECTROLYTE, vg.GAS)
    return img.with_labels(labels)


@dataclass(frozen=True)
class GasReport:
    final_saturation: float
    cluster_count: int
    cluster_volumes: tuple  # voxels, largest first
    touches_inlet: tuple  # per cluster
    touches_outlet: tuple
    wetted_solid_fraction: float


def _near_face(shape, face, depth):
    mask = np.zeros(shape, dtype=bool)
    axis = vg.AXES[face[0]]
    idx = [slice(None)] * 3
    idx[axis] = slice(0, depth) if face.endswith("min") else slice(shape[axis] - depth, None)
    mask[tuple(idx)] = True
    return mask


def residual_gas_analysis(state, img):
    """Saturation, entrapped gas clusters and wetted solid surface of a filled state.

    Gas clusters are 26-connected GAS voxels of the phase image; the outlet
    reservoir layer is left out.  A cluster "touches" a face when it has a
    voxel within two layers of it (the face layer itself is a reservoir).
    The wetted solid fraction counts SOLID_INTERFACE voxels face-adjacent
    to electrolyte over those face-adjacent to any fluid (NaN if none).
    """
    phases = phase_image(state, img)
    gas = phases.labels == vg.GAS
    if state.outlet is not None:
        gas &= ~_near_face(img.shape, state.outlet, 1)
    labels, n = vg.label_mask(gas, 26)
    volumes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    touch = {}
    for name, face in (("in", state.inlet), ("out", state.outlet)):
        if face is None:
            touch[name] = (False,) * n
            continue
        hit = np.unique(labels[_near_face(img.shape, face, 2)])
        touch[name] = tuple(bool(i in hit) for i in range(1, n + 1))

    return GasReport(pore_saturation(state), int(n), tuple(int(v) for v in volumes),
                     touch["in"], touch["out"], wetted_solid_fraction(phases))


def wetted_solid_fraction(phases):
    """SOLID_INTERFACE voxels face-adjacent to electrolyte over those
    face-adjacent to any fluid; NaN when no solid touches fluid."""
    solid = phases.mask(vg.SOLID_LABELS)
    iface = solid & vg.face_neighbors(~solid)
    near_fluid = iface & vg.face_neighbors(phases.mask(vg.FLUID_LABELS))
    near_elec = iface & vg.face_neighbors(phases.labels == vg.ELECTROLYTE)
    denom = np.count_nonzero(near_fluid)
    return np.count_nonzero(near_elec) / denom if denom else float("nan")
