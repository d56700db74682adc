"""Effective diffusivity and tortuosity of a conducting phase.

Steady diffusion is solved by finite volumes on the voxel grid: one unknown
per conducting voxel, unit conductance across every shared face, and a
half-voxel link (conductance 2) to the fixed concentrations on the two
faces normal to the transport axis.  Other faces are sealed.
"""

from dataclasses import dataclass
import csv
import logging
import math
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from . import voxelgrid as vg
from .errors import NonPercolating, NotConverged
from .lbm.fill import wetted_solid_fraction

logger = logging.getLogger(__name__)

RTOL = 1e-8
NONPERCOLATING = "NONPERCOLATING"


@dataclass(frozen=True)
class TransportResult:
    d_eff_ratio: float  # D_eff / D0
    tortuosity: float  # porosity_eff / d_eff_ratio; inf when not percolating
    porosity_eff: float  # conducting voxel fraction
    direction: str
    flag: str = ""  # NONPERCOLATING when no face-to-face path exists
    iterations: int = 0

    @property
    def percolating(self):
        return self.flag != NONPERCOLATING


def percolating_mask(conducting, axis):
    """Conducting voxels in a 6-connected component that touches both faces
    normal to ``axis``."""
    labels, n = vg.label_mask(conducting, 6)
    if n == 0:
        return np.zeros_like(conducting)
    lo = np.take(labels, 0, axis=axis)
    hi = np.take(labels, -1, axis=axis)
    both = np.intersect1d(lo[lo > 0], hi[hi > 0])
    return np.isin(labels, both)


def assemble(mask, axis):
    """Sparse system ``A c = b`` for the voxels in ``mask``.

    Returns ``(A, b, index)`` where ``index`` maps voxels to unknowns (-1
    outside the mask).  Unknowns follow the canonical linear order.
    """
    flat = mask.ravel(order="F")
    cells = np.flatnonzero(flat)
    n = len(cells)
    index = np.full(flat.size, -1, dtype=np.int64)
    index[cells] = np.arange(n)
    index = index.reshape(mask.shape, order="F")
    diag = np.zeros(n)
    b = np.zeros(n)
    rows, cols = [], []
    for ax in range(3):
        a = np.take(index, np.arange(mask.shape[ax] - 1), axis=ax)
        c = np.take(index, np.arange(1, mask.shape[ax]), axis=ax)
        ok = (a >= 0) & (c >= 0)
        a, c = a[ok], c[ok]
        rows += [a, c]
        cols += [c, a]
        np.add.at(diag, a, 1.0)
        np.add.at(diag, c, 1.0)
    inlet = np.take(index, 0, axis=axis)
    outlet = np.take(index, -1, axis=axis)
    inlet, outlet = inlet[inlet >= 0], outlet[outlet >= 0]
    np.add.at(diag, inlet, 2.0)
    np.add.at(diag, outlet, 2.0)
    np.add.at(b, inlet, 2.0)  # c = 1 at the inlet face, 0 at the outlet
    rows = np.concatenate(rows + [np.arange(n)])
    cols = np.concatenate(cols + [np.arange(n)])
    vals = np.concatenate([-np.ones(len(rows) - n), diag])
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return A, b, index


def effective_diffusivity(img, conducting=vg.FLUID_LABELS, axis="x", strict=False):
    """Relative effective diffusivity and tortuosity along ``axis``.

    Parameters
    ----------
    img : VoxelImage
    conducting : sequence of int
        Labels that carry the diffusing species.
    axis : {"x", "y", "z"}
    strict : bool
        Raise instead of returning a flagged result when nothing percolates.

    Returns
    -------
    TransportResult

    Raises
    ------
    NonPercolating
        Only with ``strict=True``.
    NotConverged
        If CG misses the 1e-8 relative residual within ``10 N^(2/3)`` iterations.
    """
    ax = vg.AXES[axis]
    cond = img.mask(conducting)
    eps = float(np.count_nonzero(cond)) / cond.size
    mask = percolating_mask(cond, ax)
    if not mask.any():
        if strict:
            raise NonPercolating(f"no conducting path along {axis}")
        return TransportResult(0.0, math.inf, eps, axis, NONPERCOLATING)

    A, b, index = assemble(mask, ax)
    n = len(b)
    inv_diag = 1.0 / A.diagonal()
    M = spla.LinearOperator((n, n), matvec=lambda x: inv_diag * x)
    iters = [0]

    def count(_):
        iters[0] += 1

    maxiter = max(100, int(10 * n ** (2.0 / 3.0)))
    c, info = spla.cg(A, b, rtol=RTOL, atol=0.0, maxiter=maxiter, M=M, callback=count)
    if info != 0:
        raise NotConverged(f"CG stopped after {iters[0]} iterations")

    inlet = np.take(index, 0, axis=ax)
    inlet = inlet[inlet >= 0]
    flux = float(np.sum(2.0 * (1.0 - c[inlet])))
    length = img.shape[ax]
    area = img.labels.size / length
    d = flux * length / area
    return TransportResult(d, eps / d, eps, axis, "", iters[0])


@dataclass(frozen=True)
class PenaltyReport:
    before: TransportResult
    after: TransportResult
    delta_d_eff: float  # after - before
    delta_tau: float
    wetted_solid_fraction: float
    saturation: float


def entrapment_penalty(img_before, img_after, axis="x"):
    """Transport loss caused by gas left in the pores after filling.

    ``img_before`` is the structure with all pore space conducting,
    ``img_after`` the filled phase image where only ELECTROLYTE conducts.
    """
    if img_before.shape != img_after.shape:
        raise ValueError("images differ in shape")
    before = effective_diffusivity(img_before, vg.FLUID_LABELS, axis)
    after = effective_diffusivity(img_after, (vg.ELECTROLYTE,), axis)
    elec = img_after.count(vg.ELECTROLYTE)
    fluid = int(np.count_nonzero(img_after.mask(vg.FLUID_LABELS)))
    sat = elec / fluid if fluid else float("nan")
    return PenaltyReport(before, after, after.d_eff_ratio - before.d_eff_ratio,
                         after.tortuosity - before.tortuosity,
                         wetted_solid_fraction(img_after), sat)


FEEDBACK_FIELDS = ("structure_hash", "model", "theta", "sigma", "saturation", "d_eff_ratio_before",
                   "d_eff_ratio_after", "tau_before", "tau_after", "wetted_solid_fraction")


def feedback_row(report, structure_hash, theta, sigma, model="lbm"):
    """One ``feedback.csv`` row; ``model`` names the source of the phase map."""
    return {
        "structure_hash": structure_hash,
        "model": model,
        "theta": theta,
        "sigma": sigma,
        "saturation": report.saturation,
        "d_eff_ratio_before": report.before.d_eff_ratio,
        "d_eff_ratio_after": report.after.d_eff_ratio,
        "tau_before": report.before.tortuosity,
        "tau_after": report.after.tortuosity,
        "wetted_solid_fraction": report.wetted_solid_fraction,
    }


def append_feedback(path, row):
    """Append one row to ``feedback.csv``, writing the header for a new file."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, FEEDBACK_FIELDS, lineterminator="\n")
        if new:
            w.writeheader()
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
