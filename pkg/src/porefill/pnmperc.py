"""Quasi-static invasion percolation on a pore network.

Pores carry all volume and never gate invasion; throats are volumeless and
open at the Washburn entry pressure of a cylinder.  The applied pressure is
the running maximum of the entry pressures met so far.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import heapq
import logging
import math
from pathlib import Path

import numpy as np

from .curves import PressureSaturationCurve, write_curve
from .errors import NoInletPores

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FluidPair:
    surface_tension: float = 0.072  # N/m
    contact_angle: float = 60.0  # degrees, measured through the invading phase
    invading: str = "electrolyte"
    defending: str = "gas"

    def __post_init__(self):
        if self.surface_tension <= 0:
            raise ValueError("surface_tension must be positive")
        if not 0.0 <= self.contact_angle <= 180.0:
            raise ValueError("contact_angle must lie in [0, 180]")


@dataclass(frozen=True)
class InvasionEvent:
    applied_pressure: float
    entry_pressure: float
    kind: str  # "pore" or "throat"
    element: int
    cumulative_saturation: float


@dataclass(frozen=True)
class PercolationResult:
    events: tuple
    trapped_pores: frozenset
    final_saturation: float

    @property
    def invaded_pores(self):
        return [e.element for e in self.events if e.kind == "pore"]

    @property
    def invaded_throats(self):
        return [e.element for e in self.events if e.kind == "throat"]


def cosd(theta):
    """Cosine of an angle in degrees; exact at multiples of 90."""
    q, r = divmod(float(theta), 90.0)
    if r == 0.0:
        return (1.0, 0.0, -1.0, 0.0)[int(q) % 4]
    return math.cos(math.radians(theta))


def entry_pressure(throat_diameter, fluids):
    """Washburn entry pressure [Pa] of a cylindrical throat (diameter in um).

    Negative for a wetting invader, positive for a non-wetting one.
    """
    d = np.asarray(throat_diameter, dtype=float)
    if np.any(d <= 0):
        raise ValueError("throat diameter must be positive")
    p = -4.0 * fluids.surface_tension * cosd(fluids.contact_angle) / (d * 1e-6)
    return float(p) if p.ndim == 0 else p


def _cluster(start, adj, invaded):
    """Uninvaded pores connected to ``start`` through uninvaded pores."""
    seen = {start}
    stack = [start]
    while stack:
        p = stack.pop()
        for _, q in adj[p]:
            if not invaded[q] and q not in seen:
                seen.add(q)
                stack.append(q)
    return seen


def invasion_percolation(net, fluids, inlet="xmin", outlet="xmax", trapping=False,
                         entry_pressures=None):
    """Invade ``net`` from the pores on the ``inlet`` face.

    Parameters
    ----------
    net : PoreNetwork
    fluids : FluidPair
    inlet, outlet : str
        Face names such as ``"xmin"``.
    trapping : bool
        Freeze defender clusters that lose their connection to the outlet.
    entry_pressures : array, optional
        Per-throat entry pressures overriding the Washburn values.

    Returns
    -------
    PercolationResult
    """
    inlet_pores = sorted(net.face_labels.get(inlet, ()))
    if not inlet_pores:
        raise NoInletPores(f"no pores touch the {inlet} face")
    outlet_pores = net.face_labels.get(outlet, frozenset())
    n = net.n_pores
    adj = net.neighbors()
    if entry_pressures is None:
        pe = entry_pressure(net.throat_diameter, fluids) if net.n_throats else np.empty(0)
    else:
        pe = np.asarray(entry_pressures, dtype=float)
    conns = net.throat_conns

    invaded = np.zeros(n, dtype=bool)
    trapped = np.zeros(n, dtype=bool)
    heap = []
    steps = []  # (kind, element, entry)

    def invade(p):
        invaded[p] = True
        for t, q in adj[p]:
            if not invaded[q]:
                heapq.heappush(heap, (pe[t], t))

    def update_trapping(pores):
        for p in pores:
            for _, q in adj[p]:
                if invaded[q] or trapped[q]:
                    continue
                cluster = _cluster(q, adj, invaded)
                if cluster.isdisjoint(outlet_pores):
                    trapped[list(cluster)] = True

    for p in inlet_pores:
        invade(p)
        steps.append(("pore", p, -math.inf))
    if trapping:
        update_trapping(inlet_pores)

    while heap:
        e, t = heapq.heappop(heap)
        a, b = conns[t]
        if invaded[a] and invaded[b]:
            continue
        far = b if invaded[a] else a
        if trapped[far]:
            continue
        steps.append(("throat", t, e))
        steps.append(("pore", far, e))
        invade(far)
        if trapping:
            update_trapping([far])

    return _assemble(net, steps, trapped)


def _assemble(net, steps, trapped):
    vol = net.pore_volume
    order = [el for kind, el, _ in steps if kind == "pore"]
    rest = np.setdiff1d(np.arange(net.n_pores), order)
    cum = np.cumsum(np.concatenate([vol[order], vol[rest]]))
    total = cum[-1]
    entries = [e for _, _, e in steps if e != -math.inf]
    seed_pressure = entries[0] if entries else 0.0

    events = []
    running = -math.inf
    k = -1
    for kind, el, e in steps:
        if e == -math.inf:
            applied = seed_pressure
        else:
            running = max(running, e)
            applied = running
        if kind == "pore":
            k += 1
        sat = float(cum[k] / total) if k >= 0 and total > 0 else 0.0
        events.append(InvasionEvent(float(applied), float(e) if e != -math.inf else float(applied),
                                    kind, int(el), sat))
    final = events[-1].cumulative_saturation if events else 0.0
    return PercolationResult(tuple(events), frozenset(int(p) for p in np.flatnonzero(trapped)), final)


def curve_from_result(res, pressure_grid):
    """Sample the invasion staircase on ``pressure_grid`` (right-continuous)."""
    grid = np.asarray(pressure_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("pressure grid must be ascending")
    applied = np.array([e.applied_pressure for e in res.events])
    sats = np.array([e.cumulative_saturation for e in res.events])
    idx = np.searchsorted(applied, grid, side="right") - 1
    out = np.where(idx >= 0, sats[np.maximum(idx, 0)] if len(sats) else 0.0, 0.0)
    return PressureSaturationCurve(grid, out, "Pa")


def staircase(res):
    """Curve with one sample per distinct applied pressure (its final saturation)."""
    applied = np.array([e.applied_pressure for e in res.events])
    sats = np.array([e.cumulative_saturation for e in res.events])
    if len(applied) == 0:
        return PressureSaturationCurve([], [], "Pa")
    last = np.r_[applied[1:] != applied[:-1], True]
    return PressureSaturationCurve(applied[last], sats[last], "Pa")


def sweep_filename(sigma, theta):
    return f"ps_s{sigma:g}_t{theta:g}.csv"


def _sweep_task(args):
    net, sigma, theta, inlet, outlet, trapping, correction = args
    fluids = FluidPair(sigma, theta)
    pe = entry_pressure(net.throat_diameter, fluids) * correction if net.n_throats else None
    res = invasion_percolation(net, fluids, inlet, outlet, trapping, entry_pressures=pe)
    return sigma, theta, res


def percolation_sweep(net, sigmas, thetas, inlet="xmin", outlet="xmax", trapping=False,
                      correction=1.0, workers=1, outdir=None):
    """Run one invasion per (sigma, theta) pair.

    Entry pressures are multiplied by ``correction``.  With ``outdir`` each
    staircase is written to ``ps_s<sigma>_t<theta>.csv``.  Returns a dict
    keyed by ``(sigma, theta)``.
    """
    tasks = [(net, s, t, inlet, outlet, trapping, correction) for s in sigmas for t in thetas]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    out = {}
    for sigma, theta, res in results:
        out[(sigma, theta)] = res
        if outdir is not None:
            write_curve(staircase(res), Path(outdir) / sweep_filename(sigma, theta))
    return out
