"""Two-component Shan-Chen lattice Boltzmann core on a D3Q19 lattice.

Only open cells carry distributions.  They are stored in a compact list
(sorted by linear voxel index, so z-slabs are contiguous ranges) with a
pull-neighbour table; solid cells are reduced at set-up time to a "wall"
flag in the table (half-way bounce-back) and a constant adhesion vector
built from the neighbouring ``SOLID_INTERFACE`` voxels.  Bulk solid voxels
never enter the per-step work.

Units are lattice units throughout: ``dx = dt = 1``, ``cs^2 = 1/3``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
import hashlib
import json
import logging
import warnings

import numpy as np
from numba import njit
from scipy import ndimage as ndi

from .. import voxelgrid as vg
from ..errors import NoPorePath, NoPorePhase, NumericBlowup, InvalidImage

logger = logging.getLogger(__name__)

# D3Q19 velocity set: rest, 6 faces, 12 edges; opposite pairs are adjacent
E = np.array([
    (0, 0, 0),
    (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
    (1, 1, 0), (-1, -1, 0), (1, -1, 0), (-1, 1, 0),
    (1, 0, 1), (-1, 0, -1), (1, 0, -1), (-1, 0, 1),
    (0, 1, 1), (0, -1, -1), (0, 1, -1), (0, -1, 1),
], dtype=np.int64)
W = np.array([1 / 3] + [1 / 18] * 6 + [1 / 36] * 12)
OPP = np.array([0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17], dtype=np.int64)
EX = E[:, 0].astype(np.float64)
EY = E[:, 1].astype(np.float64)
EZ = E[:, 2].astype(np.float64)
Q = 19
CS2 = 1.0 / 3.0
BLOWUP_DENSITY = 1e6

# cell types on the full grid
FLUID = 0
SOLID_INTERFACE = 1
SOLID_BULK = 2
INLET = 3
OUTLET = 4

# per-cell kind in the compact list
_K_FLUID, _K_INLET, _K_OUTLET = 0, 1, 2


@dataclass(frozen=True)
class ShanChenParams:
    """Component ``a`` is the electrolyte, ``b`` the gas.

    A negative adhesion strength attracts that component to the wall.
    """

    G_ab: float = 2.5
    G_ads_a: float = 0.0
    G_ads_b: float = 0.0
    tau_a: float = 1.0
    tau_b: float = 1.0
    rho_major: float = 1.0
    rho_minor: float = 0.03

    def __post_init__(self):
        if self.tau_a <= 0.5 or self.tau_b <= 0.5:
            raise ValueError("relaxation times must exceed 0.5")
        if self.rho_major <= 0 or self.rho_minor < 0:
            raise ValueError("initial densities must be positive (minor may be zero)")

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def miscibility_threshold(self):
        """Coupling above which a 50/50 mixture at the initial total density
        is linearly unstable (``G * rho_a * rho_b`` exceeds ``1/(...)``)."""
        return 2.0 / (self.rho_major + self.rho_minor)

    def viscosity(self, component="a"):
        tau = self.tau_a if component == "a" else self.tau_b
        return CS2 * (tau - 0.5)


def pressure(rho_a, rho_b, G_ab):
    """Equation of state of the two-component model."""
    return CS2 * (rho_a + rho_b) + CS2 * G_ab * rho_a * rho_b


# no nnan/ninf: the blow-up check must still see NaN
_FASTMATH = {"nsz", "arcp", "contract", "afn", "reassoc"}
# density sums are done in two places (stream and checkpoint reload); they must
# agree bit for bit, so no reassociation there
_FASTMATH_SUM = {"nsz", "arcp", "contract", "afn"}


@njit(nogil=True, cache=True, fastmath=_FASTMATH)
def _collide(f, rho, nbr, wall, kind, lo, hi, G, gads_a, gads_b, tau_a, tau_b, fpost):
    bad = False
    for c in range(lo, hi):
        if kind[c] != 0:
            for k in range(2):
                for i in range(19):
                    fpost[c, k, i] = f[c, k, i]
            continue
        ra = rho[c, 0]
        rb = rho[c, 1]
        if not (abs(ra) < BLOWUP_DENSITY and abs(rb) < BLOWUP_DENSITY):
            bad = True
        sax = 0.0
        say = 0.0
        saz = 0.0
        sbx = 0.0
        sby = 0.0
        sbz = 0.0
        jax = 0.0
        jay = 0.0
        jaz = 0.0
        jbx = 0.0
        jby = 0.0
        jbz = 0.0
        for i in range(1, 19):
            s = nbr[c, OPP[i]]  # cell at x + e_i
            if s >= 0:
                wa = W[i] * rho[s, 0]
                wb = W[i] * rho[s, 1]
                sax += wa * EX[i]
                say += wa * EY[i]
                saz += wa * EZ[i]
                sbx += wb * EX[i]
                sby += wb * EY[i]
                sbz += wb * EZ[i]
            fa = f[c, 0, i]
            fb = f[c, 1, i]
            jax += fa * EX[i]
            jay += fa * EY[i]
            jaz += fa * EZ[i]
            jbx += fb * EX[i]
            jby += fb * EY[i]
            jbz += fb * EZ[i]
        wx = wall[c, 0]
        wy = wall[c, 1]
        wz = wall[c, 2]
        fax = -ra * (G * sbx + gads_a * wx)
        fay = -ra * (G * sby + gads_a * wy)
        faz = -ra * (G * sbz + gads_a * wz)
        fbx = -rb * (G * sax + gads_b * wx)
        fby = -rb * (G * say + gads_b * wy)
        fbz = -rb * (G * saz + gads_b * wz)

        denom = ra / tau_a + rb / tau_b
        if denom > 0.0:
            ux = (jax / tau_a + jbx / tau_b) / denom
            uy = (jay / tau_a + jby / tau_b) / denom
            uz = (jaz / tau_a + jbz / tau_b) / denom
        else:
            ux = 0.0
            uy = 0.0
            uz = 0.0
        for k in range(2):
            if k == 0:
                r = ra
                tau = tau_a
                fx = fax
                fy = fay
                fz = faz
            else:
                r = rb
                tau = tau_b
                fx = fbx
                fy = fby
                fz = fbz
            if r > 0.0:
                vx = ux + tau * fx / r
                vy = uy + tau * fy / r
                vz = uz + tau * fz / r
            else:
                vx = ux
                vy = uy
                vz = uz
            usq = 1.5 * (vx * vx + vy * vy + vz * vz)
            omega = 1.0 / tau
            for i in range(19):
                eu = 3.0 * (EX[i] * vx + EY[i] * vy + EZ[i] * vz)
                feq = W[i] * r * (1.0 + eu + 0.5 * eu * eu - usq)
                fi = f[c, k, i]
                fpost[c, k, i] = fi - omega * (fi - feq)
    return bad


@njit(nogil=True, cache=True, fastmath=_FASTMATH_SUM)
def _stream(fpost, nbr, kind, bc, lo, hi, f, rho):
    for c in range(lo, hi):
        kd = kind[c]
        if kd != 0:
            for k in range(2):
                r = bc[kd - 1, k]
                for i in range(19):
                    f[c, k, i] = W[i] * r
                rho[c, k] = r
            continue
        for k in range(2):
            total = 0.0
            for i in range(19):
                src = nbr[c, i]
                if src >= 0:
                    v = fpost[src, k, i]
                else:
                    v = fpost[c, k, OPP[i]]
                f[c, k, i] = v
                total += v
            rho[c, k] = total


@njit(nogil=True, cache=True, fastmath=_FASTMATH_SUM)
def _densities(f, lo, hi, rho):
    for c in range(lo, hi):
        for k in range(2):
            total = 0.0
            for i in range(19):
                total += f[c, k, i]
            rho[c, k] = total


class LatticeState:
    """Distributions and geometry of one two-component simulation.

    Attributes
    ----------
    f : ndarray, shape (n, 2, 19)
        Distributions of components a (electrolyte) and b (gas) on the ``n``
        open cells.
    rho : ndarray, shape (n, 2)
    cells : ndarray, shape (n,)
        Linear voxel index of every open cell.
    nbr : ndarray, shape (n, 19)
        Open cell at ``x - e_i`` (the pull source of direction ``i``), or -1
        where that voxel is solid or outside a closed domain edge.
    wall : ndarray, shape (n, 3)
        ``sum_i w_i e_i`` over the ``SOLID_INTERFACE`` neighbours ``x + e_i``.
    cell_type : ndarray, shape (nx, ny, nz)
        FLUID, SOLID_INTERFACE, SOLID_BULK, INLET or OUTLET.
    """

    def __init__(self, shape, cell_type, cells, nbr, wall, kind, f, params, periodic,
                 inlet=None, outlet=None):
        self.shape = tuple(shape)
        self.cell_type = cell_type
        self.cells = cells
        self.nbr = nbr
        self.wall = wall
        self.kind = kind
        self.f = f
        self.fpost = np.empty_like(f)
        self.rho = np.empty((f.shape[0], 2))
        _densities(f, 0, f.shape[0], self.rho)
        self.params = params
        self.periodic = tuple(periodic)
        self.inlet = inlet
        self.outlet = outlet
        self.step_index = 0
        self.bc = np.zeros((2, 2))  # rows: inlet, outlet; cols: rho_a, rho_b
        self.bc[0] = (params.rho_major, params.rho_minor)
        self.bc[1] = (params.rho_minor, params.rho_major)

    @property
    def n_cells(self):
        return self.f.shape[0]

    def copy(self):
        new = object.__new__(LatticeState)
        new.__dict__.update(self.__dict__)
        new.f = self.f.copy()
        new.fpost = np.empty_like(self.f)
        new.rho = self.rho.copy()
        new.bc = self.bc.copy()
        return new

    def set_inlet_offset(self, offset):
        """Raise the inlet electrolyte density by ``offset`` above its base value."""
        self.bc[0, 0] = self.params.rho_major + offset
        inlet = self.kind == _K_INLET
        for k in range(2):
            self.f[inlet, k, :] = W[None, :] * self.bc[0, k]
            self.rho[inlet, k] = self.bc[0, k]

    def boundary_pressures(self):
        G = self.params.G_ab
        return pressure(*self.bc[0], G), pressure(*self.bc[1], G)

    def mass(self):
        """Total mass of each component."""
        return self.f.sum(axis=(0, 2))

    def field(self, values, fill=np.nan):
        """Scatter a per-cell array onto the full ``(nx, ny, nz)`` grid."""
        values = np.asarray(values)
        out = np.full(int(np.prod(self.shape)), fill, dtype=values.dtype)
        out[self.cells] = values
        return out.reshape(self.shape, order="F")

    def density_fields(self):
        return self.field(self.rho[:, 0], 0.0), self.field(self.rho[:, 1], 0.0)

    def pressure_field(self):
        return self.field(pressure(self.rho[:, 0], self.rho[:, 1], self.params.G_ab))

    def forces(self):
        """Shan-Chen plus adhesion force on each component, shape ``(n, 2, 3)``."""
        p = self.params
        sums = np.zeros((self.n_cells, 2, 3))
        for i in range(1, Q):
            s = self.nbr[:, OPP[i]]
            ok = s >= 0
            nb = np.where(ok[:, None], self.rho[np.maximum(s, 0)], 0.0)
            sums += W[i] * nb[:, :, None] * E[i][None, None, :]
        out = np.empty_like(sums)
        out[:, 0] = -self.rho[:, 0:1] * (p.G_ab * sums[:, 1] + p.G_ads_a * self.wall)
        out[:, 1] = -self.rho[:, 1:2] * (p.G_ab * sums[:, 0] + p.G_ads_b * self.wall)
        return out

    def velocity(self):
        """Barycentric velocity ``(n, 3)`` including the half-force correction."""
        j = np.einsum("nki,id->nd", self.f, E.astype(float))
        force = self.forces().sum(axis=1)
        total = self.rho.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            u = (j + 0.5 * force) / total[:, None]
        return np.nan_to_num(u)

    def electrolyte_mask(self):
        """Open cells where the electrolyte is the majority (ties count as gas)."""
        return self.rho[:, 0] > self.rho[:, 1]

    def saturation(self):
        return float(np.count_nonzero(self.electrolyte_mask())) / self.n_cells

    def digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.f).tobytes()).hexdigest()


def _slab_bounds(state, workers):
    """Cell-range boundaries of ``workers`` z-slabs of (nearly) equal thickness."""
    nx, ny, nz = state.shape
    planes = np.linspace(0, nz, workers + 1).round().astype(np.int64)
    return np.searchsorted(state.cells, planes * nx * ny).tolist()


def _build_tables(open_mask, interface_mask, periodic):
    shape = open_mask.shape
    flat_open = open_mask.ravel(order="F")
    cells = np.flatnonzero(flat_open).astype(np.int64)
    n = len(cells)
    index_of = np.full(flat_open.size, -1, dtype=np.int64)
    index_of[cells] = np.arange(n)
    coords = np.stack(np.unravel_index(cells, shape, order="F"))

    def lookup(offset, table):
        q = coords + offset[:, None]
        valid = np.ones(n, dtype=bool)
        for d in range(3):
            if periodic[d]:
                q[d] %= shape[d]
            else:
                valid &= (q[d] >= 0) & (q[d] < shape[d])
        q = np.where(valid, q, 0)
        lin = q[0] + shape[0] * (q[1] + shape[1] * q[2])
        return np.where(valid, table[lin], table.dtype.type(0) if table.dtype == bool else -1)

    nbr = np.empty((n, Q), dtype=np.int32)
    for i in range(Q):
        nbr[:, i] = lookup(-E[i], index_of)
    flat_iface = interface_mask.ravel(order="F")
    wall = np.zeros((n, 3))
    for i in range(1, Q):
        hit = lookup(E[i], flat_iface).astype(float)
        wall += W[i] * hit[:, None] * E[i][None, :]
    return cells, nbr, wall


def init_lattice(img, params, inlet=None, outlet=None, periodic=(False, False, False),
                 perturbation=0.0, seed=0):
    """Build the initial state for ``img``.

    Open voxels labelled ``ELECTROLYTE`` start electrolyte-rich, all other
    open voxels gas-rich.  With an ``inlet`` face, the open voxels of that
    face form a fixed-density electrolyte reservoir; the ``outlet`` face
    layer is a fixed-density gas reservoir.  Non-periodic domain edges act
    as neutral walls.  ``perturbation`` adds seeded relative noise to both
    densities.

    Raises
    ------
    NoPorePhase
        No open voxel in the image.
    """
    img = vg.classify_solid(img)
    labels = img.labels
    open_mask = img.mask(vg.FLUID_LABELS)
    if not open_mask.any():
        raise NoPorePhase("no open voxels to simulate")
    cell_type = np.where(open_mask, FLUID, np.where(labels == vg.SOLID_INTERFACE,
                                                    SOLID_INTERFACE, SOLID_BULK)).astype(np.uint8)
    inlet_mask = np.zeros_like(open_mask)
    outlet_mask = np.zeros_like(open_mask)
    if inlet is not None:
        inlet_mask[vg.face_slice(img.shape, inlet)] = True
        inlet_mask &= open_mask
    if outlet is not None:
        outlet_mask[vg.face_slice(img.shape, outlet)] = True
        outlet_mask &= open_mask & ~inlet_mask
    cell_type[inlet_mask] = INLET
    cell_type[outlet_mask] = OUTLET
    if inlet is not None and outlet is not None:
        comps, _ = ndi.label(open_mask)
        shared = np.intersect1d(comps[inlet_mask], comps[outlet_mask])
        if not np.any(shared > 0):
            warnings.warn("no open path between inlet and outlet faces", NoPorePath)

    cells, nbr, wall = _build_tables(open_mask, cell_type == SOLID_INTERFACE, periodic)
    flat_type = cell_type.ravel(order="F")[cells]
    kind = np.full(len(cells), _K_FLUID, dtype=np.int64)
    kind[flat_type == INLET] = _K_INLET
    kind[flat_type == OUTLET] = _K_OUTLET

    electrolyte = (labels.ravel(order="F")[cells] == vg.ELECTROLYTE) | (kind == _K_INLET)
    electrolyte &= kind != _K_OUTLET
    rho_a = np.where(electrolyte, params.rho_major, params.rho_minor)
    rho_b = np.where(electrolyte, params.rho_minor, params.rho_major)
    if perturbation:
        rng = np.random.default_rng(seed)
        noise = rng.uniform(-perturbation, perturbation, (2, len(cells)))
        fluid = kind == _K_FLUID
        rho_a = np.where(fluid, rho_a * (1.0 + noise[0]), rho_a)
        rho_b = np.where(fluid, rho_b * (1.0 + noise[1]), rho_b)
    f = np.empty((len(cells), 2, Q))
    f[:, 0, :] = rho_a[:, None] * W[None, :]
    f[:, 1, :] = rho_b[:, None] * W[None, :]
    return LatticeState(img.shape, cell_type, cells, nbr, wall, kind, f,
                        params, periodic, inlet, outlet)


class Stepper:
    """Runs time steps over z-slabs, one thread per slab.

    Each step has two phases separated by a barrier: collide (reads the
    densities of neighbouring cells, which may live in another slab) and
    stream (pulls post-collision populations across slab borders).  Every
    cell is updated by the same arithmetic regardless of the slab count,
    so results do not depend on ``workers``.
    """

    def __init__(self, state, workers=1):
        self.state = state
        self.workers = max(1, int(workers))
        bounds = _slab_bounds(state, self.workers)
        self.ranges = [(bounds[i], bounds[i + 1]) for i in range(self.workers)]
        self.pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        self.touched = 0

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _map(self, fn, *args):
        if self.pool is None:
            return [fn(*args, lo, hi) for lo, hi in self.ranges]
        futures = [self.pool.submit(fn, *args, lo, hi) for lo, hi in self.ranges]
        return [fut.result() for fut in futures]

    def _collide_slab(self, lo, hi):
        s, p = self.state, self.state.params
        return _collide(s.f, s.rho, s.nbr, s.wall, s.kind, lo, hi, p.G_ab, p.G_ads_a,
                        p.G_ads_b, p.tau_a, p.tau_b, s.fpost)

    def _stream_slab(self, lo, hi):
        s = self.state
        _stream(s.fpost, s.nbr, s.kind, s.bc, lo, hi, s.f, s.rho)
        return hi - lo

    def step(self, n=1):
        s = self.state
        for _ in range(n):
            bad = self._map(self._collide_slab)
            if any(bad):
                raise NumericBlowup(f"density out of range at step {s.step_index}",
                                    step_index=s.step_index)
            self.touched = sum(self._map(self._stream_slab))
            s.step_index += 1
        return s


def step(state, params=None, n=1, workers=1):
    """Advance ``state`` by ``n`` time steps in place and return it."""
    if params is not None and params != state.params:
        state.params = params
    with Stepper(state, workers) as stepper:
        return stepper.step(n)


def write_checkpoint(state, path):
    """``.lbc``: one ASCII header line, then little-endian float64 distributions."""
    nx, ny, nz = state.shape
    header = (f"LBC1 {nx} {ny} {nz} {state.n_cells} {state.step_index} "
              f"{state.params.digest()}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(state.f, dtype="<f8").tobytes())


def read_checkpoint(path, state):
    """Load distributions saved by ``write_checkpoint`` into a matching ``state``."""
    with open(path, "rb") as fh:
        head = fh.readline().decode("ascii").split()
        payload = fh.read()
    if len(head) != 7 or head[0] != "LBC1":
        raise InvalidImage(f"{path}: not an LBC1 checkpoint")
    dims = tuple(int(v) for v in head[1:4])
    n, step_index, digest = int(head[4]), int(head[5]), head[6]
    if dims != state.shape or n != state.n_cells:
        raise InvalidImage(f"{path}: checkpoint geometry does not match state")
    if digest != state.params.digest():
        raise InvalidImage(f"{path}: checkpoint was written with different parameters")
    f = np.frombuffer(payload, dtype="<f8")
    if f.size != 2 * Q * n:
        raise InvalidImage(f"{path}: truncated checkpoint")
    state.f[:] = f.reshape(n, 2, Q)
    _densities(state.f, 0, n, state.rho)
    state.step_index = step_index
    return state
