"""Labeled voxel images: data model, I/O, generation and geometric primitives.

Labels are stored as a ``uint8`` array of shape ``(nx, ny, nz)``.  The linear
index of voxel ``(x, y, z)`` is ``x + nx*(y + ny*z)``, i.e. Fortran order,
which is also the byte order of the ``.vxi`` payload.
"""

import hashlib
from dataclasses import dataclass
import logging

import numpy as np
from scipy import ndimage as ndi

from .errors import BadGeometry, InvalidImage, UnreachablePorosity

logger = logging.getLogger(__name__)

PORE = 0
SOLID_BULK = 1
SOLID_INTERFACE = 2
ELECTROLYTE = 3
GAS = 4

LABEL_NAMES = {
    PORE: "PORE",
    SOLID_BULK: "SOLID_BULK",
    SOLID_INTERFACE: "SOLID_INTERFACE",
    ELECTROLYTE: "ELECTROLYTE",
    GAS: "GAS",
}
SOLID_LABELS = (SOLID_BULK, SOLID_INTERFACE)
FLUID_LABELS = (PORE, ELECTROLYTE, GAS)

AXES = {"x": 0, "y": 1, "z": 2}
FACES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")


@dataclass(frozen=True, eq=False)
class VoxelImage:
    labels: np.ndarray
    voxel_size: float = 1.0  # micrometres per voxel edge

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise InvalidImage(f"labels must be 3D, got shape {labels.shape}")
        if self.voxel_size <= 0:
            raise InvalidImage("voxel_size must be positive")
        if labels.size and labels.max() > GAS:
            raise InvalidImage(f"reserved label {int(labels.max())} in image")
        labels = labels.astype(np.uint8, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def shape(self):
        return self.labels.shape

    @property
    def nx(self):
        return self.labels.shape[0]

    @property
    def ny(self):
        return self.labels.shape[1]

    @property
    def nz(self):
        return self.labels.shape[2]

    def mask(self, phases):
        """Boolean mask of voxels whose label is in ``phases``."""
        if np.isscalar(phases):
            phases = (phases,)
        return np.isin(self.labels, list(phases))

    def with_labels(self, labels):
        return VoxelImage(labels, self.voxel_size)

    def count(self, label):
        return int(np.count_nonzero(self.labels == label))

    def linear_labels(self):
        """Labels flattened in the canonical linear order."""
        return self.labels.ravel(order="F")

    def __eq__(self, other):
        if not isinstance(other, VoxelImage):
            return NotImplemented
        return (self.voxel_size == other.voxel_size
                and self.labels.shape == other.labels.shape
                and bool(np.array_equal(self.labels, other.labels)))

    def __hash__(self):
        return hash((self.labels.shape, self.voxel_size, self.labels.tobytes()))

    def digest(self):
        """Content hash of shape, voxel size and labels."""
        h = hashlib.sha256(f"{self.shape} {self.voxel_size!r}".encode())
        h.update(self.linear_labels().tobytes())
        return h.hexdigest()


def linear_index(shape, x, y, z):
    nx, ny, _ = shape
    return x + nx * (y + ny * z)


def porosity(img):
    """Fraction of voxels that are open (pore, electrolyte or gas)."""
    return float(np.count_nonzero(img.mask(FLUID_LABELS))) / img.labels.size


def _ball_slices(center, radius, shape):
    lo = [max(int(np.floor(c - radius - 0.5)), 0) for c in center]
    hi = [min(int(np.ceil(c + radius + 0.5)) + 1, n) for c, n in zip(center, shape)]
    return tuple(slice(a, b) for a, b in zip(lo, hi))


def _ball_in_box(center, radius, slices):
    # voxel i covers [i, i+1) in voxel units; its centre is i + 0.5
    grids = np.ogrid[tuple(slice(s.start, s.stop) for s in slices)]
    d2 = sum((g + 0.5 - c) ** 2 for g, c in zip(grids, center))
    return d2 <= radius * radius


def generate_sphere_pack(nx, ny, nz, voxel_size, radius_mean, radius_sd,
                         target_porosity, seed, tolerance=0.01,
                         max_attempts=1_000_000):
    """Overlapping-sphere solid phase with a prescribed porosity.

    Spheres with normally distributed radii are placed one at a time at
    uniform random centres.  A sphere is rejected if it would push the
    porosity below ``target_porosity - tolerance``; placement stops once
    the porosity is within ``tolerance`` of the target.

    Raises
    ------
    UnreachablePorosity
        If ``max_attempts`` placements do not reach the target.
    """
    if not 0.0 < target_porosity < 1.0:
        raise ValueError("target_porosity must lie strictly between 0 and 1")
    if radius_mean < 2 * voxel_size:
        raise ValueError("radius_mean must be at least two voxels")
    if radius_sd < 0:
        raise ValueError("radius_sd must be non-negative")

    shape = (int(nx), int(ny), int(nz))
    rng = np.random.default_rng(seed)
    solid = np.zeros(shape, dtype=bool)
    total = solid.size
    n_solid = 0
    lo_solid = (1.0 - target_porosity - tolerance) * total
    hi_solid = (1.0 - target_porosity + tolerance) * total
    r_mean = radius_mean / voxel_size
    r_sd = radius_sd / voxel_size

    attempts = 0
    while n_solid < lo_solid:
        attempts += 1
        if attempts > max_attempts:
            raise UnreachablePorosity(
                f"porosity {1 - n_solid / total:.4f} after {max_attempts} attempts")
        center = rng.uniform(0.0, shape)
        radius = max(rng.normal(r_mean, r_sd), 1.0)
        sl = _ball_slices(center, radius, shape)
        ball = _ball_in_box(center, radius, sl)
        added = int(np.count_nonzero(ball & ~solid[sl]))
        if n_solid + added > hi_solid:
            continue
        solid[sl] |= ball
        n_solid += added

    logger.debug("sphere pack: %d attempts, porosity %.4f", attempts, 1 - n_solid / total)
    labels = np.where(solid, SOLID_BULK, PORE).astype(np.uint8)
    return VoxelImage(labels, voxel_size)


def face_neighbors(open_mask):
    """True where at least one of the 6 face neighbours is open.

    Out-of-domain neighbours count as closed.
    """
    out = np.zeros_like(open_mask)
    for axis in range(3):
        for shift in (1, -1):
            rolled = np.roll(open_mask, shift, axis=axis)
            edge = [slice(None)] * 3
            edge[axis] = 0 if shift == 1 else -1
            rolled[tuple(edge)] = False
            out |= rolled
    return out


def classify_solid(img):
    """Split the solid phase into interface and bulk voxels.

    A solid voxel with at least one open face neighbour becomes
    ``SOLID_INTERFACE``; the rest become ``SOLID_BULK``.  Open labels are
    left as they are.
    """
    solid = img.mask(SOLID_LABELS)
    touching = face_neighbors(~solid)
    labels = img.labels.copy()
    labels[solid & touching] = SOLID_INTERFACE
    labels[solid & ~touching] = SOLID_BULK
    return img.with_labels(labels)


def distance_transform(img, phase=PORE):
    """Exact Euclidean distance (in voxels) from ``phase`` voxels to the
    nearest voxel of any other label.  Zero outside the phase.

    The domain exterior is not treated as background.  If the image has no
    background voxel at all, phase voxels get ``inf``.
    """
    mask = img.mask(phase)
    if mask.all():
        return np.full(mask.shape, np.inf)
    return ndi.distance_transform_edt(mask)


def _structure(connectivity):
    if connectivity == 6:
        return ndi.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndi.generate_binary_structure(3, 3)
    raise ValueError("connectivity must be 6 or 26")


def canonical_relabel(labels, n):
    """Renumber regions 1..n by descending size, ties by smallest linear index."""
    if n == 0:
        return labels.astype(np.int32), 0
    flat = labels.ravel(order="F")
    sizes = np.bincount(flat, minlength=n + 1)
    _, first = np.unique(flat, return_index=True)
    present = np.unique(flat)
    first_index = np.zeros(n + 1, dtype=np.int64)
    first_index[present] = first
    ids = np.arange(1, n + 1)
    order = np.lexsort((first_index[ids], -sizes[ids]))
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[ids[order]] = np.arange(1, n + 1, dtype=np.int32)
    return remap[labels], n


def connected_components(img, phases, connectivity=26):
    """Label maximal connected regions of the voxels whose label is in ``phases``.

    Returns ``(labels, count)`` with labels ``1..count`` ordered by
    descending voxel count (ties: smallest linear index first) and 0 for
    background.
    """
    return label_mask(img.mask(phases), connectivity)


def label_mask(mask, connectivity=26):
    labels, n = ndi.label(mask, structure=_structure(connectivity))
    return canonical_relabel(labels, n)


def perforate(img, hole_diameter, pitch, depth, axis="z"):
    """Drill a square grid of cylindrical holes into the solid phase.

    Hole axes run parallel to ``axis``, starting at the axis-min face and
    reaching ``depth`` micrometres.  Hole centres sit at ``(k + 1/2)*pitch``
    along both transverse directions.  Solid voxels whose centres fall
    inside a hole become ``PORE``.
    """
    if hole_diameter >= pitch:
        raise BadGeometry("hole_diameter must be smaller than pitch")
    if hole_diameter <= 0 or pitch <= 0 or depth < 0:
        raise BadGeometry("hole_diameter, pitch must be positive and depth non-negative")
    ax = AXES[axis] if isinstance(axis, str) else int(axis)
    vs = img.voxel_size
    extent = img.shape[ax] * vs
    if depth > extent + 1e-9 * vs:
        raise BadGeometry(f"depth {depth} exceeds domain extent {extent}")

    t1, t2 = [a for a in range(3) if a != ax]
    c1 = (np.arange(img.shape[t1]) + 0.5) * vs
    c2 = (np.arange(img.shape[t2]) + 0.5) * vs
    # distance to the nearest hole centre on a square lattice
    d1 = np.abs((c1 % pitch) - 0.5 * pitch)
    d2 = np.abs((c2 % pitch) - 0.5 * pitch)
    r2 = (0.5 * hole_diameter) ** 2
    # only holes whose centre lies inside the domain
    n1 = int(np.floor(img.shape[t1] * vs / pitch - 0.5)) + 1
    n2 = int(np.floor(img.shape[t2] * vs / pitch - 0.5)) + 1
    hole_2d = (d1[:, None] ** 2 + d2[None, :] ** 2) <= r2
    hole_2d &= (np.floor(c1 / pitch) < n1)[:, None] & (np.floor(c2 / pitch) < n2)[None, :]

    along = (np.arange(img.shape[ax]) + 0.5) * vs <= depth
    cyl = np.zeros(img.shape, dtype=bool)
    view = np.moveaxis(cyl, (t1, t2, ax), (0, 1, 2))
    view[:] = hole_2d[:, :, None] & along[None, None, :]

    labels = img.labels.copy()
    labels[cyl & img.mask(SOLID_LABELS)] = PORE
    return img.with_labels(labels)


def face_slice(shape, face):
    """Index tuple selecting the one-voxel layer on a domain face."""
    axis = AXES[face[0]]
    sl = [slice(None)] * 3
    sl[axis] = 0 if face.endswith("min") else shape[axis] - 1
    return tuple(sl)


def opposite_face(face):
    return face[0] + ("max" if face.endswith("min") else "min")


def write_vxi(img, path):
    header = f"VXI1 {img.nx} {img.ny} {img.nz} {img.voxel_size!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(img.linear_labels().tobytes())


def read_vxi(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 5 or header[0] != "VXI1":
            raise InvalidImage(f"{path}: not a VXI1 file")
        nx, ny, nz = (int(v) for v in header[1:4])
        voxel_size = float(header[4])
        payload = fh.read()
    if len(payload) != nx * ny * nz:
        raise InvalidImage(f"{path}: expected {nx * ny * nz} bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype=np.uint8)
    if flat.size and flat.max() > GAS:
        raise InvalidImage(f"{path}: reserved label {int(flat.max())}")
    return VoxelImage(flat.reshape((nx, ny, nz), order="F"), voxel_size)


def write_vtk(img, path, name="labels"):
    """ASCII legacy VTK STRUCTURED_POINTS export (visualisation only)."""
    vs = img.voxel_size
    lines = [
        "# vtk DataFile Version 3.0",
        "porefill voxel image",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {img.nx} {img.ny} {img.nz}",
        "ORIGIN 0 0 0",
        f"SPACING {vs!r} {vs!r} {vs!r}",
        f"POINT_DATA {img.labels.size}",
        f"SCALARS {name} unsigned_char 1",
        "LOOKUP_TABLE default",
    ]
    flat = img.linear_labels()
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
        for start in range(0, flat.size, 32):
            fh.write(" ".join(map(str, flat[start:start + 32])) + "\n")
