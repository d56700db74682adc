"""Pore-network extraction by marker-based watershed (SNOW-style).

The pore space is partitioned into watershed basins of the smoothed
distance map, seeded by corrected distance-map peaks.  Each basin becomes
a spherical pore; touching basins are joined by a cylindrical throat.
"""

from dataclasses import dataclass, field
import csv
import logging

import numpy as np
from scipy import ndimage as ndi
from scipy.spatial import cKDTree
from skimage.segmentation import watershed

from . import voxelgrid as vg
from .errors import EmptyNetwork, NoPorePhase

logger = logging.getLogger(__name__)

# half of the 26-neighbourhood; each unordered voxel pair is visited once
_HALF_OFFSETS = [
    (dx, dy, dz)
    for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
    if (dz, dy, dx) > (0, 0, 0)
]


@dataclass(frozen=True)
class SnowParams:
    sigma: float = 0.4
    maxfilter_radius: int = 4
    merge_radius_factor: float = 0.75

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.maxfilter_radius < 1:
            raise ValueError("maxfilter_radius must be >= 1")
        if self.merge_radius_factor < 0:
            raise ValueError("merge_radius_factor must be non-negative")


@dataclass(eq=False)
class PoreNetwork:
    """Spherical pores joined by cylindrical throats.

    Lengths are in micrometres.  Throats are stored with ``a < b`` and sorted
    by ``(a, b)``; the throat id is its row in that order.
    """

    pore_center: np.ndarray
    pore_diameter: np.ndarray
    pore_volume: np.ndarray
    throat_conns: np.ndarray
    throat_diameter: np.ndarray
    throat_length: np.ndarray
    face_labels: dict = field(default_factory=dict)
    pore_voxels: np.ndarray = None
    regions: np.ndarray = None  # watershed labels (pore id + 1), not serialised

    def __post_init__(self):
        self.pore_center = np.asarray(self.pore_center, float).reshape(-1, 3)
        self.pore_diameter = np.asarray(self.pore_diameter, float).ravel()
        self.pore_volume = np.asarray(self.pore_volume, float).ravel()
        n = len(self.pore_diameter)
        if self.pore_voxels is None:
            self.pore_voxels = np.zeros(n, dtype=np.int64)
        self.pore_voxels = np.asarray(self.pore_voxels, np.int64).ravel()
        if len(self.pore_center) != n or len(self.pore_volume) != n:
            raise ValueError("pore arrays have inconsistent lengths")

        conns = np.asarray(self.throat_conns, np.int64).reshape(-1, 2)
        diam = np.asarray(self.throat_diameter, float).ravel()
        length = np.asarray(self.throat_length, float).ravel()
        if not (len(conns) == len(diam) == len(length)):
            raise ValueError("throat arrays have inconsistent lengths")
        if len(conns):
            if conns.min() < 0 or conns.max() >= n:
                raise ValueError("throat references a missing pore")
            if np.any(conns[:, 0] == conns[:, 1]):
                raise ValueError("throat joins a pore to itself")
            if np.any(diam <= 0):
                raise ValueError("throat diameters must be positive")
        conns = np.sort(conns, axis=1)
        order = np.lexsort((conns[:, 1], conns[:, 0]))
        conns, diam, length = conns[order], diam[order], length[order]
        if len(conns) > 1 and np.any(np.all(conns[1:] == conns[:-1], axis=1)):
            raise ValueError("duplicate throat")
        self.throat_conns, self.throat_diameter, self.throat_length = conns, diam, length

        faces = {f: frozenset() for f in vg.FACES}
        faces.update({f: frozenset(int(p) for p in ids) for f, ids in self.face_labels.items()})
        self.face_labels = faces

    @property
    def n_pores(self):
        return len(self.pore_diameter)

    @property
    def n_throats(self):
        return len(self.throat_conns)

    def neighbors(self):
        """Per-pore list of ``(throat_id, other_pore)``."""
        adj = [[] for _ in range(self.n_pores)]
        for t, (a, b) in enumerate(self.throat_conns):
            adj[a].append((t, int(b)))
            adj[b].append((t, int(a)))
        return adj

    def pore_faces(self):
        out = [[] for _ in range(self.n_pores)]
        for face in vg.FACES:
            for p in sorted(self.face_labels[face]):
                out[p].append(face)
        return out


def _ball(radius):
    r = int(radius)
    g = np.ogrid[-r:r + 1, -r:r + 1, -r:r + 1]
    return (g[0] ** 2 + g[1] ** 2 + g[2] ** 2) <= r * r


def _open_distance(img):
    pore = img.mask(vg.FLUID_LABELS)
    if not pore.any():
        raise NoPorePhase("image has no pore voxels")
    if pore.all():
        # no solid at all: measure to the domain exterior instead
        padded = np.pad(pore, 1, constant_values=False)
        return pore, ndi.distance_transform_edt(padded)[1:-1, 1:-1, 1:-1]
    return pore, ndi.distance_transform_edt(pore)


def find_peaks(dt_smooth, pore, radius):
    """Local maxima of the smoothed distance map, one voxel per plateau."""
    maxed = ndi.maximum_filter(dt_smooth, footprint=_ball(radius), mode="nearest")
    peaks = pore & (dt_smooth == maxed) & (dt_smooth > 0)
    plateaus, n = ndi.label(peaks, structure=np.ones((3, 3, 3)))
    if n == 0:
        return np.empty(0, dtype=np.int64)
    flat = plateaus.ravel(order="F")
    ids, first = np.unique(flat, return_index=True)
    return np.sort(first[ids > 0])


def _ensure_component_markers(peaks, dt, pore):
    """Add one peak to every pore component that has none."""
    comps, n = ndi.label(pore, structure=np.ones((3, 3, 3)))
    flat_c = comps.ravel(order="F")
    flat_dt = dt.ravel(order="F")
    has = np.zeros(n + 1, dtype=bool)
    has[flat_c[peaks]] = True
    missing = np.flatnonzero(~has[1:]) + 1
    extra = []
    for c in missing:
        idx = np.flatnonzero(flat_c == c)
        extra.append(idx[np.argmax(flat_dt[idx])])  # argmax keeps smallest index
    if extra:
        peaks = np.sort(np.concatenate([peaks, np.asarray(extra, dtype=np.int64)]))
    return peaks, flat_c


def merge_peaks(coords, radii, factor, groups=None):
    """Greedy proximity merge of peaks.

    Pairs closer than ``factor * max(radius_a, radius_b)`` are visited by
    ascending distance (ties: smaller index pair first); the peak with the
    smaller radius is dropped (ties: the larger index).  Peaks in different
    ``groups`` never merge.  Returns a boolean keep-mask.
    """
    n = len(coords)
    keep = np.ones(n, dtype=bool)
    if n < 2 or factor <= 0:
        return keep
    tree = cKDTree(coords)
    pairs = tree.query_pairs(factor * float(radii.max()), output_type="ndarray")
    if len(pairs) == 0:
        return keep
    i, j = pairs[:, 0], pairs[:, 1]
    dist = np.linalg.norm(coords[i] - coords[j], axis=1)
    ok = dist < factor * np.maximum(radii[i], radii[j])
    if groups is not None:
        ok &= groups[i] == groups[j]
    i, j, dist = i[ok], j[ok], dist[ok]
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    for k in np.lexsort((hi, lo, dist)):
        a, b = lo[k], hi[k]
        if keep[a] and keep[b]:
            keep[b if radii[a] >= radii[b] else a] = False
    return keep


def _throats(regions, dt, n_regions):
    """Adjacent region pairs and the largest bottleneck distance on each interface."""
    keys = []
    vals = []
    nx, ny, nz = regions.shape
    for dx, dy, dz in _HALF_OFFSETS:
        src = tuple(slice(max(0, -d), n - max(0, d)) for d, n in zip((dx, dy, dz), (nx, ny, nz)))
        dst = tuple(slice(max(0, d), n - max(0, -d)) for d, n in zip((dx, dy, dz), (nx, ny, nz)))
        ra, rb = regions[src], regions[dst]
        hit = (ra > 0) & (rb > 0) & (ra != rb)
        if not hit.any():
            continue
        a, b = ra[hit].astype(np.int64), rb[hit].astype(np.int64)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys.append(lo * (n_regions + 1) + hi)
        vals.append(np.minimum(dt[src][hit], dt[dst][hit]))
    if not keys:
        return np.empty((0, 2), dtype=np.int64), np.empty(0)
    keys = np.concatenate(keys)
    vals = np.concatenate(vals)
    order = np.argsort(keys, kind="stable")
    keys, vals = keys[order], vals[order]
    uniq, start = np.unique(keys, return_index=True)
    best = np.maximum.reduceat(vals, start)
    pairs = np.stack([uniq // (n_regions + 1), uniq % (n_regions + 1)], axis=1)
    return pairs, best


def extract_network(img, params=None):
    """Segment the pore space of ``img`` and build its pore network.

    Parameters
    ----------
    img : VoxelImage
        Binarised image; every open label (pore, electrolyte, gas) counts
        as pore space.
    params : SnowParams, optional
        Smoothing, peak-detection and peak-merge settings.

    Returns
    -------
    PoreNetwork
        Pore ids follow the linear index of their peak voxel.

    Raises
    ------
    NoPorePhase
        The image has no open voxel.
    EmptyNetwork
        No peak survives the corrections.
    """
    params = params or SnowParams()
    vs = img.voxel_size
    pore, dt = _open_distance(img)
    if params.sigma > 0:
        smooth = ndi.gaussian_filter(dt, sigma=params.sigma, mode="nearest")
    else:
        smooth = dt.copy()
    smooth[~pore] = 0.0

    peaks = find_peaks(smooth, pore, params.maxfilter_radius)
    peaks, comp_flat = _ensure_component_markers(peaks, dt, pore)
    coords = np.stack(np.unravel_index(peaks, img.shape, order="F"), axis=1).astype(float)
    radii = dt.ravel(order="F")[peaks]
    keep = merge_peaks(coords, radii, params.merge_radius_factor, comp_flat[peaks])
    peaks = peaks[keep]
    if len(peaks) == 0:
        raise EmptyNetwork("no peaks survived correction")
    logger.debug("%d peaks after correction", len(peaks))

    markers = np.zeros(img.shape, dtype=np.int32)
    pidx = np.unravel_index(peaks, img.shape, order="F")
    markers[pidx] = np.arange(1, len(peaks) + 1, dtype=np.int32)
    regions = watershed(-smooth, markers=markers, mask=pore, connectivity=3)

    n = len(peaks)
    counts = np.bincount(regions.ravel(), minlength=n + 1)[1:]
    centers = (np.stack(pidx, axis=1) + 0.5) * vs
    diam = 2.0 * dt[pidx] * vs

    pairs, bottleneck = _throats(regions, dt, n)
    conns = pairs - 1
    t_diam = 2.0 * bottleneck * vs
    if len(conns):
        gap = np.linalg.norm(centers[conns[:, 0]] - centers[conns[:, 1]], axis=1)
        t_len = np.maximum(gap - 0.5 * diam[conns[:, 0]] - 0.5 * diam[conns[:, 1]], vs)
    else:
        t_len = np.empty(0)

    faces = {}
    for face in vg.FACES:
        ids = np.unique(regions[vg.face_slice(img.shape, face)])
        faces[face] = frozenset(int(i) - 1 for i in ids if i > 0)

    return PoreNetwork(
        pore_center=centers,
        pore_diameter=diam,
        pore_volume=counts * vs ** 3,
        pore_voxels=counts,
        throat_conns=conns,
        throat_diameter=t_diam,
        throat_length=t_len,
        face_labels=faces,
        regions=regions,
    )


def median_pore_diameter(net):
    """Volume-weighted median inscribed diameter.

    The smallest diameter ``d`` such that pores with diameter ``<= d`` hold at
    least half of the total pore volume.
    """
    if net.n_pores == 0:
        raise EmptyNetwork("network has no pores")
    order = np.argsort(net.pore_diameter, kind="stable")
    d = net.pore_diameter[order]
    cum = np.cumsum(net.pore_volume[order])
    k = int(np.searchsorted(cum, 0.5 * cum[-1], side="left"))
    return float(d[min(k, len(d) - 1)])


def network_stats(net):
    if net.n_pores == 0:
        raise EmptyNetwork("network has no pores")
    return {
        "pore_count": net.n_pores,
        "throat_count": net.n_throats,
        "d50": median_pore_diameter(net),
        "mean_coordination": 2.0 * net.n_throats / net.n_pores,
    }


def write_network(net, pores_path, throats_path):
    faces = net.pore_faces()
    with open(pores_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x_um", "y_um", "z_um", "diameter_um", "volume_um3", "faces"])
        for i in range(net.n_pores):
            x, y, z = net.pore_center[i]
            w.writerow([i, repr(float(x)), repr(float(y)), repr(float(z)),
                        repr(float(net.pore_diameter[i])), repr(float(net.pore_volume[i])),
                        ";".join(faces[i])])
    with open(throats_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pore_a", "pore_b", "diameter_um", "length_um"])
        for (a, b), d, l in zip(net.throat_conns, net.throat_diameter, net.throat_length):
            w.writerow([int(a), int(b), repr(float(d)), repr(float(l))])


def read_network(pores_path, throats_path):
    with open(pores_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["id"]))
    if [int(r["id"]) for r in rows] != list(range(len(rows))):
        raise ValueError(f"{pores_path}: pore ids must be 0..N-1")
    faces = {f: set() for f in vg.FACES}
    for r in rows:
        for f in filter(None, r["faces"].split(";")):
            faces[f].add(int(r["id"]))
    with open(throats_path, newline="", encoding="utf-8") as fh:
        trows = list(csv.DictReader(fh))
    return PoreNetwork(
        pore_center=[[float(r["x_um"]), float(r["y_um"]), float(r["z_um"])] for r in rows],
        pore_diameter=[float(r["diameter_um"]) for r in rows],
        pore_volume=[float(r["volume_um3"]) for r in rows],
        throat_conns=[[int(r["pore_a"]), int(r["pore_b"])] for r in trows],
        throat_diameter=[float(r["diameter_um"]) for r in trows],
        throat_length=[float(r["length_um"]) for r in trows],
        face_labels=faces,
    )
