"""Calibration runs for the Shan-Chen model: Laplace droplets and sessile drops.

Both produce lattice-unit quantities that the unit bridge needs: the
surface tension ``sigma_lat`` and the map from adhesion strength to
contact angle.
"""

from dataclasses import dataclass, replace
import logging
import math

import numpy as np
from skimage import measure

from .. import voxelgrid as vg
from ..errors import NotConverged
from .lattice import ShanChenParams, Stepper, init_lattice, pressure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LaplaceResult:
    radius: float  # measured from the electrolyte volume
    delta_p: float
    sigma: float
    steps: int
    spurious_velocity: float


def _droplet_image(n, radius):
    g = np.indices((n, n, n)) + 0.5
    inside = ((g - n / 2.0) ** 2).sum(axis=0) <= radius * radius
    return vg.VoxelImage(np.where(inside, vg.ELECTROLYTE, vg.GAS).astype(np.uint8))


def _phase_fraction(ra, a_in, a_out):
    return np.clip((ra - a_out) / (a_in - a_out), 0.0, 1.0)


def laplace_test(radius, params=None, domain=None, max_steps=40000, check_interval=500,
                 tol=1e-5, workers=1):
    """Equilibrate a periodic electrolyte droplet and measure its surface tension.

    The droplet sits at the centre of a periodic cube of side
    ``ceil(4 * radius)`` (or ``domain``).  The run stops when the pressure
    jump changes by less than ``tol`` (relative) between checks.  The
    radius is taken from the electrolyte volume, and ``sigma = dp * R / 2``
    (Laplace law for a sphere).

    Raises
    ------
    NotConverged
        If the droplet dissolves (no interface left) or the step budget runs out.
    """
    params = params or ShanChenParams()
    n = int(domain or math.ceil(4 * radius))
    if n < 4 * radius:
        raise ValueError("domain must be at least 4 radii wide")
    state = init_lattice(_droplet_image(n, radius), params, periodic=(True, True, True))
    c = n // 2
    core = (slice(c - 1, c + 1),) * 3
    far = (slice(0, 2),) * 3
    last = None
    with Stepper(state, workers) as stepper:
        while state.step_index < max_steps:
            stepper.step(check_interval)
            ra, rb = state.density_fields()
            p = pressure(ra, rb, params.G_ab)
            a_in, a_out = ra[core].mean(), ra[far].mean()
            b_in, b_out = rb[core].mean(), rb[far].mean()
            if not (a_in > 2 * a_out and b_out > 2 * b_in):
                raise NotConverged(f"droplet of radius {radius} dissolved "
                                   f"(rho_a in/out {a_in:.3g}/{a_out:.3g})")
            dp = float(p[core].mean() - p[far].mean())
            if last is not None and abs(dp - last) <= tol * abs(dp):
                volume = _phase_fraction(ra, a_in, a_out).sum()
                r = (3.0 * volume / (4.0 * math.pi)) ** (1.0 / 3.0)
                u = float(np.abs(state.velocity()).max())
                return LaplaceResult(r, dp, dp * r / 2.0, state.step_index, u)
            last = dp
    raise NotConverged(f"Laplace droplet R={radius} not converged after {max_steps} steps")


def laplace_fit(results):
    """Linear fit of ``dp`` against ``1/R``.

    Returns ``(sigma, r_squared, spread)`` where ``sigma`` is half the slope
    and ``spread`` is ``(max - min) / mean`` of the per-droplet ``sigma``.
    """
    x = np.array([1.0 / r.radius for r in results])
    y = np.array([r.delta_p for r in results])
    if len(x) < 2:
        raise ValueError("need at least two droplets")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid ** 2).sum() / ss_tot if ss_tot > 0 else 1.0
    sig = np.array([r.sigma for r in results])
    return slope / 2.0, float(r2), float((sig.max() - sig.min()) / sig.mean())


@dataclass(frozen=True)
class ContactAngle:
    theta: float  # degrees, sphere fit of the iso-surface
    theta_geometric: float  # degrees, from cap height and base width
    radius: float
    height: float
    base: float
    steps: int


def _sessile_image(nxy, nz, radius):
    """Solid floor at ``z = 0`` with a hemispherical electrolyte drop on it."""
    g = np.indices((nxy, nxy, nz)).astype(float)
    g[:2] += 0.5
    # the bounce-back wall sits half-way between the floor and the first fluid layer
    r2 = (g[0] - nxy / 2.0) ** 2 + (g[1] - nxy / 2.0) ** 2 + (g[2] - 0.5) ** 2
    labels = np.where(r2 <= radius * radius, vg.ELECTROLYTE, vg.GAS).astype(np.uint8)
    labels[:, :, 0] = vg.SOLID_BULK
    return vg.VoxelImage(labels)


def fit_sphere(points):
    """Algebraic least-squares sphere; returns ``(centre, radius)``."""
    pts = np.asarray(points, dtype=float)
    A = np.column_stack([2 * pts, np.ones(len(pts))])
    b = (pts ** 2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    centre = sol[:3]
    return centre, float(math.sqrt(sol[3] + centre @ centre))


def measure_contact_angle(ra, wall_z=0.5, min_height=2.5):
    """Contact angle of a drop resting on a floor at ``z = wall_z``.

    ``ra`` is the electrolyte density on the full grid (solid set to the
    gas value).  The interface is the ``(max + min) / 2`` iso-surface.  A
    sphere is fitted to the iso-surface points above ``min_height``; the
    angle follows from where that sphere cuts the wall plane.  The second,
    independent estimate uses only the apex height ``h`` and the base width
    ``c`` of the drop: ``theta = 2 atan(2h / c)``.
    """
    level = 0.5 * (ra.max() + ra.min())
    verts, *_ = measure.marching_cubes(ra, level)
    top = verts[verts[:, 2] > min_height]
    centre, r = fit_sphere(top)
    cos_t = np.clip((wall_z - centre[2]) / r, -1.0, 1.0)
    theta = math.degrees(math.acos(cos_t))

    # apex: highest iso-surface point
    h = verts[:, 2].max() - wall_z
    # base: equivalent-circle radius r(z) of the drop footprint per layer.  The
    # wall-adjacent layer carries a diffuse foot, so layers 2..4 are used and
    # r^2 + z^2 (linear in z for a spherical cap) is extrapolated to the wall.
    a_in, a_out = ra.max(), ra[:, :, 1:].min()
    zs = np.arange(2, max(3, min(4, int(wall_z + h - 1))) + 1)
    r2 = [_phase_fraction(ra[:, :, z], a_in, a_out).sum() / math.pi for z in zs]
    slope, icpt = np.polyfit(zs, np.array(r2) + zs ** 2, 1)
    base_r = math.sqrt(max(icpt + slope * wall_z - wall_z ** 2, 0.0))
    base = 2.0 * base_r
    theta_geo = math.degrees(2.0 * math.atan(2.0 * h / base))
    return theta, theta_geo, r, h, base


def contact_angle(params, radius=10, size=None, max_steps=40000, check_interval=500,
                  tol=1e-3, workers=1):
    """Equilibrate a sessile drop and measure its contact angle.

    The floor is one solid layer at ``z = 0``; x and y are periodic, the top
    of the box is a neutral wall.  Converged when the fitted angle moves by
    less than ``tol`` degrees between checks.
    """
    nxy = int(size or math.ceil(5 * radius))
    nz = int(math.ceil(2.5 * radius)) + 2
    img = _sessile_image(nxy, nz, radius)
    state = init_lattice(img, params, periodic=(True, True, False))
    last = None
    with Stepper(state, workers) as stepper:
        while state.step_index < max_steps:
            stepper.step(check_interval)
            ra = state.field(state.rho[:, 0], params.rho_minor)
            if ra.max() < 2 * params.rho_minor * 10:
                raise NotConverged("sessile drop dissolved")
            theta, theta_geo, r, h, base = measure_contact_angle(ra)
            if last is not None and abs(theta - last) < tol:
                return ContactAngle(theta, theta_geo, r, h, base, state.step_index)
            last = theta
    raise NotConverged(f"sessile drop not converged after {max_steps} steps")


def contact_angle_calibration(adhesion, params=None, **kwargs):
    """Map adhesion strength ``g`` to the measured contact angle.

    Each ``g`` is applied antisymmetrically, ``G_ads_a = g``, ``G_ads_b = -g``,
    so a negative ``g`` pulls electrolyte onto the wall (theta < 90).
    Returns a list of ``(g, ContactAngle)`` in input order.
    """
    params = params or ShanChenParams()
    out = []
    for g in adhesion:
        p = replace(params, G_ads_a=float(g), G_ads_b=-float(g))
        out.append((float(g), contact_angle(p, **kwargs)))
        logger.info("G_ads=%g -> theta=%.2f", g, out[-1][1].theta)
    return out


def adhesion_for_angle(calibration, theta):
    """Interpolate the adhesion strength giving ``theta`` from a calibration map."""
    g = np.array([c[0] for c in calibration])
    t = np.array([c[1].theta for c in calibration])
    order = np.argsort(t)
    if not (t[order].min() <= theta <= t[order].max()):
        raise ValueError(f"theta={theta} outside calibrated range")
    return float(np.interp(theta, t[order], g[order]))


def check_separation(params, size=24, steps=4000, perturbation=0.01, seed=0, ratio=10.0):
    """Does a near-uniform 50/50 mix separate under ``params``?

    Returns the final ``max(rho_a) / min(rho_a)`` and whether it exceeds ``ratio``.
    """
    mix = 0.5 * (params.rho_major + params.rho_minor)
    p = replace(params, rho_major=mix, rho_minor=mix, G_ads_a=0.0, G_ads_b=0.0)
    img = vg.VoxelImage(np.zeros((size, size, size), dtype=np.uint8))
    state = init_lattice(img, p, periodic=(True, True, True), perturbation=perturbation, seed=seed)
    with Stepper(state) as stepper:
        stepper.step(steps)
    ra = state.rho[:, 0]
    r = float(ra.max() / max(ra.min(), 1e-300))
    return r, r > ratio
