"""Workflow configuration: an INI-style ``key = value`` file with sections.

Grammar (all sections optional except ``[structure]`` and ``[sweep]``)::

    [structure]
    source = generate          ; or: file
    path = input.vxi           ; source = file only
    nx = 32                    ; generate only, likewise ny, nz, voxel_size,
    radius_mean = 5            ;   radius_sd, porosity, seed
    perforate_diameter = 6     ; optional hole pattern (diameter, pitch, depth, axis)

    [snow]                     ; SnowParams fields
    [sweep]
    sigmas = 0.03, 0.072       ; N/m, comma separated
    thetas = 30, 60            ; degrees
    reference_sigma = 0.03     ; default: first entries of the lists
    reference_theta = 60
    trapping = true
    inlet = xmin               ; outlet defaults to the opposite face

    [lbm]                      ; ShanChenParams fields, plus
    sigma_lat = 0.16           ; optional; measured by a Laplace droplet if absent
    laplace_radius = 6
    [fill]                     ; FillProtocol fields (pressure_steps comma separated)
    [units]
    nu_phys = 1e-6             ; m^2/s of the electrolyte
    [transport]
    axis = x
    [run]
    out = run
    workers = 1
    seed = 0

Unknown keys are rejected so typos do not silently fall back to defaults.
"""

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .lbm.fill import FillProtocol
from .lbm.lattice import ShanChenParams
from .netextract import SnowParams
from .voxelgrid import FACES

_STRUCTURE_KEYS = {"source", "path", "nx", "ny", "nz", "voxel_size", "radius_mean", "radius_sd",
                   "porosity", "seed", "tolerance", "perforate_diameter", "perforate_pitch",
                   "perforate_depth", "perforate_axis"}


@dataclass
class WorkflowConfig:
    structure: dict
    snow: SnowParams = field(default_factory=SnowParams)
    sigmas: tuple = (0.03,)
    thetas: tuple = (60.0,)
    reference: tuple = (0.03, 60.0)
    trapping: bool = True
    inlet: str = "xmin"
    shan_chen: ShanChenParams = field(default_factory=ShanChenParams)
    sigma_lat: float = None
    laplace_radius: float = 6.0
    protocol: FillProtocol = field(default_factory=FillProtocol)
    nu_phys: float = 1e-6
    transport_axis: str = "x"
    out: str = "run"
    workers: int = 1
    seed: int = 0

    def validate(self):
        src = self.structure.get("source")
        if src not in ("generate", "file"):
            raise ConfigError("[structure] source must be 'generate' or 'file'")
        if src == "file" and "path" not in self.structure:
            raise ConfigError("[structure] source = file needs a path")
        if src == "generate" and "path" in self.structure:
            raise ConfigError("[structure] give either generation parameters or a path, not both")
        if not self.sigmas or not self.thetas:
            raise ConfigError("[sweep] sigmas and thetas must be non-empty")
        if self.inlet not in FACES:
            raise ConfigError(f"[sweep] unknown inlet face {self.inlet!r}")
        if self.transport_axis not in ("x", "y", "z"):
            raise ConfigError("[transport] axis must be x, y or z")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self


def _floats(text, key):
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _dataclass_from(section, cls, name, list_keys=()):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        default = known[key].default
        try:
            if key in list_keys:
                kwargs[key] = _floats(raw, key)
            elif isinstance(default, bool):
                kwargs[key] = section.getboolean(key)
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


def _pop(section, key, conv, default, name):
    if key not in section:
        return default
    raw = section[key]
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{name}] {key}: {exc}") from None


def parse_config(text, base_dir="."):
    """Parse configuration ``text``; relative paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keys such as G_ads_a are case sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    allowed = {"structure", "snow", "sweep", "lbm", "fill", "units", "transport", "run"}
    extra = set(cp.sections()) - allowed
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    if not cp.has_section("structure"):
        raise ConfigError("missing [structure] section")
    if not cp.has_section("sweep"):
        raise ConfigError("missing [sweep] section")

    structure = dict(cp["structure"])
    unknown = set(structure) - _STRUCTURE_KEYS
    if unknown:
        raise ConfigError(f"[structure] unknown key(s): {', '.join(sorted(unknown))}")
    if "path" in structure:
        structure["path"] = str(Path(base_dir) / structure["path"])

    sweep = dict(cp["sweep"])
    sigmas = _floats(sweep.pop("sigmas", ""), "sigmas")
    thetas = _floats(sweep.pop("thetas", ""), "thetas")
    ref_s = _pop(sweep, "reference_sigma", float, sigmas[0] if sigmas else None, "sweep")
    ref_t = _pop(sweep, "reference_theta", float, thetas[0] if thetas else None, "sweep")
    sweep.pop("reference_sigma", None)
    sweep.pop("reference_theta", None)
    trapping = cp["sweep"].getboolean("trapping", fallback=True)
    sweep.pop("trapping", None)
    inlet = sweep.pop("inlet", "xmin")
    if sweep:
        raise ConfigError(f"[sweep] unknown key(s): {', '.join(sorted(sweep))}")

    lbm = dict(cp["lbm"]) if cp.has_section("lbm") else {}
    sigma_lat = _pop(lbm, "sigma_lat", float, None, "lbm")
    laplace_radius = _pop(lbm, "laplace_radius", float, 6.0, "lbm")
    lbm.pop("sigma_lat", None)
    lbm.pop("laplace_radius", None)
    scp = configparser.ConfigParser()
    scp.optionxform = str
    scp.read_dict({"lbm": lbm})

    units = dict(cp["units"]) if cp.has_section("units") else {}
    nu_phys = _pop(units, "nu_phys", float, 1e-6, "units")
    units.pop("nu_phys", None)
    if units:
        raise ConfigError(f"[units] unknown key(s): {', '.join(sorted(units))}")
    transport = dict(cp["transport"]) if cp.has_section("transport") else {}
    axis = transport.pop("axis", "x")
    if transport:
        raise ConfigError(f"[transport] unknown key(s): {', '.join(sorted(transport))}")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    out = run.pop("out", "run")
    workers = _pop(run, "workers", int, 1, "run")
    seed = _pop(run, "seed", int, 0, "run")
    run.pop("workers", None)
    run.pop("seed", None)
    if run:
        raise ConfigError(f"[run] unknown key(s): {', '.join(sorted(run))}")

    cfg = WorkflowConfig(
        structure=structure,
        snow=_dataclass_from(cp["snow"], SnowParams, "snow") if cp.has_section("snow") else SnowParams(),
        sigmas=sigmas, thetas=thetas, reference=(ref_s, ref_t), trapping=trapping, inlet=inlet,
        shan_chen=_dataclass_from(scp["lbm"], ShanChenParams, "lbm"),
        sigma_lat=sigma_lat, laplace_radius=laplace_radius,
        protocol=(_dataclass_from(cp["fill"], FillProtocol, "fill", ("pressure_steps",))
                  if cp.has_section("fill") else FillProtocol()),
        nu_phys=nu_phys, transport_axis=axis,
        out=str(Path(base_dir) / out), workers=workers, seed=seed,
    )
    return cfg.validate()


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def structure_params(cfg):
    """Typed generation / perforation parameters from ``[structure]``."""
    s = cfg.structure
    try:
        gen = dict(
            nx=int(s.get("nx", 32)), ny=int(s.get("ny", s.get("nx", 32))),
            nz=int(s.get("nz", s.get("nx", 32))), voxel_size=float(s.get("voxel_size", 1.0)),
            radius_mean=float(s.get("radius_mean", 5.0)), radius_sd=float(s.get("radius_sd", 1.0)),
            target_porosity=float(s.get("porosity", 0.5)), seed=int(s.get("seed", cfg.seed)),
            tolerance=float(s.get("tolerance", 0.01)),
        )
        perf = None
        if "perforate_diameter" in s:
            perf = dict(hole_diameter=float(s["perforate_diameter"]),
                        pitch=float(s.get("perforate_pitch", 4 * float(s["perforate_diameter"]))),
                        depth=float(s.get("perforate_depth", 1e9)),
                        axis=s.get("perforate_axis", "z"))
    except ValueError as exc:
        raise ConfigError(f"[structure] {exc}") from None
    return gen, perf
