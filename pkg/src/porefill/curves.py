"""Capillary pressure / saturation curves, the currency shared by all strands."""

from dataclasses import dataclass
import csv

import numpy as np

_HEADERS = {"Pa": "pressure_pa", "lu": "pressure_lu"}


@dataclass(frozen=True, eq=False)
class PressureSaturationCurve:
    pressures: np.ndarray
    saturations: np.ndarray
    unit: str = "Pa"  # "Pa" or "lu" (lattice units)

    def __post_init__(self):
        p = np.array(self.pressures, dtype=float).ravel()
        s = np.array(self.saturations, dtype=float).ravel()
        if p.shape != s.shape:
            raise ValueError("pressures and saturations differ in length")
        if np.any(np.diff(p) < 0):
            raise ValueError("pressures must be ascending")
        if self.unit not in _HEADERS:
            raise ValueError(f"unknown pressure unit {self.unit!r}")
        p.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "pressures", p)
        object.__setattr__(self, "saturations", s)

    def __len__(self):
        return len(self.pressures)

    def saturation_at(self, p):
        """Right-continuous step lookup; zero below the first sample."""
        idx = np.searchsorted(self.pressures, np.asarray(p, dtype=float), side="right") - 1
        sat = np.where(idx >= 0, self.saturations[np.maximum(idx, 0)], 0.0)
        return sat if np.ndim(p) else float(sat)

    def scaled(self, factor):
        return PressureSaturationCurve(self.pressures * factor, self.saturations, self.unit)

    def __eq__(self, other):
        if not isinstance(other, PressureSaturationCurve):
            return NotImplemented
        return (self.unit == other.unit
                and np.array_equal(self.pressures, other.pressures)
                and np.array_equal(self.saturations, other.saturations))


def write_curve(curve, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([_HEADERS[curve.unit], "saturation"])
        for p, s in zip(curve.pressures, curve.saturations):
            w.writerow([repr(float(p)), repr(float(s))])


def read_curve(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    units = {v: k for k, v in _HEADERS.items()}
    if len(head) != 2 or head[0] not in units or head[1] != "saturation":
        raise ValueError(f"{path}: unexpected curve header {head}")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
    return PressureSaturationCurve(data[:, 0], data[:, 1], units[head[0]])
