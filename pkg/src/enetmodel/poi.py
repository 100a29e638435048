"""Performances of interest computed from two-port S-parameters.

Gains assume a z0-matched source and load, so the transducer gain is just
|S21|^2 and power/available gains only involve the port reflections.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np

from .twoport import SMatrix, Subcircuit, TwoPortError, mna_two_port

DB_FLOOR = -400.0  # file encoding of -inf dB

POI_NAMES = (
    "input_return_loss_db", "insertion_loss_db", "output_return_loss_db",
    "insertion_phase_deg", "transducer_gain_db", "power_gain_db",
    "available_gain_db", "rollett_k", "stability_mu",
)


def db20(x: float) -> float:
    return 20.0 * math.log10(x) if x > 0 else -math.inf


def db10(x: float) -> float:
    if x > 0:
        return 10.0 * math.log10(x)
    return -math.inf if x == 0 else math.nan


def wrap_phase(deg: float) -> float:
    """Wrap an angle in degrees into (-180, 180]."""
    w = math.fmod(deg, 360.0)
    if w > 180.0:
        w -= 360.0
    elif w <= -180.0:
        w += 360.0
    return w


@dataclass(frozen=True)
class PoiVector:
    input_return_loss_db: float
    insertion_loss_db: float
    output_return_loss_db: float
    insertion_phase_deg: float
    transducer_gain_db: float
    power_gain_db: float
    available_gain_db: float
    rollett_k: float
    stability_mu: float

    def __getitem__(self, name: str) -> float:
        if name not in POI_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def poi_from_s(s: SMatrix) -> PoiVector:
    """All in-scope PoIs of one S-matrix.

    Undefined quantities (power gain with |S11| >= 1, available gain with
    |S22| >= 1, mu with a zero denominator) come back as nan.
    """
    m11, m12, m21, m22 = abs(s.s11), abs(s.s12), abs(s.s21), abs(s.s22)
    gt = m21 ** 2
    den_p = 1.0 - m11 ** 2
    den_a = 1.0 - m22 ** 2
    gp = gt / den_p if den_p > 0 else math.nan
    ga = gt / den_a if den_a > 0 else math.nan

    delta = s.s11 * s.s22 - s.s12 * s.s21
    loop = abs(s.s12 * s.s21)
    num_k = 1.0 - m11 ** 2 - m22 ** 2 + abs(delta) ** 2
    if loop > 0:
        k = num_k / (2.0 * loop)
    else:
        k = math.copysign(math.inf, num_k) if num_k != 0 else math.nan
    den_mu = abs(s.s22 - delta * s.s11.conjugate()) + loop
    mu = (1.0 - m11 ** 2) / den_mu if den_mu > 0 else math.nan

    phase = wrap_phase(math.degrees(math.atan2(s.s21.imag, s.s21.real)))
    return PoiVector(
        input_return_loss_db=db20(m11),
        insertion_loss_db=db20(m21),
        output_return_loss_db=db20(m22),
        insertion_phase_deg=phase,
        transducer_gain_db=db10(gt),
        power_gain_db=db10(gp) if not math.isnan(gp) else math.nan,
        available_gain_db=db10(ga) if not math.isnan(ga) else math.nan,
        rollett_k=k,
        stability_mu=mu,
    )


@dataclass(frozen=True)
class SweepPoi:
    frequencies: np.ndarray
    sparams: tuple[SMatrix, ...]
    pois: tuple[PoiVector, ...]
    max_power_gain_frequency: float

    def column(self, name: str) -> np.ndarray:
        return np.array([p[name] for p in self.pois])


class SweepError(TwoPortError):
    def __init__(self, frequency: float, cause: Exception):
        super().__init__(f"solver failed at f={frequency!r} Hz: {cause}")
        self.frequency = frequency
        self.cause = cause


def max_gain_frequency(grid: Sequence[float], gains_db: Sequence[float]) -> float:
    """Grid point of the largest finite gain; first one on ties."""
    g = np.asarray(gains_db, dtype=float)
    g = np.where(np.isnan(g), -np.inf, g)
    return float(np.asarray(grid)[int(np.argmax(g))])


def sweep_poi(c: Subcircuit | callable, grid: Sequence[float], z0: float = 50.0) -> SweepPoi:
    """PoIs over a frequency grid.

    ``c`` is either a subcircuit (solved by MNA) or any callable mapping a
    frequency to an SMatrix, such as a composed surrogate.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("frequency grid must be strictly increasing")
    solve = (lambda f: mna_two_port(c, f, z0)) if isinstance(c, Subcircuit) else c
    ss = []
    for f in grid:
        try:
            ss.append(solve(float(f)))
        except TwoPortError as exc:
            raise SweepError(float(f), exc) from exc
    pois = tuple(poi_from_s(s) for s in ss)
    fmax = max_gain_frequency(grid, [p.power_gain_db for p in pois])
    return SweepPoi(grid, tuple(ss), pois, fmax)


def encode_number(x: float) -> str:
    """repr for finite values; -inf becomes the dB floor, +inf/nan stay textual."""
    if x == -math.inf:
        return repr(DB_FLOOR)
    return repr(float(x))


SWEEP_HEADER = ["freq_hz", "s11_re", "s11_im", "s12_re", "s12_im",
                "s21_re", "s21_im", "s22_re", "s22_im", *POI_NAMES]


def write_sweep_csv(path, sw: SweepPoi):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for f, s, p in zip(sw.frequencies, sw.sparams, sw.pois):
            row = [repr(float(f))]
            for v in (s.s11, s.s12, s.s21, s.s22):
                row += [repr(v.real), repr(v.imag)]
            row += [encode_number(x) for x in astuple(p)]
            w.writerow(row)
