"""Overlap model for three photons prepared in polarization and time.

Each pairwise overlap factorizes into a visibility term (all unmodeled
degrees of freedom), a polarization term ``cos^2(theta_i - theta_j)`` and a
Gaussian temporal term ``exp(-sigma_ij (dx_i - dx_j)^2)``.  Delays are
delay-line displacements in micrometres and ``sigma`` is in um^-2.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geometry
from .geometry import OverlapTriple, ProjectionError

PAIRS = ("AB", "BC", "AC")


class CalibrationError(ValueError):
    """An overlap is inconsistent with the pair calibration."""


@dataclass(frozen=True)
class PhotonPreparation:
    theta: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.theta) or not np.isfinite(self.delay):
            raise ValueError("theta and delay must be finite")
        # Linear polarization is projective: theta and theta + pi coincide.
        object.__setattr__(self, "theta", float(np.mod(self.theta, np.pi)))
        object.__setattr__(self, "delay", float(self.delay))


@dataclass(frozen=True)
class PairCalibration:
    v: float
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.v <= 1.0:
            raise ValueError(f"visibility {self.v} outside [0, 1]")
        if not self.sigma > 0.0:
            raise ValueError(f"dip width {self.sigma} must be positive")


@dataclass(frozen=True)
class CalibrationSet:
    ab: PairCalibration
    bc: PairCalibration
    ac: PairCalibration

    def __iter__(self):
        return iter((self.ab, self.bc, self.ac))

    @classmethod
    def ideal(cls, sigma: float = 8.7e-5) -> "CalibrationSet":
        return cls(*(PairCalibration(1.0, sigma) for _ in PAIRS))

    def to_dict(self) -> dict:
        return {pair: asdict(cal) for pair, cal in zip(PAIRS, self)}


@dataclass(frozen=True)
class ExperimentConfig:
    a: PhotonPreparation
    b: PhotonPreparation
    c: PhotonPreparation
    calibration: CalibrationSet
    n_events: int = 10_000
    seed: int = 0
    efficiency: float = 1.0
    anrd_survival: float = 0.5

    def __post_init__(self):
        if self.n_events < 1:
            raise ValueError("n_events must be >= 1")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in (0, 1]")
        if not 0.0 < self.anrd_survival <= 1.0:
            raise ValueError("anrd_survival must lie in (0, 1]")


def polarization_overlap(p1: PhotonPreparation, p2: PhotonPreparation) -> float:
    return float(np.cos(p1.theta - p2.theta) ** 2)


def temporal_overlap(p1: PhotonPreparation, p2: PhotonPreparation, cal: PairCalibration) -> float:
    return float(np.exp(-cal.sigma * (p1.delay - p2.delay) ** 2))


def pairwise_overlap(p1: PhotonPreparation, p2: PhotonPreparation, cal: PairCalibration) -> float:
    r = cal.v * polarization_overlap(p1, p2) * temporal_overlap(p1, p2, cal)
    return float(min(max(r, 0.0), 1.0))


def predict_triple(cfg: ExperimentConfig) -> OverlapTriple:
    cal = cfg.calibration
    return OverlapTriple(
        pairwise_overlap(cfg.a, cfg.b, cal.ab),
        pairwise_overlap(cfg.b, cfg.c, cal.bc),
        pairwise_overlap(cfg.a, cfg.c, cal.ac),
    )


def angle_from_overlap(r: float, cal: PairCalibration) -> float:
    """Polarization angle ``|beta|`` between two synchronized photons."""
    if r < 0.0:
        raise CalibrationError(f"overlap {r} is negative")
    if r > cal.v:
        raise CalibrationError(f"overlap {r} exceeds the pair visibility {cal.v}")
    if cal.v == 0.0:
        raise CalibrationError("zero visibility carries no angle information")
    return float(np.arccos(np.sqrt(r / cal.v)))


def preparation_from_triple(r_ab: float, r_bc: float, cal: CalibrationSet) -> tuple:
    """Synchronized preparations reproducing ``r_ab`` and ``r_bc``.

    Photon B sits at theta = 0; A and C are placed on opposite sides of it,
    the arrangement that pushes ``r_ac`` down and the triple out of C.
    """
    beta = angle_from_overlap(r_ab, cal.ab)
    gamma = angle_from_overlap(r_bc, cal.bc)
    return PhotonPreparation(beta), PhotonPreparation(0.0), PhotonPreparation(-gamma)


# ---------------------------------------------------------------------------
# Witness surfaces
# ---------------------------------------------------------------------------

@dataclass
class Surface:
    """Row-major grid ``values[i, j]`` over ``x_axis[i]``, ``y_axis[j]``."""

    kind: str
    x_name: str
    y_name: str
    x_axis: np.ndarray
    y_axis: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    failed: np.ndarray | None = None

    def argmax(self) -> tuple[float, float, float]:
        i, j = np.unravel_index(np.nanargmax(self.values), self.values.shape)
        return float(self.x_axis[i]), float(self.y_axis[j]), float(self.values[i, j])

    def write(self, path: str | Path) -> tuple[Path, Path]:
        """Write ``<path>.csv`` plus a ``<path>.json`` metadata sidecar."""
        path = Path(path)
        csv_path, meta_path = path.with_suffix(".csv"), path.with_suffix(".json")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"{self.x_name}/{self.y_name}"] + [repr(float(y)) for y in self.y_axis])
            for x, row in zip(self.x_axis, self.values):
                w.writerow([repr(float(x))] + [repr(float(v)) for v in row])
        meta = dict(self.metadata)
        meta.update(
            kind=self.kind,
            x_axis={"name": self.x_name, "min": float(self.x_axis[0]), "max": float(self.x_axis[-1]), "n": len(self.x_axis)},
            y_axis={"name": self.y_name, "min": float(self.y_axis[0]), "max": float(self.y_axis[-1]), "n": len(self.y_axis)},
        )
        if self.failed is not None:
            meta["failed_cells"] = [[int(i), int(j)] for i, j in zip(*np.nonzero(self.failed))]
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, meta_path


def wc_surface(beta_grid: Sequence[float], gamma_grid: Sequence[float], cals: CalibrationSet,
               signed: bool = True) -> Surface:
    """Coherence witness over the angles of A and C relative to B.

    All wavepackets synchronized.  ``signed=True`` gives the signed distance
    (positive outside C); ``signed=False`` the absolute value of the same
    expression.
    """
    beta = np.asarray(beta_grid, dtype=float)
    gamma = np.asarray(gamma_grid, dtype=float)
    bb, gg = np.meshgrid(beta, gamma, indexing="ij")
    inner = 1.0 - cals.ab.v * np.cos(bb) ** 2 - cals.bc.v * np.cos(gg) ** 2 + cals.ac.v * np.cos(bb - gg) ** 2
    values = -inner / np.sqrt(3.0) if signed else np.abs(inner) / np.sqrt(3.0)
    meta = {"calibration": cals.to_dict(), "variant": "signed" if signed else "abs"}
    return Surface("wc", "beta", "gamma", beta, gamma, values, meta)


def wd_surface(delay_grid_1: Sequence[float], delay_grid_2: Sequence[float], cals: CalibrationSet,
               n_starts: int = 8, seed: int = 0) -> Surface:
    """Dimension witness over the delays of A and C relative to B.

    All photons share one polarization.  A cell whose projection fails is
    left as NaN and flagged in ``failed``.
    """
    dx1 = np.asarray(delay_grid_1, dtype=float)
    dx2 = np.asarray(delay_grid_2, dtype=float)
    values = np.full((len(dx1), len(dx2)), np.nan)
    failed = np.zeros(values.shape, dtype=bool)
    b = PhotonPreparation(0.0, 0.0)
    for i, d1 in enumerate(dx1):
        for j, d2 in enumerate(dx2):
            a, c = PhotonPreparation(0.0, d1), PhotonPreparation(0.0, d2)
            t = OverlapTriple(
                pairwise_overlap(a, b, cals.ab),
                pairwise_overlap(b, c, cals.bc),
                pairwise_overlap(a, c, cals.ac),
            )
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", geometry.UnphysicalTripleWarning)
                    values[i, j] = geometry.dimension_witness(t, n_starts=n_starts, seed=seed)
            except ProjectionError:
                failed[i, j] = True
    meta = {"calibration": cals.to_dict(), "variant": "distance", "n_starts": n_starts}
    return Surface("wd", "dx1", "dx2", dx1, dx2, values, meta, failed)
