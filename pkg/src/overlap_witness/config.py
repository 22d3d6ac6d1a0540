"""Run configuration files (YAML).

Schema::

    photons:                  # A, B, C; theta in radians, delay in micrometres
      A: {theta: 0.5943, delay: 0.0}
      B: {theta: 0.0}
      C: {theta: -0.5184}
    calibration: measured     # or {AB: {v: .., sigma: ..}, BC: .., AC: ..}
    simulation:
      n_events: 10000
      seed: 1
      efficiency: 1.0
      anrd: true
      anrd_survival: 0.5
      bootstrap: 1000
    surface:
      wc: {beta: [min, max, n], gamma: [min, max, n], signed: true}
      wd: {dx1: [min, max, n], dx2: [min, max, n], n_starts: 8}
    projection:
      n_starts: 16

Every section is optional; unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .reference import measured_calibration
from .statemodel import CalibrationSet, ExperimentConfig, PairCalibration, PhotonPreparation


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "photons": {"A": {"theta", "delay"}, "B": {"theta", "delay"}, "C": {"theta", "delay"}},
    "calibration": None,
    "simulation": {"n_events", "seed", "efficiency", "anrd", "anrd_survival", "bootstrap"},
    "surface": {"wc": {"beta", "gamma", "signed"}, "wd": {"dx1", "dx2", "n_starts"}},
    "projection": {"n_starts"},
}


def _check_keys(doc, schema, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    allowed = set(schema)
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(sorted(map(str, unknown)))}")
    if isinstance(schema, dict):
        for key, sub in schema.items():
            if key in doc and sub is not None:
                _check_keys(doc[key], sub, f"{where}.{key}" if where else key)


def _grid(spec, name) -> np.ndarray:
    try:
        lo, hi, n = spec
        n = int(n)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be [min, max, n]") from None
    if n < 1 or not np.isfinite([lo, hi]).all() or hi < lo:
        raise ConfigError(f"{name} grid {spec!r} is invalid")
    return np.linspace(float(lo), float(hi), n)


@dataclass
class RunConfig:
    experiment: ExperimentConfig
    anrd: bool = True
    bootstrap: int = 1000
    wc_grid: tuple = field(default_factory=lambda: (
        np.linspace(-np.pi / 2, np.pi / 2, 181), np.linspace(-np.pi / 2, np.pi / 2, 181)))
    wc_signed: bool = True
    wd_grid: tuple = field(default_factory=lambda: (
        np.linspace(-600.0, 600.0, 25), np.linspace(-600.0, 600.0, 25)))
    wd_starts: int = 8
    projection_starts: int = 16

    @property
    def calibration(self) -> CalibrationSet:
        return self.experiment.calibration


def _calibration(doc) -> CalibrationSet:
    if doc is None or doc == "measured":
        return measured_calibration()
    if doc == "ideal":
        return CalibrationSet.ideal()
    if not isinstance(doc, dict) or set(doc) != {"AB", "BC", "AC"}:
        raise ConfigError("calibration must be 'measured', 'ideal' or a mapping with AB, BC, AC")
    cals = []
    for pair in ("AB", "BC", "AC"):
        entry = doc[pair]
        _check_keys(entry, {"v", "sigma"}, f"calibration.{pair}")
        try:
            cals.append(PairCalibration(float(entry["v"]), float(entry["sigma"])))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"calibration.{pair}: {exc}") from None
    return CalibrationSet(*cals)


def parse_config(doc: dict | None) -> RunConfig:
    doc = doc or {}
    _check_keys(doc, _SCHEMA, "")
    photons = doc.get("photons", {})
    preps = {}
    for label in "ABC":
        p = photons.get(label, {}) or {}
        try:
            preps[label] = PhotonPreparation(float(p.get("theta", 0.0)), float(p.get("delay", 0.0)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"photons.{label}: {exc}") from None

    sim = doc.get("simulation", {}) or {}
    try:
        experiment = ExperimentConfig(
            preps["A"], preps["B"], preps["C"], _calibration(doc.get("calibration")),
            n_events=int(sim.get("n_events", 10_000)),
            seed=int(sim.get("seed", 0)),
            efficiency=float(sim.get("efficiency", 1.0)),
            anrd_survival=float(sim.get("anrd_survival", 0.5)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"simulation: {exc}") from None
    cfg = RunConfig(experiment, anrd=bool(sim.get("anrd", True)), bootstrap=int(sim.get("bootstrap", 1000)))
    if cfg.bootstrap < 0:
        raise ConfigError("simulation.bootstrap must be >= 0")

    surface = doc.get("surface", {}) or {}
    if "wc" in surface:
        wc = surface["wc"]
        cfg.wc_grid = (_grid(wc.get("beta", [-np.pi / 2, np.pi / 2, 181]), "surface.wc.beta"),
                       _grid(wc.get("gamma", [-np.pi / 2, np.pi / 2, 181]), "surface.wc.gamma"))
        cfg.wc_signed = bool(wc.get("signed", True))
    if "wd" in surface:
        wd = surface["wd"]
        cfg.wd_grid = (_grid(wd.get("dx1", [-600, 600, 25]), "surface.wd.dx1"),
                       _grid(wd.get("dx2", [-600, 600, 25]), "surface.wd.dx2"))
        cfg.wd_starts = int(wd.get("n_starts", 8))
    proj = doc.get("projection", {}) or {}
    cfg.projection_starts = int(proj.get("n_starts", 16))
    if cfg.projection_starts < 1 or cfg.wd_starts < 1:
        raise ConfigError("n_starts must be >= 1")
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(doc)
