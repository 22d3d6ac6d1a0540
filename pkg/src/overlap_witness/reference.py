"""Bundled reference measurements."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import yaml

from .statemodel import CalibrationSet, PairCalibration


@lru_cache(maxsize=None)
def load_reference() -> dict:
    text = resources.files(__package__).joinpath("data/reference.yaml").read_text()
    return yaml.safe_load(text)


def measured_calibration() -> CalibrationSet:
    """Visibilities and dip widths from the preliminary HOM dip fits."""
    t3 = load_reference()["t3"]
    return CalibrationSet(*(PairCalibration(t3[p]["v"], t3[p]["sigma"]) for p in ("AB", "BC", "AC")))
