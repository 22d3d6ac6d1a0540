"""Coherence and dimension witnesses from pairwise overlaps of three photons."""

from .geometry import (
    Body,
    OverlapTriple,
    ProjectionError,
    WitnessReport,
    coherence_witness,
    dimension_witness,
    in_classical_polytope,
    in_quantum_set,
    in_qubit_set,
    project_to_body,
    witness_report,
    witness_sigma,
)
from .interference import build_network, gram_from_triple, output_distribution, overlaps_from_distribution
from .statemodel import (
    CalibrationSet,
    ExperimentConfig,
    PairCalibration,
    PhotonPreparation,
    pairwise_overlap,
    predict_triple,
)

__version__ = "0.1.0"
