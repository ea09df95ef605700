"""Simulation and analysis of reprogrammable two-photon circuits built from a
multimode fiber, a phase-only SLM and a time-tagging SPAD array."""

from .bench import BenchConfig, PhaseMask, make_bench, propagate, render_camera
from .calibration import (
    CrosstalkModel,
    correct_coincidences,
    fit_crosstalk,
    fit_gaussian2d,
    localize_detectors,
)
from .linalg import TargetOperator, haar_unitary, permanent, random_operator, sylvester_operator
from .metrics import SimilarityReport, random_circuit_study, similarity
from .pipeline import Experiment, PipelineConfig, hom_scan_measure, noiseless, paper_grade
from .quantum import (
    OutcomeDistribution,
    PhotonPairSource,
    coincidence_distribution,
    hom_scan,
    indistinguishability,
    visibility,
)
from .spad import DetectorArray, TimeTagStream, hex_layout, simulate_classical, simulate_pairs, spad23
from .tagproc import CoincidenceRecord, count_coincidences, count_singles
from .tm import (
    MeasuredTM,
    TwoPhotonTM,
    assemble_two_photon,
    measure_tm,
    phase_ramp_basis,
    realized_operator,
    synthesize_slm,
)

__version__ = "0.1.0"
