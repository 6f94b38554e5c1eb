"""ECG segmentation into P, PQ, QRS, ST, T and ISO complexes with a Gaussian HMM."""
from ._backend import BACKEND
from .features import cwt, mexican_hat_kernel
from .hmm import (
    HmmModel,
    StateConfig,
    build_transition_matrix,
    init_emissions,
    states_to_labels,
    uniform_initial,
    viterbi_decode,
    viterbi_train,
)
from .labels import COMPLEXES
from .metrics import confusion, report
from .signal_io import EcgRecord, WaveBoundary, derive_labels

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "COMPLEXES",
    "EcgRecord",
    "HmmModel",
    "StateConfig",
    "WaveBoundary",
    "build_transition_matrix",
    "confusion",
    "cwt",
    "derive_labels",
    "init_emissions",
    "mexican_hat_kernel",
    "report",
    "states_to_labels",
    "uniform_initial",
    "viterbi_decode",
    "viterbi_train",
]
