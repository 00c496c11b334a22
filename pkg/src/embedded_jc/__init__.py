"""Spin ensembles coupled to a transmon through a shared cavity bus.

Exact-diagonalisation spectra, unitary and Lindblad dynamics, a
cavity-eliminated exchange model and dispersive exchange gates, all in the
frame rotating at the cavity frequency with hbar = 1.
"""

from .params import (
    BOSONIC,
    EXACT_DICKE,
    Ensemble,
    ParameterError,
    RegimeReport,
    SystemParams,
    classify_regime,
    embedded_defaults,
    from_collective,
    to_dimensionless,
)
from .hilbert import BasisState, DimensionError, EnumeratedBasis, SpaceTruncation, enumerate_basis
from .hamiltonian import LindbladModel, SparseOperator, build_collapse_ops, build_hamiltonian
from .spectra import Spectrum, eigensystem, embedded_jc_analysis
from .dynamics import Trajectory, evolve_lindblad, evolve_unitary, fit_decay
from .effective import build_effective, validate_effective
from .gates import GateReport, PulseSegment, evaluate_gate, exchange_schedule, sqrt_swap_schedule, transfer_schedule

__version__ = "0.1.0"
