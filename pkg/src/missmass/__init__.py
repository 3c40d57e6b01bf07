"""Missing-mass estimation for Bernoulli product feature models: simulation and checks."""

__version__ = "0.1.0"

from .errors import AlignmentError, DomainError, NumericalError, UnsupportedSpecError
from .model import (
    ProbabilityVector,
    StatisticsRecord,
    SufficientStats,
    expected_k_n,
    expected_k_nr,
    expected_m_n,
    missing_mass,
    phi_n,
    phi_nr,
)
from .generators import (
    GammaProcessSpec,
    RegVarSpec,
    finite_uniform,
    gamma_process_draw,
    geometric,
    power_law,
)
from .sampler import ReplicateDataset, run_replicates, sample_counts, sample_trajectory, summarize

__all__ = [
    "AlignmentError",
    "DomainError",
    "NumericalError",
    "UnsupportedSpecError",
    "ProbabilityVector",
    "StatisticsRecord",
    "SufficientStats",
    "expected_k_n",
    "expected_k_nr",
    "expected_m_n",
    "missing_mass",
    "phi_n",
    "phi_nr",
    "GammaProcessSpec",
    "RegVarSpec",
    "finite_uniform",
    "gamma_process_draw",
    "geometric",
    "power_law",
    "ReplicateDataset",
    "run_replicates",
    "sample_counts",
    "sample_trajectory",
    "summarize",
]
