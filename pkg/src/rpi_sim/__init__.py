"""Simulation of continuously measured finite-dimensional quantum systems.

Selective (readout-conditioned) evolution with a non-Hermitian effective
Hamiltonian, nonselective master-equation evolution, exact readout sampling
and a brute-force restricted path-sum oracle.
"""

__version__ = "0.1.0"

from .core import (
    HermiticityError,
    MeasurementSpec,
    NumericalError,
    Operator,
    RangeError,
    Readout,
    TimeGrid,
    eigendecompose,
    matrix_exponential,
    norm_squared,
    purity,
    trace_distance,
)
from .nonselective import ensemble_average, lindblad_rhs, propagate_master
from .oracle import brute_force_restricted_sum, restricted_sum_probability
from .sampler import SeededStream, Trajectory, run_ensemble, sample_step, sample_trajectory
from .selective import (
    check_generalized_unitarity,
    effective_hamiltonian,
    partial_propagator,
    propagate_selective,
    readout_probability_density,
    step_kraus,
)

__all__ = [
    "HermiticityError",
    "MeasurementSpec",
    "NumericalError",
    "Operator",
    "RangeError",
    "Readout",
    "SeededStream",
    "TimeGrid",
    "Trajectory",
    "brute_force_restricted_sum",
    "check_generalized_unitarity",
    "effective_hamiltonian",
    "eigendecompose",
    "ensemble_average",
    "lindblad_rhs",
    "matrix_exponential",
    "norm_squared",
    "partial_propagator",
    "propagate_master",
    "propagate_selective",
    "purity",
    "readout_probability_density",
    "restricted_sum_probability",
    "run_ensemble",
    "sample_step",
    "sample_trajectory",
    "step_kraus",
    "trace_distance",
]
