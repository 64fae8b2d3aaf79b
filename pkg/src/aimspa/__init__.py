"""Anderson impurity model toolkit: qubit Hamiltonians, a symmetry-preserving
variational ansatz, Green's functions and time-domain correlators."""

from .correlator import (CorrelatorResult, CorrelatorSpec, FermionOp, correlator_fast,
                         greater_lesser_retarded, hadamard_gate_level, norm_chain,
                         renormalized_apply)
from .estimators import CorrelatorEstimator, ExactDiagonalizer, LanczosGreensFunction, SpaVQE
from .greens import (GfSamples, LanczosChain, classical_lanczos, continued_fraction, initial_krylov,
                     relative_error, retarded_gf_exact, variational_lanczos)
from .measure import MeasPlan, estimate_energy, plan_measurements, rotated_operator
from .model import (AimParams, EdResult, Sector, build_hamiltonian, enumerate_sectors,
                    exact_diagonalize, jw_ladder, resolvent_reference, sample_params,
                    sector_dimension, symmetry_ops)
from .pauli import PauliSum, PauliTerm
from .sim import Circuit, Gate, apply, evolve, expectation, run_circuit
from .vqe import GroundSearchReport, ground_search, minimize_sector, overlap_error

__version__ = "0.1.0"

__all__ = [
    "AimParams", "Circuit", "CorrelatorEstimator", "CorrelatorResult", "CorrelatorSpec",
    "EdResult", "ExactDiagonalizer", "FermionOp", "Gate", "GfSamples", "GroundSearchReport",
    "LanczosChain", "LanczosGreensFunction", "MeasPlan", "PauliSum", "PauliTerm", "Sector",
    "SpaVQE", "apply", "build_hamiltonian", "classical_lanczos", "continued_fraction",
    "correlator_fast", "enumerate_sectors", "estimate_energy", "evolve", "exact_diagonalize",
    "expectation", "greater_lesser_retarded", "ground_search", "hadamard_gate_level",
    "initial_krylov", "jw_ladder", "minimize_sector", "norm_chain", "overlap_error",
    "plan_measurements", "relative_error", "renormalized_apply", "resolvent_reference",
    "retarded_gf_exact", "rotated_operator", "run_circuit", "sample_params", "sector_dimension",
    "symmetry_ops", "variational_lanczos",
]
