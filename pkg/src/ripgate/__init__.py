"""Resonator-induced phase gate pulse design and validation.

Frequencies at the public interface are cyclic MHz and times are ns.
"""

__version__ = "0.1.0"

from .closed_form import (
    PhaseSeries,
    PhaseTable,
    accumulate_phase,
    adiabatic_expansion,
    decompose_phase,
    phase_series,
    respond,
    steady_state_rates,
)
from .envelopes import (
    ConstantEnvelope,
    PiecewisePolynomialEnvelope,
    SplineEnvelope,
    StepTrainEnvelope,
    load_envelope,
    solve_spline_coefficients,
    spectrum,
)
from .errors import RipGateError
from .lindblad import TruncatedSystem, compare, integrate
from .metrics import GateReport, average_gate_fidelity, composite_echo, fidelity_pauli_sum
from .nullspace import CostWeights, analyze_spectrum_features, build_constraint, cost, discrete_phase, optimize
from .params import DerivedParams, DeviceParams, derive_params, load_params, static_coupling_at_photon_number
from .spline_design import SplineDesign, min_detuning_for_target, sweep, tune_rise_time

__all__ = [
    "ConstantEnvelope", "CostWeights", "DerivedParams", "DeviceParams", "GateReport", "PhaseSeries",
    "PhaseTable", "PiecewisePolynomialEnvelope", "RipGateError", "SplineDesign", "SplineEnvelope",
    "StepTrainEnvelope", "TruncatedSystem", "accumulate_phase", "adiabatic_expansion",
    "analyze_spectrum_features", "average_gate_fidelity", "build_constraint", "compare", "composite_echo",
    "cost", "decompose_phase", "derive_params", "discrete_phase", "fidelity_pauli_sum", "integrate",
    "load_envelope", "load_params", "min_detuning_for_target", "optimize", "phase_series", "respond",
    "solve_spline_coefficients", "spectrum", "static_coupling_at_photon_number", "steady_state_rates",
    "sweep", "tune_rise_time",
]
