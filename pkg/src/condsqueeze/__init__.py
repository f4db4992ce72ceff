"""Conditional spin squeezing of a cavity-coupled atomic ensemble.

Stochastic cumulant mean-field equations for N three-level atoms in a driven
optical cavity under continuous homodyne detection, with a brute-force
density-matrix oracle for small systems.
"""

from .model import (
    MomentState,
    ParameterError,
    PhysicalParams,
    default_params,
    init_all_down,
    init_spin_coherent,
    params_from_hz,
)
from .dynamics import DARK, MICROWAVE, PROBE, DriveFlags, diffusion, drift
from .integrator import TrajectoryRecord, reference_dt, relax, simulate_trajectory, step
from .observables import (
    collective_spin,
    dressed_frequencies,
    spin_variances,
    squeezing_parameter,
    steady_scan_frequency,
    steady_scan_jz,
)
from .protocol import (
    PulseSchedule,
    Segment,
    ensemble_correlation,
    mw_pulse_duration,
    run_squeezing,
    verification_experiment,
)
from .analysis import (
    FitResult,
    fit_power_law,
    fit_squeezing_curve,
    lambert_w0,
    minimal_squeezing_time,
    oscillation_frequency,
)

__version__ = "0.1.0"

__all__ = [
    "DARK",
    "DriveFlags",
    "FitResult",
    "MICROWAVE",
    "MomentState",
    "PROBE",
    "ParameterError",
    "PhysicalParams",
    "PulseSchedule",
    "Segment",
    "TrajectoryRecord",
    "collective_spin",
    "default_params",
    "diffusion",
    "dressed_frequencies",
    "drift",
    "ensemble_correlation",
    "fit_power_law",
    "fit_squeezing_curve",
    "init_all_down",
    "init_spin_coherent",
    "lambert_w0",
    "minimal_squeezing_time",
    "mw_pulse_duration",
    "oscillation_frequency",
    "params_from_hz",
    "reference_dt",
    "relax",
    "run_squeezing",
    "simulate_trajectory",
    "spin_variances",
    "squeezing_parameter",
    "steady_scan_frequency",
    "steady_scan_jz",
    "step",
    "verification_experiment",
]
