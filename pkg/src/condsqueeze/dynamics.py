"""Drift and measurement backaction of the stochastic moment equations.

The equations follow from the conditional master equation for a single cavity
mode coupled to N identical three-level atoms, with third-order moments closed
by the cumulant rule (:func:`third_order_closure`).  Everything is written in
the rotating frame of :class:`~condsqueeze.model.FrameConvention`: detunings
replace bare frequencies and the probe and microwave drives become static.

The compiled right-hand sides live in :mod:`condsqueeze._kernels`; this module
assembles their frame-dependent coefficients and wraps them in the
:class:`~condsqueeze.model.MomentState` interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .model import MomentState, PhysicalParams


class IntegrationError(FloatingPointError):
    """Moment integration produced or received non-finite values."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class DriveFlags:
    """Which drives are active during a schedule segment.

    ``measurement_on`` gates the homodyne backaction and photocurrent.
    """

    probe_on: bool = True
    microwave_on: bool = False
    measurement_on: bool = True


PROBE = DriveFlags(True, False, True)
MICROWAVE = DriveFlags(False, True, False)
DARK = DriveFlags(False, False, False)


def third_order_closure(o: complex, p: complex, q: complex,
                        op: complex, oq: complex, pq: complex) -> complex:
    """<opq> ~ <o><pq> + <p><oq> + <q><op> - 2<o><p><q>."""
    return o * pq + p * oq + q * op - 2.0 * o * p * q


def atom_hamiltonian(params: PhysicalParams, flags: DriveFlags) -> np.ndarray:
    """Single-atom Hamiltonian (rad/s) in the rotating frame."""
    h = np.zeros((3, 3), dtype=np.complex128)
    h[1, 1] = params.delta_21
    h[2, 2] = params.delta_21 + params.delta_32
    if flags.microwave_on:
        h[0, 1] = h[1, 0] = params.omega_mw_amp
    return h


def coefficients(params: PhysicalParams, flags: DriveFlags) -> np.ndarray:
    """Coefficient vector consumed by the compiled kernels."""
    c = np.zeros(K.N_COEFFS, dtype=np.float64)
    c[K.C_N] = params.n_atoms
    c[K.C_WC] = params.delta_c
    if flags.probe_on:
        c[K.C_FRE] = params.probe_rate
    c[K.C_G] = params.g
    c[K.C_KAPPA] = params.kappa
    c[K.C_GAMMA] = params.gamma
    c[K.C_CHI] = params.chi
    if flags.measurement_on:
        c[K.C_MEAS] = math.sqrt(params.eta * params.kappa_2)
    c[K.C_PHASE] = 0.0
    return c


def _check_finite(state: MomentState) -> None:
    if not np.all(np.isfinite(state.values)):
        raise IntegrationError("non-finite moment state")


def drift(state: MomentState, params: PhysicalParams, flags: DriveFlags) -> MomentState:
    """d<X>/dt from the deterministic terms, for every stored moment."""
    _check_finite(state)
    out = K.drift_vec(state.values.copy(), atom_hamiltonian(params, flags),
                      coefficients(params, flags))
    return MomentState(out)


def diffusion(state: MomentState, params: PhysicalParams, flags: DriveFlags) -> MomentState:
    """Coefficient of dW for every stored moment (Ito form).

    For a moment <X> this is sqrt(eta kappa_2) [(<X a> - <a><X>) + (<a^dag X> - <a^dag><X>)].
    """
    _check_finite(state)
    out = K.diffusion_vec(state.values.copy(), coefficients(params, flags))
    return MomentState(out)


__all__ = [
    "DARK",
    "DriveFlags",
    "IntegrationError",
    "MICROWAVE",
    "PROBE",
    "atom_hamiltonian",
    "coefficients",
    "diffusion",
    "drift",
    "third_order_closure",
]
