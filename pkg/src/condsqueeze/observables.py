"""Collective-spin quantities, the squeezing parameter and steady-state scans.

The collective spin is built from the two hyperfine ground states:

    J_x = (N/2)(<s12> + <s21>),  J_y = (iN/2)(<s12> - <s21>),
    J_z = (N/2)(2<s22> - 1)

and its second moments from the pair moments of distinct atoms.  J_x, J_y are
reported in the microwave rotating frame; the squeezing parameter and the
transverse spin length do not depend on that choice.
"""

from __future__ import annotations

import math
import warnings
from typing import Optional, Sequence, Tuple

import numpy as np

from .dynamics import PROBE
from .integrator import relax
from .model import (
    SLOT_INDEX,
    MomentState,
    ParameterError,
    PhysicalParams,
    coherent_atom_state,
    product_state_moments,
)

_S12 = SLOT_INDEX["s12"]
_S22 = SLOT_INDEX["s22"]
_P1212 = SLOT_INDEX["s12*s12"]
_P1221 = SLOT_INDEX["s12*s21"]
_P2222 = SLOT_INDEX["s22*s22"]

# slots of the hyperfine ground-state sector, held fixed during steady scans
GROUND_SECTOR = tuple(
    SLOT_INDEX[s] for s in ("s12", "s22", "s12*s12", "s22*s22", "s12*s21", "s22*s12")
)
VARIANCE_TOL = 1e-6  # negative variances below -tol * N^2 signal closure failure


class UnsupportedError(ValueError):
    """Quantity undefined for the requested atom number."""


class UndefinedParameterError(ValueError):
    """Squeezing parameter requested for a state without transverse spin."""


class ClosureViolationWarning(RuntimeWarning):
    """A spin variance came out negative beyond round-off."""


def _values(state) -> np.ndarray:
    return state.values if isinstance(state, MomentState) else np.asarray(state)


def collective_spin(state, n_atoms: int) -> Tuple[float, float, float]:
    if n_atoms < 1:
        raise ParameterError("n_atoms must be >= 1")
    v = _values(state)
    s12 = v[..., _S12]
    jx = n_atoms * s12.real
    jy = -n_atoms * s12.imag
    jz = n_atoms * (v[..., _S22].real - 0.5)
    return jx, jy, jz


def raw_spin_variances(state, n_atoms: int):
    """<J_i^2> - J_i^2 without clamping (arrays if ``state`` is a stack)."""
    if n_atoms < 2:
        raise UnsupportedError("spin variances need at least two atoms")
    v = _values(state)
    N = float(n_atoms)
    p1212 = v[..., _P1212]
    p1221 = v[..., _P1221].real
    pair_sum = 2.0 * p1212.real  # <s12 s12> + <s21 s21>
    jx, jy, jz = collective_spin(v, n_atoms)
    jx2 = (N / 4) * ((N - 1) * (pair_sum + 2.0 * p1221) + 1.0)
    jy2 = -(N / 4) * ((N - 1) * (pair_sum - 2.0 * p1221) - 1.0)
    jz2 = (N / 4) * (4.0 * (N - 1) * (v[..., _P2222].real - v[..., _S22].real) + N)
    return jx2 - jx ** 2, jy2 - jy ** 2, jz2 - jz ** 2


def spin_variances(state, n_atoms: int):
    """(Var J_x, Var J_y, Var J_z); negative values are clamped to zero.

    Values below -1e-6 N^2 raise a :class:`ClosureViolationWarning` first.
    """
    raw = raw_spin_variances(state, n_atoms)
    floor = -VARIANCE_TOL * float(n_atoms) ** 2
    out = []
    for axis, var in zip("xyz", raw):
        if np.any(np.asarray(var) < floor):
            warnings.warn(
                f"Var J_{axis} = {np.min(var):.3e} below -1e-6 N^2: cumulant closure violated",
                ClosureViolationWarning,
                stacklevel=2,
            )
        out.append(np.maximum(var, 0.0) if np.ndim(var) else max(float(var), 0.0))
    return tuple(out)


def squeezing_parameter(state, n_atoms: int):
    """xi_z^2 = N Var(J_z) / (J_x^2 + J_y^2)."""
    jx, jy, _ = collective_spin(state, n_atoms)
    perp2 = np.asarray(jx ** 2 + jy ** 2)
    if np.any(perp2 <= 1e-24 * float(n_atoms) ** 2):
        raise UndefinedParameterError("squeezing parameter undefined: no transverse spin")
    _, _, vz = raw_spin_variances(state, n_atoms)
    xi = n_atoms * vz / perp2
    return float(xi) if np.ndim(xi) == 0 else xi


def spin_series(snapshots: np.ndarray, n_atoms: int) -> dict:
    """Collective-spin observables for a stack of moment vectors."""
    v = np.asarray(snapshots)
    jx, jy, jz = collective_spin(v, n_atoms)
    vx, vy, vz = raw_spin_variances(v, n_atoms)
    perp2 = jx ** 2 + jy ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = np.where(perp2 > 0, n_atoms * vz / perp2, np.nan)
    return {
        "jx": jx, "jy": jy, "jz": jz,
        "var_jx": vx, "var_jy": vy, "var_jz": vz,
        "xi2": xi,
        "alpha": v[..., SLOT_INDEX["a"]],
    }


def dressed_frequencies(params: PhysicalParams, jz: Optional[float] = None) -> Tuple[float, float]:
    """(omega_+, omega_-) = omega_32 +/- sqrt(N/2) g.

    With ``jz`` given, the population-dependent form
    omega_32 +/- sqrt(J_z + N/2) g is returned instead.
    """
    if jz is None:
        split = params.collective_coupling
    else:
        occupied = jz + params.n_atoms / 2
        if occupied < 0:
            raise ParameterError(f"J_z + N/2 must be >= 0, got {occupied!r}")
        split = math.sqrt(occupied) * params.g
    return params.omega_32 + split, params.omega_32 - split


def _scan_state(s22: float) -> MomentState:
    """Coherent state on the y side of the Bloch sphere with <s22> = s22."""
    if not -1e-12 <= s22 <= 1 + 1e-12:
        raise ParameterError(f"<s22> must lie in [0, 1], got {s22!r}")
    s22 = min(max(s22, 0.0), 1.0)
    polar = 2.0 * math.acos(math.sqrt(s22))
    return product_state_moments(0.0, coherent_atom_state(math.pi / 2, polar))


def _steady_amplitude(params: PhysicalParams, initial: MomentState, dt, max_steps) -> complex:
    if params.omega_prob_amp == 0:
        return 0j
    state = relax(initial, params, PROBE, frozen=GROUND_SECTOR, dt=dt, max_steps=max_steps)
    return complex(state.values[SLOT_INDEX["a"]])


def steady_scan_frequency(
    params: PhysicalParams,
    omega_p_grid: Sequence[float],
    dt: Optional[float] = None,
    max_steps: int = 1_000_000,
) -> np.ndarray:
    """Steady rotating-frame <a> for each probe frequency (rad/s).

    The ground-state populations and coherence are held at the equal
    superposition; field, optical coherences and atom-field correlations
    relax under the deterministic equations.
    """
    initial = _scan_state(0.5)
    return np.array(
        [
            _steady_amplitude(params.updated(omega_p=float(w)), initial, dt, max_steps)
            for w in omega_p_grid
        ]
    )


def steady_scan_jz(
    params: PhysicalParams,
    jz_grid: Sequence[float],
    dt: Optional[float] = None,
    max_steps: int = 1_000_000,
) -> np.ndarray:
    """Steady <a> as a function of J_z at the configured probe frequency."""
    out = []
    for jz in jz_grid:
        initial = _scan_state(float(jz) / params.n_atoms + 0.5)
        out.append(_steady_amplitude(params, initial, dt, max_steps))
    return np.array(out)


__all__ = [
    "ClosureViolationWarning",
    "GROUND_SECTOR",
    "UndefinedParameterError",
    "UnsupportedError",
    "collective_spin",
    "dressed_frequencies",
    "raw_spin_variances",
    "spin_series",
    "spin_variances",
    "squeezing_parameter",
    "steady_scan_frequency",
    "steady_scan_jz",
]
