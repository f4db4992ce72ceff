"""Euler-Maruyama integration of the moment equations.

One scalar Wiener process drives every moment (a single homodyne detector).
The noise for a trajectory is drawn up front from a seeded numpy generator,
so a trajectory is a pure function of its inputs and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np
from numba import njit
from scipy.linalg import expm

from . import _kernels as K
from .dynamics import DriveFlags, IntegrationError, atom_hamiltonian, coefficients
from .model import (
    DERIVED_SLOT,
    N_SLOTS,
    SELF_ADJOINT_SLOTS,
    SLOT_INDEX,
    MomentState,
    ParameterError,
    PhysicalParams,
)

if TYPE_CHECKING:  # pragma: no cover
    from .protocol import PulseSchedule

REFERENCE_DT = 1e-9
# Largest Euler rotation error accepted inside a microwave pulse, as the
# accumulated amplitude growth 0.5 (w dt)^2 n_steps.
MICROWAVE_GROWTH_TOL = 1e-4
# Refresh period of the drift Jacobian used by the exponential scheme.
JACOBIAN_INTERVAL = 200e-9
MICROWAVE_JACOBIAN_ANGLE = 0.05  # Rabi angle / 2 between Jacobian refreshes in pulses
_I_ADAG23 = SLOT_INDEX["adag*s23"]
_I_A = SLOT_INDEX["a"]


class ConfigurationError(ParameterError):
    """Step size or schedule incompatible with the parameters."""


def wiener_increment(rng: np.random.Generator, dt: float) -> float:
    """One draw from Normal(0, dt)."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    return float(rng.normal(0.0, math.sqrt(dt)))


def wiener_increments(rng: np.random.Generator, dt: float, n: int) -> np.ndarray:
    """``n`` independent Normal(0, dt) draws (same stream as repeated single draws)."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    return rng.normal(0.0, math.sqrt(dt), size=n)


def fastest_rate(params: PhysicalParams) -> float:
    """Largest rate the step size has to resolve (rad/s)."""
    return max(
        params.kappa,
        math.sqrt(params.n_atoms) * params.g,
        abs(params.delta_c),
        abs(params.delta_32),
        abs(params.delta_21),
        params.omega_mw_amp,
    )


def euler_stable_dt(params: PhysicalParams) -> float:
    """Step below which explicit Euler damps every cavity-atom normal mode.

    The linearised field / optical-coherence block with the worst-case
    collective coupling sqrt(N) g has eigenvalues lambda; Euler is stable when
    dt < 2 |Re lambda| / |lambda|^2.  A safety factor of 2 is applied.
    """
    gc = math.sqrt(params.n_atoms) * params.g
    block = np.array(
        [
            [-1j * params.delta_c - 0.5 * params.kappa, -1j * gc],
            [-1j * gc, -1j * params.delta_32 - 0.5 * params.gamma - params.chi],
        ]
    )
    lam = np.linalg.eigvals(block)
    return float(np.min(-lam.real / np.abs(lam) ** 2))


SCHEMES = ("exponential", "euler")


def max_dt(params: PhysicalParams) -> float:
    """Resolution precondition: dt <= 0.1 / fastest rate."""
    return 0.1 / fastest_rate(params)


def reference_dt(params: PhysicalParams, scheme: str = "exponential") -> float:
    """Default step: 1 ns unless the resolution precondition demands less.

    The plain Euler scheme is additionally limited by :func:`euler_stable_dt`.
    """
    dt = min(REFERENCE_DT, max_dt(params))
    if scheme == "euler":
        dt = min(dt, euler_stable_dt(params))
    return dt


def check_dt(params: PhysicalParams, dt: float) -> None:
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigurationError(f"dt must be a positive number, got {dt!r}")
    bound = max_dt(params)
    if dt > bound * (1 + 1e-12):
        raise ConfigurationError(
            f"dt = {dt:.3e} s does not resolve the fastest rate; need dt <= {bound:.3e} s"
        )


@njit(cache=True)
def _repair(y):
    """Zero imaginary parts of self-adjoint slots; return the largest removed."""
    worst = 0.0
    for k in SELF_ADJOINT_SLOTS:
        im = abs(y[k].imag)
        scale = 1.0 + abs(y[k].real)
        if im / scale > worst:
            worst = im / scale
        y[k] = y[k].real
    y[DERIVED_SLOT] = np.conj(y[_I_ADAG23])
    return worst


@njit(cache=True)
def _euler_step(y, h, coeffs, dt, dw):
    d, b = K.drift_diffusion_vec(y, h, coeffs)
    return y + d * dt + b * dw


@njit(cache=True)
def _real_drift(x, h, coeffs):
    n = x.shape[0] // 2
    y = x[:n] + 1j * x[n:]
    d = K.drift_vec(y, h, coeffs)
    out = np.empty_like(x)
    out[:n] = d.real
    out[n:] = d.imag
    return out


@njit(cache=True)
def drift_jacobian(y, h, coeffs):
    """Jacobian of the drift in real coordinates (Re y, Im y), central differences.

    The drift is a cubic polynomial of the moments, so the error is the
    third-derivative term, of relative size ~1e-12 for the chosen increments.
    """
    n = y.shape[0]
    x = np.empty(2 * n)
    x[:n] = y.real
    x[n:] = y.imag
    J = np.zeros((2 * n, 2 * n))
    for j in range(2 * n):
        eps = 1e-6 * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += eps
        xm[j] -= eps
        J[:, j] = (_real_drift(xp, h, coeffs) - _real_drift(xm, h, coeffs)) / (2.0 * eps)
    return J


def phi1_propagator(jac: np.ndarray, dt: float) -> np.ndarray:
    """phi1(J dt) = (J dt)^-1 (exp(J dt) - 1), read off an augmented exponential."""
    n = jac.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = jac * dt
    aug[:n, n:] = np.eye(n)
    return np.ascontiguousarray(expm(aug)[:n, n:])


@njit(cache=True)
def _exponential_step(y, h, coeffs, dt, dw, P):
    """Exponential Euler-Maruyama step with a frozen linear part.

    With J an (approximate) drift Jacobian and P = phi1(J dt), the update is
    y <- y + P F(y) dt + B(y) dW.  For the linearised dynamics this equals
    exp(J dt) y plus the exactly integrated forcing, so fast, weakly damped
    modes (optical coherences of ideal atoms) are neither amplified nor
    damped by the scheme, and every fixed point of the drift is preserved.
    P = 1 gives the plain update of :func:`step`.
    """
    n = y.shape[0]
    d, b = K.drift_diffusion_vec(y, h, coeffs)
    out = y + b * dw
    for i in range(2 * n):
        acc = 0.0
        for j in range(n):
            acc += P[i, j] * d[j].real + P[i, n + j] * d[j].imag
        if i < n:
            out[i] += acc * dt
        else:
            out[i - n] += 1j * acc * dt
    return out


@njit(cache=True)
def _run_chunk(y0, h, coeffs, dt, n_steps, dws, stride, offset, snaps, currents, P, use_p):
    """Integrate ``n_steps`` steps starting at global step ``offset``.

    A snapshot is written whenever the step count after a step is a multiple
    of ``stride``.  ``dws`` and ``currents`` are indexed from the chunk start.
    Returns (y, n_snapshots_written, worst_repair, failed_step).
    """
    y = y0.copy()
    meas = coeffs[K.C_MEAS]
    written = 0
    worst = 0.0
    for k in range(n_steps):
        dw = dws[k] if dws.shape[0] > 0 else 0.0
        if currents.shape[0] > 0:
            currents[k] = meas * y[_I_A].real + dw / dt
        if use_p:
            y = _exponential_step(y, h, coeffs, dt, dw, P)
        else:
            y = _euler_step(y, h, coeffs, dt, dw)
        rep = _repair(y)
        if rep > worst:
            worst = rep
        for j in range(y.shape[0]):
            if not np.isfinite(y[j].real) or not np.isfinite(y[j].imag):
                return y, written, worst, offset + k
        if (offset + k + 1) % stride == 0:
            snaps[written, :] = y
            written += 1
    return y, written, worst, -1


def step(
    state: MomentState, params: PhysicalParams, flags: DriveFlags, dt: float, dW: float,
    step_index: int = 0,
) -> MomentState:
    """One Euler-Maruyama step followed by conjugation-constraint repair."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    if not np.all(np.isfinite(state.values)):
        raise IntegrationError("non-finite input state", step_index)
    y = _euler_step(
        state.values.copy(), atom_hamiltonian(params, flags), coefficients(params, flags),
        float(dt), float(dW),
    )
    _repair(y)
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite moment state", step_index)
    return MomentState(y)


def photocurrent_sample(state: MomentState, params: PhysicalParams, dW: float, dt: float) -> float:
    """I = sqrt(eta kappa_2) Re<a> + dW/dt with the rotating-frame amplitude."""
    return math.sqrt(params.eta * params.kappa_2) * state.values[_I_A].real + dW / dt


@dataclass
class SegmentInfo:
    label: str
    flags: DriveFlags
    start_step: int
    n_steps: int
    dt: float
    t_start: float
    current_start: Optional[int]  # index into the photocurrent, None if unmeasured


@dataclass
class TrajectoryRecord:
    """Snapshots and measurement record of one noise realisation.

    ``snapshots[k]`` is the moment vector at ``times[k]``; ``photocurrent``
    holds one sample per measured step, at ``current_times``.
    """

    times: np.ndarray
    snapshots: np.ndarray
    photocurrent: np.ndarray
    current_times: np.ndarray
    dW_seed: Optional[int]
    schedule_id: str
    n_atoms: int
    segments: List[SegmentInfo] = field(default_factory=list)
    max_repair: float = 0.0

    @property
    def states(self) -> List[MomentState]:
        return [MomentState(v) for v in self.snapshots]

    def state(self, k: int) -> MomentState:
        return MomentState(self.snapshots[k])

    @property
    def final(self) -> MomentState:
        return MomentState(self.snapshots[-1])

    def segment(self, label: str) -> SegmentInfo:
        for seg in self.segments:
            if seg.label == label:
                return seg
        raise KeyError(f"no segment labelled {label!r}")

    def segment_current(self, label: str) -> np.ndarray:
        seg = self.segment(label)
        if seg.current_start is None:
            raise KeyError(f"segment {label!r} was not measured")
        return self.photocurrent[seg.current_start:seg.current_start + seg.n_steps]

    def snapshot_at_step(self, global_step: int) -> MomentState:
        """Snapshot taken after ``global_step`` steps (0 = initial state)."""
        idx = np.nonzero(self.steps == global_step)[0]
        if idx.size == 0:
            raise KeyError(f"no snapshot at step {global_step}")
        return MomentState(self.snapshots[idx[0]])

    @property
    def steps(self) -> np.ndarray:
        return self._steps

    def __post_init__(self) -> None:
        self._steps = np.zeros(len(self.times), dtype=np.int64)


def segment_steps(duration: float, dt: float, flags: DriveFlags, params: PhysicalParams,
                  scheme: str = "euler") -> tuple[int, float]:
    """Number of steps and the actual step used for one schedule segment.

    The segment is split into an integer number of equal steps no longer than
    ``dt``.  For the Euler scheme, microwave segments are refined further so
    that the amplitude error of the Rabi rotation stays below
    MICROWAVE_GROWTH_TOL; the exponential scheme integrates the (linear)
    rotation exactly and needs no refinement.
    """
    n = max(1, math.ceil(duration / dt - 1e-9))
    if scheme == "euler" and flags.microwave_on and params.omega_mw_amp > 0:
        phase = 2.0 * params.omega_mw_amp * duration
        n = max(n, math.ceil(0.5 * phase ** 2 / MICROWAVE_GROWTH_TOL))
    return n, duration / n


def simulate_trajectory(
    initial: MomentState,
    schedule: "PulseSchedule",
    params: PhysicalParams,
    dt: Optional[float] = None,
    seed: Optional[int] = 0,
    stride: int = 1,
    rng: Optional[np.random.Generator] = None,
    scheme: str = "exponential",
    jacobian_interval: float = JACOBIAN_INTERVAL,
) -> TrajectoryRecord:
    """Integrate ``initial`` through every segment of ``schedule``.

    ``scheme = "euler"`` applies the plain Euler-Maruyama update of
    :func:`step`.  The default ``"exponential"`` integrates the linearised
    drift exactly (see :func:`_exponential_step`), with the Jacobian refreshed
    every ``jacobian_interval`` seconds; this keeps ideal-atom runs stable at
    the reference step.

    Noise for a measured segment is drawn from ``rng`` (or a generator built
    from ``seed``) only for that segment, in schedule order.  Snapshots are
    taken at t = 0, every ``stride`` steps and at each segment end.
    """
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if dt is None:
        dt = reference_dt(params, scheme)
    check_dt(params, dt)
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    y = np.ascontiguousarray(initial.values, dtype=np.complex128).copy()
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite initial state", 0)

    times: List[float] = [0.0]
    snaps: List[np.ndarray] = [y.copy()]
    steps: List[int] = [0]
    currents: List[np.ndarray] = []
    current_times: List[np.ndarray] = []
    infos: List[SegmentInfo] = []
    t = 0.0
    global_step = 0
    n_current = 0
    worst = 0.0
    for seg in schedule.segments:
        n, h_dt = segment_steps(seg.duration, dt, seg.flags, params, scheme)
        h = atom_hamiltonian(params, seg.flags)
        coeffs = coefficients(params, seg.flags)
        measured = seg.flags.measurement_on
        if measured:
            dws = wiener_increments(rng, h_dt, n)
            cur = np.empty(n)
        else:
            dws = np.empty(0)
            cur = np.empty(0)
        buf = np.empty((n // stride + 1, N_SLOTS), dtype=np.complex128)
        use_p = scheme == "exponential"
        interval = jacobian_interval
        if seg.flags.microwave_on and params.omega_mw_amp > 0:
            # the Rabi rotation changes the Jacobian of the closure terms quickly
            interval = min(interval, MICROWAVE_JACOBIAN_ANGLE / params.omega_mw_amp)
        chunk = max(1, int(round(interval / h_dt))) if use_p else n
        P = np.eye(2 * N_SLOTS)
        done = 0
        written = 0
        failed = -1
        while done < n and failed < 0:
            k = min(chunk, n - done)
            if use_p:
                P = phi1_propagator(drift_jacobian(y, h, coeffs), h_dt)
            y, w, rep, failed = _run_chunk(
                y, h, coeffs, h_dt, k,
                dws[done:done + k], stride, done, buf[written:], cur[done:done + k] if measured else cur,
                P, use_p,
            )
            worst = max(worst, rep)
            written += w
            done += k
        if failed >= 0:
            raise IntegrationError(
                f"moment state diverged in segment {seg.label!r} at t = "
                f"{t + (failed + 1) * h_dt:.3e} s", global_step + failed
            )
        for j in range(written):
            k = (j + 1) * stride
            times.append(t + k * h_dt)
            snaps.append(buf[j])
            steps.append(global_step + k)
        if n % stride != 0:
            times.append(t + n * h_dt)
            snaps.append(y.copy())
            steps.append(global_step + n)
        infos.append(SegmentInfo(seg.label, seg.flags, global_step, n, h_dt, t,
                                 n_current if measured else None))
        if measured:
            currents.append(cur)
            current_times.append(t + h_dt * np.arange(n))
            n_current += n
        t += n * h_dt
        global_step += n

    record = TrajectoryRecord(
        times=np.asarray(times),
        snapshots=np.asarray(snaps),
        photocurrent=np.concatenate(currents) if currents else np.empty(0),
        current_times=np.concatenate(current_times) if current_times else np.empty(0),
        dW_seed=seed,
        schedule_id=getattr(schedule, "schedule_id", ""),
        n_atoms=params.n_atoms,
        segments=infos,
        max_repair=worst,
    )
    record._steps = np.asarray(steps, dtype=np.int64)
    return record


def spawn_seeds(base_seed: int, count: int) -> List[np.random.SeedSequence]:
    """Independent child seeds; member k does not depend on ``count``."""
    return np.random.SeedSequence(base_seed).spawn(count)


def ensemble_rngs(base_seed: int, indices: Sequence[int]) -> List[np.random.Generator]:
    """Generators for ensemble members ``indices`` derived from ``base_seed``."""
    return [np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(int(k),)))
            for k in indices]




@njit(cache=True)
def _masked_chunk(y0, h, coeffs, dt, n_steps, P, mask):
    """Deterministic exponential steps with the drift of unmasked slots zeroed."""
    y = y0.copy()
    n = y.shape[0]
    for _ in range(n_steps):
        d, _b = K.drift_diffusion_vec(y, h, coeffs)
        d = d * mask
        out = y.copy()
        for i in range(2 * n):
            acc = 0.0
            for j in range(n):
                acc += P[i, j] * d[j].real + P[i, n + j] * d[j].imag
            if i < n:
                out[i] += acc * dt
            else:
                out[i - n] += 1j * acc * dt
        _repair(out)
        y = out
    return y


def relax(
    initial: MomentState,
    params: PhysicalParams,
    flags: DriveFlags,
    frozen: Sequence[int] = (),
    dt: Optional[float] = None,
    rtol: float = 1e-8,
    max_steps: int = 1_000_000,
    jacobian_interval: float = JACOBIAN_INTERVAL,
) -> MomentState:
    """Integrate the deterministic equations until they stop changing.

    Slots listed in ``frozen`` keep their initial values.  Convergence means
    the largest change of any slot over one cavity lifetime 1/kappa is below
    ``rtol`` times the largest slot magnitude.  The frozen Jacobian of the
    exponential step is refreshed every ``jacobian_interval`` seconds.
    """
    flags = DriveFlags(flags.probe_on, flags.microwave_on, False)
    if dt is None:
        dt = reference_dt(params)
    check_dt(params, dt)
    h = atom_hamiltonian(params, flags)
    coeffs = coefficients(params, flags)
    mask = np.ones(N_SLOTS, dtype=np.complex128)
    mask[list(frozen)] = 0.0
    real_mask = np.concatenate([mask.real, mask.real])
    window = max(1, int(math.ceil(1.0 / (params.kappa * dt))))
    refresh = max(1, int(round(jacobian_interval / (window * dt))))
    y = np.ascontiguousarray(initial.values, dtype=np.complex128).copy()
    steps = 0
    windows = 0
    while steps < max_steps:
        if windows % refresh == 0:
            jac = drift_jacobian(y, h, coeffs) * real_mask[:, None]
            P = phi1_propagator(jac, dt)
        windows += 1
        previous = y
        y = _masked_chunk(y, h, coeffs, dt, window, P, mask)
        steps += window
        if not np.all(np.isfinite(y)):
            raise IntegrationError("deterministic relaxation diverged", steps)
        scale = max(np.max(np.abs(y)), 1e-300)
        if np.max(np.abs(y - previous)) <= rtol * scale:
            return MomentState(y)
    raise ConvergenceError(f"no steady state within {max_steps} steps")


class ConvergenceError(RuntimeError):
    """Steady-state search exhausted its step budget."""

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "REFERENCE_DT",
    "TrajectoryRecord",
    "check_dt",
    "ensemble_rngs",
    "euler_stable_dt",
    "fastest_rate",
    "max_dt",
    "photocurrent_sample",
    "reference_dt",
    "relax",
    "simulate_trajectory",
    "spawn_seeds",
    "step",
    "wiener_increment",
    "wiener_increments",
]
