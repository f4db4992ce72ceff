"""Pulse schedules and the two simulated experiments.

A schedule is an ordered list of segments, each with a duration, the active
drives and a unique label.  :func:`run_squeezing` probes a coherent spin state
continuously; :func:`verification_experiment` runs the microwave/probe
sequence used to generate and then verify conditional squeezing.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import MICROWAVE, PROBE, DriveFlags
from .integrator import TrajectoryRecord, ensemble_rngs, simulate_trajectory
from .model import ParameterError, PhysicalParams, init_all_down, init_spin_coherent
from .observables import spin_series

DEFAULT_PROBE_WINDOW = 5e-6


class UndefinedCorrelationError(ValueError):
    """Correlation requested for data with a constant margin."""


@dataclass(frozen=True)
class Segment:
    duration: float
    flags: DriveFlags
    label: str


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered drive segments; durations positive and labels unique."""

    segments: Tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        seen = set()
        for seg in segs:
            if not (math.isfinite(seg.duration) and seg.duration > 0):
                raise ParameterError(f"segment {seg.label!r}: duration must be > 0")
            if seg.label in seen:
                raise ParameterError(f"duplicate segment label {seg.label!r}")
            seen.add(seg.label)

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def schedule_id(self) -> str:
        text = ";".join(
            f"{s.label}:{s.duration!r}:{int(s.flags.probe_on)}{int(s.flags.microwave_on)}"
            f"{int(s.flags.measurement_on)}"
            for s in self.segments
        )
        return hashlib.sha1(text.encode()).hexdigest()[:12]

    def labels(self) -> List[str]:
        return [s.label for s in self.segments]


def mw_pulse_duration(theta: float, params: PhysicalParams) -> float:
    """Length of a resonant microwave pulse of area ``theta`` (Rabi rate 2 Omega_m)."""
    if not params.omega_mw_amp > 0:
        raise ParameterError("omega_mw_amp must be > 0 for a microwave pulse")
    if theta < 0:
        raise ParameterError(f"pulse area must be >= 0, got {theta!r}")
    return theta / (2.0 * params.omega_mw_amp)


def probe_schedule(duration: float) -> PulseSchedule:
    return PulseSchedule((Segment(duration, PROBE, "probe"),))


def run_squeezing(
    params: PhysicalParams,
    probe_detuning: float,
    duration: float,
    seeds: Sequence[int],
    dt: Optional[float] = None,
    stride: int = 1,
    base_seed: Optional[int] = None,
) -> List[TrajectoryRecord]:
    """Continuously probe the +y coherent state, one trajectory per seed.

    ``probe_detuning`` is delta = omega_p - omega_+ in rad/s.  Each record
    gains an ``xi2`` attribute with the squeezing parameter at every
    snapshot.  With ``base_seed`` set, seed k draws from the splittable
    stream (base_seed, k) instead of ``default_rng(k)``.
    """
    p = params.with_probe_offset(params.collective_coupling + probe_detuning)
    schedule = probe_schedule(duration)
    records = []
    rngs = ensemble_rngs(base_seed, seeds) if base_seed is not None else [None] * len(seeds)
    for seed, rng in zip(seeds, rngs):
        rec = simulate_trajectory(init_spin_coherent(p), schedule, p, dt=dt, seed=seed,
                                  stride=stride, rng=rng)
        rec.xi2 = spin_series(rec.snapshots, p.n_atoms)["xi2"]
        records.append(rec)
    return records


def verification_schedule(
    params: PhysicalParams,
    probe_window: float = DEFAULT_PROBE_WINDOW,
    pulse_durations: Optional[Tuple[float, float]] = None,
) -> PulseSchedule:
    """pi/2, probe 1, pi, probe 2, probe 3, pi, probe 4.

    ``pulse_durations`` overrides the (pi/2, pi) lengths; probe and
    detection are gated off while the microwave is on.
    """
    if pulse_durations is None:
        half, full = mw_pulse_duration(math.pi / 2, params), mw_pulse_duration(math.pi, params)
    else:
        half, full = pulse_durations
    return PulseSchedule((
        Segment(half, MICROWAVE, "mw_half"),
        Segment(probe_window, PROBE, "probe1"),
        Segment(full, MICROWAVE, "mw_pi1"),
        Segment(probe_window, PROBE, "probe2"),
        Segment(probe_window, PROBE, "probe3"),
        Segment(full, MICROWAVE, "mw_pi2"),
        Segment(probe_window, PROBE, "probe4"),
    ))


@dataclass
class VerificationResult:
    n: Tuple[float, float, float, float]
    jz1: float
    jz2: float
    record: Optional[TrajectoryRecord] = None

    def as_tuple(self) -> Tuple[float, float, float, float, float, float]:
        return (*self.n, self.jz1, self.jz2)


def integrated_current(record: TrajectoryRecord, label: str) -> float:
    """n = sum_k I(t_k) dt over one probe window."""
    seg = record.segment(label)
    return float(np.sum(record.segment_current(label)) * seg.dt)


def verification_experiment(
    params: PhysicalParams,
    pulse_durations: Optional[Tuple[float, float]] = None,
    seed: int = 0,
    probe_window: float = DEFAULT_PROBE_WINDOW,
    dt: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    keep_record: bool = False,
    stride: int = 1000,
) -> VerificationResult:
    """Generate and verify conditional squeezing from the all-down state.

    Returns n_1..n_4 with J_{z,1} = n_1 - n_2 and J_{z,2} = n_4 - n_3.
    """
    schedule = verification_schedule(params, probe_window, pulse_durations)
    rec = simulate_trajectory(init_all_down(params), schedule, params, dt=dt, seed=seed,
                              rng=rng, stride=stride)
    n = tuple(integrated_current(rec, f"probe{i}") for i in range(1, 5))
    return VerificationResult(n, n[0] - n[1], n[3] - n[2], rec if keep_record else None)


def verification_ensemble(
    params: PhysicalParams,
    n_trajectories: int,
    base_seed: int = 0,
    **kwargs,
) -> List[VerificationResult]:
    """Member k draws its noise from the splittable stream (base_seed, k)."""
    rngs = ensemble_rngs(base_seed, range(n_trajectories))
    return [verification_experiment(params, seed=base_seed, rng=r, **kwargs) for r in rngs]


def ensemble_correlation(pairs: Iterable[Tuple[float, float]]) -> float:
    """Pearson correlation of (J_{z,1}, J_{z,2}) pairs."""
    data = np.asarray(list(pairs), dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 2:
        raise ValueError("need at least two (x, y) pairs")
    x = data[:, 0] - data[:, 0].mean()
    y = data[:, 1] - data[:, 1].mean()
    sx, sy = math.sqrt(np.dot(x, x)), math.sqrt(np.dot(y, y))
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("a margin has zero variance")
    return float(np.clip(np.dot(x, y) / (sx * sy), -1.0, 1.0))


__all__ = [
    "DEFAULT_PROBE_WINDOW",
    "PulseSchedule",
    "Segment",
    "UndefinedCorrelationError",
    "VerificationResult",
    "ensemble_correlation",
    "integrated_current",
    "mw_pulse_duration",
    "probe_schedule",
    "run_squeezing",
    "verification_ensemble",
    "verification_experiment",
    "verification_schedule",
]
