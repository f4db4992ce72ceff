"""Fits and derived quantities for squeezing curves, scaling laws and spin rotation.

The squeezing model is

    xi^2(t) = A / (1 + k1 t) + (1 - A) exp(k2 t)

whose interior minimum has the closed form tau = 2 W(s) / k2 - 1/k1 with
s = (k2 / 2k1) sqrt(A/(1-A) * (k1/k2) * exp(k2/k1)) and W the principal
branch of the Lambert W function.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .observables import dressed_frequencies

INV_E = math.exp(-1.0)
FIT_A_STARTS = (0.3, 0.6, 0.9)
FIT_RATE_STARTS = tuple(np.logspace(3, 7, 5))  # 1/s


class FitError(RuntimeError):
    """Nonlinear fit failed; ``best_residual`` holds the best norm reached."""

    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class NoMinimumError(ValueError):
    """The fitted curve has no interior minimum."""


class DetectionError(ValueError):
    """No oscillation could be resolved in the series."""


def squeezing_model(t, A: float, k1: float, k2: float):
    t = np.asarray(t, dtype=float)
    return A / (1.0 + k1 * t) + (1.0 - A) * np.exp(k2 * t)


@dataclass(frozen=True)
class FitResult:
    A: float
    k1: float
    k2: float
    residual_norm: float
    xi_min: float = math.nan
    tau: float = math.nan
    low_information: bool = False

    def __call__(self, t):
        return squeezing_model(t, self.A, self.k1, self.k2)


# -- Lambert W ---------------------------------------------------------------

def _w_initial(s: float) -> float:
    if s < -0.25:
        p = math.sqrt(2.0 * (math.e * s + 1.0))
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    if s < 3.0:
        return math.log1p(s)
    ls = math.log(s)
    return ls - math.log(ls)


def lambert_w0(s: float) -> float:
    """Principal branch W_0(s) for s >= -1/e by Halley iteration."""
    s = float(s)
    if not math.isfinite(s):
        if s == math.inf:
            return math.inf
        raise ValueError(f"lambert_w0 needs a finite argument, got {s!r}")
    if s < -INV_E:
        # tolerate round-off just below the branch point
        if s > -INV_E - 1e-15:
            return -1.0
        raise ValueError(f"lambert_w0 is undefined below -1/e, got {s!r}")
    if s == 0.0:
        return 0.0
    if s == -INV_E:
        return -1.0
    w = _w_initial(s)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - s
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w -= step
        if abs(step) <= 1e-16 * max(1.0, abs(w)):
            break
    return w


def _lambert_w0_log(log_s: float) -> float:
    """W_0(exp(log_s)) for arguments too large to exponentiate."""
    if log_s < 700.0:
        return lambert_w0(math.exp(log_s))
    w = log_s - math.log(log_s)
    for _ in range(100):  # Newton on w + log w = log_s
        step = (w + math.log(w) - log_s) / (1.0 + 1.0 / w)
        w -= step
        if abs(step) <= 1e-16 * w:
            break
    return w


# -- squeezing curve fit -----------------------------------------------------

def _interior_minimum(A: float, k1: float, k2: float) -> Tuple[float, float]:
    if not (0.0 < A < 1.0) or not k1 > 0 or not k2 > 0:
        raise NoMinimumError(f"no interior minimum for A={A!r}, k1={k1!r}, k2={k2!r}")
    r = k2 / k1
    log_s = math.log(r / 2.0) + 0.5 * (math.log(A) - math.log1p(-A) - math.log(r) + r)
    tau = 2.0 * _lambert_w0_log(log_s) / k2 - 1.0 / k1
    if tau <= 0.0:
        raise NoMinimumError(f"fitted curve is increasing from t = 0 (tau = {tau:.3e} s)")
    return tau, float(squeezing_model(tau, A, k1, k2))


def minimal_squeezing_time(fit: FitResult, check: bool = True) -> Tuple[float, float]:
    """(tau, xi_min) from the closed form; cross-checked by a bounded 1-D search."""
    tau, xi_min = _interior_minimum(fit.A, fit.k1, fit.k2)
    if check:
        res = minimize_scalar(
            lambda t: float(squeezing_model(t, fit.A, fit.k1, fit.k2)),
            bounds=(0.0, 4.0 * tau), method="bounded", options={"xatol": 1e-9 * tau},
        )
        if abs(res.x - tau) > 1e-3 * tau:
            warnings.warn(
                f"closed-form tau {tau:.6e} differs from numeric argmin {res.x:.6e}",
                RuntimeWarning, stacklevel=2,
            )
    return tau, xi_min


def _finish(A, k1, k2, resid, low_info=False) -> FitResult:
    try:
        tau, xi_min = minimal_squeezing_time(FitResult(A, k1, k2, resid), check=False)
    except NoMinimumError:
        tau, xi_min = math.nan, math.nan
    return FitResult(A, k1, k2, resid, xi_min, tau, low_info)


def fit_squeezing_curve(times: Sequence[float], xi_values: Sequence[float]) -> FitResult:
    """Least-squares fit of (A, k1, k2) to a squeezing-parameter series.

    Every point of the (A, k1, k2) start grid is refined with
    Levenberg-Marquardt in scaled units; the admissible solution (A in (0, 1],
    k1, k2 >= 0) with the smallest residual wins.  A series that never
    leaves 1 returns the flat fit A = 1, k1 = k2 = 0 flagged as
    low-information.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(xi_values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and xi_values must be 1-D arrays of equal length")
    if t.size < 10:
        raise ValueError(f"need at least 10 samples, got {t.size}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("xi values must be finite and positive")
    if np.max(np.abs(y - 1.0)) < 1e-12:
        return FitResult(1.0, 0.0, 0.0, float(np.linalg.norm(y - 1.0)), math.nan, math.nan, True)
    scale = float(np.max(t)) or 1.0
    ts = t / scale

    def residual(p):
        with np.errstate(over="ignore", invalid="ignore"):
            r = p[0] / (1.0 + p[1] * ts) + (1.0 - p[0]) * np.exp(p[2] * ts) - y
        return np.where(np.isfinite(r), r, 1e10)

    best = None
    best_any = math.inf
    for A0, k10, k20 in itertools.product(FIT_A_STARTS, FIT_RATE_STARTS, FIT_RATE_STARTS):
        p0 = np.array([A0, k10 * scale, min(k20 * scale, 50.0)])
        try:
            sol = least_squares(residual, p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=2000)
        except (ValueError, FloatingPointError):
            continue
        norm = float(np.linalg.norm(sol.fun))
        best_any = min(best_any, norm)
        A, k1, k2 = sol.x
        if not (0.0 < A <= 1.0 + 1e-12 and k1 >= 0.0 and k2 >= -1e-12 * abs(k1) and np.isfinite(norm)):
            continue
        if best is None or norm < best[0]:
            best = (norm, min(A, 1.0), k1 / scale, max(k2, 0.0) / scale)
    if best is None:
        raise FitError("no admissible fit of the squeezing model", best_any)
    norm, A, k1, k2 = best
    return _finish(float(A), float(k1), float(k2), norm)


# -- scaling and rotation ---------------------------------------------------

def fit_power_law(n_values: Sequence[float], y_values: Sequence[float]) -> float:
    """Exponent b of y ~ N^b from a straight-line fit in log-log space."""
    n = np.asarray(n_values, dtype=float)
    y = np.asarray(y_values, dtype=float)
    if n.shape != y.shape or n.size < 3:
        raise ValueError("need at least three (N, y) points")
    if np.any(n <= 0) or np.any(y <= 0) or not (np.all(np.isfinite(n)) and np.all(np.isfinite(y))):
        raise ValueError("power-law fit needs finite positive values")
    slope, _ = np.polyfit(np.log(n), np.log(y), 1)
    return float(slope)


def _sinusoid(p, t):
    amp, freq, phase, offset = p
    return amp * np.cos(2.0 * math.pi * freq * t + phase) + offset


def oscillation_frequency(times: Sequence[float], series: Sequence[float],
                          min_periods: float = 3.0) -> float:
    """Dominant frequency (Hz) of ``series`` from a four-parameter sinusoid fit.

    The start value comes from the peak of a zero-padded periodogram.  Raises
    :class:`DetectionError` when the fitted amplitude is not clearly above the
    residual or the record spans fewer than ``min_periods`` periods.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(series, dtype=float)
    if t.shape != x.shape or t.size < 8:
        raise ValueError("need at least 8 equally long samples")
    span = t[-1] - t[0]
    scale = float(np.max(np.abs(x))) or 1.0
    xs = x / scale
    ts = t - t[0]
    uniform = np.linspace(0.0, span, t.size)
    xu = np.interp(uniform, ts, xs)
    pad = 16 * t.size
    spectrum = np.abs(np.fft.rfft((xu - xu.mean()) * np.hanning(t.size), pad))
    freqs = np.fft.rfftfreq(pad, d=span / (t.size - 1))
    if spectrum[1:].max() <= 1e-9 * t.size:
        raise DetectionError("series is constant")
    f0 = freqs[1 + np.argmax(spectrum[1:])]
    amp0 = 0.5 * (xs.max() - xs.min())
    best = None
    for phase0 in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
        sol = least_squares(lambda p: _sinusoid(p, ts) - xs, [amp0, f0, phase0, xs.mean()],
                            method="lm", xtol=1e-14, ftol=1e-14)
        if best is None or sol.cost < best.cost:
            best = sol
    amp, freq = abs(best.x[0]), abs(best.x[1])
    rms = math.sqrt(2.0 * best.cost / t.size)
    if amp < 3.0 * rms or amp < 1e-9:
        raise DetectionError(f"oscillation amplitude {amp * scale:.3e} below noise floor {rms * scale:.3e}")
    if freq * span < min_periods:
        raise DetectionError(f"only {freq * span:.2f} periods in the record; need {min_periods}")
    return float(freq)


def rotation_frequency(times: Sequence[float], jx: Sequence[float], jy: Sequence[float]) -> float:
    """Rotation frequency (Hz) of the transverse spin from its unwrapped azimuth.

    Works on records shorter than one period; positive for rotation from
    +x towards +y.
    """
    t = np.asarray(times, dtype=float)
    phi = np.unwrap(np.arctan2(np.asarray(jy, dtype=float), np.asarray(jx, dtype=float)))
    if t.size < 3:
        raise ValueError("need at least three samples")
    slope, _ = np.polyfit(t - t[0], phi, 1)
    return float(slope / (2.0 * math.pi))


def ac_stark_shift(params, probe_rate: Optional[float] = None) -> float:
    """Predicted ground-state light shift -W^2/D1 - W^2/D2 (rad/s).

    W is the effective drive rate Omega_p sqrt(kappa/2) unless
    ``probe_rate`` is given; D_i = omega_p - omega_(-/+) are the detunings
    from the lower and upper dressed states.
    """
    w = params.omega_prob_amp * math.sqrt(params.kappa / 2.0) if probe_rate is None else probe_rate
    upper, lower = dressed_frequencies(params)
    d1, d2 = params.omega_p - lower, params.omega_p - upper
    if d1 == 0 or d2 == 0:
        raise ValueError("probe exactly on a dressed resonance: light shift diverges")
    return -w * w / d1 - w * w / d2


__all__ = [
    "DetectionError",
    "FitError",
    "FitResult",
    "NoMinimumError",
    "ac_stark_shift",
    "fit_power_law",
    "fit_squeezing_curve",
    "lambert_w0",
    "minimal_squeezing_time",
    "oscillation_frequency",
    "rotation_frequency",
    "squeezing_model",
]
