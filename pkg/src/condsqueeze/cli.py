"""Command-line front end: configuration, seeded runs and CSV output.

Every subcommand writes one or more CSV files plus ``manifest.txt`` into the
output directory.  ``condsqueeze rerun DIR/manifest.txt`` repeats a run with
the recorded configuration, arguments and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import FitError, fit_power_law, fit_squeezing_curve
from .dynamics import PROBE, IntegrationError
from .integrator import ConfigurationError, check_dt, ensemble_rngs, reference_dt
from .model import HZ_KEYS, SLOTS, TWO_PI, ParameterError, PhysicalParams, params_from_hz
from .observables import dressed_frequencies, spin_series, steady_scan_frequency, steady_scan_jz
from .oracle import OracleError, shared_noise_comparison
from .protocol import ensemble_correlation, run_squeezing, verification_experiment

RUN_OPTION_KEYS = {"seed": int, "trajectories": int, "dt_ns": float, "duration_us": float}
SQUEEZE_COLUMNS = ("time_us", "jx", "jy", "jz", "djx", "djy", "djz", "xi2", "re_a", "im_a",
                   "photocurrent")


class ConfigError(ValueError):
    """Malformed configuration file."""


@dataclass
class Config:
    params: PhysicalParams
    options: Dict[str, float] = field(default_factory=dict)
    entries: List[Tuple[str, str]] = field(default_factory=list)  # raw key/value text


def _parse_number(text: str, key: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: value for {key!r} is not a number: {text!r}") from None


def parse_config(text: str) -> Config:
    values: Dict[str, float] = {}
    options: Dict[str, float] = {}
    entries: List[Tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if not key or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in values or key in options:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        number = _parse_number(value, key, lineno)
        if key in HZ_KEYS:
            values[key] = number
        elif key in RUN_OPTION_KEYS:
            options[key] = RUN_OPTION_KEYS[key](number)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        entries.append((key, value))
    try:
        params = params_from_hz(values)
    except ParameterError as exc:
        # name the offending key when one entry is invalid on its own
        for key, number in values.items():
            try:
                params_from_hz({key: number})
            except ParameterError as single:
                raise ConfigError(f"{key}: {single}") from None
        raise ConfigError(str(exc)) from None
    return Config(params, options, entries)


def load_config(path) -> Config:
    """Read a ``key = value`` file; missing keys keep the reference values."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)


# -- output helpers ----------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _version() -> str:
    try:
        return metadata.version("condsqueeze")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(out: Path, command: str, argv: Sequence[str], config: Config,
                   seed: int, dt: Optional[float]) -> None:
    lines = [
        "# condsqueeze run manifest",
        f"command = {command}",
        f"argv = {json.dumps(list(argv))}",
        f"seed = {seed}",
        f"dt_s = {dt!r}" if dt is not None else "dt_s = auto",
        f"version = {_version()}",
    ]
    lines += [f"config.{k} = {v}" for k, v in config.entries]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_manifest(path) -> Tuple[List[str], Config]:
    text = Path(path).read_text()
    argv = None
    config_lines = []
    for line in text.splitlines():
        if line.startswith("argv = "):
            argv = json.loads(line[len("argv = "):])
        elif line.startswith("config."):
            config_lines.append(line[len("config."):])
    if argv is None:
        raise ConfigError(f"{path}: manifest has no argv entry")
    return argv, parse_config("\n".join(config_lines))


# -- subcommands -------------------------------------------------------------

def _dt(args, config: Config, params: PhysicalParams) -> float:
    dt_ns = args.dt_ns if args.dt_ns is not None else config.options.get("dt_ns")
    if dt_ns is None:
        return reference_dt(params)
    dt = float(dt_ns) * 1e-9
    check_dt(params, dt)
    return dt


def _option(args, config: Config, name: str, default):
    value = getattr(args, name)
    if value is None:
        value = config.options.get(name, default)
    return value


def cmd_scan_frequency(args, config: Config, out: Path) -> dict:
    p = config.params
    offsets = np.arange(-args.span_mhz, args.span_mhz + 1e-9, args.step_mhz)
    amps = steady_scan_frequency(p, p.omega_32 + TWO_PI * 1e6 * offsets)
    write_csv(out / "scan_frequency.csv", ("offset_mhz", "re_a", "im_a", "abs_a"),
              ((o, a.real, a.imag, abs(a)) for o, a in zip(offsets, amps)))
    upper, lower = dressed_frequencies(p)
    return {"omega_plus_offset_mhz": (upper - p.omega_32) / TWO_PI / 1e6,
            "omega_minus_offset_mhz": (lower - p.omega_32) / TWO_PI / 1e6}


def cmd_scan_jz(args, config: Config, out: Path) -> dict:
    p = config.params
    ratios = np.linspace(-0.5, 0.5, args.points)
    amps = steady_scan_jz(p, ratios * p.n_atoms)
    write_csv(out / "scan_jz.csv", ("jz_over_n", "re_a", "im_a", "abs_a"),
              ((r, a.real, a.imag, abs(a)) for r, a in zip(ratios, amps)))
    return {}


def _squeeze_rows(rec):
    s = spin_series(rec.snapshots, rec.n_atoms)
    steps = rec.steps
    cur = rec.photocurrent
    for k, t in enumerate(rec.times):
        if k == 0 or cur.size == 0:
            i_mean = math.nan
        else:
            i_mean = float(np.mean(cur[steps[k - 1]:steps[k]]))
        yield (t * 1e6, s["jx"][k], s["jy"][k], s["jz"][k],
               math.sqrt(max(s["var_jx"][k], 0.0)), math.sqrt(max(s["var_jy"][k], 0.0)),
               math.sqrt(max(s["var_jz"][k], 0.0)), s["xi2"][k],
               s["alpha"][k].real, s["alpha"][k].imag, i_mean)


def _fit_row(times, xi):
    try:
        f = fit_squeezing_curve(times, xi)
        return (f.A, f.k1, f.k2, f.xi_min, f.tau, f.residual_norm)
    except (FitError, ValueError):
        return (math.nan,) * 6


def cmd_squeeze(args, config: Config, out: Path, seed: int) -> dict:
    p = config.params
    dt = _dt(args, config, p)
    duration = _option(args, config, "duration_us", 20.0) * 1e-6
    count = int(_option(args, config, "trajectories", 1))
    n_steps = int(math.ceil(duration / dt))
    stride = max(1, n_steps // args.samples)
    records = run_squeezing(p, TWO_PI * 1e6 * args.detuning_mhz, duration, list(range(count)),
                            dt=dt, stride=stride, base_seed=seed)
    fits = []
    for k, rec in enumerate(records):
        name = "squeeze.csv" if count == 1 else f"squeeze_{k:03d}.csv"
        write_csv(out / name, SQUEEZE_COLUMNS, _squeeze_rows(rec))
        fits.append((k,) + _fit_row(rec.times, rec.xi2))
    write_csv(out / "squeeze_fit.csv", ("member", "A", "k1", "k2", "xi_min", "tau_s", "residual"), fits)
    return {"dt_s": dt}


SWEEPS = {"n": "n_atoms", "gamma": "gamma", "chi": "chi", "eta": "eta"}


def cmd_scaling(args, config: Config, out: Path, seed: int) -> dict:
    base = config.params
    dt_opt = args.dt_ns if args.dt_ns is not None else config.options.get("dt_ns")
    duration = _option(args, config, "duration_us", 20.0) * 1e-6
    count = int(_option(args, config, "trajectories", 1))
    rows = []
    xi_over_n = []
    for value in args.values:
        if args.sweep == "n":
            p = base.updated(n_atoms=int(value))
        elif args.sweep == "eta":
            p = base.updated(eta=float(value))
        else:
            p = base.updated(**{SWEEPS[args.sweep]: TWO_PI * float(value)})
        dt = reference_dt(p) if dt_opt is None else float(dt_opt) * 1e-9
        check_dt(p, dt)
        stride = max(1, int(math.ceil(duration / dt)) // args.samples)
        recs = run_squeezing(p, 0.0, duration, list(range(count)), dt=dt, stride=stride,
                             base_seed=seed)
        fits = np.array([_fit_row(r.times, r.xi2) for r in recs])
        mins = np.array([np.nanmin(r.xi2) for r in recs])
        mean_fit = np.nanmean(fits, axis=0) if np.any(np.isfinite(fits)) else fits[0]
        row = (value, *mean_fit, float(mins.mean()), float(mins.mean()) / p.n_atoms)
        rows.append(row)
        xi_over_n.append(row[-1])
    write_csv(out / "scaling.csv",
              ("value", "A", "k1", "k2", "xi_min_fit", "tau_s", "residual", "xi_min_sampled",
               "xi_min_over_n"), rows)
    summary = {}
    if args.sweep == "n" and len(args.values) >= 3:
        summary["exponent"] = fit_power_law(args.values, xi_over_n)
    return summary


def cmd_verify(args, config: Config, out: Path, seed: int) -> dict:
    p = config.params
    dt_opt = args.dt_ns if args.dt_ns is not None else config.options.get("dt_ns")
    dt = None if dt_opt is None else float(dt_opt) * 1e-9
    count = int(_option(args, config, "trajectories", 100))
    rows = []
    for k, rng in enumerate(ensemble_rngs(seed, range(count))):
        r = verification_experiment(p, seed=seed, rng=rng, dt=dt,
                                    probe_window=args.probe_window_us * 1e-6)
        rows.append((k, *r.as_tuple()))
    write_csv(out / "verify.csv", ("member", "n1", "n2", "n3", "n4", "jz1", "jz2"), rows)
    corr = ensemble_correlation([(r[5], r[6]) for r in rows]) if count >= 2 else math.nan
    write_csv(out / "verify_summary.csv", ("trajectories", "correlation"), [(count, corr)])
    return {"correlation": corr}


def cmd_oracle_check(args, config: Config, out: Path, seed: int) -> dict:
    p = config.params.updated(n_atoms=2)
    p = p.updated(omega_prob_amp=p.omega_prob_amp * args.drive_scale, eta=1.0)
    psi = np.array([0.6, 0.5 + 0.3j, 0.2 - 0.1j])
    psi = psi / np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    dt = (args.dt_ns if args.dt_ns is not None else 0.1) * 1e-9
    res = shared_noise_comparison(p, PROBE, rho, n_steps=args.steps, dt=dt, seed=seed)
    write_csv(out / "oracle_check.csv",
              ("moment", "oracle_re", "oracle_im", "moments_re", "moments_im", "abs_diff"),
              ((name, o.real, o.imag, m.real, m.imag, abs(o - m))
               for name, o, m in zip(SLOTS, res.oracle_moments, res.moment_moments)))
    return {"max_abs_diff": res.max_abs_diff, "derivative_rel_diff": res.derivative_rel_diff}


COMMANDS = {
    "scan-frequency": cmd_scan_frequency,
    "scan-jz": cmd_scan_jz,
    "squeeze": cmd_squeeze,
    "scaling": cmd_scaling,
    "verify": cmd_verify,
    "oracle-check": cmd_oracle_check,
}
_SEEDLESS = {"scan-frequency", "scan-jz"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value parameter file (Hz units)")
    common.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    common.add_argument("--trajectories", type=int, default=None)
    common.add_argument("--dt-ns", type=float, default=None, help="integration step in ns")
    common.add_argument("--duration-us", type=float, default=None)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    parser = argparse.ArgumentParser(prog="condsqueeze", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("scan-frequency", parents=[common], help="steady <a> versus probe frequency")
    p.add_argument("--span-mhz", type=float, default=30.0)
    p.add_argument("--step-mhz", type=float, default=0.2)
    p = sub.add_parser("scan-jz", parents=[common], help="steady <a> versus J_z")
    p.add_argument("--points", type=int, default=41)
    p = sub.add_parser("squeeze", parents=[common], help="squeezing time series and fit")
    p.add_argument("--detuning-mhz", type=float, default=0.0, help="probe offset from omega_+")
    p.add_argument("--samples", type=int, default=400, help="snapshots per trajectory")
    p = sub.add_parser("scaling", parents=[common], help="minimal squeezing across a sweep")
    p.add_argument("--sweep", choices=sorted(SWEEPS), default="n")
    p.add_argument("--values", type=float, nargs="+",
                   default=[1e3, 3e3, 1e4, 3e4, 1e5], help="N, rates in Hz, or eta values")
    p.add_argument("--samples", type=int, default=400)
    p = sub.add_parser("verify", parents=[common], help="generation and verification ensemble")
    p.add_argument("--probe-window-us", type=float, default=5.0)
    p = sub.add_parser("oracle-check", parents=[common], help="moments versus density matrix")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--drive-scale", type=float, default=1e-3)
    p = sub.add_parser("rerun", help="repeat the run recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, default=None)
    return parser


def _portable_argv(argv: Sequence[str]) -> List[str]:
    """Drop --config and --out; the manifest records the config contents."""
    out: List[str] = []
    skip = False
    for a in argv:
        if skip:
            skip = False
        elif a in ("--config", "--out"):
            skip = True
        elif not a.startswith(("--config=", "--out=")):
            out.append(a)
    return out


def _execute(argv: Sequence[str], config: Optional[Config] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(list(argv))
    if args.command == "rerun":
        recorded, cfg = read_manifest(args.manifest)
        if args.out is not None:
            recorded += ["--out", str(args.out)]
        return _execute(recorded, cfg)
    if config is None:
        config = load_config(args.config) if args.config else Config(PhysicalParams())
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else int(config.options.get("seed", 0))
    if args.command in _SEEDLESS:
        summary = COMMANDS[args.command](args, config, out)
    else:
        summary = COMMANDS[args.command](args, config, out, seed)
    write_manifest(out, args.command, _portable_argv(argv), config, seed, summary.get("dt_s"))
    for key, value in summary.items():
        print(f"{key} = {_fmt(value)}")
    return 0


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point returning an exit code instead of raising."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return _execute(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except (ConfigError, ParameterError, ConfigurationError, IntegrationError, OracleError,
            OSError, ValueError, RuntimeError) as exc:
        print(f"condsqueeze: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


__all__ = ["Config", "ConfigError", "build_parser", "load_config", "main", "parse_config", "run"]


if __name__ == "__main__":
    main()
