"""Brute-force conditional density-matrix integration on a truncated space.

Used as ground truth for the moment equations.  The Hilbert space is a Fock
space with ``fock_cutoff`` levels times ``n_atoms`` explicit three-level atoms,
and the stochastic master equation is integrated in the same rotating frame
as the moment equations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .model import (
    MomentState,
    N_SLOTS,
    PAIR_START,
    ParameterError,
    PhysicalParams,
    SLOTS,
)
from .dynamics import DriveFlags, diffusion, drift
from .integrator import photocurrent_sample, step, wiener_increments


class OracleError(RuntimeError):
    """Trace collapse, non-finite entries or an invalid truncation."""


def _atom_op(l: int, m: int) -> np.ndarray:
    op = np.zeros((3, 3), dtype=np.complex128)
    op[l - 1, m - 1] = 1.0
    return op


def _embed(ops: list[np.ndarray]) -> np.ndarray:
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


@dataclass(frozen=True)
class Operators:
    fock_cutoff: int
    n_atoms: int

    @cached_property
    def dim(self) -> int:
        return self.fock_cutoff * 3 ** self.n_atoms

    @cached_property
    def a(self) -> np.ndarray:
        a = np.diag(np.sqrt(np.arange(1, self.fock_cutoff)), 1).astype(np.complex128)
        return _embed([a] + [np.eye(3)] * self.n_atoms)

    def sigma(self, k: int, l: int, m: int) -> np.ndarray:
        """|l><m| on atom k (0-based atom index, 1-based levels)."""
        ops = [np.eye(self.fock_cutoff)] + [np.eye(3)] * self.n_atoms
        ops[1 + k] = _atom_op(l, m)
        return _embed(ops).astype(np.complex128)

    def top_fock_projector(self) -> np.ndarray:
        p = np.zeros((self.fock_cutoff, self.fock_cutoff))
        p[-1, -1] = 1.0
        return _embed([p] + [np.eye(3)] * self.n_atoms).astype(np.complex128)


@dataclass
class TruncatedSystem:
    """Density matrix of the cavity mode and N <= 3 explicit atoms."""

    n_atoms: int
    fock_cutoff: int
    rho: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        if not 1 <= self.n_atoms <= 3:
            raise ParameterError("oracle supports 1 to 3 atoms")
        if not 2 <= self.fock_cutoff <= 4:
            raise ParameterError("oracle Fock cutoff must be in [2, 4]")
        dim = self.fock_cutoff * 3 ** self.n_atoms
        if self.rho.shape != (dim, dim):
            raise ParameterError(f"density matrix must be {dim}x{dim}")

    @property
    def ops(self) -> Operators:
        return _operators(self.fock_cutoff, self.n_atoms)

    @property
    def dimension(self) -> int:
        return self.rho.shape[0]

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.rho @ op))

    def top_fock_population(self) -> float:
        return self.expect(self.ops.top_fock_projector()).real

    def check(self, tol_trace: float = 1e-8, tol_eig: float = 1e-6) -> None:
        rho = self.rho
        if not np.all(np.isfinite(rho)):
            raise OracleError("non-finite density matrix")
        if abs(np.trace(rho) - 1) > tol_trace:
            raise OracleError(f"trace drifted to {np.trace(rho)}")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > 1e-10:
            raise OracleError(f"density matrix not Hermitian ({herm:.2e})")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol_eig:
            raise OracleError("density matrix lost positivity")


_OPS_CACHE: dict = {}


def _operators(fock_cutoff: int, n_atoms: int) -> Operators:
    key = (fock_cutoff, n_atoms)
    if key not in _OPS_CACHE:
        _OPS_CACHE[key] = Operators(fock_cutoff, n_atoms)
    return _OPS_CACHE[key]


def product_system(
    n_atoms: int,
    fock_cutoff: int,
    field_amp: complex,
    rho_atom: np.ndarray,
) -> TruncatedSystem:
    """Truncated coherent field times identical atoms in ``rho_atom``."""
    k = np.arange(fock_cutoff)
    fact = np.array([np.prod(np.arange(1, j + 1, dtype=float)) for j in k])
    psi = field_amp ** k / np.sqrt(fact)
    psi = psi / np.linalg.norm(psi)
    rho_field = np.outer(psi, psi.conj())
    rho = _embed([rho_field] + [np.asarray(rho_atom, dtype=np.complex128)] * n_atoms)
    return TruncatedSystem(n_atoms, fock_cutoff, rho.astype(np.complex128))


class SMEGenerator:
    """Drift and backaction of the conditional master equation (rotating frame)."""

    def __init__(self, params: PhysicalParams, flags: DriveFlags, n_atoms: int, fock_cutoff: int):
        ops = _operators(fock_cutoff, n_atoms)
        self.ops = ops
        a = ops.a
        ad = a.conj().T
        dim = ops.dim
        H = params.delta_c * (ad @ a)
        if flags.probe_on:
            f = params.probe_rate
            H = H + f * a + np.conj(f) * ad
        for k in range(n_atoms):
            s22, s33 = ops.sigma(k, 2, 2), ops.sigma(k, 3, 3)
            H = H + params.delta_21 * s22 + (params.delta_21 + params.delta_32) * s33
            s23 = ops.sigma(k, 2, 3)
            H = H + params.g * (ad @ s23 + s23.conj().T @ a)
            if flags.microwave_on:
                s12 = ops.sigma(k, 1, 2)
                H = H + params.omega_mw_amp * (s12 + s12.conj().T)
        self.H = H
        jumps = [np.sqrt(params.kappa) * a]
        for k in range(n_atoms):
            jumps.append(np.sqrt(params.gamma) * ops.sigma(k, 2, 3))
            z = ops.sigma(k, 2, 2) - ops.sigma(k, 3, 3)
            jumps.append(np.sqrt(params.chi / 2) * z)
        self.jumps = jumps
        self.jdj = sum((L.conj().T @ L for L in jumps), np.zeros((dim, dim), dtype=np.complex128))
        self.meas = (
            np.sqrt(params.eta * params.kappa_2) if flags.measurement_on else 0.0
        )
        self.a = a

    def drift(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self.H @ rho - rho @ self.H)
        for L in self.jumps:
            out += L @ rho @ L.conj().T
        out -= 0.5 * (self.jdj @ rho + rho @ self.jdj)
        return out

    def backaction(self, rho: np.ndarray) -> np.ndarray:
        if self.meas == 0.0:
            return np.zeros_like(rho)
        a = self.a
        mean = np.trace(a @ rho)
        return self.meas * (a @ rho + rho @ a.conj().T - 2.0 * mean.real * rho)


def sme_step(
    sys: TruncatedSystem,
    params: PhysicalParams,
    flags: DriveFlags,
    dt: float,
    dW: float,
    generator: Optional[SMEGenerator] = None,
) -> TruncatedSystem:
    """One Euler-Maruyama step of the conditional master equation.

    The trace is renormalised and the density matrix re-Hermitised afterwards.
    """
    if dt <= 0:
        raise ParameterError("dt must be > 0")
    gen = generator or SMEGenerator(params, flags, sys.n_atoms, sys.fock_cutoff)
    rho = sys.rho
    new = rho + gen.drift(rho) * dt + gen.backaction(rho) * dW
    new = 0.5 * (new + new.conj().T)
    tr = np.trace(new).real
    if not np.isfinite(tr) or tr <= 1e-12:
        raise OracleError("trace collapse in oracle step")
    new /= tr
    if not np.all(np.isfinite(new)):
        raise OracleError("non-finite density matrix")
    return replace(sys, rho=new, t=sys.t + dt)


def photocurrent(sys: TruncatedSystem, params: PhysicalParams, dW: float, dt: float) -> float:
    return float(np.sqrt(params.eta * params.kappa_2) * sys.expect(sys.ops.a).real + dW / dt)


def moment_operators(ops: Operators, atoms: tuple[int, int] = (0, 1)) -> list[np.ndarray]:
    """Operators of every stored slot, pair moments on the given atoms."""
    out = []
    for name in SLOTS:
        factors = name.split("*")
        prod = np.eye(ops.dim, dtype=np.complex128)
        atom_i = 0
        for f in factors:
            if f == "a":
                op = ops.a
            elif f == "adag":
                op = ops.a.conj().T
            else:
                if ops.n_atoms < 2 and atom_i == 1:
                    op = None
                else:
                    op = ops.sigma(atoms[atom_i], int(f[1]), int(f[2]))
                atom_i += 1
            prod = None if (prod is None or op is None) else prod @ op
        out.append(prod)
    return out


_MOMENT_OPS_CACHE: dict = {}


def extract_moments(sys: TruncatedSystem, atoms: tuple[int, int] = (0, 1)) -> MomentState:
    """Exact expectation values of every stored moment.

    Single-atom moments use the first atom of ``atoms``; pair moments use both.
    With a single atom the pair slots are zero.
    """
    key = (sys.fock_cutoff, sys.n_atoms, atoms)
    if key not in _MOMENT_OPS_CACHE:
        ops = sys.ops
        first = atoms[0]
        mops = moment_operators(ops, (first, atoms[1] if sys.n_atoms > 1 else first))
        if sys.n_atoms < 2:
            mops = [op if i < PAIR_START else None for i, op in enumerate(mops)]
        _MOMENT_OPS_CACHE[key] = mops
    values = np.zeros(N_SLOTS, dtype=np.complex128)
    rho = sys.rho
    for i, op in enumerate(_MOMENT_OPS_CACHE[key]):
        if op is not None:
            values[i] = np.sum(op.T * rho)  # tr(rho op)
    return MomentState(values)


def moment_derivatives(
    sys: TruncatedSystem, params: PhysicalParams, flags: DriveFlags
) -> tuple[np.ndarray, np.ndarray]:
    """Exact d<X>/dt (drift) and dW coefficient for every stored moment."""
    gen = SMEGenerator(params, flags, sys.n_atoms, sys.fock_cutoff)
    d = extract_moments(replace(sys, rho=gen.drift(sys.rho))).values
    b = extract_moments(replace(sys, rho=gen.backaction(sys.rho))).values
    return d, b


@dataclass
class ComparisonResult:
    """Outcome of a shared-noise oracle comparison."""

    max_abs_diff: float
    derivative_rel_diff: float
    backaction_rel_diff: float
    photocurrent_max_diff: float
    top_fock_population: float
    oracle_moments: np.ndarray
    moment_moments: np.ndarray


def _rel_diff(x: np.ndarray, y: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(x))), 1e-300)
    return float(np.max(np.abs(x - y)) / scale)


def shared_noise_comparison(
    params: PhysicalParams,
    flags: DriveFlags,
    rho_atom: np.ndarray,
    n_steps: int = 100,
    dt: float = 1e-10,
    seed: int = 0,
    fock_cutoff: int = 4,
    field_amp: complex = 0.0,
    max_top_fock: float = 1e-6,
) -> ComparisonResult:
    """Integrate the oracle and the moment equations with identical noise.

    Both start from the same product state and take ``n_steps`` Euler steps
    driven by the same Wiener increments.  The run is rejected when the top
    Fock level ever holds more than ``max_top_fock`` population.
    """
    system = product_system(params.n_atoms, fock_cutoff, field_amp, rho_atom)
    moments = extract_moments(system)
    d_exact, b_exact = moment_derivatives(system, params, flags)
    d_moment = drift(moments, params, flags).values
    b_moment = diffusion(moments, params, flags).values
    dws = wiener_increments(np.random.default_rng(seed), dt, n_steps)
    gen = SMEGenerator(params, flags, system.n_atoms, fock_cutoff)
    top = system.top_fock_population()
    current_diff = 0.0
    for dw in dws:
        if flags.measurement_on:
            current_diff = max(current_diff, abs(
                photocurrent(system, params, dw, dt) - photocurrent_sample(moments, params, dw, dt)))
        system = sme_step(system, params, flags, dt, dw, gen)
        moments = step(moments, params, flags, dt, dw)
        top = max(top, system.top_fock_population())
        if top > max_top_fock:
            raise OracleError(f"Fock truncation violated: top level population {top:.3e}")
    exact = extract_moments(system).values
    mine = moments.values
    return ComparisonResult(
        max_abs_diff=float(np.max(np.abs(exact - mine))),
        derivative_rel_diff=_rel_diff(d_exact, d_moment),
        backaction_rel_diff=_rel_diff(b_exact, b_moment) if np.any(b_exact) else 0.0,
        photocurrent_max_diff=current_diff,
        top_fock_population=top,
        oracle_moments=exact,
        moment_moments=mine,
    )


def conditional_ensemble(
    params: PhysicalParams,
    flags: DriveFlags,
    system: TruncatedSystem,
    dt: float,
    n_steps: int,
    rngs,
) -> np.ndarray:
    """Final conditional density matrices, one realisation per generator.

    All realisations are advanced together; realisation k draws its
    ``n_steps`` increments from ``rngs[k]`` and follows the same update as
    :func:`sme_step`.  Returns an array of shape (len(rngs), dim, dim).
    """
    if dt <= 0:
        raise ParameterError("dt must be > 0")
    rngs = list(rngs)
    if not rngs:
        raise ValueError("need at least one generator")
    gen = SMEGenerator(params, flags, system.n_atoms, system.fock_cutoff)
    dws = np.stack([rng.normal(0.0, np.sqrt(dt), n_steps) for rng in rngs])
    rho = np.repeat(system.rho[None, :, :], len(rngs), axis=0)
    a = gen.a
    ad = a.conj().T
    heff = gen.H - 0.5j * gen.jdj  # rho' = -i(heff rho - rho heff^dag) + sum L rho L^dag
    for k in range(n_steps):
        d = -1j * (heff @ rho - rho @ heff.conj().T)
        for L in gen.jumps:
            d += L @ rho @ L.conj().T
        new = rho + d * dt
        if gen.meas != 0.0:
            mean = np.einsum("ij,kji->k", a, rho).real
            b = a @ rho + rho @ ad - 2.0 * mean[:, None, None] * rho
            new += gen.meas * b * dws[:, k, None, None]
        new = 0.5 * (new + np.conj(np.swapaxes(new, 1, 2)))
        tr = np.einsum("kii->k", new).real
        if not np.all(np.isfinite(tr)) or np.any(tr <= 1e-12):
            raise OracleError("trace collapse in oracle step")
        rho = new / tr[:, None, None]
    return rho


def average_conditional(
    params: PhysicalParams,
    flags: DriveFlags,
    system: TruncatedSystem,
    dt: float,
    n_steps: int,
    rngs,
) -> np.ndarray:
    """Mean of the conditional density matrix over one realisation per generator."""
    return conditional_ensemble(params, flags, system, dt, n_steps, rngs).mean(axis=0)


def unconditional_solution(
    params: PhysicalParams, flags: DriveFlags, system: TruncatedSystem, dt: float, n_steps: int
) -> np.ndarray:
    """Deterministic master-equation solution (detection switched off)."""
    quiet = DriveFlags(flags.probe_on, flags.microwave_on, False)
    gen = SMEGenerator(params, quiet, system.n_atoms, system.fock_cutoff)
    sys = system
    for _ in range(n_steps):
        sys = sme_step(sys, params, quiet, dt, 0.0, gen)
    return sys.rho


__all__ = [
    "ComparisonResult",
    "OracleError",
    "average_conditional",
    "conditional_ensemble",
    "shared_noise_comparison",
    "unconditional_solution",
    "SMEGenerator",
    "TruncatedSystem",
    "extract_moments",
    "moment_derivatives",
    "photocurrent",
    "product_system",
    "sme_step",
]
