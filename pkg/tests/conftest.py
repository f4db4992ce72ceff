"""Shared fixtures and random-state helpers."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from condsqueeze.model import PhysicalParams, default_params
from condsqueeze.oracle import TruncatedSystem


@pytest.fixture
def params() -> PhysicalParams:
    return default_params()


@pytest.fixture
def ideal() -> PhysicalParams:
    return default_params().updated(gamma=0.0, chi=0.0)


def weak_drive(n_atoms: int = 2, scale: float = 1e-3, **changes) -> PhysicalParams:
    """Small-system parameters with the probe weakened so the Fock cutoff holds."""
    p = default_params().updated(n_atoms=n_atoms)
    return p.updated(omega_prob_amp=p.omega_prob_amp * scale, **changes)


def random_atom_state(rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def _atom_permutation(n_atoms: int, fock_cutoff: int, perm) -> np.ndarray:
    """Unitary that permutes the atom factors of the field x atoms space."""
    dim = fock_cutoff * 3 ** n_atoms
    P = np.zeros((dim, dim))
    for f in range(fock_cutoff):
        for levels in itertools.product(range(3), repeat=n_atoms):
            src = np.ravel_multi_index((f, *levels), (fock_cutoff,) + (3,) * n_atoms)
            moved = tuple(levels[perm[i]] for i in range(n_atoms))
            dst = np.ravel_multi_index((f, *moved), (fock_cutoff,) + (3,) * n_atoms)
            P[dst, src] = 1.0
    return P


def random_symmetric_system(
    n_atoms: int, fock_cutoff: int, rng: np.random.Generator, rank: int = 3,
    photon_decay: float = 0.3,
) -> TruncatedSystem:
    """Correlated, exchange-symmetric mixed state with little weight in high Fock levels."""
    dim = fock_cutoff * 3 ** n_atoms
    weights = np.repeat(photon_decay ** np.arange(fock_cutoff), 3 ** n_atoms)
    vecs = (rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))) * weights[:, None]
    rho = vecs @ vecs.conj().T
    perms = list(itertools.permutations(range(n_atoms)))
    sym = sum(P @ rho @ P.T for P in (_atom_permutation(n_atoms, fock_cutoff, q) for q in perms))
    sym /= np.trace(sym).real
    return TruncatedSystem(n_atoms, fock_cutoff, sym)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance-criteria lines collected during the session."""
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
