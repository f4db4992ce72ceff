import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from condsqueeze.dynamics import (
    DARK,
    MICROWAVE,
    PROBE,
    DriveFlags,
    IntegrationError,
    diffusion,
    drift,
    third_order_closure,
)
from condsqueeze.model import (
    FRAME,
    SELF_ADJOINT,
    SLOT_INDEX,
    MomentState,
    init_spin_coherent,
    product_state_moments,
)
from condsqueeze.oracle import (
    SMEGenerator,
    extract_moments,
    moment_derivatives,
    product_system,
)

from conftest import random_atom_state, random_symmetric_system, weak_drive

TWO_PI = 2 * math.pi
ALL_FLAGS = [PROBE, MICROWAVE, DARK, DriveFlags(True, True, True)]


def test_third_order_closure_is_exact_for_products():
    o, p, q = 0.3 + 0.1j, -0.2j, 0.7
    assert third_order_closure(o, p, q, o * p, o * q, p * q) == pytest.approx(o * p * q)


@pytest.mark.parametrize("flags", ALL_FLAGS)
@pytest.mark.parametrize("n_atoms", [2, 3])
def test_drift_matches_oracle_at_factorized_states(flags, n_atoms):
    """Third cumulants vanish for product states, so the closure is exact there."""
    rng = np.random.default_rng(10 + n_atoms)
    params = weak_drive(n_atoms, eta=0.7)
    system = product_system(n_atoms, 4, 0.01 + 0.004j, random_atom_state(rng))
    exact_d, exact_b = moment_derivatives(system, params, flags)
    state = extract_moments(system)
    d = drift(state, params, flags).values
    b = diffusion(state, params, flags).values
    scale = np.max(np.abs(exact_d))
    assert np.max(np.abs(d - exact_d)) <= 1e-8 * scale
    if flags.measurement_on:
        # both vanish up to the Fock truncation of the coherent field
        assert np.max(np.abs(b - exact_b)) <= 1e-8 * math.sqrt(params.eta * params.kappa_2)


def test_diffusion_vanishes_for_factorized_states(params):
    state = product_state_moments(0.3 - 0.2j, random_atom_state(np.random.default_rng(4)))
    assert np.max(np.abs(diffusion(state, params, PROBE).values)) < 1e-12


def test_diffusion_gated_by_eta_and_measurement(params):
    rng = np.random.default_rng(5)
    state = extract_moments(random_symmetric_system(2, 3, rng))
    assert not np.any(diffusion(state, params.updated(eta=0.0), PROBE).values)
    assert not np.any(diffusion(state, params, MICROWAVE).values)
    assert np.any(diffusion(state, params, PROBE).values)


def test_field_variance_drives_amplitude_diffusion(params):
    v = 0.37
    state = MomentState.from_mapping({"adag*a": v})
    b = diffusion(state, params, PROBE)
    assert b["a"] == pytest.approx(math.sqrt(params.eta * params.kappa / 2) * v, rel=1e-14)


def test_self_adjoint_moments_stay_real():
    rng = np.random.default_rng(6)
    params = weak_drive(2, scale=1.0, eta=0.5)
    for _ in range(10):
        state = extract_moments(random_symmetric_system(2, 3, rng))
        for flags in ALL_FLAGS:
            d = drift(state, params, flags)
            b = diffusion(state, params, flags)
            for name in SELF_ADJOINT:
                k = SLOT_INDEX[name]
                assert abs(d.values[k].imag) <= 1e-12 * max(np.max(np.abs(d.values)), 1.0), name
                assert abs(b.values[k].imag) <= 1e-12 * max(np.max(np.abs(b.values)), 1.0), name


def test_excitation_balance():
    """Without drives, a^dag a + N s33 decays only through kappa and gamma."""
    rng = np.random.default_rng(7)
    params = weak_drive(2, scale=1.0)
    for _ in range(5):
        state = extract_moments(random_symmetric_system(2, 3, rng))
        d = drift(state, params, DARK)
        n = params.n_atoms
        excitation = d["adag*a"] + n * d["s33"]
        expected = -params.kappa * state["adag*a"] - n * params.gamma * state["s33"]
        assert excitation == pytest.approx(expected, rel=1e-10, abs=1e-6)


def test_coherent_state_is_a_drift_fixed_point_without_drives():
    p = weak_drive(10_000).updated(omega_prob_amp=0.0, chi=0.0, gamma=0.0)
    d = drift(init_spin_coherent(p), p, DARK)
    assert np.max(np.abs(d.values)) == 0.0


def test_non_finite_state_rejected(params):
    bad = init_spin_coherent(params).copy_with(a=complex("nan"))
    with pytest.raises(IntegrationError):
        drift(bad, params, PROBE)


# -- frame correctness -----------------------------------------------------------

def _lab_generator(params, n_atoms, cutoff):
    """Lab-frame Hamiltonian pieces and jump operators on the oracle space."""
    rot = SMEGenerator(params, DriveFlags(True, True, False), n_atoms, cutoff)
    ops = rot.ops
    a = ops.a
    ad = a.conj().T
    h0 = params.omega_c * (ad @ a)
    m_plus = np.zeros_like(h0)
    for k in range(n_atoms):
        s23 = ops.sigma(k, 2, 3)
        h0 = h0 + params.omega_21 * ops.sigma(k, 2, 2)
        h0 = h0 + (params.omega_21 + params.omega_32) * ops.sigma(k, 3, 3)
        h0 = h0 + params.g * (ad @ s23 + s23.conj().T @ a)
        m_plus = m_plus + ops.sigma(k, 1, 2)
    f = params.probe_rate
    w = params.omega_mw_amp

    def hamiltonian(t):
        drive = f * (np.exp(1j * params.omega_p * t) * a + np.exp(-1j * params.omega_p * t) * ad)
        mw = w * (np.exp(1j * params.omega_m * t) * m_plus
                  + np.exp(-1j * params.omega_m * t) * m_plus.conj().T)
        return h0 + drive + mw

    return rot, hamiltonian


def _lindblad_rhs(hamiltonian, jumps, jdj, dim):
    def rhs(t, y):
        rho = y.reshape(dim, dim)
        h = hamiltonian(t)
        out = -1j * (h @ rho - rho @ h)
        for L in jumps:
            out += L @ rho @ L.conj().T
        out -= 0.5 * (jdj @ rho + rho @ jdj)
        return out.ravel()
    return rhs


def test_rotating_frame_matches_lab_frame_over_one_microsecond():
    base = weak_drive(2)
    params = base.updated(
        omega_c=TWO_PI * 12.2e6, omega_32=TWO_PI * 12.2e6, omega_21=TWO_PI * 9.1e6,
        omega_p=TWO_PI * 10.3e6, omega_m=TWO_PI * 8.7e6,
    )
    cutoff = 3
    rng = np.random.default_rng(8)
    system = random_symmetric_system(2, cutoff, rng, photon_decay=0.05)
    rot, lab_h = _lab_generator(params, 2, cutoff)
    dim = system.dimension
    T = 1e-6
    opts = dict(method="DOP853", rtol=1e-10, atol=1e-13)
    lab = solve_ivp(_lindblad_rhs(lab_h, rot.jumps, rot.jdj, dim), (0, T),
                    system.rho.ravel(), **opts)
    rotating = solve_ivp(_lindblad_rhs(lambda t: rot.H, rot.jumps, rot.jdj, dim), (0, T),
                         system.rho.ravel(), **opts)
    m_lab = extract_moments(type(system)(2, cutoff, lab.y[:, -1].reshape(dim, dim))).values
    m_rot = extract_moments(type(system)(2, cutoff, rotating.y[:, -1].reshape(dim, dim))).values
    mapped = m_lab * FRAME.slot_phases(T, params.omega_p, params.omega_m)
    assert np.max(np.abs(mapped - m_rot)) <= 1e-4 * np.max(np.abs(m_rot))
    # the raw lab values rotate, so without the map they disagree
    assert np.max(np.abs(m_lab - m_rot)) > 1e-2 * np.max(np.abs(m_rot))


def test_moment_drift_equals_frame_mapped_lab_derivative():
    """d/dt(<X>_lab e^{i w t}) at t = 0 equals the rotating-frame drift."""
    base = weak_drive(2)
    params = base.updated(omega_c=TWO_PI * 12e6, omega_32=TWO_PI * 12e6,
                          omega_21=TWO_PI * 9e6, omega_p=TWO_PI * 10e6, omega_m=TWO_PI * 8e6)
    system = product_system(2, 4, 0.01j, random_atom_state(np.random.default_rng(9)))
    rot, lab_h = _lab_generator(params, 2, 4)
    dim = system.dimension
    rhs = _lindblad_rhs(lab_h, rot.jumps, rot.jdj, dim)
    d_lab = extract_moments(type(system)(2, 4, rhs(0.0, system.rho.ravel()).reshape(dim, dim)))
    m = extract_moments(system).values
    freq = np.array([1j * (wp * params.omega_p + wm * params.omega_m)
                     for wp, wm in (FRAME.weight(s) for s in FRAME_SLOTS)])
    mapped = d_lab.values + freq * m
    d = drift(extract_moments(system), params, DriveFlags(True, True, False)).values
    assert np.max(np.abs(mapped - d)) <= 1e-8 * np.max(np.abs(d))


FRAME_SLOTS = tuple(SLOT_INDEX)
