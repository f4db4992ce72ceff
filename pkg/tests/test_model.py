import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condsqueeze.model import (
    FRAME,
    N_SLOTS,
    SLOT_INDEX,
    SLOTS,
    MomentLookupError,
    MomentState,
    ParameterError,
    PhysicalParams,
    catalog,
    coherent_atom_state,
    conjugate_closure,
    default_params,
    init_all_down,
    init_spin_coherent,
    params_from_hz,
    params_to_hz,
    product_state_moments,
)

TWO_PI = 2 * math.pi


def adjoint_symbol(symbol: str) -> str:
    """Adjoint of a moment symbol (field factors reversed, atoms of distinct particles kept in place)."""
    out_field, out_atom = [], []
    for f in symbol.split("*"):
        if f == "a":
            out_field.append("adag")
        elif f == "adag":
            out_field.append("a")
        else:
            out_atom.append(f"s{f[2]}{f[1]}")
    return "*".join(list(reversed(out_field)) + out_atom)


def random_moment_state(rng) -> MomentState:
    v = rng.normal(size=N_SLOTS) + 1j * rng.normal(size=N_SLOTS)
    for name in ("s22", "s33", "adag*a", "s12*s21", "s31*s13", "s32*s23",
                 "s22*s22", "s33*s33", "s22*s33"):
        v[SLOT_INDEX[name]] = v[SLOT_INDEX[name]].real
    v[SLOT_INDEX["a*s32"]] = np.conj(v[SLOT_INDEX["adag*s23"]])
    return MomentState(v)


# -- parameters ----------------------------------------------------------------

def test_default_params_reproduce_table_values():
    p = default_params()
    assert p.n_atoms == 10_000
    assert p.kappa == p.kappa_1 + p.kappa_2
    assert p.kappa == pytest.approx(TWO_PI * 11.1e6, rel=1e-15)
    assert p.g == TWO_PI * 0.253e6
    assert p.gamma == TWO_PI * 5.75e6
    assert p.chi == TWO_PI * 10e3
    assert p.omega_prob_amp == TWO_PI * 1e4
    assert p.omega_mw_amp == TWO_PI * 1e6
    assert p.eta == 0.12
    assert p.omega_21 == TWO_PI * 6.8e9
    assert p.omega_p - p.omega_32 == pytest.approx(math.sqrt(5000) * TWO_PI * 0.253e6, abs=1.0)
    assert p.omega_m == p.omega_21


def test_collective_coupling_value(params):
    assert params.collective_coupling == math.sqrt(5000) * TWO_PI * 0.253e6
    assert params.collective_coupling / TWO_PI == pytest.approx(17.8898e6, rel=1e-5)


@pytest.mark.parametrize(
    "changes, name",
    [({"eta": 1.5}, "eta"), ({"eta": -0.1}, "eta"), ({"n_atoms": 0}, "n_atoms"),
     ({"gamma": -1.0}, "gamma"), ({"kappa_1": 0.0}, "kappa_1"), ({"g": math.nan}, "g")],
)
def test_invalid_parameters_name_the_field(params, changes, name):
    with pytest.raises(ParameterError, match=name):
        params.updated(**changes)


def test_updated_moves_probe_with_atom_number(params):
    q = params.updated(n_atoms=40_000)
    # omega_p ~ 2.4e15 rad/s, so differences resolve to ~0.5 rad/s
    assert q.omega_p - q.omega_c == pytest.approx(q.collective_coupling, abs=1.0)
    shifted = params.with_probe_offset(params.collective_coupling + 1e6).updated(n_atoms=40_000)
    assert shifted.omega_p - shifted.omega_c == pytest.approx(q.collective_coupling + 1e6, abs=1.0)


def test_updated_kappa_splits_evenly(params):
    q = params.updated(kappa=2.0e7)
    assert q.kappa_1 == q.kappa_2 == 1.0e7


def test_hz_conversion_round_trip(params):
    again = params_from_hz(params_to_hz(params))
    for name in ("n_atoms", "g", "kappa_1", "kappa_2", "gamma", "chi", "omega_prob_amp",
                 "omega_mw_amp", "eta"):
        assert getattr(again, name) == pytest.approx(getattr(params, name), rel=1e-14)
    assert again.omega_p == pytest.approx(params.omega_p, rel=1e-14)


def test_hz_conversion_empty_and_override():
    assert params_from_hz({}) == default_params()
    p = params_from_hz({"n_atoms": 100000})
    assert p.n_atoms == 100000
    assert p.g == default_params().g
    with pytest.raises(ParameterError, match="unknown"):
        params_from_hz({"g": 1.0})
    with pytest.raises(ParameterError, match="n_atoms"):
        params_from_hz({"n_atoms": 2.5})


# -- moment layout and initial states -------------------------------------------

def test_slot_layout():
    assert len(SLOTS) == N_SLOTS == len(set(SLOTS))
    state = init_spin_coherent(default_params())
    assert state.first_order.shape == (6,)
    assert state.photonic_second.shape == (2,)
    assert state.atom_photon.shape == (9,)
    assert state.atom_atom.shape == (21,)
    with pytest.raises(ValueError):
        state.values[0] = 1.0
    with pytest.raises(ValueError):
        MomentState(np.zeros(3))


def test_plus_y_coherent_state(params):
    s = init_spin_coherent(params)
    assert s["s12"] == pytest.approx(-0.5j, abs=1e-15)
    assert s["s22"] == pytest.approx(0.5)
    assert s["a"] == 0 and s["s33"] == 0
    assert s["s12*s12"] == pytest.approx(-0.25, abs=1e-15)
    assert s["s12*s21"] == pytest.approx(0.25)
    assert s["s22*s22"] == pytest.approx(0.25)
    assert s["s23*s23"] == 0


def test_all_down_state(params):
    s = init_all_down(params)
    assert s["s22"] == 0 and s["s12"] == 0 and s["s22*s22"] == 0
    assert s["s11"] == 1


def test_conjugation_examples():
    s = MomentState.from_mapping({"a": 1 + 2j, "s12": -0.5j, "s12*s12": -0.25})
    assert s["s21"] == pytest.approx(0.5j)
    assert s["adag"] == pytest.approx(1 - 2j)
    assert s["s21*s21"] == pytest.approx(-0.25)


def test_unknown_moment_names_the_symbol():
    s = init_spin_coherent(default_params())
    with pytest.raises(MomentLookupError, match="s44"):
        s["s44"]
    with pytest.raises(MomentLookupError, match="beyond second order"):
        s["a*s12*s23"]


def test_identity_expansion_of_s11():
    rng = np.random.default_rng(1)
    s = random_moment_state(rng)
    assert s["s11"] == pytest.approx(1 - s["s22"] - s["s33"])
    assert s["s11*s11"] == pytest.approx(
        1 - 2 * s["s22"] - 2 * s["s33"] + s["s22*s22"] + 2 * s["s22*s33"] + s["s33*s33"])
    assert s["a*adag"] == pytest.approx(s["adag*a"] + 1)


def test_conjugation_is_an_involution_over_catalog():
    rng = np.random.default_rng(2)
    for _ in range(5):
        s = random_moment_state(rng)
        for name in catalog():
            assert conjugate_closure(s, adjoint_symbol(name)) == pytest.approx(
                np.conj(conjugate_closure(s, name)), abs=1e-14), name


@settings(max_examples=60, deadline=None)
@given(
    theta=st.floats(0, math.pi), phi=st.floats(-math.pi, math.pi),
    excite=st.floats(0, 0.3), re=st.floats(-2, 2), im=st.floats(-2, 2),
)
def test_catalog_matches_product_state_expectations(theta, phi, excite, re, im):
    psi = np.array([math.sin(theta / 2), math.cos(theta / 2) * np.exp(1j * phi), excite])
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    alpha = complex(re, im)
    state = product_state_moments(alpha, rho)

    def single(op):
        if op == "a":
            return alpha
        if op == "adag":
            return alpha.conjugate()
        return rho[int(op[2]) - 1, int(op[1]) - 1]

    for name in catalog():
        expected = np.prod([single(f) for f in name.split("*")])
        assert state[name] == pytest.approx(expected, abs=1e-12), name


def test_frame_weights_are_additive():
    for name in SLOTS:
        total = np.zeros(2, dtype=int)
        for f in name.split("*"):
            total += FRAME.weight(f)
        assert tuple(total) == FRAME.weight(name), name
    assert FRAME.weight("a") == (1, 0)
    assert FRAME.weight("s32") == (-1, 0)
    assert FRAME.weight("s13") == (1, 1)
    assert FRAME.weight("adag*s23") == (0, 0)


def test_coherent_atom_state_points_along_azimuth():
    rho = coherent_atom_state(0.0)
    assert rho[1, 0] == pytest.approx(0.5)  # <s12> = rho_21
    assert np.trace(rho) == pytest.approx(1.0)


def test_params_are_immutable(params):
    with pytest.raises(Exception):
        params.eta = 0.5
    assert isinstance(params, PhysicalParams)
