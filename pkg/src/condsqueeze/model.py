"""Physical parameters, moment-vector layout and initial states.

All frequencies are stored as angular rates (rad/s).  The moment vector holds
expectation values in the frame rotating with the probe laser (optical
operators) and the microwave (hyperfine coherence), see :class:`FrameConvention`.

Atomic levels are labelled 1, 2, 3 (lower hyperfine, upper hyperfine, excited)
and ``s{lm}`` is the transition operator ``|l><m|`` of a single atom.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Mapping, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


class ParameterError(ValueError):
    """Invalid physical or numerical parameter."""


class MomentLookupError(KeyError):
    """Moment symbol is neither stored nor reachable by conjugation."""


@dataclass(frozen=True)
class PhysicalParams:
    """System parameters, angular units (rad/s).

    ``omega_prob_amp`` is the probe strength in sqrt(rad/s); the drive rate
    entering the Hamiltonian is ``omega_prob_amp * sqrt(kappa_1)``.
    """

    n_atoms: int = 10_000
    omega_c: float = TWO_PI * 377e12
    omega_32: float = TWO_PI * 377e12
    omega_21: float = TWO_PI * 6.8e9
    kappa_1: float = TWO_PI * 11.1e6 / 2
    kappa_2: float = TWO_PI * 11.1e6 / 2
    g: float = TWO_PI * 0.253e6
    gamma: float = TWO_PI * 5.75e6
    chi: float = TWO_PI * 10e3
    omega_p: float | None = None
    omega_prob_amp: float = TWO_PI * 1e4
    omega_m: float | None = None
    omega_mw_amp: float = TWO_PI * 1e6
    eta: float = 0.12

    def __post_init__(self) -> None:
        if self.omega_p is None:
            object.__setattr__(
                self, "omega_p", self.omega_c + math.sqrt(self.n_atoms / 2) * self.g
            )
        if self.omega_m is None:
            object.__setattr__(self, "omega_m", self.omega_21)
        self.validate()

    @property
    def kappa(self) -> float:
        return self.kappa_1 + self.kappa_2

    @property
    def delta_c(self) -> float:
        """Cavity detuning from the probe, omega_c - omega_p."""
        return self.omega_c - self.omega_p

    @property
    def delta_32(self) -> float:
        return self.omega_32 - self.omega_p

    @property
    def delta_21(self) -> float:
        return self.omega_21 - self.omega_m

    @property
    def probe_rate(self) -> float:
        """Coherent drive rate of the cavity field, Omega_p sqrt(kappa_1)."""
        return self.omega_prob_amp * math.sqrt(self.kappa_1)

    @property
    def collective_coupling(self) -> float:
        """sqrt(N/2) g, half-splitting of the dressed states."""
        return math.sqrt(self.n_atoms / 2) * self.g

    def validate(self) -> None:
        if not isinstance(self.n_atoms, (int, np.integer)) or self.n_atoms < 1:
            raise ParameterError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        for name in ("kappa_1", "kappa_2"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        for name in ("g", "gamma", "chi", "omega_prob_amp", "omega_mw_amp"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("omega_c", "omega_32", "omega_21", "omega_p", "omega_m"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must lie in [0, 1], got {self.eta!r}")

    def with_probe_offset(self, offset: float) -> "PhysicalParams":
        """Copy with omega_p = omega_32 + offset (offset in rad/s)."""
        return replace(self, omega_p=self.omega_32 + offset)

    def updated(self, **changes) -> "PhysicalParams":
        """Copy with fields replaced.

        Changing ``n_atoms`` or ``g`` without an explicit ``omega_p`` moves the
        probe to the new upper dressed state, matching the default rule.
        """
        if ("n_atoms" in changes or "g" in changes) and "omega_p" not in changes:
            offset = self.omega_p - (self.omega_c + self.collective_coupling)
            n = changes.get("n_atoms", self.n_atoms)
            g = changes.get("g", self.g)
            changes["omega_p"] = self.omega_c + math.sqrt(n / 2) * g + offset
        if "kappa" in changes:
            kappa = changes.pop("kappa")
            changes.setdefault("kappa_1", kappa / 2)
            changes.setdefault("kappa_2", kappa / 2)
        return replace(self, **changes)


def default_params() -> PhysicalParams:
    """Reference parameter set (87Rb ensemble in a high-finesse cavity)."""
    return PhysicalParams()


# Hz-valued configuration keys -> (field, scale to angular units)
HZ_KEYS: Dict[str, Tuple[str, float]] = {
    "g_hz": ("g", TWO_PI),
    "kappa_hz": ("kappa", TWO_PI),
    "kappa1_hz": ("kappa_1", TWO_PI),
    "kappa2_hz": ("kappa_2", TWO_PI),
    "gamma_hz": ("gamma", TWO_PI),
    "chi_hz": ("chi", TWO_PI),
    "omega_c_hz": ("omega_c", TWO_PI),
    "omega32_hz": ("omega_32", TWO_PI),
    "omega21_hz": ("omega_21", TWO_PI),
    "omega_m_offset_hz": ("omega_m_offset", TWO_PI),
    "omega_p_offset_hz": ("omega_p_offset", TWO_PI),
    "omega_prob_amp_sqrthz": ("omega_prob_amp", TWO_PI),
    "omega_mw_amp_hz": ("omega_mw_amp", TWO_PI),
    "n_atoms": ("n_atoms", 1),
    "eta": ("eta", 1),
}


def params_from_hz(values: Mapping[str, float]) -> PhysicalParams:
    """Build parameters from ordinary frequencies in Hz.

    ``omega_p_offset_hz`` is measured from omega_32 + sqrt(N/2) g (the upper
    dressed state); ``omega_m_offset_hz`` from omega_21.  Missing keys keep
    their default values.
    """
    base = default_params()
    kw: Dict[str, float] = {}
    p_offset = 0.0
    m_offset = 0.0
    for key, raw in values.items():
        if key not in HZ_KEYS:
            raise ParameterError(f"unknown parameter key {key!r}")
        name, scale = HZ_KEYS[key]
        if name == "n_atoms":
            if float(raw) != int(raw) or int(raw) < 1:
                raise ParameterError(f"n_atoms must be a positive integer, got {raw!r}")
            kw[name] = int(raw)
        elif name == "omega_p_offset":
            p_offset = scale * float(raw)
        elif name == "omega_m_offset":
            m_offset = scale * float(raw)
        else:
            kw[name] = scale * float(raw)
    if "kappa" in kw:
        kappa = kw.pop("kappa")
        kw.setdefault("kappa_1", kappa / 2)
        kw.setdefault("kappa_2", kappa / 2)
    n = kw.get("n_atoms", base.n_atoms)
    g = kw.get("g", base.g)
    omega_32 = kw.get("omega_32", base.omega_32)
    omega_21 = kw.get("omega_21", base.omega_21)
    kw["omega_p"] = omega_32 + math.sqrt(n / 2) * g + p_offset
    kw["omega_m"] = omega_21 + m_offset
    try:
        return replace(base, **kw)
    except ParameterError as exc:
        raise ParameterError(str(exc)) from None


def params_to_hz(params: PhysicalParams) -> Dict[str, float]:
    """Inverse of :func:`params_from_hz` (used for run manifests)."""
    return {
        "n_atoms": params.n_atoms,
        "g_hz": params.g / TWO_PI,
        "kappa1_hz": params.kappa_1 / TWO_PI,
        "kappa2_hz": params.kappa_2 / TWO_PI,
        "gamma_hz": params.gamma / TWO_PI,
        "chi_hz": params.chi / TWO_PI,
        "omega_c_hz": params.omega_c / TWO_PI,
        "omega32_hz": params.omega_32 / TWO_PI,
        "omega21_hz": params.omega_21 / TWO_PI,
        "omega_p_offset_hz": (params.omega_p - params.omega_32 - params.collective_coupling)
        / TWO_PI,
        "omega_m_offset_hz": (params.omega_m - params.omega_21) / TWO_PI,
        "omega_prob_amp_sqrthz": params.omega_prob_amp / TWO_PI,
        "omega_mw_amp_hz": params.omega_mw_amp / TWO_PI,
        "eta": params.eta,
    }


# ---------------------------------------------------------------------------
# moment layout

FIRST_ORDER = ("a", "s12", "s13", "s23", "s22", "s33")
PHOTONIC = ("adag*a", "a*a")
ATOM_PHOTON = (
    "adag*s12", "adag*s13", "adag*s23", "adag*s22", "adag*s33",
    "a*s12", "a*s13", "a*s23", "a*s32",
)
ATOM_ATOM = (
    "s12*s12", "s22*s22", "s23*s23", "s33*s33", "s13*s13", "s12*s21",
    "s12*s13", "s21*s13", "s32*s23", "s32*s13", "s12*s32", "s12*s23",
    "s31*s13", "s23*s13", "s22*s13", "s33*s13", "s33*s32", "s22*s33",
    "s22*s23", "s22*s12", "s33*s12",
)
SLOTS: Tuple[str, ...] = FIRST_ORDER + PHOTONIC + ATOM_PHOTON + ATOM_ATOM
N_SLOTS = len(SLOTS)
SLOT_INDEX: Dict[str, int] = {name: i for i, name in enumerate(SLOTS)}

# a*s32 mirrors adag*s23 and is never evolved on its own
DERIVED_SLOT = SLOT_INDEX["a*s32"]
PAIR_START = SLOT_INDEX["s12*s12"]

SELF_ADJOINT = (
    "s22", "s33", "adag*a", "s12*s21", "s31*s13", "s32*s23",
    "s22*s22", "s33*s33", "s22*s33",
)
SELF_ADJOINT_SLOTS = np.array([SLOT_INDEX[s] for s in SELF_ADJOINT], dtype=np.int64)

_ATOM_OP = re.compile(r"^s([123])([123])$")
_FIELD_OPS = ("a", "adag")


def _parse(symbol: str) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    factors = [f.strip() for f in symbol.replace("†", "dag").split("*") if f.strip()]
    if not factors:
        raise MomentLookupError(f"empty moment symbol {symbol!r}")
    field_ops = []
    atom_ops = []
    for f in factors:
        if f in _FIELD_OPS:
            if atom_ops:
                # atom and field operators commute; keep field factors in front
                pass
            field_ops.append(f)
        elif _ATOM_OP.match(f):
            atom_ops.append(f)
        else:
            raise MomentLookupError(f"unknown operator {f!r} in moment {symbol!r}")
    if len(atom_ops) > 2 or len(field_ops) + len(atom_ops) > 2:
        raise MomentLookupError(f"moment {symbol!r} is beyond second order")
    return tuple(field_ops), tuple(atom_ops)


def _adjoint_op(op: str) -> str:
    if op == "a":
        return "adag"
    if op == "adag":
        return "a"
    m = _ATOM_OP.match(op)
    return f"s{m.group(2)}{m.group(1)}"


def _canonical(field_ops: Tuple[str, ...], atom_ops: Tuple[str, ...]) -> str:
    if field_ops == ("a", "adag"):
        # reordering would add a commutator; keep only normal-ordered forms
        raise MomentLookupError("anti-normal-ordered a*adag is not a stored moment form")
    return "*".join(field_ops + atom_ops)


def _exchange_variants(field_ops, atom_ops):
    yield field_ops, atom_ops
    if len(atom_ops) == 2:
        yield field_ops, (atom_ops[1], atom_ops[0])


def _resolve(symbol: str) -> Tuple[int, bool]:
    """Map a symbol to (slot, conjugate?) without identity expansion."""
    field_ops, atom_ops = _parse(symbol)
    for f, a in _exchange_variants(field_ops, atom_ops):
        name = "*".join(f + a)
        if name in SLOT_INDEX and name != "a*s32":
            return SLOT_INDEX[name], False
    adj_field = tuple(_adjoint_op(op) for op in reversed(field_ops))
    adj_atom = tuple(_adjoint_op(op) for op in atom_ops)
    for f, a in _exchange_variants(adj_field, adj_atom):
        name = "*".join(f + a)
        if name in SLOT_INDEX and name != "a*s32":
            return SLOT_INDEX[name], True
    raise MomentLookupError(f"moment {symbol!r} is not stored and has no stored conjugate")


def catalog() -> Tuple[str, ...]:
    """Every retrievable moment symbol up to second order (s11 excluded)."""
    atom = [f"s{l}{m}" for l in "123" for m in "123" if (l, m) != ("1", "1")]
    names = ["a", "adag", "adag*a", "a*a", "adag*adag"]
    names += atom
    names += [f"{f}*{s}" for f in _FIELD_OPS for s in atom]
    names += [f"{x}*{y}" for i, x in enumerate(atom) for y in atom[i:]]
    return tuple(names)


# ---------------------------------------------------------------------------
# frame convention


@dataclass(frozen=True)
class FrameConvention:
    """Phase weights (n_p, n_m) of each elementary operator.

    The stored slowly varying value of an operator X is
    ``<X>_lab * exp(i (n_p omega_p + n_m omega_m) t)``.
    """

    phase_weights: Mapping[str, Tuple[int, int]] = field(
        default_factory=lambda: {
            "a": (1, 0),
            "s12": (0, 1),
            "s23": (1, 0),
            "s13": (1, 1),
            "s11": (0, 0),
            "s22": (0, 0),
            "s33": (0, 0),
        }
    )

    def weight(self, symbol: str) -> Tuple[int, int]:
        field_ops, atom_ops = _parse(symbol)
        total_p = total_m = 0
        for op in field_ops + atom_ops:
            if op in self.phase_weights:
                wp, wm = self.phase_weights[op]
            else:
                wp, wm = self.phase_weights[_adjoint_op(op)]
                wp, wm = -wp, -wm
            total_p += wp
            total_m += wm
        return total_p, total_m

    def phase(self, symbol: str, t: float, omega_p: float, omega_m: float) -> complex:
        """Factor mapping a lab-frame value to the rotating frame at time t."""
        wp, wm = self.weight(symbol)
        return complex(np.exp(1j * (wp * omega_p + wm * omega_m) * t))

    def slot_phases(self, t: float, omega_p: float, omega_m: float) -> np.ndarray:
        return np.array([self.phase(s, t, omega_p, omega_m) for s in SLOTS])


FRAME = FrameConvention()


# ---------------------------------------------------------------------------
# moment state


@dataclass(frozen=True)
class MomentState:
    """First- and second-order moments of one atom, one atom pair and the field.

    ``values`` is a complex vector ordered as :data:`SLOTS`.  Pair moments refer
    to two distinct atoms and are exchange-symmetric.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.values, dtype=np.complex128)
        if v.shape != (N_SLOTS,):
            raise ValueError(f"moment vector must have shape ({N_SLOTS},), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, symbol: str) -> complex:
        return conjugate_closure(self, symbol)

    @property
    def first_order(self) -> np.ndarray:
        return self.values[:6]

    @property
    def photonic_second(self) -> np.ndarray:
        return self.values[6:8]

    @property
    def atom_photon(self) -> np.ndarray:
        return self.values[8:17]

    @property
    def atom_atom(self) -> np.ndarray:
        return self.values[17:]

    def copy_with(self, **updates: complex) -> "MomentState":
        v = self.values.copy()
        for key, value in updates.items():
            v[SLOT_INDEX[key.replace("__", "*")]] = value
        return MomentState(_sync_derived(v))

    @classmethod
    def from_mapping(cls, values: Mapping[str, complex]) -> "MomentState":
        v = np.zeros(N_SLOTS, dtype=np.complex128)
        for key, value in values.items():
            v[SLOT_INDEX[key]] = value
        return cls(_sync_derived(v))

    def as_dict(self) -> Dict[str, complex]:
        return {name: complex(x) for name, x in zip(SLOTS, self.values)}


def _sync_derived(v: np.ndarray) -> np.ndarray:
    v[DERIVED_SLOT] = np.conj(v[SLOT_INDEX["adag*s23"]])
    return v


def conjugate_closure(state: MomentState, moment_id: str) -> complex:
    """Value of any moment up to second order.

    Stored moments are returned directly, the rest through complex
    conjugation, exchange symmetry of atom pairs, or ``s11 = 1 - s22 - s33``.
    """
    field_ops, atom_ops = _parse(moment_id)
    if "s11" in atom_ops:
        i = atom_ops.index("s11")
        rest = atom_ops[:i] + atom_ops[i + 1:]
        prefix = "*".join(field_ops + rest)
        base = _identity_value(state, prefix)
        terms = [
            "*".join(field_ops + rest[:i] + (lvl,) + rest[i:]) for lvl in ("s22", "s33")
        ]
        return base - sum(conjugate_closure(state, t) for t in terms)
    if field_ops == ("a", "adag"):
        # a a^dag = a^dag a + 1
        if atom_ops:
            return conjugate_closure(state, "*".join(("adag", "a") + atom_ops)) + \
                conjugate_closure(state, "*".join(atom_ops))
        return conjugate_closure(state, "adag*a") + 1.0
    slot, conj = _resolve(_canonical(field_ops, atom_ops))
    value = complex(state.values[slot])
    return value.conjugate() if conj else value


def _identity_value(state: MomentState, prefix: str) -> complex:
    return 1.0 + 0j if prefix == "" else conjugate_closure(state, prefix)


# ---------------------------------------------------------------------------
# initial states


def product_state_moments(field_amp: complex, rho_atom: np.ndarray) -> MomentState:
    """Moments of a coherent field times identical uncorrelated atoms.

    ``rho_atom`` is the single-atom density matrix in the basis |1>,|2>,|3>.
    """
    rho = np.asarray(rho_atom, dtype=np.complex128)

    def single(name: str) -> complex:
        m = _ATOM_OP.match(name)
        l, k = int(m.group(1)) - 1, int(m.group(2)) - 1
        return rho[k, l]

    v = np.zeros(N_SLOTS, dtype=np.complex128)
    alpha = complex(field_amp)
    for i, name in enumerate(SLOTS):
        field_ops, atom_ops = _parse(name)
        value = 1.0 + 0j
        for op in field_ops:
            value *= alpha if op == "a" else alpha.conjugate()
        for op in atom_ops:
            value *= single(op)
        v[i] = value
    return MomentState(v)


def coherent_atom_state(azimuth: float, polar: float = math.pi / 2) -> np.ndarray:
    """Single-atom density matrix of a spin pointing along (polar, azimuth).

    Follows J_x = N Re<s12>, J_y = -N Im<s12>, J_z = N(<s22> - 1/2), so the
    amplitudes are c1 = sin(polar/2), c2 = cos(polar/2) exp(-i azimuth).
    """
    c1 = math.sin(polar / 2)
    c2 = math.cos(polar / 2) * np.exp(-1j * azimuth)
    psi = np.array([c1, c2, 0.0], dtype=np.complex128)
    return np.outer(psi, psi.conj())


def init_spin_coherent(params: PhysicalParams, azimuth: float = math.pi / 2) -> MomentState:
    """Equatorial coherent spin state, cavity in vacuum.

    ``azimuth = pi/2`` points the collective spin along +y.
    """
    del params  # identical-atom moments do not depend on N
    return product_state_moments(0.0, coherent_atom_state(azimuth))


def init_all_down(params: PhysicalParams) -> MomentState:
    """All atoms in |1>, cavity in vacuum (J_z = -N/2)."""
    del params
    rho = np.zeros((3, 3), dtype=np.complex128)
    rho[0, 0] = 1.0
    return product_state_moments(0.0, rho)


__all__ = [
    "FRAME",
    "FrameConvention",
    "MomentLookupError",
    "MomentState",
    "N_SLOTS",
    "ParameterError",
    "PhysicalParams",
    "SELF_ADJOINT",
    "SLOTS",
    "SLOT_INDEX",
    "catalog",
    "coherent_atom_state",
    "conjugate_closure",
    "default_params",
    "init_all_down",
    "init_spin_coherent",
    "params_from_hz",
    "params_to_hz",
    "product_state_moments",
]
