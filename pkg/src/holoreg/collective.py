"""Scalable effective-mode register simulator.

Each stored qubit is a hard-core bosonic occupation of one phase-pattern
mode.  Momentum bookkeeping is exact: an occupation's pattern wave vector is
tracked as an integer coefficient vector over the register modes, so shifting
all qubits back by q_j and forward again is exact integer arithmetic, and
suppression factors for patterns away from the flat mode are evaluated from
the geometry only when needed.

Order of operations is disciplined: ``shift_back`` expects every stored
occupation in the long-lived f level, ``shift_forward`` expects them all in
the intermediate m level, and the cavity exchange only talks to the flat
(m, 0) pattern.  Violations raise :class:`SequencingError` because the
corresponding physical pulse would populate the electronically excited state
(the wrong-order failure mode the exact-basis oracle reproduces).

Transfer phase conventions: one storage shift multiplies a moved occupation
by -1 (adiabatic dark-state sign) and a resonant exchange pi pulse maps the
photon to -i times the flat pattern; ``store_qubit`` therefore deposits the
cavity amplitude with a residual +i which ``retrieve_qubit`` (built on the
phase-flipped drive, the inverse exchange rotation) removes exactly.  While a
qubit sits in storage its |1> amplitude carries that +i as a fixed frame
factor; :func:`logical_state` strips it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .phasegeom import EnsembleGeometry, ModeRegister, WaveVector, overlap
from .hilbert import SystemParams

LEVEL_F = "f"
LEVEL_M = "m"

STORE_PHASE = 1j          # residual frame factor on a freshly stored qubit
SHIFT_SIGN = -1.0         # adiabatic dark-state sign per storage shift
DEFAULT_LEAKAGE_BOUND = 1e-2


class SequencingError(RuntimeError):
    """Protocol discipline violated (wrong shift order or busy cavity)."""


class HardCoreViolation(RuntimeError):
    """Two excitations would occupy the same phase pattern."""


@dataclass(frozen=True)
class ModeOccupation:
    """One stored excitation: level f or m plus its current pattern offset.

    ``offset`` holds integer coefficients c with wave vector sum_i c_i q_i.
    A parked qubit of mode j is (level f, offset e_j); ``mode_index`` derives
    from that home position and is -1 for an in-flight excitation.
    """

    level: str
    offset: tuple

    def __post_init__(self):
        if self.level not in (LEVEL_F, LEVEL_M):
            raise ValueError("level must be 'f' or 'm'")
        object.__setattr__(self, "offset", tuple(int(c) for c in self.offset))

    @property
    def mode_index(self) -> int:
        if self.level == LEVEL_F and sum(abs(c) for c in self.offset) == 1:
            for i, c in enumerate(self.offset):
                if c == 1:
                    return i
        return -1

    def wave_vector(self, register: ModeRegister) -> WaveVector:
        total = np.zeros(3)
        for c, mode in zip(self.offset, register.modes):
            if c:
                total = total + c * mode.components
        return WaveVector(total)

    @property
    def is_flat(self) -> bool:
        return all(c == 0 for c in self.offset)


def _zero_offset(register: ModeRegister) -> tuple:
    return (0,) * register.n_modes


def _unit_offset(register: ModeRegister, j: int) -> tuple:
    off = [0] * register.n_modes
    off[j] = 1
    return tuple(off)


# basis key: (photons, cpb, frozenset of ModeOccupation)
RegisterKey = tuple[int, int, frozenset]


@dataclass(frozen=True)
class RegisterState:
    """Amplitudes over (cavity, charge qubit, mode occupations) basis keys."""

    register: ModeRegister
    geometry: EnsembleGeometry
    amplitudes: MappingProxyType
    metadata: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        amps = {}
        for key, amp in dict(self.amplitudes).items():
            photons, cpb, occs = key
            if photons not in (0, 1):
                raise ValueError("cavity carries at most one photon")
            if cpb not in (0, 1):
                raise ValueError("charge qubit is two-level")
            occs = frozenset(occs)
            offsets = [o.offset for o in occs]
            if len(set(offsets)) != len(offsets):
                raise HardCoreViolation(
                    "two excitations share one phase pattern"
                )
            if abs(amp) > 0:
                amps[(photons, cpb, occs)] = complex(amp)
        object.__setattr__(self, "amplitudes", MappingProxyType(amps))
        object.__setattr__(self, "metadata",
                           MappingProxyType(dict(self.metadata)))

    # -- helpers ------------------------------------------------------------

    @property
    def norm(self) -> float:
        return float(np.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values())))

    def _replace(self, amplitudes=None, metadata=None) -> "RegisterState":
        return RegisterState(
            self.register, self.geometry,
            self.amplitudes if amplitudes is None else amplitudes,
            MappingProxyType(dict(self.metadata if metadata is None
                                  else metadata)),
        )

    def with_metadata(self, **updates) -> "RegisterState":
        md = dict(self.metadata)
        md.update(updates)
        return self._replace(metadata=md)

    def occupations_in_level(self, level: str):
        found = set()
        for _, _, occs in self.amplitudes:
            for o in occs:
                if o.level == level:
                    found.add(o)
        return found

    def cavity_populated(self) -> bool:
        return any(abs(a) > 1e-15 for (p, _, _), a in self.amplitudes.items()
                   if p == 1)

    def mode_occupied(self, j: int) -> bool:
        target_f = _unit_offset(self.register, j)
        for _, _, occs in self.amplitudes:
            for o in occs:
                if o.offset == target_f:
                    return True
        return False

    def fidelity_to(self, other: "RegisterState") -> float:
        ov = 0.0 + 0.0j
        for key, amp in self.amplitudes.items():
            ov += np.conj(amp) * other.amplitudes.get(key, 0.0)
        return float(abs(ov) ** 2)


def vacuum_register(register: ModeRegister,
                    geometry: EnsembleGeometry) -> RegisterState:
    return RegisterState(register, geometry,
                         MappingProxyType({(0, 0, frozenset()): 1.0 + 0j}))


def load_cavity_qubit(state: RegisterState, alpha: complex,
                      beta: complex) -> RegisterState:
    """Put alpha |0> + beta |1> on the (previously empty) cavity."""
    if state.cavity_populated():
        raise SequencingError("cavity already occupied")
    norm = np.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    if norm == 0:
        raise ValueError("qubit amplitudes must not both vanish")
    alpha, beta = alpha / norm, beta / norm
    amps = {}
    for (p, c, occs), amp in state.amplitudes.items():
        amps[(0, c, occs)] = amps.get((0, c, occs), 0.0) + alpha * amp
        amps[(1, c, occs)] = amps.get((1, c, occs), 0.0) + beta * amp
    return state._replace(amplitudes=amps)


# ---------------------------------------------------------------------------
# storage shifts


def _shift(state: RegisterState, j: int, efficiency: float,
           from_level: str, to_level: str, offset_step: int) -> RegisterState:
    if not 0 <= j < state.register.n_modes:
        raise ValueError(f"mode index {j} out of range")
    if not 0 < efficiency <= 1:
        raise ValueError("efficiency must lie in (0, 1]")
    blocked = state.occupations_in_level(to_level)
    if blocked:
        raise SequencingError(
            f"shift with occupations already in level {to_level}: "
            f"apply the inverse shift first"
        )
    root = np.sqrt(efficiency)
    moved_weight = 0.0
    amps = {}
    for (p, c, occs), amp in state.amplitudes.items():
        new_occs = []
        factor = 1.0 + 0.0j
        for o in occs:
            off = list(o.offset)
            off[j] += offset_step
            new_occs.append(ModeOccupation(to_level, tuple(off)))
            factor *= SHIFT_SIGN * root
            moved_weight += abs(amp) ** 2 * (1 - efficiency)
        amps[(p, c, frozenset(new_occs))] = amp * factor
    md = dict(state.metadata)
    md["transfer_loss"] = md.get("transfer_loss", 0.0) + moved_weight
    return state._replace(amplitudes=amps, metadata=md)


def shift_back(state: RegisterState, j: int,
               efficiency: float = 1.0) -> RegisterState:
    """Inverted-order pulse pair with beam j: every (f, p) -> (m, p - q_j)."""
    return _shift(state, j, efficiency, LEVEL_F, LEVEL_M, -1)


def shift_forward(state: RegisterState, j: int,
                  efficiency: float = 1.0) -> RegisterState:
    """Forward pulse pair with beam j: every (m, p) -> (f, p + q_j)."""
    return _shift(state, j, efficiency, LEVEL_M, LEVEL_F, +1)


# ---------------------------------------------------------------------------
# cavity exchange


def ground_molecule_count(state: RegisterState) -> int:
    """N0 = molecules left in the ground state during a cavity exchange.

    Counts the shifted (nonzero-offset) m occupations; when logical
    superpositions make the count component-dependent the largest count wins
    (the residual rate mismatch is a genuine finite-N error the exact-basis
    oracle measures).
    """
    n = state.geometry.n_molecules
    counts = {
        sum(1 for o in occs if o.level == LEVEL_M and not o.is_flat)
        for _, _, occs in state.amplitudes
    }
    return n - (max(counts) if counts else 0)


def cavity_mode_swap(state: RegisterState, direction: str,
                     duration: float | None = None,
                     params: SystemParams | None = None,
                     efficiency: float = 1.0,
                     leakage_bound: float = DEFAULT_LEAKAGE_BOUND) -> RegisterState:
    """Beam-splitter exchange between the cavity photon and the flat (m, 0) mode.

    The exchange rate is sqrt(N0) g_eff with N0 the ground-state molecule
    count; ``duration=None`` selects the pi pulse duration
    pi / (2 sqrt(N0) g_eff).  ``direction='retrieve'`` uses the phase-flipped
    drive, i.e. the inverse rotation.  Occupations at nonzero pattern offsets
    couple only through their geometric overlap with the flat pattern; their
    weighted leakage probability is accumulated in the state metadata and
    triggers a transfer-fidelity warning above ``leakage_bound``.
    """
    if direction not in ("store", "retrieve"):
        raise ValueError("direction must be 'store' or 'retrieve'")
    params = params or SystemParams()
    n0 = ground_molecule_count(state)
    rate = np.sqrt(n0) * params.g_eff
    if duration is None:
        duration = np.pi / (2 * rate)
    theta = rate * duration
    if direction == "retrieve":
        theta = -theta

    if direction == "store":
        for key, amp in state.amplitudes.items():
            p, _, occs = key
            if p == 1 and any(o.level == LEVEL_M and o.is_flat for o in occs):
                raise SequencingError(
                    "cavity photon and flat storage mode both occupied"
                )
    if direction == "retrieve" and state.cavity_populated():
        raise SequencingError("retrieve requires an empty cavity")

    root = np.sqrt(efficiency)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    zero = _zero_offset(state.register)
    flat = ModeOccupation(LEVEL_M, zero)

    # leakage of spectator m occupations, suppressed by the pattern overlap
    leak = 0.0
    sin_mag = abs(np.sin(abs(theta)))
    for (p, c, occs), amp in state.amplitudes.items():
        for o in occs:
            if o.level == LEVEL_M and not o.is_flat:
                q = o.wave_vector(state.register)
                g = abs(overlap(state.geometry, WaveVector(np.zeros(3)), q))
                leak += abs(amp) ** 2 * (g * sin_mag) ** 2

    amps: dict = {}

    def add(key, value):
        if abs(value) > 0:
            amps[key] = amps.get(key, 0.0) + value

    for (p, c, occs), amp in state.amplitudes.items():
        has_flat = flat in occs
        if p == 0 and not has_flat:
            add((p, c, occs), amp)
            continue
        rest = frozenset(o for o in occs if o != flat)
        if p == 1 and not has_flat:
            # photon component rotates into the flat pattern
            add((1, c, rest), amp * cos_t)
            add((0, c, rest | {flat}), amp * -1j * sin_t * root)
        elif p == 0 and has_flat:
            add((0, c, rest | {flat}), amp * cos_t)
            add((1, c, rest), amp * -1j * sin_t * root)
        else:
            raise SequencingError(
                "cavity photon and flat storage mode both occupied"
            )

    md = dict(state.metadata)
    md["swap_leakage"] = md.get("swap_leakage", 0.0) + leak
    md["transfer_loss"] = (md.get("transfer_loss", 0.0)
                           + (1 - efficiency) * 1.0 * sin_t**2)
    if leak > leakage_bound:
        warns = list(md.get("warnings", ()))
        warns.append(f"cavity transfer leakage {leak:.2e} above "
                     f"{leakage_bound:.0e}")
        md["warnings"] = tuple(warns)
    return RegisterState(state.register, state.geometry,
                         MappingProxyType(amps), MappingProxyType(md))


# ---------------------------------------------------------------------------
# composite store / retrieve


def store_qubit(state: RegisterState, j: int,
                stirap_efficiency: float = 1.0,
                swap_efficiency: float = 1.0,
                params: SystemParams | None = None) -> RegisterState:
    """Move the cavity qubit into mode j: shift back, exchange, shift forward."""
    if state.mode_occupied(j):
        raise SequencingError(f"mode {j} already holds a qubit")
    out = shift_back(state, j, stirap_efficiency)
    out = cavity_mode_swap(out, "store", params=params,
                           efficiency=swap_efficiency)
    return shift_forward(out, j, stirap_efficiency)


def retrieve_qubit(state: RegisterState, j: int,
                   stirap_efficiency: float = 1.0,
                   swap_efficiency: float = 1.0,
                   params: SystemParams | None = None) -> RegisterState:
    """Move qubit j back onto the cavity (inverse of store_qubit)."""
    if state.cavity_populated():
        raise SequencingError("retrieve requires an empty cavity")
    out = shift_back(state, j, stirap_efficiency)
    out = cavity_mode_swap(out, "retrieve", params=params,
                           efficiency=swap_efficiency)
    return shift_forward(out, j, stirap_efficiency)


# ---------------------------------------------------------------------------
# charge-qubit operations on the register state (ideal algebra; the pulse
# level fidelities live in gates.GateReport and are budgeted separately)


def apply_cpb_swap(state: RegisterState) -> RegisterState:
    """Exchange the cavity and charge qubits (local phases absorbed in frame)."""
    amps = {}
    for (p, c, occs), amp in state.amplitudes.items():
        if (p, c) in ((1, 0), (0, 1)):
            amps[(c, p, occs)] = amps.get((c, p, occs), 0.0) + amp
        elif (p, c) == (1, 1):
            raise SequencingError("cavity and charge qubit both excited")
        else:
            amps[(p, c, occs)] = amps.get((p, c, occs), 0.0) + amp
    return state._replace(amplitudes=amps)


def apply_cpb_rotation(state: RegisterState, axis, angle: float) -> RegisterState:
    """Ideal SU(2) rotation of the charge qubit."""
    axis = np.asarray(axis, dtype=float).reshape(3)
    axis = axis / np.linalg.norm(axis)
    half = angle / 2
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    rot = (np.cos(half) * np.eye(2)
           - 1j * np.sin(half) * (axis[0] * sx + axis[1] * sy + axis[2] * sz))
    amps: dict = {}
    for (p, c, occs), amp in state.amplitudes.items():
        for c_new in (0, 1):
            val = rot[c_new, c] * amp
            if abs(val) > 0:
                key = (p, c_new, occs)
                amps[key] = amps.get(key, 0.0) + val
    return state._replace(amplitudes=amps)


def apply_cphase(state: RegisterState, phase: float = np.pi) -> RegisterState:
    """Conditional phase on (charge excited) AND (photon present)."""
    amps = {}
    for (p, c, occs), amp in state.amplitudes.items():
        if p == 1 and c == 1:
            amp = amp * np.exp(1j * phase)
        amps[(p, c, occs)] = amp
    return state._replace(amplitudes=amps)


def project_cpb(state: RegisterState, outcome: int) -> tuple[RegisterState, float]:
    """Projective readout back-action; returns (collapsed state, probability)."""
    prob = sum(abs(a) ** 2 for (p, c, _), a in state.amplitudes.items()
               if c == outcome)
    total = sum(abs(a) ** 2 for a in state.amplitudes.values())
    if prob <= 0:
        raise ValueError(f"outcome {outcome} has zero probability")
    scale = 1 / np.sqrt(prob)
    amps = {(p, 0, occs): a * scale
            for (p, c, occs), a in state.amplitudes.items() if c == outcome}
    return state._replace(amplitudes=amps), float(prob / total)


def cpb_excited_probability(state: RegisterState) -> float:
    num = sum(abs(a) ** 2 for (p, c, _), a in state.amplitudes.items() if c == 1)
    den = sum(abs(a) ** 2 for a in state.amplitudes.values())
    return float(num / den) if den else 0.0


# ---------------------------------------------------------------------------
# logical interpretation


def logical_state(state: RegisterState, qubits=None) -> dict:
    """Logical amplitudes {bitstring: amplitude} for parked qubits.

    Requires an empty cavity and ground charge qubit.  The fixed storage
    frame factor (+i per occupied mode) is stripped so the result is directly
    comparable to circuit-level target states.
    """
    reg = state.register
    qubits = list(range(reg.n_modes)) if qubits is None else list(qubits)
    out = {}
    for (p, c, occs), amp in state.amplitudes.items():
        if p != 0 or c != 0:
            raise SequencingError(
                "logical readback needs the cavity and charge qubit empty"
            )
        bits = ["0"] * len(qubits)
        for o in occs:
            home = o.mode_index
            if home < 0:
                raise SequencingError("an excitation is still in flight")
            if home in qubits:
                bits[qubits.index(home)] = "1"
        key = "".join(bits)
        out[key] = out.get(key, 0.0) + amp / (STORE_PHASE ** len(occs))
    return out


def reduced_density(state: RegisterState, qubits) -> np.ndarray:
    """Reduced logical density matrix of ``qubits`` (cavity/charge must be empty)."""
    qubits = list(qubits)
    dim = 2 ** len(qubits)
    rho = np.zeros((dim, dim), dtype=complex)
    groups: dict = {}
    for (p, c, occs), amp in state.amplitudes.items():
        if p != 0 or c != 0:
            raise SequencingError(
                "reduced state needs the cavity and charge qubit empty"
            )
        sel = 0
        env = []
        for o in occs:
            home = o.mode_index
            if home in qubits:
                sel |= 1 << qubits.index(home)
            else:
                env.append(o)
        amp = amp / STORE_PHASE ** bin(sel).count("1")
        block = groups.setdefault(frozenset(env), {})
        block[sel] = block.get(sel, 0.0) + amp
    for env, block in groups.items():
        for i, ai in block.items():
            for k, ak in block.items():
                rho[i, k] += ai * np.conj(ak)
    return rho
