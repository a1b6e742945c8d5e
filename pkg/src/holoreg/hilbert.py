"""Exact composite basis and operator assembly for small ensembles.

The brute-force Hilbert space is cavity Fock states (0..n_max photons), an
optional two-level charge qubit, and five internal levels per molecule:
ground g plus excitations m, f (storage triplet states), e (rotationally
excited, only entering through the effective Raman coupling) and e_el
(electronically excited STIRAP intermediary).  States are restricted to a
total excitation number cap so moderate molecule counts stay tractable.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from .phasegeom import EnsembleGeometry, WaveVector


class CapacityError(MemoryError):
    """Requested basis exceeds the configured size budget."""


class MolecularLevel(IntEnum):
    G = 0
    M = 1
    F = 2
    E = 3
    E_EL = 4


EXCITED_LEVELS = (MolecularLevel.M, MolecularLevel.F, MolecularLevel.E,
                  MolecularLevel.E_EL)

# (photons, cpb, excitations) with excitations a sorted tuple of
# (molecule_index, MolecularLevel != G) pairs
BasisKey = tuple[int, int, tuple[tuple[int, int], ...]]


@dataclass(frozen=True)
class Basis:
    """Deterministically ordered excitation-capped composite basis."""

    n_molecules: int
    n_max: int
    excitation_cap: int
    include_cpb: bool
    states: tuple[BasisKey, ...]
    index: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.states)

    def state_index(self, photons: int, cpb: int, excitations=()) -> int:
        key = (photons, cpb, tuple(sorted(excitations)))
        return self.index[key]

    def vacuum_index(self) -> int:
        return self.index[(0, 0, ())]


def enumerate_basis(n_molecules: int, n_max: int, excitation_cap: int,
                    include_cpb: bool,
                    levels=EXCITED_LEVELS,
                    max_states: int = 500_000) -> Basis:
    """Enumerate all basis states with total excitation <= excitation_cap.

    Total excitation counts photons, the charge-qubit excitation and every
    molecule not in g.  Ordering is lexicographic on (photons, cpb,
    excitation list) and stable across runs.
    """
    if n_molecules < 1:
        raise ValueError("n_molecules must be >= 1")
    if excitation_cap < 1:
        raise ValueError("excitation_cap must be >= 1")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    levels = tuple(sorted(set(int(l) for l in levels)))
    if MolecularLevel.G in levels:
        raise ValueError("g is the reference level, not an excitation")

    states: list[BasisKey] = []
    cpb_values = (0, 1) if include_cpb else (0,)
    for photons in range(min(n_max, excitation_cap) + 1):
        for cpb in cpb_values:
            budget = excitation_cap - photons - cpb
            if budget < 0:
                continue
            for k in range(min(budget, n_molecules) + 1):
                for mol_combo in itertools.combinations(range(n_molecules), k):
                    for lvl_combo in itertools.product(levels, repeat=k):
                        states.append((photons, cpb,
                                       tuple(zip(mol_combo, lvl_combo))))
                        if len(states) > max_states:
                            raise CapacityError(
                                f"basis for n_molecules={n_molecules}, "
                                f"n_max={n_max}, cap={excitation_cap}, "
                                f"cpb={include_cpb} exceeds "
                                f"max_states={max_states}"
                            )
    states.sort()
    index = {s: i for i, s in enumerate(states)}
    return Basis(n_molecules, n_max, excitation_cap, include_cpb,
                 tuple(states), index)


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over an enumerated basis."""

    basis: Basis
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.basis.size,):
            raise ValueError("amplitude length must match basis size")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.basis, self.amplitudes / self.norm)


def basis_state(basis: Basis, photons: int = 0, cpb: int = 0,
                excitations=()) -> StateVector:
    amp = np.zeros(basis.size, dtype=complex)
    amp[basis.state_index(photons, cpb, excitations)] = 1.0
    return StateVector(basis, amp)


@dataclass(frozen=True)
class SystemParams:
    """Physical rates of the hybrid system, all in rad/s.

    g_single is the single-molecule cavity coupling, Delta the one-photon
    Raman detuning from the rotationally excited state, and omega_mw the
    classical microwave Rabi frequency; together they set the effective
    cavity-storage coupling g_eff = omega_mw * g_single / (2 Delta).
    """

    g_single: float = 2 * np.pi * 50e3
    Delta: float = 2 * np.pi * 5e6
    omega_mw: float = 2 * np.pi * 100e6
    g_c: float = 2 * np.pi * 200e6
    kappa: float = 2 * np.pi * 5e3
    gamma_cpb: float = 1.0 / 4e-6
    gamma_phi: float = 1.0 / 1e-6

    def __post_init__(self):
        for name in ("g_single", "omega_mw", "g_c", "kappa", "gamma_cpb",
                     "gamma_phi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def g_eff(self) -> float:
        """Effective cavity <-> storage coupling after eliminating level e."""
        if self.Delta == 0:
            raise ValueError("Delta must be nonzero for the effective coupling")
        return self.omega_mw * self.g_single / (2 * self.Delta)

    @property
    def t1(self) -> float:
        return np.inf if self.gamma_cpb == 0 else 1.0 / self.gamma_cpb

    @property
    def t2(self) -> float:
        return np.inf if self.gamma_phi == 0 else 1.0 / self.gamma_phi


def _coo_to_hermitian_csr(rows, cols, vals, diag, size) -> sp.csr_matrix:
    r = list(rows) + list(cols)
    c = list(cols) + list(rows)
    v = list(vals) + [np.conj(x) for x in vals]
    r += list(range(size))
    c += list(range(size))
    v += list(diag)
    h = sp.coo_matrix((v, (r, c)), shape=(size, size), dtype=complex)
    return h.tocsr()


def _excitation_map(exc, mol, new_level):
    """Replace molecule ``mol``'s level in the excitation tuple."""
    out = [(m, l) for m, l in exc if m != mol]
    if new_level != MolecularLevel.G:
        out.append((mol, int(new_level)))
    return tuple(sorted(out))


def build_optical_storage_hamiltonian(geom: EnsembleGeometry, basis: Basis,
                                      omega1: float, k1: WaveVector,
                                      omega2: float, k2: WaveVector,
                                      delta_e: float = 0.0,
                                      delta_2ph: float = 0.0) -> sp.csr_matrix:
    """Two-beam Lambda coupling m <-> e_el <-> f with spatial phase factors.

    Matrix elements are omega1 e^{i k1.x_j} |e_el_j><m_j| +
    omega2 e^{i k2.x_j} |e_el_j><f_j| + h.c., plus diagonal one-photon
    (delta_e on e_el) and two-photon (delta_2ph on f) detunings.
    """
    if geom.n_molecules != basis.n_molecules:
        raise ValueError("geometry and basis molecule counts differ")
    phase1 = np.exp(1j * (geom.positions @ k1.components))
    phase2 = np.exp(1j * (geom.positions @ k2.components))

    rows, cols, vals = [], [], []
    diag = np.zeros(basis.size, dtype=complex)
    for idx, (photons, cpb, exc) in enumerate(basis.states):
        for mol, lvl in exc:
            if lvl == MolecularLevel.E_EL:
                diag[idx] += delta_e
            elif lvl == MolecularLevel.F:
                diag[idx] += delta_2ph
            if lvl == MolecularLevel.M:
                target = (photons, cpb,
                          _excitation_map(exc, mol, MolecularLevel.E_EL))
                rows.append(basis.index[target])
                cols.append(idx)
                vals.append(omega1 * phase1[mol])
            elif lvl == MolecularLevel.F:
                target = (photons, cpb,
                          _excitation_map(exc, mol, MolecularLevel.E_EL))
                rows.append(basis.index[target])
                cols.append(idx)
                vals.append(omega2 * phase2[mol])
    return _coo_to_hermitian_csr(rows, cols, vals, diag, basis.size)


def build_raman_cavity_hamiltonian(geom: EnsembleGeometry, basis: Basis,
                                   g_eff: float,
                                   delta: float = 0.0) -> sp.csr_matrix:
    """Effective cavity-storage exchange g_eff (c† sum_j |g_j><m_j| + h.c.) - delta c†c.

    The microwave leg carries no optical phase, so the photon couples to the
    flat collective m pattern with the usual sqrt(N) enhancement.
    """
    if geom.n_molecules != basis.n_molecules:
        raise ValueError("geometry and basis molecule counts differ")
    rows, cols, vals = [], [], []
    diag = np.zeros(basis.size, dtype=complex)
    for idx, (photons, cpb, exc) in enumerate(basis.states):
        diag[idx] += -delta * photons
        if photons >= basis.n_max:
            continue
        # c† |g_j><m_j| : molecule drops m -> g, photon count rises
        for mol, lvl in exc:
            if lvl != MolecularLevel.M:
                continue
            target = (photons + 1, cpb,
                      _excitation_map(exc, mol, MolecularLevel.G))
            tgt_idx = basis.index.get(target)
            if tgt_idx is None:
                continue
            rows.append(tgt_idx)
            cols.append(idx)
            vals.append(g_eff * np.sqrt(photons + 1))
    return _coo_to_hermitian_csr(rows, cols, vals, diag, basis.size)


def build_cpb_hamiltonian(basis: Basis, g_c: float,
                          delta_cpb: float = 0.0) -> sp.csr_matrix:
    """Jaynes-Cummings exchange g_c (sigma- c† + sigma+ c) + delta_cpb sigma+ sigma-."""
    if not basis.include_cpb:
        raise ValueError("basis was built without the charge qubit")
    rows, cols, vals = [], [], []
    diag = np.zeros(basis.size, dtype=complex)
    for idx, (photons, cpb, exc) in enumerate(basis.states):
        diag[idx] += delta_cpb * cpb
        if cpb == 1 and photons < basis.n_max:
            target = (photons + 1, 0, exc)
            tgt_idx = basis.index.get(target)
            if tgt_idx is None:
                continue
            rows.append(tgt_idx)
            cols.append(idx)
            vals.append(g_c * np.sqrt(photons + 1))
    return _coo_to_hermitian_csr(rows, cols, vals, diag, basis.size)


def photon_number_operator(basis: Basis) -> sp.csr_matrix:
    diag = np.array([s[0] for s in basis.states], dtype=float)
    return sp.diags(diag).tocsr()


def cpb_number_operator(basis: Basis) -> sp.csr_matrix:
    diag = np.array([s[1] for s in basis.states], dtype=float)
    return sp.diags(diag).tocsr()


def level_population_operator(basis: Basis, level: MolecularLevel) -> sp.csr_matrix:
    diag = np.array(
        [sum(1 for _, l in s[2] if l == level) for s in basis.states],
        dtype=float,
    )
    return sp.diags(diag).tocsr()


def total_excitation_operator(basis: Basis) -> sp.csr_matrix:
    diag = np.array([s[0] + s[1] + len(s[2]) for s in basis.states],
                    dtype=float)
    return sp.diags(diag).tocsr()


# ---------------------------------------------------------------------------
# export helpers


def operator_to_coo_csv(op: sp.spmatrix) -> str:
    """Coordinate-list CSV (row, col, re, im) for cross-checking."""
    coo = op.tocoo()
    lines = ["row,col,re,im"]
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        lines.append(f"{coo.row[k]},{coo.col[k]},"
                     f"{coo.data[k].real!r},{coo.data[k].imag!r}")
    return "\n".join(lines) + "\n"


def basis_to_json(basis: Basis) -> str:
    doc = {
        "n_molecules": basis.n_molecules,
        "n_max": basis.n_max,
        "excitation_cap": basis.excitation_cap,
        "include_cpb": basis.include_cpb,
        "states": [
            {"photons": p, "cpb": c,
             "excitations": [[m, int(l)] for m, l in exc]}
            for p, c, exc in basis.states
        ],
    }
    return json.dumps(doc, indent=2)
