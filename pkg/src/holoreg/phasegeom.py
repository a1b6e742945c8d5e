"""Ensemble geometry and phase-pattern wave vectors.

A register qubit is carried by a collective excitation with spatial phase
pattern e^{i q . x_j} over the molecule positions x_j.  Distinct patterns are
addressable as long as they are close to orthogonal, which this module
quantifies through pairwise overlaps

    overlap(q1, q2) = (1/N) sum_j exp(i (q2 - q1) . x_j)

and the Gram matrix of a whole register of wave vectors.  The wave vectors
themselves come from rotating one of the two Raman beams by small angles
theta_n with k2 L sin(theta_n) = 2 pi n.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Z_AXIS = np.array([0.0, 0.0, 1.0])


class UnreachableAngleError(ValueError):
    """Requested diffraction order needs |sin theta| > 1."""


class RegisterConstructionError(RuntimeError):
    """Register crosstalk exceeds the requested tolerance."""

    def __init__(self, message, worst_pair=None, worst_value=None):
        super().__init__(message)
        self.worst_pair = worst_pair
        self.worst_value = worst_value


@dataclass(frozen=True)
class WaveVector:
    """A wave vector in rad/m."""

    components: np.ndarray

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float).reshape(3)
        if not np.all(np.isfinite(comp)):
            raise ValueError("wave vector components must be finite")
        object.__setattr__(self, "components", comp)

    def __sub__(self, other: "WaveVector") -> "WaveVector":
        return WaveVector(self.components - other.components)

    def __add__(self, other: "WaveVector") -> "WaveVector":
        return WaveVector(self.components + other.components)

    def __neg__(self) -> "WaveVector":
        return WaveVector(-self.components)

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.components))


@dataclass(frozen=True)
class EnsembleGeometry:
    """Molecule positions (meters) together with the trap axis.

    ``trap_length`` is the nominal extent along ``axis``; the actual spread of
    the positions along the axis may not exceed it (up to a small tolerance
    that accommodates jitter).
    """

    positions: np.ndarray
    trap_length: float
    axis: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] == 0:
            raise ValueError("positions must be a non-empty (N, 3) array")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if self.trap_length <= 0:
            raise ValueError("trap_length must be positive")
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if not np.isfinite(norm) or norm == 0:
            raise ValueError("axis must be a nonzero finite vector")
        axis = axis / norm
        proj = pos @ axis
        spread = proj.max() - proj.min()
        # 5% slack lets jittered geometries keep their nominal trap length
        if spread > self.trap_length * 1.05:
            raise ValueError(
                f"axial spread {spread:.3e} m exceeds trap_length "
                f"{self.trap_length:.3e} m"
            )
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "axis", axis)

    @property
    def n_molecules(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class ModeRegister:
    """An ordered set of storage-mode wave vectors with their Gram matrix."""

    modes: tuple[WaveVector, ...]
    gram: np.ndarray
    crosstalk_bound: float

    def __post_init__(self):
        gram = np.asarray(self.gram, dtype=complex)
        k = len(self.modes)
        if gram.shape != (k, k):
            raise ValueError("gram matrix shape must match number of modes")
        if not np.allclose(gram, gram.conj().T, atol=1e-12):
            raise ValueError("gram matrix must be Hermitian")
        if not np.allclose(np.diag(gram).real, 1.0, atol=1e-12):
            raise ValueError("gram matrix must have unit diagonal")
        object.__setattr__(self, "gram", gram)

    @property
    def n_modes(self) -> int:
        return len(self.modes)


def make_lattice(n: int, trap_length: float, axis=Z_AXIS) -> EnsembleGeometry:
    """Equidistant chain of ``n`` molecules spanning ``trap_length``.

    Points are centred on the origin; neighbour spacing is
    ``trap_length / (n - 1)`` for ``n > 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if trap_length <= 0:
        raise ValueError("trap_length must be positive")
    axis = np.asarray(axis, dtype=float).reshape(3)
    axis = axis / np.linalg.norm(axis)
    if n == 1:
        coords = np.zeros(1)
    else:
        coords = np.linspace(-trap_length / 2, trap_length / 2, n)
    return EnsembleGeometry(np.outer(coords, axis), trap_length, axis)


def lattice_phase_period(n: int, trap_length: float) -> float:
    """Spatial period ``n * spacing`` of an n-point lattice spanning trap_length.

    A schedule built from ``angle_schedule(lattice_phase_period(n, L), ...)``
    advances the inter-mode phase by exactly 2 pi m / n per site, so all
    distinct-mode overlaps on the lattice are geometric-series zeros.
    """
    if n < 2:
        raise ValueError("period needs at least two lattice points")
    return trap_length * n / (n - 1)


def jitter(geom: EnsembleGeometry, sigma: float, seed: int) -> EnsembleGeometry:
    """Displace every position by an isotropic Gaussian of std ``sigma``/axis."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return geom
    rng = np.random.default_rng(seed)
    displaced = geom.positions + rng.normal(0.0, sigma, geom.positions.shape)
    return EnsembleGeometry(displaced, geom.trap_length, geom.axis)


def overlap(geom: EnsembleGeometry, q1: WaveVector, q2: WaveVector) -> complex:
    """Normalized pattern overlap (1/N) sum_j exp(i (q2 - q1) . x_j)."""
    dq = q2.components - q1.components
    phases = geom.positions @ dq
    return complex(np.exp(1j * phases).mean())


def pattern_factor(geom: EnsembleGeometry, q: WaveVector) -> complex:
    """Overlap of pattern ``q`` with the flat (q = 0) pattern."""
    return overlap(geom, WaveVector(np.zeros(3)), q)


def gram_matrix(geom: EnsembleGeometry, modes) -> np.ndarray:
    """Full K x K matrix of pairwise overlaps, G[i, j] = overlap(q_i, q_j)."""
    qs = np.array([m.components for m in modes])
    phases = geom.positions @ qs.T          # (N, K)
    e = np.exp(1j * phases)
    return (e.conj().T @ e) / geom.n_molecules


def angle_schedule(trap_length: float, wavelength: float,
                   n_min: int, n_max: int) -> np.ndarray:
    """Beam angles theta_n = arcsin(n wavelength / trap_length), n_min..n_max."""
    if wavelength <= 0 or trap_length <= 0:
        raise ValueError("wavelength and trap_length must be positive")
    if wavelength >= trap_length:
        raise ValueError("wavelength must be small compared to trap_length")
    if n_min > n_max:
        raise ValueError("n_min must not exceed n_max")
    orders = np.arange(n_min, n_max + 1)
    sines = orders * wavelength / trap_length
    worst = np.abs(sines).max()
    if worst > 1:
        raise UnreachableAngleError(
            f"order {orders[np.abs(sines).argmax()]} needs |sin theta| = "
            f"{worst:.3f} > 1"
        )
    return np.arcsin(sines)


def build_register(geom: EnsembleGeometry, k1: WaveVector, angles,
                   tol: float = 1e-2) -> ModeRegister:
    """Construct storage modes q_i = k1 - k2_i and check their crosstalk.

    ``k1`` must be perpendicular to the trap axis.  Each k2_i has the same
    magnitude as k1 and is rotated from the k1 direction toward the trap axis
    by angle theta_i, so that q_i . axis = -|k1| sin(theta_i).
    """
    angles = np.asarray(angles, dtype=float)
    if angles.size == 0:
        raise ValueError("at least one angle is required")
    if np.unique(angles).size != angles.size:
        raise ValueError("angles must be distinct")
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    k1c = k1.components
    k_mag = k1.magnitude
    if k_mag == 0:
        raise ValueError("k1 must be nonzero")
    if abs(k1c @ geom.axis) > 1e-9 * k_mag:
        raise ValueError("k1 must be perpendicular to the trap axis")
    k1_hat = k1c / k_mag

    modes = []
    for theta in angles:
        k2 = k_mag * (np.cos(theta) * k1_hat + np.sin(theta) * geom.axis)
        modes.append(WaveVector(k1c - k2))
    gram = gram_matrix(geom, modes)

    off = np.abs(gram - np.diag(np.diag(gram)))
    crosstalk = float(off.max()) if len(modes) > 1 else 0.0
    if crosstalk > tol:
        i, j = np.unravel_index(off.argmax(), off.shape)
        raise RegisterConstructionError(
            f"crosstalk {crosstalk:.3e} between modes {i} and {j} exceeds "
            f"tolerance {tol:.1e}",
            worst_pair=(int(i), int(j)),
            worst_value=crosstalk,
        )
    return ModeRegister(tuple(modes), gram, crosstalk)


# ---------------------------------------------------------------------------
# JSON import/export


def geometry_to_json(geom: EnsembleGeometry) -> str:
    doc = {
        "positions_m": geom.positions.tolist(),
        "trap_length_m": geom.trap_length,
        "axis": geom.axis.tolist(),
    }
    return json.dumps(doc, indent=2)


def geometry_from_json(text: str) -> EnsembleGeometry:
    doc = json.loads(text)
    return EnsembleGeometry(
        np.array(doc["positions_m"], dtype=float),
        float(doc["trap_length_m"]),
        np.array(doc["axis"], dtype=float),
    )


def register_to_json(reg: ModeRegister, k1: WaveVector | None = None,
                     angles=None) -> str:
    gram_pairs = [[[z.real, z.imag] for z in row] for row in reg.gram]
    doc = {
        "modes_rad_per_m": [m.components.tolist() for m in reg.modes],
        "gram_re_im": gram_pairs,
        "crosstalk_bound": reg.crosstalk_bound,
    }
    if k1 is not None:
        doc["k1_rad_per_m"] = k1.components.tolist()
    if angles is not None:
        doc["angles_deg"] = np.degrees(np.asarray(angles)).tolist()
    return json.dumps(doc, indent=2)


def register_from_json(text: str) -> ModeRegister:
    doc = json.loads(text)
    modes = tuple(WaveVector(np.array(c)) for c in doc["modes_rad_per_m"])
    gram = np.array(
        [[complex(re, im) for re, im in row] for row in doc["gram_re_im"]]
    )
    return ModeRegister(modes, gram, float(doc["crosstalk_bound"]))


def save_json(text: str, path) -> None:
    Path(path).write_text(text, encoding="utf-8")
