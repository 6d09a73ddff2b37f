"""Single-qutrit subspace rotations, X± cyclic shifts, virtual-Z and the
two-transmon gates used by the Toffoli decompositions.

All rotations follow R_β^(ij)(θ) = exp(-i θ/2 σ_β^(ij)), where σ_β^(ij) is
the Pauli matrix σ_β placed on the {|i>, |j>} block of a qutrit.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .hilbert import MixedRadixSpace, Operator

SUBSPACES = ((0, 1), (1, 2))
AXES = ("x", "y", "z")

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _check_subspace(ij, dim: int) -> tuple[int, int]:
    ij = tuple(int(k) for k in ij)
    if ij not in SUBSPACES:
        raise ValueError(f"subspace must be (0, 1) or (1, 2), got {ij}")
    if ij[1] >= dim:
        raise ValueError(f"subspace {ij} does not exist on a {dim}-level site")
    return ij


def rotation_2x2(axis: str, theta: float, phase: float = 0.0) -> np.ndarray:
    """exp(-i θ/2 σ) for σ along x, y or z.

    For x and y the rotation axis is additionally turned by ``phase`` in the
    x-y plane (x at 0, y at π/2), which is how frame phases enter physical
    pulses.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if axis == "z":
        return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
    phi = phase + (0.0 if axis == "x" else np.pi / 2)
    return np.array(
        [[c, -1j * s * np.exp(-1j * phi)], [-1j * s * np.exp(1j * phi), c]], dtype=complex
    )


def subspace_pauli(axis: str, ij=(0, 1), dim: int = 3) -> np.ndarray:
    """Generalized Pauli σ_axis^(ij) as a dim x dim matrix (zero elsewhere)."""
    i, j = _check_subspace(ij, dim)
    out = np.zeros((dim, dim), dtype=complex)
    out[np.ix_([i, j], [i, j])] = PAULI[axis]
    return out


def subspace_rotation_matrix(
    axis: str, ij, theta: float, phase: float = 0.0, dim: int = 3
) -> Operator:
    """R_axis^(ij)(θ) on a single site of dimension ``dim``."""
    if not np.isfinite(theta):
        raise ValueError("rotation angle must be finite")
    i, j = _check_subspace(ij, dim)
    m = np.eye(dim, dtype=complex)
    m[np.ix_([i, j], [i, j])] = rotation_2x2(axis, theta, phase)
    return Operator(MixedRadixSpace((dim,)), m, unitary=True)


def x_plus() -> Operator:
    """X+ = R_y^(01)(π) R_y^(12)(π): |i> -> |(i+1) mod 3>."""
    return subspace_rotation_matrix("y", (0, 1), np.pi) @ subspace_rotation_matrix(
        "y", (1, 2), np.pi
    )


def x_minus() -> Operator:
    """X- = R_y^(12)(-π) R_y^(01)(-π): |i> -> |(i-1) mod 3>."""
    return subspace_rotation_matrix("y", (1, 2), -np.pi) @ subspace_rotation_matrix(
        "y", (0, 1), -np.pi
    )


def virtual_z(ij, theta: float, dim: int = 3) -> Operator:
    """Zero-duration frame rotation; numerically identical to R_z^(ij)(θ)."""
    return subspace_rotation_matrix("z", ij, theta, dim=dim)


def virtual_z_angles(phases: Sequence[float]) -> list[tuple[tuple[int, int], float]]:
    """Virtual-Z angles reproducing diag(exp(i*phases)) up to a global phase.

    Returns ``[((0, 1), a)]`` for a qubit and ``[((0, 1), a), ((1, 2), b)]``
    for a qutrit, with R_z^(01)(a) R_z^(12)(b) ∝ diag(exp(i*phases)).
    """
    p = np.asarray(phases, dtype=float)
    if p.size == 2:
        return [((0, 1), float(p[1] - p[0]))]
    if p.size != 3:
        raise ValueError("phases must have length 2 or 3")
    c = -p.sum() / 3
    return [((0, 1), float(-2 * (p[0] + c))), ((1, 2), float(2 * (p[2] + c)))]


def controlled_subspace_x(sign: int = +1, phase: float = 0.0) -> Operator:
    """Qubit-controlled R_x^(01)(±π) on a qutrit target, space (2, 3).

    Note R_x(π) = -iX on the (01) block, which is not the qutrit-embedded X.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    m = np.eye(6, dtype=complex)
    m[3:, 3:] = subspace_rotation_matrix("x", (0, 1), sign * np.pi, phase=phase).matrix
    return Operator(MixedRadixSpace((2, 3)), m, unitary=True)


def physical_cnot(
    stark_phase: float = 0.0,
    level_angles: Sequence[float] = (0.0, np.pi, np.pi / 2),
    level2_axis_sign: int = +1,
    target_phase: float = 0.0,
    control_dim: int = 3,
) -> Operator:
    """Device CNOT with a (possibly qutrit) control and a qubit target.

    Control level l rotates the target by R_x(level_angles[l]).  Levels 0 and
    1 carry the calibration phase exp(i a/2) that turns R_x(π) into an exact
    X, so the qubit block is the textbook CNOT.  Level 2 rotates by the
    halved angle about ``level2_axis_sign`` * x and picks up the AC-Stark
    phase exp(i * stark_phase).
    """
    if level2_axis_sign not in (+1, -1):
        raise ValueError("level2_axis_sign must be +1 or -1")
    if control_dim not in (2, 3):
        raise ValueError("control_dim must be 2 or 3")
    blocks = []
    for level in range(control_dim):
        a = float(level_angles[level])
        if level < 2:
            blocks.append(np.exp(0.5j * a) * rotation_2x2("x", a, target_phase))
        else:
            r = rotation_2x2("x", level2_axis_sign * a, target_phase)
            blocks.append(np.exp(1j * stark_phase) * r)
    m = np.zeros((2 * control_dim, 2 * control_dim), dtype=complex)
    for level, b in enumerate(blocks):
        m[2 * level : 2 * level + 2, 2 * level : 2 * level + 2] = b
    return Operator(MixedRadixSpace((control_dim, 2)), m, unitary=True)


def cnot_qubits() -> Operator:
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = PAULI["x"]
    return Operator(MixedRadixSpace((2, 2)), m, unitary=True)


def toffoli(dims: Sequence[int] = (2, 2, 2)) -> Operator:
    """Ideal CCNOT on (c1, c2, t); on a qutrit c2 it acts trivially when c2 = 2."""
    space = MixedRadixSpace(tuple(dims))
    m = np.eye(space.total_dim, dtype=complex)
    for t in (0, 1):
        a, b = space.index((1, 1, t)), space.index((1, 1, 1 - t))
        m[a, a] = 0
        m[b, a] = 1
    return Operator(space, m, unitary=True)


def two_controlled_not_ideal() -> Operator:
    """Target flips iff the qutrit control is |2>, space (3, 2)."""
    m = np.eye(6, dtype=complex)
    m[4:, 4:] = PAULI["x"]
    return Operator(MixedRadixSpace((3, 2)), m, unitary=True)
