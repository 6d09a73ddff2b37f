"""Dense linear algebra over mixed-radix (qubit/qutrit) tensor-product spaces.

Site ordering convention: site 0 is the leftmost ket label and the most
significant digit of the flat index, so on dims ``(2, 3, 2)`` the ket
``|c1 c2 t>`` lives at index ``c1*6 + c2*2 + t``.  Every module in this
package uses this ordering.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HERMITIAN_ATOL = 1e-10
UNITARY_ATOL = 1e-10
STATE_ATOL = 1e-12


@dataclass(frozen=True)
class MixedRadixSpace:
    """Ordered tuple of per-site dimensions, each 2 or 3."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("a space needs at least one site")
        if any(d not in (2, 3) for d in dims):
            raise ValueError(f"site dimensions must be 2 or 3, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def __add__(self, other: "MixedRadixSpace") -> "MixedRadixSpace":
        return MixedRadixSpace(self.dims + other.dims)

    def index(self, digits: Sequence[int]) -> int:
        """Flat index of a computational basis ket given its digit string."""
        if len(digits) != self.n_sites:
            raise ValueError(f"expected {self.n_sites} digits, got {len(digits)}")
        for d, dim in zip(digits, self.dims):
            if not 0 <= d < dim:
                raise ValueError(f"digit {d} out of range for a {dim}-level site")
        return int(np.ravel_multi_index(tuple(digits), self.dims))

    def digits(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def labels(self) -> list[str]:
        """Outcome labels in flat-index order, e.g. ``'120'``."""
        return ["".join(map(str, d)) for d in itertools.product(*(range(k) for k in self.dims))]


def as_space(space) -> MixedRadixSpace:
    if isinstance(space, MixedRadixSpace):
        return space
    return MixedRadixSpace(tuple(space))


@dataclass(frozen=True, eq=False)
class Operator:
    """A square matrix on a mixed-radix space.

    ``unitary=True`` is checked at construction (U†U = I within 1e-10).
    """

    space: MixedRadixSpace
    matrix: np.ndarray
    unitary: bool = False

    def __post_init__(self):
        space = as_space(self.space)
        m = np.array(self.matrix, dtype=complex)
        n = space.total_dim
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match space dims {space.dims}")
        if self.unitary and not np.allclose(m.conj().T @ m, np.eye(n), atol=UNITARY_ATOL):
            raise ValueError("operator flagged unitary is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.space != other.space:
            raise ValueError(f"space mismatch: {self.space.dims} vs {other.space.dims}")
        return Operator(self.space, self.matrix @ other.matrix, self.unitary and other.unitary)

    @property
    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T, self.unitary)

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol))

    def is_unitary(self, atol: float = UNITARY_ATOL) -> bool:
        n = self.space.total_dim
        return bool(np.allclose(self.matrix.conj().T @ self.matrix, np.eye(n), atol=atol))


def identity(space) -> Operator:
    space = as_space(space)
    return Operator(space, np.eye(space.total_dim), unitary=True)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure state vector or density matrix on a mixed-radix space."""

    space: MixedRadixSpace
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        space = as_space(self.space)
        d = np.array(self.data, dtype=complex)
        n = space.total_dim
        if d.shape == (n,):
            if abs(np.linalg.norm(d) - 1.0) > STATE_ATOL:
                raise ValueError("state vector is not normalized")
        elif d.shape == (n, n):
            if not np.allclose(d, d.conj().T, atol=STATE_ATOL):
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(d).real - 1.0) > STATE_ATOL:
                raise ValueError("density matrix does not have unit trace")
            if np.linalg.eigvalsh((d + d.conj().T) / 2).min() < -1e-10:
                raise ValueError("density matrix is not positive semidefinite")
        else:
            raise ValueError(f"state shape {d.shape} does not match space dims {space.dims}")
        d.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "data", d)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data


def basis_state(space, digits: Sequence[int]) -> QuantumState:
    space = as_space(space)
    v = np.zeros(space.total_dim, dtype=complex)
    v[space.index(digits)] = 1.0
    return QuantumState(space, v)


def kron(a: Operator, b: Operator) -> Operator:
    return Operator(a.space + b.space, np.kron(a.matrix, b.matrix), a.unitary and b.unitary)


def embed(op: Operator, sites: Sequence[int], space) -> Operator:
    """Lift ``op`` acting on ``sites`` (in the given order) to the full space."""
    space = as_space(space)
    sites = [int(s) for s in sites]
    if len(set(sites)) != len(sites):
        raise ValueError(f"duplicate sites in {sites}")
    if any(not 0 <= s < space.n_sites for s in sites):
        raise ValueError(f"site out of range in {sites} for {space.n_sites} sites")
    sub_dims = tuple(space.dims[s] for s in sites)
    if op.space.dims != sub_dims:
        raise ValueError(f"operator dims {op.space.dims} do not match site dims {sub_dims}")

    n = space.n_sites
    rest = [s for s in range(n) if s not in sites]
    rest_dim = int(np.prod([space.dims[s] for s in rest])) if rest else 1
    # op ⊗ I_rest in (sites, rest) ordering, then permute axes back to natural order
    full = np.kron(op.matrix, np.eye(rest_dim))
    order = sites + rest
    dims_in_order = [space.dims[s] for s in order]
    t = full.reshape(dims_in_order + dims_in_order)
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + i for i in inv])
    return Operator(space, t.reshape(space.total_dim, space.total_dim), op.unitary)


def expm_hermitian(h: Operator, scale: float) -> Operator:
    """exp(-i * scale * H) via eigendecomposition of the symmetrized H."""
    if not h.is_hermitian():
        raise ValueError("expm_hermitian needs a Hermitian operator")
    m = (h.matrix + h.matrix.conj().T) / 2
    w, v = np.linalg.eigh(m)
    u = (v * np.exp(-1j * scale * w)) @ v.conj().T
    return Operator(h.space, u, unitary=True)


def apply(state: QuantumState, u: Operator) -> QuantumState:
    if state.space != u.space:
        raise ValueError(f"space mismatch: {state.space.dims} vs {u.space.dims}")
    m = u.matrix
    if state.is_pure:
        out = m @ state.data
        return QuantumState(state.space, out / np.linalg.norm(out))
    rho = m @ state.data @ m.conj().T
    rho = (rho + rho.conj().T) / 2
    return QuantumState(state.space, rho / np.trace(rho).real)


def expectation(state: QuantumState, obs: Operator) -> float:
    if state.space != obs.space:
        raise ValueError(f"space mismatch: {state.space.dims} vs {obs.space.dims}")
    if not obs.is_hermitian():
        raise ValueError("observable must be Hermitian")
    if state.is_pure:
        return float(np.real(state.data.conj() @ obs.matrix @ state.data))
    return float(np.real(np.trace(state.data @ obs.matrix)))


def born_probabilities(state: QuantumState) -> np.ndarray:
    """Outcome probabilities in flat-index order (see ``MixedRadixSpace.labels``)."""
    if state.is_pure:
        p = np.abs(state.data) ** 2
    else:
        p = np.clip(np.real(np.diag(state.data)), 0.0, None)
    return p / p.sum()


def phase_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Max-abs distance between two matrices after removing the best global phase."""
    overlap = np.vdot(v, u)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(u - phase * v)))
