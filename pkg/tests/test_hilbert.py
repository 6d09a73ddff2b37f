import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qutrit_toffoli.gates import PAULI, cnot_qubits, subspace_pauli, toffoli, x_plus
from qutrit_toffoli.hilbert import (
    MixedRadixSpace,
    Operator,
    QuantumState,
    apply,
    basis_state,
    born_probabilities,
    embed,
    expectation,
    expm_hermitian,
    identity,
    kron,
)

from conftest import random_state, random_unitary

SPACE = MixedRadixSpace((2, 3, 2))


def op(dims, m, unitary=False):
    return Operator(MixedRadixSpace(tuple(dims)), m, unitary)


class TestSpace:
    def test_ordering_convention(self):
        assert SPACE.total_dim == 12
        assert SPACE.index((1, 2, 1)) == 1 * 6 + 2 * 2 + 1
        assert SPACE.digits(11) == (1, 2, 1)

    @pytest.mark.parametrize("dims", [(), (4,), (2, 1), (3, 5)])
    def test_invalid_dims(self, dims):
        with pytest.raises(ValueError):
            MixedRadixSpace(dims)

    def test_digit_out_of_range(self):
        with pytest.raises(ValueError):
            SPACE.index((0, 3, 0))

    def test_labels_follow_index(self):
        labels = SPACE.labels()
        assert len(labels) == 12
        for i, lab in enumerate(labels):
            assert tuple(int(c) for c in lab) == SPACE.digits(i)

    @given(st.lists(st.sampled_from([2, 3]), min_size=1, max_size=4))
    def test_index_digits_roundtrip(self, dims):
        sp = MixedRadixSpace(tuple(dims))
        for i in range(sp.total_dim):
            assert sp.index(sp.digits(i)) == i


class TestOperatorAndState:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            op((2, 3), np.eye(5))

    def test_unitary_flag_checked(self):
        with pytest.raises(ValueError):
            op((2,), np.diag([1.0, 2.0]), unitary=True)

    @pytest.mark.parametrize(
        "data",
        [
            np.array([1.0, 1.0, 0.0]),
            np.diag([0.5, 0.6, 0.0]),
            np.array([[0.5, 0.5j, 0], [0.5j, 0.5, 0], [0, 0, 0]]),
            np.diag([1.2, -0.2, 0.0]),
        ],
    )
    def test_invalid_states(self, data):
        with pytest.raises(ValueError):
            QuantumState(MixedRadixSpace((3,)), data)

    def test_immutable(self):
        u = identity((2,))
        with pytest.raises(ValueError):
            u.matrix[0, 0] = 2


class TestKron:
    def test_identities(self):
        out = kron(identity((2,)), identity((3,)))
        assert out.space.dims == (2, 3)
        assert np.array_equal(out.matrix, np.eye(6))

    def test_z_times_x(self):
        out = kron(op((2,), PAULI["z"]), op((2,), PAULI["x"])).matrix
        expected = np.zeros((4, 4))
        expected[0, 1] = expected[1, 0] = 1
        expected[2, 3] = expected[3, 2] = -1
        assert np.array_equal(out, expected)

    def test_qutrit_zx_blocks(self):
        zx = kron(op((3,), subspace_pauli("z", (0, 1))), op((3,), subspace_pauli("x", (0, 1)))).matrix
        x3 = subspace_pauli("x", (0, 1))
        assert np.array_equal(zx[0:3, 0:3], x3)
        assert np.array_equal(zx[3:6, 3:6], -x3)
        assert np.array_equal(zx[6:9, 6:9], np.zeros((3, 3)))


def embed_oracle(m: np.ndarray, sites, dims) -> np.ndarray:
    """Element-by-element construction from the definition."""
    sp = MixedRadixSpace(tuple(dims))
    out = np.zeros((sp.total_dim, sp.total_dim), dtype=complex)
    sub = MixedRadixSpace(tuple(dims[s] for s in sites))
    for i in range(sp.total_dim):
        for j in range(sp.total_dim):
            di, dj = sp.digits(i), sp.digits(j)
            if any(di[s] != dj[s] for s in range(len(dims)) if s not in sites):
                continue
            out[i, j] = m[sub.index([di[s] for s in sites]), sub.index([dj[s] for s in sites])]
    return out


class TestEmbed:
    def test_single_site(self):
        out = embed(op((2,), PAULI["x"]), [2], SPACE).matrix
        assert np.array_equal(out, np.kron(np.eye(6), PAULI["x"]))

    def test_identity(self):
        assert np.array_equal(embed(identity((3,)), [1], SPACE).matrix, np.eye(12))

    def test_non_adjacent_cnot(self):
        out = embed(cnot_qubits(), [0, 2], SPACE).matrix
        assert np.array_equal(out, embed_oracle(cnot_qubits().matrix, [0, 2], SPACE.dims))
        # |1 c2 0> -> |1 c2 1> for every c2
        for c2 in range(3):
            assert out[SPACE.index((1, c2, 1)), SPACE.index((1, c2, 0))] == 1

    def test_reversed_site_order(self, rng):
        u = random_unitary(6, rng)
        out = embed(op((2, 3), u), [2, 1], MixedRadixSpace((3, 3, 2))).matrix
        assert np.allclose(out, embed_oracle(u, [2, 1], (3, 3, 2)))

    @pytest.mark.parametrize(
        "sites, dims",
        [([1, 1], (2, 2)), ([0, 3], (2, 2)), ([0], (3,))],
    )
    def test_errors(self, sites, dims):
        with pytest.raises(ValueError):
            embed(op(dims, np.eye(int(np.prod(dims)))), sites, SPACE)

    @given(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2**32 - 1))
    def test_disjoint_supports_commute(self, i, j, seed):
        if i == j:
            return
        rng = np.random.default_rng(seed)
        a = embed(op((SPACE.dims[i],), random_unitary(SPACE.dims[i], rng)), [i], SPACE).matrix
        b = embed(op((SPACE.dims[j],), random_unitary(SPACE.dims[j], rng)), [j], SPACE).matrix
        assert np.allclose(a @ b, b @ a, atol=1e-12)

    @given(st.permutations([0, 1, 2]), st.integers(0, 2**32 - 1))
    def test_matches_oracle(self, perm, seed):
        rng = np.random.default_rng(seed)
        sites = list(perm[:2])
        dims = tuple(SPACE.dims[s] for s in sites)
        u = random_unitary(int(np.prod(dims)), rng)
        assert np.allclose(embed(op(dims, u), sites, SPACE).matrix, embed_oracle(u, sites, SPACE.dims))


class TestExpm:
    def test_zero_scale(self):
        h = op((2,), PAULI["x"])
        assert np.allclose(expm_hermitian(h, 0.0).matrix, np.eye(2))

    def test_ry_pi(self):
        out = expm_hermitian(op((2,), PAULI["y"]), np.pi / 2).matrix
        assert np.allclose(out, [[0, -1], [1, 0]], atol=1e-12)

    def test_qutrit_zx(self):
        zx = np.kron(subspace_pauli("z", (0, 1)), subspace_pauli("x", (0, 1)))
        u = expm_hermitian(op((3, 3), zx), np.pi / 2).matrix
        x3 = subspace_pauli("x", (0, 1))
        # exp(-iπ/2 ±X) on levels 0,1 is ∓iX; level 2 is untouched
        rot = lambda s: np.diag([0, 0, 1]) - 1j * s * x3
        assert np.allclose(u[0:3, 0:3], rot(1))
        assert np.allclose(u[3:6, 3:6], rot(-1))
        assert np.allclose(u[6:9, 6:9], np.eye(3))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            expm_hermitian(op((2,), np.array([[0, 1], [0, 0]])), 1.0)

    @given(st.floats(-5, 5), st.integers(0, 2**32 - 1))
    def test_inverse_and_commuting_sum(self, s, seed):
        rng = np.random.default_rng(seed)
        a = np.diag(rng.normal(size=6))
        b = np.diag(rng.normal(size=6))
        v = random_unitary(6, rng)
        a, b = v @ a @ v.conj().T, v @ b @ v.conj().T  # commuting pair
        ha, hb = op((2, 3), a), op((2, 3), b)
        u = expm_hermitian(ha, s)
        assert np.allclose(u.matrix @ expm_hermitian(ha, -s).matrix, np.eye(6), atol=1e-10)
        lhs = expm_hermitian(op((2, 3), a + b), s).matrix
        assert np.allclose(lhs, u.matrix @ expm_hermitian(hb, s).matrix, atol=1e-9)


class TestMeasurement:
    def test_apply_xplus(self):
        out = apply(basis_state((3,), [0]), x_plus())
        assert np.allclose(out.data, [0, 1, 0])

    def test_apply_toffoli(self):
        out = apply(basis_state((2, 2, 2), [1, 1, 0]), toffoli())
        assert np.allclose(born_probabilities(out), np.eye(8)[7])

    @pytest.mark.parametrize("psi, z", [([1, 0], 1.0), (np.array([1, 1]) / np.sqrt(2), 0.0)])
    def test_z_expectation(self, psi, z):
        assert expectation(QuantumState(MixedRadixSpace((2,)), psi), op((2,), PAULI["z"])) == pytest.approx(z, abs=1e-12)

    def test_expectation_errors(self):
        s = basis_state((2,), [0])
        with pytest.raises(ValueError):
            expectation(s, op((2,), np.array([[0, 1], [0, 0]])))
        with pytest.raises(ValueError):
            expectation(s, identity((3,)))

    def test_qutrit_superposition(self):
        s = QuantumState(MixedRadixSpace((3,)), np.array([1, 0, 1]) / np.sqrt(2))
        assert np.allclose(born_probabilities(s), [0.5, 0, 0.5])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_norm_preserved(self, seed, n_gates):
        rng = np.random.default_rng(seed)
        pure = QuantumState(SPACE, random_state(12, rng))
        mixed = QuantumState(SPACE, np.diag(rng.dirichlet(np.ones(12))))
        for _ in range(n_gates):
            u = op(SPACE.dims, random_unitary(12, rng), unitary=True)
            pure, mixed = apply(pure, u), apply(mixed, u)
        assert abs(np.linalg.norm(pure.data) - 1) < 1e-10
        assert abs(np.trace(mixed.data).real - 1) < 1e-10
        p = born_probabilities(pure)
        assert np.allclose(p, np.abs(pure.data) ** 2) and abs(p.sum() - 1) < 1e-12
