import functools
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qutrit_toffoli import tomography as T
from qutrit_toffoli.gates import PAULI, toffoli
from qutrit_toffoli.noise import SYNTHETIC_CONFUSION, ConfusionMatrix, apply_confusion

from conftest import random_unitary

CCNOT = toffoli()
J_CCNOT = T.choi_from_unitary(CCNOT)
XII = np.kron(PAULI["x"], np.eye(4))


def unitary_fidelity_oracle(u, v):
    """Process fidelity between two unitaries from the trace overlap."""
    return abs(np.trace(u.conj().T @ v)) ** 2 / len(u) ** 2


def ptm_oracle(u):
    _, paulis = T.pauli_strings()
    return np.real(np.array([[np.trace(pi @ u @ pj @ u.conj().T) for pj in paulis] for pi in paulis])) / 8


class TestChannels:
    def test_choi_trace_and_tp(self):
        assert np.trace(J_CCNOT).real == pytest.approx(8.0)
        assert np.allclose(T.partial_trace_output(J_CCNOT), np.eye(8))

    @given(st.integers(0, 2**32 - 1))
    def test_apply_choi_matches_conjugation(self, seed):
        rng = np.random.default_rng(seed)
        u = random_unitary(8, rng)
        psi = rng.normal(size=8) + 1j * rng.normal(size=8)
        rho = np.outer(psi, psi.conj()) / np.vdot(psi, psi)
        assert np.allclose(T.apply_choi(T.choi_from_unitary(u), rho), u @ rho @ u.conj().T, atol=1e-12)

    def test_depolarize_fully(self):
        out = T.apply_choi(T.depolarize(J_CCNOT, 1.0), np.diag([1.0] + [0] * 7))
        assert np.allclose(out, np.eye(8) / 8)

    def test_ptm_identity(self):
        assert np.allclose(T.ptm_from_choi(T.choi_from_unitary(np.eye(8))), np.eye(64))

    @given(st.integers(0, 2**32 - 1))
    def test_ptm_oracle(self, seed):
        u = random_unitary(8, np.random.default_rng(seed))
        assert np.allclose(T.ptm_from_choi(T.choi_from_unitary(u)), ptm_oracle(u), atol=1e-12)


class TestSettings:
    def test_count_and_unique(self):
        s = T.qpt_settings()
        assert len(s) == 1728
        assert len({x.key() for x in s}) == 1728

    def test_first(self):
        s = T.qpt_settings()[0]
        assert s.preps == ("0", "0", "0") and s.meas == ("X", "X", "X")

    def test_order_prep_major(self):
        s = T.qpt_settings()
        assert s[26].meas == ("Z", "Z", "Z") and s[27].preps == ("0", "0", "1")

    def test_probabilities_brute_force(self):
        # setting by setting from explicit states and rotations
        probs = T.setting_probabilities(J_CCNOT)
        zero = np.array([1.0, 0.0])
        for k in (0, 77, 1000, 1727):
            s = T.qpt_settings()[k]
            psi = functools.reduce(np.kron, [T.PREP_ROTATIONS[p] @ zero for p in s.preps])
            r = T._kron_all(T.MEAS_ROTATIONS[m] for m in s.meas)
            expected = np.abs(r @ CCNOT.matrix @ psi) ** 2
            assert np.allclose(probs.reshape(-1, 8)[k], expected, atol=1e-12)

    def test_measurement_bases(self):
        plus = np.array([1, 1]) / np.sqrt(2)
        plus_i = np.array([1, 1j]) / np.sqrt(2)
        assert abs((T.MEAS_ROTATIONS["X"] @ plus)[0]) == pytest.approx(1.0)
        assert abs((T.MEAS_ROTATIONS["Y"] @ plus_i)[0]) == pytest.approx(1.0)


class TestReconstruction:
    def test_exact_ccnot(self):
        est = T.reconstruct_process(T.simulate_qpt(J_CCNOT))
        assert T.avg_gate_fidelity(est, CCNOT) >= 1 - 1e-6

    def test_exact_identity(self):
        est = T.reconstruct_process(T.simulate_qpt(T.choi_from_unitary(np.eye(8))))
        assert np.allclose(est.choi, T.choi_from_unitary(np.eye(8)), atol=1e-6)
        assert T.avg_gate_fidelity(est, np.eye(8)) == pytest.approx(1.0, abs=1e-6)

    def test_depolarized(self):
        est = T.reconstruct_process(T.simulate_qpt(T.depolarize(J_CCNOT, 0.1)))
        assert T.process_fidelity(est.choi, CCNOT) == pytest.approx(0.9 + 0.1 / 64, abs=0.005)

    @pytest.mark.parametrize("method", ["projection", "mle"])
    def test_sampled_is_cptp(self, method):
        est = T.reconstruct_process(T.simulate_qpt(J_CCNOT, 256, seed=5), method=method)
        assert est.converged
        assert np.allclose(est.choi, est.choi.conj().T, atol=1e-10)
        assert np.linalg.eigvalsh(est.choi).min() >= -1e-8
        assert np.abs(T.partial_trace_output(est.choi) - np.eye(8)).max() <= 1e-6
        assert est.cp_residual > 0

    @settings(max_examples=5)
    @given(st.integers(0, 2**32 - 1))
    def test_adversarial_counts(self, seed):
        rng = np.random.default_rng(seed)
        data = T.QPTDataset(rng.dirichlet(np.ones(8), size=1728), shots=100)
        est = T.reconstruct_process(data, method="projection")
        assert np.linalg.eigvalsh(est.choi).min() >= -1e-8
        assert np.abs(T.partial_trace_output(est.choi) - np.eye(8)).max() <= 1e-6
        assert 0.0 <= T.avg_gate_fidelity(est, CCNOT) <= 1.0

    def test_mle_improves_on_projection(self):
        data = T.simulate_qpt(J_CCNOT, 512, seed=8)
        f_proj = T.avg_gate_fidelity(T.reconstruct_process(data, method="projection"), CCNOT)
        f_mle = T.avg_gate_fidelity(T.reconstruct_process(data, method="mle"), CCNOT)
        assert f_mle > f_proj

    def test_bad_method(self):
        with pytest.raises(ValueError):
            T.reconstruct_process(T.simulate_qpt(J_CCNOT), method="lsq")

    def test_shots_monotonicity(self):
        spread = {}
        for shots in (256, 4096):
            f = [
                T.avg_gate_fidelity(T.reconstruct_process(T.simulate_qpt(J_CCNOT, shots, seed), method="projection"), CCNOT)
                for seed in range(20)
            ]
            spread[shots] = np.var(f)
        assert spread[4096] < spread[256]

    def test_leakage_lowers_trace(self):
        # a channel that loses 10 % of every input
        j = 0.9 * J_CCNOT
        data = T.simulate_qpt(j, 1024, seed=1)
        kept = data.probabilities.sum(axis=1)
        assert abs(kept.mean() - 0.9) < 0.005
        assert np.all(kept < 1.0)


class TestDataset:
    def test_roundtrip(self, tmp_path):
        data = T.simulate_qpt(J_CCNOT, 64, seed=3)
        path = tmp_path / "qpt.jsonl"
        data.save(path)
        back = T.QPTDataset.load(path)
        assert np.array_equal(back.probabilities, data.probabilities)
        assert back.shots == 64

    def test_exact_roundtrip(self, tmp_path):
        data = T.simulate_qpt(J_CCNOT)
        path = tmp_path / "qpt.jsonl"
        data.save(path)
        assert np.allclose(T.QPTDataset.load(path).probabilities, data.probabilities)

    def test_same_seed(self):
        a = T.simulate_qpt(J_CCNOT, 128, seed=9)
        b = T.simulate_qpt(J_CCNOT, 128, seed=9)
        assert a.counts == b.counts

    def test_missing_setting(self):
        recs = T.simulate_qpt(J_CCNOT, 16, seed=0).records()[1:]
        with pytest.raises(ValueError):
            T.QPTDataset.from_records(recs)

    def test_unknown_setting(self):
        recs = T.simulate_qpt(J_CCNOT, 16, seed=0).records()
        recs[0] = dict(recs[0], preps=["0", "0", "-"])
        with pytest.raises(ValueError):
            T.QPTDataset.from_records(recs)

    def test_shape(self):
        with pytest.raises(ValueError):
            T.QPTDataset(np.ones((10, 8)) / 8)

    def test_zero_shots(self):
        with pytest.raises(ValueError):
            T.simulate_qpt(J_CCNOT, 0)


class TestFidelity:
    def test_self(self):
        assert T.avg_gate_fidelity(J_CCNOT, CCNOT) == pytest.approx(1.0)

    def test_depolarizing(self):
        assert T.avg_gate_fidelity(np.eye(64) / 8, CCNOT) == pytest.approx(0.125)

    def test_against_xii(self):
        f_pro = unitary_fidelity_oracle(XII, CCNOT.matrix)
        assert T.avg_gate_fidelity(J_CCNOT, XII) == pytest.approx((8 * f_pro + 1) / 9)
        assert T.avg_gate_fidelity(J_CCNOT, XII) == pytest.approx(1 / 9)

    @given(st.integers(0, 2**32 - 1))
    def test_random_unitaries(self, seed):
        rng = np.random.default_rng(seed)
        u, v = random_unitary(8, rng), random_unitary(8, rng)
        assert T.process_fidelity(T.choi_from_unitary(u), v) == pytest.approx(unitary_fidelity_oracle(v, u), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            T.process_fidelity(J_CCNOT, np.eye(4))


class TestPTMDifference:
    def test_zero(self):
        assert np.allclose(T.ptm_difference(J_CCNOT, CCNOT), 0.0, atol=1e-12)

    @pytest.mark.parametrize("p", [0.05, 0.3])
    def test_depolarizing(self, p):
        diff = T.ptm_difference(T.depolarize(T.choi_from_unitary(np.eye(8)), p), np.eye(8))
        assert diff[0, 0] == pytest.approx(0.0) and np.allclose(diff[0, 1:], 0) and np.allclose(diff[1:, 0], 0)
        assert np.allclose(np.diag(diff)[1:], -p)
        assert np.allclose(diff - np.diag(np.diag(diff)), 0.0, atol=1e-12)

    def test_local_z_error(self):
        err = np.kron(np.eye(4), np.diag([1, np.exp(0.4j)]))
        u = err @ CCNOT.matrix
        diff = T.ptm_difference(T.choi_from_unitary(u), CCNOT)
        oracle = ptm_oracle(u) - ptm_oracle(CCNOT.matrix)
        assert np.abs(diff).max() == pytest.approx(np.abs(oracle).max(), abs=1e-12)
        assert np.allclose(diff, oracle, atol=1e-12)


class TestREM:
    cal = T.REMCalibration.from_confusion(ConfusionMatrix.uniform(3))

    def test_perfect(self):
        cal = T.REMCalibration.from_confusion(ConfusionMatrix.perfect((2, 2, 2)))
        p = np.random.default_rng(0).dirichlet(np.ones(8))
        assert np.allclose(T.rem_apply(p, cal), p)

    @given(st.integers(0, 2**32 - 1))
    def test_roundtrip(self, seed):
        p = np.random.default_rng(seed).dirichlet(np.ones(8) * 0.3)
        noisy = apply_confusion(p, ConfusionMatrix.uniform(3))
        assert np.allclose(T.rem_apply(noisy, self.cal), p, atol=1e-10)

    def test_brute_force_inverse(self):
        p = apply_confusion(np.eye(8)[3], ConfusionMatrix.uniform(3))
        full = np.kron(np.kron(SYNTHETIC_CONFUSION, SYNTHETIC_CONFUSION), SYNTHETIC_CONFUSION)
        tensor = T.apply_site_matrices(p, [np.linalg.inv(SYNTHETIC_CONFUSION)] * 3)
        assert np.allclose(tensor, np.linalg.solve(full, p), atol=1e-12)

    def test_simplex_projection(self):
        q = T.project_simplex(np.array([0.7, 0.5, -0.2]))
        assert q.sum() == pytest.approx(1.0) and np.all(q >= 0)
        assert np.allclose(q, [0.6, 0.4, 0.0])

    @given(st.lists(st.floats(-2, 2), min_size=2, max_size=8))
    def test_simplex_properties(self, v):
        q = T.project_simplex(np.array(v))
        assert q.sum() == pytest.approx(1.0) and np.all(q >= 0)

    def test_calibration_estimates_matrix(self):
        ident = T.choi_from_unitary(np.eye(8))
        cal = T.rem_calibrate(T.channel_executor(ident, ConfusionMatrix.uniform(3), seed=4), 200_000)
        for m in cal.matrices:
            assert np.allclose(m, SYNTHETIC_CONFUSION, atol=0.005)

    def test_calibrated_truth_table(self):
        conf = ConfusionMatrix.uniform(3)
        ident = T.choi_from_unitary(np.eye(8))
        vals = []
        for seed in range(5):
            cal = T.rem_calibrate(T.channel_executor(ident, conf, seed=100 + seed), 2048)
            vals.append(T.truth_table_fidelity(T.channel_executor(J_CCNOT, conf, seed=seed), 1024, cal))
        # the simplex projection after inversion biases F_TT a little below 1;
        # the 40-seed median sits at about 0.995
        assert np.median(vals) >= 0.99

    @pytest.mark.parametrize(
        "m", [np.array([[0.4, 0.6], [0.6, 0.4]]), np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([[0.9, 0.1], [0.2, 0.9]])]
    )
    def test_invalid_calibration(self, m):
        with pytest.raises(ValueError):
            T.REMCalibration((m, m, m), 0)

    def test_zero_shots(self):
        with pytest.raises(ValueError):
            T.rem_calibrate(T.channel_executor(J_CCNOT), 0)


class TestTruthTable:
    @staticmethod
    def fixed(dist_for):
        def run(bits, shots):
            p = dist_for(bits)
            return {o: int(round(shots * x)) for o, x in zip(T.OUTCOMES, p) if x}

        return run

    def test_ideal(self):
        assert T.truth_table_fidelity(T.channel_executor(J_CCNOT, seed=0), 512) == pytest.approx(1.0)

    def test_identity_executor(self):
        ex = self.fixed(lambda bits: np.eye(8)[int("".join(map(str, bits)), 2)])
        assert T.truth_table_fidelity(ex, 1000) == 0.75

    def test_uniform_executor(self):
        ex = self.fixed(lambda bits: np.full(8, 1 / 8))
        assert T.truth_table_fidelity(ex, 800) == 0.125

    def test_zero_shots(self):
        with pytest.raises(ValueError):
            T.truth_table_fidelity(T.channel_executor(J_CCNOT), 0)

    def test_rem_helps_under_confusion(self):
        conf = ConfusionMatrix.uniform(3)
        raw, mit = [], []
        for seed in range(5):
            ex = T.channel_executor(J_CCNOT, conf, seed=seed)
            cache = {}

            def replay(bits, n, ex=ex, cache=cache):
                if bits not in cache:
                    cache[bits] = ex(bits, n)
                return cache[bits]

            cal = T.rem_calibrate(T.channel_executor(T.choi_from_unitary(np.eye(8)), conf, seed=50 + seed), 2048)
            raw.append(T.truth_table_fidelity(replay, 1024))
            mit.append(T.truth_table_fidelity(replay, 1024, cal))
        assert np.mean(mit) > np.mean(raw)

    @pytest.mark.parametrize("bits", list(itertools.product((0, 1), repeat=3)))
    def test_executor_outputs(self, bits):
        counts = T.channel_executor(J_CCNOT, seed=1)(bits, 100)
        c1, c2, t = bits
        assert counts == {f"{c1}{c2}{t ^ (c1 & c2)}": 100}
