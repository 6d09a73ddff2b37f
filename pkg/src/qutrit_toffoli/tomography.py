"""Three-qubit process tomography, readout-error mitigation and truth tables.

Choi convention: J = Σ_ij |i><j| ⊗ E(|i><j|) (input ⊗ output), so a
trace-preserving channel has Tr_out J = I and Tr J = d.

Outcome strings are written c1 c2 t, most significant first, e.g. "110".
Leaked population (a qutrit found in |2>) is not a qubit outcome: it is
dropped, so probabilities are counts / shots and leakage shows up as a
trace deficit.
"""
from __future__ import annotations

import itertools
import json
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .gates import PAULI, rotation_2x2, toffoli
from .hilbert import Operator
from .noise import ConfusionMatrix, apply_site_matrices

N_QUBITS = 3
DIM = 2**N_QUBITS
PREPS = ("0", "1", "+", "+i")
BASES = ("X", "Y", "Z")
OUTCOMES = tuple("".join(b) for b in itertools.product("01", repeat=N_QUBITS))

# preparation rotations applied to |0>
PREP_ROTATIONS = {
    "0": np.eye(2, dtype=complex),
    "1": rotation_2x2("y", np.pi),
    "+": rotation_2x2("y", np.pi / 2),
    "+i": rotation_2x2("x", -np.pi / 2),
}
# pre-measurement rotations that map the basis onto Z
MEAS_ROTATIONS = {
    "X": rotation_2x2("y", -np.pi / 2),
    "Y": rotation_2x2("x", np.pi / 2),
    "Z": np.eye(2, dtype=complex),
}

Executor = Callable[[tuple, int], Mapping[str, int]]


# channel helpers ----------------------------------------------------------------

def choi_from_kraus(kraus: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    ks = [np.asarray(kraus)] if np.ndim(kraus) == 2 else [np.asarray(k) for k in kraus]
    d = ks[0].shape[1]
    out = np.zeros((d * d, d * d), dtype=complex)
    for k in ks:
        v = k.T.reshape(-1)  # Σ_i |i> ⊗ K|i>
        out += np.outer(v, v.conj())
    return out


def choi_from_unitary(u: Operator | np.ndarray) -> np.ndarray:
    return choi_from_kraus(u.matrix if isinstance(u, Operator) else u)


def depolarize(choi: np.ndarray, p: float) -> np.ndarray:
    """Choi of ρ -> (1-p) E(ρ) + p Tr(ρ) I/d."""
    d = int(round(np.sqrt(choi.shape[0])))
    return (1 - p) * choi + p * np.eye(d * d) / d


def apply_choi(choi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    j4 = choi.reshape(d, d, d, d)
    return np.einsum("ij,iojp->op", rho, j4)


def partial_trace_output(choi: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(choi.shape[0])))
    return np.einsum("iojo->ij", choi.reshape(d, d, d, d))


def pauli_strings(n: int = N_QUBITS) -> tuple[list[str], np.ndarray]:
    labels, mats = [], []
    for combo in itertools.product("ixyz", repeat=n):
        m = np.array([[1.0 + 0j]])
        for c in combo:
            m = np.kron(m, PAULI[c])
        labels.append("".join(combo).upper())
        mats.append(m)
    return labels, np.array(mats)


PAULI_LABELS, PAULI_MATS = pauli_strings()


def ptm_from_choi(choi: np.ndarray) -> np.ndarray:
    """R_ij = Tr(P_i E(P_j)) / d over the lexicographic Pauli strings."""
    d = int(round(np.sqrt(choi.shape[0])))
    _, paulis = pauli_strings(int(np.log2(d)))
    e = np.einsum("kij,iojp->kop", paulis, choi.reshape(d, d, d, d))
    return np.real(np.einsum("lpo,kop->lk", paulis, e)) / d


# settings ---------------------------------------------------------------------

@dataclass(frozen=True)
class Setting:
    preps: tuple[str, ...]
    meas: tuple[str, ...]

    def key(self) -> str:
        return ",".join(self.preps) + "|" + ",".join(self.meas)


def qpt_settings() -> list[Setting]:
    """All 4^3 * 3^3 = 1728 settings, preparation-major lexicographic order."""
    return [
        Setting(p, m)
        for p in itertools.product(PREPS, repeat=N_QUBITS)
        for m in itertools.product(BASES, repeat=N_QUBITS)
    ]


def _kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def _prep_states() -> np.ndarray:
    """(64, 8, 8) input density matrices in preparation order."""
    zero = np.array([1.0, 0.0], dtype=complex)
    single = {p: np.outer(PREP_ROTATIONS[p] @ zero, (PREP_ROTATIONS[p] @ zero).conj()) for p in PREPS}
    return _readonly(np.array([_kron_all(single[p] for p in ps) for ps in itertools.product(PREPS, repeat=N_QUBITS)]))


@lru_cache(maxsize=None)
def _meas_unitaries() -> np.ndarray:
    return _readonly(np.array([_kron_all(MEAS_ROTATIONS[b] for b in ms) for ms in itertools.product(BASES, repeat=N_QUBITS)]))


def setting_probabilities(choi: np.ndarray) -> np.ndarray:
    """Qubit-outcome probabilities for every setting, shape (64 preps, 27 bases, 8).

    Rows may sum to less than 1 when the channel leaks.
    """
    rhos = np.einsum("pij,iojq->poq", _prep_states(), choi.reshape(DIM, DIM, DIM, DIM))
    us = _meas_unitaries()
    probs = np.real(np.einsum("mao,poq,maq->pma", us, rhos, us.conj()))
    return np.clip(probs, 0.0, None)


# datasets -----------------------------------------------------------------------

@dataclass
class QPTDataset:
    """Per-setting outcome frequencies in :func:`qpt_settings` order.

    ``shots`` is None for exact probabilities.
    """

    probabilities: np.ndarray  # (1728, 8)
    shots: int | None = None
    counts: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.probabilities.shape != (len(qpt_settings()), DIM):
            raise ValueError(f"need {len(qpt_settings())} settings with {DIM} outcomes each")

    def records(self) -> list[dict]:
        out = []
        for k, s in enumerate(qpt_settings()):
            rec = {"preps": list(s.preps), "meas": list(s.meas), "shots": self.shots}
            if self.counts is not None:
                rec["counts"] = dict(sorted(self.counts[k].items()))
            else:
                rec["probabilities"] = {o: float(p) for o, p in zip(OUTCOMES, self.probabilities[k])}
            out.append(rec)
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "QPTDataset":
        index = {s.key(): k for k, s in enumerate(qpt_settings())}
        probs = np.full((len(index), DIM), np.nan)
        counts: list = [None] * len(index)
        shots = None
        for rec in records:
            key = Setting(tuple(rec["preps"]), tuple(rec["meas"])).key()
            if key not in index:
                raise ValueError(f"unknown setting {key}")
            k = index[key]
            if "counts" in rec:
                shots = int(rec["shots"])
                if shots <= 0:
                    raise ValueError("shots must be positive")
                counts[k] = {o: int(c) for o, c in rec["counts"].items()}
                probs[k] = [counts[k].get(o, 0) / shots for o in OUTCOMES]
            else:
                probs[k] = [rec["probabilities"].get(o, 0.0) for o in OUTCOMES]
        missing = np.flatnonzero(np.isnan(probs[:, 0]))
        if missing.size:
            raise ValueError(f"{missing.size} settings missing from the dataset")
        return cls(probs, shots, counts if shots is not None else None)

    @classmethod
    def load(cls, path) -> "QPTDataset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_records(json.loads(line) for line in fh if line.strip())


def simulate_qpt(
    choi: np.ndarray,
    shots: int | None = None,
    seed: int | np.random.Generator | None = None,
    confusion: ConfusionMatrix | None = None,
) -> QPTDataset:
    """Tomography data for a (possibly leaky) channel on the three qubits.

    Readout confusion acts on the qubit outcomes; leaked population is
    sampled as its own category and then discarded.
    """
    probs = setting_probabilities(choi).reshape(-1, DIM)
    if confusion is not None:
        probs = np.array([apply_site_matrices(p, confusion.matrices) for p in probs])
    if shots is None:
        return QPTDataset(probs)
    if shots <= 0:
        raise ValueError("shots must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    leak = np.clip(1.0 - probs.sum(axis=1), 0.0, None)
    full = np.column_stack([probs, leak])
    full /= full.sum(axis=1, keepdims=True)
    n = rng.multinomial(shots, full)[:, :DIM]
    counts = [{o: int(c) for o, c in zip(OUTCOMES, row) if c} for row in n]
    return QPTDataset(n / shots, shots, counts)


# readout-error mitigation ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class REMCalibration:
    matrices: tuple
    shots_per_setting: int

    def __post_init__(self):
        for m in self.matrices:
            if not np.allclose(np.sum(m, axis=0), 1.0, atol=1e-12):
                raise ValueError("confusion columns must sum to 1")
            if np.any(np.diag(m) <= 0.5):
                raise ValueError("confusion matrix is not diagonally dominant")
            if abs(np.linalg.det(m)) < 1e-12:
                raise ValueError("confusion matrix is singular")

    @classmethod
    def from_confusion(cls, confusion: ConfusionMatrix, shots: int = 0) -> "REMCalibration":
        return cls(tuple(np.array(m) for m in confusion.matrices), shots)


def rem_calibrate(executor: Executor, shots: int = 2048) -> REMCalibration:
    """Per-qubit confusion from preparing |000> and |111> (tensor-product model)."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    marg = []
    for bit in (0, 1):
        counts = executor((bit,) * N_QUBITS, shots)
        total = sum(counts.values())
        if total == 0:
            raise ValueError("calibration run returned no counts")
        p1 = np.zeros(N_QUBITS)
        for outcome, c in counts.items():
            p1 += c * np.array([int(ch) for ch in outcome])
        marg.append(p1 / total)
    mats = tuple(np.array([[1 - marg[0][s], 1 - marg[1][s]], [marg[0][s], marg[1][s]]]) for s in range(N_QUBITS))
    return REMCalibration(mats, shots)


def project_simplex(v: np.ndarray, mass: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {x >= 0, Σx = mass} (sort-based)."""
    v = np.asarray(v, dtype=float)
    if mass <= 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def rem_apply(distribution: Sequence[float], cal: REMCalibration) -> np.ndarray:
    """(⊗ M^-1) · p, projected back onto the simplex of the same total mass."""
    p = np.asarray(distribution, dtype=float)
    inverses = [np.linalg.inv(m) for m in cal.matrices]
    q = apply_site_matrices(p, inverses)
    return project_simplex(q, float(p.sum()))


def mitigate_dataset(data: QPTDataset, cal: REMCalibration) -> QPTDataset:
    return QPTDataset(np.array([rem_apply(p, cal) for p in data.probabilities]), data.shots, data.counts)


# reconstruction -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProcessEstimate:
    choi: np.ndarray = field(repr=False)
    ptm: np.ndarray = field(repr=False)
    cp_residual: float  # negativity of the linear-inversion estimate
    tp_residual: float  # ||Tr_out J - I||_F of the linear-inversion estimate
    iterations: int = 0
    converged: bool = True


def _dual_frame() -> np.ndarray:
    """Duals D_k with Tr(D_k† ρ_j) = δ_kj for the single-qubit preparations."""
    zero = np.array([1.0, 0.0], dtype=complex)
    basis = np.array([np.outer(PREP_ROTATIONS[p] @ zero, (PREP_ROTATIONS[p] @ zero).conj()) for p in PREPS])
    b = basis.reshape(4, 4).T  # columns are vec(ρ_k)
    dual = np.linalg.inv(b).conj().T  # columns are vec(D_k)
    return dual.T.reshape(4, 2, 2)


@lru_cache(maxsize=None)
def _pauli_weights() -> np.ndarray:
    """(64 Paulis, 27 bases, 8 outcomes) weights turning probabilities into Pauli means."""
    w = np.zeros((len(PAULI_LABELS), 3**N_QUBITS, DIM))
    bases = list(itertools.product(BASES, repeat=N_QUBITS))
    bits = np.array([[int(ch) for ch in o] for o in OUTCOMES])
    for k, label in enumerate(PAULI_LABELS):
        compatible = [m for m, b in enumerate(bases) if all(l == "I" or l == bb for l, bb in zip(label, b))]
        sign = np.prod([np.where(bits[:, s] == 1, -1.0, 1.0) for s in range(N_QUBITS) if label[s] != "I"], axis=0) \
            if any(l != "I" for l in label) else np.ones(DIM)
        for m in compatible:
            w[k, m] = sign / len(compatible)
    return _readonly(w)


@lru_cache(maxsize=None)
def _duals() -> np.ndarray:
    single = _dual_frame()
    return _readonly(np.array([_kron_all(single[PREPS.index(p)] for p in ps) for ps in itertools.product(PREPS, repeat=N_QUBITS)]))


def linear_inversion(data: QPTDataset) -> np.ndarray:
    """Choi matrix J = Σ_k conj(D_k) ⊗ σ_k from Pauli means averaged over compatible bases."""
    q = data.probabilities.reshape(4**N_QUBITS, 3**N_QUBITS, DIM)
    expect = np.einsum("pma,kma->pk", q, _pauli_weights())
    sigma = np.einsum("pk,kab->pab", expect, PAULI_MATS) / DIM
    j = np.einsum("pij,pab->iajb", _duals().conj(), sigma).reshape(DIM * DIM, DIM * DIM)
    return (j + j.conj().T) / 2


def _project_psd(j: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(j)
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def _project_tp(j: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(j.shape[0])))
    return j - np.kron(partial_trace_output(j) - np.eye(d), np.eye(d)) / d


def project_cptp(j: np.ndarray, tol: float = 1e-7, max_iter: int = 10_000) -> tuple[np.ndarray, int, bool]:
    """Dykstra alternating projections between the PSD cone and the TP plane.

    The last PSD iterate is then rescaled by (T^{-1/2} ⊗ I) on both sides,
    T = Tr_out J, which keeps it PSD and makes it exactly TP.
    """
    d = int(round(np.sqrt(j.shape[0])))
    x = _project_tp(j)
    y = x
    p = np.zeros_like(j)
    q = np.zeros_like(j)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y = _project_psd(x + p)
        p = x + p - y
        x_new = _project_tp(y + q)
        q = y + q - x_new
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step < tol:
            converged = True
            break
    t = partial_trace_output(y)
    w, v = np.linalg.eigh((t + t.conj().T) / 2)
    if np.min(w) <= 0:
        return x, it, False
    s = np.kron((v / np.sqrt(w)) @ v.conj().T, np.eye(d))
    out = s @ y @ s.conj().T
    return (out + out.conj().T) / 2, it, converged


def _likelihood_terms(j: np.ndarray, freqs: np.ndarray) -> tuple[float, np.ndarray]:
    """Negative log-likelihood and K = Σ (f/p) ρ^T ⊗ Π over all settings and outcomes."""
    rhos = _prep_states()
    us = _meas_unitaries()
    p = np.clip(setting_probabilities(j), 1e-12, None)
    nll = float(-np.sum(freqs * np.log(p)))
    m = np.einsum("pma,mao,maq->poq", freqs / p, us.conj(), us, optimize=True)
    k = np.einsum("pji,poq->iojq", rhos, m, optimize=True).reshape(DIM * DIM, DIM * DIM)
    return nll, (k + k.conj().T) / 2


def mle_refine(
    j0: np.ndarray,
    data: QPTDataset,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> tuple[np.ndarray, int, bool]:
    """Maximum-likelihood channel by the iterative J -> Λ^-1 K J K Λ^-1 update.

    Λ = (Tr_out K J K)^{1/2} ⊗ I keeps every iterate completely positive and
    trace preserving.  Starts from ``j0`` mixed with 10 % of the fully
    depolarizing channel so no direction is pinned at zero.  Stops when the
    relative change of the negative log-likelihood falls below ``tol``.
    """
    d = DIM
    freqs = data.probabilities.reshape(4**N_QUBITS, 3**N_QUBITS, DIM)
    j = 0.9 * j0 + 0.1 * np.eye(d * d) / d
    cur, k = _likelihood_terms(j, freqs)
    for it in range(1, max_iter + 1):
        m = k @ j @ k
        lam = partial_trace_output(m)
        w, v = np.linalg.eigh((lam + lam.conj().T) / 2)
        s = np.kron((v / np.sqrt(w)) @ v.conj().T, np.eye(d))
        j = s @ m @ s
        j = (j + j.conj().T) / 2
        new, k = _likelihood_terms(j, freqs)
        if abs(cur - new) < tol * abs(cur):
            return j, it, True
        cur = new
    return j, max_iter, False


def reconstruct_process(
    data: QPTDataset,
    rem: REMCalibration | None = None,
    method: str = "mle",
    tol: float = 1e-7,
    max_iter: int = 10_000,
) -> ProcessEstimate:
    """REM (optional), linear inversion, CPTP projection, then MLE refinement.

    ``method="projection"`` stops after the projection.  Residuals describe
    the linear-inversion estimate, i.e. how far the data sit from a CPTP map.
    """
    if method not in ("mle", "projection"):
        raise ValueError("method must be 'mle' or 'projection'")
    if rem is not None:
        data = mitigate_dataset(data, rem)
    raw = linear_inversion(data)
    d = DIM
    cp = float(max(0.0, -np.min(np.linalg.eigvalsh(raw))))
    tp = float(np.linalg.norm(partial_trace_output(raw) - np.eye(d)))
    if cp < 1e-12 and tp < 1e-12:
        return ProcessEstimate(raw, ptm_from_choi(raw), cp, tp, 0, True)
    choi, it, ok = project_cptp(raw, tol, max_iter)
    if method == "mle" and ok:
        choi, it_mle, ok = mle_refine(choi, data, max_iter=max_iter)
        it += it_mle
    return ProcessEstimate(choi, ptm_from_choi(choi), cp, tp, it, ok)


# figures of merit -------------------------------------------------------------------

def process_fidelity(choi: np.ndarray, ideal: Operator | np.ndarray) -> float:
    u = ideal.matrix if isinstance(ideal, Operator) else np.asarray(ideal)
    d = u.shape[0]
    if choi.shape != (d * d, d * d):
        raise ValueError(f"Choi of shape {choi.shape} does not match a {d}-dimensional unitary")
    v = u.T.reshape(-1)
    return float(np.real(v.conj() @ choi @ v)) / d**2


def avg_gate_fidelity(est: ProcessEstimate | np.ndarray, ideal: Operator | np.ndarray) -> float:
    choi = est.choi if isinstance(est, ProcessEstimate) else est
    d = int(round(np.sqrt(choi.shape[0])))
    f = (d * process_fidelity(choi, ideal) + 1) / (d + 1)
    return float(np.clip(f, 0.0, 1.0))


def ptm_difference(est: ProcessEstimate | np.ndarray, ideal: Operator | np.ndarray) -> np.ndarray:
    ptm = est.ptm if isinstance(est, ProcessEstimate) else ptm_from_choi(est)
    u = ideal.matrix if isinstance(ideal, Operator) else np.asarray(ideal)
    return ptm - ptm_from_choi(choi_from_unitary(u))


# truth tables and executors -----------------------------------------------------------

def counts_to_distribution(counts: Mapping[str, int], shots: int) -> np.ndarray:
    return np.array([counts.get(o, 0) for o in OUTCOMES], dtype=float) / shots


def truth_table_fidelity(
    executor: Executor,
    shots: int = 1024,
    rem: REMCalibration | None = None,
    ideal: Operator | None = None,
) -> float:
    """Mean probability of the ideal output over the 8 classical inputs."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    u = (ideal or toffoli()).matrix
    total = 0.0
    for k, bits in enumerate(itertools.product((0, 1), repeat=N_QUBITS)):
        p = counts_to_distribution(executor(bits, shots), shots)
        if rem is not None:
            p = rem_apply(p, rem)
        total += p[int(np.argmax(np.abs(u[:, k])))]
    return total / DIM


def channel_executor(
    choi: np.ndarray,
    confusion: ConfusionMatrix | None = None,
    seed: int | np.random.Generator | None = None,
) -> Executor:
    """Executor running a channel on classical inputs with sampled readout.

    Leaked population is sampled and dropped, as for tomography.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def run(bits: tuple, shots: int) -> dict:
        k = int("".join(str(b) for b in bits), 2)
        rho = np.zeros((DIM, DIM), dtype=complex)
        rho[k, k] = 1.0
        p = np.clip(np.real(np.diag(apply_choi(choi, rho))), 0.0, None)
        if confusion is not None:
            p = apply_site_matrices(p, confusion.matrices)
        leak = max(0.0, 1.0 - p.sum())
        full = np.append(p, leak)
        n = rng.multinomial(shots, full / full.sum())[:DIM]
        return {o: int(c) for o, c in zip(OUTCOMES, n) if c}

    return run
