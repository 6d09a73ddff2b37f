"""Toffoli constructions and the tools that check them.

Register conventions: the ternary Toffoli lives on (c1, c2, t) with dims
(2, 3, 2); the binary references live on three qubits on a line.  Site 0 is
the most significant digit.

Ternary construction.  X- on c2 sends 0 -> 2 and 1 -> 0, the c1-controlled
R_x^(01)(π) then swaps c2's 0 and 1 when c1 = 1, and X+ maps back.  Net
effect: only |c1 c2> = |11> parks c2 in |2>, so the |2>-controlled NOT on
(c2, t) flips t exactly for that input.  The mirrored block undoes the
routing, and the ±π couplings contribute (-i)(+i) = 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import circuit as C
from .cr import CRParams
from .gates import toffoli, two_controlled_not_ideal, virtual_z_angles
from .hilbert import MixedRadixSpace, Operator

TERNARY_SPACE = MixedRadixSpace((2, 3, 2))
QUBITS3 = MixedRadixSpace((2, 2, 2))
CR_PAIR = MixedRadixSpace((3, 2))
C1, C2, T = 0, 1, 2


# |2>-controlled NOT from two device CNOTs ----------------------------------

def two_cnot_block(
    control: int = 0,
    target: int = 1,
    dd: bool = False,
    space: MixedRadixSpace = CR_PAIR,
    durations: C.DurationTable | None = None,
) -> list[C.Instruction]:
    """CNOT·CNOT, or with DD the echo CNOT · X^(12) · 2T_cnot delay · X^(12) · CNOT.

    In the DD form the two CNOTs stand in for the τ/4 delays of the echo.
    """
    if not dd:
        return [C.cnot(control, target), C.cnot(control, target)]
    table = durations or C.default_durations()
    t_cnot = table.pair(control, target)
    return [
        C.cnot(control, target),
        C.dd_x(control),
        C.delay(control, 2 * t_cnot, tag="dd"),
        C.dd_x(control),
        C.cnot(control, target),
    ]


def control_level_phases(u: np.ndarray, ideal: np.ndarray, control_dim: int = 3) -> np.ndarray:
    """Phase of each control-level block of ``u`` relative to ``ideal`` on a (d, 2) register."""
    out = np.empty(control_dim)
    for level in range(control_dim):
        sl = slice(2 * level, 2 * level + 2)
        out[level] = np.angle(np.trace(ideal[sl, sl].conj().T @ u[sl, sl]))
    return out


def two_cnot_corrections(cr: CRParams = CRParams(), dd: bool = False) -> list[tuple[tuple[int, int], float]]:
    """Virtual-Z angles on the control that remove the block phases of the composite.

    Computed from the CR model, the way a calibrated device would be
    corrected: blocks are (1, 1, -i e^{2iθs}) without DD and (1, -1, i e^{2iθs})
    with DD, θs being the Stark phase per CNOT.
    """
    durations = C.DurationTable(0.0, 0.0, {(0, 1): 1.0})
    circ = C.Circuit(CR_PAIR, two_cnot_block(dd=dd, durations=durations))
    u = C.circuit_unitary(circ, cr).matrix
    phases = control_level_phases(u, two_controlled_not_ideal().matrix)
    return virtual_z_angles(-phases)


def two_controlled_not(
    corrected: bool = False,
    dd: bool = False,
    cr: CRParams = CRParams(),
    durations: C.DurationTable | None = None,
) -> C.Circuit:
    """|2>-controlled NOT on (qutrit control, qubit target) from two device CNOTs."""
    table = durations or C.default_durations()
    body = two_cnot_block(dd=dd, durations=table)
    if corrected:
        body += [C.vz(0, sub, ang, tag="stark") for sub, ang in two_cnot_corrections(cr, dd)]
    return C.Circuit(CR_PAIR, tuple(body)).with_durations(table)


# equivalence checking -------------------------------------------------------

@dataclass(frozen=True)
class Equivalence:
    fidelity: float
    corrections: list  # (site, subspace, angle)
    leakage: float
    status: str  # "ok" or "leakage"


def qubit_indices(space: MixedRadixSpace) -> np.ndarray:
    """Indices of the basis states with every digit in {0, 1}, in binary order."""
    n = space.n_sites
    return np.array([space.index([(k >> (n - 1 - s)) & 1 for s in range(n)]) for k in range(2**n)])


def verify_equivalence(
    circuit: C.Circuit | Operator,
    ideal: Operator,
    qubit_subspace: bool = True,
    cr: CRParams = CRParams(),
    leakage_threshold: float = 1e-9,
) -> Equivalence:
    """Fidelity of ``circuit`` against ``ideal`` after optimal per-site Z corrections.

    The corrections act after the circuit.  With C = U V†, a diagonal error
    D gives C = D, so each site's phase is read off as the circular mean of
    the ratios between entries that differ only in that site's bit.  Sites
    are solved in order and the global phase is discarded.
    """
    u = circuit.matrix if isinstance(circuit, Operator) else C.circuit_unitary(circuit, cr).matrix
    space = circuit.space
    n = space.n_sites
    if qubit_subspace:
        idx = qubit_indices(space)
        u = u[np.ix_(idx, idx)]
    if u.shape != ideal.matrix.shape:
        raise ValueError(f"circuit block {u.shape} does not match ideal {ideal.matrix.shape}")
    dim = u.shape[0]
    leakage = float(np.max(1.0 - np.sum(np.abs(u) ** 2, axis=0)))
    leakage = max(leakage, 0.0)

    c = np.diag(u @ ideal.matrix.conj().T).copy()
    corrections = []
    bits = np.array([[(k >> (n - 1 - s)) & 1 for s in range(n)] for k in range(dim)]) if dim == 2**n else None
    if bits is None:
        raise ValueError("phase corrections need a qubit register")
    for s in range(n):
        ones = np.flatnonzero(bits[:, s] == 1)
        zeros = ones - (1 << (n - 1 - s))
        a = float(np.angle(np.sum(c[ones] * c[zeros].conj())))
        if abs(a) > 1e-12:
            corrections.append((s, (0, 1), -a))
        c[ones] *= np.exp(-1j * a)
    # fidelity with the corrections applied, checked directly
    d = np.ones(dim, dtype=complex)
    for s, _, ang in corrections:
        d *= np.where(bits[:, s] == 1, np.exp(0.5j * ang), np.exp(-0.5j * ang))
    fid = float(abs(np.trace(ideal.matrix.conj().T @ (d[:, None] * u))) / dim)
    status = "leakage" if leakage > leakage_threshold else "ok"
    return Equivalence(min(fid, 1.0), corrections, leakage, status)


# reports ----------------------------------------------------------------------

@dataclass(frozen=True)
class DurationReport:
    total: float
    breakdown: list = field(default_factory=list)


def duration_accounting(circuit: C.Circuit, table: C.DurationTable) -> DurationReport:
    """Critical-path duration under per-site ASAP scheduling, plus per-gate timing.

    Raises KeyError when a two-transmon pair has no duration entry.
    """
    timed = circuit.with_durations(table)
    spans, total = C.schedule(timed)
    rows = [
        {"index": k, "kind": i.kind, "sites": list(i.sites), "start": a, "end": b, "duration": i.duration}
        for k, (i, (a, b)) in enumerate(zip(timed.instructions, spans))
    ]
    return DurationReport(total, rows)


@dataclass(frozen=True, eq=False)
class DecompositionReport:
    name: str
    circuit: C.Circuit
    unitary: Operator
    equivalence_fidelity: float
    residual_phase_corrections: list
    total_duration: float | None
    two_transmon_gate_count: int
    leakage: float = 0.0
    status: str = "ok"

    def __post_init__(self):
        if not -1e-12 <= self.equivalence_fidelity <= 1 + 1e-12:
            raise ValueError("equivalence fidelity must lie in [0, 1]")
        if self.two_transmon_gate_count != self.circuit.two_transmon_gate_count:
            raise ValueError("gate count does not match the circuit")

    def to_dict(self) -> dict:
        m = self.unitary.matrix
        return {
            "name": self.name,
            "circuit": self.circuit.to_dict(),
            "unitary": {"real": m.real.tolist(), "imag": m.imag.tolist()},
            "equivalence_fidelity": self.equivalence_fidelity,
            "residual_phase_corrections": [
                {"site": s, "subspace": list(sub), "angle": a} for s, sub, a in self.residual_phase_corrections
            ],
            "total_duration": self.total_duration,
            "two_transmon_gate_count": self.two_transmon_gate_count,
            "leakage": self.leakage,
            "status": self.status,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _report(name: str, circ: C.Circuit, ideal: Operator, cr: CRParams, table: C.DurationTable | None) -> DecompositionReport:
    eq = verify_equivalence(circ, ideal, qubit_subspace=True, cr=cr)
    total = None
    if table is not None:
        try:
            total = duration_accounting(circ, table).total
        except KeyError:
            total = None
    return DecompositionReport(
        name,
        circ if table is None or total is None else circ.with_durations(table),
        C.circuit_unitary(circ, cr),
        eq.fidelity,
        eq.corrections,
        total,
        circ.two_transmon_gate_count,
        eq.leakage,
        eq.status,
    )


# ternary Toffoli ------------------------------------------------------------

def ternary_toffoli_circuit(
    corrected: bool = True,
    dd: bool = False,
    cr: CRParams = CRParams(),
    durations: C.DurationTable | None = None,
) -> C.Circuit:
    table = durations or C.default_durations()
    route = [C.xm(C2), C.cx_sub(C1, C2, +1), C.xp(C2)]
    unroute = [C.xm(C2), C.cx_sub(C1, C2, -1), C.xp(C2)]
    middle = two_cnot_block(C2, T, dd=dd, space=TERNARY_SPACE, durations=table)
    if corrected:
        middle += [C.vz(C2, sub, ang, tag="stark") for sub, ang in two_cnot_corrections(cr, dd)]
    circ = C.Circuit(TERNARY_SPACE, tuple(route + middle + unroute)).with_durations(table)
    if corrected:
        eq = verify_equivalence(circ, toffoli(), cr=cr)
        circ = circ + [C.vz(s, sub, ang, tag="local") for s, sub, ang in eq.corrections]
    return circ


def ternary_toffoli(
    corrected: bool = True,
    dd: bool = False,
    cr: CRParams = CRParams(),
    durations: C.DurationTable | None = None,
) -> DecompositionReport:
    """Toffoli on (c1 qubit, c2 qutrit, t qubit) with four two-transmon gates."""
    table = durations or C.default_durations()
    circ = ternary_toffoli_circuit(corrected, dd, cr, table)
    name = "ternary" + ("-dd" if dd else "") + ("" if corrected else "-uncorrected")
    return _report(name, circ, toffoli(), cr, table)


# binary references -------------------------------------------------------------

def _h(s: int) -> list[C.Instruction]:
    # R_y(π/2) R_z(π) equals H up to a global phase
    return [C.vz(s, (0, 1), np.pi), C.rot(s, "y", (0, 1), np.pi / 2)]


def _t(s: int, dagger: bool = False) -> C.Instruction:
    return C.vz(s, (0, 1), -np.pi / 4 if dagger else np.pi / 4)


def binary_toffoli_8cnot_circuit() -> C.Circuit:
    """Order-preserving Toffoli on a line 0-1-2 with eight nearest-neighbour CNOTs."""
    cx01, cx12 = C.cnot(0, 1), C.cnot(1, 2)
    body = (
        _h(2)
        + [_t(0), _t(1), _t(2)]
        + [cx01, _t(1, True), cx12, _t(2), cx01, cx12, _t(2, True)]
        + [cx01, cx12, _t(2, True), cx01, cx12]
        + _h(2)
    )
    return C.Circuit(QUBITS3, tuple(body))


def binary_toffoli_6cnot_circuit() -> C.Circuit:
    """Textbook six-CNOT Toffoli; needs the 0-2 coupling."""
    a, b, c = 0, 1, 2
    body = (
        _h(c)
        + [C.cnot(b, c), _t(c, True), C.cnot(a, c), _t(c), C.cnot(b, c), _t(c, True), C.cnot(a, c)]
        + [_t(b), _t(c)]
        + _h(c)
        + [C.cnot(a, b), _t(a), _t(b, True), C.cnot(a, b)]
    )
    return C.Circuit(QUBITS3, tuple(body))


def binary_toffoli_8cnot(durations: C.DurationTable | None = None) -> DecompositionReport:
    table = durations or C.default_durations()
    return _report("binary-8cnot", binary_toffoli_8cnot_circuit(), toffoli(), CRParams(), table)


def binary_toffoli_6cnot(durations: C.DurationTable | None = None) -> DecompositionReport:
    """All-to-all reference.  The duration is None unless the table lists a 0-2 pair."""
    table = durations or C.default_durations()
    return _report("binary-6cnot", binary_toffoli_6cnot_circuit(), toffoli(), CRParams(), table)


def predicted_residual_phase(cr: CRParams = CRParams(), dd: bool = False) -> complex:
    """Relative phase of |111> against |100> for the uncorrected ternary circuit
    on (|10> + |11>)/√2 ⊗ |0>: the level-2 block phase of the two-CNOT
    composite, with c2's Stark phase from the two couplings removed."""
    block = (1j if dd else -1j) * np.exp(2j * cr.stark_phase_per_cnot)
    return complex(block * np.exp(-2j * cr.stark_phase_cx))


def is_nearest_neighbour(circ: C.Circuit, edges: Sequence[tuple[int, int]] = ((0, 1), (1, 2))) -> bool:
    allowed = {tuple(sorted(e)) for e in edges}
    return all(tuple(sorted(i.sites)) in allowed for i in circ.instructions if i.kind in C.TWO_SITE_KINDS)
