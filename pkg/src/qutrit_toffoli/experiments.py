"""End-to-end experiment drivers shared by the command line and the tests.

Run-level noise model for the ensembles: each seed is one run with its own
telegraph state s_run, while the phase corrections were calibrated at an
earlier time with state s_cal.  The residual (12)-frame detuning seen by
the run is δω (s_run - s_cal), which is zero half of the time and ±2δω
otherwise.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import circuit as C
from . import decompositions as D
from . import noise as N
from . import tomography as T
from .cr import CRParams, ecr_scan, fit_oscillation_frequency
from .gates import toffoli

# 2π × 150 kHz in rad/ns: a few hundred kHz of charge-noise splitting is
# typical for the |2> level of a transmon
DEFAULT_RTN_AMPLITUDE = 2 * np.pi * 150e-6

CIRCUITS = ("ternary", "ternary-dd", "ternary-uncorrected", "binary-8cnot", "binary-6cnot")


def build(name: str, cr: CRParams = CRParams(), durations: C.DurationTable | None = None) -> D.DecompositionReport:
    table = durations or C.default_durations()
    if name == "ternary":
        return D.ternary_toffoli(True, False, cr, table)
    if name == "ternary-dd":
        return D.ternary_toffoli(True, True, cr, table)
    if name == "ternary-uncorrected":
        return D.ternary_toffoli(False, False, cr, table)
    if name == "binary-8cnot":
        return D.binary_toffoli_8cnot(table)
    if name == "binary-6cnot":
        return D.binary_toffoli_6cnot(table)
    raise ValueError(f"unknown circuit {name!r}; choose from {CIRCUITS}")


class CalibratedNoise:
    """A run's noise source minus the constant detuning absorbed by calibration."""

    def __init__(self, source: C.PhaseNoise, offset_rate: float):
        self.source = source
        self.offset_rate = offset_rate

    def __call__(self, site: int, t0: float, t1: float) -> float:
        return self.source(site, t0, t1) - self.offset_rate * (t1 - t0)


def run_noise(rtn: N.RTNParams, seed: int, horizon: float) -> C.PhaseNoise:
    rng = np.random.default_rng(seed)
    s_cal = rng.choice([-1.0, 1.0])
    source = N.shot_noise_source(rtn, horizon, rng)
    return CalibratedNoise(source, s_cal * rtn.amplitude)


def qubit_channel(
    circ: C.Circuit,
    cr: CRParams = CRParams(),
    noise: C.PhaseNoise | None = None,
) -> tuple[np.ndarray, float]:
    """Choi matrix of the circuit restricted to the qubit block, and the worst-case leakage."""
    u = C.circuit_unitary(circ, cr, noise).matrix
    idx = D.qubit_indices(circ.space)
    block = u[np.ix_(idx, idx)]
    leak = float(np.max(1 - np.sum(np.abs(block) ** 2, axis=0)))
    return T.choi_from_kraus(block), max(leak, 0.0)


def _map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class QPTRun:
    seed: int
    f_avg: float
    leakage: float
    iterations: int
    converged: bool
    cp_residual: float
    tp_residual: float


def qpt_run(
    circuit_name: str,
    seed: int,
    rtn: N.RTNParams | None = None,
    shots: int | None = 1024,
    confusion: N.ConfusionMatrix | None = None,
    rem_shots: int | None = None,
    cr: CRParams = CRParams(),
    durations: C.DurationTable | None = None,
    method: str = "mle",
) -> QPTRun:
    """One QPT experiment: noise draw, data, optional REM calibration, reconstruction."""
    circ = build(circuit_name, cr, durations).circuit
    noise = None
    if rtn is not None and rtn.amplitude > 0:
        noise = run_noise(rtn, seed, circ.total_duration)
    choi, leak = qubit_channel(circ, cr, noise)
    data_seed, cal_seed = N.spawn_seeds(seed, 2)
    data = T.simulate_qpt(choi, shots, data_seed, confusion)
    cal = None
    if rem_shots and confusion is not None:
        ident = T.choi_from_unitary(np.eye(T.DIM))
        cal = T.rem_calibrate(T.channel_executor(ident, confusion, cal_seed), rem_shots)
    est = T.reconstruct_process(data, cal, method=method)
    return QPTRun(seed, T.avg_gate_fidelity(est, toffoli()), leak, est.iterations, est.converged, est.cp_residual, est.tp_residual)


def qpt_ensemble(circuit_name: str, seeds: Sequence[int], threads: int = 1, **kwargs) -> list[QPTRun]:
    runs = _map(lambda s: qpt_run(circuit_name, s, **kwargs), list(seeds), threads)
    return sorted(runs, key=lambda r: r.seed)


def toffoli_executor(
    circuit_name: str,
    seed: int,
    rtn: N.RTNParams | None = None,
    confusion: N.ConfusionMatrix | None = None,
    cr: CRParams = CRParams(),
    durations: C.DurationTable | None = None,
) -> T.Executor:
    circ = build(circuit_name, cr, durations).circuit
    run_seed, shot_seed = N.spawn_seeds(seed, 2)
    noise = run_noise(rtn, run_seed, circ.total_duration) if rtn is not None and rtn.amplitude > 0 else None
    choi, _ = qubit_channel(circ, cr, noise)
    return T.channel_executor(choi, confusion, shot_seed)


def truth_table_run(
    circuit_name: str,
    seed: int,
    shots: int = 1024,
    rtn: N.RTNParams | None = None,
    confusion: N.ConfusionMatrix | None = None,
    rem_shots: int | None = None,
    cr: CRParams = CRParams(),
    durations: C.DurationTable | None = None,
) -> dict:
    """F_TT with and without REM from the same executor draws."""
    ex = toffoli_executor(circuit_name, seed, rtn, confusion, cr, durations)
    cached: dict = {}

    def replay(bits, n):
        # the same counts feed both the raw and the mitigated estimate
        if (bits, n) not in cached:
            cached[(bits, n)] = ex(bits, n)
        return cached[(bits, n)]

    out = {"seed": seed, "f_tt": T.truth_table_fidelity(replay, shots)}
    if rem_shots and confusion is not None:
        ident = T.choi_from_unitary(np.eye(T.DIM))
        cal_seed = N.spawn_seeds(seed, 3)[2]
        cal = T.rem_calibrate(T.channel_executor(ident, confusion, cal_seed), rem_shots)
        out["f_tt_rem"] = T.truth_table_fidelity(replay, shots, cal)
    return out


def cr_scan_table(levels: Sequence[int], taus: Sequence[float], cr: CRParams = CRParams(),
                  shots: int | None = None, seed: int | None = None) -> dict:
    """<Z_t> curves per control level plus fitted frequencies and their ratio."""
    rng = np.random.default_rng(seed)
    curves = {lvl: ecr_scan(lvl, taus, cr, shots, rng) for lvl in levels}
    freqs = {}
    for lvl, vals in curves.items():
        freqs[lvl] = fit_oscillation_frequency(taus, vals) if np.ptp(vals) > 1e-9 else 0.0
    ratio = freqs[2] / freqs[1] if 1 in freqs and 2 in freqs and freqs[1] else None
    return {"curves": curves, "frequencies": freqs, "ratio": ratio}
