"""Random-telegraph dephasing of the (12) frame, dynamical decoupling,
Ramsey and Stark-calibration experiments, readout confusion and shot sampling.

The RTN detuning acts with generator δω (|2><2| - |1><1|): a quasi-static
sign s gives |2> the phase +sδωt and |1> the phase -sδωt relative to |0>.
This is a pure (12)-frame error, which the X^(12) echo refocuses.

All randomness comes from explicitly passed generators or seeds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import circuit as C
from .cr import CRParams
from .hilbert import MixedRadixSpace

REGIMES = ("quasi_static", "telegraph")


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Independent child seeds, the split-seed contract for parallel batches."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class RTNParams:
    amplitude: float = 0.0  # δω, rad/ns
    switching_rate: float = 0.0  # 1/ns
    regime: str = "quasi_static"

    def __post_init__(self):
        if self.amplitude < 0 or self.switching_rate < 0:
            raise ValueError("amplitude and switching_rate must be non-negative")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")


class TelegraphTrajectory:
    """One realization of a symmetric two-state telegraph process s(t) = ±1.

    Each state flips at ``switching_rate``; the integral of δω·s(t) over a
    window is the accrued phase.  Usable directly as a circuit noise source.
    """

    def __init__(self, params: RTNParams, horizon: float, rng: np.random.Generator):
        self.amplitude = params.amplitude
        s0 = rng.choice([-1.0, 1.0])
        flips = []
        if params.switching_rate > 0:
            t = 0.0
            while True:
                # draw in chunks; the horizon can hold many flips at high rates
                n = max(16, int(2 * params.switching_rate * (horizon - t)) + 16)
                steps = rng.exponential(1.0 / params.switching_rate, size=n)
                times = t + np.cumsum(steps)
                flips.append(times[times < horizon])
                if times[-1] >= horizon:
                    break
                t = times[-1]
        self.flip_times = np.concatenate(flips) if flips else np.empty(0)
        self.s0 = s0
        self.horizon = horizon
        # cumulative integral of s(t) at each flip time
        edges = np.concatenate([[0.0], self.flip_times])
        signs = s0 * (-1.0) ** np.arange(edges.size)
        seg = np.diff(np.concatenate([edges, [horizon]]))
        self._edges = edges
        self._signs = signs
        self._cum = np.concatenate([[0.0], np.cumsum(signs[:-1] * seg[:-1])])

    def integral(self, t: float) -> float:
        k = np.searchsorted(self._edges, t, side="right") - 1
        return float(self._cum[k] + self._signs[k] * (t - self._edges[k]))

    def phase(self, t0: float, t1: float) -> float:
        return self.amplitude * (self.integral(t1) - self.integral(t0))

    def __call__(self, site: int, t0: float, t1: float) -> float:
        return self.phase(t0, t1)


class QuasiStaticNoise:
    """Constant (12)-frame detuning ``rate`` (rad/ns) on the listed qutrit sites."""

    def __init__(self, rate: float, sites: Sequence[int] | None = None):
        self.rate = float(rate)
        self.sites = None if sites is None else set(sites)

    def __call__(self, site: int, t0: float, t1: float) -> float:
        if self.sites is not None and site not in self.sites:
            return 0.0
        return self.rate * (t1 - t0)


def sample_rtn_phase(params: RTNParams, duration: float, rng: np.random.Generator) -> float:
    """Phase accrued by the (12) frame over ``duration`` ns in one shot."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if params.amplitude == 0 or duration == 0:
        return 0.0
    if params.regime == "quasi_static":
        return float(rng.choice([-1.0, 1.0]) * params.amplitude * duration)
    return TelegraphTrajectory(params, duration, rng).phase(0.0, duration)


def shot_noise_source(params: RTNParams, horizon: float, rng: np.random.Generator):
    """A circuit noise source for one shot."""
    if params.regime == "quasi_static":
        return QuasiStaticNoise(rng.choice([-1.0, 1.0]) * params.amplitude)
    return TelegraphTrajectory(params, horizon, rng)


# dynamical decoupling and Ramsey -------------------------------------------

QUTRIT = MixedRadixSpace((3,))
RAMSEY_STATE = np.array([1.0, 0.0, 1.0], dtype=complex) / np.sqrt(2)


def dd_sequence(
    tau: float,
    site: int = 0,
    space: MixedRadixSpace = QUTRIT,
    durations: C.DurationTable | None = None,
) -> C.Circuit:
    """τ/4 · X^(12) · τ/2 · X^(12) · τ/4 on one qutrit."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    table = durations or C.default_durations()
    body = (
        C.delay(site, tau / 4, tag="dd"),
        C.dd_x(site),
        C.delay(site, tau / 2, tag="dd"),
        C.dd_x(site),
        C.delay(site, tau / 4, tag="dd"),
    )
    return C.Circuit(space, body).with_durations(table)


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0


def _ramsey_population(circ: C.Circuit, reference: np.ndarray, noise) -> float:
    u = C.circuit_unitary(circ, noise=noise).matrix
    return float(abs(np.vdot(reference, u @ RAMSEY_STATE)) ** 2)


def ramsey_experiment(
    delay: float,
    use_dd: bool,
    noise: RTNParams,
    shots: int | None = None,
    seed: int | None = None,
    durations: C.DurationTable | None = None,
) -> Estimate:
    """Probability of recovering (|0>+|2>)/√2 after a delay of ``delay`` ns.

    The state is read out in the basis of the noiseless evolution, so the
    fixed phase of the two echo pulses is accounted for.  ``shots=None``
    returns the exact ensemble average (quasi-static regime only).
    """
    if delay < 0:
        raise ValueError("delay must be non-negative")
    circ = dd_sequence(delay, durations=durations) if use_dd else C.Circuit(QUTRIT, (C.delay(0, delay),))
    reference = C.circuit_unitary(circ).matrix @ RAMSEY_STATE
    _, horizon = C.schedule(circ)

    if shots is None:
        if noise.regime != "quasi_static":
            raise ValueError("exact mode needs the quasi-static regime; pass shots")
        pops = [_ramsey_population(circ, reference, QuasiStaticNoise(s * noise.amplitude)) for s in (1.0, -1.0)]
        return Estimate(float(np.mean(pops)))

    if shots <= 0:
        raise ValueError("shots must be positive")
    rng = np.random.default_rng(seed)
    if noise.regime == "quasi_static":
        n_plus = rng.binomial(shots, 0.5)
        p_plus = _ramsey_population(circ, reference, QuasiStaticNoise(noise.amplitude))
        p_minus = _ramsey_population(circ, reference, QuasiStaticNoise(-noise.amplitude))
        hits = rng.binomial(n_plus, min(p_plus, 1.0)) + rng.binomial(shots - n_plus, min(p_minus, 1.0))
    else:
        p = np.array(
            [_ramsey_population(circ, reference, TelegraphTrajectory(noise, horizon, rng)) for _ in range(shots)]
        )
        hits = int(np.sum(rng.random(shots) < p))
    value = hits / shots
    return Estimate(value, float(np.sqrt(max(value * (1 - value), 1e-12) / shots)))


def frame_shift_12(theta: float) -> np.ndarray:
    """Scan rotation: shifting the (12) drive frame by θ, i.e. diag(1, 1, e^{-iθ})."""
    return np.diag([1.0, 1.0, np.exp(-1j * theta)])


@dataclass(frozen=True)
class ScanResult:
    thetas: np.ndarray = field(repr=False)
    population: np.ndarray = field(repr=False)
    argmax: float = 0.0


def stark_calibration_scan(
    thetas: Sequence[float],
    with_drive: bool,
    background_phase: float = -0.1083,
    cr: CRParams = CRParams(),
) -> ScanResult:
    """Ramsey on c2 with a (12) frame shift θ applied before readout.

    ``background_phase`` is the phase offset φ_acc of the bare delay, in the
    convention population ∝ cos²((θ + φ_acc)/2), so the bare-delay peak sits
    at -φ_acc.  With the drive the delay is a device CNOT (target in |0>) of
    the same length, whose Stark phase moves the peak by +stark_phase_per_cnot.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size == 0:
        raise ValueError("theta grid is empty")
    bg = np.kron(np.diag([1.0, 1.0, np.exp(-1j * background_phase)]), np.eye(2))
    evo = cr.cnot().matrix @ bg if with_drive else bg
    psi = evo @ np.kron(RAMSEY_STATE, [1.0, 0.0])
    pops = np.empty(thetas.size)
    for k, th in enumerate(thetas):
        out = np.kron(frame_shift_12(th), np.eye(2)) @ psi
        amp = np.einsum("i,it->t", RAMSEY_STATE.conj(), out.reshape(3, 2))
        pops[k] = float(np.sum(np.abs(amp) ** 2))
    return ScanResult(thetas, pops, float(thetas[int(np.argmax(pops))]))


# readout ------------------------------------------------------------------

SYNTHETIC_CONFUSION = np.array([[0.98, 0.04], [0.02, 0.96]])


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Per-site column-stochastic readout matrices, M[i, j] = P(read i | prepared j)."""

    matrices: tuple

    def __post_init__(self):
        mats = []
        for m in self.matrices:
            m = np.array(m, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 3):
                raise ValueError("confusion matrices must be 2x2 or 3x3")
            if np.any(m < 0) or np.any(m > 1):
                raise ValueError("confusion entries must lie in [0, 1]")
            if not np.allclose(m.sum(axis=0), 1.0, atol=1e-12):
                raise ValueError("confusion columns must sum to 1")
            m.setflags(write=False)
            mats.append(m)
        object.__setattr__(self, "matrices", tuple(mats))

    @classmethod
    def uniform(cls, n_sites: int, matrix=SYNTHETIC_CONFUSION) -> "ConfusionMatrix":
        return cls(tuple(np.array(matrix) for _ in range(n_sites)))

    @classmethod
    def perfect(cls, dims: Sequence[int]) -> "ConfusionMatrix":
        return cls(tuple(np.eye(d) for d in dims))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.shape[0] for m in self.matrices)


def apply_site_matrices(probs: np.ndarray, matrices: Sequence[np.ndarray]) -> np.ndarray:
    """(⊗ M_site) · probs without forming the Kronecker product."""
    dims = [m.shape[0] for m in matrices]
    p = np.asarray(probs, dtype=float)
    if p.size != int(np.prod(dims)):
        raise ValueError(f"distribution of size {p.size} does not match site dims {dims}")
    t = p.reshape(dims)
    for k, m in enumerate(matrices):
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [k])), 0, k)
    return t.reshape(-1)


def apply_confusion(probs: Sequence[float], confusion: ConfusionMatrix) -> np.ndarray:
    return apply_site_matrices(np.asarray(probs, dtype=float), confusion.matrices)


@dataclass(frozen=True)
class ShotResult:
    counts: dict
    shots: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to shots")

    def probabilities(self, labels: Sequence[str]) -> np.ndarray:
        return np.array([self.counts.get(k, 0) for k in labels], dtype=float) / self.shots


def sample_shots(
    probs: Sequence[float],
    n: int,
    seed: int | np.random.Generator | None = None,
    labels: Sequence[str] | None = None,
) -> ShotResult:
    p = np.asarray(probs, dtype=float)
    if n <= 0:
        raise ValueError("number of shots must be positive")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be non-negative and sum to 1")
    p = np.clip(p, 0.0, None)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    counts = rng.multinomial(n, p / p.sum())
    labels = list(labels) if labels is not None else [str(i) for i in range(p.size)]
    return ShotResult({labels[i]: int(c) for i, c in enumerate(counts) if c}, n)
