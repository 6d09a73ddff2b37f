"""Per-transmon phase frames for the (01) and (12) qutrit subspaces.

Each subspace is driven in its own rotating frame.  A pulse in one subspace
is instantaneous at gate level, but while it plays the spectator level
precesses at the anharmonicity α = ω12 - ω01: during a (01) pulse of length
d the |2> level gains exp(-iαd), during a (12) pulse the |0> level does.
Virtual-Z gates and this precession are both diagonal, so they are carried
forward as frame phases and folded into the axis of later pulses.

Frame phases are φ01 = -(g1 - g0) and φ12 = -(g2 - g1), where exp(i g_l) is
the accumulated diagonal (physical relative to logical) on level l.  A
pulse in subspace ij written with axis phase ϕ is played with axis ϕ - φij.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import circuit as C
from .cr import CRParams
from .gates import virtual_z_angles
from .hilbert import MixedRadixSpace, Operator, embed

TWO_PI = 2 * np.pi

# default anharmonicity, -2π × 0.33 GHz in rad/ns
DEFAULT_ALPHA = -2 * np.pi * 0.33


def _wrap(x: float) -> float:
    return float(np.mod(x, TWO_PI))


@dataclass(frozen=True)
class FrameState:
    phi01: tuple[float, ...]
    phi12: tuple[float, ...]
    alpha: tuple[float, ...]
    clock: tuple[float, ...]

    @classmethod
    def fresh(cls, n_sites: int, alpha: float | Sequence[float] = DEFAULT_ALPHA) -> "FrameState":
        a = (float(alpha),) * n_sites if np.isscalar(alpha) else tuple(float(x) for x in alpha)
        if len(a) != n_sites:
            raise ValueError("need one anharmonicity per site")
        zeros = (0.0,) * n_sites
        return cls(zeros, zeros, a, zeros)

    def _set(self, site: int, phi01: float | None = None, phi12: float | None = None) -> "FrameState":
        p01, p12 = list(self.phi01), list(self.phi12)
        if phi01 is not None:
            p01[site] = _wrap(phi01)
        if phi12 is not None:
            p12[site] = _wrap(phi12)
        return replace(self, phi01=tuple(p01), phi12=tuple(p12))

    def level_phases(self, site: int) -> np.ndarray:
        """Accumulated diagonal phases (g0, g1, g2) with g0 = 0."""
        g1 = -self.phi01[site]
        return np.array([0.0, g1, g1 - self.phi12[site]])


def advance(
    frame: FrameState,
    dt: float,
    pulses: Mapping[int, tuple[int, int]] | None = None,
    sites: Sequence[int] | None = None,
) -> FrameState:
    """Let ``dt`` ns pass.  ``pulses`` maps a site to the subspace it is driving."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    out = frame
    for site, sub in (pulses or {}).items():
        a = frame.alpha[site] * dt
        if tuple(sub) == (0, 1):
            out = out._set(site, phi12=out.phi12[site] + a)
        else:
            out = out._set(site, phi01=out.phi01[site] - a)
    sites = range(len(frame.clock)) if sites is None else sites
    clock = list(out.clock)
    for s in sites:
        clock[s] += dt
    return replace(out, clock=tuple(clock))


def apply_virtual_z(frame: FrameState, site: int, ij, theta: float) -> FrameState:
    """Absorb R_z^(ij)(θ) into the frame."""
    if tuple(ij) == (0, 1):
        return frame._set(site, phi01=frame.phi01[site] + theta, phi12=frame.phi12[site] - theta / 2)
    return frame._set(site, phi01=frame.phi01[site] - theta / 2, phi12=frame.phi12[site] + theta)


def resolve_pulse_phase(frame: FrameState, site: int, ij) -> float:
    """Frame phase φij of ``site``; the next pulse in ``ij`` is played with its axis turned by -φij."""
    if tuple(ij) not in ((0, 1), (1, 2)):
        raise ValueError(f"invalid subspace {ij}")
    return frame.phi01[site] if tuple(ij) == (0, 1) else frame.phi12[site]


def _expand(inst: C.Instruction) -> list[C.Instruction]:
    """X± as two subspace pulses, in time order, splitting the duration evenly."""
    half = inst.duration / 2
    s = inst.sites[0]
    if inst.kind == "x_plus":
        pair = [((1, 2), np.pi), ((0, 1), np.pi)]
    elif inst.kind == "x_minus":
        pair = [((0, 1), -np.pi), ((1, 2), -np.pi)]
    else:
        return [inst]
    return [replace(C.rot(s, "y", sub, ang), duration=half) for sub, ang in pair]


def compile_with_frames(circuit: C.Circuit, frames: FrameState) -> C.Circuit:
    """Lower a logical circuit to frame-resolved physical instructions.

    Virtual-Z gates vanish into the frame, pulse axes are rotated by the
    tracked phases, and a closing diagonal correction is appended per site.
    """
    return _compile(circuit, frames)[0]


def track_frames(circuit: C.Circuit, frames: FrameState) -> FrameState:
    return _compile(circuit, frames)[1]


def _compile(circuit: C.Circuit, frame: FrameState) -> tuple[C.Circuit, FrameState]:
    space = circuit.space
    out: list[C.Instruction] = []
    for logical in circuit.instructions:
        for inst in _expand(logical):
            if inst.is_virtual:
                frame = apply_virtual_z(frame, inst.sites[0], inst.subspace, inst.angle)
                continue
            if inst.kind in ("rot", "dd_x"):
                s = inst.sites[0]
                shift = resolve_pulse_phase(frame, s, inst.subspace)
                out.append(replace(inst, phase=inst.phase - shift))
                pulses = {s: inst.subspace} if space.dims[s] == 3 else {}
                frame = advance(frame, inst.duration, pulses, sites=[s])
            elif inst.kind == "cx_sub":
                c, t = inst.sites
                out.append(replace(inst, phase=inst.phase - frame.phi01[t]))
                frame = advance(frame, inst.duration, {t: (0, 1)}, sites=[c, t])
            elif inst.kind == "cnot":
                c, t = inst.sites
                out.append(replace(inst, phase=inst.phase - frame.phi01[t]))
                frame = advance(frame, inst.duration, sites=[c, t])
            else:
                out.append(inst)
                frame = advance(frame, inst.duration, sites=inst.sites)
    for s, dim in enumerate(space.dims):
        correction = -frame.level_phases(s)[:dim]
        for sub, ang in virtual_z_angles(correction):
            if abs(np.angle(np.exp(1j * ang))) > 1e-15:
                out.append(C.vz(s, sub, ang, tag="frame"))
    return C.Circuit(space, tuple(out)), frame


def spectator_precession(dim: int, subspace, alpha: float, duration: float) -> np.ndarray:
    d = np.ones(dim, dtype=complex)
    if dim == 3:
        spectator = 2 if tuple(subspace) == (0, 1) else 0
        d[spectator] = np.exp(-1j * alpha * duration)
    return np.diag(d)


def physical_unitary(
    circuit: C.Circuit,
    alpha: float | Sequence[float] = DEFAULT_ALPHA,
    cr: CRParams = CRParams(),
) -> Operator:
    """What hardware does with ``circuit``: gates plus spectator-level precession during pulses."""
    space = circuit.space
    alphas = (float(alpha),) * space.n_sites if np.isscalar(alpha) else tuple(alpha)
    u = np.eye(space.total_dim, dtype=complex)
    for logical in circuit.instructions:
        for inst in _expand(logical):
            op = embed(C.local_operator(inst, space, cr), inst.sites, space).matrix
            if inst.kind in ("rot", "dd_x") and not inst.is_virtual:
                s = inst.sites[0]
                e = spectator_precession(space.dims[s], inst.subspace, alphas[s], inst.duration)
                op = op @ embed(Operator(MixedRadixSpace((space.dims[s],)), e), [s], space).matrix
            elif inst.kind == "cx_sub":
                t = inst.sites[1]
                e = spectator_precession(3, (0, 1), alphas[t], inst.duration)
                op = op @ embed(Operator(MixedRadixSpace((3,)), e), [t], space).matrix
            u = op @ u
    return Operator(space, u, unitary=True)
