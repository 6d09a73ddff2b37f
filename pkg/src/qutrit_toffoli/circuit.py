"""Timed gate sequences on mixed-radix registers.

Instructions are plain frozen records; durations come from a
:class:`DurationTable` and timing follows a per-site parallel model: an
instruction starts once every site it touches is free, so gates on disjoint
sites overlap and two-transmon gates block both sites.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Callable, Iterable, Sequence

import numpy as np

from . import gates
from .cr import CRParams
from .hilbert import MixedRadixSpace, Operator, as_space, embed, identity

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KINDS = ("rot", "vz", "x_plus", "x_minus", "cx_sub", "cnot", "delay", "dd_x")
TWO_SITE_KINDS = ("cx_sub", "cnot")
PULSE_KINDS = ("rot", "x_plus", "x_minus", "dd_x")

# (site, t0, t1) -> accumulated (12)-frame phase on that site over [t0, t1] ns
PhaseNoise = Callable[[int, float, float], float]


@dataclass(frozen=True)
class Instruction:
    kind: str
    sites: tuple[int, ...]
    axis: str = "x"
    subspace: tuple[int, int] = (0, 1)
    angle: float = 0.0
    sign: int = 1
    phase: float = 0.0
    duration: float = 0.0
    tag: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instruction kind {self.kind!r}")
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "subspace", tuple(int(s) for s in self.subspace))
        if self.duration < 0:
            raise ValueError("durations must be non-negative")
        if self.kind == "vz" and self.duration != 0:
            raise ValueError("virtual-Z gates have zero duration")
        n = 2 if self.kind in TWO_SITE_KINDS else None
        if n is not None and len(self.sites) != n:
            raise ValueError(f"{self.kind} acts on exactly two sites")
        if self.kind != "delay" and n is None and len(self.sites) != 1:
            raise ValueError(f"{self.kind} acts on exactly one site")
        if self.kind == "delay" and not self.sites:
            raise ValueError("delay needs at least one site")

    @property
    def is_virtual(self) -> bool:
        return self.kind == "vz" or (self.kind == "rot" and self.axis == "z")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sites"] = list(self.sites)
        d["subspace"] = list(self.subspace)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Instruction":
        d = dict(d)
        d["sites"] = tuple(d["sites"])
        d["subspace"] = tuple(d.get("subspace", (0, 1)))
        return cls(**d)


# constructors -------------------------------------------------------------

def rot(site: int, axis: str, subspace, angle: float, phase: float = 0.0, tag: str = "") -> Instruction:
    return Instruction("rot", (site,), axis=axis, subspace=tuple(subspace), angle=angle, phase=phase, tag=tag)


def vz(site: int, subspace, angle: float, tag: str = "") -> Instruction:
    return Instruction("vz", (site,), subspace=tuple(subspace), angle=angle, tag=tag)


def xp(site: int) -> Instruction:
    return Instruction("x_plus", (site,))


def xm(site: int) -> Instruction:
    return Instruction("x_minus", (site,))


def cx_sub(control: int, target: int, sign: int) -> Instruction:
    return Instruction("cx_sub", (control, target), sign=sign)


def cnot(control: int, target: int) -> Instruction:
    return Instruction("cnot", (control, target))


def delay(sites: int | Sequence[int], duration: float, tag: str = "") -> Instruction:
    sites = (sites,) if isinstance(sites, int) else tuple(sites)
    return Instruction("delay", sites, duration=duration, tag=tag)


def dd_x(site: int) -> Instruction:
    return Instruction("dd_x", (site,), axis="y", subspace=(1, 2), angle=np.pi)


# durations ----------------------------------------------------------------

@dataclass(frozen=True)
class DurationTable:
    """Gate durations in ns.

    ``two_transmon`` maps an unordered site pair to the duration of the
    device CNOT on that pair; the c1-c2 subspace couplings reuse it.
    """

    pulse_01: float
    pulse_12: float
    two_transmon: dict = field(default_factory=dict)
    notes: str = ""

    def pair(self, a: int, b: int) -> float:
        key = (min(a, b), max(a, b))
        if key not in self.two_transmon:
            raise KeyError(f"no two-transmon duration for sites {key}")
        return float(self.two_transmon[key])

    def duration_of(self, inst: Instruction) -> float:
        if inst.kind == "delay":
            return inst.duration
        if inst.is_virtual:
            return 0.0
        if inst.kind == "rot":
            return self.pulse_01 if inst.subspace == (0, 1) else self.pulse_12
        if inst.kind in ("x_plus", "x_minus"):
            return self.pulse_01 + self.pulse_12
        if inst.kind == "dd_x":
            return self.pulse_12
        return self.pair(*inst.sites)

    @classmethod
    def from_mapping(cls, data: dict) -> "DurationTable":
        pulses = data["pulses"]
        pairs = {}
        for key, value in data.get("two_transmon", {}).items():
            a, b = (int(x) for x in key.split("-"))
            pairs[(min(a, b), max(a, b))] = float(value)
        return cls(float(pulses["pulse_01"]), float(pulses["pulse_12"]), pairs, data.get("notes", ""))

    @classmethod
    def load(cls, path=None) -> "DurationTable":
        """Load a TOML duration table; without a path, the bundled device table."""
        if path is None:
            text = resources.files("qutrit_toffoli").joinpath("data/durations.toml").read_text()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_mapping(tomllib.loads(text))


def default_durations() -> DurationTable:
    return DurationTable.load()


# circuits -----------------------------------------------------------------

@dataclass(frozen=True)
class Circuit:
    space: MixedRadixSpace
    instructions: tuple[Instruction, ...] = ()

    def __post_init__(self):
        space = as_space(self.space)
        insts = tuple(self.instructions)
        for inst in insts:
            for s in inst.sites:
                if not 0 <= s < space.n_sites:
                    raise ValueError(f"site {s} out of range for {space.dims}")
            if len(set(inst.sites)) != len(inst.sites):
                raise ValueError(f"duplicate sites in {inst}")
            for s in inst.sites if inst.kind in ("rot", "vz") else ():
                if inst.subspace[1] >= space.dims[s]:
                    raise ValueError(f"subspace {inst.subspace} invalid on site {s}")
            if inst.kind in ("x_plus", "x_minus", "dd_x") and space.dims[inst.sites[0]] != 3:
                raise ValueError(f"{inst.kind} needs a qutrit site")
            if inst.kind == "cx_sub" and (space.dims[inst.sites[0]], space.dims[inst.sites[1]]) != (2, 3):
                raise ValueError("cx_sub needs a qubit control and a qutrit target")
            if inst.kind == "cnot" and space.dims[inst.sites[1]] != 2:
                raise ValueError("cnot needs a qubit target")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "instructions", insts)

    def __add__(self, other: "Circuit | Iterable[Instruction]") -> "Circuit":
        extra = other.instructions if isinstance(other, Circuit) else tuple(other)
        return Circuit(self.space, self.instructions + tuple(extra))

    def __len__(self) -> int:
        return len(self.instructions)

    @property
    def two_transmon_gate_count(self) -> int:
        return sum(inst.kind in TWO_SITE_KINDS for inst in self.instructions)

    def with_durations(self, table: DurationTable) -> "Circuit":
        return Circuit(self.space, tuple(replace(i, duration=table.duration_of(i)) for i in self.instructions))

    @property
    def total_duration(self) -> float:
        return schedule(self)[1]

    def to_dict(self) -> dict:
        return {"dims": list(self.space.dims), "instructions": [i.to_dict() for i in self.instructions]}

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(MixedRadixSpace(tuple(d["dims"])), tuple(Instruction.from_dict(i) for i in d["instructions"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def schedule(circuit: Circuit) -> tuple[list[tuple[float, float]], float]:
    """Per-site ASAP schedule; returns (start, end) per instruction and the total."""
    clock = [0.0] * circuit.space.n_sites
    spans = []
    for inst in circuit.instructions:
        start = max(clock[s] for s in inst.sites)
        end = start + inst.duration
        for s in inst.sites:
            clock[s] = end
        spans.append((start, end))
    return spans, max(clock) if clock else 0.0


# simulation ---------------------------------------------------------------

def local_operator(inst: Instruction, space: MixedRadixSpace, cr: CRParams) -> Operator:
    """Matrix of ``inst`` on its own sites, in site order."""
    dims = [space.dims[s] for s in inst.sites]
    k = inst.kind
    if k == "rot":
        return gates.subspace_rotation_matrix(inst.axis, inst.subspace, inst.angle, inst.phase, dims[0])
    if k == "vz":
        return gates.virtual_z(inst.subspace, inst.angle, dims[0])
    if k == "x_plus":
        return gates.x_plus()
    if k == "x_minus":
        return gates.x_minus()
    if k == "dd_x":
        return gates.subspace_rotation_matrix("y", (1, 2), np.pi, inst.phase)
    if k == "cx_sub":
        op = gates.controlled_subspace_x(inst.sign, inst.phase)
        if cr.stark_phase_cx:
            op = Operator(op.space, op.matrix @ np.kron(np.eye(2), np.diag([1, 1, np.exp(1j * cr.stark_phase_cx)])), True)
        return op
    if k == "cnot":
        return cr.cnot(target_phase=inst.phase, control_dim=dims[0])
    return identity(MixedRadixSpace(tuple(dims)))


def dephasing_operator(phi: float) -> np.ndarray:
    """(12)-frame dephasing: |2> gains +φ and |1> gains -φ relative to |0>."""
    return np.diag([1.0, np.exp(-1j * phi), np.exp(1j * phi)])


def circuit_unitary(
    circuit: Circuit,
    cr: CRParams = CRParams(),
    noise: PhaseNoise | None = None,
) -> Operator:
    """Unitary of ``circuit``; optional (12)-frame phase noise on qutrit sites.

    Noise accrues on every qutrit site over its whole timeline, idle gaps
    included.  Single-site pulses are instantaneous at the centre of their
    time window, so half of the window's noise lands on each side.
    """
    space = circuit.space
    u = np.eye(space.total_dim, dtype=complex)
    noisy = [s for s, d in enumerate(space.dims) if d == 3] if noise is not None else []
    clock = [0.0] * space.n_sites

    def accrue(site: int, t0: float, t1: float):
        nonlocal u
        if t1 > t0:
            phi = noise(site, t0, t1)
            if phi:
                d = Operator(MixedRadixSpace((3,)), dephasing_operator(phi))
                u = embed(d, [site], space).matrix @ u

    for inst in circuit.instructions:
        start = max(clock[s] for s in inst.sites)
        end = start + inst.duration
        op = embed(local_operator(inst, space, cr), inst.sites, space).matrix
        split = [s for s in noisy if s in inst.sites]
        for s in split:
            accrue(s, clock[s], start)
        # subspace pulses on a qutrit do not commute with the dephasing
        centred = inst.kind in PULSE_KINDS or (inst.kind == "cx_sub")
        mid = start + inst.duration / 2 if centred else end
        for s in split:
            accrue(s, start, mid)
        u = op @ u
        for s in split:
            accrue(s, mid, end)
        for s in inst.sites:
            clock[s] = end
    total = max(clock)
    for s in noisy:
        accrue(s, clock[s], total)
    return Operator(space, u, unitary=True)
