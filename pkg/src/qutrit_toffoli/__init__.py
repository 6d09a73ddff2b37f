"""Mixed-radix qubit/qutrit simulation of a ternary Toffoli decomposition."""
from .hilbert import MixedRadixSpace, Operator, QuantumState, embed, kron
from .circuit import Circuit, DurationTable, Instruction, circuit_unitary
from .cr import CRParams

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "CRParams",
    "DurationTable",
    "Instruction",
    "MixedRadixSpace",
    "Operator",
    "QuantumState",
    "circuit_unitary",
    "embed",
    "kron",
]
