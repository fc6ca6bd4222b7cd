import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qcirc.circuit import QuantumCircuit
from qcirc.linalg import CNOT, H, X, Z
from qcirc import (
    controlled_unitary_gate,
    standard_measure_gate,
    unitary_gate,
)


def make_teleportation() -> QuantumCircuit:
    """The classic teleportation circuit: CNOT, H, two standard measurements,
    classically controlled X and Z on the target register."""
    gates = (
        unitary_gate("CNOT", [0, 1], CNOT),
        unitary_gate("H", [0], H),
        standard_measure_gate("M", 0),
        standard_measure_gate("N", 1),
        controlled_unitary_gate(
            "XN", [2], ["N"], {"I": np.eye(2), "X": X}, {("0",): "I", ("1",): "X"}
        ),
        controlled_unitary_gate(
            "ZM", [2], ["M"], {"I": np.eye(2), "Z": Z}, {("0",): "I", ("1",): "Z"}
        ),
    )
    return QuantumCircuit(("c", "a", "t"), gates)


@pytest.fixture
def teleport() -> QuantumCircuit:
    return make_teleportation()


@pytest.fixture
def bell_input():
    """|psi> (x) |beta00> for a fixed non-trivial |psi>."""
    psi = np.array([0.6, 0.8j], dtype=complex)
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1 / np.sqrt(2)
    return psi, np.kron(psi, bell)
