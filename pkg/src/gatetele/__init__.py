"""Gate teleportation of Clifford and Toffoli gates over simulated noisy quantum networks."""
from .qmath import DensityMatrix, GateMatrix, Statevector, apply_gate, fidelity_pure, gate_by_name, partial_trace
from .pauli import (CorrectionTable, PauliString, PauliSum, clifford_level, conjugate, correction_table,
                    pauli_decompose, pauli_exponential_circuit)
from .noise import DeviceNoise, LinkNoise, depolarize, noisy_apply, werner_epr
from .netsim import NetworkConfig, Simulation, build_network, create_epr, run
from .protocols import (InputSpec, TeleportResult, single_gate_teleport, state_teleport, three_node_gate_teleport,
                        toffoli_teleport, two_node_gate_teleport)

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix", "GateMatrix", "Statevector", "apply_gate", "fidelity_pure", "gate_by_name", "partial_trace",
    "CorrectionTable", "PauliString", "PauliSum", "clifford_level", "conjugate", "correction_table",
    "pauli_decompose", "pauli_exponential_circuit",
    "DeviceNoise", "LinkNoise", "depolarize", "noisy_apply", "werner_epr",
    "NetworkConfig", "Simulation", "build_network", "create_epr", "run",
    "InputSpec", "TeleportResult", "single_gate_teleport", "state_teleport", "three_node_gate_teleport",
    "toffoli_teleport", "two_node_gate_teleport",
]
