"""State and gate teleportation protocols run as node programs.

Node naming is fixed per topology: ``sender``/``receiver`` for two nodes, and
a star of ``input0``, ``input1`` (, ``input2``) around ``gate`` for the three-
and four-node protocols.  The receiving node always creates the EPR pairs,
applies the gate to its halves and then the corrections.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .netsim import (NetworkConfig, NetworkError, NodeSpec, QuantumLink, QubitRef, Simulation, run,
                     star_config)
from .noise import DeviceNoise, LinkNoise
from .pauli import CorrectionCircuit, clifford_level, correction_circuits, correction_table
from .qmath import DensityMatrix, GateMatrix, Statevector, apply_gate, fidelity_pure, gate_by_name

SENDER, RECEIVER, GATE = "sender", "receiver", "gate"
PROTOCOLS = ("state", "single", "two_node", "three_node", "toffoli")

GateSpec = Union[str, tuple[str, Optional[float]]]


class UnsupportedGateError(ValueError):
    pass


def input_node(i: int) -> str:
    return f"input{i}"


def two_node_config(link: LinkNoise = LinkNoise(), sender: DeviceNoise = DeviceNoise(),
                    receiver: DeviceNoise = DeviceNoise()) -> NetworkConfig:
    return NetworkConfig(
        (NodeSpec(SENDER, sender), NodeSpec(RECEIVER, receiver)),
        (QuantumLink(SENDER, RECEIVER, link),),
        ((SENDER, RECEIVER),),
    )


def three_node_config(link: LinkNoise = LinkNoise(), device: DeviceNoise = DeviceNoise()) -> NetworkConfig:
    return star_config(GATE, [input_node(0), input_node(1)], link, device)


def toffoli_config(link: LinkNoise = LinkNoise(), device: DeviceNoise = DeviceNoise()) -> NetworkConfig:
    return star_config(GATE, [input_node(i) for i in range(3)], link, device)


def default_config(protocol: str) -> NetworkConfig:
    if protocol in ("state", "single", "two_node"):
        return two_node_config()
    if protocol == "three_node":
        return three_node_config()
    if protocol == "toffoli":
        return toffoli_config()
    raise ValueError(f"unknown protocol {protocol!r}; choose from {', '.join(PROTOCOLS)}")


def input_count(protocol: str) -> int:
    return {"state": 1, "single": 1, "two_node": 2, "three_node": 2, "toffoli": 3}[protocol]


# --- inputs and results -----------------------------------------------------

def _gate_spec(g: GateSpec) -> tuple[str, Optional[float]]:
    name, theta = (g, None) if isinstance(g, str) else (g[0], g[1])
    matrix = gate_by_name(name, theta)
    if matrix.n_qubits != 1:
        raise ValueError(f"input preparation gates must be single-qubit, got {name!r}")
    return name, theta


@dataclass(frozen=True)
class InputSpec:
    prep_gates: tuple[tuple[tuple[str, Optional[float]], ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "prep_gates",
                           tuple(tuple(_gate_spec(g) for g in qubit) for qubit in self.prep_gates))

    @classmethod
    def hadamard(cls, n: int) -> "InputSpec":
        return cls(tuple(("H",) for _ in range(n)))

    @classmethod
    def basis(cls, bits: str) -> "InputSpec":
        return cls(tuple(("X",) if b == "1" else () for b in bits))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "InputSpec":
        """Independent ``RZ RY RZ`` Euler rotations on each qubit."""
        preps = []
        for _ in range(n):
            a, b, c = rng.uniform(0, 2 * np.pi, size=3)
            preps.append((("RZ", a), ("RY", b), ("RZ", c)))
        return cls(tuple(preps))

    @property
    def n_qubits(self) -> int:
        return len(self.prep_gates)

    def state(self) -> Statevector:
        psi = Statevector.zeros(self.n_qubits)
        for q, gates in enumerate(self.prep_gates):
            for name, theta in gates:
                psi = apply_gate(psi, gate_by_name(name, theta), [q])
        return psi


@dataclass(frozen=True)
class BranchResult:
    outcomes: tuple[int, ...]
    probability: float
    fidelity: float
    state: DensityMatrix


@dataclass(frozen=True)
class TeleportResult:
    protocol: str
    gate_label: str
    mode: str
    branches: tuple[BranchResult, ...]
    output_qubits: tuple[QubitRef, ...]
    ideal_state: Statevector

    @property
    def fidelity(self) -> float:
        return float(sum(b.probability * b.fidelity for b in self.branches))

    @property
    def min_fidelity(self) -> float:
        return min(b.fidelity for b in self.branches)


# --- programs ---------------------------------------------------------------

def _bell_measure(ctx, q, epr) -> tuple[int, int]:
    ctx.apply("CNOT", q, epr)
    ctx.apply("H", q)
    e = ctx.measure(epr)
    m = ctx.measure(q)
    return e, m


def _prepare(ctx, gates) -> QubitRef:
    q = ctx.new_qubit()
    for name, theta in gates:
        ctx.apply(name, q, theta=theta)
    return q


def input_program(gate_node: str, prep, tag: str = "bell"):
    """One input qubit teleported into ``gate_node``; sends ``[epr_bit, input_bit]``."""
    def program(ctx):
        epr = yield ctx.recv_epr(gate_node)
        yield ctx.flush()
        q = _prepare(ctx, prep)
        yield ctx.flush()
        bits = _bell_measure(ctx, q, epr)
        yield ctx.flush()
        ctx.send(gate_node, bits, tag)
    return program


def sender_program(peer: str, preps, tag: str = "bell"):
    """All inputs on one node; sends ``[e0, m0, e1, m1, ...]`` in one message."""
    def program(ctx):
        eprs = []
        for _ in preps:
            eprs.append((yield ctx.recv_epr(peer)))
        yield ctx.flush()
        qs = [_prepare(ctx, prep) for prep in preps]
        yield ctx.flush()
        bits = []
        for q, epr in zip(qs, eprs):
            bits.extend(_bell_measure(ctx, q, epr))
        yield ctx.flush()
        ctx.send(peer, bits, tag)
    return program


def _apply_circuit(ctx, circuit: CorrectionCircuit, qubits: Sequence[QubitRef]) -> None:
    for name, targets, theta in circuit.gates:
        ctx.apply(name, *[qubits[t] for t in targets], theta=theta)


def gate_program(peers: Sequence[str], u: Optional[GateMatrix], circuits: Sequence[CorrectionCircuit],
                 tag: str = "bell"):
    """Receives through ``u``; ``peers[i]`` supplies logical qubit ``i``.

    ``circuits`` follow the basis order ``[X_0, Z_0, X_1, Z_1, ...]``; the EPR
    bit of qubit ``i`` selects ``X_i`` and the input bit selects ``Z_i``.
    """
    def program(ctx):
        eprs = [ctx.create_epr(peer) for peer in peers]
        if u is not None:
            ctx.apply(u, *eprs)
        yield ctx.flush()
        bits: list[int] = []
        for peer in dict.fromkeys(peers):
            bits.extend((yield ctx.recv(peer, tag)))
        for bit, circuit in zip(bits, circuits):
            if bit:
                _apply_circuit(ctx, circuit, eprs)
        return tuple(eprs)
    return program


# --- protocol drivers -------------------------------------------------------

@lru_cache(maxsize=None)
def _circuits_for(label: str, elements: bytes, n: int) -> tuple[CorrectionCircuit, ...]:
    u = GateMatrix(np.frombuffer(elements, dtype=complex).reshape(2**n, 2**n), label)
    return tuple(c for _, c in correction_circuits(correction_table(u), u))


def synthesized_circuits(u: GateMatrix) -> tuple[CorrectionCircuit, ...]:
    return _circuits_for(u.label, u.elements.tobytes(), u.n_qubits)


def _identity_circuits(n: int) -> tuple[CorrectionCircuit, ...]:
    eye = GateMatrix(np.eye(2**n), "I")
    return tuple(CorrectionCircuit((), eye) for _ in range(2 * n))


def _require_nodes(sim: Simulation, nodes: Sequence[str], links: Sequence[tuple[str, str]], what: str) -> None:
    cfg = sim.cfg
    if sorted(cfg.node_names) != sorted(nodes):
        raise NetworkError(f"{what} needs nodes {sorted(nodes)}, network has {sorted(cfg.node_names)}")
    for a, b in links:
        cfg.quantum_link(a, b)
        if not cfg.has_classical_link(a, b):
            raise NetworkError(f"{what} needs a classical link between {a!r} and {b!r}")


def _require_clifford(u: GateMatrix) -> None:
    level = clifford_level(u, 3)
    if level is None or level > 2:
        shown = "above 3" if level is None else str(level)
        raise UnsupportedGateError(
            f"gate {u.label} has clifford_level {shown}; Pauli corrections need level <= 2")


def _check_inputs(inp: InputSpec, n: int) -> None:
    if inp.n_qubits != n:
        raise ValueError(f"protocol needs {n} input qubits, got {inp.n_qubits}")


def _finish(protocol, u, inp, outcome, receiver, n) -> TeleportResult:
    ideal = inp.state()
    if u is not None:
        ideal = apply_gate(ideal, u, list(range(n)))
    results = []
    outputs: tuple[QubitRef, ...] = ()
    for b in outcome.branches:
        outputs = b.returns[receiver]
        rho = b.reduced(outputs)
        results.append(BranchResult(b.outcomes, b.probability, fidelity_pure(rho, ideal), rho))
    label = "I" if u is None else u.label
    return TeleportResult(protocol, label, outcome.mode, tuple(results), outputs, ideal)


def _two_node(sim, protocol, u, inp, n, mode, seed, corrections) -> TeleportResult:
    _require_nodes(sim, [SENDER, RECEIVER], [(SENDER, RECEIVER)], f"protocol {protocol!r}")
    _check_inputs(inp, n)
    if not corrections:
        circuits = _identity_circuits(n)
    elif u is None:
        circuits = synthesized_circuits(GateMatrix(np.eye(2**n), "I"))
    else:
        circuits = synthesized_circuits(u)
    programs = {
        SENDER: sender_program(RECEIVER, inp.prep_gates),
        RECEIVER: gate_program([SENDER] * n, u, circuits),
    }
    outcome = run(sim, programs, mode, seed)
    return _finish(protocol, u, inp, outcome, RECEIVER, n)


def _star(sim, protocol, u, inp, n, mode, seed, corrections) -> TeleportResult:
    leaves = [input_node(i) for i in range(n)]
    _require_nodes(sim, [GATE] + leaves, [(l, GATE) for l in leaves], f"protocol {protocol!r}")
    _check_inputs(inp, n)
    circuits = synthesized_circuits(u) if corrections else _identity_circuits(n)
    programs = {leaf: input_program(GATE, prep) for leaf, prep in zip(leaves, inp.prep_gates)}
    programs[GATE] = gate_program(leaves, u, circuits)
    outcome = run(sim, programs, mode, seed)
    return _finish(protocol, u, inp, outcome, GATE, n)


def state_teleport(sim: Simulation, inp: Optional[InputSpec] = None, mode: str = "exact",
                   seed: Optional[int] = 0, corrections: bool = True) -> TeleportResult:
    """Plain teleportation: X on the EPR bit, Z on the input bit."""
    inp = inp or InputSpec.hadamard(1)
    return _two_node(sim, "state", None, inp, 1, mode, seed, corrections)


def single_gate_teleport(sim: Simulation, u: GateMatrix, inp: Optional[InputSpec] = None,
                         mode: str = "exact", seed: Optional[int] = 0,
                         corrections: bool = True) -> TeleportResult:
    if u.n_qubits != 1:
        raise UnsupportedGateError(f"single_gate_teleport needs a one-qubit gate, got {u.label}")
    _require_clifford(u)
    inp = inp or InputSpec.hadamard(1)
    return _two_node(sim, "single", u, inp, 1, mode, seed, corrections)


def two_node_gate_teleport(sim: Simulation, u: GateMatrix, inp: Optional[InputSpec] = None,
                           mode: str = "exact", seed: Optional[int] = 0,
                           corrections: bool = True) -> TeleportResult:
    if u.n_qubits != 2:
        raise UnsupportedGateError(f"two-qubit protocol cannot teleport {u.label}")
    _require_clifford(u)
    inp = inp or InputSpec.hadamard(2)
    return _two_node(sim, "two_node", u, inp, 2, mode, seed, corrections)


def three_node_gate_teleport(sim: Simulation, u: GateMatrix, inp: Optional[InputSpec] = None,
                             mode: str = "exact", seed: Optional[int] = 0,
                             corrections: bool = True) -> TeleportResult:
    if u.n_qubits != 2:
        raise UnsupportedGateError(f"three-node protocol cannot teleport {u.label}")
    _require_clifford(u)
    inp = inp or InputSpec.hadamard(2)
    return _star(sim, "three_node", u, inp, 2, mode, seed, corrections)


def toffoli_teleport(sim: Simulation, inp: Optional[InputSpec] = None, mode: str = "exact",
                     seed: Optional[int] = 0, corrections: bool = True) -> TeleportResult:
    """Toffoli through a four-node star; corrections are Pauli-exponential circuits."""
    inp = inp or InputSpec.hadamard(3)
    return _star(sim, "toffoli", gate_by_name("TOFF"), inp, 3, mode, seed, corrections)


def teleport(protocol: str, sim: Simulation, gate: Optional[str] = None, inp: Optional[InputSpec] = None,
             mode: str = "exact", seed: Optional[int] = 0, corrections: bool = True) -> TeleportResult:
    """Dispatch by protocol name."""
    if protocol == "state":
        return state_teleport(sim, inp, mode, seed, corrections)
    if protocol == "toffoli":
        return toffoli_teleport(sim, inp, mode, seed, corrections)
    if gate is None:
        raise ValueError(f"protocol {protocol!r} needs a gate")
    u = gate_by_name(gate)
    drivers = {"single": single_gate_teleport, "two_node": two_node_gate_teleport,
               "three_node": three_node_gate_teleport}
    if protocol not in drivers:
        raise ValueError(f"unknown protocol {protocol!r}; choose from {', '.join(PROTOCOLS)}")
    return drivers[protocol](sim, u, inp, mode, seed, corrections)
