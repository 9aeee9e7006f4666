"""Pauli-string algebra and correction-operator synthesis.

A teleported gate ``U`` leaves the receiver with ``U sigma |phi>`` for some
Pauli ``sigma`` picked by the Bell-measurement outcome.  Rewriting this as
``(U sigma U^dag) U |phi>`` shows the correction is the conjugated Pauli,
so everything here revolves around computing and realising ``U sigma U^dag``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .qmath import GateMatrix, embed, equal_up_to_phase, gate_by_name

PRUNE = 1e-10
LABELS = "IXYZ"

_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class PauliError(ValueError):
    pass


def _fmt_coeff(c: complex) -> str:
    c = complex(c)
    if abs(c.imag) < 1e-12:
        return f"{c.real:g}"
    if abs(c.real) < 1e-12:
        return f"{c.imag:g}j"
    return f"({c.real:g}{c.imag:+g}j)"


@dataclass(frozen=True)
class PauliString:
    factors: str
    coefficient: complex = 1.0

    def __post_init__(self):
        factors = self.factors.upper()
        if not factors or any(f not in LABELS for f in factors):
            raise PauliError(f"invalid Pauli factors {self.factors!r}")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @classmethod
    def single(cls, label: str, qubit: int, n_qubits: int) -> "PauliString":
        factors = ["I"] * n_qubits
        factors[qubit] = label
        return cls("".join(factors))

    @property
    def n_qubits(self) -> int:
        return len(self.factors)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.factors) if f != "I")

    def matrix(self) -> np.ndarray:
        return self.coefficient * _pattern_matrix(self.factors)

    def commutes_with(self, other: "PauliString") -> bool:
        clashes = sum(a != "I" and b != "I" and a != b for a, b in zip(self.factors, other.factors))
        return clashes % 2 == 0

    def __str__(self) -> str:
        body = "⊗".join(self.factors)
        if abs(self.coefficient - 1) < 1e-12:
            return body
        if abs(self.coefficient + 1) < 1e-12:
            return "-" + body
        return f"{_fmt_coeff(self.coefficient)}*{body}"


@dataclass(frozen=True)
class PauliSum:
    terms: tuple[PauliString, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        patterns = [t.factors for t in terms]
        if len(set(patterns)) != len(patterns):
            raise PauliError("PauliSum has duplicate factor patterns")
        if len({len(p) for p in patterns}) > 1:
            raise PauliError("PauliSum terms act on different qubit counts")
        object.__setattr__(self, "terms", terms)

    @property
    def n_qubits(self) -> int:
        return self.terms[0].n_qubits

    def matrix(self) -> np.ndarray:
        return sum(t.matrix() for t in self.terms)

    def commuting(self) -> bool:
        return all(a.commutes_with(b) for a, b in itertools.combinations(self.terms, 2))

    def as_dict(self) -> dict[str, complex]:
        return {t.factors: t.coefficient for t in self.terms}

    def __len__(self) -> int:
        return len(self.terms)

    def __str__(self) -> str:
        parts = []
        for t in self.terms:
            c = t.coefficient
            parts.append(f"{_fmt_coeff(c)}*{'⊗'.join(t.factors)}")
        return " + ".join(parts).replace("+ -", "- ")


Correction = Union[PauliString, PauliSum]


@lru_cache(maxsize=None)
def _pattern_matrix(factors: str) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for f in factors:
        m = np.kron(m, _MATS[f])
    m.flags.writeable = False
    return m


@lru_cache(maxsize=None)
def _basis_stack(n_qubits: int) -> tuple[tuple[str, ...], np.ndarray]:
    patterns = tuple("".join(p) for p in itertools.product(LABELS, repeat=n_qubits))
    stack = np.stack([_pattern_matrix(p) for p in patterns])
    stack.flags.writeable = False
    return patterns, stack


def pauli_decompose(m: np.ndarray, n_qubits: Optional[int] = None) -> PauliSum:
    """Expand ``m`` as ``sum_P c_P P`` with ``c_P = Tr(P^dag m) / 2^n``."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise PauliError(f"expected a square matrix, got shape {m.shape}")
    if n_qubits is None:
        n_qubits = int(m.shape[0]).bit_length() - 1
    if m.shape != (2**n_qubits, 2**n_qubits):
        raise PauliError(f"matrix of shape {m.shape} is not a {n_qubits}-qubit operator")
    patterns, stack = _basis_stack(n_qubits)
    # Paulis are Hermitian, so Tr(P^dag m) = sum_ij conj(P_ij) m_ij
    coeffs = np.tensordot(stack.conj(), m, axes=([1, 2], [0, 1])) / 2**n_qubits
    terms = []
    for pattern, c in zip(patterns, coeffs):
        if abs(c) >= PRUNE:
            c = complex(round(c.real, 12), round(c.imag, 12))
            terms.append(PauliString(pattern, c))
    if not terms:
        raise PauliError("matrix decomposes to zero")
    return PauliSum(tuple(terms))


def conjugate(u: Union[GateMatrix, np.ndarray], p: Union[PauliString, np.ndarray]) -> np.ndarray:
    """Return ``U P U^dag``."""
    um = u.elements if isinstance(u, GateMatrix) else np.asarray(u, dtype=complex)
    pm = p.matrix() if isinstance(p, PauliString) else np.asarray(p, dtype=complex)
    if um.shape != pm.shape:
        raise PauliError(f"dimension mismatch: gate {um.shape} vs operator {pm.shape}")
    return um @ pm @ um.conj().T


def correction_basis(n_qubits: int) -> list[PauliString]:
    """``[X_0, Z_0, X_1, Z_1, ...]``: the errors a Bell measurement can leave."""
    return [PauliString.single(label, q, n_qubits) for q in range(n_qubits) for label in "XZ"]


def _simplify(decomp: PauliSum) -> Correction:
    return decomp.terms[0] if len(decomp) == 1 else decomp


@dataclass(frozen=True)
class CorrectionTable:
    gate_label: str
    entries: tuple[tuple[PauliString, Correction], ...]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, basis: Union[str, PauliString]) -> Correction:
        key = basis.factors if isinstance(basis, PauliString) else basis.upper()
        for b, corr in self.entries:
            if b.factors == key:
                return corr
        raise KeyError(basis)

    def to_text(self) -> str:
        return "\n".join(f"{self.gate_label}, {b} -> {corr}" for b, corr in self.entries)


def _require_unitary(u: GateMatrix) -> None:
    if not u.is_unitary(1e-9):
        raise PauliError(f"gate {u.label} is not unitary")


def correction_table(u: GateMatrix) -> CorrectionTable:
    _require_unitary(u)
    entries = []
    for basis in correction_basis(u.n_qubits):
        entries.append((basis, _simplify(pauli_decompose(conjugate(u, basis), u.n_qubits))))
    return CorrectionTable(u.label, tuple(entries))


def _all_paulis(n_qubits: int) -> list[np.ndarray]:
    patterns, stack = _basis_stack(n_qubits)
    return [stack[i] for i, p in enumerate(patterns) if set(p) != {"I"}]


def _is_pauli(m: np.ndarray, n_qubits: int) -> bool:
    d = pauli_decompose(m, n_qubits)
    return len(d) == 1 and abs(abs(d.terms[0].coefficient) - 1) < 1e-9


def _in_level(m: np.ndarray, n_qubits: int, k: int) -> bool:
    if k == 1:
        return _is_pauli(m, n_qubits)
    # C_1 is a group, so for C_2 its generators suffice; higher levels are not
    # closed under products and need every Pauli.
    paulis = [b.matrix() for b in correction_basis(n_qubits)] if k == 2 else _all_paulis(n_qubits)
    mh = m.conj().T
    return all(_in_level(m @ p @ mh, n_qubits, k - 1) for p in paulis)


def clifford_level(u: GateMatrix, k_max: int = 3) -> Optional[int]:
    """Smallest ``k <= k_max`` with ``u`` in the k-th Clifford hierarchy level.

    Returns ``None`` when ``u`` lies above ``k_max``.
    """
    if not 1 <= k_max <= 4:
        raise ValueError("k_max must be between 1 and 4")
    _require_unitary(u)
    for k in range(1, k_max + 1):
        if _in_level(u.elements, u.n_qubits, k):
            return k
    return None


# --- correction circuits ----------------------------------------------------

GateOp = tuple[str, tuple[int, ...], Optional[float]]

# V with V P V^dag = Z, as (forward ops, unwind ops)
_TO_Z = {
    "X": ((("H", None),), (("H", None),)),
    "Y": ((("RX", np.pi / 2),), (("RX", -np.pi / 2),)),
    "Z": ((), ()),
}


def circuit_matrix(gates: Sequence[GateOp], n_qubits: int) -> np.ndarray:
    total = np.eye(2**n_qubits, dtype=complex)
    for name, targets, angle in gates:
        g = gate_by_name(name, angle)
        total = embed(g.elements, targets, n_qubits) @ total
    return total


@dataclass(frozen=True)
class CorrectionCircuit:
    gates: tuple[GateOp, ...]
    target_unitary: GateMatrix

    def __post_init__(self):
        if not equal_up_to_phase(self.target_unitary.elements, self.matrix(), atol=1e-9):
            raise PauliError(f"circuit does not realise {self.target_unitary.label}")

    @property
    def n_qubits(self) -> int:
        return self.target_unitary.n_qubits

    def matrix(self) -> np.ndarray:
        return circuit_matrix(self.gates, self.target_unitary.n_qubits)

    def __len__(self) -> int:
        return len(self.gates)


def _term_exponential(term: PauliString, angle: float) -> list[GateOp]:
    """Gates for ``exp(-i angle P)``: basis change, parity ladder, RZ, unwind."""
    support = term.support
    if not support:
        return []
    fwd, back = [], []
    for q in support:
        to_z, from_z = _TO_Z[term.factors[q]]
        fwd += [(name, (q,), a) for name, a in to_z]
        back += [(name, (q,), a) for name, a in from_z]
    ladder = [("CNOT", (a, b), None) for a, b in zip(support, support[1:])]
    rz = [("RZ", (support[-1],), 2 * angle)]
    return fwd + ladder + rz + ladder[::-1] + back


def pauli_exponential_circuit(h: Union[PauliSum, PauliString], theta: float,
                              target: Optional[np.ndarray] = None,
                              label: str = "exp(-i theta H)") -> CorrectionCircuit:
    """Circuit for ``exp(-i theta H)`` with ``H = sum_j c_j P_j`` commuting.

    Each term becomes ``RZ(2 c_j theta)`` sandwiched by a CNOT parity ladder
    and local basis changes.  ``target`` overrides the unitary the circuit is
    verified against; by default it is the dense exponential itself.
    """
    if isinstance(h, PauliString):
        h = PauliSum((h,))
    if not h.commuting():
        raise PauliError("Pauli terms do not commute; Trotterisation is not supported")
    coeffs = np.array([t.coefficient for t in h.terms])
    if np.max(np.abs(coeffs.imag)) > 1e-12:
        raise PauliError("Hamiltonian coefficients must be real")
    gates: list[GateOp] = []
    for t in h.terms:
        gates += _term_exponential(t, theta * t.coefficient.real)
    if target is None:
        target = _dense_exponential(h, theta)
    return CorrectionCircuit(tuple(gates), GateMatrix(target, label))


def _dense_exponential(h: PauliSum, theta: float) -> np.ndarray:
    w, v = np.linalg.eigh(h.matrix())
    return (v * np.exp(-1j * theta * w)) @ v.conj().T


def correction_circuit(correction: Correction, target: Optional[np.ndarray] = None) -> CorrectionCircuit:
    """Realise a correction table entry as gates.

    Single Pauli strings become one Pauli gate per non-identity factor.  A
    Hermitian unitary ``H`` equals ``i exp(-i pi/2 H)``, so sums are emitted
    as the exponential at ``theta = pi/2``; with coefficients of magnitude
    one half the rotations come out as ``RZ(+-pi/2)``.
    """
    if isinstance(correction, PauliString):
        if target is None:
            target = correction.matrix()
        gates = tuple((f, (q,), None) for q, f in enumerate(correction.factors) if f != "I")
        return CorrectionCircuit(gates, GateMatrix(target, str(correction)))
    if target is None:
        target = correction.matrix()
    return pauli_exponential_circuit(correction, np.pi / 2, target=target, label=str(correction))


def correction_circuits(table: CorrectionTable, u: GateMatrix) -> list[tuple[PauliString, CorrectionCircuit]]:
    """Circuits for every table entry, each verified against ``U sigma U^dag``."""
    return [(basis, correction_circuit(corr, conjugate(u, basis))) for basis, corr in table]
