"""Dense state-vector and density-matrix algebra for small registers.

Qubit 0 is the most significant bit of a basis index (big-endian), so a
circuit drawn top-to-bottom maps onto ``|q0 q1 ... q_{n-1}>``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

ATOL = 1e-10
ZERO_BRANCH = 1e-12


class GateError(ValueError):
    pass


@dataclass(frozen=True)
class Statevector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        n = _n_qubits_for(amps.shape[0])
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "_n", n)

    @property
    def n_qubits(self) -> int:
        return self._n

    @classmethod
    def zeros(cls, n_qubits: int) -> "Statevector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def from_bits(cls, bits: str) -> "Statevector":
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "Statevector":
        return Statevector(self.amplitudes / self.norm())

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def tensor(self, other: "Statevector") -> "Statevector":
        return Statevector(np.kron(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    elements: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        n = _n_qubits_for(rho.shape[0])
        object.__setattr__(self, "elements", rho)
        object.__setattr__(self, "_n", n)

    @property
    def n_qubits(self) -> int:
        return self._n

    @classmethod
    def zeros(cls, n_qubits: int) -> "DensityMatrix":
        rho = np.zeros((2**n_qubits, 2**n_qubits), dtype=complex)
        rho[0, 0] = 1.0
        return cls(rho)

    def trace(self) -> complex:
        return complex(np.trace(self.elements))

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.elements, other.elements))

    def check(self, atol: float = ATOL, psd: bool = False) -> None:
        """Raise ``AssertionError`` if the matrix is not a valid state."""
        rho = self.elements
        herm = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
        assert herm <= atol, f"density matrix not Hermitian (deviation {herm:.3e})"
        tr = np.trace(rho)
        assert abs(tr - 1.0) <= atol, f"density matrix trace {tr} != 1"
        if psd:
            low = float(np.min(np.linalg.eigvalsh(rho)))
            assert low >= -1e-9, f"density matrix has negative eigenvalue {low:.3e}"


State = Union[Statevector, DensityMatrix]


@dataclass(frozen=True)
class GateMatrix:
    elements: np.ndarray
    label: str = "U"

    def __post_init__(self):
        u = np.asarray(self.elements, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise GateError(f"gate {self.label!r} must be a square matrix")
        object.__setattr__(self, "elements", u)
        object.__setattr__(self, "_n", _n_qubits_for(u.shape[0]))

    @property
    def n_qubits(self) -> int:
        return self._n

    @property
    def dagger(self) -> "GateMatrix":
        return GateMatrix(self.elements.conj().T, self.label + "^dag")

    def is_unitary(self, atol: float = ATOL) -> bool:
        u = self.elements
        return bool(np.allclose(u @ u.conj().T, np.eye(u.shape[0]), atol=atol, rtol=0))

    def __matmul__(self, other: "GateMatrix") -> "GateMatrix":
        return GateMatrix(self.elements @ other.elements, f"{self.label}*{other.label}")


@dataclass(frozen=True)
class MeasurementBranch:
    outcome: int
    probability: float
    post_state: Optional[DensityMatrix]

    @property
    def valid(self) -> bool:
        return self.post_state is not None


def _n_qubits_for(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


# --- gate library -----------------------------------------------------------

_SQ2 = 1 / np.sqrt(2)
_FIXED = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]]),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.array([[1, 0], [0, -1]]),
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]]),
    "S": np.array([[1, 0], [0, 1j]]),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]),
    "CZ": np.diag([1, 1, 1, -1]),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]),
    "TOFF": np.eye(8)[[0, 1, 2, 3, 4, 5, 7, 6]],
}
_ALIASES = {"CX": "CNOT", "CCX": "TOFF", "TOFFOLI": "TOFF", "ID": "I"}
ROTATIONS = ("RX", "RY", "RZ")

# circuit time order for the double CNOT: control 0 first, then control 1
DCNOT_ORDER = ("01", "10")


def _cnot_reversed() -> np.ndarray:
    swap = _FIXED["SWAP"]
    return swap @ _FIXED["CNOT"] @ swap


def _dcnot(order: Sequence[str] = DCNOT_ORDER) -> np.ndarray:
    first, second = ({"01": _FIXED["CNOT"], "10": _cnot_reversed()}[o] for o in order)
    return second @ first


_ANGLE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)?)\*?(PI)?(?:/([+-]?\d+\.?\d*))?$")


def parse_angle(text: str) -> float:
    """Parse ``0.3``, ``pi``, ``-pi/2``, ``3*pi/4`` and similar."""
    m = _ANGLE.match(text.strip().upper().replace(" ", ""))
    if not m or not (m.group(1) not in ("", "+", "-") or m.group(2)):
        raise GateError(f"cannot parse rotation angle {text!r}")
    coeff, pi, denom = m.groups()
    value = float(coeff + "1") if coeff in ("", "+", "-") else float(coeff)
    if pi:
        value *= np.pi
    if denom:
        value /= float(denom)
    return value


def rotation(axis: str, theta: float) -> np.ndarray:
    """``exp(-i theta/2 P)`` for ``P`` in {X, Y, Z}."""
    pauli = {"X": _FIXED["X"], "Y": _FIXED["Y"], "Z": _FIXED["Z"]}[axis]
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * pauli


def gate_names() -> list[str]:
    return sorted(list(_FIXED) + ["DCNOT"] + list(ROTATIONS))


def gate_by_name(name: str, theta: Optional[float] = None,
                 dcnot_order: Sequence[str] = DCNOT_ORDER) -> GateMatrix:
    """Look up a library gate.

    Rotations accept either ``gate_by_name("RZ", 0.3)`` or the inline form
    ``gate_by_name("RZ(0.3)")``.
    """
    key = name.strip().upper()
    if "(" in key and key.endswith(")"):
        key, arg = key[:-1].split("(", 1)
        theta = parse_angle(arg)
    key = _ALIASES.get(key, key)
    if key in ROTATIONS:
        if theta is None:
            raise GateError(f"rotation gate {name!r} needs an angle")
        return GateMatrix(rotation(key[1], theta), f"{key}({theta:g})")
    if key == "DCNOT":
        return GateMatrix(_dcnot(dcnot_order), "DCNOT")
    if key not in _FIXED:
        raise GateError(f"unknown gate {name!r}")
    return GateMatrix(_FIXED[key], key)


# --- tensor helpers ---------------------------------------------------------

def _check_targets(targets: Sequence[int], n: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise GateError(f"duplicate target qubits {targets}")
    for t in targets:
        if not 0 <= t < n:
            raise GateError(f"qubit index {t} out of range for {n} qubits")
    return targets


def _apply_on_axes(tensor: np.ndarray, u: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    ut = u.reshape((2,) * (2 * k))
    out = np.tensordot(ut, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def embed(u: np.ndarray, targets: Sequence[int], n_qubits: int) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix acting as ``u`` on ``targets``."""
    targets = _check_targets(targets, n_qubits)
    dim = 2**n_qubits
    eye = np.eye(dim, dtype=complex).reshape((2,) * n_qubits + (dim,))
    return _apply_on_axes(eye, np.asarray(u, dtype=complex), targets).reshape(dim, dim)


def apply_matrix(state: State, u: np.ndarray, targets: Sequence[int]) -> State:
    n = state.n_qubits
    targets = _check_targets(targets, n)
    u = np.asarray(u, dtype=complex)
    if u.shape != (2 ** len(targets),) * 2:
        raise GateError(f"{u.shape[0]}-dim operator cannot act on {len(targets)} targets")
    if isinstance(state, Statevector):
        psi = state.amplitudes.reshape((2,) * n)
        return Statevector(_apply_on_axes(psi, u, targets).reshape(-1))
    rho = state.elements.reshape((2,) * (2 * n))
    rho = _apply_on_axes(rho, u, targets)
    rho = _apply_on_axes(rho, u.conj(), [t + n for t in targets])
    return DensityMatrix(rho.reshape(2**n, 2**n))


def apply_gate(state: State, g: GateMatrix, targets: Sequence[int]) -> State:
    if len(targets) != g.n_qubits:
        raise GateError(f"gate {g.label} acts on {g.n_qubits} qubits, got targets {tuple(targets)}")
    return apply_matrix(state, g.elements, targets)


def measure_branches(state: State, qubit: int) -> tuple[MeasurementBranch, MeasurementBranch]:
    """Both computational-basis outcomes of measuring ``qubit``.

    Branches with probability below ``ZERO_BRANCH`` carry ``post_state=None``.
    """
    if isinstance(state, Statevector):
        state = state.to_density()
    n = state.n_qubits
    (qubit,) = _check_targets([qubit], n)
    rho = state.elements.reshape(2**qubit, 2, 2 ** (n - qubit - 1), 2**qubit, 2, 2 ** (n - qubit - 1))
    branches = []
    for m in (0, 1):
        proj = np.zeros_like(rho)
        proj[:, m, :, :, m, :] = rho[:, m, :, :, m, :]
        proj = proj.reshape(2**n, 2**n)
        p = float(np.real(np.trace(proj)))
        if p < ZERO_BRANCH:
            branches.append(MeasurementBranch(m, max(p, 0.0), None))
        else:
            branches.append(MeasurementBranch(m, p, DensityMatrix(proj / p)))
    return branches[0], branches[1]


def partial_trace(rho: State, keep: Sequence[int]) -> DensityMatrix:
    if isinstance(rho, Statevector):
        rho = rho.to_density()
    n = rho.n_qubits
    if not keep:
        raise ValueError("partial_trace needs at least one qubit to keep")
    keep = _check_targets(keep, n)
    drop = [q for q in range(n) if q not in keep]
    t = rho.elements.reshape((2,) * (2 * n))
    order = list(keep) + drop + [q + n for q in keep] + [q + n for q in drop]
    dk, dd = 2 ** len(keep), 2 ** len(drop)
    t = np.transpose(t, order).reshape(dk, dd, dk, dd)
    return DensityMatrix(np.einsum("ajbj->ab", t))


def fidelity_pure(rho: State, psi: Statevector) -> float:
    """Overlap ``<psi|rho|psi>`` of a state with a pure reference."""
    if isinstance(rho, Statevector):
        rho = rho.to_density()
    if rho.n_qubits != psi.n_qubits:
        raise ValueError(f"dimension mismatch: {rho.n_qubits} vs {psi.n_qubits} qubits")
    v = psi.amplitudes
    f = float(np.real(v.conj() @ rho.elements @ v))
    return min(max(f, 0.0), 1.0)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    """Compare after aligning the global phase on the largest entry of ``a``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return False
    idx = np.unravel_index(np.argmax(np.abs(a)), a.shape)
    if abs(b[idx]) < atol:
        return bool(np.allclose(a, 0, atol=atol) and np.allclose(b, 0, atol=atol))
    phase = a[idx] / b[idx]
    phase /= abs(phase)
    return bool(np.allclose(a, phase * b, atol=atol, rtol=0))
