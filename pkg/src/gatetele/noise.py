"""Link and device noise: Werner EPR pairs and depolarizing channels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qmath import DensityMatrix, GateMatrix, _check_targets, apply_gate

BELL_PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


class NoiseError(ValueError):
    pass


def _probability(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise NoiseError(f"{name} must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class LinkNoise:
    epr_fidelity: float = 1.0

    def __post_init__(self):
        if not 0.25 <= float(self.epr_fidelity) <= 1.0:
            raise NoiseError(f"epr_fidelity must lie in [0.25, 1], got {self.epr_fidelity}")


@dataclass(frozen=True)
class DeviceNoise:
    single_qubit_depol: float = 0.0
    two_qubit_depol: float = 0.0
    measurement_flip: float = 0.0

    def __post_init__(self):
        for name in ("single_qubit_depol", "two_qubit_depol", "measurement_flip"):
            _probability(name, getattr(self, name))

    @classmethod
    def uniform(cls, p: float, measurement_flip: float = 0.0) -> "DeviceNoise":
        return cls(p, p, measurement_flip)

    @property
    def noiseless(self) -> bool:
        return self.single_qubit_depol == 0 and self.two_qubit_depol == 0 and self.measurement_flip == 0


def werner_epr(f: float) -> DensityMatrix:
    """``p |Phi+><Phi+| + (1-p) I/4`` with ``p = (4f - 1)/3``."""
    LinkNoise(f)
    p = (4 * f - 1) / 3
    rho = p * np.outer(BELL_PHI_PLUS, BELL_PHI_PLUS.conj()) + (1 - p) * np.eye(4) / 4
    return DensityMatrix(rho)


def _twirl(rho: DensityMatrix, targets: tuple[int, ...]) -> np.ndarray:
    """``Tr_T(rho) (x) I_T / d_T`` with the identity put back on ``targets``."""
    n = rho.n_qubits
    rest = [q for q in range(n) if q not in targets]
    k = len(targets)
    order = rest + list(targets) + [q + n for q in rest] + [q + n for q in targets]
    dr, dt = 2 ** len(rest), 2**k
    t = np.transpose(rho.elements.reshape((2,) * (2 * n)), order).reshape(dr, dt, dr, dt)
    reduced = np.einsum("ajbj->ab", t)
    out = np.einsum("ab,jk->ajbk", reduced, np.eye(dt) / dt).reshape((2,) * (2 * n))
    return np.transpose(out, np.argsort(order)).reshape(2**n, 2**n)


def depolarize(rho: DensityMatrix, qubits: Sequence[int], p: float) -> DensityMatrix:
    """Uniform non-identity Pauli error with total probability ``p``.

    Uses the twirl identity ``sum_P P rho P = 4^k Tr_T(rho) (x) I/2^k``.
    """
    p = _probability("depolarizing probability", p)
    targets = _check_targets(qubits, rho.n_qubits)
    k = len(targets)
    if k not in (1, 2):
        raise NoiseError(f"depolarize supports 1 or 2 qubits, got {k}")
    if p == 0:
        return rho
    m = 4**k - 1
    w_rho = 1 - p - p / m
    w_mix = p * 4**k / m
    return DensityMatrix(w_rho * rho.elements + w_mix * _twirl(rho, targets))


def noisy_apply(rho: DensityMatrix, g: GateMatrix, targets: Sequence[int], d: DeviceNoise) -> DensityMatrix:
    """Apply ``g`` followed by the device's depolarizing error on its targets.

    Three-qubit gates get the two-qubit channel on each adjacent target pair.
    """
    out = apply_gate(rho, g, targets)
    targets = tuple(targets)
    if len(targets) == 1:
        return depolarize(out, targets, d.single_qubit_depol)
    if len(targets) == 2:
        return depolarize(out, targets, d.two_qubit_depol)
    for pair in zip(targets, targets[1:]):
        out = depolarize(out, pair, d.two_qubit_depol)
    return out
