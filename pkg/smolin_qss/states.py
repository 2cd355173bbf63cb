"""Bell states, the Smolin state and its generalized family."""

from __future__ import annotations

import string
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .errors import CapacityError, DomainError
from .qsim import (
    CNOT,
    CZ,
    DEFAULT_QUBIT_CAP,
    EXACT_TOL,
    BellIndex,
    DensityMatrix,
    Pauli,
    apply_unitary,
    expectation,
    partial_trace,
    require_measurable,
    tensor_product,
)

PARTY_LABELS = ("A", "B", "C", "D")
CIRCUIT_LABELS = ("alpha", "beta") + PARTY_LABELS


def party_labels(count: int) -> tuple[str, ...]:
    """A, B, C, ... one letter per qubit."""
    if count > len(string.ascii_uppercase):
        raise DomainError(f"No default labels for {count} qubits")
    return tuple(string.ascii_uppercase[:count])


def bell_state(idx: BellIndex, labels: Sequence[str] = ("A", "B")) -> DensityMatrix:
    return DensityMatrix.from_vector(idx.vector, tuple(labels))


def bell_correlation(idx: BellIndex, obs: Pauli) -> int:
    """⟨σ⊗σ⟩ on a Bell state: +1 if both bits agree, -1 if they differ."""
    obs = require_measurable(obs)
    op = np.kron(obs.matrix, obs.matrix)
    return int(round(expectation(bell_state(idx), op, ("A", "B"))))


def smolin4(labels: Sequence[str] = PARTY_LABELS) -> DensityMatrix:
    """Equal mixture of |φ⟩⟨φ|_AB ⊗ |φ⟩⟨φ|_CD over the four Bell states."""
    rho = np.zeros((16, 16), dtype=np.complex128)
    for idx in BellIndex:
        pair = bell_state(idx).matrix
        rho += np.kron(pair, pair)
    return DensityMatrix(rho / 4, tuple(labels)).check()


def smolin_pauli_expansion(labels: Sequence[str] = PARTY_LABELS) -> DensityMatrix:
    """(I⊗4 + X⊗4 + Y⊗4 + Z⊗4) / 16."""
    rho = np.zeros((16, 16), dtype=np.complex128)
    for p in Pauli:
        m = p.matrix
        rho += np.kron(np.kron(m, m), np.kron(m, m))
    return DensityMatrix(rho / 16, tuple(labels)).check()


def _flip_last(state: DensityMatrix, sigma: Pauli) -> DensityMatrix:
    return apply_unitary(state, sigma.matrix, (state.labels[-1],))


def generalized_smolin(
    n: int,
    labels: Optional[Sequence[str]] = None,
    cap: int = DEFAULT_QUBIT_CAP,
) -> DensityMatrix:
    """2n-qubit state from ρ_2 = |Ψ−⟩⟨Ψ−| by the four-term recursion.

    ρ_2k = 1/4 Σ_m (I..I⊗σ_m) ρ_2(k-1) (I..I⊗σ_m) ⊗ (I⊗σ_m) ρ_2 (I⊗σ_m)
    for k = 2..n, so n=2 reproduces the Smolin state. The XOR of all 2n
    same-observable results is deterministic but odd for odd n; see
    ``expected_parity``.
    """
    if n < 1:
        raise DomainError(f"Family index must be >= 1, got {n}")
    if 2 * n > cap:
        raise CapacityError(f"generalized_smolin({n}) needs {2 * n} qubits, cap is {cap}")
    labels = tuple(labels) if labels is not None else party_labels(2 * n)
    if len(labels) != 2 * n:
        raise DomainError(f"Need {2 * n} labels, got {len(labels)}")

    rho = bell_state(BellIndex.PSI_MINUS, labels[:2])
    for k in range(2, n + 1):
        pair = bell_state(BellIndex.PSI_MINUS, labels[2 * k - 2 : 2 * k])
        acc = np.zeros((4 ** k, 4 ** k), dtype=np.complex128)
        for sigma in Pauli:
            acc += tensor_product(_flip_last(rho, sigma), _flip_last(pair, sigma), cap).matrix
        rho = DensityMatrix(acc / 4, labels[: 2 * k])
    return rho.check()


def expected_parity(n: int) -> int:
    """XOR of all 2n same-observable results on generalized_smolin(n).

    The parity is deterministic: each recursion step multiplies the
    correlator ⟨σ^⊗2n⟩ by -1, starting from -1 for |Ψ−⟩, so it is n mod 2.
    """
    if n < 1:
        raise DomainError(f"Family index must be >= 1, got {n}")
    return n % 2


# ── Preparation circuit ─────────────────────────────────────────────────


def circuit_input_state() -> DensityMatrix:
    """|++⟩_αβ ⊗ |Φ+⟩_AB ⊗ |Φ+⟩_CD."""
    plus = np.array([1, 1]) / np.sqrt(2)
    phi = BellIndex.PHI_PLUS.vector
    vec = np.kron(np.kron(plus, plus), np.kron(phi, phi))
    return DensityMatrix.from_vector(vec, CIRCUIT_LABELS).check()


def circuit_unitary() -> np.ndarray:
    """Block-diagonal U = Σ_ab |ab⟩⟨ab|_αβ ⊗ (Z_A Z_C)^b (X_B X_D)^a."""
    eye, x, z = Pauli.I.matrix, Pauli.X.matrix, Pauli.Z.matrix
    u = np.zeros((64, 64), dtype=np.complex128)
    for a, b in product((0, 1), repeat=2):
        sel = np.zeros((4, 4))
        sel[2 * a + b, 2 * a + b] = 1
        op_a = z if b else eye
        op_b = x if a else eye
        block = np.kron(np.kron(op_a, op_b), np.kron(op_a, op_b))
        u += np.kron(sel, block)
    return u


def circuit_output_state() -> DensityMatrix:
    """The six-qubit state after the controlled gates, ancillas included."""
    rho = circuit_input_state()
    rho = apply_unitary(rho, CZ, ("beta", "A"))
    rho = apply_unitary(rho, CZ, ("beta", "C"))
    rho = apply_unitary(rho, CNOT, ("alpha", "B"))
    rho = apply_unitary(rho, CNOT, ("alpha", "D"))
    return rho


def smolin_via_circuit() -> DensityMatrix:
    return partial_trace(circuit_output_state(), ("alpha", "beta")).check()


# ── Joint outcome distributions ─────────────────────────────────────────


@dataclass(frozen=True)
class JointOutcomeDistribution:
    observable: Pauli
    labels: tuple[str, ...]
    probabilities: dict[tuple[int, ...], float]

    def probability(self, bits: Sequence[int]) -> float:
        return self.probabilities.get(tuple(bits), 0.0)

    def support(self, tol: float = EXACT_TOL) -> list[tuple[int, ...]]:
        return [bits for bits, p in self.probabilities.items() if p > tol]

    def parity_mass(self, value: int) -> float:
        """Total probability of tuples whose XOR equals ``value``."""
        return sum(p for bits, p in self.probabilities.items() if sum(bits) % 2 == value)

    def total(self) -> float:
        return sum(self.probabilities.values())


def joint_distribution(state: DensityMatrix, obs: Pauli) -> JointOutcomeDistribution:
    """Exact distribution of measuring ``obs`` on every qubit of ``state``."""
    obs = require_measurable(obs)
    rotate = obs.eigenbasis.conj().T
    rotated = state
    for label in state.labels:
        rotated = apply_unitary(rotated, rotate, (label,))
    diag = np.real(np.diag(rotated.matrix))
    q = state.num_qubits
    probs = {}
    for i, p in enumerate(diag):
        bits = tuple(int(c) for c in format(i, f"0{q}b")) if q else ()
        probs[bits] = max(0.0, float(p))
    return JointOutcomeDistribution(obs, state.labels, probs)
