"""Dense density-matrix simulation on labeled qubits.

States are immutable ``DensityMatrix`` values whose qubits carry globally
unique string labels. Every operation returns a new value; the matrix
ordering follows the label order (first label is the most significant
bit), matching ``numpy.kron``.

Bit convention for measurements: eigenvalue +1 is bit 0, eigenvalue -1
is bit 1, so the XOR of several bits is 0 exactly when the product of the
eigenvalues is +1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import CapacityError, DomainError, LabelError, ValidationError

DEFAULT_QUBIT_CAP = 10

# Tolerances: construction/validation, positivity, exact identities.
BUILD_TOL = 1e-10
PSD_TOL = 1e-9
EXACT_TOL = 1e-12

# Branches with less probability than this have no post-measurement state.
_NULL_BRANCH = 1e-15


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.complex128)
    arr.flags.writeable = False
    return arr


# ── Paulis and Bell states ──────────────────────────────────────────────


class Pauli(enum.Enum):
    """Single-qubit Pauli operator. ``I`` is only used internally."""

    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"

    @property
    def matrix(self) -> np.ndarray:
        return _PAULI_MATRICES[self]

    @property
    def eigenbasis(self) -> np.ndarray:
        """Unitary whose columns are the +1 and -1 eigenvectors."""
        if self is Pauli.I:
            raise ValidationError("I has no measurement eigenbasis")
        return _EIGENBASES[self]

    def projector(self, bit: int) -> np.ndarray:
        """Eigenprojector for the outcome ``bit`` (0 ↔ +1, 1 ↔ -1)."""
        if self is Pauli.I:
            raise ValidationError("I is not a measurable observable")
        sign = 1.0 if bit == 0 else -1.0
        return (_PAULI_MATRICES[Pauli.I] + sign * self.matrix) / 2

    @classmethod
    def parse(cls, text: Union[str, "Pauli"]) -> "Pauli":
        if isinstance(text, Pauli):
            return text
        key = str(text).strip().upper()
        if key.startswith("SIGMA_"):
            key = key[len("SIGMA_"):]
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"Unknown Pauli observable '{text}'") from None


MEASURABLE = (Pauli.X, Pauli.Y, Pauli.Z)

_PAULI_MATRICES = {
    Pauli.I: _frozen([[1, 0], [0, 1]]),
    Pauli.X: _frozen([[0, 1], [1, 0]]),
    Pauli.Y: _frozen([[0, -1j], [1j, 0]]),
    Pauli.Z: _frozen([[1, 0], [0, -1]]),
}

_EIGENBASES = {
    Pauli.X: _frozen(np.array([[1, 1], [1, -1]]) / np.sqrt(2)),
    Pauli.Y: _frozen(np.array([[1, 1], [1j, -1j]]) / np.sqrt(2)),
    Pauli.Z: _frozen(np.eye(2)),
}


def require_measurable(obs: Pauli) -> Pauli:
    obs = Pauli.parse(obs)
    if obs is Pauli.I:
        raise ValidationError("I is not a measurable observable")
    return obs


class BellIndex(enum.Enum):
    """The four Bell states, Φ± = (|00⟩±|11⟩)/√2 and Ψ± = (|01⟩±|10⟩)/√2."""

    PHI_PLUS = "PhiPlus"
    PHI_MINUS = "PhiMinus"
    PSI_PLUS = "PsiPlus"
    PSI_MINUS = "PsiMinus"

    @property
    def vector(self) -> np.ndarray:
        return _BELL_VECTORS[self]


_BELL_VECTORS = {
    BellIndex.PHI_PLUS: _frozen(np.array([1, 0, 0, 1]) / np.sqrt(2)),
    BellIndex.PHI_MINUS: _frozen(np.array([1, 0, 0, -1]) / np.sqrt(2)),
    BellIndex.PSI_PLUS: _frozen(np.array([0, 1, 1, 0]) / np.sqrt(2)),
    BellIndex.PSI_MINUS: _frozen(np.array([0, 1, -1, 0]) / np.sqrt(2)),
}


@dataclass(frozen=True)
class MeasurementOutcome:
    bit: int
    probability: float

    @property
    def eigenvalue(self) -> int:
        return 1 if self.bit == 0 else -1


def bit_of(eigenvalue: float) -> int:
    """Map a ±1 eigenvalue to its bit."""
    return 0 if eigenvalue > 0 else 1


def parity(bits: Iterable[int]) -> int:
    out = 0
    for b in bits:
        out ^= int(b)
    return out


# ── Gates ───────────────────────────────────────────────────────────────


def controlled(op: np.ndarray) -> np.ndarray:
    """Two-qubit gate applying ``op`` to the second qubit when the first is |1⟩."""
    out = np.zeros((4, 4), dtype=np.complex128)
    out[:2, :2] = np.eye(2)
    out[2:, 2:] = op
    return _frozen(out)


CNOT = controlled(Pauli.X.matrix)
CZ = controlled(Pauli.Z.matrix)


def is_unitary(u: np.ndarray, tol: float = BUILD_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) <= tol)


# ── DensityMatrix ───────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density operator on an ordered tuple of qubit labels.

    Construction checks shape, label uniqueness and finiteness only; the
    physical invariants are checked by ``check()`` (constructors in
    ``states`` call it, operations preserve them by construction).
    """

    matrix: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"Density matrix must be square, got shape {m.shape}")
        if len(set(labels)) != len(labels):
            raise LabelError(f"Duplicate qubit labels: {labels}")
        if m.shape[0] != 2 ** len(labels):
            raise LabelError(
                f"{len(labels)} label(s) do not match matrix dimension {m.shape[0]}"
            )
        if not np.all(np.isfinite(m)):
            raise ValidationError("Density matrix has non-finite entries")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_vector(cls, vector, labels: Sequence[str]) -> "DensityMatrix":
        v = np.asarray(vector, dtype=np.complex128).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValidationError("Zero state vector")
        v = v / norm
        return cls(np.outer(v, v.conj()), tuple(labels))

    @property
    def num_qubits(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelError(f"Unknown qubit label '{label}' (have {self.labels})") from None

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def relabel(self, labels: Sequence[str]) -> "DensityMatrix":
        """Same matrix, new labels (positionally)."""
        return DensityMatrix(self.matrix, tuple(labels))

    def check(self, tol: float = BUILD_TOL) -> "DensityMatrix":
        """Raise ``ValidationError`` unless Hermitian, unit-trace and PSD."""
        m = self.matrix
        herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
        if herm > tol:
            raise ValidationError(f"Not Hermitian (deviation {herm:.3e})")
        tr = np.trace(m)
        if abs(tr - 1) > tol:
            raise ValidationError(f"Trace is {tr.real:.12g}, expected 1")
        low = min_eigenvalue(m)
        if low < -PSD_TOL:
            raise ValidationError(f"Not positive semidefinite (min eigenvalue {low:.3e})")
        return self

    def is_valid(self, tol: float = BUILD_TOL) -> bool:
        try:
            self.check(tol)
        except ValidationError:
            return False
        return True


def basis_state(bits: str, labels: Sequence[str]) -> DensityMatrix:
    """Computational basis projector, e.g. ``basis_state("01", ("a", "b"))``."""
    if len(bits) != len(labels) or set(bits) - {"0", "1"}:
        raise DomainError(f"Bad basis string '{bits}' for labels {tuple(labels)}")
    vec = np.zeros(2 ** len(bits), dtype=np.complex128)
    vec[int(bits, 2) if bits else 0] = 1
    return DensityMatrix.from_vector(vec, labels)


def maximally_mixed(labels: Sequence[str]) -> DensityMatrix:
    d = 2 ** len(labels)
    return DensityMatrix(np.eye(d) / d, tuple(labels))


# ── Tensor helpers ──────────────────────────────────────────────────────


def _as_tensor(state: DensityMatrix) -> np.ndarray:
    q = state.num_qubits
    return state.matrix.reshape((2,) * (2 * q))


def _from_tensor(t: np.ndarray, q: int) -> np.ndarray:
    return t.reshape(2 ** q, 2 ** q)


def _contract(t: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply ``op`` (2^k × 2^k) to the tensor axes ``axes``."""
    k = len(axes)
    op_t = np.asarray(op).reshape((2,) * (2 * k))
    out = np.tensordot(op_t, t, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _indices(state: DensityMatrix, labels: Sequence[str]) -> list[int]:
    idx = [state.index_of(label) for label in labels]
    if len(set(idx)) != len(idx):
        raise LabelError(f"Repeated target labels: {tuple(labels)}")
    return idx


def _sandwich(state: DensityMatrix, op: np.ndarray, targets: Sequence[str]) -> np.ndarray:
    """Return op·ρ·op† with ``op`` acting on ``targets`` (no checks on op)."""
    q = state.num_qubits
    rows = _indices(state, targets)
    t = _contract(_as_tensor(state), op, rows)
    t = _contract(t, np.conj(op), [q + i for i in rows])
    return _from_tensor(t, q)


# ── Operations ──────────────────────────────────────────────────────────


def tensor_product(
    a: DensityMatrix, b: DensityMatrix, cap: int = DEFAULT_QUBIT_CAP
) -> DensityMatrix:
    overlap = set(a.labels) & set(b.labels)
    if overlap:
        raise LabelError(f"Overlapping labels in tensor product: {sorted(overlap)}")
    q = a.num_qubits + b.num_qubits
    if q > cap:
        raise CapacityError(f"Tensor product needs {q} qubits, cap is {cap}")
    return DensityMatrix(np.kron(a.matrix, b.matrix), a.labels + b.labels)


def apply_unitary(
    state: DensityMatrix, u: np.ndarray, targets: Sequence[str]
) -> DensityMatrix:
    targets = tuple(targets)
    u = np.asarray(u, dtype=np.complex128)
    k = len(targets)
    if u.shape != (2 ** k, 2 ** k):
        raise ValidationError(f"Operator shape {u.shape} does not fit {k} target qubit(s)")
    if not is_unitary(u):
        raise ValidationError("Operator is not unitary within 1e-10")
    return DensityMatrix(_sandwich(state, u, targets), state.labels)


def permute_qubits(state: DensityMatrix, new_order: Sequence[str]) -> DensityMatrix:
    new_order = tuple(new_order)
    if sorted(new_order) != sorted(state.labels) or len(set(new_order)) != len(new_order):
        raise LabelError(f"{new_order} is not a permutation of {state.labels}")
    q = state.num_qubits
    perm = [state.labels.index(label) for label in new_order]
    t = _as_tensor(state).transpose(perm + [q + p for p in perm])
    return DensityMatrix(_from_tensor(t, q), new_order)


def partial_trace(state: DensityMatrix, discard: Iterable[str]) -> DensityMatrix:
    discard = set(discard)
    unknown = discard - set(state.labels)
    if unknown:
        raise LabelError(f"Cannot trace out unknown qubit(s) {sorted(unknown)}")
    if discard and discard >= set(state.labels):
        raise DomainError("Cannot trace out every qubit of a state")
    q = state.num_qubits
    t = _as_tensor(state)
    for idx in sorted((state.labels.index(label) for label in discard), reverse=True):
        t = np.trace(t, axis1=idx, axis2=idx + q)
        q -= 1
    keep = tuple(label for label in state.labels if label not in discard)
    return DensityMatrix(_from_tensor(t, q), keep)


def partial_transpose(state: DensityMatrix, subset: Iterable[str]) -> np.ndarray:
    """Transpose on the indices of ``subset``; returns a plain matrix."""
    q = state.num_qubits
    idx = _indices(state, tuple(subset))
    axes = list(range(2 * q))
    for i in idx:
        axes[i], axes[q + i] = axes[q + i], axes[i]
    t = _as_tensor(state).transpose(axes)
    return np.ascontiguousarray(_from_tensor(t, q))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    if set(a.labels) != set(b.labels):
        raise LabelError(f"Label sets differ: {a.labels} vs {b.labels}")
    if a.labels != b.labels:
        b = permute_qubits(b, a.labels)
    diff = a.matrix - b.matrix
    evals = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(min(1.0, max(0.0, 0.5 * np.sum(np.abs(evals)))))


def min_eigenvalue(m) -> float:
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"Expected a square matrix, got shape {m.shape}")
    dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if dev > BUILD_TOL:
        raise ValidationError(f"Matrix is not Hermitian (deviation {dev:.3e})")
    return float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])


# ── Measurement ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Branch:
    """One outcome of a projective measurement, computed without sampling."""

    outcome: Union[int, BellIndex]
    probability: float
    state: Optional[DensityMatrix]


def _project(state: DensityMatrix, projector: np.ndarray, targets: Sequence[str], outcome):
    projected = _sandwich(state, projector, targets)
    prob = float(np.real(np.trace(projected)))
    prob = min(1.0, max(0.0, prob))
    post = None
    if prob > _NULL_BRANCH:
        post = DensityMatrix(projected / prob, state.labels)
    return Branch(outcome, prob, post)


def outcome_distribution(state: DensityMatrix, qubit: str, obs: Pauli) -> tuple[Branch, Branch]:
    """Both branches (bit 0, bit 1) of measuring ``obs`` on ``qubit``."""
    obs = require_measurable(obs)
    state.index_of(qubit)
    return tuple(_project(state, obs.projector(bit), (qubit,), bit) for bit in (0, 1))


def _sample(branches: Sequence[Branch], rng: np.random.Generator) -> Branch:
    live = [b for b in branches if b.state is not None]
    total = sum(b.probability for b in live)
    r = rng.random() * total
    acc = 0.0
    for branch in live:
        acc += branch.probability
        if r < acc:
            return branch
    return live[-1]


def measure_pauli(
    state: DensityMatrix, qubit: str, obs: Pauli, rng: np.random.Generator
) -> tuple[MeasurementOutcome, DensityMatrix]:
    branch = _sample(outcome_distribution(state, qubit, obs), rng)
    return MeasurementOutcome(branch.outcome, branch.probability), branch.state


def bell_projector(idx: BellIndex) -> np.ndarray:
    v = idx.vector
    return np.outer(v, v.conj())


def bell_distribution(state: DensityMatrix, q1: str, q2: str) -> tuple[Branch, ...]:
    """All four Bell-basis branches on ``(q1, q2)``."""
    if q1 == q2:
        raise LabelError(f"Bell measurement needs two distinct qubits, got '{q1}' twice")
    _indices(state, (q1, q2))
    return tuple(_project(state, bell_projector(idx), (q1, q2), idx) for idx in BellIndex)


def measure_bell(
    state: DensityMatrix, q1: str, q2: str, rng: np.random.Generator
) -> tuple[BellIndex, DensityMatrix]:
    branch = _sample(bell_distribution(state, q1, q2), rng)
    return branch.outcome, branch.state


def expectation(state: DensityMatrix, op: np.ndarray, targets: Sequence[str]) -> float:
    """Real part of Tr(op ρ) with ``op`` acting on ``targets``."""
    q = state.num_qubits
    t = _contract(_as_tensor(state), op, _indices(state, tuple(targets)))
    return float(np.real(np.trace(_from_tensor(t, q))))


# ── Debug dump ──────────────────────────────────────────────────────────


def _fmt(x: float) -> str:
    return format(float(x) + 0.0, ".17g")


def dump_matrix(m) -> str:
    """Text dump: ``dim=<d>`` then d rows of comma-separated ``re im`` pairs."""
    m = np.asarray(m, dtype=np.complex128)
    lines = [f"dim={m.shape[0]}"]
    for row in m:
        lines.append(",".join(f"{_fmt(z.real)} {_fmt(z.imag)}" for z in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("dim="):
        raise ValidationError("Matrix dump must start with 'dim=<d>'")
    d = int(lines[0][len("dim="):])
    if len(lines) != d + 1:
        raise ValidationError(f"Expected {d} rows, found {len(lines) - 1}")
    out = np.zeros((d, d), dtype=np.complex128)
    for i, line in enumerate(lines[1:]):
        pairs = line.split(",")
        if len(pairs) != d:
            raise ValidationError(f"Row {i} has {len(pairs)} entries, expected {d}")
        for j, pair in enumerate(pairs):
            re_part, im_part = pair.split()
            out[i, j] = complex(float(re_part), float(im_part))
    return out
