"""Joint quantum state of one protocol run, kept as disjoint blocks.

Each copy of the Smolin state starts as its own block. Operations that
span several blocks (a Bell measurement across copies, a probe unitary
coupling an ancilla to an intercepted qubit) merge them first with a
tensor product; a merge past the qubit cap raises ``CapacityError``.
A registry belongs to a single run and is mutated in place.
"""

from __future__ import annotations

import logging
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .errors import CapacityError, LabelError
from .qsim import (
    DEFAULT_QUBIT_CAP,
    BellIndex,
    DensityMatrix,
    MeasurementOutcome,
    Pauli,
    apply_unitary,
    measure_bell,
    measure_pauli,
    partial_trace,
    permute_qubits,
    tensor_product,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")


class SystemRegistry:
    def __init__(self, cap: int = DEFAULT_QUBIT_CAP):
        self.cap = cap
        self._blocks: dict[int, DensityMatrix] = {}
        self._owner: dict[str, int] = {}
        self._next_block = 0
        self._fresh = 0
        self.merge_log: list[tuple[tuple[int, ...], int]] = []

    # ── Inspection ──────────────────────────────────────────────────

    @property
    def labels(self) -> set[str]:
        return set(self._owner)

    @property
    def blocks(self) -> dict[int, DensityMatrix]:
        return dict(self._blocks)

    def block_of(self, label: str) -> int:
        try:
            return self._owner[label]
        except KeyError:
            raise LabelError(f"Qubit '{label}' is not live in this run") from None

    def state_of(self, label: str) -> DensityMatrix:
        return self._blocks[self.block_of(label)]

    def reduced(self, labels: Sequence[str]) -> DensityMatrix:
        """Marginal state of ``labels`` without changing the registry."""
        labels = tuple(labels)
        if not labels:
            raise LabelError("Need at least one qubit for a reduced state")
        out = None
        for block_id in dict.fromkeys(self.block_of(label) for label in labels):
            block = self._blocks[block_id]
            wanted = [label for label in block.labels if label in labels]
            part = partial_trace(block, set(block.labels) - set(wanted))
            out = part if out is None else tensor_product(out, part, cap=len(labels))
        return permute_qubits(out, labels)

    def check(self):
        """Every live label belongs to exactly one block within the cap."""
        seen = set()
        for block_id, block in self._blocks.items():
            if block.num_qubits > self.cap:
                raise CapacityError(f"Block {block_id} holds {block.num_qubits} qubits")
            for label in block.labels:
                if label in seen or self._owner.get(label) != block_id:
                    raise LabelError(f"Label '{label}' is not owned by exactly one block")
                seen.add(label)
        if seen != set(self._owner):
            raise LabelError("Registry ownership map is out of sync with its blocks")

    # ── Mutation ────────────────────────────────────────────────────

    def fresh_label(self, prefix: str = "q") -> str:
        self._fresh += 1
        return f"{prefix}~{self._fresh}"

    def add(self, state: DensityMatrix) -> int:
        clash = set(state.labels) & set(self._owner)
        if clash:
            raise LabelError(f"Labels already live: {sorted(clash)}")
        if state.num_qubits > self.cap:
            raise CapacityError(f"State of {state.num_qubits} qubits exceeds cap {self.cap}")
        block_id = self._next_block
        self._next_block += 1
        self._blocks[block_id] = state
        for label in state.labels:
            self._owner[label] = block_id
        return block_id

    def merge(self, labels: Iterable[str]) -> int:
        """Merge the blocks holding ``labels`` into one; return its id."""
        ids = list(dict.fromkeys(self.block_of(label) for label in labels))
        if len(ids) == 1:
            return ids[0]
        total = sum(self._blocks[i].num_qubits for i in ids)
        if total > self.cap:
            names = ", ".join(f"{i}{self._blocks[i].labels}" for i in ids)
            raise CapacityError(
                f"Merging blocks {names} needs {total} qubits, cap is {self.cap}"
            )
        merged = self._blocks[ids[0]]
        for i in ids[1:]:
            merged = tensor_product(merged, self._blocks[i], cap=self.cap)
        for i in ids[1:]:
            del self._blocks[i]
        self._blocks[ids[0]] = merged
        for label in merged.labels:
            self._owner[label] = ids[0]
        self.merge_log.append((tuple(ids), total))
        logger.debug("merged blocks %s into %d (%d qubits)", ids, ids[0], total)
        return ids[0]

    def apply(
        self,
        labels: Sequence[str],
        operation: Callable[[DensityMatrix], tuple[T, DensityMatrix]],
    ) -> T:
        """Run ``operation`` on the (merged) block holding ``labels``."""
        block_id = self.merge(labels)
        result, new_state = operation(self._blocks[block_id])
        if set(new_state.labels) != set(self._blocks[block_id].labels):
            raise LabelError("Registry operations must keep the block's labels")
        self._blocks[block_id] = new_state
        return result

    def apply_unitary(self, u: np.ndarray, targets: Sequence[str]):
        self.apply(targets, lambda s: (None, apply_unitary(s, u, targets)))

    def measure_pauli(
        self, label: str, obs: Pauli, rng: np.random.Generator
    ) -> MeasurementOutcome:
        return self.apply((label,), lambda s: measure_pauli(s, label, obs, rng))

    def measure_bell(self, q1: str, q2: str, rng: np.random.Generator) -> BellIndex:
        return self.apply((q1, q2), lambda s: measure_bell(s, q1, q2, rng))

    def discard(self, labels: Iterable[str]):
        """Trace qubits out of the run (lost to the environment)."""
        by_block: dict[int, set[str]] = {}
        for label in labels:
            by_block.setdefault(self.block_of(label), set()).add(label)
        for block_id, gone in by_block.items():
            block = self._blocks[block_id]
            if gone >= set(block.labels):
                del self._blocks[block_id]
            else:
                self._blocks[block_id] = partial_trace(block, gone)
            for label in gone:
                del self._owner[label]
