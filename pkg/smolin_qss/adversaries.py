"""Cheating strategies and the coalition that runs them.

A coalition is the set of corrupted receiving parties (at most two, never
Alice) plus one strategy. The protocol engine calls the coalition at fixed
points of a run:

  start            once, before any qubit is sent
  receive_own      for each qubit addressed to a member
  intercept        for each qubit in transit to an honest party
  observe          for every broadcast message
  measure_own      when a member measures one of its qubits
  adjust_announcements / announce
                   when members must publish results
  final_guess      after the secret copy's positions are known

Strategies follow the attack model where the cheaters either forward the
intercepted qubit intact, operate on it, substitute a prepared qubit, or
substitute another intercepted qubit. Each strategy only decides what to
forward and what it can later say about the honest party's result.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, ClassVar, Iterable, Optional

import numpy as np

from .errors import ConfigError, DomainError, StrategyInfeasible, ValidationError
from .messages import RECEIVERS, Message, ObservableAnnouncement, PartyId, RevealPositions
from .qsim import (
    MEASURABLE,
    BellIndex,
    DensityMatrix,
    Pauli,
    basis_state,
    bell_distribution,
    is_unitary,
    maximally_mixed,
    outcome_distribution,
    partial_trace,
    permute_qubits,
    tensor_product,
)
from .registry import SystemRegistry
from .states import bell_correlation, bell_state, joint_distribution, smolin4

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Delivery:
    """A qubit handed to ``to`` as its qubit at ``position``."""

    to: PartyId
    position: int
    label: str


@dataclass(frozen=True)
class StrategyParams:
    basis: Pauli = Pauli.Z
    include_own: bool = False
    keep_original: bool = False
    isometry: Optional[tuple[tuple[complex, ...], ...]] = None


# ── Strategies ──────────────────────────────────────────────────────────


class Strategy(ABC):
    """What the coalition does with an intercepted qubit."""

    name: ClassVar[str] = ""

    def check_feasible(self, coalition: "AdversaryCoalition"):
        """Raise ``StrategyInfeasible`` if the run's rules rule the strategy out."""

    @abstractmethod
    def intercept(
        self, coalition: "AdversaryCoalition", target: PartyId, position: int, label: str
    ) -> list[Delivery]:
        """Tamper with a targeted qubit; return what reaches the honest parties."""

    def own_observable(
        self, coalition: "AdversaryCoalition", party: PartyId, position: int, honest: Pauli
    ) -> Pauli:
        """Observable a member picks when it chooses freely (original variant)."""
        return honest

    def on_receive_own(
        self, coalition: "AdversaryCoalition", party: PartyId, position: int, label: str
    ):
        pass

    def honest_bit(
        self, coalition: "AdversaryCoalition", target: PartyId, position: int, obs: Pauli
    ) -> Optional[int]:
        """The coalition's claim about an honest party's result, if it has one."""
        return None

    def final_guess(self, coalition: "AdversaryCoalition", reveal: RevealPositions) -> int:
        obs = coalition.observable_at(reveal)
        if obs is None:
            return coalition.coin()
        bits = []
        for party in RECEIVERS:
            pos = reveal.position_of(party)
            if party in coalition.members:
                record = coalition.own_records.get((party, pos))
                bit = record[1] if record is not None and record[0] is obs else None
            else:
                bit = self.honest_bit(coalition, party, pos, obs)
            if bit is None:
                return coalition.coin()
            bits.append(bit)
        return sum(bits) % 2


class HonestNull(Strategy):
    name = "none"

    def intercept(self, coalition, target, position, label):
        return [Delivery(target, position, label)]


class BellInterceptResend(Strategy):
    """Hold both honest qubits of a copy, Bell-measure them, resend a fresh pair.

    After the Bell measurement the member's qubit and Alice's qubit are
    left in the same Bell state, so the member reads Alice's bit from its
    own result and the state's correlation.
    """

    name = "bell-intercept"

    def __init__(self):
        self._held: dict[int, list[tuple[PartyId, str]]] = {}

    def check_feasible(self, coalition):
        if coalition.ack_gated:
            raise StrategyInfeasible(
                "bell-intercept needs two qubits of the same copy at once, "
                "but every qubit must be forwarded before the next is sent"
            )
        if len(coalition.honest) != 2:
            raise StrategyInfeasible("bell-intercept needs exactly one cheater")

    def intercept(self, coalition, target, position, label):
        held = self._held.setdefault(position, [])
        held.append((target, label))
        if len(held) < 2:
            return []
        (t1, l1), (t2, l2) = held
        del self._held[position]
        registry = coalition.registry
        outcome = registry.measure_bell(l1, l2, coalition.rng)
        coalition.probe_store[position] = outcome
        logger.debug("copy %d: Bell outcome %s", position, outcome.name)
        registry.discard((l1, l2))
        n1, n2 = registry.fresh_label(l1), registry.fresh_label(l2)
        registry.add(bell_state(outcome, (n1, n2)))
        return [Delivery(t1, position, n1), Delivery(t2, position, n2)]

    def final_guess(self, coalition, reveal):
        obs = coalition.observable_at(reveal)
        (member,) = coalition.members
        pos = reveal.position_of(member)
        outcome = coalition.probe_store.get(pos)
        record = coalition.own_records.get((member, pos))
        if obs is None or outcome is None or record is None or record[0] is not obs:
            return coalition.coin()
        flip = 0 if bell_correlation(outcome, obs) == 1 else 1
        return record[1] ^ flip


class SameObservableMeasureResend(Strategy):
    """Measure every intercepted qubit in one fixed basis and forward it."""

    name = "same-observable"

    def __init__(self, basis: Pauli = Pauli.Z, include_own: bool = False):
        self.basis = Pauli.parse(basis)
        if self.basis is Pauli.I:
            raise ConfigError("Attack basis must be X, Y or Z")
        self.include_own = include_own

    def attack_basis(self, coalition: "AdversaryCoalition") -> Pauli:
        return self.basis

    def intercept(self, coalition, target, position, label):
        basis = self.attack_basis(coalition)
        outcome = coalition.registry.measure_pauli(label, basis, coalition.rng)
        coalition.intercept_log[(target, position)] = (basis, outcome.bit)
        return [Delivery(target, position, label)]

    def own_observable(self, coalition, party, position, honest):
        return self.basis

    def on_receive_own(self, coalition, party, position, label):
        if self.include_own:
            coalition.measure_own(party, position, self.attack_basis(coalition))

    def honest_bit(self, coalition, target, position, obs):
        record = coalition.intercept_log.get((target, position))
        if record is None or record[0] is not obs:
            return None
        return record[1]


class RandomBasisMeasureResend(SameObservableMeasureResend):
    """Like the same-observable attack with a fresh uniform basis per qubit."""

    name = "random-basis"

    def __init__(self):
        super().__init__(Pauli.Z, include_own=False)

    def attack_basis(self, coalition):
        return MEASURABLE[int(coalition.rng.integers(3))]

    def own_observable(self, coalition, party, position, honest):
        return honest


@dataclass
class Probe:
    kind: str
    kept: str
    original: Optional[str] = None
    reading: Optional[int] = None


def complete_isometry(v) -> np.ndarray:
    """Extend a 4×2 isometry V to a unitary W with W(|ψ⟩⊗|0⟩) = V|ψ⟩."""
    v = np.asarray(v, dtype=np.complex128)
    if v.shape != (4, 2):
        raise ValidationError(f"Probe isometry must be 4x2, got {v.shape}")
    if np.max(np.abs(v.conj().T @ v - np.eye(2))) > 1e-10:
        raise ValidationError("Probe matrix is not an isometry (V†V != I)")
    seed = np.hstack([v, np.eye(4, dtype=np.complex128)])
    q, _ = np.linalg.qr(seed)
    complement = q[:, 2:4]
    w = np.zeros((4, 4), dtype=np.complex128)
    # input index = 2·(intercepted bit) + ancilla bit; ancilla starts in |0⟩
    w[:, 0], w[:, 2] = v[:, 0], v[:, 1]
    w[:, 1], w[:, 3] = complement[:, 0], complement[:, 1]
    if not is_unitary(w):
        raise ValidationError("Could not complete the probe isometry to a unitary")
    return w


class EntanglingProbe(Strategy):
    """Forward a substitute qubit tied to an ancilla the coalition keeps.

    ``fresh-bell`` forwards one half of a new |Φ+⟩ pair; the intercepted
    qubit is dropped unless ``keep_original``. ``isometry`` couples the
    intercepted qubit to a |0⟩ ancilla with a 4×2 isometry (outputs
    ordered kept, forwarded) and forwards the ancilla.
    """

    name = "entangle-probe"

    def __init__(self, isometry=None, keep_original: bool = False):
        self.unitary = complete_isometry(isometry) if isometry is not None else None
        self.mode = "isometry" if isometry is not None else "fresh-bell"
        self.keep_original = keep_original

    def intercept(self, coalition, target, position, label):
        registry = coalition.registry
        forwarded = registry.fresh_label("fwd")
        if self.unitary is None:
            kept = registry.fresh_label("probe")
            registry.add(bell_state(BellIndex.PHI_PLUS, (kept, forwarded)))
            original = label if self.keep_original else None
            if original is None:
                registry.discard((label,))
            probe = Probe("fresh-bell", kept, original)
        else:
            registry.add(basis_state("0", (forwarded,)))
            registry.apply_unitary(self.unitary, (label, forwarded))
            probe = Probe("isometry", label)
        coalition.probe_store[(target, position)] = probe
        return [Delivery(target, position, forwarded)]

    def honest_bit(self, coalition, target, position, obs):
        probe = coalition.probe_store.get((target, position))
        if probe is None:
            return None
        if probe.reading is None:
            registry, rng = coalition.registry, coalition.rng
            if probe.original is not None:
                probe.reading = registry.measure_pauli(probe.original, obs, rng).bit
            elif probe.kind == "fresh-bell":
                kept = registry.measure_pauli(probe.kept, obs, rng).bit
                probe.reading = kept ^ (0 if bell_correlation(BellIndex.PHI_PLUS, obs) == 1 else 1)
            else:
                probe.reading = registry.measure_pauli(probe.kept, obs, rng).bit
        return probe.reading


class CrossCopySwap(Strategy):
    """Forward a qubit from another transmission instead of the real one.

    The first attacked qubit is replaced by a member's most recently
    received qubit (that member then has nothing to measure at that
    position); later ones by the previously intercepted honest qubit.
    """

    name = "cross-swap"

    def __init__(self):
        self._stash: dict[PartyId, list[tuple[int, str]]] = {}

    def intercept(self, coalition, target, position, label):
        stash = self._stash.setdefault(target, [])
        if stash:
            _, substitute = stash.pop(0)
        else:
            substitute = coalition.surrender_own_qubit()
            logger.debug("cross-swap: %s receives a member qubit at position %d", target.value, position)
            if substitute is None:
                raise StrategyInfeasible("cross-swap has no qubit to substitute yet")
        stash.append((position, label))
        return [Delivery(target, position, substitute)]

    def honest_bit(self, coalition, target, position, obs):
        for pos, label in self._stash.get(target, []):
            if pos == position:
                return coalition.registry.measure_pauli(label, obs, coalition.rng).bit
        return None


STRATEGIES = {
    cls.name: cls
    for cls in (
        HonestNull,
        BellInterceptResend,
        SameObservableMeasureResend,
        RandomBasisMeasureResend,
        EntanglingProbe,
        CrossCopySwap,
    )
}


def make_strategy(name: str, params: StrategyParams = StrategyParams()) -> Strategy:
    """Instantiate a strategy by its CLI name."""
    if name == "same-observable":
        return SameObservableMeasureResend(params.basis, include_own=params.include_own)
    if name == "entangle-probe":
        return EntanglingProbe(params.isometry, keep_original=params.keep_original)
    try:
        return STRATEGIES[name]()
    except KeyError:
        known = ", ".join(sorted(STRATEGIES))
        raise ConfigError(f"Unknown strategy '{name}' (expected one of: {known})") from None


# ── Coalition ───────────────────────────────────────────────────────────


def _same_position(party: PartyId, position: int) -> int:
    return position


class AdversaryCoalition:
    """Corrupted receivers acting together; confined to one protocol run.

    ``targets`` names the copies to attack (every copy when None). The
    engine resolves a transmission position to its copy through ``locate``;
    strategies only ever see positions.
    """

    def __init__(
        self,
        members: Iterable[PartyId],
        strategy: Optional[Strategy] = None,
        targets: Optional[Iterable[int]] = None,
    ):
        members = frozenset(PartyId.parse(m) for m in members)
        if PartyId.ALICE in members:
            raise ConfigError("Alice is always honest and cannot join a coalition")
        if len(members) > 2:
            raise ConfigError("At most two of Bob, Charlie and Diana can cheat")
        self.members = members
        self.honest = tuple(p for p in RECEIVERS if p not in members)
        self.strategy = strategy or HonestNull()
        self.targets = frozenset(targets) if targets is not None else None

        self.probe_store: dict = {}
        self.knowledge: list[Message] = []
        self.announced: dict[tuple[PartyId, int], Pauli] = {}
        self.own_holdings: dict[tuple[PartyId, int], Optional[str]] = {}
        self.own_records: dict[tuple[PartyId, int], tuple[Pauli, int]] = {}
        self.intercept_log: dict[tuple[PartyId, int], tuple[Pauli, int]] = {}
        self.attacked: set[tuple[PartyId, int]] = set()

        self.registry: Optional[SystemRegistry] = None
        self.rng: Optional[np.random.Generator] = None
        self.ack_gated = False
        self._locate: Callable[[PartyId, int], int] = _same_position

    @classmethod
    def nobody(cls) -> "AdversaryCoalition":
        return cls(())

    def start(
        self,
        registry: SystemRegistry,
        rng: np.random.Generator,
        ack_gated: bool,
        locate: Optional[Callable[[PartyId, int], int]] = None,
    ):
        self.registry, self.rng, self.ack_gated = registry, rng, ack_gated
        self._locate = locate or _same_position
        self.strategy.check_feasible(self)

    def coin(self) -> int:
        return int(self.rng.integers(2))

    def is_target(self, party: PartyId, position: int) -> bool:
        return self.targets is None or self._locate(party, position) in self.targets

    # ── Engine hooks ────────────────────────────────────────────────

    def receive_own(self, party: PartyId, position: int, label: str):
        self.own_holdings[(party, position)] = label
        self.strategy.on_receive_own(self, party, position, label)

    def intercept(self, target: PartyId, position: int, label: str) -> list[Delivery]:
        if not self.members or not self.is_target(target, position):
            return [Delivery(target, position, label)]
        self.attacked.add((target, position))
        return self.strategy.intercept(self, target, position, label)

    def observe(self, message: Message):
        self.knowledge.append(message)
        if isinstance(message, ObservableAnnouncement):
            for party in PartyId:
                for pos, obs in message.for_party(party).items():
                    self.announced[(party, pos)] = obs

    def own_observable(self, party: PartyId, position: int, honest: Pauli) -> Pauli:
        return self.strategy.own_observable(self, party, position, honest)

    def measure_own(self, party: PartyId, position: int, obs: Pauli):
        """Measure a member's qubit unless it was measured already or given away."""
        if (party, position) in self.own_records:
            return
        label = self.own_holdings.get((party, position))
        if label is None:
            return
        bit = self.registry.measure_pauli(label, obs, self.rng).bit
        self.own_records[(party, position)] = (Pauli.parse(obs), bit)

    def surrender_own_qubit(self) -> Optional[str]:
        for key in reversed(list(self.own_holdings)):
            label = self.own_holdings[key]
            if label is not None and key not in self.own_records:
                self.own_holdings[key] = None
                return label
        return None

    def announce(self, party: PartyId, position: int) -> int:
        """Result a member publishes for one of its positions."""
        record = self.own_records.get((party, position))
        announced = self.announced.get((party, position))
        if record is not None and record[0] is announced:
            return record[1]
        return self.coin()

    def adjust_announcements(self, request) -> dict[tuple[PartyId, int], int]:
        """Bits for every requested member position.

        The copy grouping is still secret here, so a member can only report
        its own measurement when it was made in the announced basis, and
        otherwise a uniform bit.
        """
        out = {}
        for party in sorted(self.members, key=lambda p: p.value):
            for pos in sorted(request.for_party(party)):
                out[(party, pos)] = self.announce(party, pos)
        return out

    def observable_at(self, reveal: RevealPositions) -> Optional[Pauli]:
        """The announced observable of the revealed copy, if the coalition saw it."""
        for party, pos in reveal.positions:
            obs = self.announced.get((party, pos))
            if obs is not None:
                return obs
        return None

    def final_guess(self, reveal: RevealPositions) -> int:
        return self.strategy.final_guess(self, reveal)


def make_coalition(
    strategy: str,
    members: Iterable[PartyId],
    targets: Optional[Iterable[int]] = None,
    params: StrategyParams = StrategyParams(),
) -> AdversaryCoalition:
    return AdversaryCoalition(members, make_strategy(strategy, params), targets)


# ── Exact single-copy analysis ──────────────────────────────────────────


_LETTER = {PartyId.BOB: "B", PartyId.CHARLIE: "C", PartyId.DIANA: "D"}


def honest_view(cheater: PartyId = PartyId.BOB) -> DensityMatrix:
    """Alice's and the two honest parties' joint state in an honest run."""
    return partial_trace(smolin4(), {_LETTER[cheater]})


def bell_attack_view(cheater: PartyId = PartyId.BOB) -> DensityMatrix:
    """Ensemble state of Alice and the two honest parties after a Bell attack.

    Averaged over the cheater's Bell outcomes; the resent pair sits on the
    honest parties' labels.
    """
    rho = smolin4()
    honest = [_LETTER[p] for p in RECEIVERS if p is not cheater]
    mine = _LETTER[cheater]
    view = None
    for branch in bell_distribution(rho, honest[0], honest[1]):
        if branch.state is None:
            continue
        alice = partial_trace(branch.state, {mine, *honest})
        term = tensor_product(alice, bell_state(branch.outcome, honest))
        view = branch.probability * term.matrix + (0 if view is None else view)
    return DensityMatrix(view, ("A", *honest))


def exact_copy_failure_probability(strategy: str, basis: Pauli = Pauli.Z) -> float:
    """Probability that one attacked, fully checked copy fails the parity check.

    Alice's observable is uniform over X, Y, Z; the attacked qubit is
    Diana's and the members announce honestly.
    """
    rho = smolin4()
    third = 1 / 3
    if strategy == "none":
        return 0.0
    if strategy in ("same-observable", "random-basis"):
        bases = {Pauli.parse(basis): 1.0} if strategy == "same-observable" else {
            b: third for b in MEASURABLE
        }
        total = 0.0
        for obs in MEASURABLE:
            for b, weight in bases.items():
                for branch in outcome_distribution(rho, "D", b):
                    if branch.state is None:
                        continue
                    odd = joint_distribution(branch.state, obs).parity_mass(1)
                    total += third * weight * branch.probability * odd
        return total
    if strategy in ("entangle-probe", "cross-swap"):
        substituted = tensor_product(partial_trace(rho, {"D"}), maximally_mixed(("D",)))
        substituted = permute_qubits(substituted, ("A", "B", "C", "D"))
        return sum(third * joint_distribution(substituted, obs).parity_mass(1) for obs in MEASURABLE)
    raise DomainError(f"No single-copy oracle for strategy '{strategy}'")
