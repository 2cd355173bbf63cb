"""The two protocol variants: one-shot distribution and ordered, checked distribution.

In the original variant Alice sends copy j to Bob, Charlie and Diana as
their j-th qubit, everyone picks an observable independently, and copies
where all four picks agree carry a shared bit.

In the secure variant Alice sends each party its qubits in a private
order, one at a time, and waits for an acknowledgement before the next.
She then announces one observable per copy (mapped to positions), asks
every party to publish a random subset of results, checks the copies that
are fully covered, and only then reveals the positions of one unchecked
copy whose results carry the secret.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional

import numpy as np

from .adversaries import AdversaryCoalition
from .errors import ConfigError, ProtocolViolation, StrategyInfeasible, UsageError
from .messages import (
    RECEIVERS,
    Ack,
    CheckRequest,
    ObservableAnnouncement,
    PartyId,
    QubitSend,
    ResultAnnouncement,
    RevealPositions,
    Transcript,
)
from .qsim import DEFAULT_QUBIT_CAP, MEASURABLE, Pauli, parity
from .registry import SystemRegistry
from .states import PARTY_LABELS, smolin4

logger = logging.getLogger(__name__)

POLICIES = ("uniform", "X", "Y", "Z")
_STREAMS = ("ordering", "observables", "checks", "quantum", "adversary", "secret")
_LETTER = dict(zip(PartyId, PARTY_LABELS))


class Variant(enum.Enum):
    ORIGINAL = "original"
    SECURE = "secure"

    @classmethod
    def parse(cls, text) -> "Variant":
        if isinstance(text, Variant):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ConfigError(f"Unknown variant '{text}' (expected original or secure)") from None


@dataclass(frozen=True)
class ProtocolConfig:
    variant: Variant = Variant.SECURE
    copies: int = 64
    check_rate: float = 0.5
    observable_policy: str = "uniform"
    seed: int = 0
    qubit_cap: int = DEFAULT_QUBIT_CAP

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        policy = str(self.observable_policy)
        policy = policy.lower() if policy.lower() == "uniform" else policy.upper()
        if policy not in POLICIES:
            raise ConfigError(f"Observable policy must be one of {', '.join(POLICIES)}, got '{policy}'")
        object.__setattr__(self, "observable_policy", policy)
        if self.copies < 1:
            raise ConfigError(f"Number of copies must be at least 1, got {self.copies}")
        if self.variant is Variant.SECURE and self.copies < 2:
            raise ConfigError("The secure variant needs at least 2 copies")
        if not 0.0 < self.check_rate <= 1.0:
            raise ConfigError(f"Check rate must be in (0, 1], got {self.check_rate}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.qubit_cap < 4:
            raise ConfigError(f"Qubit cap must hold at least one copy (4), got {self.qubit_cap}")

    def draw_observable(self, rng: np.random.Generator) -> Pauli:
        if self.observable_policy == "uniform":
            return MEASURABLE[int(rng.integers(3))]
        return Pauli(self.observable_policy)


@dataclass(frozen=True)
class OrderingSecret:
    """Per-party bijection copy -> position, both 1-based. Known only to Alice."""

    permutations: tuple[tuple[PartyId, tuple[int, ...]], ...]

    @classmethod
    def draw(cls, n: int, rng: np.random.Generator) -> "OrderingSecret":
        return cls(tuple((p, tuple(int(x) + 1 for x in rng.permutation(n))) for p in RECEIVERS))

    @classmethod
    def identity(cls, n: int) -> "OrderingSecret":
        return cls(tuple((p, tuple(range(1, n + 1))) for p in RECEIVERS))

    @cached_property
    def _forward(self) -> dict[PartyId, tuple[int, ...]]:
        return dict(self.permutations)

    @cached_property
    def _inverse(self) -> dict[PartyId, dict[int, int]]:
        return {
            p: {pos: copy for copy, pos in enumerate(perm, start=1)}
            for p, perm in self.permutations
        }

    @property
    def copies(self) -> int:
        return len(self.permutations[0][1])

    def position_of(self, party: PartyId, copy: int) -> int:
        return self._forward[party][copy - 1]

    def copy_at(self, party: PartyId, position: int) -> int:
        return self._inverse[party][position]


@dataclass(frozen=True)
class CopyRecord:
    """One copy of an original-variant run."""

    copy: int
    observables: dict[PartyId, Pauli]
    bits: dict[PartyId, int]
    usable: bool
    reconstructed_bit: Optional[int] = None
    cheater_guess: Optional[int] = None
    attacked: bool = False

    @property
    def alice_bit(self) -> int:
        return self.bits[PartyId.ALICE]


@dataclass(frozen=True)
class CheckVerdict:
    detected: bool
    verified_copies: frozenset[int]
    failing_copies: tuple[int, ...]
    violation: Optional[str] = None


@dataclass
class ProtocolOutcome:
    variant: Variant
    transcript: Transcript
    detected: bool = False
    infeasible: bool = False
    aborted: bool = False
    reason: str = ""
    checked_copies: frozenset[int] = frozenset()
    verified_copies: frozenset[int] = frozenset()
    failing_copies: tuple[int, ...] = ()
    attacked_copies: frozenset[int] = frozenset()
    secret_copy: Optional[int] = None
    alice_bit: Optional[int] = None
    reconstructed_bit: Optional[int] = None
    cheater_guess: Optional[int] = None
    copies: tuple[CopyRecord, ...] = field(default_factory=tuple)

    @property
    def escaped(self) -> bool:
        return not (self.detected or self.infeasible or self.aborted)

    @property
    def usable_copies(self) -> list[CopyRecord]:
        return [c for c in self.copies if c.usable]


def _streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(_STREAMS, children)}


def _copy_labels(j: int) -> tuple[str, ...]:
    return tuple(f"{letter}{j}" for letter in PARTY_LABELS)


def _prepare(config: ProtocolConfig) -> SystemRegistry:
    registry = SystemRegistry(config.qubit_cap)
    base = smolin4()
    for j in range(1, config.copies + 1):
        registry.add(base.relabel(_copy_labels(j)))
    return registry


def _deliver(
    coalition: AdversaryCoalition, party: PartyId, position: int, label: str, holdings: dict
):
    if party in coalition.members:
        coalition.receive_own(party, position, label)
        return
    for d in coalition.intercept(party, position, label):
        if d.to in coalition.members:
            raise ProtocolViolation(f"Coalition delivered a qubit to its own member {d.to.value}")
        holdings[(d.to, d.position)] = d.label


# ── Checks and reconstruction ───────────────────────────────────────────


def select_check_sets(
    config: ProtocolConfig, ordering: OrderingSecret, rng: np.random.Generator
) -> CheckRequest:
    """Each party's positions are requested independently with probability p."""
    n = ordering.copies
    chosen = {}
    for party in RECEIVERS:
        mask = rng.random(n) < config.check_rate
        chosen[party] = [int(i) + 1 for i in np.flatnonzero(mask)]
    return CheckRequest.build(chosen)


def verify_checks(
    announcements: Mapping[tuple[PartyId, int], int],
    ordering: OrderingSecret,
    alice_bits: Mapping[int, int],
    request: CheckRequest,
) -> CheckVerdict:
    """Parity test on every copy whose B, C and D positions were all requested.

    A requested position with no announcement is a protocol violation and
    counts as detection.
    """
    missing = [
        (party, pos)
        for party in RECEIVERS
        for pos in sorted(request.for_party(party))
        if (party, pos) not in announcements
    ]
    verified, failing = [], []
    for j in range(1, ordering.copies + 1):
        positions = {p: ordering.position_of(p, j) for p in RECEIVERS}
        if not all(positions[p] in request.for_party(p) for p in RECEIVERS):
            continue
        verified.append(j)
        bits = [announcements.get((p, positions[p])) for p in RECEIVERS]
        if any(b is None for b in bits) or parity([alice_bits[j], *bits]) != 0:
            failing.append(j)
    violation = None
    if missing:
        party, pos = missing[0]
        violation = f"{party.value} did not announce requested position {pos}"
    return CheckVerdict(
        detected=bool(failing) or violation is not None,
        verified_copies=frozenset(verified),
        failing_copies=tuple(failing),
        violation=violation,
    )


def reconstruct_secret(
    reveal: RevealPositions,
    results: Mapping[tuple[PartyId, int], int],
    *,
    detected: bool = False,
    parity_offset: int = 0,
) -> int:
    """XOR of Bob's, Charlie's and Diana's results at the revealed positions.

    ``parity_offset`` is the deterministic all-party parity of the shared
    state (0 for the four-qubit Smolin state).
    """
    if detected:
        raise UsageError("Cannot reconstruct the secret of a run that detected cheating")
    try:
        bits = [results[(p, reveal.position_of(p))] for p in RECEIVERS]
    except KeyError as e:
        raise UsageError(f"No result for revealed position {e.args[0]}") from None
    return parity(bits) ^ parity_offset


# ── Secure variant ──────────────────────────────────────────────────────


def run_secure_protocol(
    config: ProtocolConfig,
    coalition: Optional[AdversaryCoalition] = None,
    ordering: Optional[OrderingSecret] = None,
) -> ProtocolOutcome:
    """One full run of the ordered, acknowledged, checked protocol.

    ``ordering`` overrides the secret ordering drawn from the seed.
    """
    if config.variant is not Variant.SECURE:
        raise ConfigError("run_secure_protocol needs a secure-variant config")
    n = config.copies
    streams = _streams(config.seed)
    coalition = coalition or AdversaryCoalition.nobody()
    transcript = Transcript()
    transcript.subscribe(coalition.observe)
    outcome = ProtocolOutcome(Variant.SECURE, transcript)

    registry = _prepare(config)
    ordering = ordering or OrderingSecret.draw(n, streams["ordering"])
    if ordering.copies != n:
        raise ConfigError(f"Ordering covers {ordering.copies} copies, config has {n}")

    try:
        coalition.start(registry, streams["adversary"], ack_gated=True, locate=ordering.copy_at)
    except StrategyInfeasible as e:
        logger.debug("strategy infeasible: %s", e)
        outcome.infeasible, outcome.reason = True, str(e)
        return outcome

    # Qubits go out one at a time; nothing is sent before the previous Ack.
    holdings: dict[tuple[PartyId, int], str] = {}
    try:
        for t in range(1, n + 1):
            for party in RECEIVERS:
                label = f"{_LETTER[party]}{ordering.copy_at(party, t)}"
                transcript.emit(QubitSend(party, t))
                _deliver(coalition, party, t, label, holdings)
                if party not in coalition.members and (party, t) not in holdings:
                    raise ProtocolViolation(
                        f"{party.value} never received position {t}; Alice halts"
                    )
                transcript.emit(Ack(party, t))
    except StrategyInfeasible as e:
        outcome.infeasible, outcome.reason = True, str(e)
        return outcome
    except ProtocolViolation as e:
        logger.debug("protocol violation: %s", e)
        outcome.detected, outcome.reason = True, str(e)
        return outcome
    outcome.attacked_copies = frozenset(
        ordering.copy_at(party, pos) for party, pos in coalition.attacked
    )

    obs_by_copy = {j: config.draw_observable(streams["observables"]) for j in range(1, n + 1)}
    mapping = {
        party: {t: obs_by_copy[ordering.copy_at(party, t)] for t in range(1, n + 1)}
        for party in RECEIVERS
    }
    transcript.emit(ObservableAnnouncement.build(PartyId.ALICE, mapping))

    qrng = streams["quantum"]
    alice_bits = {
        j: registry.measure_pauli(f"A{j}", obs_by_copy[j], qrng).bit for j in range(1, n + 1)
    }
    results: dict[tuple[PartyId, int], int] = {}
    for party in RECEIVERS:
        for t in range(1, n + 1):
            if party in coalition.members:
                coalition.measure_own(party, t, mapping[party][t])
            else:
                results[(party, t)] = registry.measure_pauli(
                    holdings[(party, t)], mapping[party][t], qrng
                ).bit

    request = select_check_sets(config, ordering, streams["checks"])
    transcript.emit(request)
    member_bits = coalition.adjust_announcements(request)
    announcements = {}
    for party in RECEIVERS:
        for t in sorted(request.for_party(party)):
            bit = member_bits.get((party, t)) if party in coalition.members else results[(party, t)]
            if bit is None:
                continue
            announcements[(party, t)] = bit
            transcript.emit(ResultAnnouncement(party, t, bit))

    verdict = verify_checks(announcements, ordering, alice_bits, request)
    outcome.checked_copies = frozenset(
        j
        for j in range(1, n + 1)
        if any(ordering.position_of(p, j) in request.for_party(p) for p in RECEIVERS)
    )
    outcome.verified_copies = verdict.verified_copies
    outcome.failing_copies = verdict.failing_copies
    if verdict.detected:
        outcome.detected = True
        outcome.reason = verdict.violation or f"parity check failed on copies {list(verdict.failing_copies)}"
        logger.debug("cheating detected: %s", outcome.reason)
        return outcome

    unchecked = [j for j in range(1, n + 1) if j not in outcome.checked_copies]
    if not unchecked:
        outcome.aborted, outcome.reason = True, "every copy was checked; no secret copy left"
        return outcome

    k = unchecked[int(streams["secret"].integers(len(unchecked)))]
    reveal = RevealPositions.build({p: ordering.position_of(p, k) for p in RECEIVERS})
    transcript.emit(reveal)
    shares = {}
    for party in RECEIVERS:
        pos = reveal.position_of(party)
        shares[(party, pos)] = (
            coalition.announce(party, pos) if party in coalition.members else results[(party, pos)]
        )
    outcome.secret_copy = k
    outcome.alice_bit = alice_bits[k]
    outcome.reconstructed_bit = reconstruct_secret(reveal, shares)
    if coalition.members:
        outcome.cheater_guess = coalition.final_guess(reveal)
    return outcome


# ── Original variant ────────────────────────────────────────────────────


def run_original_protocol(
    config: ProtocolConfig, coalition: Optional[AdversaryCoalition] = None
) -> ProtocolOutcome:
    """All copies sent at once in the natural order, no checking."""
    if config.variant is not Variant.ORIGINAL:
        raise ConfigError("run_original_protocol needs an original-variant config")
    n = config.copies
    streams = _streams(config.seed)
    coalition = coalition or AdversaryCoalition.nobody()
    transcript = Transcript()
    transcript.subscribe(coalition.observe)
    outcome = ProtocolOutcome(Variant.ORIGINAL, transcript)

    registry = _prepare(config)
    try:
        coalition.start(registry, streams["adversary"], ack_gated=False)
    except StrategyInfeasible as e:
        outcome.infeasible, outcome.reason = True, str(e)
        return outcome

    holdings: dict[tuple[PartyId, int], str] = {}
    for j in range(1, n + 1):
        for party in RECEIVERS:
            transcript.emit(QubitSend(party, j))
            _deliver(coalition, party, j, f"{_LETTER[party]}{j}", holdings)
        for party in RECEIVERS:
            if party not in coalition.members and (party, j) not in holdings:
                outcome.detected = True
                outcome.reason = f"{party.value} never received copy {j}"
                return outcome
            transcript.emit(Ack(party, j))
    outcome.attacked_copies = frozenset(pos for _, pos in coalition.attacked)

    orng = streams["observables"]
    choices: dict[int, dict[PartyId, Pauli]] = {}
    for j in range(1, n + 1):
        picks = {PartyId.ALICE: config.draw_observable(orng)}
        for party in RECEIVERS:
            honest = config.draw_observable(orng)
            if party in coalition.members:
                honest = coalition.own_observable(party, j, honest)
            picks[party] = honest
        choices[j] = picks
    for party in PartyId:
        transcript.emit(
            ObservableAnnouncement.build(party, {party: {j: choices[j][party] for j in choices}})
        )

    qrng = streams["quantum"]
    measured: dict[tuple[PartyId, int], int] = {}
    for j in range(1, n + 1):
        measured[(PartyId.ALICE, j)] = registry.measure_pauli(
            f"A{j}", choices[j][PartyId.ALICE], qrng
        ).bit
        for party in RECEIVERS:
            if party in coalition.members:
                coalition.measure_own(party, j, choices[j][party])
            else:
                measured[(party, j)] = registry.measure_pauli(
                    holdings[(party, j)], choices[j][party], qrng
                ).bit

    records = []
    for j in range(1, n + 1):
        bits = {PartyId.ALICE: measured[(PartyId.ALICE, j)]}
        for party in RECEIVERS:
            bits[party] = (
                coalition.announce(party, j) if party in coalition.members else measured[(party, j)]
            )
        usable = len(set(choices[j].values())) == 1
        reconstructed = guess = None
        if usable:
            reveal = RevealPositions.build({p: j for p in RECEIVERS})
            reconstructed = reconstruct_secret(reveal, {(p, j): bits[p] for p in RECEIVERS})
            if coalition.members:
                guess = coalition.final_guess(reveal)
        records.append(
            CopyRecord(
                copy=j,
                observables=dict(choices[j]),
                bits=bits,
                usable=usable,
                reconstructed_bit=reconstructed,
                cheater_guess=guess,
                attacked=j in outcome.attacked_copies,
            )
        )
    outcome.copies = tuple(records)
    usable = outcome.usable_copies
    if usable:
        first = usable[0]
        outcome.secret_copy = first.copy
        outcome.alice_bit = first.alice_bit
        outcome.reconstructed_bit = first.reconstructed_bit
        outcome.cheater_guess = first.cheater_guess
    return outcome


def run_protocol(
    config: ProtocolConfig, coalition: Optional[AdversaryCoalition] = None
) -> ProtocolOutcome:
    if config.variant is Variant.SECURE:
        return run_secure_protocol(config, coalition)
    return run_original_protocol(config, coalition)
