"""Protocol messages and the ordered transcript they are logged to.

Every message is public once emitted (the classical channel is an
authenticated broadcast). The transcript exports one JSON record per line
with the tag first and fields in a fixed order, so a run with a fixed seed
always exports the same bytes.
"""

from __future__ import annotations

import enum
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, ClassVar, Iterable, Iterator, Mapping, Union

from .errors import ConfigError, ReportError
from .qsim import Pauli


class PartyId(enum.Enum):
    ALICE = "Alice"
    BOB = "Bob"
    CHARLIE = "Charlie"
    DIANA = "Diana"

    @classmethod
    def parse(cls, text: Union[str, "PartyId"]) -> "PartyId":
        if isinstance(text, PartyId):
            return text
        key = str(text).strip().lower()
        for party in cls:
            if party.value.lower() == key:
                return party
        raise ConfigError(f"Unknown party '{text}' (expected alice, bob, charlie or diana)")


RECEIVERS = (PartyId.BOB, PartyId.CHARLIE, PartyId.DIANA)


# ── Message types ───────────────────────────────────────────────────────


class Message(ABC):
    tag: ClassVar[str] = ""

    @abstractmethod
    def fields(self) -> dict:
        """Payload of the message in export order."""

    def to_record(self) -> dict:
        return {"tag": self.tag, **self.fields()}


@dataclass(frozen=True)
class QubitSend(Message):
    tag: ClassVar[str] = "QubitSend"
    to: PartyId
    position: int

    def fields(self) -> dict:
        return {"to": self.to.value, "position": self.position}


@dataclass(frozen=True)
class Ack(Message):
    tag: ClassVar[str] = "Ack"
    sender: PartyId
    position: int

    def fields(self) -> dict:
        return {"from": self.sender.value, "position": self.position}


@dataclass(frozen=True)
class ObservableAnnouncement(Message):
    """Observables per party and position, announced by ``source``."""

    tag: ClassVar[str] = "ObservableAnnouncement"
    source: PartyId
    observables: tuple[tuple[PartyId, tuple[tuple[int, Pauli], ...]], ...]

    @classmethod
    def build(
        cls, source: PartyId, mapping: Mapping[PartyId, Mapping[int, Pauli]]
    ) -> "ObservableAnnouncement":
        packed = tuple(
            (party, tuple(sorted(mapping[party].items())))
            for party in PartyId
            if party in mapping
        )
        return cls(source, packed)

    def for_party(self, party: PartyId) -> dict[int, Pauli]:
        for p, items in self.observables:
            if p is party:
                return dict(items)
        return {}

    def fields(self) -> dict:
        return {
            "source": self.source.value,
            "observables": {
                p.value: {str(pos): obs.value for pos, obs in items}
                for p, items in self.observables
            },
        }


@dataclass(frozen=True)
class CheckRequest(Message):
    tag: ClassVar[str] = "CheckRequest"
    positions: tuple[tuple[PartyId, tuple[int, ...]], ...]

    @classmethod
    def build(cls, mapping: Mapping[PartyId, Iterable[int]]) -> "CheckRequest":
        return cls(tuple((p, tuple(sorted(mapping[p]))) for p in PartyId if p in mapping))

    def for_party(self, party: PartyId) -> frozenset[int]:
        for p, items in self.positions:
            if p is party:
                return frozenset(items)
        return frozenset()

    def fields(self) -> dict:
        return {"positions": {p.value: list(items) for p, items in self.positions}}


@dataclass(frozen=True)
class ResultAnnouncement(Message):
    tag: ClassVar[str] = "ResultAnnouncement"
    sender: PartyId
    position: int
    bit: int

    def fields(self) -> dict:
        return {"from": self.sender.value, "position": self.position, "bit": self.bit}


@dataclass(frozen=True)
class RevealPositions(Message):
    tag: ClassVar[str] = "RevealPositions"
    positions: tuple[tuple[PartyId, int], ...]

    @classmethod
    def build(cls, mapping: Mapping[PartyId, int]) -> "RevealPositions":
        return cls(tuple((p, mapping[p]) for p in PartyId if p in mapping))

    def position_of(self, party: PartyId) -> int:
        return dict(self.positions)[party]

    def fields(self) -> dict:
        return {"positions": {p.value: pos for p, pos in self.positions}}


# ── Transcript ──────────────────────────────────────────────────────────


class Transcript:
    """Append-only message log with broadcast subscribers."""

    def __init__(self):
        self._messages: list[Message] = []
        self._subscribers: list[Callable[[Message], None]] = []

    def subscribe(self, callback: Callable[[Message], None]):
        self._subscribers.append(callback)

    def emit(self, message: Message):
        self._messages.append(message)
        for callback in self._subscribers:
            callback(message)

    def __iter__(self) -> Iterator[Message]:
        return iter(self._messages)

    def __len__(self) -> int:
        return len(self._messages)

    @property
    def messages(self) -> tuple[Message, ...]:
        return tuple(self._messages)

    def export(self) -> str:
        return "".join(
            json.dumps(m.to_record(), separators=(",", ":")) + "\n" for m in self._messages
        )

    def write(self, path: Path):
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.export())
        except OSError as e:
            raise ReportError(f"Could not write transcript to {path}: {e}") from e


def check_causality(messages: Iterable[Message]) -> list[str]:
    """Return the ordering rules the log breaks (empty list when causal).

    Rules: Ack(t) before QubitSend(t+1) per party; Alice's observable
    announcement after the last Ack; CheckRequest after that announcement;
    RevealPositions after every ResultAnnouncement.
    """
    problems = []
    acked: dict[PartyId, set[int]] = {}
    last_ack = -1
    announce_at = None
    check_at = None
    last_result = -1
    reveal_at = None
    for i, msg in enumerate(messages):
        if isinstance(msg, QubitSend):
            if msg.position > 1 and (msg.position - 1) not in acked.get(msg.to, set()):
                problems.append(f"QubitSend({msg.to.value}, {msg.position}) before Ack of {msg.position - 1}")
        elif isinstance(msg, Ack):
            acked.setdefault(msg.sender, set()).add(msg.position)
            last_ack = i
        elif isinstance(msg, ObservableAnnouncement) and msg.source is PartyId.ALICE:
            announce_at = i
        elif isinstance(msg, CheckRequest):
            check_at = i
        elif isinstance(msg, ResultAnnouncement):
            last_result = i
        elif isinstance(msg, RevealPositions):
            reveal_at = i
    if announce_at is not None and announce_at < last_ack:
        problems.append("ObservableAnnouncement precedes the final Ack")
    if check_at is not None and (announce_at is None or check_at < announce_at):
        problems.append("CheckRequest precedes the ObservableAnnouncement")
    if reveal_at is not None and reveal_at < last_result:
        problems.append("RevealPositions precedes a ResultAnnouncement")
    return problems
