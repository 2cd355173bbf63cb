"""Protocol engine: both variants, checks and reconstruction."""

from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from smolin_qss.adversaries import AdversaryCoalition, make_coalition
from smolin_qss.errors import ConfigError, UsageError
from smolin_qss.messages import (
    RECEIVERS,
    Ack,
    CheckRequest,
    ObservableAnnouncement,
    PartyId,
    QubitSend,
    RevealPositions,
    check_causality,
)
from smolin_qss.protocol import (
    OrderingSecret,
    ProtocolConfig,
    Variant,
    reconstruct_secret,
    run_original_protocol,
    run_protocol,
    run_secure_protocol,
    select_check_sets,
    verify_checks,
)
from smolin_qss.qsim import Pauli

B, C, D = PartyId.BOB, PartyId.CHARLIE, PartyId.DIANA
GOLDEN = Path(__file__).parent / "golden"


def secure(**kw) -> ProtocolConfig:
    return ProtocolConfig(variant="secure", **kw)


def original(**kw) -> ProtocolConfig:
    return ProtocolConfig(variant="original", **kw)


class TestProtocolConfig:
    def test_defaults(self):
        cfg = ProtocolConfig()
        assert cfg.variant is Variant.SECURE
        assert (cfg.copies, cfg.check_rate, cfg.observable_policy) == (64, 0.5, "uniform")

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"copies": 0},
            {"copies": 1},
            {"check_rate": 0.0},
            {"check_rate": 1.5},
            {"observable_policy": "W"},
            {"seed": -1},
            {"seed": 2**64},
            {"variant": "quantum"},
            {"qubit_cap": 3},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ProtocolConfig(**kwargs)

    def test_original_allows_one_copy(self):
        assert original(copies=1).copies == 1

    def test_fixed_policy(self, rng):
        cfg = secure(observable_policy="y")
        assert cfg.observable_policy == "Y"
        assert {cfg.draw_observable(rng) for _ in range(10)} == {Pauli.Y}


class TestOrderingSecret:
    def test_draw_is_a_bijection_per_party(self, rng):
        ordering = OrderingSecret.draw(16, rng)
        for party in RECEIVERS:
            positions = [ordering.position_of(party, j) for j in range(1, 17)]
            assert sorted(positions) == list(range(1, 17))
            for j in range(1, 17):
                assert ordering.copy_at(party, ordering.position_of(party, j)) == j

    def test_identity(self):
        ordering = OrderingSecret.identity(3)
        assert ordering.copies == 3
        assert ordering.position_of(D, 2) == 2


class TestChecks:
    def setup_method(self):
        self.ordering = OrderingSecret.identity(2)
        self.request = CheckRequest.build({B: [1], C: [1, 2], D: [1]})
        self.alice = {1: 1, 2: 0}

    def test_consistent_results_pass(self):
        results = {(B, 1): 0, (C, 1): 1, (C, 2): 1, (D, 1): 0}
        verdict = verify_checks(results, self.ordering, self.alice, self.request)
        assert not verdict.detected
        assert verdict.verified_copies == frozenset({1})
        assert verdict.failing_copies == ()

    def test_parity_failure_is_detected(self):
        results = {(B, 1): 1, (C, 1): 1, (C, 2): 1, (D, 1): 0}
        verdict = verify_checks(results, self.ordering, self.alice, self.request)
        assert verdict.detected
        assert verdict.failing_copies == (1,)

    def test_missing_announcement_is_a_violation(self):
        results = {(B, 1): 0, (C, 1): 1, (D, 1): 0}
        verdict = verify_checks(results, self.ordering, self.alice, self.request)
        assert verdict.detected
        assert verdict.failing_copies == ()
        assert "Charlie" in verdict.violation

    def test_select_all(self, rng):
        ordering = OrderingSecret.identity(5)
        request = select_check_sets(secure(copies=5, check_rate=1.0), ordering, rng)
        for party in RECEIVERS:
            assert request.for_party(party) == frozenset(range(1, 6))

    def test_select_rate(self, rng):
        ordering = OrderingSecret.identity(2000)
        request = select_check_sets(secure(copies=2000, check_rate=0.3), ordering, rng)
        assert len(request.for_party(B)) / 2000 == pytest.approx(0.3, abs=0.04)


class TestReconstruction:
    def test_xor_of_revealed_results(self):
        reveal = RevealPositions.build({B: 2, C: 1, D: 3})
        results = {(B, 2): 1, (C, 1): 1, (D, 3): 1}
        assert reconstruct_secret(reveal, results) == 1
        assert reconstruct_secret(reveal, results, parity_offset=1) == 0

    def test_refuses_detected_runs(self):
        reveal = RevealPositions.build({B: 1, C: 1, D: 1})
        with pytest.raises(UsageError):
            reconstruct_secret(reveal, {(B, 1): 0, (C, 1): 0, (D, 1): 0}, detected=True)

    def test_missing_result(self):
        reveal = RevealPositions.build({B: 1, C: 1, D: 1})
        with pytest.raises(UsageError):
            reconstruct_secret(reveal, {(B, 1): 0})


class TestSecureProtocol:
    def test_honest_run_reconstructs(self):
        for seed in range(10):
            outcome = run_secure_protocol(secure(copies=8, seed=seed))
            assert not outcome.detected
            assert not outcome.infeasible
            if outcome.secret_copy is not None:
                assert outcome.secret_copy not in outcome.checked_copies
                assert outcome.reconstructed_bit == outcome.alice_bit
                assert outcome.cheater_guess is None

    def test_streaming_order(self):
        outcome = run_secure_protocol(secure(copies=3, seed=1))
        head = outcome.transcript.messages[:6]
        assert head == (QubitSend(B, 1), Ack(B, 1), QubitSend(C, 1), Ack(C, 1), QubitSend(D, 1), Ack(D, 1))
        assert check_causality(outcome.transcript) == []

    def test_message_phases(self):
        outcome = run_secure_protocol(secure(copies=6, seed=3))
        tags = [m.tag for m in outcome.transcript]
        assert tags[:36] == ["QubitSend", "Ack"] * 18
        assert tags[36] == "ObservableAnnouncement"
        assert tags[37] == "CheckRequest"
        if outcome.secret_copy is not None:
            assert tags[-1] == "RevealPositions"

    def test_deterministic_for_a_seed(self):
        first = run_secure_protocol(secure(copies=8, seed=42)).transcript.export()
        second = run_secure_protocol(secure(copies=8, seed=42)).transcript.export()
        assert first == second

    def test_every_copy_checked_aborts(self):
        outcome = run_secure_protocol(secure(copies=4, check_rate=1.0, seed=5))
        assert outcome.aborted
        assert not outcome.detected
        assert outcome.verified_copies == frozenset(range(1, 5))
        assert outcome.secret_copy is None

    def test_ordering_leaks_nothing_public(self):
        n = 12
        cfg = secure(copies=n, seed=9)
        runs = [
            run_secure_protocol(cfg, ordering=OrderingSecret.draw(n, np.random.default_rng(s)))
            for s in (1, 2)
        ]

        def public(outcome):
            return [m for m in outcome.transcript if isinstance(m, (QubitSend, Ack, CheckRequest))]

        def observable_counts(outcome):
            (announcement,) = [m for m in outcome.transcript if isinstance(m, ObservableAnnouncement)]
            return {p: Counter(announcement.for_party(p).values()) for p in RECEIVERS}

        assert public(runs[0]) == public(runs[1])
        assert observable_counts(runs[0]) == observable_counts(runs[1])

    def test_receivers_hold_maximally_mixed_qubits(self):
        seen = []

        class Watcher(AdversaryCoalition):
            def observe(self, message):
                super().observe(message)
                if isinstance(message, ObservableAnnouncement):
                    for label in sorted(self.registry.labels):
                        if not label.startswith("A"):
                            seen.append(self.registry.reduced((label,)).matrix)

        run_secure_protocol(secure(copies=5, seed=13), Watcher(()))
        assert len(seen) == 15
        for rho in seen:
            np.testing.assert_allclose(rho, np.eye(2) / 2, atol=1e-12)

    def test_wrong_variant(self):
        with pytest.raises(ConfigError):
            run_secure_protocol(original(copies=4))

    def test_ordering_size_mismatch(self):
        with pytest.raises(ConfigError):
            run_secure_protocol(secure(copies=4), ordering=OrderingSecret.identity(5))

    def test_bell_intercept_is_infeasible(self):
        coalition = make_coalition("bell-intercept", [B])
        outcome = run_secure_protocol(secure(copies=4), coalition)
        assert outcome.infeasible
        assert not outcome.detected
        assert len(outcome.transcript) == 0

    def test_detected_runs_reveal_nothing(self):
        for seed in range(20):
            coalition = make_coalition("same-observable", [B, C])
            outcome = run_secure_protocol(secure(copies=8, seed=seed), coalition)
            if outcome.detected:
                assert outcome.secret_copy is None
                assert not any(isinstance(m, RevealPositions) for m in outcome.transcript)

    def test_nobody_coalition_matches_no_coalition(self):
        cfg = secure(copies=6, seed=11)
        plain = run_secure_protocol(cfg).transcript.export()
        explicit = run_secure_protocol(cfg, AdversaryCoalition.nobody()).transcript.export()
        assert plain == explicit


class TestOriginalProtocol:
    def test_one_record_per_copy(self):
        outcome = run_original_protocol(original(copies=20, seed=2))
        assert [r.copy for r in outcome.copies] == list(range(1, 21))
        for record in outcome.copies:
            assert record.usable == (len(set(record.observables.values())) == 1)

    def test_usable_copies_carry_the_bit(self):
        outcome = run_original_protocol(original(copies=16, seed=4, observable_policy="X"))
        assert len(outcome.usable_copies) == 16
        for record in outcome.usable_copies:
            assert record.reconstructed_bit == record.alice_bit
        assert outcome.secret_copy == 1

    def test_usable_fraction(self):
        outcome = run_original_protocol(original(copies=2700, seed=6))
        assert len(outcome.usable_copies) / 2700 == pytest.approx(1 / 27, abs=0.015)

    def test_transcript_is_causal(self):
        outcome = run_original_protocol(original(copies=5, seed=8))
        assert check_causality(outcome.transcript) == []
        announcements = [m for m in outcome.transcript if isinstance(m, ObservableAnnouncement)]
        assert [m.source for m in announcements] == list(PartyId)

    def test_golden_transcript(self):
        outcome = run_original_protocol(original(copies=2, observable_policy="X"))
        assert outcome.transcript.export() == (GOLDEN / "original_x2.jsonl").read_text()

    def test_dispatch(self):
        assert run_protocol(original(copies=2)).variant is Variant.ORIGINAL
        assert run_protocol(secure(copies=2)).variant is Variant.SECURE
