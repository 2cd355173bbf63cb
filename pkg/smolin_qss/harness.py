"""Monte-Carlo experiments over many protocol runs.

Trial ``i`` of an experiment gets its own 64-bit seed derived from the
master seed with splitmix64, so results do not depend on how trials are
split across worker processes. Per-trial results are integer tallies that
are summed; rates and intervals are computed once at the end.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .adversaries import (
    STRATEGIES,
    StrategyParams,
    bell_attack_view,
    honest_view,
    make_coalition,
)
from .errors import CapacityError, ConfigError, DomainError, ReportError
from .messages import RECEIVERS, PartyId
from .protocol import ProtocolConfig, ProtocolOutcome, Variant, run_protocol
from .qsim import (
    BUILD_TOL,
    EXACT_TOL,
    MEASURABLE,
    bell_distribution,
    min_eigenvalue,
    partial_trace,
    partial_transpose,
    trace_distance,
)
from .states import (
    PARTY_LABELS,
    bell_state,
    expected_parity,
    generalized_smolin,
    joint_distribution,
    smolin4,
    smolin_pauli_expansion,
    smolin_via_circuit,
)

logger = logging.getLogger(__name__)

Z_95 = 1.959963984540054
_MASK = (1 << 64) - 1

CSV_COLUMNS = (
    "variant",
    "strategy",
    "n",
    "p",
    "m",
    "trials",
    "detection_rate",
    "detection_ci_low",
    "detection_ci_high",
    "cheater_accuracy",
    "reconstruction_rate",
    "epsilon_hat",
    "seed",
)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def trial_seed(master_seed: int, index: int) -> int:
    return splitmix64(master_seed ^ splitmix64(index))


def wilson_interval(successes: int, total: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        return 0.0, 1.0
    phat = successes / total
    z2 = z * z
    denom = 1 + z2 / total
    centre = (phat + z2 / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z2 / (4 * total * total)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def expected_escape(check_rate: float, epsilon: float, attacked: int) -> float:
    """(1 - p³ε)^m: chance that m attacked copies all pass unnoticed."""
    return (1 - check_rate**3 * epsilon) ** attacked


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    strategy: str = "none"
    members: tuple[PartyId, ...] = (PartyId.BOB, PartyId.CHARLIE)
    attacked: Optional[int] = 0
    trials: int = 1000
    master_seed: int = 0
    params: StrategyParams = field(default_factory=StrategyParams)
    workers: int = 1

    def __post_init__(self):
        members = tuple(sorted({PartyId.parse(m) for m in self.members}, key=RECEIVERS.index))
        object.__setattr__(self, "members", members)
        if self.strategy not in STRATEGIES:
            known = ", ".join(sorted(STRATEGIES))
            raise ConfigError(f"Unknown strategy '{self.strategy}' (expected one of: {known})")
        if self.trials < 1:
            raise ConfigError(f"Need at least one trial, got {self.trials}")
        if self.attacked is not None and not 0 <= self.attacked <= self.protocol.copies:
            raise ConfigError(
                f"Attacked copies must be between 0 and {self.protocol.copies}, got {self.attacked}"
            )
        if self.workers < 1:
            raise ConfigError(f"Workers must be at least 1, got {self.workers}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError(f"Seed must be a 64-bit unsigned integer, got {self.master_seed}")


@dataclass
class Tally:
    trials: int = 0
    detected: int = 0
    infeasible: int = 0
    aborted: int = 0
    revealed: int = 0
    reconstructed: int = 0
    guesses: int = 0
    correct_guesses: int = 0
    attacked_verified: int = 0
    attacked_failed: int = 0

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(*(a + b for a, b in zip(asdict(self).values(), asdict(other).values())))

    @classmethod
    def of(cls, outcome: ProtocolOutcome) -> "Tally":
        t = cls(trials=1)
        t.detected = int(outcome.detected)
        t.infeasible = int(outcome.infeasible)
        t.aborted = int(outcome.aborted)
        if outcome.variant is Variant.ORIGINAL:
            for record in outcome.usable_copies:
                t.revealed += 1
                t.reconstructed += int(record.reconstructed_bit == record.alice_bit)
                if record.cheater_guess is not None:
                    t.guesses += 1
                    t.correct_guesses += int(record.cheater_guess == record.alice_bit)
        elif outcome.secret_copy is not None:
            t.revealed = 1
            t.reconstructed = int(outcome.reconstructed_bit == outcome.alice_bit)
            if outcome.cheater_guess is not None:
                t.guesses = 1
                t.correct_guesses = int(outcome.cheater_guess == outcome.alice_bit)
        t.attacked_verified = len(outcome.attacked_copies & outcome.verified_copies)
        t.attacked_failed = len(outcome.attacked_copies & set(outcome.failing_copies))
        return t


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated metrics of one experiment.

    ``escape_rate`` is ``1 - detection_rate``: infeasible and aborted runs
    were not detected and count as escapes. Read it together with
    ``infeasible_rate``; an attack that could not run escapes trivially.
    """

    variant: str
    strategy: str
    n: int
    p: float
    m: int
    trials: int
    detection_rate: float
    detection_ci_low: float
    detection_ci_high: float
    cheater_accuracy: Optional[float]
    reconstruction_rate: Optional[float]
    epsilon_hat: Optional[float]
    seed: int
    escape_rate: float = 0.0
    cheater_ci_low: Optional[float] = None
    cheater_ci_high: Optional[float] = None
    infeasible_rate: float = 0.0
    aborted_rate: float = 0.0
    runtime_seconds: float = field(default=0.0, compare=False)

    @classmethod
    def from_tally(cls, spec: ExperimentSpec, tally: Tally, runtime: float = 0.0) -> "MetricsReport":
        cfg = spec.protocol
        low, high = wilson_interval(tally.detected, tally.trials)
        accuracy = c_low = c_high = None
        if tally.guesses:
            accuracy = tally.correct_guesses / tally.guesses
            c_low, c_high = wilson_interval(tally.correct_guesses, tally.guesses)
        return cls(
            variant=cfg.variant.value,
            strategy=spec.strategy,
            n=cfg.copies,
            p=cfg.check_rate,
            m=spec.attacked if spec.attacked is not None else cfg.copies,
            trials=tally.trials,
            detection_rate=tally.detected / tally.trials,
            detection_ci_low=low,
            detection_ci_high=high,
            cheater_accuracy=accuracy,
            reconstruction_rate=tally.reconstructed / tally.revealed if tally.revealed else None,
            epsilon_hat=(
                tally.attacked_failed / tally.attacked_verified if tally.attacked_verified else None
            ),
            seed=spec.master_seed,
            escape_rate=1 - tally.detected / tally.trials,
            cheater_ci_low=c_low,
            cheater_ci_high=c_high,
            infeasible_rate=tally.infeasible / tally.trials,
            aborted_rate=tally.aborted / tally.trials,
            runtime_seconds=runtime,
        )

    def to_record(self) -> dict:
        """Field dict without wall-clock time, so reports are reproducible."""
        record = asdict(self)
        del record["runtime_seconds"]
        return record


# ── Running ─────────────────────────────────────────────────────────────


def attacked_copies(spec: ExperimentSpec, seed: int) -> Optional[frozenset[int]]:
    """Copies attacked in one trial; None attacks every copy.

    Every honest qubit of a chosen copy is attacked, whatever position the
    secret ordering gives it.
    """
    if spec.attacked is None:
        return None
    if spec.attacked == 0:
        return frozenset()
    rng = np.random.default_rng(splitmix64(seed))
    picks = rng.choice(spec.protocol.copies, size=spec.attacked, replace=False)
    return frozenset(int(x) + 1 for x in picks)


def run_trial(spec: ExperimentSpec, index: int) -> ProtocolOutcome:
    seed = trial_seed(spec.master_seed, index)
    config = replace(spec.protocol, seed=seed)
    coalition = make_coalition(
        spec.strategy, spec.members, attacked_copies(spec, seed), spec.params
    )
    try:
        return run_protocol(config, coalition)
    except CapacityError as e:
        raise CapacityError(
            f"Strategy '{spec.strategy}' exceeded the qubit cap of {config.qubit_cap}: {e}"
        ) from e


def _run_chunk(spec: ExperimentSpec, indices: Sequence[int]) -> Tally:
    total = Tally()
    for i in indices:
        total = total + Tally.of(run_trial(spec, int(i)))
    return total


def run_experiment(spec: ExperimentSpec) -> MetricsReport:
    """Run ``spec.trials`` independent trials and aggregate their metrics."""
    start = time.perf_counter()
    indices = np.arange(spec.trials)
    if spec.workers == 1:
        tally = _run_chunk(spec, indices)
    else:
        chunks = [c for c in np.array_split(indices, spec.workers) if len(c)]
        tally = Tally()
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            for part in pool.map(_run_chunk, [spec] * len(chunks), chunks):
                tally = tally + part
    runtime = time.perf_counter() - start
    logger.debug(
        "%s/%s m=%s: %d trials in %.2fs", spec.protocol.variant.value, spec.strategy,
        spec.attacked, spec.trials, runtime,
    )
    return MetricsReport.from_tally(spec, tally, runtime)


def sweep(template: ExperimentSpec, attacked: Iterable[int]) -> list[MetricsReport]:
    return [run_experiment(replace(template, attacked=m)) for m in attacked]


def fit_escape_slope(reports: Sequence[MetricsReport]) -> float:
    """Least-squares slope of log(escape rate) against m.

    For the exponential law this is log(1 - p³ε); reports with zero escape
    rate are skipped.
    """
    points = [(r.m, math.log(r.escape_rate)) for r in reports if r.escape_rate > 0]
    if len(points) < 2:
        raise DomainError("Need at least two reports with a non-zero escape rate to fit")
    ms, logs = zip(*points)
    slope, _ = np.polyfit(np.array(ms, dtype=float), np.array(logs), 1)
    return float(slope)


# ── Reports ─────────────────────────────────────────────────────────────


def _csv_cell(value) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def render_report(reports: Sequence[MetricsReport], fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            record = r.to_record()
            writer.writerow([_csv_cell(record[c]) for c in CSV_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([r.to_record() for r in reports], indent=2) + "\n"
    raise ConfigError(f"Unknown report format '{fmt}' (expected csv or json)")


def write_report(reports: Sequence[MetricsReport], path: Path, fmt: str = "csv"):
    text = render_report(reports, fmt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise ReportError(f"Could not write report to {path}: {e}") from e


def read_report(path: Path) -> list[dict]:
    """Load a JSON report back as a list of field dicts."""
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ReportError(f"Could not read report {path}: {e}") from e


def _fmt_rate(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def format_table(reports: Sequence[MetricsReport]) -> str:
    """Human-readable summary, one line per report."""
    header = f"  {'strategy':<16} {'n':>4} {'p':>5} {'m':>4} {'trials':>7}  {'detect':>8}  {'95% CI':<17} {'guess':>7} {'recon':>7} {'eps':>7}"
    lines = [header, "  " + "─" * (len(header) - 2)]
    for r in reports:
        ci = f"[{r.detection_ci_low:.3f}, {r.detection_ci_high:.3f}]"
        line = (
            f"  {r.strategy:<16} {r.n:>4} {r.p:>5.2f} {r.m:>4} {r.trials:>7}  "
            f"{r.detection_rate:>8.4f}  {ci:<17} {_fmt_rate(r.cheater_accuracy):>7} "
            f"{_fmt_rate(r.reconstruction_rate):>7} {_fmt_rate(r.epsilon_hat):>7}"
        )
        if r.infeasible_rate:
            line += f"  (infeasible in {r.infeasible_rate:.0%} of runs)"
        lines.append(line)
    return "\n".join(lines)


# ── Exact state checks ──────────────────────────────────────────────────


@dataclass(frozen=True)
class StateCheck:
    name: str
    passed: bool
    detail: str


def verify_states() -> list[StateCheck]:
    """Exact identity, spectrum, PPT, parity and Bell-collapse checks."""
    rho = smolin4()
    checks = []

    def add(name: str, passed: bool, detail: str):
        checks.append(StateCheck(name, bool(passed), detail))

    diffs = [
        trace_distance(rho, generalized_smolin(2)),
        trace_distance(rho, smolin_via_circuit()),
        trace_distance(rho, smolin_pauli_expansion()),
    ]
    add("constructions agree", max(diffs) <= EXACT_TOL, f"max trace distance {max(diffs):.2e}")

    eig = np.sort(np.linalg.eigvalsh(rho.matrix))
    target = np.array([0.0] * 12 + [0.25] * 4)
    err = float(np.max(np.abs(eig - target)))
    add("spectrum {1/4 x4, 0 x12}", err <= BUILD_TOL, f"max deviation {err:.2e}")

    for cut in (("A", "B"), ("A", "C"), ("A", "D")):
        low = min_eigenvalue(partial_transpose(rho, cut))
        add(f"PPT across {''.join(cut)}|rest", low >= -BUILD_TOL, f"min eigenvalue {low:+.3e}")
    for single in PARTY_LABELS:
        low = min_eigenvalue(partial_transpose(rho, (single,)))
        add(f"NPT across {single}|rest", abs(low + 0.125) <= BUILD_TOL, f"min eigenvalue {low:+.6f}")

    for n in (2, 3):
        state = generalized_smolin(n)
        want = expected_parity(n)
        for obs in MEASURABLE:
            mass = joint_distribution(state, obs).parity_mass(want)
            add(f"parity {want} for n={n} in {obs.value}", abs(mass - 1) <= BUILD_TOL, f"mass {mass:.12f}")

    for branch in bell_distribution(rho, "C", "D"):
        pair = partial_trace(branch.state, ("C", "D"))
        dist = trace_distance(pair, bell_state(branch.outcome))
        ok = abs(branch.probability - 0.25) <= BUILD_TOL and dist <= EXACT_TOL
        add(f"Bell collapse {branch.outcome.value}", ok, f"p={branch.probability:.6f}, distance {dist:.2e}")

    dist = trace_distance(bell_attack_view(), honest_view())
    add("Bell attack invisible to A,C,D", dist <= EXACT_TOL, f"trace distance {dist:.2e}")
    return checks
