"""Deterministic simulation fabric for the audit protocol.

Sessions run under a static active adversary: a fixed set of corrupted
participants, each assigned one behavior from a closed catalogue, wired
into the protocol engine before execution.  The environment is never
corruptible.  Every run is a pure function of (config, adversary, seed)
and can record a transcript -- an append-only event stream with per-event
payload digests -- from which any participant's view is reconstructed by
filtering.  Structural checkers assert the routing and leakage boundaries
on transcripts; TrialStats aggregates verdicts across seeded trials.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field

from . import pick as pick_mod
from .audit import (
    COUNTRY_ID,
    ENV_ID,
    VERIFIER_ID,
    AuditSession,
    ConfigInvalid,
    CountryBehavior,
    FirmBehavior,
    FirmSpec,
    SessionConfig,
    Verdict,
    VerifierBehavior,
    true_total,
)
from .commitment import (
    MAX_EMISSIONS_KG,
    params_from_dict,
    params_to_dict,
    setup,
    verify_opening,
)
from .groups import group_by_name


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj)).hexdigest()


def derive_seed(seed: int, *labels) -> int:
    """Independent sub-seed for a labelled stream of the given seed."""
    material = "|".join([str(seed), *map(str, labels)]).encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


# ---------------------------------------------------------------------------
# Adversary catalogue.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HonestButObserved:
    """Corrupted in name only: plays honestly, but its view counts as
    adversarial in the leakage accounting."""


@dataclass(frozen=True)
class TamperReport:
    """Firm commits and reports a false total, consistently."""

    delta: int | None = None
    absolute: int | None = None

    def __post_init__(self):
        if (self.delta is None) == (self.absolute is None):
            raise ConfigInvalid("TamperReport needs exactly one of delta/absolute")


@dataclass(frozen=True)
class MisreportSum:
    """Country publishes sums offset from the true aggregates."""

    dm: int = 0
    dr: int = 0


@dataclass(frozen=True)
class InconsistentReveal:
    """Reveal phase lie: a firm forwards a wrong blinding factor to the
    verifier; country/verifier misreveal in the given pick round."""

    round_index: int = 0


@dataclass(frozen=True)
class BiasPick:
    """Country or verifier replaces its uniform draw with a canned bias."""

    strategy: str = "zero"

    def __post_init__(self):
        if self.strategy not in pick_mod.CANNED_STRATEGIES:
            raise ConfigInvalid(f"unknown pick strategy {self.strategy!r}")


@dataclass(frozen=True)
class AbortAt:
    """Participant goes silent from the given step onward."""

    step: int

    def __post_init__(self):
        if not isinstance(self.step, int) or not (1 <= self.step <= 7):
            raise ConfigInvalid(f"AbortAt step must be in 1..7, got {self.step!r}")


@dataclass(frozen=True)
class CustomBehavior:
    """Open hook: ``build(participant_id)`` returns a behavior object.

    Only honored when the session config sets allow_custom_behaviors; the
    closed catalogue above is the supported surface for reproducible runs.
    """

    build: object


BEHAVIOR_TYPES = (
    HonestButObserved,
    TamperReport,
    MisreportSum,
    InconsistentReveal,
    BiasPick,
    AbortAt,
    CustomBehavior,
)


@dataclass(frozen=True)
class AdversarySpec:
    """Static corruption: fixed participant set, one behavior each."""

    corrupted: frozenset = frozenset()
    behaviors: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "corrupted", frozenset(self.corrupted))
        if ENV_ID in self.corrupted:
            raise ConfigInvalid("the environment cannot be corrupted")
        for pid in self.behaviors:
            if pid not in self.corrupted:
                raise ConfigInvalid(f"behavior assigned to uncorrupted {pid!r}")
        for pid, b in self.behaviors.items():
            if not isinstance(b, BEHAVIOR_TYPES):
                raise ConfigInvalid(f"unknown behavior object for {pid!r}: {b!r}")

    def behavior_of(self, pid: str):
        return self.behaviors.get(pid, HonestButObserved())


HONEST_ADVERSARY = AdversarySpec()


# -- concrete deviating participants, built from the catalogue --------------


class _TamperingFirm(FirmBehavior):
    def __init__(self, spec: TamperReport):
        self.spec = spec

    def claim(self, true_m: int) -> int:
        if self.spec.absolute is not None:
            return self.spec.absolute
        return true_m + self.spec.delta


class _BadRevealFirm(FirmBehavior):
    def reveal_blinding(self, r):
        return r + type(r)(1, r.q)


class _SilentFirm(FirmBehavior):
    def __init__(self, step: int):
        self.silent_from = step


class _MisreportingCountry(CountryBehavior):
    def __init__(self, spec: MisreportSum):
        self.spec = spec

    def publish(self, m_sum, r_sum):
        return m_sum + self.spec.dm, r_sum + type(r_sum)(self.spec.dr, r_sum.q)


class _SilentCountry(CountryBehavior):
    def __init__(self, step: int):
        self.silent_from = step


class _SilentVerifier(VerifierBehavior):
    def __init__(self, step: int):
        self.silent_from = step


def _wire(config: SessionConfig, adversary: AdversarySpec) -> dict:
    """Translate an AdversarySpec into engine behavior objects."""
    roster = set(config.roster)
    firm_behaviors: dict[str, FirmBehavior] = {}
    country_behavior: CountryBehavior | None = None
    verifier_behavior: VerifierBehavior | None = None
    pick_strategies: dict[str, pick_mod.PickStrategy] = {}

    for pid in sorted(adversary.corrupted):
        if pid not in roster and pid not in (COUNTRY_ID, VERIFIER_ID):
            raise ConfigInvalid(f"corrupted id {pid!r} is not a session participant")
        b = adversary.behavior_of(pid)
        if isinstance(b, CustomBehavior):
            if not config.allow_custom_behaviors:
                raise ConfigInvalid(
                    "custom behaviors require allow_custom_behaviors (test-only)"
                )
            built = b.build(pid)
            if pid in roster:
                firm_behaviors[pid] = built
            elif pid == COUNTRY_ID:
                if isinstance(built, pick_mod.PickStrategy):
                    pick_strategies[pick_mod.COUNTRY] = built
                else:
                    country_behavior = built
            else:
                if isinstance(built, pick_mod.PickStrategy):
                    pick_strategies[pick_mod.VERIFIER] = built
                else:
                    verifier_behavior = built
            continue
        if pid in roster:
            if isinstance(b, HonestButObserved):
                pass
            elif isinstance(b, TamperReport):
                firm_behaviors[pid] = _TamperingFirm(b)
            elif isinstance(b, InconsistentReveal):
                firm_behaviors[pid] = _BadRevealFirm()
            elif isinstance(b, AbortAt):
                firm_behaviors[pid] = _SilentFirm(b.step)
            else:
                raise ConfigInvalid(f"behavior {type(b).__name__} not valid for a firm")
        elif pid == COUNTRY_ID:
            if isinstance(b, HonestButObserved):
                pass
            elif isinstance(b, MisreportSum):
                country_behavior = _MisreportingCountry(b)
            elif isinstance(b, AbortAt):
                country_behavior = _SilentCountry(b.step)
            elif isinstance(b, BiasPick):
                pick_strategies[pick_mod.COUNTRY] = pick_mod.CANNED_STRATEGIES[b.strategy]()
            elif isinstance(b, InconsistentReveal):
                pick_strategies[pick_mod.COUNTRY] = pick_mod.InconsistentRevealPick(b.round_index)
            else:
                raise ConfigInvalid(f"behavior {type(b).__name__} not valid for the country")
        else:  # verifier
            if isinstance(b, HonestButObserved):
                pass
            elif isinstance(b, AbortAt):
                verifier_behavior = _SilentVerifier(b.step)
            elif isinstance(b, BiasPick):
                pick_strategies[pick_mod.VERIFIER] = pick_mod.CANNED_STRATEGIES[b.strategy]()
            elif isinstance(b, InconsistentReveal):
                pick_strategies[pick_mod.VERIFIER] = pick_mod.InconsistentRevealPick(b.round_index)
            else:
                raise ConfigInvalid(f"behavior {type(b).__name__} not valid for the verifier")

    return {
        "firm_behaviors": firm_behaviors,
        "country_behavior": country_behavior,
        "verifier_behavior": verifier_behavior,
        "pick_strategies": pick_strategies,
    }


# ---------------------------------------------------------------------------
# Transcripts and views.
# ---------------------------------------------------------------------------


class UnknownParticipant(ValueError):
    """view_of asked about an id that never took part in the session."""


@dataclass(frozen=True)
class Event:
    seq: int
    step: int
    kind: str
    sender: str
    channel: str  # "broadcast" | "private"
    recipient: str | None
    payload: dict
    digest: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "step": self.step,
            "kind": self.kind,
            "sender": self.sender,
            "channel": self.channel,
            "recipient": self.recipient,
            "payload": self.payload,
            "digest": self.digest,
        }


class Transcript:
    """Append-only event log; a participant's view is a filter over it."""

    def __init__(self, header: dict):
        self.header = dict(header)
        self.events: list[Event] = []
        self.verdict: dict | None = None

    @property
    def participants(self) -> tuple[str, ...]:
        return tuple(self.header["participants"])

    def record(self, *, step, kind, sender, channel, recipient, payload):
        self.events.append(
            Event(
                seq=len(self.events),
                step=step,
                kind=kind,
                sender=sender,
                channel=channel,
                recipient=recipient,
                payload=payload,
                digest=digest_of(payload),
            )
        )

    def set_verdict(self, verdict: dict):
        self.verdict = verdict

    def view_of(self, participant: str) -> list[Event]:
        """Everything the participant received: broadcasts plus its lane."""
        if participant not in self.participants:
            raise UnknownParticipant(participant)
        return [
            ev
            for ev in self.events
            if ev.channel == "broadcast" or ev.recipient == participant
        ]

    def to_jsonl(self) -> bytes:
        lines = [canonical_json({"header": self.header})]
        lines.extend(canonical_json(ev.to_dict()) for ev in self.events)
        if self.verdict is not None:
            lines.append(canonical_json({"verdict": self.verdict}))
        return b"\n".join(lines) + b"\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl()).hexdigest()


def verdict_to_dict(verdict: Verdict) -> dict:
    out = {"status": verdict.status, "accepted_m": verdict.accepted_m,
           "v_list": list(verdict.v_list) if verdict.v_list is not None else None}
    if verdict.abort is not None:
        out["abort"] = {
            "step": verdict.abort.step,
            "culprit_role": verdict.abort.culprit_role,
            "culprit": verdict.abort.culprit_id,
            "reason": verdict.abort.reason,
        }
    return out


# ---------------------------------------------------------------------------
# Session and trial runners.
# ---------------------------------------------------------------------------


@dataclass
class SessionResult:
    verdict: Verdict
    transcript: Transcript | None


def _transcript_header(config: SessionConfig, adversary: AdversarySpec, seed: int) -> dict:
    structure = {
        "roster": list(config.roster),
        "k": config.k,
        "data_mode": config.data_mode,
        "pick_mode": config.pick_mode,
        "cycle_id": config.cycle_id,
        "group": config.pp.group.descriptor.name,
    }
    return {
        "format": "transcript/v1",
        "participants": [ENV_ID, COUNTRY_ID, VERIFIER_ID, *config.roster],
        "corrupted": sorted(adversary.corrupted),
        "seed": seed,
        "pp": params_to_dict(config.pp),
        "config_digest": digest_of(structure),
        **structure,
    }


def run_session(
    config: SessionConfig,
    adversary: AdversarySpec = HONEST_ADVERSARY,
    seed: int = 0,
    record: bool = True,
) -> SessionResult:
    """One deterministic session under the given adversary and seed."""
    wiring = _wire(config, adversary)
    transcript = Transcript(_transcript_header(config, adversary, seed)) if record else None
    session = AuditSession(
        config,
        random.Random(seed),
        recorder=transcript.record if transcript is not None else None,
        **wiring,
    )
    verdict = session.run()
    if transcript is not None:
        transcript.set_verdict(verdict_to_dict(verdict))
    return SessionResult(verdict=verdict, transcript=transcript)


@dataclass
class TrialStats:
    """Aggregated verdicts over independent seeded sessions."""

    trials: int = 0
    completions: int = 0
    aborts_by_step: Counter = field(default_factory=Counter)
    aborts_by_culprit_role: Counter = field(default_factory=Counter)
    accepted_correct: int = 0
    accepted_wrong: int = 0
    subset_counts: Counter = field(default_factory=Counter)

    def record(self, verdict: Verdict, true_m: int | None = None):
        self.trials += 1
        if verdict.completed:
            self.completions += 1
            if true_m is not None:
                if verdict.accepted_m == true_m:
                    self.accepted_correct += 1
                else:
                    self.accepted_wrong += 1
        else:
            self.aborts_by_step[verdict.abort.step] += 1
            self.aborts_by_culprit_role[verdict.abort.culprit_role] += 1
        if verdict.v_list is not None:
            self.subset_counts[tuple(sorted(verdict.v_list))] += 1

    def merge(self, other: "TrialStats") -> "TrialStats":
        out = TrialStats(
            trials=self.trials + other.trials,
            completions=self.completions + other.completions,
            aborts_by_step=self.aborts_by_step + other.aborts_by_step,
            aborts_by_culprit_role=self.aborts_by_culprit_role + other.aborts_by_culprit_role,
            accepted_correct=self.accepted_correct + other.accepted_correct,
            accepted_wrong=self.accepted_wrong + other.accepted_wrong,
        )
        out.subset_counts = self.subset_counts + other.subset_counts
        return out

    @property
    def total_aborts(self) -> int:
        return sum(self.aborts_by_step.values())

    @property
    def detection_rate(self) -> float:
        return self.total_aborts / self.trials if self.trials else 0.0

    def abort_rate_at(self, step: int) -> float:
        return self.aborts_by_step.get(step, 0) / self.trials if self.trials else 0.0

    def check_invariants(self) -> None:
        if self.completions + self.total_aborts != self.trials:
            raise AssertionError("stats do not sum to trials")

    def as_dict(self) -> dict:
        self.check_invariants()
        return {
            "trials": self.trials,
            "completions": self.completions,
            "abort_step_histogram": {str(k): v for k, v in sorted(self.aborts_by_step.items())},
            "abort_culprit_roles": dict(sorted(self.aborts_by_culprit_role.items())),
            "detection_rate": self.detection_rate,
            "accepted_correct": self.accepted_correct,
            "accepted_wrong": self.accepted_wrong,
        }


def run_trials(
    config: SessionConfig,
    adversary: AdversarySpec = HONEST_ADVERSARY,
    trials: int = 1,
    seed: int = 0,
    structural_checks: bool = True,
) -> TrialStats:
    """N independent sessions with derived per-trial seeds.

    With structural_checks on (the default), every trial records a
    transcript and the routing invariant is asserted on it.
    """
    if trials < 1:
        raise ConfigInvalid("trials must be >= 1")
    stats = TrialStats()
    truth = true_total(config)
    for i in range(trials):
        result = run_session(
            config, adversary, seed=derive_seed(seed, "trial", i),
            record=structural_checks,
        )
        if structural_checks:
            violations = routing_violations(result.transcript)
            if violations:
                raise AssertionError(f"routing violations in trial {i}: {violations}")
        stats.record(result.verdict, true_m=truth)
    stats.check_invariants()
    return stats


def run_pick_trials(
    roster,
    k: int,
    trials: int,
    seed: int,
    strategies: dict | None = None,
    base_mode: str = "shared",
    group_name: str = "toy",
) -> Counter:
    """Subset frequency table for repeated joint selections."""
    group = group_by_name(group_name)
    pp = setup(group, "hash_derived")
    counts: Counter = Counter()
    for i in range(trials):
        outcome = pick_mod.run_pick(
            roster, k, pp, random.Random(derive_seed(seed, "pick", i)),
            strategies=strategies, base_mode=base_mode,
        )
        counts[frozenset(outcome.picked)] += 1
    return counts


def chi_square_uniform(counts) -> tuple[float, float]:
    """Chi-square statistic and p-value against the uniform expectation."""
    from scipy.stats import chisquare

    observed = list(counts)
    stat, p = chisquare(observed)
    return float(stat), float(p)


def subset_chi_square(counts: Counter, roster, k: int) -> tuple[float, float]:
    """Chi-square over all (n choose k) subsets, zero cells included."""
    from itertools import combinations

    cells = [counts.get(frozenset(c), counts.get(tuple(sorted(c)), 0))
             for c in combinations(sorted(roster), k)]
    return chi_square_uniform(cells)


# ---------------------------------------------------------------------------
# Structural checkers over transcripts.
# ---------------------------------------------------------------------------

# kind -> fixed recipient (None = the firm named in the payload)
PRIVATE_KINDS = {
    "assign_m": None,
    "report": COUNTRY_ID,
    "env_truth": VERIFIER_ID,
    "reveal_opening": VERIFIER_ID,
    "ledger_forward": VERIFIER_ID,
}
BROADCAST_KINDS = {
    "pp", "commitment", "sum", "verification_list", "abort", "verdict",
    "pick_commit", "pick_reveal", "pick_fault", "pick_settle", "pick_base",
}
# kind -> which secret fields of which firm it carries
OPENING_FIELDS = {
    "assign_m": ("m",),
    "report": ("m", "r"),
    "env_truth": ("m",),
    "reveal_opening": ("r",),
}


def routing_violations(transcript: Transcript) -> list[str]:
    """No private-lane message may be addressed outside its lane."""
    out = []
    last_seq = -1
    last_step = 0
    for ev in transcript.events:
        if ev.seq <= last_seq:
            out.append(f"seq not increasing at {ev.seq}")
        last_seq = ev.seq
        if ev.step < last_step:
            out.append(f"step went backwards at seq {ev.seq}")
        last_step = max(last_step, ev.step)
        if ev.digest != digest_of(ev.payload):
            out.append(f"payload digest mismatch at seq {ev.seq}")
        if ev.kind in PRIVATE_KINDS:
            if ev.channel != "private" or ev.recipient is None:
                out.append(f"{ev.kind} at seq {ev.seq} not on a private lane")
                continue
            expected = PRIVATE_KINDS[ev.kind]
            if expected is None:
                expected = ev.payload.get("firm")
            if ev.recipient != expected:
                out.append(
                    f"{ev.kind} at seq {ev.seq} routed to {ev.recipient}, expected {expected}"
                )
        elif ev.kind in BROADCAST_KINDS:
            if ev.channel != "broadcast" or ev.recipient is not None:
                out.append(f"{ev.kind} at seq {ev.seq} should be broadcast")
        else:
            out.append(f"unknown event kind {ev.kind!r} at seq {ev.seq}")
    return out


def _revealed_list(transcript: Transcript) -> tuple[str, ...] | None:
    for ev in transcript.events:
        if ev.kind == "verification_list":
            return tuple(ev.payload["v"])
    return None


def leakage_violations(transcript: Transcript) -> list[str]:
    """No honest unpicked firm's opening may reach firms or the verifier.

    The country legitimately receives every opening at the report step and
    the environment generates the data, so the boundary under test is the
    views of the firms and of the verifier.
    """
    corrupted = set(transcript.header.get("corrupted", ()))
    roster = list(transcript.header["roster"])
    picked = set(_revealed_list(transcript) or ())
    out = []
    for viewer in (*roster, VERIFIER_ID):
        for ev in transcript.view_of(viewer):
            fields = OPENING_FIELDS.get(ev.kind)
            if not fields:
                continue
            subject = ev.payload.get("firm")
            if subject is None or subject in corrupted:
                continue
            if viewer in roster and subject != viewer:
                out.append(
                    f"{viewer} sees {ev.kind}({','.join(fields)}) of {subject} at seq {ev.seq}"
                )
            if viewer == VERIFIER_ID and subject not in picked:
                out.append(
                    f"verifier sees {ev.kind} of unpicked {subject} at seq {ev.seq}"
                )
    return out


def corruption_view_violations(transcript: Transcript) -> list[str]:
    """Flag honest-firm plaintext inside any corrupted participant's view.

    Skipped (returns []) when the country is corrupted, since the country
    legitimately holds every opening.
    """
    corrupted = set(transcript.header.get("corrupted", ()))
    if not corrupted or COUNTRY_ID in corrupted:
        return []
    picked = set(_revealed_list(transcript) or ())
    out = []
    for viewer in sorted(corrupted):
        for ev in transcript.view_of(viewer):
            fields = OPENING_FIELDS.get(ev.kind)
            if not fields or "m" not in fields:
                continue
            subject = ev.payload.get("firm")
            if subject is None or subject in corrupted:
                continue
            if viewer == VERIFIER_ID and subject in picked:
                continue
            out.append(
                f"corrupted {viewer} sees plaintext of honest {subject} at seq {ev.seq}"
            )
    return out


# ---------------------------------------------------------------------------
# Scenarios.
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    config: SessionConfig
    adversary: AdversarySpec
    trials: int
    seed: int


_BEHAVIOR_PARSERS = {
    "honest_observed": lambda d: HonestButObserved(),
    "tamper_report": lambda d: TamperReport(
        delta=d.get("delta"), absolute=d.get("absolute")
    ),
    "misreport_sum": lambda d: MisreportSum(dm=d.get("dm", 0), dr=d.get("dr", 0)),
    "inconsistent_reveal": lambda d: InconsistentReveal(round_index=d.get("round", 0)),
    "bias_pick": lambda d: BiasPick(strategy=d.get("strategy", "zero")),
    "abort_at": lambda d: AbortAt(step=d["step"]),
}


def scenario_from_dict(data: dict, name: str = "scenario") -> Scenario:
    """Build a runnable scenario from its JSON form.

    Schema: {group, setup_mode?, n | firms: [{id, m} | {id, ledger, meter_pk}],
    k, data_mode?, pick_mode?, adversary: {corrupted, behaviors}, trials?, seed?}.
    """
    try:
        group = group_by_name(data.get("group", "toy"))
        mode = data.get("setup_mode", "hash_derived")
        seed = int(data.get("seed", 0))
        pp = setup(group, mode, random.Random(derive_seed(seed, "setup")))
        if "firms" in data:
            firms = []
            for f in data["firms"]:
                if "ledger" in f:
                    from .measurement import read_ledger

                    firms.append(
                        FirmSpec(
                            firm_id=f["id"],
                            ledger=read_ledger(f["ledger"]),
                            meter_pk=bytes.fromhex(f["meter_pk"]),
                        )
                    )
                else:
                    firms.append(FirmSpec(firm_id=f["id"], true_m=int(f["m"])))
            data_mode = data.get(
                "data_mode",
                "integrated" if any(f.ledger is not None for f in firms) else "abstract",
            )
        else:
            n = int(data["n"])
            firms = [FirmSpec(firm_id=f"F{i + 1}", true_m=100 * (i + 1)) for i in range(n)]
            data_mode = data.get("data_mode", "abstract")
        config = SessionConfig(
            pp=pp,
            firms=tuple(firms),
            k=int(data["k"]),
            cycle_id=data.get("cycle_id", "cycle-0"),
            data_mode=data_mode,
            pick_mode=data.get("pick_mode", "env"),
            pick_base_mode=data.get("pick_base_mode", "shared"),
            pick_fault_policy=data.get("pick_fault_policy", "complete"),
        )
        adv_data = data.get("adversary", {})
        behaviors = {}
        for pid, b in adv_data.get("behaviors", {}).items():
            btype = b.get("type")
            if btype not in _BEHAVIOR_PARSERS:
                raise ConfigInvalid(f"unknown behavior type {btype!r}")
            behaviors[pid] = _BEHAVIOR_PARSERS[btype](b)
        adversary = AdversarySpec(
            corrupted=frozenset(adv_data.get("corrupted", ())), behaviors=behaviors
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(f"bad scenario: {exc}") from None
    return Scenario(
        name=data.get("name", name),
        config=config,
        adversary=adversary,
        trials=int(data.get("trials", 1)),
        seed=seed,
    )


BUILTIN_SCENARIOS: dict[str, dict] = {
    "honest": {
        "group": "toy", "n": 5, "k": 2, "trials": 100,
    },
    "one-tamperer-n10-k3": {
        "group": "toy", "n": 10, "k": 3, "trials": 20000,
        "adversary": {
            "corrupted": ["F3"],
            "behaviors": {"F3": {"type": "tamper_report", "delta": 100}},
        },
    },
    "one-tamperer-always-picked": {
        "group": "toy", "n": 10, "k": 10, "trials": 1000,
        "adversary": {
            "corrupted": ["F3"],
            "behaviors": {"F3": {"type": "tamper_report", "delta": 100}},
        },
    },
    "misreport-sum": {
        "group": "toy", "n": 5, "k": 2, "trials": 100,
        "adversary": {
            "corrupted": ["C"],
            "behaviors": {"C": {"type": "misreport_sum", "dm": 1}},
        },
    },
    "inconsistent-reveal": {
        "group": "toy", "n": 5, "k": 5, "trials": 100,
        "adversary": {
            "corrupted": ["F2"],
            "behaviors": {"F2": {"type": "inconsistent_reveal"}},
        },
    },
    "bias-pick-zero": {
        "group": "toy", "n": 5, "k": 2, "pick_mode": "joint", "trials": 1000,
        "adversary": {
            "corrupted": ["C"],
            "behaviors": {"C": {"type": "bias_pick", "strategy": "zero"}},
        },
    },
    "silent-country": {
        "group": "toy", "n": 5, "k": 2, "trials": 100,
        "adversary": {
            "corrupted": ["C"],
            "behaviors": {"C": {"type": "abort_at", "step": 4}},
        },
    },
}


def load_scenario(name_or_path: str) -> Scenario:
    """Resolve a builtin scenario name or a JSON file path."""
    if name_or_path in BUILTIN_SCENARIOS:
        data = dict(BUILTIN_SCENARIOS[name_or_path])
        return scenario_from_dict(data, name=name_or_path)
    try:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(
            f"unknown scenario {name_or_path!r}; builtins: "
            + ", ".join(sorted(BUILTIN_SCENARIOS))
        ) from None
    return scenario_from_dict(data, name=data.get("name", name_or_path))


# ---------------------------------------------------------------------------
# Transcript persistence and independent replay.
# ---------------------------------------------------------------------------


class TranscriptFormatError(ValueError):
    """Transcript file is not a well-formed event stream."""


def parse_transcript(data: bytes) -> Transcript:
    """Rebuild a Transcript object from its JSONL serialization."""
    header = None
    events: list[Event] = []
    verdict = None
    for line_no, raw in enumerate(data.splitlines(), start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TranscriptFormatError(f"line {line_no}: {exc}") from None
        if "header" in obj:
            header = obj["header"]
        elif "verdict" in obj:
            verdict = obj["verdict"]
        else:
            try:
                events.append(Event(**obj))
            except TypeError as exc:
                raise TranscriptFormatError(f"line {line_no}: {exc}") from None
    if header is None:
        raise TranscriptFormatError("transcript has no header line")
    t = Transcript(header)
    t.events = events
    t.verdict = verdict
    return t


# Abort reasons that reflect participant behavior rather than recorded data;
# a fresh verifier replaying the messages cannot re-derive these.
_BEHAVIORAL_REASONS = ("went silent", "ledger check failed", "pick fault")


def _is_behavioral(reason: str) -> bool:
    return any(reason.startswith(prefix) for prefix in _BEHAVIORAL_REASONS)


def replay_verdict(transcript: Transcript) -> dict:
    """Verdict a fresh verifier reaches from the recorded messages alone.

    Re-runs the examination, spot-check, and sum-check logic over the
    transcript's events.  Ledger contents and participant silence are not
    reconstructible from digests, so behavioral aborts may legitimately
    differ; audit_transcript accounts for that.
    """
    header = transcript.header
    pp = params_from_dict(header["pp"])
    roster = list(header["roster"])

    commitments = {}
    reports = {}
    sums = None
    v_list = None
    truths = {}
    reveals = {}
    pick_fault = None
    for ev in transcript.events:
        p = ev.payload
        if ev.kind == "commitment":
            commitments[p["firm"]] = pp.group.decode_point(bytes.fromhex(p["c"]))
        elif ev.kind == "report":
            reports[p["firm"]] = (p["m"], pp.group.decode_scalar(bytes.fromhex(p["r"])))
        elif ev.kind == "sum":
            sums = (p["m"], pp.group.decode_scalar(bytes.fromhex(p["r"])))
        elif ev.kind == "verification_list":
            v_list = tuple(p["v"])
        elif ev.kind == "env_truth":
            truths[p["firm"]] = p["m"]
        elif ev.kind == "reveal_opening":
            reveals[p["firm"]] = pp.group.decode_scalar(bytes.fromhex(p["r"]))
        elif ev.kind == "pick_fault":
            pick_fault = (ev.sender, p.get("reason", "pick fault"))

    def aborted(step, role, culprit, reason):
        return {"status": "aborted",
                "abort": {"step": step, "culprit_role": role,
                          "culprit": culprit, "reason": reason}}

    for fid in roster:
        if fid not in reports or fid not in commitments:
            return aborted(3, "firm", fid, "report missing")
        m, r = reports[fid]
        if not isinstance(m, int) or m < 0 or m >= MAX_EMISSIONS_KG:
            return aborted(3, "firm", fid, f"reported total {m} out of range")
        if not verify_opening(pp, commitments[fid], pp.group.scalar(m), r):
            return aborted(3, "firm", fid, "opening does not match the commitment")
    if sums is None:
        return aborted(4, "country", COUNTRY_ID, "went silent")
    if v_list is None:
        if pick_fault is not None:
            sender, reason = pick_fault
            role = "country" if sender == COUNTRY_ID else "verifier"
            return aborted(5, role, sender, f"pick fault: {reason}")
        return aborted(5, "environment", ENV_ID, "verification list missing")
    for fid in v_list:
        if fid not in commitments:
            return aborted(6, "firm", fid, "no commitment on record")
        if fid not in reveals:
            return aborted(6, "firm", fid, "blinding factor not revealed")
        if fid not in truths:
            return aborted(6, "environment", ENV_ID, "ground truth missing")
        if not verify_opening(pp, commitments[fid], pp.group.scalar(truths[fid]), reveals[fid]):
            return aborted(6, "firm", fid, "commitment does not open to the true total")
    m_pub, r_pub = sums
    total = pp.group.identity
    for fid in roster:
        if fid in commitments:
            total = total + commitments[fid]
    max_total = len(roster) * (MAX_EMISSIONS_KG - 1)
    if not isinstance(m_pub, int) or m_pub < 0 or m_pub > max_total:
        return aborted(7, "country", COUNTRY_ID, "published total outside the admissible range")
    if not verify_opening(pp, total, pp.group.scalar(m_pub), r_pub):
        return aborted(7, "country", COUNTRY_ID,
                       "aggregate commitment does not open to the published sums")
    return {"status": "completed", "accepted_m": m_pub, "abort": None}


def audit_transcript(transcript: Transcript) -> dict:
    """Full independent audit: structure, routing, leakage, verdict replay.

    Returns {ok, violations, replayed, recorded}.  A recorded abort whose
    reason is behavioral (silence, ledger contents, pick faults) cannot be
    contradicted by message data alone and is accepted as consistent.
    """
    violations = []
    violations.extend(routing_violations(transcript))
    violations.extend(leakage_violations(transcript))
    recorded = transcript.verdict
    replayed = replay_verdict(transcript)
    if recorded is None:
        violations.append("transcript carries no verdict record")
    else:
        rec_abort = recorded.get("abort")
        if rec_abort is not None and _is_behavioral(rec_abort.get("reason", "")):
            pass  # not reconstructible from the message record
        elif recorded.get("status") != replayed.get("status"):
            violations.append(
                f"recorded status {recorded.get('status')} but replay says "
                f"{replayed.get('status')}"
            )
        elif recorded.get("status") == "completed":
            if recorded.get("accepted_m") != replayed.get("accepted_m"):
                violations.append("accepted total differs under replay")
        else:
            rep_abort = replayed.get("abort") or {}
            for field_name in ("step", "culprit"):
                if rec_abort.get(field_name) != rep_abort.get(field_name):
                    violations.append(
                        f"recorded abort {field_name}={rec_abort.get(field_name)!r} "
                        f"but replay derived {rep_abort.get(field_name)!r}"
                    )
    return {
        "ok": not violations,
        "violations": violations,
        "replayed": replayed,
        "recorded": recorded,
    }
