"""The seven-step auditing session over firms, country, and verifier.

An environment hands each firm its true emissions total and seals a random
k-subset of firms for later inspection.  Firms broadcast commitments and
privately send openings to the country; the country checks every opening
and publishes aggregate sums; the subset is then revealed and the verifier
rechecks the picked firms from ground truth before checking that the sum of
all broadcast commitments opens to the published totals.

Steps are barriers: the engine processes firm messages in roster order
within a step, advances monotonically, and stops at the first failed check
with an abort naming the step and the culprit.  The verdict is a pure
function of (config, behaviors, seed).

Two data modes: *abstract* sessions take each firm's true total straight
from the config; *integrated* sessions derive it from the firm's signed
meter ledger and extend the verifier's step-6 check with a full ledger
spot check.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import IntEnum

from . import pick as pick_mod
from .commitment import (
    MAX_EMISSIONS_KG,
    PublicParams,
    commit,
    params_to_dict,
    verify_opening,
)
from .groups import Scalar
from .measurement import FirmLedger, FirmReport, aggregate, spot_check

ENV_ID = "E"
COUNTRY_ID = "C"
VERIFIER_ID = "V"

ROLE_ENV = "environment"
ROLE_FIRM = "firm"
ROLE_COUNTRY = "country"
ROLE_VERIFIER = "verifier"


class Step(IntEnum):
    SETUP = 1
    REPORT = 2
    EXAMINE = 3
    PUBLISH = 4
    REVEAL = 5
    SPOT_CHECK = 6
    SUM_CHECK = 7


class ConfigInvalid(ValueError):
    """Session configuration violates its invariants."""


class OutOfOrder(RuntimeError):
    """Step method invoked outside the protocol's step sequence."""


class SealedError(RuntimeError):
    """Verification list accessed before its reveal step."""


class MissingReport(ValueError):
    """Country asked to examine before all firms reported."""


@dataclass(frozen=True)
class FirmSpec:
    """One firm in the roster; exactly one ground-truth source is set."""

    firm_id: str
    true_m: int | None = None
    ledger: FirmLedger | None = None
    meter_pk: bytes | None = None


@dataclass
class SessionConfig:
    pp: PublicParams
    firms: tuple[FirmSpec, ...]
    k: int
    cycle_id: str = "cycle-0"
    data_mode: str = "abstract"  # "abstract" | "integrated"
    pick_mode: str = "env"  # "env" | "joint"
    pick_base_mode: str = "shared"
    pick_fault_policy: str = "complete"
    allow_custom_behaviors: bool = False

    def __post_init__(self):
        self.firms = tuple(self.firms)
        ids = [f.firm_id for f in self.firms]
        if len(set(ids)) != len(ids):
            raise ConfigInvalid("duplicate firm ids in roster")
        for fid in ids:
            if not fid or fid in (ENV_ID, COUNTRY_ID, VERIFIER_ID):
                raise ConfigInvalid(f"bad firm id {fid!r}")
        if not isinstance(self.k, int) or self.k < 0 or self.k > len(ids):
            raise ConfigInvalid(f"k={self.k!r} not in [0, {len(ids)}]")
        if self.data_mode not in ("abstract", "integrated"):
            raise ConfigInvalid(f"unknown data mode {self.data_mode!r}")
        if self.pick_mode not in ("env", "joint"):
            raise ConfigInvalid(f"unknown pick mode {self.pick_mode!r}")
        for f in self.firms:
            if self.data_mode == "abstract":
                if not isinstance(f.true_m, int):
                    raise ConfigInvalid(f"firm {f.firm_id}: abstract mode needs true_m")
                if f.true_m < 0 or f.true_m >= MAX_EMISSIONS_KG:
                    raise ConfigInvalid(f"firm {f.firm_id}: true_m out of range")
            else:
                if f.ledger is None or f.meter_pk is None:
                    raise ConfigInvalid(
                        f"firm {f.firm_id}: integrated mode needs ledger and meter_pk"
                    )

    @property
    def n(self) -> int:
        return len(self.firms)

    @property
    def roster(self) -> tuple[str, ...]:
        return tuple(f.firm_id for f in self.firms)


@dataclass(frozen=True)
class Abort:
    step: int
    culprit_role: str
    culprit_id: str
    reason: str


@dataclass(frozen=True)
class Verdict:
    status: str  # "completed" | "aborted"
    accepted_m: int | None
    abort: Abort | None
    v_list: tuple[str, ...] | None

    @property
    def completed(self) -> bool:
        return self.status == "completed"


class EnvAssignment:
    """Environment's private state: truth per firm plus a sealed pick."""

    def __init__(self, m_assignments: dict[str, int], v_list: tuple[str, ...] | None):
        self.m_assignments = dict(m_assignments)
        self._v_list = v_list
        self._revealed = False

    @property
    def verification_list(self) -> tuple[str, ...]:
        if not self._revealed:
            raise SealedError("verification list is sealed until the reveal step")
        return self._v_list

    def reveal(self) -> tuple[str, ...]:
        self._revealed = True
        return self._v_list


def env_setup(config: SessionConfig, rng: random.Random) -> EnvAssignment:
    """Assign ground truth and (env pick mode) seal a uniform k-subset.

    In integrated mode ground truth is the verified aggregate of each
    firm's signed ledger; the environment is the only party trusted to
    compute it ahead of time.
    """
    assignments = {}
    for f in config.firms:
        if config.data_mode == "abstract":
            assignments[f.firm_id] = f.true_m
        else:
            assignments[f.firm_id] = aggregate(f.ledger, f.meter_pk)
    if config.pick_mode == "env":
        chosen = set(rng.sample(config.roster, config.k))
        v_list = tuple(fid for fid in config.roster if fid in chosen)
    else:
        v_list = None  # picked jointly at the reveal step
    return EnvAssignment(assignments, v_list)


# ---------------------------------------------------------------------------
# Participant behaviors.  The defaults play the protocol honestly; the
# simulation harness subclasses them to inject deviations.
# ---------------------------------------------------------------------------


class FirmBehavior:
    silent_from: int | None = None

    def claim(self, true_m: int) -> int:
        """The total the firm actually commits to and reports."""
        return true_m

    def blinding(self, pp: PublicParams, rng: random.Random) -> Scalar:
        return pp.group.random_scalar(rng)

    def reveal_blinding(self, r: Scalar) -> Scalar:
        """What the firm forwards to the verifier when picked."""
        return r

    def silent_at(self, step: int) -> bool:
        return self.silent_from is not None and step >= self.silent_from


class CountryBehavior:
    silent_from: int | None = None

    def publish(self, m_sum: int, r_sum: Scalar) -> tuple[int, Scalar]:
        return m_sum, r_sum

    def silent_at(self, step: int) -> bool:
        return self.silent_from is not None and step >= self.silent_from


class VerifierBehavior:
    silent_from: int | None = None

    def silent_at(self, step: int) -> bool:
        return self.silent_from is not None and step >= self.silent_from


@dataclass
class SessionState:
    next_step: int = 1
    completed: bool = False
    abort: Abort | None = None
    env: EnvAssignment | None = None
    commitments: dict = field(default_factory=dict)  # firm -> point (broadcast)
    reports: dict = field(default_factory=dict)  # firm -> (claim m, r); country's lane
    published_m: int | None = None
    published_r: Scalar | None = None
    v_list: tuple[str, ...] | None = None
    verifier_truth: dict = field(default_factory=dict)  # firm -> true m (env lane)
    verifier_blindings: dict = field(default_factory=dict)  # firm -> r (firm lane)
    verifier_ledgers: dict = field(default_factory=dict)  # firm -> ledger (integrated)
    broadcast_log: list = field(default_factory=list)  # (kind, sender, payload)

    @property
    def finished(self) -> bool:
        return self.completed or self.abort is not None


class AuditSession:
    """Drives one session; step methods may also be called one at a time."""

    def __init__(
        self,
        config: SessionConfig,
        rng: random.Random,
        firm_behaviors: dict | None = None,
        country_behavior: CountryBehavior | None = None,
        verifier_behavior: VerifierBehavior | None = None,
        pick_strategies: dict | None = None,
        recorder=None,
    ):
        self.config = config
        self.rng = rng
        self.state = SessionState()
        self.firm_behaviors = {
            f.firm_id: (firm_behaviors or {}).get(f.firm_id, FirmBehavior())
            for f in config.firms
        }
        self.country_behavior = country_behavior or CountryBehavior()
        self.verifier_behavior = verifier_behavior or VerifierBehavior()
        self.pick_strategies = pick_strategies or {}
        self.recorder = recorder
        self._firm_blindings: dict[str, Scalar] = {}  # each firm's own secret

    # -- plumbing -----------------------------------------------------------

    def _emit(self, step, kind, sender, payload, recipient=None):
        if recipient is None:
            self.state.broadcast_log.append((kind, sender, payload))
        if self.recorder is not None:
            self.recorder(
                step=int(step),
                kind=kind,
                sender=sender,
                channel="broadcast" if recipient is None else "private",
                recipient=recipient,
                payload=payload,
            )

    def _require(self, step: Step):
        if self.state.finished:
            raise OutOfOrder("session already finished")
        if self.state.next_step != int(step):
            raise OutOfOrder(
                f"step {int(step)} requested, protocol is at step {self.state.next_step}"
            )

    def _abort(self, step: Step, role: str, culprit: str, reason: str):
        # The environment plays referee: it announces the failed execution.
        self.state.abort = Abort(int(step), role, culprit, reason)
        self._emit(step, "abort", ENV_ID,
                   {"step": int(step), "culprit_role": role, "culprit": culprit,
                    "reason": reason})

    def _hex_point(self, p) -> str:
        return self.config.pp.group.encode_point(p).hex()

    def _hex_scalar(self, s: Scalar) -> str:
        return self.config.pp.group.encode_scalar(s).hex()

    # -- protocol steps ------------------------------------------------------

    def step1_setup(self):
        """Environment broadcasts pp and hands each firm its true total."""
        self._require(Step.SETUP)
        self.state.env = env_setup(self.config, self.rng)
        self._emit(Step.SETUP, "pp", ENV_ID, params_to_dict(self.config.pp))
        for fid in self.config.roster:
            self._emit(
                Step.SETUP, "assign_m", ENV_ID,
                {"firm": fid, "m": self.state.env.m_assignments[fid]},
                recipient=fid,
            )
        self.state.next_step = 2

    def step2_reports(self):
        """Each firm broadcasts its commitment and reports the opening."""
        self._require(Step.REPORT)
        pp = self.config.pp
        for fid in self.config.roster:
            behavior = self.firm_behaviors[fid]
            if behavior.silent_at(2):
                continue  # absence is caught at the examination step
            claim = behavior.claim(self.state.env.m_assignments[fid])
            r = behavior.blinding(pp, self.rng)
            self._firm_blindings[fid] = r
            c = commit(pp, pp.group.scalar(claim), r)
            self.state.commitments[fid] = c
            self.state.reports[fid] = (claim, r)
            self._emit(Step.REPORT, "commitment", fid,
                       {"firm": fid, "c": self._hex_point(c)})
            self._emit(Step.REPORT, "report", fid,
                       {"firm": fid, "m": claim, "r": self._hex_scalar(r)},
                       recipient=COUNTRY_ID)
        self.state.next_step = 3

    def examine_reports(self) -> None:
        """Country-side check of every firm's opening and range (step 3 body).

        Raises MissingReport if a firm never reported; returns None and
        leaves abort state to the caller's step wrapper otherwise.
        """
        pp = self.config.pp
        for fid in self.config.roster:
            if fid not in self.state.reports:
                raise MissingReport(fid)
            claim, r = self.state.reports[fid]
            if not isinstance(claim, int) or claim < 0 or claim >= MAX_EMISSIONS_KG:
                raise _ExamineFailed(fid, f"reported total {claim} out of range")
            if not verify_opening(pp, self.state.commitments[fid], pp.group.scalar(claim), r):
                raise _ExamineFailed(fid, "opening does not match the commitment")

    def step3_examine(self):
        self._require(Step.EXAMINE)
        if self.country_behavior.silent_at(3):
            self._abort(Step.EXAMINE, ROLE_COUNTRY, COUNTRY_ID, "went silent")
            return
        try:
            self.examine_reports()
        except MissingReport as exc:
            self._abort(Step.EXAMINE, ROLE_FIRM, str(exc), "report missing")
            return
        except _ExamineFailed as exc:
            self._abort(Step.EXAMINE, ROLE_FIRM, exc.firm_id, exc.reason)
            return
        self.state.next_step = 4

    def step4_publish(self):
        """Country broadcasts the integer total and the blinding total."""
        self._require(Step.PUBLISH)
        if self.country_behavior.silent_at(4):
            self._abort(Step.PUBLISH, ROLE_COUNTRY, COUNTRY_ID, "went silent")
            return
        pp = self.config.pp
        m_sum = sum(m for m, _ in self.state.reports.values())
        r_sum = pp.group.scalar(0)
        for _, r in self.state.reports.values():
            r_sum = r_sum + r
        m_pub, r_pub = self.country_behavior.publish(m_sum, r_sum)
        self.state.published_m = m_pub
        self.state.published_r = r_pub
        self._emit(Step.PUBLISH, "sum", COUNTRY_ID,
                   {"m": m_pub, "r": self._hex_scalar(r_pub)})
        self.state.next_step = 5

    def step5_reveal(self):
        """Reveal the verification list; forward truths and blindings to V."""
        self._require(Step.REVEAL)
        if self.config.pick_mode == "env":
            v_list = self.state.env.reveal()
        else:
            if self.verifier_behavior.silent_at(5):
                self._abort(Step.REVEAL, ROLE_VERIFIER, VERIFIER_ID, "went silent")
                return
            if self.country_behavior.silent_at(5):
                self._abort(Step.REVEAL, ROLE_COUNTRY, COUNTRY_ID, "went silent")
                return
            outcome = pick_mod.run_pick(
                self.config.roster,
                self.config.k,
                self.config.pp,
                self.rng,
                strategies=self.pick_strategies,
                base_mode=self.config.pick_base_mode,
                on_fault=self.config.pick_fault_policy,
                recorder=self._pick_recorder,
            )
            if outcome.picked is None:
                fault = outcome.fault
                role = ROLE_COUNTRY if fault.party == pick_mod.COUNTRY else ROLE_VERIFIER
                cid = COUNTRY_ID if fault.party == pick_mod.COUNTRY else VERIFIER_ID
                self._abort(Step.REVEAL, role, cid, f"pick fault: {fault.reason}")
                return
            chosen = set(outcome.picked)
            v_list = tuple(fid for fid in self.config.roster if fid in chosen)
        self.state.v_list = v_list
        self._emit(Step.REVEAL, "verification_list", ENV_ID, {"v": list(v_list)})
        for fid in v_list:
            self._emit(Step.REVEAL, "env_truth", ENV_ID,
                       {"firm": fid, "m": self.state.env.m_assignments[fid]},
                       recipient=VERIFIER_ID)
            self.state.verifier_truth[fid] = self.state.env.m_assignments[fid]
            behavior = self.firm_behaviors[fid]
            if fid in self._firm_blindings and not behavior.silent_at(5):
                r_fwd = behavior.reveal_blinding(self._firm_blindings[fid])
                self.state.verifier_blindings[fid] = r_fwd
                self._emit(Step.REVEAL, "reveal_opening", fid,
                           {"firm": fid, "r": self._hex_scalar(r_fwd)},
                           recipient=VERIFIER_ID)
            if self.config.data_mode == "integrated":
                spec = next(f for f in self.config.firms if f.firm_id == fid)
                self.state.verifier_ledgers[fid] = spec.ledger
                self._emit(Step.REVEAL, "ledger_forward", fid,
                           {"firm": fid, "entries": len(spec.ledger.entries),
                            "head": spec.ledger.head.hex()},
                           recipient=VERIFIER_ID)
        self.state.next_step = 6

    def _pick_recorder(self, kind, round_index, party, payload):
        sender = {pick_mod.COUNTRY: COUNTRY_ID, pick_mod.VERIFIER: VERIFIER_ID}.get(
            party, ENV_ID
        )
        self._emit(Step.REVEAL, kind, sender, dict(payload, round=round_index))

    def step6_spot_checks(self):
        """Verifier rechecks every picked firm against ground truth."""
        self._require(Step.SPOT_CHECK)
        if self.verifier_behavior.silent_at(6):
            self._abort(Step.SPOT_CHECK, ROLE_VERIFIER, VERIFIER_ID, "went silent")
            return
        pp = self.config.pp
        for fid in self.state.v_list:
            if fid not in self.state.commitments:
                self._abort(Step.SPOT_CHECK, ROLE_FIRM, fid, "no commitment on record")
                return
            if fid not in self.state.verifier_blindings:
                self._abort(Step.SPOT_CHECK, ROLE_FIRM, fid, "blinding factor not revealed")
                return
            true_m = self.state.verifier_truth[fid]
            r = self.state.verifier_blindings[fid]
            if not verify_opening(pp, self.state.commitments[fid], pp.group.scalar(true_m), r):
                self._abort(Step.SPOT_CHECK, ROLE_FIRM, fid,
                            "commitment does not open to the true total")
                return
            if self.config.data_mode == "integrated":
                spec = next(f for f in self.config.firms if f.firm_id == fid)
                claim, _ = self.state.reports.get(fid, (true_m, None))
                report = FirmReport(
                    firm_id=fid, cycle_id=self.config.cycle_id, total_kg=claim,
                    r=r, commitment=self.state.commitments[fid],
                )
                check = spot_check(pp, report, self.state.verifier_ledgers[fid], spec.meter_pk)
                if not check.ok:
                    kinds = ",".join(sorted({f.kind for f in check.failures}))
                    self._abort(Step.SPOT_CHECK, ROLE_FIRM, fid, f"ledger check failed: {kinds}")
                    return
        self.state.next_step = 7

    def step7_sum_check(self):
        """Verifier checks the homomorphic aggregate against the sums."""
        self._require(Step.SUM_CHECK)
        if self.verifier_behavior.silent_at(7):
            self._abort(Step.SUM_CHECK, ROLE_VERIFIER, VERIFIER_ID, "went silent")
            return
        pp = self.config.pp
        total = pp.group.identity
        for fid in self.config.roster:
            if fid in self.state.commitments:
                total = total + self.state.commitments[fid]
        m_pub, r_pub = self.state.published_m, self.state.published_r
        # The opening check works modulo q, so the published integer must
        # also sit in the only range n in-range reports can sum to.
        max_total = self.config.n * (MAX_EMISSIONS_KG - 1)
        if not isinstance(m_pub, int) or m_pub < 0 or m_pub > max_total:
            self._abort(Step.SUM_CHECK, ROLE_COUNTRY, COUNTRY_ID,
                        "published total outside the admissible range")
            return
        if not verify_opening(pp, total, pp.group.scalar(m_pub), r_pub):
            self._abort(Step.SUM_CHECK, ROLE_COUNTRY, COUNTRY_ID,
                        "aggregate commitment does not open to the published sums")
            return
        self.state.completed = True
        self._emit(Step.SUM_CHECK, "verdict", VERIFIER_ID,
                   {"status": "completed", "accepted_m": m_pub})

    _STEP_METHODS = (
        "step1_setup",
        "step2_reports",
        "step3_examine",
        "step4_publish",
        "step5_reveal",
        "step6_spot_checks",
        "step7_sum_check",
    )

    def run(self) -> Verdict:
        for name in self._STEP_METHODS:
            getattr(self, name)()
            if self.state.abort is not None:
                a = self.state.abort
                return Verdict(
                    status="aborted", accepted_m=None, abort=a,
                    v_list=self.state.v_list,
                )
        return Verdict(
            status="completed",
            accepted_m=self.state.published_m,
            abort=None,
            v_list=self.state.v_list,
        )


class _ExamineFailed(Exception):
    def __init__(self, firm_id: str, reason: str):
        super().__init__(reason)
        self.firm_id = firm_id
        self.reason = reason


def true_total(config: SessionConfig) -> int:
    """Ground-truth sum the session should accept when everyone is honest."""
    total = 0
    for f in config.firms:
        if config.data_mode == "abstract":
            total += f.true_m
        else:
            total += aggregate(f.ledger, f.meter_pk)
    return total
