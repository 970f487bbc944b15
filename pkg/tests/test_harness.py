"""Simulation harness: determinism, views, checkers, scenarios, replay."""

import json
import random

import pytest

from emissions_audit.audit import (
    ConfigInvalid,
    COUNTRY_ID,
    ENV_ID,
    FirmSpec,
    SessionConfig,
    VERIFIER_ID,
)
from emissions_audit.commitment import setup
from emissions_audit.groups import toy_group
from emissions_audit.harness import (
    AbortAt,
    AdversarySpec,
    BiasPick,
    CustomBehavior,
    HONEST_ADVERSARY,
    HonestButObserved,
    InconsistentReveal,
    MisreportSum,
    TamperReport,
    Transcript,
    TranscriptFormatError,
    TrialStats,
    UnknownParticipant,
    audit_transcript,
    BUILTIN_SCENARIOS,
    canonical_json,
    chi_square_uniform,
    corruption_view_violations,
    derive_seed,
    digest_of,
    leakage_violations,
    load_scenario,
    parse_transcript,
    replay_verdict,
    routing_violations,
    run_session,
    run_trials,
    scenario_from_dict,
)


@pytest.fixture(scope="module")
def pp():
    return setup(toy_group(), "hash_derived")


def _config(pp, true_ms, k=0, **kw):
    firms = tuple(FirmSpec(f"F{i + 1}", true_m=m) for i, m in enumerate(true_ms))
    return SessionConfig(pp=pp, firms=firms, k=k, **kw)


# ---------------------------------------------------------------------------
# Seed derivation and canonical hashing.
# ---------------------------------------------------------------------------


def test_derive_seed_is_stable_and_label_sensitive():
    a = derive_seed(7, "trial", 0)
    assert a == derive_seed(7, "trial", 0)
    assert a != derive_seed(7, "trial", 1)
    assert a != derive_seed(8, "trial", 0)
    assert derive_seed(7, "trial", 10) != derive_seed(7, "trial1", 0)


def test_canonical_json_is_key_order_invariant():
    assert canonical_json({"b": 1, "a": 2}) == canonical_json({"a": 2, "b": 1})
    assert digest_of({"x": [1, 2]}) == digest_of({"x": [1, 2]})


# ---------------------------------------------------------------------------
# Behavior spec validation.
# ---------------------------------------------------------------------------


def test_tamper_report_requires_exactly_one_mode():
    TamperReport(delta=5)
    TamperReport(absolute=5)
    with pytest.raises(ConfigInvalid):
        TamperReport()
    with pytest.raises(ConfigInvalid):
        TamperReport(delta=1, absolute=2)


def test_bias_pick_requires_canned_strategy():
    BiasPick(strategy="zero")
    with pytest.raises(ConfigInvalid):
        BiasPick(strategy="clever")


def test_abort_at_validates_step():
    AbortAt(step=4)
    with pytest.raises(ConfigInvalid):
        AbortAt(step=0)
    with pytest.raises(ConfigInvalid):
        AbortAt(step=8)


def test_adversary_spec_guards():
    with pytest.raises(ConfigInvalid):
        AdversarySpec(corrupted=frozenset({ENV_ID}))  # environment is off-limits
    with pytest.raises(ConfigInvalid):
        AdversarySpec(behaviors={"F1": TamperReport(delta=1)})  # not corrupted
    spec = AdversarySpec(corrupted=frozenset({"F1"}))
    assert isinstance(spec.behavior_of("F1"), HonestButObserved)


def test_wiring_rejects_role_mismatched_behaviors(pp):
    config = _config(pp, [1, 2], k=1)
    bad = [
        AdversarySpec(frozenset({"F1"}), {"F1": MisreportSum(dm=1)}),
        AdversarySpec(frozenset({"F1"}), {"F1": BiasPick(strategy="zero")}),
        AdversarySpec(frozenset({COUNTRY_ID}), {COUNTRY_ID: TamperReport(delta=1)}),
        AdversarySpec(frozenset({VERIFIER_ID}), {VERIFIER_ID: MisreportSum(dm=1)}),
        AdversarySpec(frozenset({"F9"}), {}),  # unknown participant
    ]
    for adversary in bad:
        with pytest.raises(ConfigInvalid):
            run_session(config, adversary, seed=0)


def test_custom_behavior_requires_opt_in(pp):
    from emissions_audit.audit import FirmBehavior

    custom = CustomBehavior(build=lambda pid: FirmBehavior())
    adversary = AdversarySpec(frozenset({"F1"}), {"F1": custom})
    config = _config(pp, [1], k=0)
    with pytest.raises(ConfigInvalid):
        run_session(config, adversary, seed=0)
    allowed = _config(pp, [1], k=0, allow_custom_behaviors=True)
    assert run_session(allowed, adversary, seed=0).verdict.completed


# ---------------------------------------------------------------------------
# Transcript determinism and views.
# ---------------------------------------------------------------------------


def test_transcripts_byte_identical_for_same_seed(pp):
    config = _config(pp, [10, 20, 30], k=2)
    a = run_session(config, seed=123).transcript.to_jsonl()
    b = run_session(config, seed=123).transcript.to_jsonl()
    assert a == b
    c = run_session(config, seed=124).transcript.to_jsonl()
    assert a != c


def test_view_filtering(pp):
    config = _config(pp, [10, 20], k=1)
    transcript = run_session(config, seed=1).transcript
    kinds_c = {e.kind for e in transcript.view_of(COUNTRY_ID)}
    kinds_v = {e.kind for e in transcript.view_of(VERIFIER_ID)}
    kinds_f1 = {e.kind for e in transcript.view_of("F1")}
    assert "report" in kinds_c and "report" not in kinds_v
    assert "commitment" in kinds_v  # broadcasts reach everyone
    for ev in transcript.view_of("F1"):
        if ev.kind == "assign_m":
            assert ev.payload["firm"] == "F1"
    assert "assign_m" in kinds_f1
    with pytest.raises(UnknownParticipant):
        transcript.view_of("F99")


def test_structural_checkers_clean_on_honest_run(pp):
    config = _config(pp, [10, 20, 30], k=2)
    transcript = run_session(config, seed=2).transcript
    assert routing_violations(transcript) == []
    assert leakage_violations(transcript) == []
    assert corruption_view_violations(transcript) == []


def test_checkers_clean_under_observed_corruption(pp):
    config = _config(pp, [10, 20, 30], k=1)
    adversary = AdversarySpec(corrupted=frozenset({"F2", VERIFIER_ID}))
    transcript = run_session(config, adversary, seed=3).transcript
    assert routing_violations(transcript) == []
    assert leakage_violations(transcript) == []
    assert corruption_view_violations(transcript) == []


def _clone_with_events(transcript, mutate):
    clone = Transcript(dict(transcript.header))
    for ev in transcript.events:
        kw = dict(step=ev.step, kind=ev.kind, sender=ev.sender,
                  channel=ev.channel, recipient=ev.recipient, payload=ev.payload)
        kw = mutate(kw) or kw
        clone.record(**kw)
    return clone


def test_routing_checker_flags_report_on_broadcast(pp):
    config = _config(pp, [10, 20], k=0)
    honest = run_session(config, seed=4).transcript

    def leak_report(kw):
        if kw["kind"] == "report" and kw["payload"]["firm"] == "F1":
            kw["channel"] = "broadcast"
            kw["recipient"] = None
        return kw

    bad = _clone_with_events(honest, leak_report)
    assert any("report" in v for v in routing_violations(bad))


def test_routing_checker_flags_misrouted_private_lane(pp):
    config = _config(pp, [10, 20], k=0)
    honest = run_session(config, seed=5).transcript

    def misroute(kw):
        if kw["kind"] == "report" and kw["payload"]["firm"] == "F1":
            kw["recipient"] = "F2"
        return kw

    bad = _clone_with_events(honest, misroute)
    assert any("routed to" in v for v in routing_violations(bad))


def test_leakage_checker_flags_opening_sent_to_peer_firm(pp):
    config = _config(pp, [10, 20], k=1)
    honest = run_session(config, seed=6).transcript
    bad = _clone_with_events(honest, lambda kw: kw)
    # Inject an env_truth for an unpicked firm addressed to the verifier.
    picked = set(next(e for e in honest.events if e.kind == "verification_list").payload["v"])
    unpicked = next(f for f in ("F1", "F2") if f not in picked)
    bad.record(step=5, kind="env_truth", sender=ENV_ID, channel="private",
               recipient=VERIFIER_ID, payload={"firm": unpicked, "m": 10})
    assert any("unpicked" in v for v in leakage_violations(bad))


def test_corruption_view_checker_flags_plaintext_to_corrupted_firm(pp):
    config = _config(pp, [10, 20], k=0)
    adversary = AdversarySpec(corrupted=frozenset({"F2"}))
    honest = run_session(config, adversary, seed=7).transcript
    bad = _clone_with_events(honest, lambda kw: kw)
    bad.record(step=5, kind="assign_m", sender=ENV_ID, channel="private",
               recipient="F2", payload={"firm": "F1", "m": 10})
    assert any("corrupted F2" in v for v in corruption_view_violations(bad))
    # The same injected event also violates routing (wrong recipient).
    assert any("routed to" in v for v in routing_violations(bad))


# ---------------------------------------------------------------------------
# Trial statistics.
# ---------------------------------------------------------------------------


def test_run_trials_honest_all_complete(pp):
    config = _config(pp, [10, 20, 30], k=1)
    stats = run_trials(config, trials=50, seed=8)
    assert stats.trials == 50 and stats.completions == 50
    assert stats.detection_rate == 0.0
    assert stats.accepted_correct == 50 and stats.accepted_wrong == 0


def test_run_trials_tamperer_histogram(pp):
    config = _config(pp, [10, 20, 30, 40], k=4)
    adversary = AdversarySpec(
        frozenset({"F2"}), {"F2": TamperReport(delta=7)}
    )
    stats = run_trials(config, adversary, trials=30, seed=9)
    assert stats.total_aborts == 30
    assert stats.aborts_by_step[6] == 30
    assert stats.abort_rate_at(6) == 1.0
    assert stats.aborts_by_culprit_role["firm"] == 30


def test_trial_stats_merge_and_invariants(pp):
    config = _config(pp, [10, 20], k=0)
    a = run_trials(config, trials=10, seed=10)
    b = run_trials(config, trials=15, seed=11)
    merged = a.merge(b)
    assert merged.trials == 25 and merged.completions == 25
    merged.check_invariants()
    table = merged.as_dict()
    for key in ("trials", "completions", "abort_step_histogram",
                "abort_culprit_roles", "detection_rate",
                "accepted_correct", "accepted_wrong"):
        assert key in table


def test_chi_square_helper_contrasts_uniform_and_skewed():
    _, p_uniform = chi_square_uniform([100, 101, 99, 100])
    _, p_skewed = chi_square_uniform([400, 0, 0, 0])
    assert p_uniform > 0.5 and p_skewed < 1e-6


# ---------------------------------------------------------------------------
# Scenario parsing.
# ---------------------------------------------------------------------------


def test_builtin_scenarios_all_load():
    for name in BUILTIN_SCENARIOS:
        scenario = load_scenario(name)
        assert scenario.trials >= 1
        assert scenario.config.n >= 1


def test_scenario_from_dict_generates_roster():
    scenario = scenario_from_dict({
        "group": "toy",
        "n": 4,
        "k": 2,
        "adversary": {
            "corrupted": ["F1"],
            "behaviors": {"F1": {"type": "tamper_report", "delta": 3}},
        },
        "trials": 7,
        "seed": 99,
    }, name="inline")
    assert scenario.config.n == 4 and scenario.config.k == 2
    assert scenario.trials == 7
    assert isinstance(scenario.adversary.behavior_of("F1"), TamperReport)


def test_scenario_rejects_unknown_behavior_kind():
    with pytest.raises(ConfigInvalid):
        scenario_from_dict({
            "group": "toy", "n": 2, "k": 1,
            "adversary": {"corrupted": ["F1"],
                          "behaviors": {"F1": {"type": "bribe_the_auditor"}}},
        }, name="bad")


def test_scenario_loads_from_json_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({
        "group": "toy", "n": 3, "k": 1, "trials": 5, "seed": 1,
        "adversary": {"corrupted": [], "behaviors": {}},
    }))
    scenario = load_scenario(str(path))
    assert scenario.config.n == 3 and scenario.trials == 5


def test_unknown_scenario_name_rejected():
    with pytest.raises(ConfigInvalid):
        load_scenario("definitely-not-a-scenario")


# ---------------------------------------------------------------------------
# Transcript parsing, replay, and independent audit.
# ---------------------------------------------------------------------------


def test_transcript_parse_roundtrip(pp):
    config = _config(pp, [10, 20, 30], k=2)
    original = run_session(config, seed=12).transcript
    parsed = parse_transcript(original.to_jsonl())
    assert parsed.to_jsonl() == original.to_jsonl()
    assert parsed.digest() == original.digest()


def test_parse_rejects_malformed_stream(pp):
    with pytest.raises(TranscriptFormatError):
        parse_transcript(b"not json\n")
    config = _config(pp, [10], k=0)
    blob = run_session(config, seed=13).transcript.to_jsonl()
    no_header = b"\n".join(blob.splitlines()[1:])
    with pytest.raises(TranscriptFormatError):
        parse_transcript(no_header)


@pytest.mark.parametrize(
    "adversary,expect_step",
    [
        (HONEST_ADVERSARY, None),
        (AdversarySpec(frozenset({"F1"}), {"F1": TamperReport(delta=5)}), 6),
        (AdversarySpec(frozenset({COUNTRY_ID}), {COUNTRY_ID: MisreportSum(dm=1)}), 7),
        (AdversarySpec(frozenset({"F2"}), {"F2": InconsistentReveal()}), 6),
        (AdversarySpec(frozenset({"F2"}), {"F2": AbortAt(step=2)}), 3),
    ],
    ids=["honest", "tamper", "misreport-sum", "bad-reveal", "silent-firm"],
)
def test_replay_agrees_with_recorded_verdict(pp, adversary, expect_step):
    config = _config(pp, [10, 20, 30], k=3)
    result = run_session(config, adversary, seed=14)
    transcript = result.transcript
    if expect_step is None:
        assert result.verdict.completed
    else:
        assert result.verdict.abort.step == expect_step
    report = audit_transcript(transcript)
    assert report["ok"], report["violations"]
    replayed = replay_verdict(transcript)
    assert replayed["status"] == ("completed" if expect_step is None else "aborted")


def test_replay_detects_tampered_event_payload(pp):
    config = _config(pp, [10, 20], k=1)
    blob = run_session(config, seed=15).transcript.to_jsonl()
    # Flip a committed sum inside the transcript body.
    tampered = blob.replace(b'"m": 30', b'"m": 31')
    if tampered == blob:
        tampered = blob.replace(b'"m":30', b'"m":31')
    assert tampered != blob
    report = audit_transcript(parse_transcript(tampered))
    assert not report["ok"]


def test_replay_detects_forged_verdict(pp):
    config = _config(pp, [10, 20], k=0)
    adversary = AdversarySpec(frozenset({COUNTRY_ID}), {COUNTRY_ID: MisreportSum(dm=1)})
    transcript = run_session(config, adversary, seed=16).transcript
    # Forge the verdict line to claim completion; events still show the lie.
    lines = transcript.to_jsonl().splitlines()
    forged_line = json.dumps({
        "verdict": {"status": "completed", "accepted_m": 30,
                    "abort": None, "v_list": []},
    }).encode()
    forged = b"\n".join(lines[:-1] + [forged_line]) + b"\n"
    report = audit_transcript(parse_transcript(forged))
    assert not report["ok"]
    assert report["violations"]


def test_pick_fault_replays_as_behavioral_abort(pp):
    from emissions_audit.pick import COUNTRY as PICK_COUNTRY

    config = _config(pp, [10, 20, 30], k=2, pick_mode="joint",
                     pick_fault_policy="abort")
    adversary = AdversarySpec(
        frozenset({COUNTRY_ID}), {COUNTRY_ID: InconsistentReveal()}
    )
    result = run_session(config, adversary, seed=17)
    assert result.verdict.abort is not None and result.verdict.abort.step == 5
    report = audit_transcript(result.transcript)
    assert report["ok"], report["violations"]
