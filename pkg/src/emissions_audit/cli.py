"""Batch command-line front end.

Subcommands cover the full operator workflow: parameter setup, meter-data
ingestion, committed reporting, country-side aggregation, the public sum
check, the two-operator random pick (commit / reveal / settle exchanged as
files, so no shared process state is needed), bulk simulation, and
independent transcript auditing.

Conventions: every command is deterministic under ``--seed``; every output
file embeds a provenance block with the SHA-256 of each input file; exit
code 0 means success/accept, 1 means a protocol-level rejection or fault
(verdict JSON on stdout), 2 means an error (JSON with the error class on
stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import random
import sys

from . import __version__
from . import harness as hz
from . import measurement as ms
from . import pick as pk
from .audit import ConfigInvalid
from .commitment import (
    commit,
    params_from_dict,
    params_to_dict,
    setup,
    verify_opening,
)
from .groups import group_by_name

GROUP_ALIASES = {
    "toy": "toy",
    "toy_group": "toy",
    "mod607": "toy",
    "prod": "secp256k1",
    "production": "secp256k1",
    "production_curve": "secp256k1",
    "secp256k1": "secp256k1",
}
MODE_ALIASES = {
    "hash": "hash_derived",
    "hash_derived": "hash_derived",
    "trusted": "trusted",
}


def _file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _provenance(command: str, seed: int | None = None, **input_paths) -> dict:
    return {
        "command": command,
        "seed": seed,
        "inputs": {name: _file_digest(path) for name, path in sorted(input_paths.items())},
        "tool": f"emissions-audit {__version__}",
    }


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


def _load_pp(path: str):
    return params_from_dict(_read_json(path))


def _resolve_group(name: str):
    try:
        return group_by_name(GROUP_ALIASES[name])
    except KeyError:
        raise ConfigInvalid(f"unknown group {name!r}") from None


def _resolve_mode(name: str) -> str:
    try:
        return MODE_ALIASES[name]
    except KeyError:
        raise ConfigInvalid(f"unknown setup mode {name!r}") from None


# ---------------------------------------------------------------------------
# setup / ingest / report / aggregate / verify-sum
# ---------------------------------------------------------------------------


def cmd_setup(args) -> int:
    group = _resolve_group(args.group)
    mode = _resolve_mode(args.mode)
    if mode == "trusted" and args.seed is None:
        raise ConfigInvalid("trusted setup requires --seed")
    rng = random.Random(args.seed) if args.seed is not None else None
    pp = setup(group, mode, rng)
    envelope = params_to_dict(pp)
    envelope["provenance"] = _provenance("setup", seed=args.seed)
    _write_json(args.out, envelope)
    if args.trapdoor_out:
        if pp.trapdoor is None:
            raise ConfigInvalid("--trapdoor-out only applies to trusted mode")
        _write_json(args.trapdoor_out, {
            "format": "trapdoor/v1",
            "h_scalar": pp.group.encode_scalar(pp.trapdoor).hex(),
        })
    _emit({"ok": True, "group": pp.group.descriptor.name, "mode": mode, "out": args.out})
    return 0


def _load_meter_key(path: str, seed: int | None) -> ms.MeterKeypair:
    import os

    if os.path.exists(path):
        data = _read_json(path)
        if data.get("format") != "meter-key/v1":
            raise ConfigInvalid(f"{path} is not a meter key file")
        return ms.MeterKeypair.from_seed(bytes.fromhex(data["sk"]))
    if seed is None:
        raise ConfigInvalid(f"meter key {path} not found; pass --seed to generate one")
    kp = ms.MeterKeypair.generate(random.Random(hz.derive_seed(seed, "meter-key")))
    _write_json(path, {
        "format": "meter-key/v1",
        "sk": kp.seed_bytes().hex(),
        "pk": kp.public_bytes.hex(),
    })
    return kp


def cmd_ingest(args) -> int:
    import os

    kp = _load_meter_key(args.meter_key, args.seed)
    if os.path.exists(args.ledger):
        ledger = ms.read_ledger(args.ledger)
        if ledger.firm_id != args.firm_id:
            raise ConfigInvalid(
                f"ledger belongs to {ledger.firm_id!r}, not {args.firm_id!r}"
            )
        ms.verify_ledger(ledger, kp.public_bytes)
    else:
        ledger = ms.FirmLedger.empty(args.firm_id)
    added = 0
    for hour, e in ms.read_readings_csv(args.readings):
        reading = kp.sign_reading(args.firm_id, hour, e)
        ms.append_reading(ledger, reading, kp.public_bytes)
        added += 1
    ms.write_ledger(ledger, args.ledger)
    _emit({
        "ok": True,
        "firm_id": args.firm_id,
        "added": added,
        "entries": len(ledger.entries),
        "head": ledger.head.hex(),
        "meter_pk": kp.public_bytes.hex(),
    })
    return 0


def cmd_report(args) -> int:
    pp = _load_pp(args.pp)
    kp = _load_meter_key(args.meter_key, None)
    ledger = ms.read_ledger(args.ledger)
    rng = random.Random(hz.derive_seed(args.seed, "report", ledger.firm_id, args.cycle))
    report = ms.build_report(pp, ledger, kp.public_bytes, args.cycle, rng)
    prov = _provenance("report", seed=args.seed, pp=args.pp, ledger=args.ledger)
    _write_json(args.out, {
        "format": "report/v1",
        "firm_id": report.firm_id,
        "cycle_id": report.cycle_id,
        "c": pp.group.encode_point(report.commitment).hex(),
        "provenance": prov,
    })
    _write_json(args.opening_out, {
        "format": "opening/v1",
        "firm_id": report.firm_id,
        "cycle_id": report.cycle_id,
        "m": report.total_kg,
        "r": pp.group.encode_scalar(report.r).hex(),
    })
    _emit({"ok": True, "firm_id": report.firm_id, "out": args.out})
    return 0


class SubmissionInvalid(ValueError):
    """A firm's submitted file fails to decode; attributable to that firm."""

    def __init__(self, firm_id: str, reason: str):
        super().__init__(f"{firm_id}: {reason}")
        self.firm_id = firm_id
        self.reason = reason


def _load_report(pp, path: str) -> dict:
    data = _read_json(path)
    if data.get("format") != "report/v1":
        raise ConfigInvalid(f"{path} is not a report file")
    try:
        data["c_point"] = pp.group.decode_point(bytes.fromhex(data["c"]))
    except ValueError as exc:
        raise SubmissionInvalid(data.get("firm_id", "?"),
                                f"malformed commitment: {exc}") from exc
    return data


def _load_opening(pp, path: str) -> dict:
    data = _read_json(path)
    if data.get("format") != "opening/v1":
        raise ConfigInvalid(f"{path} is not an opening file")
    try:
        data["r_scalar"] = pp.group.decode_scalar(bytes.fromhex(data["r"]))
    except ValueError as exc:
        raise SubmissionInvalid(data.get("firm_id", "?"),
                                f"malformed blinding: {exc}") from exc
    return data


def cmd_aggregate(args) -> int:
    from .commitment import MAX_EMISSIONS_KG

    pp = _load_pp(args.pp)
    try:
        reports = [_load_report(pp, p) for p in args.report]
        openings = {o["firm_id"]: o for p in args.opening for o in [_load_opening(pp, p)]}
    except SubmissionInvalid as exc:
        _emit({"verdict": "REJECT", "step": 3, "culprit": exc.firm_id,
               "reason": exc.reason})
        return 1
    ids = [r["firm_id"] for r in reports]
    if len(set(ids)) != len(ids):
        raise ConfigInvalid("duplicate firm ids among reports")
    if set(openings) != set(ids):
        raise ConfigInvalid("openings do not match reports one-to-one")
    m_total = 0
    r_total = pp.group.scalar(0)
    for rep in reports:  # the examination step, firm by firm
        op = openings[rep["firm_id"]]
        m = op["m"]
        if not isinstance(m, int) or m < 0 or m >= MAX_EMISSIONS_KG:
            _emit({"verdict": "REJECT", "step": 3, "culprit": rep["firm_id"],
                   "reason": "reported total out of range"})
            return 1
        if not verify_opening(pp, rep["c_point"], pp.group.scalar(m), op["r_scalar"]):
            _emit({"verdict": "REJECT", "step": 3, "culprit": rep["firm_id"],
                   "reason": "opening does not match the commitment"})
            return 1
        m_total += m
        r_total = r_total + op["r_scalar"]
    cycle = reports[0]["cycle_id"] if reports else "cycle-0"
    prov_inputs = {f"report_{r['firm_id']}": p for r, p in zip(reports, args.report)}
    _write_json(args.out, {
        "format": "sums/v1",
        "cycle_id": cycle,
        "n": len(reports),
        "m": m_total,
        "r": pp.group.encode_scalar(r_total).hex(),
        "provenance": _provenance("aggregate", pp=args.pp, **prov_inputs),
    })
    _emit({"verdict": "ACCEPT", "m": m_total, "n": len(reports), "out": args.out})
    return 0


def cmd_verify_sum(args) -> int:
    from .commitment import MAX_EMISSIONS_KG

    pp = _load_pp(args.pp)
    try:
        reports = [_load_report(pp, p) for p in args.report]
    except SubmissionInvalid as exc:
        _emit({"verdict": "REJECT", "step": 7, "culprit": exc.firm_id,
               "reason": exc.reason})
        return 1
    sums = _read_json(args.sums)
    if sums.get("format") != "sums/v1":
        raise ConfigInvalid(f"{args.sums} is not a sums file")
    m = sums["m"]
    r = pp.group.decode_scalar(bytes.fromhex(sums["r"]))
    total = pp.group.identity
    for rep in reports:
        total = total + rep["c_point"]
    max_total = len(reports) * (MAX_EMISSIONS_KG - 1)
    if not isinstance(m, int) or m < 0 or m > max_total:
        _emit({"verdict": "REJECT", "step": 7, "culprit": "country",
               "reason": "published total outside the admissible range"})
        return 1
    if not verify_opening(pp, total, pp.group.scalar(m), r):
        _emit({"verdict": "REJECT", "step": 7, "culprit": "country",
               "reason": "aggregate commitment does not open to the published sums"})
        return 1
    _emit({"verdict": "ACCEPT", "m": m, "n": len(reports)})
    return 0


# ---------------------------------------------------------------------------
# Two-operator pick over files.
# ---------------------------------------------------------------------------


def cmd_pick_commit(args) -> int:
    if args.party not in pk.PARTIES:
        raise ConfigInvalid(f"party must be one of {pk.PARTIES}")
    pp = _load_pp(args.pp)
    rng = random.Random(hz.derive_seed(args.seed, "pick", args.party, args.round))
    m, r, c = pk.round_commit(args.l, pp, rng)
    _write_json(args.state, {
        "format": "pick-state/v1",
        "party": args.party,
        "round": args.round,
        "l": args.l,
        "m": m,
        "r": pp.group.encode_scalar(r).hex(),
        "pp_digest": _file_digest(args.pp),
        "peer_commitment": None,
    })
    _write_json(args.out, {
        "format": "pick-commit/v1",
        "party": args.party,
        "round": args.round,
        "l": args.l,
        "c": pp.group.encode_point(c).hex(),
    })
    _emit({"ok": True, "party": args.party, "l": args.l, "out": args.out})
    return 0


def cmd_pick_reveal(args) -> int:
    state = _read_json(args.state)
    if state.get("format") != "pick-state/v1":
        raise ConfigInvalid(f"{args.state} is not a pick state file")
    peer = _read_json(args.peer_commit)
    if peer.get("format") != "pick-commit/v1":
        raise ConfigInvalid(f"{args.peer_commit} is not a pick commit file")
    if peer["party"] != pk.other(state["party"]):
        raise ConfigInvalid("peer commitment is not from the other party")
    if peer["l"] != state["l"] or peer["round"] != state["round"]:
        raise ConfigInvalid("peer commitment disagrees on round or list length")
    # Reveal only exists once the peer is committed; storing the peer's
    # commitment now pins what the settle step will verify against.
    state["peer_commitment"] = peer["c"]
    _write_json(args.state, state)
    _write_json(args.out, {
        "format": "pick-reveal/v1",
        "party": state["party"],
        "round": state["round"],
        "l": state["l"],
        "m": state["m"],
        "r": state["r"],
    })
    _emit({"ok": True, "party": state["party"], "out": args.out})
    return 0


def cmd_pick_settle(args) -> int:
    pp = _load_pp(args.pp)
    state = _read_json(args.state)
    if state.get("format") != "pick-state/v1":
        raise ConfigInvalid(f"{args.state} is not a pick state file")
    if state.get("peer_commitment") is None:
        raise ConfigInvalid("no peer commitment on record; run pick-reveal first")
    if state.get("pp_digest") != _file_digest(args.pp):
        raise ConfigInvalid("public parameters differ from the commit step")
    reveal = _read_json(args.peer_reveal)
    if reveal.get("format") != "pick-reveal/v1":
        raise ConfigInvalid(f"{args.peer_reveal} is not a pick reveal file")
    peer_party = pk.other(state["party"])
    if reveal["party"] != peer_party:
        raise ConfigInvalid("peer reveal is not from the other party")
    if reveal["l"] != state["l"] or reveal["round"] != state["round"]:
        raise ConfigInvalid("peer reveal disagrees on round or list length")

    l = state["l"]
    rnd = pk.PickRound(round_index=state["round"], l=l, candidates=())
    pk.record_commitment(rnd, state["party"],
                         commit(pp, pp.group.scalar(state["m"]),
                                pp.group.decode_scalar(bytes.fromhex(state["r"]))))
    pk.record_commitment(rnd, peer_party,
                         pp.group.decode_point(bytes.fromhex(state["peer_commitment"])))
    phase = pk.round_reveal_and_check(
        rnd, peer_party, reveal["m"],
        pp.group.decode_scalar(bytes.fromhex(reveal["r"])), pp,
    )
    if phase == pk.FAULTED:
        _emit({"verdict": "FAULT", "party": rnd.fault.party, "reason": rnd.fault.reason})
        return 1
    phase = pk.round_reveal_and_check(
        rnd, state["party"], state["m"],
        pp.group.decode_scalar(bytes.fromhex(state["r"])), pp,
    )
    if phase != pk.SETTLED:
        _emit({"verdict": "FAULT", "party": state["party"],
               "reason": rnd.fault.reason if rnd.fault else "own reveal failed"})
        return 1
    out = {"verdict": "SETTLED", "index": rnd.index, "l": l, "round": state["round"]}
    if args.roster:
        roster = [x for x in args.roster.split(",") if x]
        if len(roster) != l:
            raise ConfigInvalid(f"roster has {len(roster)} names but l={l}")
        out["picked"] = roster[rnd.index]
    _emit(out)
    return 0


# ---------------------------------------------------------------------------
# simulate / transcript-audit
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    scenario = hz.load_scenario(args.scenario)
    trials = args.trials if args.trials is not None else scenario.trials
    seed = args.seed if args.seed is not None else scenario.seed
    if args.transcript:
        first = hz.run_session(
            scenario.config, scenario.adversary,
            seed=hz.derive_seed(seed, "trial", 0), record=True,
        )
        with open(args.transcript, "wb") as fh:
            fh.write(first.transcript.to_jsonl())
    stats = hz.run_trials(
        scenario.config, scenario.adversary, trials=trials, seed=seed,
        structural_checks=not args.no_checks,
    )
    table = {"scenario": scenario.name, **stats.as_dict()}
    n, k = scenario.config.n, scenario.config.k
    from math import comb

    if 0 < k <= n and 2 <= comb(n, k) <= 4096 and stats.subset_counts:
        _, p = hz.subset_chi_square(stats.subset_counts, scenario.config.roster, k)
        table["chi_square_p"] = p
    else:
        table["chi_square_p"] = None
    table["seed"] = seed
    if args.out:
        body = dict(table)
        if args.scenario not in hz.BUILTIN_SCENARIOS:
            body["provenance"] = _provenance("simulate", seed=seed, scenario=args.scenario)
        else:
            body["provenance"] = _provenance("simulate", seed=seed)
        _write_json(args.out, body)
    _emit(table)
    return 0


def cmd_transcript_audit(args) -> int:
    with open(args.transcript, "rb") as fh:
        transcript = hz.parse_transcript(fh.read())
    report = hz.audit_transcript(transcript)
    _emit({
        "ok": report["ok"],
        "violations": report["violations"],
        "recorded": report["recorded"],
        "replayed": report["replayed"],
        "digest": transcript.digest(),
    })
    return 0 if report["ok"] else 1


# ---------------------------------------------------------------------------
# Parser.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="emissions-audit",
        description="Committed emissions reporting, verifiable aggregation, "
                    "randomized audit selection, and protocol simulation.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("setup", help="generate commitment public parameters")
    sp.add_argument("--group", required=True, help="toy | secp256k1 (aliases: prod)")
    sp.add_argument("--mode", default="hash", help="hash (derived H) | trusted")
    sp.add_argument("--seed", type=int, default=None, help="required for trusted mode")
    sp.add_argument("--out", required=True, help="output params file")
    sp.add_argument("--trapdoor-out", default=None,
                    help="write the trusted-setup trapdoor here (testing only)")
    sp.set_defaults(func=cmd_setup)

    sp = sub.add_parser("ingest", help="sign readings into a hash-chained ledger")
    sp.add_argument("--firm-id", required=True)
    sp.add_argument("--readings", required=True, help="CSV of hour,value rows")
    sp.add_argument("--ledger", required=True, help="ledger file (extended if present)")
    sp.add_argument("--meter-key", required=True,
                    help="meter key file (generated under --seed if missing)")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("report", help="aggregate a ledger into a committed report")
    sp.add_argument("--pp", required=True)
    sp.add_argument("--ledger", required=True)
    sp.add_argument("--meter-key", required=True)
    sp.add_argument("--cycle", default="cycle-0")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True, help="public report file")
    sp.add_argument("--opening-out", required=True, help="private opening file")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("aggregate", help="examine openings and publish sums")
    sp.add_argument("--pp", required=True)
    sp.add_argument("--report", action="append", required=True)
    sp.add_argument("--opening", action="append", required=True)
    sp.add_argument("--out", required=True, help="sums file")
    sp.set_defaults(func=cmd_aggregate)

    sp = sub.add_parser("verify-sum", help="check commitments against published sums")
    sp.add_argument("--pp", required=True)
    sp.add_argument("--report", action="append", required=True)
    sp.add_argument("--sums", required=True)
    sp.set_defaults(func=cmd_verify_sum)

    sp = sub.add_parser("pick-commit", help="first pick phase: commit to a draw")
    sp.add_argument("--pp", required=True)
    sp.add_argument("--party", required=True, help="country | verifier")
    sp.add_argument("--l", type=int, required=True, help="remaining list length")
    sp.add_argument("--round", type=int, default=0)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--state", required=True, help="private state file (keep secret)")
    sp.add_argument("--out", required=True, help="commitment message for the peer")
    sp.set_defaults(func=cmd_pick_commit)

    sp = sub.add_parser("pick-reveal", help="second pick phase: open the commitment")
    sp.add_argument("--state", required=True)
    sp.add_argument("--peer-commit", required=True, help="peer's commitment message")
    sp.add_argument("--out", required=True, help="reveal message for the peer")
    sp.set_defaults(func=cmd_pick_reveal)

    sp = sub.add_parser("pick-settle", help="verify the peer's reveal and derive the index")
    sp.add_argument("--pp", required=True)
    sp.add_argument("--state", required=True)
    sp.add_argument("--peer-reveal", required=True)
    sp.add_argument("--roster", default=None,
                    help="comma-separated remaining firms, to name the pick")
    sp.set_defaults(func=cmd_pick_settle)

    sp = sub.add_parser("simulate", help="run seeded protocol trials")
    sp.add_argument("--scenario", required=True,
                    help=f"builtin ({', '.join(sorted(hz.BUILTIN_SCENARIOS))}) or JSON file")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None, help="stats file")
    sp.add_argument("--transcript", default=None, help="write the first trial's transcript")
    sp.add_argument("--no-checks", action="store_true",
                    help="skip per-trial structural checks (bulk statistics)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("transcript-audit", help="independently re-audit a transcript")
    sp.add_argument("--transcript", required=True)
    sp.set_defaults(func=cmd_transcript_audit)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
