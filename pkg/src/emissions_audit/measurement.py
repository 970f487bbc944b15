"""Signed meter readings, tamper-evident ledgers, and committed reports.

A certified meter signs one reading per hour with Ed25519.  The firm keeps
readings in an append-only ledger whose entries are linked by a SHA-256
hash chain, so any after-the-fact edit breaks every later link.  At the end
of a reporting cycle the firm aggregates the ledger into a total and wraps
it in a commitment; an auditor handed the ledger, the blinding factor, and
the commitment can recheck every step.

Canonical signing bytes for a reading are::

    b"meter-reading/v1\\n" + firm_id + b"\\n" + hour_iso + b"\\n" + str(e)

with ``hour_iso`` like ``2024-06-01T13:00:00Z``.  The chain head over
entries 0..i is ``sha256(head_{i-1} || signing_bytes_i || signature_i)``
with an empty prefix for the first entry.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from datetime import datetime, timezone

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .commitment import MAX_EMISSIONS_KG, PublicParams, check_range, commit, verify_opening
from .groups import Scalar

SIGNING_CONTEXT = b"meter-reading/v1"

# A single hourly reading must fit in 32 bits; totals go up to 2**40.
MAX_READING_KG = 1 << 32


class BadSignature(ValueError):
    """Reading signature does not verify under the meter's public key."""


class ChainBroken(ValueError):
    """Stored chain head does not match the recomputed one."""


class NonMonotonicHour(ValueError):
    """Reading hour precedes the ledger's latest hour."""


class DuplicateHour(ValueError):
    """Ledger already holds a reading for this hour."""


class LedgerFormatError(ValueError):
    """Ledger file line is not a well-formed entry."""


def parse_hour(text: str) -> datetime:
    """Parse an hour-aligned UTC timestamp; 'Z' and '+00:00' both accepted."""
    raw = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise ValueError(f"bad timestamp {text!r}") from None
    return normalize_hour(dt)


def normalize_hour(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        raise ValueError("timestamp must carry a timezone")
    dt = dt.astimezone(timezone.utc)
    if dt.minute or dt.second or dt.microsecond:
        raise ValueError(f"timestamp {dt.isoformat()} is not hour-aligned")
    return dt


def hour_iso(dt: datetime) -> str:
    return dt.strftime("%Y-%m-%dT%H:00:00Z")


def signing_bytes(firm_id: str, hour: datetime, e: int) -> bytes:
    return b"\n".join(
        [SIGNING_CONTEXT, firm_id.encode(), hour_iso(hour).encode(), str(e).encode()]
    )


@dataclass(frozen=True)
class MeterReading:
    """One signed hourly reading as emitted by the meter."""

    firm_id: str
    hour: datetime
    e: int
    signature: bytes

    def __post_init__(self):
        if not self.firm_id or "\n" in self.firm_id:
            raise ValueError(f"bad firm id {self.firm_id!r}")
        if not isinstance(self.e, int) or self.e < 0 or self.e >= MAX_READING_KG:
            raise ValueError(f"reading {self.e!r} outside [0, 2**32)")
        normalize_hour(self.hour)

    def signing_bytes(self) -> bytes:
        return signing_bytes(self.firm_id, self.hour, self.e)


@dataclass(frozen=True)
class MeterKeypair:
    private: Ed25519PrivateKey
    public_bytes: bytes

    @classmethod
    def generate(cls, rng: random.Random) -> "MeterKeypair":
        private = Ed25519PrivateKey.from_private_bytes(rng.randbytes(32))
        return cls(private=private, public_bytes=raw_public_bytes(private.public_key()))

    @classmethod
    def from_seed(cls, seed: bytes) -> "MeterKeypair":
        private = Ed25519PrivateKey.from_private_bytes(seed)
        return cls(private=private, public_bytes=raw_public_bytes(private.public_key()))

    def seed_bytes(self) -> bytes:
        from cryptography.hazmat.primitives import serialization

        return self.private.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        )

    def sign_reading(self, firm_id: str, hour: datetime, e: int) -> MeterReading:
        hour = normalize_hour(hour)
        sig = self.private.sign(signing_bytes(firm_id, hour, e))
        return MeterReading(firm_id=firm_id, hour=hour, e=e, signature=sig)


def raw_public_bytes(public: Ed25519PublicKey) -> bytes:
    from cryptography.hazmat.primitives import serialization

    return public.public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )


def verify_reading(reading: MeterReading, meter_pk: bytes) -> None:
    key = Ed25519PublicKey.from_public_bytes(meter_pk)
    try:
        key.verify(reading.signature, reading.signing_bytes())
    except InvalidSignature:
        raise BadSignature(
            f"signature check failed for {reading.firm_id} at {hour_iso(reading.hour)}"
        ) from None


@dataclass(frozen=True)
class LedgerEntry:
    reading: MeterReading
    chain: bytes  # SHA-256 head over all entries up to and including this one


def chain_head(prev: bytes, reading: MeterReading) -> bytes:
    return hashlib.sha256(prev + reading.signing_bytes() + reading.signature).digest()


@dataclass
class FirmLedger:
    """Append-only reading log.  Entries built via append_reading always
    chain correctly; ledgers loaded from disk are claims to be verified."""

    firm_id: str
    entries: list[LedgerEntry]

    @classmethod
    def empty(cls, firm_id: str) -> "FirmLedger":
        return cls(firm_id=firm_id, entries=[])

    @property
    def head(self) -> bytes:
        return self.entries[-1].chain if self.entries else b""


def append_reading(ledger: FirmLedger, reading: MeterReading, meter_pk: bytes) -> LedgerEntry:
    if reading.firm_id != ledger.firm_id:
        raise ValueError(
            f"reading for {reading.firm_id!r} appended to ledger of {ledger.firm_id!r}"
        )
    verify_reading(reading, meter_pk)
    if ledger.entries:
        last = ledger.entries[-1].reading.hour
        if reading.hour == last:
            raise DuplicateHour(f"already have a reading for {hour_iso(last)}")
        if reading.hour < last:
            raise NonMonotonicHour(
                f"{hour_iso(reading.hour)} precedes latest {hour_iso(last)}"
            )
    entry = LedgerEntry(reading=reading, chain=chain_head(ledger.head, reading))
    ledger.entries.append(entry)
    return entry


def verify_ledger(ledger: FirmLedger, meter_pk: bytes) -> None:
    """Replay the whole ledger; raise on the first broken invariant."""
    prev = b""
    prev_hour = None
    for entry in ledger.entries:
        reading = entry.reading
        if reading.firm_id != ledger.firm_id:
            raise LedgerFormatError("entry firm id does not match ledger")
        verify_reading(reading, meter_pk)
        if prev_hour is not None:
            if reading.hour == prev_hour:
                raise DuplicateHour(f"duplicate hour {hour_iso(reading.hour)}")
            if reading.hour < prev_hour:
                raise NonMonotonicHour(f"hour {hour_iso(reading.hour)} out of order")
        if chain_head(prev, reading) != entry.chain:
            raise ChainBroken(f"chain mismatch at {hour_iso(reading.hour)}")
        prev = entry.chain
        prev_hour = reading.hour


def aggregate(ledger: FirmLedger, meter_pk: bytes) -> int:
    """Verified sum of all readings; the total must respect the range bound."""
    verify_ledger(ledger, meter_pk)
    total = sum(entry.reading.e for entry in ledger.entries)
    check_range(total)
    return total


@dataclass(frozen=True)
class FirmReport:
    """What a firm submits for one cycle: a commitment plus its opening."""

    firm_id: str
    cycle_id: str
    total_kg: int
    r: Scalar
    commitment: object

    def m_scalar(self, pp: PublicParams) -> Scalar:
        return pp.group.scalar(self.total_kg)


def build_report(
    pp: PublicParams,
    ledger: FirmLedger,
    meter_pk: bytes,
    cycle_id: str,
    rng: random.Random,
) -> FirmReport:
    total = aggregate(ledger, meter_pk)
    r = pp.group.random_scalar(rng)
    c = commit(pp, pp.group.scalar(total), r)
    return FirmReport(
        firm_id=ledger.firm_id, cycle_id=cycle_id, total_kg=total, r=r, commitment=c
    )


@dataclass(frozen=True)
class CheckFailure:
    kind: str  # "identity" | "signature" | "order" | "chain" | "range" | "aggregation" | "opening"
    detail: str


@dataclass(frozen=True)
class CheckReport:
    failures: tuple[CheckFailure, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def spot_check(
    pp: PublicParams, report: FirmReport, ledger: FirmLedger, meter_pk: bytes
) -> CheckReport:
    """Auditor-side recheck of one firm: enumerate every failure, never raise.

    Walks the ledger (signatures, hour ordering, chain links, per-reading
    ranges), re-derives the total, and checks it against the reported
    commitment through the revealed blinding factor.
    """
    failures: list[CheckFailure] = []
    if ledger.firm_id != report.firm_id:
        failures.append(
            CheckFailure("identity", f"ledger belongs to {ledger.firm_id!r}")
        )
    prev = b""
    prev_hour = None
    total = 0
    for i, entry in enumerate(ledger.entries):
        reading = entry.reading
        label = f"entry {i} ({hour_iso(reading.hour)})"
        try:
            verify_reading(reading, meter_pk)
        except BadSignature:
            failures.append(CheckFailure("signature", label))
        if prev_hour is not None and reading.hour <= prev_hour:
            failures.append(CheckFailure("order", label))
        if chain_head(prev, reading) != entry.chain:
            failures.append(CheckFailure("chain", label))
        total += reading.e
        prev = entry.chain
        prev_hour = reading.hour
    if total >= MAX_EMISSIONS_KG:
        failures.append(CheckFailure("range", f"ledger total {total}"))
    if report.total_kg < 0 or report.total_kg >= MAX_EMISSIONS_KG:
        failures.append(CheckFailure("range", f"reported total {report.total_kg}"))
    if total != report.total_kg:
        failures.append(
            CheckFailure("aggregation", f"ledger sums to {total}, report says {report.total_kg}")
        )
    if not verify_opening(pp, report.commitment, report.m_scalar(pp), report.r):
        failures.append(CheckFailure("opening", "commitment does not open to the report"))
    return CheckReport(failures=tuple(failures))


# ---------------------------------------------------------------------------
# Persistence: one JSON object per line, append-friendly.
# ---------------------------------------------------------------------------


def entry_to_dict(entry: LedgerEntry) -> dict:
    r = entry.reading
    return {
        "firm_id": r.firm_id,
        "hour": hour_iso(r.hour),
        "e": r.e,
        "sig": r.signature.hex(),
        "chain": entry.chain.hex(),
    }


def entry_from_dict(data: dict) -> LedgerEntry:
    try:
        reading = MeterReading(
            firm_id=data["firm_id"],
            hour=parse_hour(data["hour"]),
            e=data["e"],
            signature=bytes.fromhex(data["sig"]),
        )
        chain = bytes.fromhex(data["chain"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LedgerFormatError(f"bad ledger entry: {exc}") from None
    return LedgerEntry(reading=reading, chain=chain)


def write_ledger(ledger: FirmLedger, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in ledger.entries:
            fh.write(json.dumps(entry_to_dict(entry), sort_keys=True) + "\n")


def read_ledger(path) -> FirmLedger:
    """Load a ledger file without judging it; run verify_ledger/spot_check
    afterwards to decide whether to believe it."""
    entries: list[LedgerEntry] = []
    firm_id = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LedgerFormatError(f"line {line_no}: {exc}") from None
            entry = entry_from_dict(data)
            if firm_id is None:
                firm_id = entry.reading.firm_id
            entries.append(entry)
    if firm_id is None:
        raise LedgerFormatError("ledger file holds no entries")
    return FirmLedger(firm_id=firm_id, entries=entries)


def read_readings_csv(path) -> list[tuple[datetime, int]]:
    """Parse an ``hour,e`` CSV (header optional) into hour/value pairs."""
    import csv

    rows: list[tuple[datetime, int]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("hour", "timestamp"):
                continue
            if len(row) < 2:
                raise ValueError(f"bad csv row {row!r}")
            rows.append((parse_hour(row[0].strip()), int(row[1].strip())))
    return rows
