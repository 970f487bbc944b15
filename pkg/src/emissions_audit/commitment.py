"""Pedersen commitments over the group backends.

A commitment to message scalar m with blinding scalar r is the group point
``m*G + r*H``.  It is unconditionally hiding (r uniform makes the point
uniform), computationally binding (opening one commitment two ways yields
the discrete log of H), and additively homomorphic (sum of commitments
commits to the sum of openings), which is what the aggregation check in the
audit protocol relies on.

Two setup modes:

* ``hash_derived`` -- H is derived from a fixed domain-separation string by
  try-and-increment, so nobody knows its discrete log.  Production default.
* ``trusted`` -- H = h*G with h sampled and retained.  The trapdoor h lets
  tests forge collisions on demand; it is never serialized.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from .groups import Group, GroupError, MalformedPoint, NotInSubgroup, Scalar, group_by_name

# Domain-separation label for the hash-derived second base.
H_DOMAIN = b"emissions-audit-kit/H/v1"

# Plaintext emissions totals must sit in [0, 2**40) kg; the bound is far
# below both group orders, so integer sums and scalar sums agree.
MAX_EMISSIONS_KG = 1 << 40


class RangeExceeded(ValueError):
    """Plaintext value outside the protocol's admissible range."""


class SetupError(ValueError):
    """Public parameters could not be generated or parsed."""


class NotACollision(ValueError):
    """The two openings do not actually collide."""


class DegenerateCollision(ValueError):
    """Colliding openings share the blinding factor; no trapdoor falls out."""


@dataclass
class PublicParams:
    """Commitment bases.  ``trapdoor`` is only set by trusted local setup."""

    group: Group
    g: object
    h: object
    mode: str
    trapdoor: Scalar | None = field(default=None, repr=False, compare=False)

    @property
    def q(self) -> int:
        return self.group.q


def check_range(m: int, bound: int = MAX_EMISSIONS_KG) -> None:
    if not isinstance(m, int):
        raise RangeExceeded(f"expected an integer, got {type(m).__name__}")
    if m < 0 or m >= bound:
        raise RangeExceeded(f"value {m} outside [0, {bound})")


def hash_to_point(group: Group, label: bytes):
    """Derive a point nobody knows the discrete log of, deterministically.

    Try-and-increment: hash label||counter, interpret the digest as an
    encoded point, and keep counting until it decodes into the prime-order
    subgroup and is not the identity.
    """
    width = group.descriptor.point_bytes
    for counter in range(1 << 32):
        digest = hashlib.sha256(label + counter.to_bytes(8, "big")).digest()
        if width == 33:
            candidate = b"\x02" + digest  # even-y candidate with hashed x
        else:
            candidate = digest[:width]
        try:
            point = group.decode_point(candidate)
        except (MalformedPoint, NotInSubgroup):
            continue
        if point.is_identity():
            continue
        return point
    raise SetupError("try-and-increment failed to find a point")


def setup(
    group: Group,
    mode: str = "hash_derived",
    rng: random.Random | None = None,
    register_bases: bool = True,
) -> PublicParams:
    """Generate public parameters (G, H) for the given backend.

    ``register_bases=False`` skips the fixed-base acceleration tables;
    useful for ephemeral per-session bases that see only a few mults.
    """
    g = group.generator
    if mode == "hash_derived":
        h = hash_to_point(group, H_DOMAIN)
        trapdoor = None
    elif mode == "trusted":
        if rng is None:
            raise SetupError("trusted setup requires an rng for the trapdoor")
        td = group.random_scalar(rng)
        while td.value == 0:
            td = group.random_scalar(rng)
        h = group.mul(td, g)
        trapdoor = td
    else:
        raise SetupError(f"unknown setup mode {mode!r}")
    if register_bases:
        group.register_fixed_base(g)
        group.register_fixed_base(h)
    return PublicParams(group=group, g=g, h=h, mode=mode, trapdoor=trapdoor)


def commit(pp: PublicParams, m: Scalar, r: Scalar):
    """Commitment point m*G + r*H."""
    return pp.group.mul(m, pp.g) + pp.group.mul(r, pp.h)


def verify_opening(pp: PublicParams, c, m: Scalar, r: Scalar) -> bool:
    return commit(pp, m, r) == c


def random_blinding(pp: PublicParams, rng: random.Random) -> Scalar:
    return pp.group.random_scalar(rng)


def equivocate(pp: PublicParams, m: Scalar, r: Scalar, new_m: Scalar) -> Scalar:
    """Trapdoor-holder's forgery: blinding that opens commit(m, r) as new_m.

    Solves m + r*h = new_m + r'*h for r'.  Only possible with the trusted
    setup trapdoor; exists so tests can manufacture binding violations.
    """
    if pp.trapdoor is None:
        raise SetupError("equivocation requires the trusted-setup trapdoor")
    return r + (m - new_m) * pp.trapdoor.inverse()


def extract_trapdoor_from_collision(
    pp: PublicParams, m1: Scalar, r1: Scalar, m2: Scalar, r2: Scalar
) -> Scalar:
    """Recover log_G(H) from two distinct openings of one commitment.

    From m1*G + r1*H == m2*G + r2*H it follows that
    H == (m1 - m2)/(r2 - r1) * G, so a binding break hands over the
    trapdoor.  This is the contrapositive the security argument rests on.
    """
    if m1 == m2 and r1 == r2:
        raise NotACollision("openings are identical")
    if commit(pp, m1, r1) != commit(pp, m2, r2):
        raise NotACollision("openings commit to different points")
    if r1 == r2:
        # Equal blindings with equal commitments force equal messages, so
        # this cannot happen for a genuine collision; guard anyway.
        raise DegenerateCollision("blinding factors are equal")
    return (m1 - m2) * (r2 - r1).inverse()


# ---------------------------------------------------------------------------
# Serialization.  The trapdoor never leaves the process.
# ---------------------------------------------------------------------------

PP_FORMAT = "pp/v1"


def params_to_dict(pp: PublicParams) -> dict:
    return {
        "format": PP_FORMAT,
        "scheme": "pedersen",
        "group": pp.group.descriptor.name,
        "kind": pp.group.descriptor.kind,
        "q": pp.q,
        "mode": pp.mode,
        "g": pp.group.encode_point(pp.g).hex(),
        "h": pp.group.encode_point(pp.h).hex(),
    }


def params_from_dict(data: dict) -> PublicParams:
    if data.get("format") != PP_FORMAT:
        raise SetupError(f"unexpected params format {data.get('format')!r}")
    if data.get("scheme") != "pedersen":
        raise SetupError(f"unexpected scheme {data.get('scheme')!r}")
    try:
        group = group_by_name(data["group"])
    except (KeyError, GroupError) as exc:
        raise SetupError(f"unknown group in params: {exc}") from None
    if data.get("q") != group.q:
        raise SetupError("group order in params does not match the backend")
    mode = data.get("mode")
    if mode not in ("hash_derived", "trusted"):
        raise SetupError(f"unknown setup mode {mode!r}")
    try:
        g = group.decode_point(bytes.fromhex(data["g"]))
        h = group.decode_point(bytes.fromhex(data["h"]))
    except (KeyError, ValueError) as exc:  # covers Malformed/NotInSubgroup
        raise SetupError(f"bad base point: {exc}") from None
    if g.is_identity() or h.is_identity():
        raise SetupError("base points must not be the identity")
    if mode == "hash_derived" and h != hash_to_point(group, H_DOMAIN):
        raise SetupError("hash_derived params carry a base H that does not "
                         "match the domain-separated derivation")
    group.register_fixed_base(g)
    group.register_fixed_base(h)
    return PublicParams(group=group, g=g, h=h, mode=mode, trapdoor=None)


def opening_to_bytes(pp: PublicParams, m: Scalar, r: Scalar) -> bytes:
    """Fixed-width m || r, suitable for hashing into transcripts."""
    return pp.group.encode_scalar(m) + pp.group.encode_scalar(r)


def opening_from_bytes(pp: PublicParams, data: bytes) -> tuple[Scalar, Scalar]:
    width = pp.group.descriptor.scalar_bytes
    if len(data) != 2 * width:
        raise GroupError(f"expected {2 * width} bytes, got {len(data)}")
    return pp.group.decode_scalar(data[:width]), pp.group.decode_scalar(data[width:])
