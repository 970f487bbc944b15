"""Prime-order group arithmetic behind the commitment scheme.

Two interchangeable backends sit behind one small interface:

* ``secp256k1`` -- the production curve (prime order, cofactor 1, ~128-bit
  security).  Scalar multiplication of the fixed bases is accelerated with
  precomputed window tables; everything else uses Jacobian coordinates.
* the toy group -- the order-101 subgroup of Z_607*, small enough that tests
  can brute-force discrete logs and enumerate every commitment exhaustively.

Protocol code never touches backend internals: it sees ``Scalar`` values,
opaque point objects with ``+`` and ``*`` operators, and ``Group`` methods
for sampling, encoding, and (toy only) discrete-log search.
"""

from __future__ import annotations

import random
from dataclasses import dataclass


class GroupError(ValueError):
    """Base class for group-level failures."""


class MalformedPoint(GroupError):
    """Byte string does not decode to a valid group element."""


class NotInSubgroup(GroupError):
    """Decoded element lies outside the prime-order subgroup."""


class MalformedScalar(GroupError):
    """Byte string does not decode to a canonical scalar."""


@dataclass(frozen=True)
class GroupDescriptor:
    """Identifying parameters a verifier needs to agree on the group."""

    kind: str  # "production_curve" or "toy_group"
    name: str
    q: int  # prime order of the group
    scalar_bytes: int
    point_bytes: int


class Scalar:
    """Residue modulo the group order q, always stored canonically."""

    __slots__ = ("value", "q")

    def __init__(self, value: int, q: int):
        self.value = value % q
        self.q = q

    def _check(self, other: "Scalar") -> None:
        if not isinstance(other, Scalar):
            raise TypeError(f"expected Scalar, got {type(other).__name__}")
        if other.q != self.q:
            raise ValueError("scalars from different groups")

    def __add__(self, other: "Scalar") -> "Scalar":
        self._check(other)
        return Scalar(self.value + other.value, self.q)

    def __sub__(self, other: "Scalar") -> "Scalar":
        self._check(other)
        return Scalar(self.value - other.value, self.q)

    def __neg__(self) -> "Scalar":
        return Scalar(-self.value, self.q)

    def __mul__(self, other):
        if isinstance(other, Scalar):
            self._check(other)
            return Scalar(self.value * other.value, self.q)
        return NotImplemented  # lets point types pick up scalar * point

    def inverse(self) -> "Scalar":
        if self.value == 0:
            raise ZeroDivisionError("zero scalar has no inverse")
        return Scalar(pow(self.value, self.q - 2, self.q), self.q)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Scalar)
            and self.value == other.value
            and self.q == other.q
        )

    def __hash__(self) -> int:
        return hash((self.value, self.q))

    def __repr__(self) -> str:
        return f"Scalar({self.value})"


# ---------------------------------------------------------------------------
# Toy backend: the order-101 subgroup of Z_607*.
# ---------------------------------------------------------------------------

TOY_P = 607  # field prime; 607 = 6 * 101 + 1
TOY_Q = 101  # subgroup order (prime)
# Smallest element of multiplicative order 101 modulo 607.  Pinned here;
# a test re-derives it from (TOY_P, TOY_Q) and compares.
TOY_GENERATOR = 7


class ToyPoint:
    """Element of the order-101 subgroup of Z_607* (written additively)."""

    __slots__ = ("value",)

    def __init__(self, value: int):
        self.value = value

    def __add__(self, other: "ToyPoint") -> "ToyPoint":
        if not isinstance(other, ToyPoint):
            return NotImplemented
        return ToyPoint(self.value * other.value % TOY_P)

    def __rmul__(self, k) -> "ToyPoint":
        if isinstance(k, Scalar):
            if k.q != TOY_Q:
                raise ValueError("scalar from a different group")
            k = k.value
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            raise ValueError("scalar multiplier must be non-negative")
        # k is deliberately not reduced mod q first: q * P falling back to
        # the identity must come from the group structure, not from our
        # arithmetic shortcutting it.
        return ToyPoint(pow(self.value, k, TOY_P))

    def __neg__(self) -> "ToyPoint":
        return ToyPoint(pow(self.value, TOY_P - 2, TOY_P))

    def is_identity(self) -> bool:
        return self.value == 1

    def __eq__(self, other) -> bool:
        return isinstance(other, ToyPoint) and self.value == other.value

    def __hash__(self) -> int:
        return hash(("toy", self.value))

    def __repr__(self) -> str:
        return f"ToyPoint({self.value})"


# ---------------------------------------------------------------------------
# Production backend: secp256k1 (y^2 = x^3 + 7 over F_p, prime order).
# ---------------------------------------------------------------------------

_P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
_Q = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
_GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8
_B = 7

_INF_JAC = (1, 1, 0)  # Z == 0 marks the point at infinity


def _jac_double(pt):
    X, Y, Z = pt
    if Z == 0 or Y == 0:
        return _INF_JAC
    YY = Y * Y % _P
    S = 4 * X * YY % _P
    M = 3 * X * X % _P  # curve coefficient a = 0
    X3 = (M * M - 2 * S) % _P
    Y3 = (M * (S - X3) - 8 * YY * YY) % _P
    Z3 = 2 * Y * Z % _P
    return (X3, Y3, Z3)


def _jac_add(p1, p2):
    X1, Y1, Z1 = p1
    X2, Y2, Z2 = p2
    if Z1 == 0:
        return p2
    if Z2 == 0:
        return p1
    Z1Z1 = Z1 * Z1 % _P
    Z2Z2 = Z2 * Z2 % _P
    U1 = X1 * Z2Z2 % _P
    U2 = X2 * Z1Z1 % _P
    S1 = Y1 * Z2 * Z2Z2 % _P
    S2 = Y2 * Z1 * Z1Z1 % _P
    H = (U2 - U1) % _P
    R = (S2 - S1) % _P
    if H == 0:
        if R == 0:
            return _jac_double(p1)
        return _INF_JAC
    HH = H * H % _P
    HHH = H * HH % _P
    V = U1 * HH % _P
    X3 = (R * R - HHH - 2 * V) % _P
    Y3 = (R * (V - X3) - S1 * HHH) % _P
    Z3 = Z1 * Z2 * H % _P
    return (X3, Y3, Z3)


def _jac_add_affine(p1, xy):
    """Mixed addition: Jacobian p1 plus affine (x, y), Z2 implicitly 1."""
    X1, Y1, Z1 = p1
    x2, y2 = xy
    if Z1 == 0:
        return (x2, y2, 1)
    Z1Z1 = Z1 * Z1 % _P
    U2 = x2 * Z1Z1 % _P
    S2 = y2 * Z1 * Z1Z1 % _P
    H = (U2 - X1) % _P
    R = (S2 - Y1) % _P
    if H == 0:
        if R == 0:
            return _jac_double(p1)
        return _INF_JAC
    HH = H * H % _P
    HHH = H * HH % _P
    V = X1 * HH % _P
    X3 = (R * R - HHH - 2 * V) % _P
    Y3 = (R * (V - X3) - Y1 * HHH) % _P
    Z3 = Z1 * H % _P
    return (X3, Y3, Z3)


def _jac_to_affine(pt):
    X, Y, Z = pt
    if Z == 0:
        return None
    zinv = pow(Z, _P - 2, _P)
    zinv2 = zinv * zinv % _P
    return (X * zinv2 % _P, Y * zinv2 * zinv % _P)


def _batch_to_affine(points):
    """Convert many Jacobian points at once with a single field inversion."""
    zs = [pt[2] for pt in points]
    prefix = [1] * (len(zs) + 1)
    for i, z in enumerate(zs):
        prefix[i + 1] = prefix[i] * z % _P
    inv = pow(prefix[-1], _P - 2, _P)
    out = [None] * len(points)
    for i in range(len(points) - 1, -1, -1):
        zinv = inv * prefix[i] % _P
        inv = inv * zs[i] % _P
        X, Y, _ = points[i]
        zinv2 = zinv * zinv % _P
        out[i] = (X * zinv2 % _P, Y * zinv2 * zinv % _P)
    return out


class CurvePoint:
    """Affine secp256k1 point; x is None for the point at infinity."""

    __slots__ = ("x", "y")

    def __init__(self, x, y):
        self.x = x
        self.y = y

    def is_identity(self) -> bool:
        return self.x is None

    def __add__(self, other: "CurvePoint") -> "CurvePoint":
        if not isinstance(other, CurvePoint):
            return NotImplemented
        if self.x is None:
            return other
        if other.x is None:
            return self
        if self.x == other.x:
            if (self.y + other.y) % _P == 0:
                return _CURVE_IDENTITY
            lam = 3 * self.x * self.x * pow(2 * self.y, _P - 2, _P) % _P
        else:
            lam = (other.y - self.y) * pow(other.x - self.x, _P - 2, _P) % _P
        x3 = (lam * lam - self.x - other.x) % _P
        y3 = (lam * (self.x - x3) - self.y) % _P
        return CurvePoint(x3, y3)

    def __rmul__(self, k) -> "CurvePoint":
        if isinstance(k, Scalar):
            if k.q != _Q:
                raise ValueError("scalar from a different group")
            k = k.value
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            raise ValueError("scalar multiplier must be non-negative")
        if k == 0 or self.x is None:
            return _CURVE_IDENTITY
        # Plain double-and-add over the unreduced multiplier, for the same
        # reason as the toy backend: q * P == identity must be observable.
        acc = _INF_JAC
        base = (self.x, self.y, 1)
        for bit in bin(k)[2:]:
            acc = _jac_double(acc)
            if bit == "1":
                acc = _jac_add(acc, base)
        aff = _jac_to_affine(acc)
        if aff is None:
            return _CURVE_IDENTITY
        return CurvePoint(aff[0], aff[1])

    def __neg__(self) -> "CurvePoint":
        if self.x is None:
            return self
        return CurvePoint(self.x, (-self.y) % _P)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CurvePoint)
            and self.x == other.x
            and self.y == other.y
        )

    def __hash__(self) -> int:
        return hash(("secp256k1", self.x, self.y))

    def __repr__(self) -> str:
        if self.x is None:
            return "CurvePoint(identity)"
        return f"CurvePoint({hex(self.x)}, {hex(self.y)})"


_CURVE_IDENTITY = CurvePoint(None, None)

_WINDOW_BITS = 8
_WINDOW_ROWS = 32  # covers multipliers below 2**256


class _FixedBaseTable:
    """Per-base window table: rows[i][d] = (d << 8*i) * base, affine."""

    __slots__ = ("rows",)

    def __init__(self, point: CurvePoint):
        jac_rows = []
        row_base = (point.x, point.y, 1)
        for _ in range(_WINDOW_ROWS):
            acc = row_base
            row = [acc]
            for _ in range(2, 1 << _WINDOW_BITS):
                acc = _jac_add(acc, row_base)
                row.append(acc)
            jac_rows.append(row)
            for _ in range(_WINDOW_BITS):
                row_base = _jac_double(row_base)
        flat = [pt for row in jac_rows for pt in row]
        affine = _batch_to_affine(flat)
        size = (1 << _WINDOW_BITS) - 1
        self.rows = [affine[i * size : (i + 1) * size] for i in range(_WINDOW_ROWS)]

    def mul(self, k: int) -> CurvePoint:
        acc = _INF_JAC
        for row in self.rows:
            if k == 0:
                break
            d = k & 0xFF
            k >>= 8
            if d:
                acc = _jac_add_affine(acc, row[d - 1])
        aff = _jac_to_affine(acc)
        if aff is None:
            return _CURVE_IDENTITY
        return CurvePoint(aff[0], aff[1])


# ---------------------------------------------------------------------------
# Group facade.
# ---------------------------------------------------------------------------


class Group:
    """Backend-independent operations; concrete groups fill in the rest."""

    descriptor: GroupDescriptor

    @property
    def q(self) -> int:
        return self.descriptor.q

    def scalar(self, value: int) -> Scalar:
        return Scalar(value, self.q)

    def random_scalar(self, rng: random.Random) -> Scalar:
        # Rejection sampling keeps the draw uniform over [0, q).
        bits = self.q.bit_length()
        while True:
            v = rng.getrandbits(bits)
            if v < self.q:
                return Scalar(v, self.q)

    def mul(self, k, point):
        """Scalar multiplication; subclasses may accelerate fixed bases."""
        return k * point

    def encode_scalar(self, s: Scalar) -> bytes:
        return s.value.to_bytes(self.descriptor.scalar_bytes, "big")

    def decode_scalar(self, data: bytes) -> Scalar:
        if len(data) != self.descriptor.scalar_bytes:
            raise MalformedScalar(
                f"expected {self.descriptor.scalar_bytes} bytes, got {len(data)}"
            )
        v = int.from_bytes(data, "big")
        if v >= self.q:
            raise MalformedScalar("scalar not in canonical range")
        return Scalar(v, self.q)

    def register_fixed_base(self, point) -> None:
        """Hint that ``point`` will be multiplied often.  Default: no-op."""

    def brute_force_dlog(self, point) -> int:
        raise GroupError("discrete-log search is only available on the toy group")


class ToyGroup(Group):
    """The order-101 subgroup of Z_607*; exhaustively enumerable."""

    def __init__(self):
        self.descriptor = GroupDescriptor(
            kind="toy_group",
            name="mod607",
            q=TOY_Q,
            scalar_bytes=1,
            point_bytes=2,
        )
        self._generator = ToyPoint(TOY_GENERATOR)
        self._dlog_table = None

    @property
    def generator(self) -> ToyPoint:
        return self._generator

    @property
    def identity(self) -> ToyPoint:
        return ToyPoint(1)

    def encode_point(self, point: ToyPoint) -> bytes:
        return point.value.to_bytes(2, "big")

    def decode_point(self, data: bytes) -> ToyPoint:
        if len(data) != 2:
            raise MalformedPoint(f"expected 2 bytes, got {len(data)}")
        v = int.from_bytes(data, "big")
        if v == 0 or v >= TOY_P:
            raise MalformedPoint("value outside Z_607*")
        if pow(v, TOY_Q, TOY_P) != 1:
            raise NotInSubgroup(f"{v} is not in the order-{TOY_Q} subgroup")
        return ToyPoint(v)

    def brute_force_dlog(self, point: ToyPoint) -> int:
        if self._dlog_table is None:
            table = {}
            acc = ToyPoint(1)
            for e in range(TOY_Q):
                table[acc.value] = e
                acc = acc + self._generator
            self._dlog_table = table
        try:
            return self._dlog_table[point.value]
        except KeyError:
            raise NotInSubgroup(f"{point.value} is not in the subgroup") from None

    def elements(self):
        """Every subgroup element, in generator order (test helper)."""
        acc = ToyPoint(1)
        for _ in range(TOY_Q):
            yield acc
            acc = acc + self._generator


class Secp256k1Group(Group):
    """secp256k1 with window-table acceleration for registered bases."""

    def __init__(self):
        self.descriptor = GroupDescriptor(
            kind="production_curve",
            name="secp256k1",
            q=_Q,
            scalar_bytes=32,
            point_bytes=33,
        )
        self._generator = CurvePoint(_GX, _GY)
        self._tables: dict[CurvePoint, _FixedBaseTable] = {}

    @property
    def generator(self) -> CurvePoint:
        return self._generator

    @property
    def identity(self) -> CurvePoint:
        return _CURVE_IDENTITY

    def register_fixed_base(self, point: CurvePoint) -> None:
        if point.is_identity():
            raise GroupError("cannot build a table for the identity")
        if point not in self._tables:
            self._tables[point] = _FixedBaseTable(point)

    def mul(self, k, point: CurvePoint):
        table = self._tables.get(point)
        if table is None:
            return k * point
        if isinstance(k, Scalar):
            if k.q != _Q:
                raise ValueError("scalar from a different group")
            k = k.value
        if not isinstance(k, int):
            raise TypeError(f"expected int or Scalar, got {type(k).__name__}")
        if k < 0:
            raise ValueError("scalar multiplier must be non-negative")
        if k >> (_WINDOW_BITS * _WINDOW_ROWS):
            return k * point  # beyond table range; fall back
        return table.mul(k)

    def encode_point(self, point: CurvePoint) -> bytes:
        if point.is_identity():
            return b"\x00" * 33
        prefix = b"\x03" if point.y & 1 else b"\x02"
        return prefix + point.x.to_bytes(32, "big")

    def decode_point(self, data: bytes) -> CurvePoint:
        if len(data) != 33:
            raise MalformedPoint(f"expected 33 bytes, got {len(data)}")
        if data == b"\x00" * 33:
            return _CURVE_IDENTITY
        prefix = data[0]
        if prefix not in (2, 3):
            raise MalformedPoint(f"bad prefix byte {prefix:#04x}")
        x = int.from_bytes(data[1:], "big")
        if x >= _P:
            raise MalformedPoint("x coordinate not a canonical field element")
        y_sq = (pow(x, 3, _P) + _B) % _P
        y = pow(y_sq, (_P + 1) // 4, _P)
        if y * y % _P != y_sq:
            raise MalformedPoint("x is not on the curve")
        if (y & 1) != (prefix & 1):
            y = _P - y
        # Cofactor 1: every curve point is in the prime-order subgroup.
        return CurvePoint(x, y)


_TOY = ToyGroup()
_SECP256K1 = Secp256k1Group()

_GROUPS_BY_NAME = {
    "toy": _TOY,
    "toy_group": _TOY,
    "mod607": _TOY,
    "production": _SECP256K1,
    "production_curve": _SECP256K1,
    "secp256k1": _SECP256K1,
}


def toy_group() -> ToyGroup:
    return _TOY


def production_group() -> Secp256k1Group:
    return _SECP256K1


def group_by_name(name: str) -> Group:
    try:
        return _GROUPS_BY_NAME[name]
    except KeyError:
        raise GroupError(f"unknown group {name!r}") from None
