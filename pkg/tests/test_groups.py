"""Group layer: toy subgroup and secp256k1 against independent oracles."""

import math
import random

import pytest

from emissions_audit.groups import (
    MalformedPoint,
    MalformedScalar,
    NotInSubgroup,
    Scalar,
    TOY_GENERATOR,
    TOY_P,
    TOY_Q,
    group_by_name,
    production_group,
    toy_group,
)


@pytest.fixture(scope="module")
def toy():
    return toy_group()


@pytest.fixture(scope="module")
def prod():
    return production_group()


# ---------------------------------------------------------------------------
# Toy group against plain integer arithmetic.
# ---------------------------------------------------------------------------


def test_toy_generator_is_smallest_of_its_order():
    # Independent scan: the smallest residue mod 607 whose multiplicative
    # order is exactly 101.
    found = None
    for v in range(2, TOY_P):
        if pow(v, TOY_Q, TOY_P) == 1 and v != 1:
            found = v
            break
    assert found == TOY_GENERATOR == 7


def test_toy_subgroup_order_is_prime_divisor():
    assert (TOY_P - 1) % TOY_Q == 0
    # 101 is prime: the subgroup has no proper subgroups beyond {1}.
    assert all(TOY_Q % d for d in range(2, int(math.isqrt(TOY_Q)) + 1))


def test_toy_add_matches_integer_multiplication(toy):
    rng = random.Random(1)
    for _ in range(300):
        a = toy.mul(rng.randrange(TOY_Q), toy.generator)
        b = toy.mul(rng.randrange(TOY_Q), toy.generator)
        assert (a + b).value == (a.value * b.value) % TOY_P


def test_toy_scalar_mul_matches_integer_pow(toy):
    g = toy.generator
    for k in range(0, 2 * TOY_Q + 5, 7):
        assert (k * g).value == pow(TOY_GENERATOR, k, TOY_P)


def test_toy_dlog_exhaustive_roundtrip(toy):
    for k in range(TOY_Q):
        assert toy.brute_force_dlog(toy.mul(k, toy.generator)) == k


def test_toy_elements_enumerates_whole_subgroup(toy):
    values = [p.value for p in toy.elements()]
    assert len(values) == TOY_Q
    assert len(set(values)) == TOY_Q
    assert values[0] == 1 and values[1] == TOY_GENERATOR
    assert all(pow(v, TOY_Q, TOY_P) == 1 for v in values)


# ---------------------------------------------------------------------------
# Scalar multiplication against the repeated-addition oracle.
# ---------------------------------------------------------------------------


def _repeated_add(group, k, point):
    acc = group.identity
    for _ in range(k):
        acc = acc + point
    return acc


@pytest.mark.parametrize("name", ["toy", "secp256k1"])
def test_scalar_mul_matches_repeated_addition(name):
    group = group_by_name(name)
    rng = random.Random(2)
    g = group.generator
    for _ in range(8):
        k = rng.randrange(1, 50)
        p = group.mul(rng.randrange(1, group.q), g)
        assert group.mul(k, p) == _repeated_add(group, k, p)
    assert group.mul(0, g) == group.identity
    assert group.mul(1, g) == g


@pytest.mark.parametrize("name", ["toy", "secp256k1"])
def test_group_order_annihilates_points(name):
    # The multiplier is not pre-reduced: q * P must genuinely collapse.
    group = group_by_name(name)
    g = group.generator
    assert group.mul(group.q, g).is_identity()
    assert group.mul(group.q, group.mul(5, g)).is_identity()
    assert group.mul(group.q + 3, g) == group.mul(3, g)


@pytest.mark.parametrize("name,cases", [("toy", 1000), ("secp256k1", 150)])
def test_scalar_mul_distributes_over_addition(name, cases):
    group = group_by_name(name)
    rng = random.Random(3)
    g = group.generator
    for _ in range(cases):
        a = rng.randrange(group.q)
        b = rng.randrange(group.q)
        assert group.mul((a + b) % group.q, g) == group.mul(a, g) + group.mul(b, g)


def test_point_negation_and_subtraction(prod, toy):
    for group in (prod, toy):
        p = group.mul(11, group.generator)
        assert (p + (-p)).is_identity()
        assert group.mul(group.q - 1, group.generator) == -group.generator


# ---------------------------------------------------------------------------
# Fixed-base acceleration must agree with the generic ladder.
# ---------------------------------------------------------------------------


def test_fixed_base_table_matches_generic_mul(prod):
    rng = random.Random(4)
    g = prod.generator
    # The generator's table is registered by the module itself.
    for _ in range(50):
        k = rng.randrange(prod.q)
        assert prod.mul(k, g) == k * g
    for k in (0, 1, 2, prod.q - 1, prod.q, prod.q + 1):
        assert prod.mul(k, g) == k * g


# ---------------------------------------------------------------------------
# Scalar field arithmetic.
# ---------------------------------------------------------------------------


def test_scalar_field_ops(toy):
    q = toy.q
    a, b = Scalar(70, q), Scalar(50, q)
    assert (a + b).value == 19
    assert (a - b).value == 20
    assert (-a).value == q - 70
    assert (a * b).value == (70 * 50) % q
    assert (a * a.inverse()).value == 1
    with pytest.raises(ZeroDivisionError):
        Scalar(0, q).inverse()


def test_scalar_rejects_cross_field_mixing():
    with pytest.raises(ValueError):
        Scalar(1, 101) + Scalar(1, 103)


def test_random_scalar_stays_in_range(toy, prod):
    rng = random.Random(5)
    for group in (toy, prod):
        for _ in range(200):
            s = group.random_scalar(rng)
            assert 0 <= s.value < group.q


def test_random_scalar_uniform_chi_square(toy):
    # 50500 draws over 101 bins, expected 500 per bin.
    from scipy.stats import chisquare

    rng = random.Random(6)
    counts = [0] * TOY_Q
    for _ in range(500 * TOY_Q):
        counts[toy.random_scalar(rng).value] += 1
    _, p = chisquare(counts)
    assert p > 0.001, f"uniformity rejected: p={p}"


# ---------------------------------------------------------------------------
# Encoding round-trips and error taxonomy.
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["toy", "secp256k1"])
def test_point_encoding_roundtrip(name):
    group = group_by_name(name)
    rng = random.Random(7)
    for _ in range(20):
        p = group.mul(rng.randrange(1, group.q), group.generator)
        enc = group.encode_point(p)
        assert len(enc) == group.descriptor.point_bytes
        assert group.decode_point(enc) == p
    ident = group.encode_point(group.identity)
    assert group.decode_point(ident).is_identity()


@pytest.mark.parametrize("name", ["toy", "secp256k1"])
def test_scalar_encoding_roundtrip(name):
    group = group_by_name(name)
    rng = random.Random(8)
    for _ in range(20):
        s = group.random_scalar(rng)
        enc = group.encode_scalar(s)
        assert len(enc) == group.descriptor.scalar_bytes
        assert group.decode_scalar(enc) == s


def test_toy_decode_rejects_garbage(toy):
    with pytest.raises(MalformedPoint):
        toy.decode_point(b"\x00")  # wrong length
    with pytest.raises(MalformedPoint):
        toy.decode_point(b"\x00\x00")  # zero is not a unit
    with pytest.raises(MalformedPoint):
        toy.decode_point((TOY_P).to_bytes(2, "big"))  # out of field
    with pytest.raises(NotInSubgroup):
        toy.decode_point((3).to_bytes(2, "big"))  # order 202, not 101


def test_curve_decode_rejects_garbage(prod):
    with pytest.raises(MalformedPoint):
        prod.decode_point(b"\x02" + b"\x00" * 31)  # wrong length
    with pytest.raises(MalformedPoint):
        prod.decode_point(b"\x05" + b"\x11" * 32)  # bad prefix
    # x = 5 has no square y^2 on secp256k1.
    with pytest.raises(MalformedPoint):
        prod.decode_point(b"\x02" + (5).to_bytes(32, "big"))


@pytest.mark.parametrize("name", ["toy", "secp256k1"])
def test_scalar_decode_rejects_garbage(name):
    group = group_by_name(name)
    width = group.descriptor.scalar_bytes
    with pytest.raises(MalformedScalar):
        group.decode_scalar(b"\x00" * (width + 1))
    with pytest.raises(MalformedScalar):
        group.decode_scalar(group.q.to_bytes(width, "big"))  # == q, not canonical


def test_group_lookup_aliases():
    from emissions_audit.groups import GroupError

    assert group_by_name("toy") is group_by_name("mod607")
    assert group_by_name("production") is group_by_name("secp256k1")
    with pytest.raises(GroupError):
        group_by_name("nonsense")


def test_secp256k1_generator_satisfies_curve_equation(prod):
    g = prod.generator
    p = 2**256 - 2**32 - 977
    assert (g.y * g.y - (g.x**3 + 7)) % p == 0
