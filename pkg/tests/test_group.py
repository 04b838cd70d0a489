import random
from collections import Counter

import gmpy2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selftally import group as G
from selftally.group import Group, MalformedEncoding, NotInGroup, ScalarOutOfRange, get_group


def test_tiny_vectors(tiny):
    assert (tiny.p, tiny.q, tiny.g) == (23, 11, 2)
    assert tiny.exp(2, 3) == 8
    assert tiny.mul(8, 4) == 9
    assert tiny.exp(tiny.g, 0) == tiny.identity
    assert tiny.exp(tiny.g, tiny.q) == tiny.identity


def test_generator_order(group):
    assert group.g != group.identity
    assert group.exp(group.g, group.q) == 1
    assert pow(group.g, group.q, group.p) == 1


def test_standard_parameters_are_safe_primes_of_the_right_size(std):
    assert std.p.bit_length() == 2048
    assert std.q.bit_length() == 256
    assert gmpy2.is_prime(std.p, 50) and gmpy2.is_prime(std.q, 50)
    c, rem = divmod(std.p - 1, 2 * std.q)
    assert rem == 0 and c > 1


def test_random_scalar_deterministic_and_in_range(group):
    a = [group.random_scalar(random.Random(42)) for _ in range(5)]
    b = [group.random_scalar(random.Random(42)) for _ in range(5)]
    assert a == b
    r = random.Random(1)
    assert all(0 <= group.random_scalar(r) < group.q for _ in range(1000))
    assert all(group.random_scalar(r, nonzero=True) != 0 for _ in range(1000))


def test_random_scalar_uniform_in_tiny(tiny):
    r = random.Random(7)
    n = 10_000
    counts = Counter(tiny.random_scalar(r) for _ in range(n))
    p = 1 / tiny.q
    sigma = (n * p * (1 - p)) ** 0.5
    for k in range(tiny.q):
        assert abs(counts[k] - n * p) < 5 * sigma


def test_decode_rejects_non_member(tiny):
    # 5 is a quadratic non-residue mod 23, so 5^11 = -1
    assert pow(5, 11, 23) == 22
    with pytest.raises(NotInGroup):
        tiny.decode_element(tiny.encode_element(5))


def test_membership_rejects_every_wrong_order_element(tiny):
    subgroup = {pow(2, k, 23) for k in range(11)}
    for x in range(1, 23):
        assert tiny.is_member(x) == (x in subgroup)
    for bad in (0, 23, 24):
        assert not tiny.is_member(bad)


def test_encoding_is_fixed_width(group):
    one = group.encode_element(group.identity)
    assert len(one) == group.element_size and one[-1] == 1 and not any(one[:-1])
    assert len(group.encode_scalar(0)) == group.scalar_size


def test_decode_length_and_range(tiny):
    with pytest.raises(MalformedEncoding):
        tiny.decode_element(b"\x00\x08")
    with pytest.raises(ScalarOutOfRange):
        tiny.decode_scalar(bytes([11]))
    assert tiny.decode_scalar(bytes([10])) == 10


def test_round_trip_and_injective(group):
    r = random.Random(3)
    xs = {group.gexp(group.random_scalar(r)) for _ in range(1000)}
    encoded = {group.encode_element(x) for x in xs}
    assert len(encoded) == len(xs)
    for x in xs:
        assert group.decode_element(group.encode_element(x)) == x


def test_hash_to_challenge(group):
    t = b"transcript"
    assert group.hash_to_challenge("ST/v1/zkp1", t) == group.hash_to_challenge("ST/v1/zkp1", t)
    assert 0 <= group.hash_to_challenge("ST/v1/zkp1", t) < group.q


def test_hash_tag_separation(std):
    t = b"transcript"
    assert std.hash_to_challenge("ST/v1/zkp1", t) != std.hash_to_challenge("ST/v1/zkp2", t)
    # field boundaries are length-prefixed
    assert std.hash_to_challenge("x", b"ab", b"c") != std.hash_to_challenge("x", b"a", b"bc")


def test_generator_powers_match_builtin(group):
    r = random.Random(11)
    ks = [0, 1, 2, group.q - 1, group.q, group.q + 5, -1] + [r.randrange(group.q) for _ in range(100)]
    for k in ks:
        assert group.gexp(k) == pow(group.g, k % group.q, group.p)


def test_backends_agree(std):
    if "gmpy2" not in G.available_backends():
        pytest.skip("gmpy2 not installed")
    r = random.Random(5)
    cases = [(std.gexp(r.randrange(std.q)), r.randrange(std.q)) for _ in range(20)]
    before = G.get_backend()
    try:
        out = {}
        for b in ("python", "gmpy2"):
            G.set_backend(b)
            out[b] = [(std.exp(x, k), std.gexp(k), std.is_member(x)) for x, k in cases]
        assert out["python"] == out["gmpy2"]
    finally:
        G.set_backend(before)


def test_unknown_backend_and_group():
    with pytest.raises(ValueError):
        G.set_backend("numba")
    with pytest.raises(ValueError):
        get_group("p-256")


def test_bad_parameters_rejected():
    with pytest.raises(G.GroupError):
        Group.from_json({"name": "bad", "p": "17", "q": "5", "g": "2"})
    with pytest.raises(G.GroupError):
        Group.from_json({"name": "bad", "p": "17", "q": "b", "g": "5"})
    with pytest.raises(MalformedEncoding):
        Group.from_json({"name": "bad", "p": "zz"})


def test_json_round_trip(group):
    assert Group.from_json(group.to_json()) == group


# algebraic laws

tiny_elements = st.integers(0, 10).map(lambda k: pow(2, k, 23))
std_scalars = st.integers(0, 2**256)


@settings(max_examples=300, deadline=None)
@given(tiny_elements, tiny_elements, tiny_elements)
def test_group_laws_tiny(a, b, c):
    g = get_group("test-tiny")
    assert g.mul(g.mul(a, b), c) == g.mul(a, g.mul(b, c))
    assert g.mul(a, b) == g.mul(b, a)
    assert g.mul(a, g.identity) == a
    assert g.mul(a, g.inv(a)) == g.identity
    assert g.div(g.mul(a, b), b) == a


@settings(max_examples=60, deadline=None)
@given(std_scalars, std_scalars, std_scalars)
def test_group_laws_standard(i, j, k):
    g = get_group("standard")
    a, b, c = g.gexp(i), g.gexp(j), g.gexp(k)
    assert g.mul(g.mul(a, b), c) == g.mul(a, g.mul(b, c))
    assert g.mul(a, b) == g.mul(b, a)
    assert g.div(g.mul(a, b), b) == a
    assert g.exp(g.exp(g.g, i), j) == g.gexp(i * j % g.q)
    assert g.is_member(a)
