"""Prime-order subgroup of Z_p^* used by every protocol value.

Elements and scalars are plain Python ints; the :class:`Group` object owns the
arithmetic, the canonical fixed-width big-endian encoding and the
hash-to-challenge function.

Modular exponentiation is the hot kernel. It runs on ``gmpy2.powmod`` when
gmpy2 is importable, and on the builtin ``pow`` otherwise or when the
environment variable ``ST_PURE_PYTHON=1`` is set. :func:`set_backend` switches
at runtime (the benchmark uses it to compare both paths). Powers of the
generator go through a fixed-base comb table built once per group and backend.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Union

try:
    import gmpy2
except ImportError:  # pragma: no cover - gmpy2 is optional
    gmpy2 = None

Scalar = int
Element = int
RandomSource = Union[random.Random, random.SystemRandom]

TAG_PREFIX = "ST/v1/"
GROUP_NAMES = ("test-tiny", "standard")


class GroupError(ValueError):
    pass


class MalformedEncoding(GroupError):
    pass


class NotInGroup(GroupError):
    pass


class ScalarOutOfRange(GroupError):
    pass


def _pow_gmpy(base: int, exp: int, mod: int) -> int:
    return int(gmpy2.powmod(base, exp, mod))


_BACKENDS = {"python": pow}
if gmpy2 is not None:
    _BACKENDS["gmpy2"] = _pow_gmpy

_WINDOW = 8
_comb_cache: dict[tuple[int, int, str], list] = {}


def _comb_table(g: int, p: int, q: int) -> list:
    """Rows of g^(d * 2^(8i)) for d < 256, one row per byte of the exponent."""
    backend = get_backend()
    key = (g, p, backend)
    table = _comb_cache.get(key)
    if table is None:
        num = gmpy2.mpz if backend == "gmpy2" else int
        mod, base = num(p), num(g)
        table = []
        for _ in range((q.bit_length() + _WINDOW - 1) // _WINDOW):
            row = [num(1)]
            for _ in range((1 << _WINDOW) - 1):
                row.append(row[-1] * base % mod)
            table.append(row)
            base = row[-1] * base % mod
        _comb_cache[key] = table
    return table


def _comb_exp(table: list, k: int, p: int) -> int:
    acc, mod = table[0][0], type(table[0][0])(p)
    for row in table:
        d = k & 0xFF
        if d:
            acc = acc * row[d] % mod
        k >>= _WINDOW
    return int(acc)


def _default_backend() -> str:
    if os.environ.get("ST_PURE_PYTHON", "") not in ("", "0") or "gmpy2" not in _BACKENDS:
        return "python"
    return "gmpy2"


_powmod = _BACKENDS[_default_backend()]


def available_backends() -> tuple[str, ...]:
    return tuple(_BACKENDS)


def get_backend() -> str:
    return next(name for name, fn in _BACKENDS.items() if fn is _powmod)


def set_backend(name: str) -> None:
    global _powmod
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {', '.join(_BACKENDS)}")
    _powmod = _BACKENDS[name]


def _lp(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


@dataclass(frozen=True)
class Group:
    """Order-``q`` subgroup of Z_p^* generated by ``g``."""

    name: str
    p: int
    q: int
    g: int
    element_size: int = field(init=False)
    scalar_size: int = field(init=False)
    g_inv: int = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "g_inv", pow(self.g, -1, self.p))
        object.__setattr__(self, "element_size", (self.p.bit_length() + 7) // 8)
        object.__setattr__(self, "scalar_size", (self.q.bit_length() + 7) // 8)

    identity = 1

    # arithmetic

    def exp(self, base: Element, k: Scalar) -> Element:
        return _powmod(base, k % self.q, self.p)

    def gexp(self, k: Scalar) -> Element:
        # fixed-base comb: the generator is the most frequent base
        return _comb_exp(_comb_table(self.g, self.p, self.q), k % self.q, self.p)

    def mul(self, a: Element, b: Element) -> Element:
        return a * b % self.p

    def inv(self, a: Element) -> Element:
        if a == self.g:
            return self.g_inv
        if _powmod is _pow_gmpy:
            return int(gmpy2.invert(a, self.p))
        return pow(a, -1, self.p)

    def div(self, a: Element, b: Element) -> Element:
        return a * self.inv(b) % self.p

    def prod(self, items) -> Element:
        acc = 1
        for x in items:
            acc = acc * x % self.p
        return acc

    def is_member(self, x: int) -> bool:
        return 0 < x < self.p and _powmod(x, self.q, self.p) == 1

    def random_scalar(self, rng: RandomSource, nonzero: bool = False) -> Scalar:
        if nonzero:
            return rng.randrange(1, self.q)
        return rng.randrange(self.q)

    # encoding

    def encode_element(self, x: Element) -> bytes:
        return x.to_bytes(self.element_size, "big")

    def encode_scalar(self, k: Scalar) -> bytes:
        return k.to_bytes(self.scalar_size, "big")

    def decode_element(self, data: bytes) -> Element:
        if len(data) != self.element_size:
            raise MalformedEncoding(f"element must be {self.element_size} bytes, got {len(data)}")
        x = int.from_bytes(data, "big")
        if not self.is_member(x):
            raise NotInGroup(f"{x:#x} is not in the order-q subgroup")
        return x

    def decode_scalar(self, data: bytes) -> Scalar:
        if len(data) != self.scalar_size:
            raise MalformedEncoding(f"scalar must be {self.scalar_size} bytes, got {len(data)}")
        k = int.from_bytes(data, "big")
        if k >= self.q:
            raise ScalarOutOfRange(f"scalar {k:#x} >= q")
        return k

    # hashing

    def hash_to_challenge(self, tag: str, *fields: bytes) -> Scalar:
        """SHA-256 over the length-prefixed tag and fields, reduced mod q.

        Plain reduction; the bias is below 2^-128 for the 256-bit order.
        """
        h = hashlib.sha256(_lp(tag.encode("ascii")))
        for f in fields:
            h.update(_lp(f))
        return int.from_bytes(h.digest(), "big") % self.q

    # parameter files

    def to_json(self) -> dict:
        return {"name": self.name, "p": format(self.p, "x"), "q": format(self.q, "x"), "g": format(self.g, "x")}

    @classmethod
    def from_json(cls, obj: dict, check: bool = True) -> "Group":
        try:
            grp = cls(obj["name"], int(obj["p"], 16), int(obj["q"], 16), int(obj["g"], 16))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedEncoding(f"bad group parameters: {exc}") from exc
        if check:
            grp.check()
        return grp

    def check(self) -> None:
        """Cheap structural checks; primality is covered by the test suite."""
        if (self.p - 1) % self.q:
            raise GroupError("q does not divide p - 1")
        if self.g in (0, 1) or not self.is_member(self.g):
            raise GroupError("g does not generate the order-q subgroup")


@lru_cache(maxsize=None)
def get_group(name: str | None = None) -> Group:
    """Load a shipped parameter set; defaults to ``$ST_GROUP`` or ``standard``."""
    name = name or os.environ.get("ST_GROUP") or "standard"
    if name not in GROUP_NAMES:
        raise ValueError(f"unknown group {name!r}; choose from {', '.join(GROUP_NAMES)}")
    text = resources.files("selftally").joinpath("params", f"{name}.json").read_text()
    return Group.from_json(json.loads(text))


def load_group(path: str) -> Group:
    with open(path) as fh:
        return Group.from_json(json.load(fh))
