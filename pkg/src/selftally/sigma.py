"""Sigma protocols used by the voting scheme, made non-interactive with Fiat-Shamir.

Four proof families:

``schnorr``  knowledge of x with y = g^x (registration).
``eqdlog``   log_{g1} y1 = log_{g2} y2 (recovery shares and corrections).
``commit``   (C = Y^rho  or  C = g*Y^rho) and beta = g^rho.
``vote``     the same bit b is in C and in V: C/g^b = Y^rho, V/g^b = h^x,
             y = g^x, beta = g^rho, for b in {0, 1}.

Responses follow r = w - witness*e, so every check has the form
``commitment == base^r * statement^e``. The OR proofs are the usual
Cramer-Damgard-Schoenmakers composition: the branch that does not hold is
simulated with a random (e_b, r_b), and the real branch takes e - e_b.

Challenge transcripts (all fields length-prefixed, elements and scalars in the
group's fixed-width encoding)::

    schnorr  "ST/v1/zkp1"    ctx, g, y, a
    eqdlog   "ST/v1/eqdlog"  ctx, g1, y1, g2, y2, a1, a2
    commit   "ST/v1/zkp2"    ctx, g, Y, beta, C, a1, b1, a2, b2
    vote     "ST/v1/zkp3"    ctx, g, Y, h, beta, y, C, V, a1, b1, c1, d1, a2, b2, c2, d2

Each prover is split into a ``*_session`` that returns the first messages and
a ``respond(e)`` callable. The NIZK provers feed it the hash; tests feed it
chosen challenges to exercise the extractor. Passing ``challenge=`` to a
verifier switches it to interactive mode (the supplied value replaces the
hash).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Callable, ClassVar

from .group import Element, Group, MalformedEncoding, RandomSource, Scalar

TAG_SCHNORR = "ST/v1/zkp1"
TAG_EQDLOG = "ST/v1/eqdlog"
TAG_COMMIT = "ST/v1/zkp2"
TAG_VOTE = "ST/v1/zkp3"

FAMILIES = ("schnorr", "eqdlog", "commit", "vote")


class StatementMismatch(ValueError):
    """The prover's witness does not satisfy the statement."""


class NotExtractable(ValueError):
    pass


@dataclass(frozen=True)
class ProofContext:
    """Binds a proof to one election, one voter and one phase."""

    election_id: bytes
    voter_id: int
    phase_tag: str

    def encode(self) -> bytes:
        tag = self.phase_tag.encode("utf-8")
        return (
            len(self.election_id).to_bytes(4, "big")
            + self.election_id
            + self.voter_id.to_bytes(4, "big")
            + len(tag).to_bytes(4, "big")
            + tag
        )


class _Proof:
    # names of group-element fields; every other field is a scalar
    ELEMENTS: ClassVar[tuple[str, ...]] = ()
    CHALLENGES: ClassVar[tuple[str, ...]] = ()

    def _kinds(self):
        for f in fields(self):
            yield f.name, f.name in self.ELEMENTS

    @property
    def first_messages(self) -> tuple[Element, ...]:
        return tuple(getattr(self, n) for n in self.ELEMENTS)

    @property
    def challenges(self) -> tuple[Scalar, ...]:
        return tuple(getattr(self, n) for n in self.CHALLENGES)

    @property
    def responses(self) -> tuple[Scalar, ...]:
        skip = set(self.ELEMENTS) | set(self.CHALLENGES)
        return tuple(getattr(self, f.name) for f in fields(self) if f.name not in skip)

    @classmethod
    def size(cls, group: Group) -> int:
        n_el = len(cls.ELEMENTS)
        return n_el * group.element_size + (len(fields(cls)) - n_el) * group.scalar_size

    def to_bytes(self, group: Group) -> bytes:
        out = b""
        for name, is_el in self._kinds():
            v = getattr(self, name)
            out += group.encode_element(v) if is_el else group.encode_scalar(v)
        return out

    @classmethod
    def from_bytes(cls, group: Group, data: bytes):
        if len(data) != cls.size(group):
            raise MalformedEncoding(f"{cls.__name__} must be {cls.size(group)} bytes, got {len(data)}")
        vals, pos = [], 0
        for f in fields(cls):
            if f.name in cls.ELEMENTS:
                w = group.element_size
                vals.append(group.decode_element(data[pos:pos + w]))
            else:
                w = group.scalar_size
                vals.append(group.decode_scalar(data[pos:pos + w]))
            pos += w
        return cls(*vals)

    def to_json(self, group: Group) -> dict:
        return {
            name: (group.encode_element(getattr(self, name)) if is_el else group.encode_scalar(getattr(self, name))).hex()
            for name, is_el in self._kinds()
        }

    @classmethod
    def from_json(cls, group: Group, obj: dict):
        try:
            raw = b"".join(bytes.fromhex(obj[f.name]) for f in fields(cls))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedEncoding(f"bad {cls.__name__} JSON: {exc}") from exc
        return cls.from_bytes(group, raw)

    def _scalars_in_range(self, group: Group) -> bool:
        return all(0 <= getattr(self, n) < group.q for n, is_el in self._kinds() if not is_el)


@dataclass(frozen=True)
class SchnorrProof(_Proof):
    a: Element
    e: Scalar
    r: Scalar

    ELEMENTS = ("a",)
    CHALLENGES = ("e",)


@dataclass(frozen=True)
class EqDlogProof(_Proof):
    a1: Element
    a2: Element
    e: Scalar
    r: Scalar

    ELEMENTS = ("a1", "a2")
    CHALLENGES = ("e",)


@dataclass(frozen=True)
class CommitOrProof(_Proof):
    a1: Element
    b1: Element
    a2: Element
    b2: Element
    e1: Scalar
    e2: Scalar
    r1: Scalar
    r2: Scalar

    ELEMENTS = ("a1", "b1", "a2", "b2")
    CHALLENGES = ("e1", "e2")


@dataclass(frozen=True)
class VoteOrProof(_Proof):
    a1: Element
    b1: Element
    c1: Element
    d1: Element
    a2: Element
    b2: Element
    c2: Element
    d2: Element
    e1: Scalar
    e2: Scalar
    r1: Scalar  # x, branch 0
    r2: Scalar  # rho, branch 0
    r3: Scalar  # x, branch 1
    r4: Scalar  # rho, branch 1

    ELEMENTS = ("a1", "b1", "c1", "d1", "a2", "b2", "c2", "d2")
    CHALLENGES = ("e1", "e2")


PROOF_TYPES = {"schnorr": SchnorrProof, "eqdlog": EqDlogProof, "commit": CommitOrProof, "vote": VoteOrProof}


def family_of(proof: _Proof) -> str:
    for name, cls in PROOF_TYPES.items():
        if type(proof) is cls:
            return name
    raise TypeError(f"not a proof: {type(proof).__name__}")


def _challenge(group: Group, tag: str, ctx: ProofContext, elements) -> Scalar:
    enc = group.encode_element
    return group.hash_to_challenge(tag, ctx.encode(), *(enc(x) for x in elements))


def _shift(group: Group, x: Element, bit: int) -> Element:
    """x / g^bit."""
    return group.div(x, group.g) if bit else x


# Schnorr


def schnorr_session(group: Group, x: Scalar, rng: RandomSource):
    w = group.random_scalar(rng)
    a = group.gexp(w)

    def respond(e: Scalar) -> SchnorrProof:
        return SchnorrProof(a, e, (w - x * e) % group.q)

    return (a,), respond


def schnorr_prove(group: Group, x: Scalar, y: Element, ctx: ProofContext, rng: RandomSource) -> SchnorrProof:
    if group.gexp(x) != y:
        raise StatementMismatch("y != g^x")
    (a,), respond = schnorr_session(group, x, rng)
    return respond(_challenge(group, TAG_SCHNORR, ctx, (group.g, y, a)))


def schnorr_verify(group: Group, y: Element, proof: SchnorrProof, ctx: ProofContext | None,
                   challenge: Scalar | None = None) -> bool:
    if not proof._scalars_in_range(group):
        return False
    if challenge is None:
        challenge = _challenge(group, TAG_SCHNORR, ctx, (group.g, y, proof.a))
    if proof.e != challenge % group.q:
        return False
    return proof.a == group.mul(group.gexp(proof.r), group.exp(y, proof.e))


# equality of discrete logs


def eqdlog_session(group: Group, x: Scalar, g1: Element, g2: Element, rng: RandomSource):
    w = group.random_scalar(rng)
    a1, a2 = group.exp(g1, w), group.exp(g2, w)

    def respond(e: Scalar) -> EqDlogProof:
        return EqDlogProof(a1, a2, e, (w - x * e) % group.q)

    return (a1, a2), respond


def eqdlog_prove(group: Group, x: Scalar, g1: Element, y1: Element, g2: Element, y2: Element,
                 ctx: ProofContext, rng: RandomSource) -> EqDlogProof:
    if group.exp(g1, x) != y1 or group.exp(g2, x) != y2:
        raise StatementMismatch("witness does not open both discrete logs")
    (a1, a2), respond = eqdlog_session(group, x, g1, g2, rng)
    return respond(_challenge(group, TAG_EQDLOG, ctx, (g1, y1, g2, y2, a1, a2)))


def eqdlog_verify(group: Group, g1: Element, y1: Element, g2: Element, y2: Element, proof: EqDlogProof,
                  ctx: ProofContext | None, challenge: Scalar | None = None) -> bool:
    if not proof._scalars_in_range(group):
        return False
    if challenge is None:
        challenge = _challenge(group, TAG_EQDLOG, ctx, (g1, y1, g2, y2, proof.a1, proof.a2))
    if proof.e != challenge % group.q:
        return False
    ex, mul = group.exp, group.mul
    return (proof.a1 == mul(ex(g1, proof.r), ex(y1, proof.e))
            and proof.a2 == mul(ex(g2, proof.r), ex(y2, proof.e)))


# commitment OR proof


def _commit_branch(group: Group, Y, beta, C, bit, e, r) -> tuple[Element, Element]:
    ex, mul = group.exp, group.mul
    return mul(ex(Y, r), ex(_shift(group, C, bit), e)), mul(group.gexp(r), ex(beta, e))


def commit_or_session(group: Group, rho: Scalar, v: int, Y: Element, beta: Element, C: Element,
                      rng: RandomSource):
    q = group.q
    e_sim, r_sim = group.random_scalar(rng), group.random_scalar(rng)
    w = group.random_scalar(rng)
    sim = _commit_branch(group, Y, beta, C, 1 - v, e_sim, r_sim)
    real = (group.exp(Y, w), group.gexp(w))
    (a1, b1), (a2, b2) = (real, sim) if v == 0 else (sim, real)

    def respond(e: Scalar) -> CommitOrProof:
        e_real = (e - e_sim) % q
        r_real = (w - rho * e_real) % q
        if v == 0:
            return CommitOrProof(a1, b1, a2, b2, e_real, e_sim, r_real, r_sim)
        return CommitOrProof(a1, b1, a2, b2, e_sim, e_real, r_sim, r_real)

    return (a1, b1, a2, b2), respond


def commit_or_prove(group: Group, rho: Scalar, v: int, Y: Element, beta: Element, C: Element,
                    ctx: ProofContext, rng: RandomSource) -> CommitOrProof:
    if v not in (0, 1):
        raise StatementMismatch("vote must be 0 or 1")
    if group.gexp(rho) != beta or _shift(group, C, v) != group.exp(Y, rho):
        raise StatementMismatch("commitment does not open to the given vote")
    first, respond = commit_or_session(group, rho, v, Y, beta, C, rng)
    return respond(_challenge(group, TAG_COMMIT, ctx, (group.g, Y, beta, C) + first))


def commit_or_verify(group: Group, Y: Element, beta: Element, C: Element, proof: CommitOrProof,
                     ctx: ProofContext | None, challenge: Scalar | None = None) -> bool:
    if not proof._scalars_in_range(group):
        return False
    if challenge is None:
        challenge = _challenge(group, TAG_COMMIT, ctx, (group.g, Y, beta, C) + proof.first_messages)
    if (proof.e1 + proof.e2) % group.q != challenge % group.q:
        return False
    return (_commit_branch(group, Y, beta, C, 0, proof.e1, proof.r1) == (proof.a1, proof.b1)
            and _commit_branch(group, Y, beta, C, 1, proof.e2, proof.r2) == (proof.a2, proof.b2))


# ballot OR proof


def _vote_branch(group: Group, Y, h, beta, y, C, V, bit, e, rx, rrho):
    ex, mul = group.exp, group.mul
    return (
        mul(ex(Y, rrho), ex(_shift(group, C, bit), e)),
        mul(ex(h, rx), ex(_shift(group, V, bit), e)),
        mul(group.gexp(rx), ex(y, e)),
        mul(group.gexp(rrho), ex(beta, e)),
    )


def vote_or_session(group: Group, x: Scalar, rho: Scalar, v: int, Y, h, beta, y, C, V, rng: RandomSource):
    q = group.q
    e_sim = group.random_scalar(rng)
    rx_sim, rrho_sim = group.random_scalar(rng), group.random_scalar(rng)
    w, gamma = group.random_scalar(rng), group.random_scalar(rng)
    sim = _vote_branch(group, Y, h, beta, y, C, V, 1 - v, e_sim, rx_sim, rrho_sim)
    real = (group.exp(Y, gamma), group.exp(h, w), group.gexp(w), group.gexp(gamma))
    first = real + sim if v == 0 else sim + real

    def respond(e: Scalar) -> VoteOrProof:
        e_real = (e - e_sim) % q
        rx, rrho = (w - x * e_real) % q, (gamma - rho * e_real) % q
        if v == 0:
            return VoteOrProof(*first, e_real, e_sim, rx, rrho, rx_sim, rrho_sim)
        return VoteOrProof(*first, e_sim, e_real, rx_sim, rrho_sim, rx, rrho)

    return first, respond


def vote_or_prove(group: Group, x: Scalar, rho: Scalar, v: int, Y: Element, h: Element, beta: Element,
                  y: Element, C: Element, V: Element, ctx: ProofContext, rng: RandomSource) -> VoteOrProof:
    if v not in (0, 1):
        raise StatementMismatch("vote must be 0 or 1")
    if group.gexp(x) != y or group.gexp(rho) != beta:
        raise StatementMismatch("keys do not match the witness")
    if _shift(group, C, v) != group.exp(Y, rho):
        raise StatementMismatch("commitment does not encode the claimed vote")
    if _shift(group, V, v) != group.exp(h, x):
        raise StatementMismatch("ballot does not encode the claimed vote")
    first, respond = vote_or_session(group, x, rho, v, Y, h, beta, y, C, V, rng)
    return respond(_challenge(group, TAG_VOTE, ctx, (group.g, Y, h, beta, y, C, V) + first))


def vote_or_verify(group: Group, Y: Element, h: Element, beta: Element, y: Element, C: Element, V: Element,
                   proof: VoteOrProof, ctx: ProofContext | None, challenge: Scalar | None = None) -> bool:
    if not proof._scalars_in_range(group):
        return False
    if challenge is None:
        challenge = _challenge(group, TAG_VOTE, ctx, (group.g, Y, h, beta, y, C, V) + proof.first_messages)
    if (proof.e1 + proof.e2) % group.q != challenge % group.q:
        return False
    p = proof
    return (_vote_branch(group, Y, h, beta, y, C, V, 0, p.e1, p.r1, p.r2) == (p.a1, p.b1, p.c1, p.d1)
            and _vote_branch(group, Y, h, beta, y, C, V, 1, p.e2, p.r3, p.r4) == (p.a2, p.b2, p.c2, p.d2))


# dispatch by family name, statement as a tuple in the documented order

STATEMENT_ARITY = {"schnorr": 1, "eqdlog": 4, "commit": 3, "vote": 6}


def verify(group: Group, family: str, statement: tuple, proof, ctx: ProofContext | None,
           challenge: Scalar | None = None) -> bool:
    fn: Callable = {"schnorr": schnorr_verify, "eqdlog": eqdlog_verify,
                    "commit": commit_or_verify, "vote": vote_or_verify}[family]
    if not isinstance(proof, PROOF_TYPES[family]):
        return False
    return fn(group, *statement, proof, ctx, challenge=challenge)


def simulate_transcript(group: Group, family: str, statement: tuple, e: Scalar, rng: RandomSource):
    """Accepting transcript for challenge ``e`` without a witness (interactive mode only)."""
    q = group.q
    rand = group.random_scalar
    if family == "schnorr":
        (y,) = statement
        r = rand(rng)
        return SchnorrProof(group.mul(group.gexp(r), group.exp(y, e)), e, r)
    if family == "eqdlog":
        g1, y1, g2, y2 = statement
        r = rand(rng)
        return EqDlogProof(group.mul(group.exp(g1, r), group.exp(y1, e)),
                           group.mul(group.exp(g2, r), group.exp(y2, e)), e, r)
    e1 = rand(rng)
    e2 = (e - e1) % q
    if family == "commit":
        Y, beta, C = statement
        r1, r2 = rand(rng), rand(rng)
        return CommitOrProof(*_commit_branch(group, Y, beta, C, 0, e1, r1),
                             *_commit_branch(group, Y, beta, C, 1, e2, r2), e1, e2, r1, r2)
    if family == "vote":
        r1, r2, r3, r4 = (rand(rng) for _ in range(4))
        return VoteOrProof(*_vote_branch(group, *statement, 0, e1, r1, r2),
                           *_vote_branch(group, *statement, 1, e2, r3, r4), e1, e2, r1, r2, r3, r4)
    raise ValueError(f"unknown proof family {family!r}")


def extract_witness(group: Group, t1, t2):
    """Special-soundness extractor over two accepting transcripts sharing first messages.

    Returns x for schnorr/eqdlog, rho for commit, (x, rho) for vote.
    """
    if type(t1) is not type(t2):
        raise NotExtractable("transcripts are from different proof families")
    family = family_of(t1)
    if t1.first_messages != t2.first_messages:
        raise NotExtractable("first messages differ")
    q = group.q

    def solve(r, r_, e, e_):
        # r = w - k*e  =>  k = (r' - r) / (e - e')
        return (r_ - r) * pow(e - e_, -1, q) % q

    if family in ("schnorr", "eqdlog"):
        if t1.e == t2.e:
            raise NotExtractable("challenges are equal")
        return solve(t1.r, t2.r, t1.e, t2.e)
    if family == "commit":
        if t1.e1 != t2.e1:
            return solve(t1.r1, t2.r1, t1.e1, t2.e1)
        if t1.e2 != t2.e2:
            return solve(t1.r2, t2.r2, t1.e2, t2.e2)
        raise NotExtractable("branch challenges are equal")
    if t1.e1 != t2.e1:
        return solve(t1.r1, t2.r1, t1.e1, t2.e1), solve(t1.r2, t2.r2, t1.e1, t2.e1)
    if t1.e2 != t2.e2:
        return solve(t1.r3, t2.r3, t1.e2, t2.e2), solve(t1.r4, t2.r4, t1.e2, t2.e2)
    raise NotExtractable("branch challenges are equal")

