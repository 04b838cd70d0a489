"""Voter-side algorithms: key setup, commitment, ballot, open tally and abort recovery.

Indices are 1-based roster positions. A voter at position i uses

* Y_i = prod_{j != i} y_j                         (commitment key)
* h_i = prod_{j < i} y_j / prod_{j > i} y_j      (ballot mask)

so that prod_i h_i^{x_i} = 1 and the product of all ballots is g^{sum of votes}.

Recovery after aborts: for an aborted set A each remaining voter j publishes
R_ij = beta_i^{x_j} for every i in A, and a correction
K_j = prod_{i in A} y_i^{s_ij * x_j} with s_ij = +1 if j > i else -1. Both come
with equality-of-discrete-log proofs against y_j. Then

    prod_{j not in A} V_j / prod_{j not in A} K_j = g^{sum_{j not in A} v_j}

because K_j strips from h_j^{x_j} exactly the factors contributed by aborted
keys, and the remaining masks telescope over the reduced roster.
An aborted vote is C_i / prod_{j != i} R_ij. When |A| > 1 the factors
y_k^{rho_i} for other aborters k are unknown to everyone, so those votes are
reported as unrecoverable unless the caller supplies them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from math import isqrt
from typing import Callable, Iterable, Mapping

from .group import Element, Group, MalformedEncoding, RandomSource, Scalar
from .sigma import (
    CommitOrProof,
    EqDlogProof,
    ProofContext,
    SchnorrProof,
    VoteOrProof,
    commit_or_prove,
    commit_or_verify,
    eqdlog_prove,
    eqdlog_verify,
    schnorr_prove,
    schnorr_verify,
    vote_or_prove,
    vote_or_verify,
)


class ProtocolError(Exception):
    pass


class WrongPhase(ProtocolError):
    pass


class IndexOutOfRoster(ProtocolError, IndexError):
    pass


class MissingBallot(ProtocolError):
    def __init__(self, absentees):
        self.absentees = tuple(absentees)
        super().__init__(f"missing ballots from {list(self.absentees)}")


class ProofInvalid(ProtocolError):
    pass


class DlogNotFound(ProtocolError):
    pass


class TallyOutOfRange(ProtocolError):
    """The possible counts do not fit below the group order, so g^count is ambiguous."""


class AbortSetTooLarge(ProtocolError):
    pass


class MissingShare(ProtocolError):
    pass


class MissingCorrection(ProtocolError):
    pass


class NotBinaryResidue(ProtocolError):
    pass


class Unrecoverable(ProtocolError):
    pass


class Phase(enum.IntEnum):
    FRESH = 0
    REGISTERED = 1
    COMMITTED = 2
    VOTED = 3
    DONE = 4


@dataclass
class VoterState:
    index: int
    x: Scalar = field(repr=False)
    vote: int = field(repr=False)
    y: Element = 0
    rho: Scalar | None = field(default=None, repr=False)
    beta: Element | None = None
    C: Element | None = None
    phase: Phase = Phase.FRESH

    def _advance(self, expected: Phase, to: Phase) -> None:
        if self.phase != expected:
            raise WrongPhase(f"voter {self.index} is {self.phase.name}, expected {expected.name}")
        self.phase = to

    def reindexed(self, index: int) -> "VoterState":
        """Fresh registered state for a restarted commit round (same key, same vote)."""
        return VoterState(index=index, x=self.x, vote=self.vote, y=self.y, phase=Phase.REGISTERED)


@dataclass(frozen=True)
class Roster:
    """Registered public keys in position order; ``voter_ids[k]`` is the board identity of position k+1."""

    keys: tuple[Element, ...]
    voter_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.voter_ids:
            object.__setattr__(self, "voter_ids", tuple(range(1, len(self.keys) + 1)))
        if len(self.voter_ids) != len(self.keys):
            raise ValueError("voter_ids and keys differ in length")

    @property
    def n(self) -> int:
        return len(self.keys)

    def y(self, i: int) -> Element:
        if not 1 <= i <= self.n:
            raise IndexOutOfRoster(f"position {i} not in 1..{self.n}")
        return self.keys[i - 1]

    def position_of(self, voter_id: int) -> int:
        try:
            return self.voter_ids.index(voter_id) + 1
        except ValueError:
            raise IndexOutOfRoster(f"voter {voter_id} is not on the roster") from None


# wire messages


def _take(data: bytes, pos: int, n: int) -> tuple[bytes, int]:
    if pos + n > len(data):
        raise MalformedEncoding("truncated message")
    return data[pos:pos + n], pos + n


def _take_u32(data: bytes, pos: int) -> tuple[int, int]:
    raw, pos = _take(data, pos, 4)
    return int.from_bytes(raw, "big"), pos


def _take_element(group: Group, data: bytes, pos: int) -> tuple[Element, int]:
    raw, pos = _take(data, pos, group.element_size)
    return group.decode_element(raw), pos


def _take_proof(group: Group, cls, data: bytes, pos: int):
    raw, pos = _take(data, pos, cls.size(group))
    return cls.from_bytes(group, raw), pos


def _done(data: bytes, pos: int) -> None:
    if pos != len(data):
        raise MalformedEncoding(f"{len(data) - pos} trailing bytes")


@dataclass(frozen=True)
class RegistrationMsg:
    y: Element
    proof: SchnorrProof

    def to_bytes(self, group: Group) -> bytes:
        return group.encode_element(self.y) + self.proof.to_bytes(group)

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "RegistrationMsg":
        y, pos = _take_element(group, data, 0)
        proof, pos = _take_proof(group, SchnorrProof, data, pos)
        _done(data, pos)
        return cls(y, proof)


@dataclass(frozen=True)
class CommitMsg:
    beta: Element
    C: Element
    proof: CommitOrProof

    def to_bytes(self, group: Group) -> bytes:
        return group.encode_element(self.beta) + group.encode_element(self.C) + self.proof.to_bytes(group)

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "CommitMsg":
        beta, pos = _take_element(group, data, 0)
        C, pos = _take_element(group, data, pos)
        proof, pos = _take_proof(group, CommitOrProof, data, pos)
        _done(data, pos)
        return cls(beta, C, proof)


@dataclass(frozen=True)
class VoteMsg:
    V: Element
    proof: VoteOrProof

    def to_bytes(self, group: Group) -> bytes:
        return group.encode_element(self.V) + self.proof.to_bytes(group)

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "VoteMsg":
        V, pos = _take_element(group, data, 0)
        proof, pos = _take_proof(group, VoteOrProof, data, pos)
        _done(data, pos)
        return cls(V, proof)


@dataclass(frozen=True)
class RecoveryMsg:
    """Shares of remaining voter ``sender`` for the aborted positions ``aborted``."""

    sender: int
    aborted: tuple[int, ...]
    shares: tuple[tuple[Element, EqDlogProof], ...]
    K: Element
    K_proof: EqDlogProof

    def to_bytes(self, group: Group) -> bytes:
        out = self.sender.to_bytes(4, "big") + len(self.aborted).to_bytes(4, "big")
        out += b"".join(i.to_bytes(4, "big") for i in self.aborted)
        for R, pf in self.shares:
            out += group.encode_element(R) + pf.to_bytes(group)
        return out + group.encode_element(self.K) + self.K_proof.to_bytes(group)

    @classmethod
    def from_bytes(cls, group: Group, data: bytes) -> "RecoveryMsg":
        sender, pos = _take_u32(data, 0)
        count, pos = _take_u32(data, pos)
        if count * 4 > len(data):
            raise MalformedEncoding("abort set longer than message")
        aborted = []
        for _ in range(count):
            i, pos = _take_u32(data, pos)
            aborted.append(i)
        shares = []
        for _ in range(count):
            R, pos = _take_element(group, data, pos)
            pf, pos = _take_proof(group, EqDlogProof, data, pos)
            shares.append((R, pf))
        K, pos = _take_element(group, data, pos)
        K_proof, pos = _take_proof(group, EqDlogProof, data, pos)
        _done(data, pos)
        return cls(sender, tuple(aborted), tuple(shares), K, K_proof)

    def share_for(self, i: int) -> Element:
        return self.shares[self.aborted.index(i)][0]


@dataclass(frozen=True)
class TallyResult:
    count: int
    n_counted: int
    recovered_votes: dict[int, int] = field(default_factory=dict)
    unrecoverable: tuple[int, ...] = ()


# aggregate keys


def aggregate_Y(group: Group, i: int, roster: Roster) -> Element:
    roster.y(i)
    return group.prod(y for k, y in enumerate(roster.keys, 1) if k != i)


def compute_h(group: Group, i: int, roster: Roster) -> Element:
    roster.y(i)
    num = group.prod(roster.keys[: i - 1])
    den = group.prod(roster.keys[i:])
    return group.div(num, den)


def correction_base(group: Group, j: int, aborted: Iterable[int], roster: Roster) -> Element:
    """prod_{i in A} y_i^{+1 if j > i else -1}."""
    num = group.prod(roster.y(i) for i in aborted if i < j)
    den = group.prod(roster.y(i) for i in aborted if i > j)
    return group.div(num, den)


# phases


def keygen(group: Group, i: int, ctx: ProofContext, rng: RandomSource, vote: int = 0):
    if vote not in (0, 1):
        raise ValueError("vote must be 0 or 1")
    x = group.random_scalar(rng, nonzero=True)
    y = group.gexp(x)
    state = VoterState(index=i, x=x, vote=vote, y=y)
    msg = RegistrationMsg(y, schnorr_prove(group, x, y, ctx, rng))
    state._advance(Phase.FRESH, Phase.REGISTERED)
    return state, msg


def verify_registration(group: Group, msg: RegistrationMsg, ctx: ProofContext) -> bool:
    return schnorr_verify(group, msg.y, msg.proof, ctx)


def commit(group: Group, state: VoterState, Y: Element, ctx: ProofContext, rng: RandomSource) -> CommitMsg:
    if state.phase != Phase.REGISTERED:
        raise WrongPhase(f"voter {state.index} is {state.phase.name}, expected REGISTERED")
    rho = group.random_scalar(rng)
    beta = group.gexp(rho)
    C = group.mul(group.gexp(state.vote), group.exp(Y, rho))
    proof = commit_or_prove(group, rho, state.vote, Y, beta, C, ctx, rng)
    state.rho, state.beta, state.C = rho, beta, C
    state._advance(Phase.REGISTERED, Phase.COMMITTED)
    return CommitMsg(beta, C, proof)


def verify_commit(group: Group, msg: CommitMsg, Y: Element, ctx: ProofContext) -> bool:
    return commit_or_verify(group, Y, msg.beta, msg.C, msg.proof, ctx)


def cast_vote(group: Group, state: VoterState, Y: Element, h: Element, ctx: ProofContext,
              rng: RandomSource, vote: int | None = None) -> VoteMsg:
    """Encrypt the committed vote. Passing a different ``vote`` raises StatementMismatch."""
    if state.phase != Phase.COMMITTED:
        raise WrongPhase(f"voter {state.index} is {state.phase.name}, expected COMMITTED")
    v = state.vote if vote is None else vote
    V = group.mul(group.exp(h, state.x), group.gexp(v))
    proof = vote_or_prove(group, state.x, state.rho, v, Y, h, state.beta, state.y, state.C, V, ctx, rng)
    state._advance(Phase.COMMITTED, Phase.VOTED)
    return VoteMsg(V, proof)


def verify_vote(group: Group, msg: VoteMsg, Y: Element, h: Element, y: Element, commitment: CommitMsg,
                ctx: ProofContext) -> bool:
    return vote_or_verify(group, Y, h, commitment.beta, y, commitment.C, msg.V, msg.proof, ctx)


def dlog_small(group: Group, target: Element, max_value: int) -> int:
    """Smallest m in [0, max_value] with g^m = target, by baby-step giant-step.

    Baby steps store target*g^j, giant steps walk g^(k*s); a hit gives
    m = k*s - j. Uses only multiplications, no inversion.
    """
    if max_value < 0:
        raise ValueError("max_value must be >= 0")
    if target == group.identity:
        return 0
    s = isqrt(max_value) + 1
    table: dict[Element, int] = {}
    cur = target
    for j in range(s):
        table[cur] = j  # later (larger) j wins: smaller m for the same k
        cur = group.mul(cur, group.g)
    step = group.gexp(s) if s > 64 else group.prod([group.g] * s)
    gamma = 1
    for k in range(1, s + 2):
        gamma = group.mul(gamma, step)
        j = table.get(gamma)
        if j is not None:
            found = k * s - j
            if found <= max_value:
                return found
            break
    raise DlogNotFound(f"no exponent in [0, {max_value}]")


def _check_range(group: Group, max_count: int) -> None:
    if max_count >= group.q:
        raise TallyOutOfRange(f"{max_count} possible votes do not fit below group order {group.q}")


def tally(group: Group, ballots: Mapping[int, VoteMsg], n: int,
          check: Callable[[int, VoteMsg], bool] | None = None) -> TallyResult:
    """Open tally over one ballot per position 1..n.

    ``check(i, msg)`` re-verifies each ballot before it is counted.
    """
    absent = [i for i in range(1, n + 1) if i not in ballots]
    if absent:
        raise MissingBallot(absent)
    _check_range(group, n)
    if check is not None:
        for i in range(1, n + 1):
            if not check(i, ballots[i]):
                raise ProofInvalid(f"ballot {i} does not verify")
    total = group.prod(ballots[i].V for i in range(1, n + 1))
    return TallyResult(dlog_small(group, total, n), n)


def recovery_share(group: Group, state: VoterState, aborted: Iterable[int], roster: Roster,
                   betas: Mapping[int, Element], ctx: ProofContext, rng: RandomSource) -> RecoveryMsg:
    A = tuple(sorted(set(aborted)))
    j = state.index
    if j in A:
        raise ValueError(f"voter {j} is in the aborted set")
    if not A:
        raise ValueError("nothing to recover")
    if len(A) > roster.n - 2:
        raise AbortSetTooLarge(f"{len(A)} aborts among {roster.n} voters")
    if state.phase != Phase.VOTED:
        raise WrongPhase(f"voter {j} is {state.phase.name}, expected VOTED")
    g, x, y = group.g, state.x, state.y
    shares = []
    for i in A:
        R = group.exp(betas[i], x)
        shares.append((R, eqdlog_prove(group, x, g, y, betas[i], R, ctx, rng)))
    B = correction_base(group, j, A, roster)
    K = group.exp(B, x)
    K_proof = eqdlog_prove(group, x, g, y, B, K, ctx, rng)
    state._advance(Phase.VOTED, Phase.DONE)
    return RecoveryMsg(j, A, tuple(shares), K, K_proof)


def verify_recovery(group: Group, msg: RecoveryMsg, roster: Roster, betas: Mapping[int, Element],
                    ctx: ProofContext) -> bool:
    A = msg.aborted
    if msg.sender in A or list(A) != sorted(set(A)) or len(msg.shares) != len(A):
        return False
    try:
        y = roster.y(msg.sender)
        B = correction_base(group, msg.sender, A, roster)
    except IndexOutOfRoster:
        return False
    g = group.g
    for i, (R, pf) in zip(A, msg.shares):
        if i not in betas or not eqdlog_verify(group, g, y, betas[i], R, pf, ctx):
            return False
    return eqdlog_verify(group, g, y, B, msg.K, msg.K_proof, ctx)


def recover_vote(group: Group, i: int, C_i: Element, shares: Mapping[int, Element], n: int,
                 aborted: Iterable[int], cross_terms: Mapping[int, Element] | None = None) -> int:
    """Open aborted voter i's commitment from the shares R_ij of every j outside the aborted set.

    ``cross_terms[k]`` = y_k^{rho_i} for the other aborters k; nobody in the
    protocol can compute these, so without them multi-abort raises Unrecoverable.
    """
    A = set(aborted) | {i}
    others = sorted(A - {i})
    cross_terms = cross_terms or {}
    missing_cross = [k for k in others if k not in cross_terms]
    if missing_cross:
        raise Unrecoverable(f"factors for aborters {missing_cross} are unavailable")
    missing = [j for j in range(1, n + 1) if j not in A and j not in shares]
    if missing:
        raise MissingShare(f"no share from {missing}")
    mask = group.prod([shares[j] for j in range(1, n + 1) if j not in A] + [cross_terms[k] for k in others])
    residue = group.div(C_i, mask)
    if residue == group.identity:
        return 0
    if residue == group.g:
        return 1
    raise NotBinaryResidue(f"commitment of {i} opens to neither g^0 nor g^1")


def recover_tally(group: Group, ballots: Mapping[int, VoteMsg], corrections: Mapping[int, Element],
                  recovered: Mapping[int, int], unrecoverable: Iterable[int] = (),
                  check: Callable[[int, VoteMsg], bool] | None = None) -> TallyResult:
    """Count the remaining ballots (corrected for aborted masks) plus recovered votes."""
    missing = [j for j in ballots if j not in corrections]
    if missing:
        raise MissingCorrection(f"no correction from {missing}")
    _check_range(group, len(ballots) + len(recovered))
    if check is not None:
        for j, msg in ballots.items():
            if not check(j, msg):
                raise ProofInvalid(f"ballot {j} does not verify")
    masked = group.prod(msg.V for msg in ballots.values())
    unmask = group.prod(corrections[j] for j in ballots)
    partial = dlog_small(group, group.div(masked, unmask), len(ballots))
    return TallyResult(
        count=partial + sum(recovered.values()),
        n_counted=len(ballots) + len(recovered),
        recovered_votes=dict(recovered),
        unrecoverable=tuple(sorted(unrecoverable)),
    )
