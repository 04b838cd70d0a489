"""Drive a whole election on a board, with optional misbehaving voters."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Iterable

from . import protocol as P
from .board import ADMITTED, Board, PhasePlan
from .group import Group, get_group
from .sigma import StatementMismatch

MISBEHAVIORS = ("InvalidProof", "MismatchedVote", "ReplayEntry", "SkipCommit")
PHASED = ("InvalidProof", "ReplayEntry")


class ScenarioInvalid(ValueError):
    pass


@dataclass(frozen=True)
class Misbehavior:
    kind: str
    voter: int
    phase: str | None = None

    @classmethod
    def parse(cls, obj) -> "Misbehavior":
        """Accepts ``{"kind", "voter", "phase"}`` or the compact text ``Kind(phase,voter)`` / ``Kind(voter)``."""
        if isinstance(obj, Misbehavior):
            return obj
        if isinstance(obj, dict):
            return cls(obj["kind"], int(obj["voter"]), obj.get("phase"))
        text = str(obj).replace(" ", "")
        if not text.endswith(")") or "(" not in text:
            raise ScenarioInvalid(f"cannot parse misbehavior {obj!r}")
        kind, args = text[:-1].split("(", 1)
        parts = args.split(",")
        if len(parts) == 2:
            return cls(kind, int(parts[1]), parts[0])
        return cls(kind, int(parts[0]))

    def to_json(self) -> dict:
        return {"kind": self.kind, "voter": self.voter, "phase": self.phase}


@dataclass
class Scenario:
    n: int
    votes: list[int]
    abort_set: list[int] = field(default_factory=list)
    misbehaviors: list[Misbehavior] = field(default_factory=list)
    seed: int = 0
    plan: PhasePlan | None = None
    group: str | None = None
    block_every: int | None = None

    def __post_init__(self):
        self.votes = list(self.votes)
        self.abort_set = sorted(set(self.abort_set))
        self.misbehaviors = [Misbehavior.parse(m) for m in self.misbehaviors]

    @property
    def phase_plan(self) -> PhasePlan:
        return self.plan or PhasePlan.uniform(self.n + 2)

    @property
    def election_id(self) -> bytes:
        return hashlib.sha256(f"ST/v1/election/{self.seed}".encode()).digest()[:16]

    def dropouts(self) -> set[int]:
        """Voters that never reach the ballot phase on the first commit round."""
        out = set()
        for m in self.misbehaviors:
            if m.kind == "SkipCommit" or (m.kind == "InvalidProof" and m.phase in ("register", "commit")):
                out.add(m.voter)
        return out

    def ballot_failures(self) -> set[int]:
        out = set(self.abort_set)
        for m in self.misbehaviors:
            if m.kind == "MismatchedVote" or (m.kind == "InvalidProof" and m.phase == "vote"):
                out.add(m.voter)
        return out

    def validate(self, group: Group | None = None) -> None:
        if self.n < 2:
            raise ScenarioInvalid("need at least two voters")
        if len(self.votes) != self.n:
            raise ScenarioInvalid(f"{len(self.votes)} votes for {self.n} voters")
        if any(v not in (0, 1) for v in self.votes):
            raise ScenarioInvalid("votes must be 0 or 1")
        voters = range(1, self.n + 1)
        if any(i not in voters for i in self.abort_set):
            raise ScenarioInvalid("abort_set names a voter outside 1..n")
        if len(self.abort_set) > self.n - 2:
            raise ScenarioInvalid(f"at most n-2 = {self.n - 2} voters may abort")
        for m in self.misbehaviors:
            if m.kind not in MISBEHAVIORS:
                raise ScenarioInvalid(f"unknown misbehavior {m.kind!r}")
            if m.voter not in voters:
                raise ScenarioInvalid(f"misbehavior targets voter {m.voter} outside 1..n")
            if m.kind in PHASED and m.phase not in ("register", "commit", "vote", "recover"):
                raise ScenarioInvalid(f"{m.kind} needs a phase")
        for m in self.misbehaviors:
            if m.voter in self.abort_set and (m.kind == "MismatchedVote" or m.phase in ("vote", "recover")):
                raise ScenarioInvalid(f"voter {m.voter} aborts and cannot also {m.kind} after committing")
        drop = self.dropouts()
        if drop & self.ballot_failures():
            raise ScenarioInvalid("a voter cannot both drop out before voting and fail at the ballot")
        remaining = self.n - len(drop)
        if remaining < 2:
            raise ScenarioInvalid("fewer than two voters would remain")
        if len(self.ballot_failures()) > remaining - 2:
            raise ScenarioInvalid(f"ballot failures exceed remaining voters minus two ({remaining - 2})")
        if group is not None and self.n >= group.q:
            raise ScenarioInvalid(f"n = {self.n} votes cannot be told apart in a group of order {group.q}")
        if self.block_every is not None and self.block_every < 1:
            raise ScenarioInvalid("block_every must be >= 1")

    def to_json(self) -> dict:
        return {"n": self.n, "votes": self.votes, "abort_set": self.abort_set,
                "misbehaviors": [m.to_json() for m in self.misbehaviors], "seed": self.seed,
                "plan": None if self.plan is None else self.plan.to_json(), "group": self.group,
                "block_every": self.block_every}

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        try:
            plan = obj.get("plan")
            return cls(
                n=int(obj["n"]), votes=[int(v) for v in obj["votes"]],
                abort_set=[int(i) for i in obj.get("abort_set", [])],
                misbehaviors=list(obj.get("misbehaviors", [])), seed=int(obj.get("seed", 0)),
                plan=PhasePlan(**plan) if plan else None, group=obj.get("group"),
                block_every=obj.get("block_every"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioInvalid):
                raise
            raise ScenarioInvalid(f"bad scenario: {exc}") from exc


@dataclass
class ElectionReport:
    count: int | None
    n_counted: int
    recovered_votes: dict[int, int]
    verdicts: list[dict]
    restarted_commit_rounds: int
    unrecoverable: list[int]
    counted_voters: list[int] = field(default_factory=list)
    excluded: list[int] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    failed: str | None = None
    board: Board | None = field(default=None, repr=False, compare=False)

    @property
    def rejected(self) -> list[dict]:
        return [v for v in self.verdicts if v["verdict"] != ADMITTED]

    def to_json(self) -> dict:
        return {
            "count": self.count,
            "n_counted": self.n_counted,
            "recovered_votes": {str(k): v for k, v in self.recovered_votes.items()},
            "unrecoverable": self.unrecoverable,
            "counted_voters": self.counted_voters,
            "excluded": self.excluded,
            "restarted_commit_rounds": self.restarted_commit_rounds,
            "rejected": self.rejected,
            "events": self.events,
            "failed": self.failed,
            "verdicts": self.verdicts,
        }


def voter_rng(seed: int, voter: int) -> random.Random:
    """Per-voter stream, independent of scheduling order. Simulation only, not a CSPRNG."""
    digest = hashlib.sha256(f"ST/v1/rng/{seed}".encode() + voter.to_bytes(4, "big")).digest()
    return random.Random(int.from_bytes(digest, "big"))


def corrupt(group: Group, payload: bytes) -> bytes:
    """Bump the trailing response scalar by one, which breaks its verification equation."""
    w = group.scalar_size
    r = int.from_bytes(payload[-w:], "big")
    return payload[:-w] + group.encode_scalar((r + 1) % group.q)


def oracle_tally(votes: Iterable[int], counted: Iterable[int] | None = None) -> int:
    """Plaintext sum over the counted voter ids (all voters when ``counted`` is None)."""
    votes = list(votes)
    if counted is None:
        return sum(votes)
    return sum(votes[i - 1] for i in counted)


def run(scenario: Scenario) -> ElectionReport:
    group = get_group(scenario.group)
    scenario.validate(group)
    plan = scenario.phase_plan
    board = Board(group, scenario.election_id, scenario.n, plan, scenario.block_every)
    events: list[str] = []

    def has(kind: str, voter: int, phase: str | None = None) -> bool:
        return any(m.kind == kind and m.voter == voter and (phase is None or m.phase == phase)
                   for m in scenario.misbehaviors)

    def post(voter: int, phase: str, payload: bytes) -> None:
        if has("InvalidProof", voter, phase):
            entry = board.post(voter, phase, corrupt(group, payload))
            events.append(f"voter {voter}: invalid {phase} proof -> {entry.reason}")
            if phase != "recover":
                return
        board.post(voter, phase, payload)
        if has("ReplayEntry", voter, phase):
            entry = board.post(voter, phase, payload)
            events.append(f"voter {voter}: replayed {phase} entry -> {entry.reason}")

    rngs = {v: voter_rng(scenario.seed, v) for v in range(1, scenario.n + 1)}
    states: dict[int, P.VoterState] = {}

    for v in range(1, scenario.n + 1):
        state, msg = P.keygen(group, v, board.context(v, "register"), rngs[v], vote=scenario.votes[v - 1])
        states[v] = state
        post(v, "register", msg.to_bytes(group))
    board.advance_to(plan.register_end)

    first = True
    while True:
        roster = board.roster
        for pos, vid in enumerate(roster.voter_ids, 1):
            if not first:
                states[vid] = states[vid].reindexed(pos)
            else:
                states[vid].index = pos
            if first and has("SkipCommit", vid):
                events.append(f"voter {vid}: skipped commit")
                continue
            Y = P.aggregate_Y(group, pos, roster)
            msg = P.commit(group, states[vid], Y, board.context(vid, "commit"), rngs[vid])
            post(vid, "commit", msg.to_bytes(group))
        before = board.round
        board.advance_to(board.plan.commit_end)
        if board.failed or board.round == before:
            break
        events.append(f"commit round restarted without voters {sorted(board.excluded)}")
        first = False

    if board.failed:
        return _report(board, events)

    roster = board.roster
    for pos, vid in enumerate(roster.voter_ids, 1):
        if vid in scenario.abort_set:
            events.append(f"voter {vid}: aborted after commit")
            continue
        state = states[vid]
        Y, h = P.aggregate_Y(group, pos, roster), P.compute_h(group, pos, roster)
        ctx = board.context(vid, "vote")
        if has("MismatchedVote", vid):
            try:
                P.cast_vote(group, state, Y, h, ctx, rngs[vid], vote=1 - state.vote)
                events.append(f"voter {vid}: prover accepted a mismatched vote")
            except StatementMismatch:
                events.append(f"voter {vid}: prover refused mismatched vote (StatementMismatch)")
            honest = P.cast_vote(group, state, Y, h, ctx, rngs[vid])
            flip = group.mul if state.vote == 0 else group.div
            forged = P.VoteMsg(flip(honest.V, group.g), honest.proof)
            entry = board.post(vid, "vote", forged.to_bytes(group))
            events.append(f"voter {vid}: posted ballot for the other vote -> {entry.reason}")
            continue
        msg = P.cast_vote(group, state, Y, h, ctx, rngs[vid])
        post(vid, "vote", msg.to_bytes(group))
    board.advance_to(board.plan.vote_end)

    A = board.aborted()
    recover_mis = [m for m in scenario.misbehaviors if m.phase == "recover"]
    if A:
        betas = board.betas()
        for pos, vid in enumerate(roster.voter_ids, 1):
            if pos in A:
                continue
            msg = P.recovery_share(group, states[vid], A, roster, betas, board.context(vid, "recover"), rngs[vid])
            post(vid, "recover", msg.to_bytes(group))
    elif recover_mis:
        for m in recover_mis:
            entry = board.post(m.voter, "recover", b"")
            events.append(f"voter {m.voter}: {m.kind} in recover phase -> {entry.reason}")
    if A or recover_mis:
        board.advance_to(board.plan.recover_end)
    return _report(board, events)


def _report(board: Board, events: list[str]) -> ElectionReport:
    if board.current_height() == 0 or board._pending:
        board.advance_block()
    verdicts = [{"voter": e.voter, "phase": e.phase, "round": e.round, "height": e.height,
                 "verdict": e.verdict, "reason": e.reason} for e in board.entries]
    if board.failed:
        return ElectionReport(None, 0, {}, verdicts, board.round, [], excluded=sorted(board.excluded),
                              events=events, failed=board.failed, board=board)
    result = board.outcome()
    ids = board.roster.voter_ids
    unrec = list(result.unrecoverable)
    counted = [v for v in ids if v not in unrec]
    return ElectionReport(
        count=result.count,
        n_counted=result.n_counted,
        recovered_votes=dict(result.recovered_votes),
        verdicts=verdicts,
        restarted_commit_rounds=board.round,
        unrecoverable=unrec,
        counted_voters=counted,
        excluded=sorted(board.excluded),
        events=events,
        board=board,
    )
