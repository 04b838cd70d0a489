"""Simulated blockchain bulletin board.

The board is the single writer for an election. Voters ``post`` serialized
protocol messages; each post is checked against the phase window (measured in
block height), the one-entry-per-(voter, phase, round) rule and the message's
proof, and recorded with its verdict either way. ``advance_block`` seals the
pending entries into a hash-chained block.

Heights: ``current_height()`` is the number of sealed blocks. Pending entries
belong to block ``current_height() + 1`` and a phase accepts them while that
height lies in its window::

    register  (0, register_end]
    commit    (register_end, commit_end]
    vote      (commit_end, vote_end]
    recover   (vote_end, recover_end]

If a roster member has no admitted commitment when block ``commit_end`` is
sealed, the board excludes the missing voters, opens a new commit round over
the reduced roster with every later window shifted by the commit-window
length, and records a ``restart`` system entry (voter 0) in the next block.

Transcript format (JSON Lines, keys in this order)::

    {"type": "header", "version", "group": {name, p, q, g}, "election_id",
     "voters", "plan": {register_end, commit_end, vote_end, recover_end}, "block_every"}
    {"type": "entry", "height", "voter", "phase", "round", "payload", "verdict", "reason"}
    {"type": "seal", "height", "entries", "prev", "digest"}

Digests: genesis = SHA-256(lp("ST/v1/genesis") || lp(header JSON, sorted keys,
compact separators)); block = SHA-256(prev || lp(entry_1) || ... ) with the
entry bytes from :meth:`Entry.canonical_bytes`. ``lp`` is a 4-byte big-endian
length prefix.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from typing import Iterable

from . import protocol as P
from .group import Group, GroupError
from .protocol import CommitMsg, RecoveryMsg, RegistrationMsg, Roster, TallyResult, VoteMsg
from .sigma import ProofContext

VERSION = "ST/v1"
PHASES = ("register", "commit", "vote", "recover")
RESTART = "restart"

ADMITTED = "admitted"
REJECTED = "rejected"


class ChainBroken(Exception):
    pass


def _lp(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


@dataclass(frozen=True)
class PhasePlan:
    register_end: int
    commit_end: int
    vote_end: int
    recover_end: int

    def __post_init__(self):
        ends = (self.register_end, self.commit_end, self.vote_end, self.recover_end)
        if not 0 < ends[0] < ends[1] < ends[2] < ends[3]:
            raise ValueError(f"phase ends must be positive and strictly increasing, got {ends}")

    @classmethod
    def uniform(cls, length: int) -> "PhasePlan":
        return cls(length, 2 * length, 3 * length, 4 * length)

    def window(self, phase: str) -> tuple[int, int]:
        """(exclusive start, inclusive end) in block height."""
        ends = {"register": (0, self.register_end), "commit": (self.register_end, self.commit_end),
                "vote": (self.commit_end, self.vote_end), "recover": (self.vote_end, self.recover_end)}
        return ends[phase]

    def is_open(self, phase: str, height: int) -> bool:
        lo, hi = self.window(phase)
        return lo < height <= hi

    def restarted(self) -> "PhasePlan":
        d = self.commit_end - self.register_end
        return PhasePlan(self.commit_end, self.commit_end + d, self.vote_end + d, self.recover_end + d)

    def to_json(self) -> dict:
        return {"register_end": self.register_end, "commit_end": self.commit_end,
                "vote_end": self.vote_end, "recover_end": self.recover_end}


@dataclass(frozen=True)
class Entry:
    voter: int
    phase: str
    round: int
    payload: bytes
    verdict: str
    reason: str | None = None
    height: int = 0

    @property
    def admitted(self) -> bool:
        return self.verdict == ADMITTED

    def canonical_bytes(self) -> bytes:
        return (
            self.height.to_bytes(8, "big")
            + self.voter.to_bytes(4, "big")
            + _lp(self.phase.encode())
            + self.round.to_bytes(4, "big")
            + _lp(self.payload)
            + _lp(self.verdict.encode())
            + _lp((self.reason or "").encode())
        )

    def to_json(self) -> dict:
        return {"type": "entry", "height": self.height, "voter": self.voter, "phase": self.phase,
                "round": self.round, "payload": self.payload.hex(), "verdict": self.verdict,
                "reason": self.reason}


@dataclass(frozen=True)
class Block:
    height: int
    entries: tuple[Entry, ...]
    prev_digest: bytes
    digest: bytes

    def to_json(self) -> dict:
        return {"type": "seal", "height": self.height, "entries": len(self.entries),
                "prev": self.prev_digest.hex(), "digest": self.digest.hex()}


def block_digest(prev: bytes, entries: Iterable[Entry]) -> bytes:
    h = hashlib.sha256(prev)
    for e in entries:
        h.update(_lp(e.canonical_bytes()))
    return h.digest()


class Board:
    def __init__(self, group: Group, election_id: bytes, voters: int, plan: PhasePlan,
                 block_every: int | None = None):
        if voters < 2:
            raise ValueError("an election needs at least two eligible voters")
        if block_every is not None and block_every < 1:
            raise ValueError("block_every must be >= 1")
        self.group = group
        self.election_id = election_id
        self.voters = voters
        self.initial_plan = plan
        self.plan = plan
        self.block_every = block_every
        self.round = 0
        self.failed: str | None = None
        self.excluded: set[int] = set()
        self.blocks: list[Block] = []
        self.entries: list[Entry] = []
        self._pending: list[Entry] = []
        self._lock = threading.RLock()
        self.registrations: dict[int, RegistrationMsg] = {}
        self.commits: dict[int, CommitMsg] = {}
        self.votes: dict[int, VoteMsg] = {}
        self.recoveries: dict[int, RecoveryMsg] = {}
        self._roster: Roster | None = None
        self._agg: dict[int, tuple[int, int]] = {}
        self.genesis = hashlib.sha256(
            _lp(b"ST/v1/genesis") + _lp(json.dumps(self.header(), sort_keys=True, separators=(",", ":")).encode())
        ).digest()

    def header(self) -> dict:
        return {"type": "header", "version": VERSION, "group": self.group.to_json(),
                "election_id": self.election_id.hex(), "voters": self.voters,
                "plan": self.initial_plan.to_json(), "block_every": self.block_every}

    # clock

    def current_height(self) -> int:
        return len(self.blocks)

    @property
    def pending_height(self) -> int:
        return len(self.blocks) + 1

    @property
    def head(self) -> bytes:
        return self.blocks[-1].digest if self.blocks else self.genesis

    def advance_block(self) -> int:
        with self._lock:
            entries = tuple(self._pending)
            self._pending = []
            self.blocks.append(Block(self.pending_height, entries, self.head, block_digest(self.head, entries)))
            if self.current_height() == self.plan.commit_end and not self.failed:
                self._check_commit_round()
            return self.current_height()

    def advance_to(self, height: int) -> int:
        while self.current_height() < height:
            self.advance_block()
        return self.current_height()

    def _check_commit_round(self) -> None:
        roster = self.roster
        missing = [vid for vid in roster.voter_ids if vid not in self.commits]
        if not missing:
            if roster.n < 2:
                self.failed = "fewer than two registered voters"
                self._record(0, RESTART, json.dumps({"failed": self.failed}).encode(), ADMITTED)
            return
        self.excluded.update(missing)
        self.round += 1
        self.commits.clear()
        self._roster = None
        self._agg.clear()
        self.plan = self.plan.restarted()
        note = {"excluded": sorted(self.excluded), "plan": self.plan.to_json()}
        if len(self.roster.keys) < 2:
            self.failed = "fewer than two voters left after exclusions"
            note["failed"] = self.failed
        self._record(0, RESTART, json.dumps(note, separators=(",", ":")).encode(), ADMITTED)

    # roster and aggregates

    @property
    def roster(self) -> Roster:
        if self._roster is None:
            ids = tuple(sorted(v for v in self.registrations if v not in self.excluded))
            self._roster = Roster(tuple(self.registrations[v].y for v in ids), ids)
        return self._roster

    def _aggregates(self, pos: int) -> tuple[int, int]:
        if pos not in self._agg:
            self._agg[pos] = (P.aggregate_Y(self.group, pos, self.roster), P.compute_h(self.group, pos, self.roster))
        return self._agg[pos]

    def context(self, voter: int, phase: str) -> ProofContext:
        return ProofContext(self.election_id, voter, f"{phase}/{self.round}")

    def aborted(self) -> tuple[int, ...]:
        """Roster positions that committed this round but have no admitted ballot."""
        return tuple(k for k, vid in enumerate(self.roster.voter_ids, 1)
                     if vid in self.commits and vid not in self.votes)

    def betas(self) -> dict[int, int]:
        return {k: self.commits[vid].beta for k, vid in enumerate(self.roster.voter_ids, 1) if vid in self.commits}

    # posting

    def _record(self, voter: int, phase: str, payload: bytes, verdict: str, reason: str | None = None) -> Entry:
        entry = Entry(voter, phase, self.round, payload, verdict, reason, self.pending_height)
        self._pending.append(entry)
        self.entries.append(entry)
        return entry

    def post(self, voter: int, phase: str, payload: bytes) -> Entry:
        """Validate and record one entry. Rejections are recorded too."""
        with self._lock:
            reason = self._admission(voter, phase, payload)
            entry = self._record(voter, phase, payload, REJECTED if reason else ADMITTED, reason)
            if self.block_every and len(self._pending) >= self.block_every:
                self.advance_block()
            return entry

    def _admission(self, voter: int, phase: str, payload: bytes) -> str | None:
        if phase not in PHASES:
            return "UnknownPhase"
        if self.failed:
            return "ElectionFailed"
        if not 1 <= voter <= self.voters:
            return "NotEligible"
        if not self.plan.is_open(phase, self.pending_height):
            return "PhaseClosed"
        store = {"register": self.registrations, "commit": self.commits,
                 "vote": self.votes, "recover": self.recoveries}[phase]
        if voter in store:
            return "Duplicate"
        try:
            reason, msg = getattr(self, f"_admit_{phase}")(voter, payload)
        except (GroupError, P.ProtocolError, ValueError):
            return "Malformed"
        if reason is None:
            store[voter] = msg
        return reason

    def _admit_register(self, voter: int, payload: bytes):
        msg = RegistrationMsg.from_bytes(self.group, payload)
        if not P.verify_registration(self.group, msg, self.context(voter, "register")):
            return "ProofInvalid", None
        return None, msg

    def _admit_commit(self, voter: int, payload: bytes):
        if voter not in self.roster.voter_ids:
            return "NotInRoster", None
        msg = CommitMsg.from_bytes(self.group, payload)
        Y, _ = self._aggregates(self.roster.position_of(voter))
        if not P.verify_commit(self.group, msg, Y, self.context(voter, "commit")):
            return "ProofInvalid", None
        return None, msg

    def _admit_vote(self, voter: int, payload: bytes):
        if voter not in self.roster.voter_ids:
            return "NotInRoster", None
        if voter not in self.commits:
            return "NoCommitment", None
        msg = VoteMsg.from_bytes(self.group, payload)
        if not self._vote_ok(voter, msg):
            return "ProofInvalid", None
        return None, msg

    def _vote_ok(self, voter: int, msg: VoteMsg) -> bool:
        pos = self.roster.position_of(voter)
        Y, h = self._aggregates(pos)
        return P.verify_vote(self.group, msg, Y, h, self.roster.y(pos), self.commits[voter],
                             self.context(voter, "vote"))

    def _admit_recover(self, voter: int, payload: bytes):
        if voter not in self.roster.voter_ids:
            return "NotInRoster", None
        A = self.aborted()
        if not A:
            return "NoRecoveryNeeded", None
        if len(A) > self.roster.n - 2:
            return "AbortSetTooLarge", None
        msg = RecoveryMsg.from_bytes(self.group, payload)
        if msg.sender != self.roster.position_of(voter):
            return "WrongSender", None
        if msg.aborted != A:
            return "WrongAbortSet", None
        if not self._recovery_ok(voter, msg):
            return "ProofInvalid", None
        return None, msg

    def _recovery_ok(self, voter: int, msg: RecoveryMsg) -> bool:
        return P.verify_recovery(self.group, msg, self.roster, self.betas(), self.context(voter, "recover"))

    # reading

    def read(self, phase: str, all_rounds: bool = False) -> list[Entry]:
        return [e for e in self.entries
                if e.phase == phase and e.admitted and (all_rounds or e.round == self.round)]

    def outcome(self) -> TallyResult | None:
        """Election result from admitted entries, re-verifying every ballot and share.

        None while the relevant windows are still open.
        """
        if self.failed or self.current_height() < self.plan.vote_end:
            return None
        g, roster = self.group, self.roster
        ids = roster.voter_ids

        def check(pos: int, msg: VoteMsg) -> bool:
            return self._vote_ok(ids[pos - 1], msg)

        A = self.aborted()
        ballots = {k: self.votes[vid] for k, vid in enumerate(ids, 1) if vid in self.votes}
        if not A:
            return P.tally(g, ballots, roster.n, check=check)
        if self.current_height() < self.plan.recover_end:
            return None
        if len(A) > roster.n - 2:
            raise P.AbortSetTooLarge(f"{len(A)} aborts among {roster.n} voters")
        shares: dict[int, RecoveryMsg] = {}
        for k, vid in enumerate(ids, 1):
            msg = self.recoveries.get(vid)
            if msg is not None and msg.aborted == A and self._recovery_ok(vid, msg):
                shares[k] = msg
        missing = [ids[k - 1] for k in ballots if k not in shares]
        if missing:
            raise P.MissingShare(f"no valid recovery share from voters {missing}")
        corrections = {k: m.K for k, m in shares.items()}
        recovered: dict[int, int] = {}
        unrecoverable: list[int] = []
        for i in A:
            try:
                v = P.recover_vote(g, i, self.commits[ids[i - 1]].C,
                                   {k: m.share_for(i) for k, m in shares.items()}, roster.n, A)
                recovered[ids[i - 1]] = v
            except P.Unrecoverable:
                unrecoverable.append(ids[i - 1])
        return P.recover_tally(g, ballots, corrections, recovered, unrecoverable, check=check)

    # transcript

    def transcript(self) -> list[dict]:
        """Header, then entries in posting order with a seal record after each block's last entry."""
        out = [self.header()]
        by_height: dict[int, list[Entry]] = {}
        for e in self.entries:
            by_height.setdefault(e.height, []).append(e)
        for block in self.blocks:
            out.extend(e.to_json() for e in by_height.pop(block.height, []))
            out.append(block.to_json())
        for rest in by_height.values():
            out.extend(e.to_json() for e in rest)
        return out

    def write_transcript(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.transcript():
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_header(cls, header: dict) -> "Board":
        return cls(Group.from_json(header["group"]), bytes.fromhex(header["election_id"]),
                   int(header["voters"]), PhasePlan(**header["plan"]), header.get("block_every"))


@dataclass
class EntryVerdict:
    index: int
    height: int
    voter: int
    phase: str
    round: int
    recorded: str
    replayed: str | None
    reason: str | None
    flagged: bool = False
    note: str | None = None


@dataclass
class AuditReport:
    ok: bool = True
    chain_ok: bool = True
    entries: list[EntryVerdict] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)
    tally: TallyResult | None = None
    height: int = 0

    def flag(self, msg: str, chain: bool = False) -> None:
        self.ok = False
        if chain:
            self.chain_ok = False
        self.problems.append(msg)

    def to_json(self) -> dict:
        t = self.tally
        return {
            "ok": self.ok,
            "chain_ok": self.chain_ok,
            "height": self.height,
            "entries": len(self.entries),
            "admitted": sum(1 for e in self.entries if e.replayed == ADMITTED),
            "rejected": sum(1 for e in self.entries if e.replayed == REJECTED),
            "flagged": [vars(e) for e in self.entries if e.flagged],
            "verdicts": [{"index": e.index, "voter": e.voter, "phase": e.phase, "round": e.round,
                          "verdict": e.replayed, "reason": e.reason} for e in self.entries],
            "problems": self.problems,
            "tally": None if t is None else {
                "count": t.count, "n_counted": t.n_counted,
                "recovered_votes": {str(k): v for k, v in t.recovered_votes.items()},
                "unrecoverable": list(t.unrecoverable)},
        }


def read_transcript(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def audit(records: list[dict], strict: bool = False) -> AuditReport:
    """Replay a transcript on a fresh board and compare every verdict and digest.

    With ``strict=True`` a digest mismatch raises ChainBroken instead of being reported.
    """
    report = AuditReport()
    if not records:
        return report
    head, *rest = records
    if head.get("type") != "header":
        report.flag("transcript does not start with a header")
        return report
    try:
        board = Board.from_header(head)
    except (KeyError, TypeError, ValueError) as exc:
        report.flag(f"bad header: {exc}")
        return report

    def chain_problem(msg: str) -> None:
        if strict:
            raise ChainBroken(msg)
        report.flag(msg, chain=True)

    k = 0
    for n, rec in enumerate(rest, 1):
        kind = rec.get("type")
        try:
            if kind == "entry":
                height, voter = int(rec["height"]), int(rec["voter"])
                phase, payload = str(rec["phase"]), bytes.fromhex(rec["payload"])
                if phase == RESTART:
                    replay = board.entries[k] if k < len(board.entries) else None
                    ok = (replay is not None and replay.phase == RESTART and replay.payload == payload
                          and (replay.voter, replay.round, replay.verdict, replay.reason, replay.height)
                          == (voter, rec.get("round"), rec.get("verdict"), rec.get("reason"), height))
                    replayed = replay.verdict if replay is not None and replay.phase == RESTART else None
                else:
                    if height != board.pending_height:
                        report.flag(f"record {n}: entry claims height {height}, replay is at {board.pending_height}")
                    replay = board.post(voter, phase, payload)
                    replayed = replay.verdict
                    ok = (replay.verdict == rec["verdict"] and replay.reason == rec.get("reason")
                          and replay.round == rec.get("round"))
                verdict = EntryVerdict(k, height, voter, phase, int(rec.get("round", 0)), rec.get("verdict"),
                                       replayed, replay.reason if replay is not None else None)
                if not ok:
                    verdict.flagged = True
                    verdict.note = "recorded verdict differs from replay"
                    report.flag(f"entry {k} (voter {voter}, {phase}): recorded {rec.get('verdict')}/"
                                f"{rec.get('reason')}, replay {replayed}/{verdict.reason}")
                report.entries.append(verdict)
                k += 1
            elif kind == "seal":
                height = int(rec["height"])
                if height > board.current_height():
                    board.advance_to(height)
                if height < 1 or height > board.current_height():
                    report.flag(f"record {n}: seal for unknown height {height}")
                    continue
                block = board.blocks[height - 1]
                if block.digest.hex() != rec["digest"] or block.prev_digest.hex() != rec["prev"]:
                    chain_problem(f"block {height}: digest mismatch")
                if len(block.entries) != rec.get("entries"):
                    chain_problem(f"block {height}: entry count mismatch")
            else:
                report.flag(f"record {n}: unknown record type {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            report.flag(f"record {n}: unreadable ({exc})")
    if k != len(board.entries):
        report.flag(f"replay produced {len(board.entries)} entries, transcript has {k}")
    report.height = board.current_height()
    try:
        report.tally = board.outcome()
    except P.ProtocolError as exc:
        report.flag(f"tally: {exc}")
    return report
