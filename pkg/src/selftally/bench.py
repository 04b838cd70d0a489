"""Per-phase timings as the electorate grows.

One repetition runs a full election of n voters in memory (no board) and
times each algorithm over all voters that run it:

Setup    n key pairs with registration proofs
Commit   n commitments (Y_i and the OR proof)
Vote     n ballots (h_i and the ballot OR proof)
Tally    product of the n ballots and the small discrete log; proofs are
         checked by the board at admission, not here
Recover  voter n aborts: n-1 recovery messages, opening the aborted vote and
         the corrected tally of the rest
"""

from __future__ import annotations

import csv
import gc
import statistics
import time
from dataclasses import dataclass
from typing import Iterable

from . import protocol as P
from .engine import voter_rng
from .group import Group, get_backend, set_backend
from .sigma import ProofContext

PHASE_ORDER = ("Setup", "Commit", "Vote", "Tally", "Recover")


@dataclass(frozen=True)
class BenchRecord:
    phase: str
    n: int
    mean_ms: float
    median_ms: float
    reps: int
    backend: str = ""


def _election_once(group: Group, n: int, seed: int) -> dict[str, float]:
    eid = f"bench/{seed}".encode()
    rngs = [voter_rng(seed, i) for i in range(1, n + 1)]
    votes = [rngs[i].randrange(2) for i in range(n)]
    ctx = lambda i, phase: ProofContext(eid, i, phase)  # noqa: E731
    clock = time.perf_counter
    out = {}

    t = clock()
    pairs = [P.keygen(group, i, ctx(i, "register"), rngs[i - 1], vote=votes[i - 1]) for i in range(1, n + 1)]
    out["Setup"] = clock() - t
    states = [s for s, _ in pairs]
    roster = P.Roster(tuple(m.y for _, m in pairs))

    t = clock()
    commits = [P.commit(group, s, P.aggregate_Y(group, s.index, roster), ctx(s.index, "commit"), rngs[s.index - 1])
               for s in states]
    out["Commit"] = clock() - t

    t = clock()
    ballots = {s.index: P.cast_vote(group, s, P.aggregate_Y(group, s.index, roster),
                                    P.compute_h(group, s.index, roster), ctx(s.index, "vote"), rngs[s.index - 1])
               for s in states}
    out["Vote"] = clock() - t

    t = clock()
    result = P.tally(group, ballots, n)
    out["Tally"] = clock() - t
    assert result.count == sum(votes)

    if n >= 3:
        aborted = (n,)
        rest = {i: ballots[i] for i in range(1, n)}
        betas = {n: commits[n - 1].beta}
        t = clock()
        shares = {s.index: P.recovery_share(group, s, aborted, roster, betas, ctx(s.index, "recover"),
                                            rngs[s.index - 1]) for s in states[:-1]}
        v = P.recover_vote(group, n, commits[n - 1].C, {j: m.share_for(n) for j, m in shares.items()}, n, aborted)
        rec = P.recover_tally(group, rest, {j: m.K for j, m in shares.items()}, {n: v})
        out["Recover"] = clock() - t
        assert rec.count == sum(votes)
    return out


def run_bench(group: Group, sizes: Iterable[int], reps: int = 20, seed: int = 0,
              backend: str | None = None) -> list[BenchRecord]:
    if reps < 10:
        raise ValueError("reps must be >= 10")
    previous = get_backend()
    if backend:
        set_backend(backend)
    records = []
    try:
        sizes = list(sizes)
        if any(n < 2 for n in sizes):
            raise ValueError("n must be >= 2")
        samples = {(p, n): [] for n in sizes for p in PHASE_ORDER}
        for n in sizes:
            _election_once(group, n, seed)  # warm-up
        # interleave sizes so slow drift of the machine hits every n alike
        for r in range(reps):
            for n in sizes:
                gc.disable()
                try:
                    times = _election_once(group, n, seed * 100_003 + r)
                finally:
                    gc.enable()
                for phase, dt in times.items():
                    samples[phase, n].append(dt * 1e3)
        for n in sizes:
            for phase in PHASE_ORDER:
                xs = samples[phase, n]
                if xs:
                    records.append(BenchRecord(phase, n, statistics.fmean(xs), statistics.median(xs), reps,
                                               get_backend()))
    finally:
        set_backend(previous)
    return records


def write_csv(records: list[BenchRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["phase", "n", "mean_ms", "median_ms", "reps", "backend"])
    for r in records:
        w.writerow([r.phase, r.n, f"{r.mean_ms:.4f}", f"{r.median_ms:.4f}", r.reps, r.backend])
