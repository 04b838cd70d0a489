"""Command line: ``selftally run | audit | bench``.

Exit codes: 0 success, 1 protocol failure (failed election, audit finding),
2 usage error or invalid scenario. ``ST_GROUP`` picks the default group.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench
from .board import ChainBroken, audit, read_transcript
from .engine import Scenario, ScenarioInvalid, run
from .group import GROUP_NAMES, available_backends, get_group

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _int_list(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _scenario(args) -> Scenario:
    base: dict = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    if args.voters is not None:
        base["n"] = args.voters
    if args.votes is not None:
        base["votes"] = _int_list(args.votes)
    if args.abort is not None:
        base["abort_set"] = _int_list(args.abort)
    if args.seed is not None:
        base["seed"] = args.seed
    if args.group is not None:
        base["group"] = args.group
    if args.misbehave:
        base["misbehaviors"] = list(base.get("misbehaviors", [])) + args.misbehave
    if args.block_every is not None:
        base["block_every"] = args.block_every or None
    else:
        base.setdefault("block_every", 4)
    if "n" not in base and "votes" in base:
        base["n"] = len(base["votes"])
    if "n" not in base or "votes" not in base:
        raise UsageError("need --voters and --votes (or a config file providing them)")
    if base["n"] != len(base["votes"]):
        raise UsageError(f"--votes has {len(base['votes'])} entries but --voters is {base['n']}")
    return Scenario.from_json(base)


def cmd_run(args) -> int:
    scenario = _scenario(args)
    report = run(scenario)
    if args.out:
        report.board.write_transcript(args.out)
    text = json.dumps(report.to_json(), indent=None if args.compact else 2)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_FAIL if report.failed else EXIT_OK


def cmd_audit(args) -> int:
    try:
        records = read_transcript(args.transcript)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read transcript: {exc}", file=sys.stderr)
        return EXIT_FAIL
    try:
        report = audit(records, strict=args.strict)
    except ChainBroken as exc:
        print(json.dumps({"ok": False, "chain_ok": False, "problems": [str(exc)]}))
        return EXIT_FAIL
    out = report.to_json()
    if not args.verbose:
        out.pop("verdicts")
    print(json.dumps(out, indent=2))
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_bench(args) -> int:
    if args.min < 2 or args.max < args.min or args.step < 1:
        raise UsageError("need 2 <= --min <= --max and --step >= 1")
    group = get_group(args.group)
    sizes = list(range(args.min, args.max + 1, args.step))
    backends = available_backends() if args.backend == "both" else [args.backend]
    records = []
    for b in backends:
        records += bench.run_bench(group, sizes, reps=args.reps, seed=args.seed, backend=b)
    if args.out:
        with open(args.out, "w") as fh:
            bench.write_csv(records, fh)
    else:
        bench.write_csv(records, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selftally", description="Self-tallying yes/no elections on a simulated chain.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an election scenario and write its transcript")
    r.add_argument("--config", help="scenario JSON; flags override its fields")
    r.add_argument("--voters", type=int)
    r.add_argument("--votes", help="comma-separated 0/1 votes, one per voter")
    r.add_argument("--abort", help="comma-separated voters that abort after committing")
    r.add_argument("--seed", type=int)
    r.add_argument("--group", choices=GROUP_NAMES)
    r.add_argument("--misbehave", action="append", metavar="KIND(PHASE,VOTER)",
                   help="inject misbehavior, e.g. 'InvalidProof(vote,2)', 'SkipCommit(3)'; repeatable")
    r.add_argument("--block-every", type=int, help="auto-seal a block every K entries (0 = manual; default 4)")
    r.add_argument("--out", help="write the board transcript (JSON Lines) here")
    r.add_argument("--report", help="write the report JSON here instead of stdout")
    r.add_argument("--compact", action="store_true")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="re-verify a transcript and recompute the tally")
    a.add_argument("transcript")
    a.add_argument("--strict", action="store_true", help="stop at the first digest mismatch")
    a.add_argument("--verbose", action="store_true", help="include every entry verdict")
    a.set_defaults(func=cmd_audit)

    b = sub.add_parser("bench", help="time each phase for growing electorates (CSV)")
    b.add_argument("--min", type=int, default=3)
    b.add_argument("--max", type=int, default=12)
    b.add_argument("--step", type=int, default=3)
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--group", choices=GROUP_NAMES, default="standard")
    b.add_argument("--backend", choices=list(available_backends()) + ["both"], default=available_backends()[-1])
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ScenarioInvalid, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
