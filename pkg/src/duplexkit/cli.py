"""Command-line entry point: ``duplexkit <command>``.

Exit codes: 0 success, 1 validation failure, 2 scoring incomplete.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .action_scheduler import ActionQueue
from .bench_scorer import (
    CaseScore,
    ToolMatchConfig,
    aggregate,
    default_registry,
    score_case,
)
from .casegen import gen_cases
from .chunk_model import DEFAULT_CLOCK, ClockConfig, num_chunks, validate_chunk
from .session_engine import PATTERNS, SCENARIOS, BenchCase, builtin_policies, run_session
from .trace_compiler import CompileError, SessionSpec, compile_session
from .wire_codec import dumps_trace, iter_events, lex_line

log = logging.getLogger("duplexkit")

EXIT_OK, EXIT_INVALID, EXIT_INCOMPLETE = 0, 1, 2
PREFILL_OFF_SCENARIOS = ("normal", "pause")


@dataclass
class RunManifest:
    command: str
    seed: int = None
    policy: str = None
    cases: str = None
    out_dir: str = None
    config: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def clock_from_args(args) -> ClockConfig:
    chunk_ms = getattr(args, "chunk_ms", None) or os.environ.get("DUPLEX_CLOCK_MS")
    budget = getattr(args, "budget", None) or DEFAULT_CLOCK.action_budget
    if chunk_ms:
        return ClockConfig.with_chunk_ms(int(chunk_ms), action_budget=budget)
    return ClockConfig(action_budget=budget)


def _read_lines(path):
    fh = sys.stdin if path == "-" else open(path, encoding="utf-8")
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield lineno, line


def _open_out(path):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8")


# -- compile --------------------------------------------------------------

def cmd_compile(args) -> int:
    cfg = clock_from_args(args)
    failed = False
    blocks, stats = [], []
    for lineno, line in _read_lines(args.specs):
        try:
            spec = SessionSpec.from_json(line)
            trace = compile_session(spec, cfg)
        except (CompileError, ValueError, KeyError) as exc:
            print(f"{args.specs}:{lineno}: {exc}", file=sys.stderr)
            failed = True
            continue
        blocks.append(dumps_trace(trace))
        n_action = sum(len(c.action) for c in trace.chunks)
        n_text = sum(c.assistant.is_text for c in trace.chunks)
        stats.append({"line": lineno, "task": trace.task, "chunks": len(trace),
                      "user_tokens": len(trace) * (cfg.user_feats_per_chunk + 2),
                      "assistant_tokens": len(trace) * (cfg.audio_tokens_per_chunk + 3),
                      "assistant_text_anchors": n_text,
                      "action_tokens": n_action,
                      "action_end_tokens": len(trace)})
    with _open_out(args.output) as out:
        if blocks:
            out.write("\n\n".join(blocks) + "\n")
    if args.stats:
        with _open_out(args.stats) as fh:
            for s in stats:
                fh.write(json.dumps(s) + "\n")
    return EXIT_INVALID if failed else EXIT_OK


# -- validate -------------------------------------------------------------

def cmd_validate(args) -> int:
    cfg = clock_from_args(args)
    tokens = []
    for _lineno, line in _read_lines(args.wire):
        if not line.startswith("# "):
            tokens.extend(lex_line(line.rstrip("\n")))
    n_chunks = 0
    bad = 0
    for ev in iter_events(tokens, cfg):
        if ev.kind == "chunk_complete":
            n_chunks += 1
            for p in validate_chunk(ev.chunk, cfg):
                print(f"chunk {ev.index}: {p}", file=sys.stderr)
                bad += 1
        elif ev.kind == "malformed":
            print(f"token {ev.position}: {ev.reason}", file=sys.stderr)
            bad += 1
    print(f"{n_chunks} chunks, {bad} problems")
    return EXIT_INVALID if bad else EXIT_OK


# -- schedule-dump --------------------------------------------------------

def cmd_schedule_dump(args) -> int:
    cfg = clock_from_args(args)
    status = EXIT_OK
    for lineno, line in _read_lines(args.specs):
        spec = SessionSpec.from_json(line)
        q = ActionQueue.for_clock(cfg)
        for a in spec.actions:
            q.enqueue(a)
        n = max(num_chunks(spec.duration_s, cfg), 1)
        print(f"# session line {lineno} ({len(spec.actions)} actions, budget {cfg.action_budget})")
        k = 0
        while k < n or not q.drained:
            toks = q.emit_for_chunk(k)
            if toks:
                print(f"{k:4d} [{len(toks):2d}] {' '.join(t.wire for t in toks)}")
            k += 1
            if k > n + 10000:
                break
        for aid, em in sorted(q.history.items()):
            print(f"  action {aid} {em.action.name}: trigger {em.trigger_chunk}, "
                  f"anchor {em.anchor_chunk}, done {em.done_chunk}, {em.n_tokens} tokens")
        if k > n:
            print(f"  overrun: queue drains at chunk {k - 1}, session has {n} chunks")
            status = EXIT_INVALID
    return status


# -- gen-cases ------------------------------------------------------------

def cmd_gen_cases(args) -> int:
    cfg = clock_from_args(args)
    cases = gen_cases(args.scenario, args.n, args.seed, cfg)
    with _open_out(args.output) as fh:
        for c in cases:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False) + "\n")
    return EXIT_OK


# -- run / score ----------------------------------------------------------

def load_cases(path) -> list:
    return [BenchCase.from_json(line) for _, line in _read_lines(path)]


def _score_one(job):
    case_d, policy, prefill, mode, cfg_d = job
    case = BenchCase.from_dict(case_d)
    cfg = ClockConfig.from_dict(cfg_d)
    try:
        p = builtin_policies()[policy](case, cfg)
        elog = run_session(p, case, prefill, cfg)
        score = score_case(elog, case, mode, ToolMatchConfig(), default_registry())
        return score.to_dict(), None
    except Exception as exc:  # a failing case is a miss, not a crash
        return CaseScore(case.id, case.group, False, note=f"error: {exc}").to_dict(), str(exc)


def _map(fn, jobs, n_jobs):
    if n_jobs and n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            return list(ex.map(fn, jobs, chunksize=16))
    return [fn(j) for j in jobs]


def cmd_score(args) -> int:
    cfg = clock_from_args(args)
    manifest = RunManifest("score", seed=args.seed, policy=args.policy, cases=args.cases,
                           out_dir=args.out, started=_now(),
                           config={"clock": cfg.to_dict(), "prefill": args.prefill,
                                   "mode": args.mode, "jobs": args.jobs})
    if args.policy not in builtin_policies():
        print(f"unknown policy {args.policy!r}", file=sys.stderr)
        return EXIT_INVALID
    try:
        cases = load_cases(args.cases)
    except (ValueError, KeyError) as exc:
        print(f"bad case file: {exc}", file=sys.stderr)
        return EXIT_INVALID
    prefill = args.prefill == "on"
    if not prefill:
        cases = [c for c in cases if c.scenario in PREFILL_OFF_SCENARIOS]
    if not cases:
        print("no cases to score", file=sys.stderr)
        return EXIT_INVALID
    cases.sort(key=lambda c: c.id)

    jobs = [(c.to_dict(), args.policy, prefill, args.mode, cfg.to_dict()) for c in cases]
    results = _map(_score_one, jobs, args.jobs)
    errors = [(c.id, err) for c, (_, err) in zip(cases, results) if err]
    for cid, err in errors:
        log.warning("case %s failed: %s", cid, err)
    scores = [CaseScore(**{**d, "pair_delays": tuple(d["pair_delays"])}) for d, _ in results]
    report = aggregate(scores, model=args.policy)
    report.meta = {"prefill": args.prefill, "mode": args.mode, "n_cases": len(cases),
                   "errors": len(errors)}
    print(report.format_table())
    manifest.finished = _now()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report.format_table() + "\n", encoding="utf-8")
        (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        with open(out / "scores.jsonl", "w", encoding="utf-8") as fh:
            for s in scores:
                fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")
        (out / "manifest.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n",
                                           encoding="utf-8")
    return EXIT_INCOMPLETE if errors else EXIT_OK


def cmd_run(args) -> int:
    """Run one policy over cases and write the event logs as JSONL."""
    cfg = clock_from_args(args)
    factory = builtin_policies()[args.policy]
    with _open_out(args.output) as fh:
        for case in load_cases(args.cases):
            elog = run_session(factory(case, cfg), case, args.prefill == "on", cfg)
            for e in elog:
                fh.write(json.dumps({"case": case.id, **e.to_dict()}, ensure_ascii=False) + "\n")
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="duplexkit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def clock_opts(sp):
        sp.add_argument("--chunk-ms", type=int, default=None,
                        help="chunk size in ms (env DUPLEX_CLOCK_MS)")
        sp.add_argument("--budget", type=int, default=None, help="action tokens per chunk")

    sp = sub.add_parser("compile", help="compile session specs (JSONL) to wire text")
    sp.add_argument("specs")
    sp.add_argument("-o", "--output", default="-")
    sp.add_argument("--stats", default=None, help="write per-session token counts (JSONL)")
    clock_opts(sp)
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("validate", help="check a wire text file")
    sp.add_argument("wire")
    clock_opts(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("schedule-dump", help="print per-chunk action emissions")
    sp.add_argument("specs")
    clock_opts(sp)
    sp.set_defaults(func=cmd_schedule_dump)

    sp = sub.add_parser("gen-cases", help="generate synthetic benchmark cases")
    sp.add_argument("--scenario", required=True, choices=SCENARIOS + PATTERNS)
    sp.add_argument("--n", type=int, default=300)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", default="-")
    clock_opts(sp)
    sp.set_defaults(func=cmd_gen_cases)

    policies = sorted(builtin_policies())
    sp = sub.add_parser("score", help="run a policy over cases and report")
    sp.add_argument("--cases", required=True)
    sp.add_argument("--policy", required=True, choices=policies)
    sp.add_argument("--prefill", choices=("on", "off"), default="on")
    sp.add_argument("--mode", choices=("labeled", "relaxed"), default="labeled")
    sp.add_argument("--out", default=None, help="run directory for report and manifest")
    sp.add_argument("--seed", type=int, default=None, help="recorded in the manifest")
    sp.add_argument("--jobs", type=int, default=1)
    clock_opts(sp)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("run", help="write event logs for a policy over cases")
    sp.add_argument("--cases", required=True)
    sp.add_argument("--policy", required=True, choices=policies)
    sp.add_argument("--prefill", choices=("on", "off"), default="on")
    sp.add_argument("-o", "--output", default="-")
    clock_opts(sp)
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
