"""Discrete-time duplex session runner.

Steps a policy once per chunk, turns the assistant lane into speak/stop
transitions and reads labels and tool calls off the action lane.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from .chunk_model import (
    CONTROL_LABELS,
    DEFAULT_CLOCK,
    TOOLCALL_BEGIN,
    TOOLCALL_END,
    USER_FEAT,
    ActionObject,
    Chunk,
    ChunkTrace,
    ClockConfig,
    TA4Unit,
    UserSegment,
    chunk_index,
    chunk_start_time,
    is_speaking,
    label_name,
    num_chunks,
)
from .tokenizer import detokenize
from .trace_compiler import SessionSpec, compile_session
from .wire_codec import StreamParser, encode_chunk

logger = logging.getLogger(__name__)

SCENARIOS = ("normal", "pause", "interrupt", "backchannel")
PATTERNS = ("single", "multi", "backchannel_action")

REQUIRED_ANCHORS = {
    "normal": ("t_ue",),
    "pause": ("t_ue",),
    "interrupt": ("t_int",),
    "backchannel": ("t_bc_s", "t_bc_e"),
}


class CaseError(ValueError):
    pass


@dataclass
class BenchCase:
    """One benchmark case.

    ``assistant_script`` is the reference assistant behaviour used to build
    the oracle trace; the scorer never reads it.
    """

    id: str
    audio_end_s: float
    scenario: Optional[str] = None
    pattern: Optional[str] = None
    user_words: list = field(default_factory=list)
    history: list = field(default_factory=list)
    anchors: dict = field(default_factory=dict)
    gt_actions: list = field(default_factory=list)
    assistant_script: list = field(default_factory=list)

    @property
    def group(self) -> str:
        return self.scenario or self.pattern

    def validate(self) -> list:
        problems = []
        if (self.scenario is None) == (self.pattern is None):
            problems.append("exactly one of scenario/pattern must be set")
        if self.scenario is not None and self.scenario not in SCENARIOS:
            problems.append(f"unknown scenario {self.scenario!r}")
        if self.pattern is not None and self.pattern not in PATTERNS:
            problems.append(f"unknown pattern {self.pattern!r}")
        for key in REQUIRED_ANCHORS.get(self.scenario, ()):
            if key not in self.anchors:
                problems.append(f"missing anchor {key}")
        if self.pattern is not None and not self.gt_actions:
            problems.append("tool-call case without ground-truth actions")
        times = list(self.anchors.values()) + [w[2] for w in self.user_words]
        times += [a.offset_s for a in self.gt_actions] + [e[1] for e in self.assistant_script]
        if any(t > self.audio_end_s + 1e-9 for t in times):
            problems.append("a time lies past audio_end_s")
        return problems

    def to_dict(self) -> dict:
        d = {"id": self.id, "audio_end_s": self.audio_end_s}
        if self.scenario is not None:
            d["scenario"] = self.scenario
        if self.pattern is not None:
            d["pattern"] = self.pattern
        d.update(
            user_words=[list(w) for w in self.user_words],
            history=list(self.history),
            anchors=dict(self.anchors),
            gt_actions=[a.to_dict() for a in self.gt_actions],
            assistant_script=[list(e) for e in self.assistant_script],
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchCase":
        return cls(
            id=str(d["id"]),
            audio_end_s=float(d["audio_end_s"]),
            scenario=d.get("scenario"),
            pattern=d.get("pattern"),
            user_words=[(str(w[0]), float(w[1]), float(w[2])) for w in d.get("user_words", [])],
            history=list(d.get("history", [])),
            anchors={k: float(v) for k, v in d.get("anchors", {}).items()},
            gt_actions=[ActionObject.from_dict(a) for a in d.get("gt_actions", [])],
            assistant_script=[(str(e[0]),) + tuple(float(x) for x in e[1:])
                              for e in d.get("assistant_script", [])],
        )

    @classmethod
    def from_json(cls, line: str) -> "BenchCase":
        return cls.from_dict(json.loads(line))


# -- event log ------------------------------------------------------------

@dataclass(frozen=True)
class LogEntry:
    t: float
    kind: str  # speak | stop | label | action_payload | malformed
    payload: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"t": self.t, "kind": self.kind, "payload": self.payload}


@dataclass
class EventLog:
    entries: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def of_kind(self, kind: str) -> list:
        return [e for e in self.entries if e.kind == kind]

    def labels(self, name: Optional[str] = None) -> list:
        return [e for e in self.entries
                if e.kind == "label" and (name is None or e.payload["name"] == name)]

    def tool_calls(self) -> list:
        return [e for e in self.labels() if e.payload.get("tool")]

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e.to_dict(), ensure_ascii=False) for e in self.entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        entries = []
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                entries.append(LogEntry(float(d["t"]), d["kind"], d.get("payload")))
        return cls(entries)


# -- policies -------------------------------------------------------------

class Policy:
    """Chunk-stepped assistant. ``step`` returns (TA4Unit, action tokens)."""

    name = "policy"

    def __init__(self, cfg: ClockConfig = DEFAULT_CLOCK):
        self.cfg = cfg
        self.k = 0

    def reset(self):
        self.k = 0

    def prefill(self, history):
        pass

    def step(self, user: UserSegment):
        raise NotImplementedError


class AlwaysSilent(Policy):
    name = "always_silent"

    def step(self, user):
        self.k += 1
        return TA4Unit.silence(self.cfg.audio_tokens_per_chunk), []


class EagerSpeaker(Policy):
    name = "eager_speaker"

    def __init__(self, cfg: ClockConfig = DEFAULT_CLOCK, text: str = "嗯"):
        super().__init__(cfg)
        self.text = text

    def step(self, user):
        self.k += 1
        return TA4Unit.speech(self.text, self.cfg.audio_tokens_per_chunk), []


class NeverYield(Policy):
    """Speaks from ``onset_s`` to the end of the session, ignoring the user."""

    name = "never_yield"

    def __init__(self, cfg: ClockConfig = DEFAULT_CLOCK, onset_s: float = 0.0, text: str = "嗯"):
        super().__init__(cfg)
        self.onset_chunk = chunk_index(onset_s, cfg)
        self.text = text

    def step(self, user):
        k = self.k
        self.k += 1
        if k >= self.onset_chunk:
            return TA4Unit.speech(self.text, self.cfg.audio_tokens_per_chunk), []
        return TA4Unit.silence(self.cfg.audio_tokens_per_chunk), []


class TraceReplay(Policy):
    """Replays a compiled trace; pads with silence past its end."""

    name = "trace_replay"

    def __init__(self, trace: ChunkTrace):
        super().__init__(trace.clock)
        self.trace = trace

    def step(self, user):
        k = self.k
        self.k += 1
        if k < len(self.trace.chunks):
            c = self.trace.chunks[k]
            return c.assistant, list(c.action)
        return TA4Unit.silence(self.cfg.audio_tokens_per_chunk), []


def oracle_session(case: BenchCase, speaker: str = "默认") -> SessionSpec:
    """Ground-truth session for a case: reference speech plus the expected actions."""
    actions = list(case.gt_actions)
    next_id = max((a.id for a in actions), default=-1) + 1
    task, pad = "toolcall", 3
    if case.scenario in ("normal", "pause"):
        task = "dialogue" if case.scenario == "normal" else "pause"
        actions.append(ActionObject(next_id, "response", case.anchors["t_ue"]))
    elif case.scenario == "interrupt":
        task, pad = "interrupt", 0
        actions.append(ActionObject(next_id, "interrupt", case.anchors["t_int"]))
    elif case.scenario == "backchannel":
        task = "backchannel"
        actions.append(ActionObject(next_id, "backchannel", case.anchors["t_bc_e"]))
    return SessionSpec(task=task, duration_s=case.audio_end_s, user_words=list(case.user_words),
                       assistant_script=list(case.assistant_script), actions=actions,
                       speaker=speaker, tts_pad_chunks=pad)


def oracle_trace(case: BenchCase, cfg: ClockConfig = DEFAULT_CLOCK) -> ChunkTrace:
    return compile_session(oracle_session(case), cfg)


def _make_trace_replay(case, cfg):
    return TraceReplay(oracle_trace(case, cfg))


def _make_never_yield(case, cfg):
    onset = case.assistant_script[0][1] if case.assistant_script else 0.0
    return NeverYield(cfg, onset_s=onset)


def builtin_policies() -> dict:
    """Policy factories keyed by name; each takes (case, cfg)."""
    return {
        "trace_replay": _make_trace_replay,
        "always_silent": lambda case, cfg: AlwaysSilent(cfg),
        "never_yield": _make_never_yield,
        "eager_speaker": lambda case, cfg: EagerSpeaker(cfg),
    }


# -- engine ---------------------------------------------------------------

def user_segments(case: BenchCase, cfg: ClockConfig = DEFAULT_CLOCK) -> list:
    n = num_chunks(case.audio_end_s, cfg)
    hints = [[] for _ in range(n)]
    for text, on, _off in case.user_words:
        c = chunk_index(on, cfg)
        if c < n:
            hints[c].append((text, on))
    feats = (USER_FEAT,) * cfg.user_feats_per_chunk
    return [UserSegment(feats, tuple(h)) for h in hints]


def parse_toolcall_body(text: str):
    """(function, arguments dict) from a tool-call JSON body, or None."""
    try:
        body = json.loads(text)
    except json.JSONDecodeError:
        return None
    if not isinstance(body, dict) or "function" not in body:
        return None
    args = body.get("arguments", {})
    if isinstance(args, str):
        # "k=v,k2=v2" form
        parsed = {}
        for part in filter(None, (p.strip() for p in args.split(","))):
            k, sep, v = part.partition("=")
            parsed[k.strip()] = v.strip() if sep else ""
        args = parsed
    elif not isinstance(args, dict):
        args = {"value": args}
    return str(body["function"]), {str(k): str(v) for k, v in args.items()}


class ActionLaneReader:
    """Splits the action lane into actions and reports each with its anchor chunk.

    An action is a run of free text closed by a control label or by a
    complete tool-call block; its anchor is the chunk of its first token.
    """

    def __init__(self):
        self.seg_start = None
        self.text = []
        self.body = None  # tokens inside an open tool-call block

    def feed_chunk(self, k: int, tokens) -> list:
        found = []
        for tok in tokens:
            if self.seg_start is None:
                self.seg_start = k
            if self.body is not None:
                if tok.kind == "marker" and tok.value == TOOLCALL_END:
                    parsed = parse_toolcall_body(detokenize(self.body))
                    entry = {"name": None, "tool": True, "chunk": self.seg_start,
                             "planning": detokenize(self.text)}
                    if parsed is None:
                        entry["error"] = "unparseable tool-call body"
                        entry["raw"] = detokenize(self.body)
                    else:
                        entry["name"], entry["arguments"] = parsed
                    found.append(entry)
                    self._reset()
                else:
                    self.body.append(tok)
            elif tok.kind == "marker" and tok.value == TOOLCALL_BEGIN:
                self.body = []
            elif tok.kind == "control_label" and tok.value in CONTROL_LABELS:
                found.append({"name": label_name(tok.value), "tool": False,
                              "chunk": self.seg_start, "planning": detokenize(self.text)})
                self._reset()
            else:
                self.text.append(tok)
        return found

    def _reset(self):
        self.seg_start = None
        self.text = []
        self.body = None


def run_session(policy: Policy, case: BenchCase, prefill: bool = False,
                cfg: ClockConfig = DEFAULT_CLOCK) -> EventLog:
    problems = case.validate()
    if problems:
        raise CaseError(f"case {case.id}: {'; '.join(problems)}")
    policy.reset()
    if prefill:
        policy.prefill(case.history)

    entries = []
    parser = StreamParser(cfg)
    reader = ActionLaneReader()
    speaking = False
    for k, seg in enumerate(user_segments(case, cfg)):
        t = chunk_start_time(k, cfg)
        unit, actions = policy.step(seg)
        actions = list(actions)
        if len(actions) > cfg.action_budget:
            entries.append(LogEntry(t, "malformed", {"reason": "budget exceeded",
                                                     "n_tokens": len(actions)}))
            actions = actions[:cfg.action_budget]
        now = is_speaking(unit)
        if now != speaking:
            entries.append(LogEntry(t, "speak" if now else "stop"))
            speaking = now

        try:
            frame = encode_chunk(Chunk(k, seg, unit, tuple(actions)), cfg)
        except ValueError as exc:
            entries.append(LogEntry(t, "malformed", {"reason": str(exc)}))
            continue
        for ev in (e for tok in frame for e in parser.feed(tok)):
            if ev.kind == "malformed":
                entries.append(LogEntry(t, "malformed", {"reason": ev.reason}))
            elif ev.kind == "chunk_complete" and ev.chunk.action:
                entries.append(LogEntry(t, "action_payload",
                                        {"text": detokenize(ev.chunk.action)}))
                for found in reader.feed_chunk(k, ev.chunk.action):
                    entries.append(LogEntry(chunk_start_time(found["chunk"], cfg), "label", found))

    order = {"speak": 0, "stop": 0, "label": 1, "action_payload": 2, "malformed": 3}
    entries.sort(key=lambda e: (e.t, order[e.kind]))
    return EventLog(entries)


def predicted_actions(log: EventLog) -> list:
    """Tool calls in the log as (ActionObject, anchor time) pairs."""
    out = []
    for n, e in enumerate(log.tool_calls()):
        if e.payload.get("name") is None:
            continue
        try:
            a = ActionObject(id=n, name=e.payload["name"], offset_s=e.t,
                             planning=e.payload.get("planning") or None,
                             parameters=dict(e.payload.get("arguments", {})))
        except ValueError:
            logger.warning("dropping tool call naming a control label: %s", e.payload["name"])
            continue
        out.append((a, e.t))
    return out
