"""Chunk frames <-> flat token stream, whole-stream and incremental.

A frame is::

    <|user_audio_begin|> U U <|user_audio_end|>
    <|assistant_audio_begin|> T A A A A <|assistant_audio_end|>
    <action tokens...> <|action_end|>

The textual form puts one frame per line with tokens separated by single
spaces. A block of frames may be preceded by a ``# {json}`` metadata line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

from .chunk_model import (
    ACTION_END,
    ASSISTANT_BEGIN,
    ASSISTANT_END,
    CONTROL_LABELS,
    DEFAULT_CLOCK,
    MARKERS,
    T_ACTION_END,
    T_ASSISTANT_BEGIN,
    T_ASSISTANT_END,
    T_USER_BEGIN,
    T_USER_END,
    T_USER_FEAT,
    TOOLCALL_BEGIN,
    TOOLCALL_END,
    TTS_PAD,
    USER_BEGIN,
    USER_END,
    USER_FEAT,
    VAD_SILENCE,
    Chunk,
    ChunkTrace,
    ClockConfig,
    TA4Unit,
    Token,
    UserSegment,
    validate_chunk,
)


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    def __init__(self, reason: str, position: int):
        super().__init__(f"{reason} at token {position}")
        self.reason = reason
        self.position = position


@dataclass(frozen=True)
class ParseEvent:
    kind: str  # chunk_complete | toolcall_open | toolcall_close | malformed
    index: int = -1  # chunk ordinal the event belongs to
    chunk: Optional[Chunk] = None
    reason: Optional[str] = None
    position: Optional[int] = None


def encode_chunk(c: Chunk, cfg: ClockConfig = DEFAULT_CLOCK) -> list:
    problems = validate_chunk(c, cfg)
    if problems:
        raise EncodeError(f"chunk {c.index}: {'; '.join(problems)}")
    out = [T_USER_BEGIN]
    out.extend(T_USER_FEAT for _ in c.user.feats)
    out.append(T_USER_END)
    out.append(T_ASSISTANT_BEGIN)
    out.append(c.assistant.anchor_token)
    out.extend(Token.code(code) for code in c.assistant.audio)
    out.append(T_ASSISTANT_END)
    out.extend(c.action)
    out.append(T_ACTION_END)
    return out


def encode_trace(trace: ChunkTrace) -> list:
    out = []
    for c in trace.chunks:
        out.extend(encode_chunk(c, trace.clock))
    return out


# Parser states.
_SYNC, _USER, _ASSISTANT_BEGIN, _ANCHOR, _CODES, _ASSISTANT_END, _ACTION = range(7)


class StreamParser:
    """Incremental frame parser.

    Feed tokens one at a time; :meth:`feed` returns the events they complete.
    After a malformed frame the parser drops tokens until the next
    ``<|user_audio_begin|>`` and carries on. Tool-call block state survives
    chunk boundaries because a block may close in a later chunk.
    """

    def __init__(self, cfg: ClockConfig = DEFAULT_CLOCK):
        self.cfg = cfg
        self.position = 0
        self.next_index = 0
        self.in_toolcall = False
        self._state = _SYNC
        self._synced = True  # False while skipping after an error
        self._reset_frame()

    def _reset_frame(self):
        self._feats = []
        self._anchor = None
        self._codes = []
        self._action = []
        self._frame_toolcall = self.in_toolcall

    def _malformed(self, reason: str) -> list:
        ev = ParseEvent("malformed", index=self.next_index, reason=reason, position=self.position)
        self.in_toolcall = self._frame_toolcall
        self._state = _SYNC
        self._synced = False
        self._reset_frame()
        return [ev]

    def feed(self, tok: Token) -> list:
        try:
            return self._feed(tok)
        finally:
            self.position += 1

    def _feed(self, tok: Token) -> list:
        kind, value = tok.kind, tok.value
        state = self._state

        if kind == "marker" and value == USER_BEGIN:
            if state != _SYNC:
                events = self._malformed("unterminated chunk")
                self._state = _USER
                self._synced = True
                return events
            self._state = _USER
            self._synced = True
            self._reset_frame()
            return []

        if state == _SYNC:
            if not self._synced:
                return []
            return self._malformed(f"expected {USER_BEGIN}, got {tok.wire}")

        if state == _USER:
            if kind == "user_feat":
                self._feats.append(value)
                return []
            if kind == "marker" and value == USER_END:
                if len(self._feats) != self.cfg.user_feats_per_chunk:
                    return self._malformed(f"user arity {len(self._feats)}")
                self._state = _ASSISTANT_BEGIN
                return []
            return self._malformed(f"unexpected {tok.wire} in user segment")

        if state == _ASSISTANT_BEGIN:
            if kind == "marker" and value == ASSISTANT_BEGIN:
                self._state = _ANCHOR
                return []
            return self._malformed(f"expected {ASSISTANT_BEGIN}, got {tok.wire}")

        if state == _ANCHOR:
            if kind == "text" or (kind == "marker" and value in (VAD_SILENCE, TTS_PAD)):
                self._anchor = value
                self._state = _CODES
                return []
            return self._malformed(f"bad anchor {tok.wire}")

        if state == _CODES:
            if kind == "audio_code":
                self._codes.append(value)
                if len(self._codes) == self.cfg.audio_tokens_per_chunk:
                    self._state = _ASSISTANT_END
                return []
            return self._malformed(f"TA4 arity {len(self._codes)}")

        if state == _ASSISTANT_END:
            if kind == "marker" and value == ASSISTANT_END:
                self._state = _ACTION
                return []
            return self._malformed("TA4 arity")

        # _ACTION
        if kind == "marker":
            if value == ACTION_END:
                return self._complete()
            if value == TOOLCALL_BEGIN:
                if self.in_toolcall:
                    return self._malformed("nested toolcall")
                self.in_toolcall = True
                self._action.append(tok)
                return [ParseEvent("toolcall_open", index=self.next_index, position=self.position)]
            if value == TOOLCALL_END:
                if not self.in_toolcall:
                    return self._malformed("unbalanced toolcall end")
                self.in_toolcall = False
                self._action.append(tok)
                return [ParseEvent("toolcall_close", index=self.next_index, position=self.position)]
            return self._malformed(f"unexpected {value} in action segment")
        if kind in ("text", "control_label"):
            self._action.append(tok)
            return []
        return self._malformed(f"{kind} token in action segment")

    def _complete(self) -> list:
        if len(self._action) > self.cfg.action_budget:
            return self._malformed(f"budget exceeded: {len(self._action)} action tokens")
        chunk = Chunk(
            index=self.next_index,
            user=UserSegment(tuple(self._feats)),
            assistant=TA4Unit(self._anchor, tuple(self._codes)),
            action=tuple(self._action),
        )
        self.next_index += 1
        self._state = _SYNC
        self._reset_frame()
        return [ParseEvent("chunk_complete", index=chunk.index, chunk=chunk, position=self.position)]

    @property
    def mid_frame(self) -> bool:
        return self._state != _SYNC


def parse_feed(tok: Token, state: Optional[StreamParser] = None):
    """Functional entry point: returns ``(state, events)``. ``state`` is updated in place."""
    if state is None:
        state = StreamParser()
    return state, state.feed(tok)


def iter_events(tokens: Iterable[Token], cfg: ClockConfig = DEFAULT_CLOCK):
    parser = StreamParser(cfg)
    for tok in tokens:
        yield from parser.feed(tok)
    if parser.mid_frame:
        yield ParseEvent("malformed", index=parser.next_index,
                         reason="truncated frame", position=parser.position)


def decode_trace(tokens: Iterable[Token], cfg: ClockConfig = DEFAULT_CLOCK,
                 task: str = "dialogue", system_prompt: str = "") -> ChunkTrace:
    chunks = []
    for ev in iter_events(tokens, cfg):
        if ev.kind == "malformed":
            raise DecodeError(ev.reason, ev.position)
        if ev.kind == "chunk_complete":
            chunks.append(ev.chunk)
    return ChunkTrace(tuple(chunks), task=task, system_prompt=system_prompt, clock=cfg)


# -- textual form ---------------------------------------------------------

def format_tokens(tokens: Iterable[Token]) -> str:
    """Render tokens as text, one frame per line."""
    lines, cur = [], []
    for tok in tokens:
        cur.append(tok.wire)
        if tok.kind == "marker" and tok.value == ACTION_END:
            lines.append(" ".join(cur))
            cur = []
    if cur:
        lines.append(" ".join(cur))
    return "\n".join(lines)


def lex_line(line: str) -> list:
    """Assign token kinds to one textual frame by position in the grammar."""
    out = []
    seg = None
    for s in line.split(" "):
        if not s:
            continue
        if s in MARKERS:
            out.append(Token("marker", s))
            if s == USER_BEGIN:
                seg = "user"
            elif s == ASSISTANT_BEGIN:
                seg = "anchor"
            elif s == ASSISTANT_END:
                seg = "action"
            elif s in (VAD_SILENCE, TTS_PAD) and seg == "anchor":
                seg = "codes"
            continue
        if seg == "user" and s == USER_FEAT:
            out.append(Token("user_feat", s))
        elif seg == "anchor":
            out.append(Token.text(s))
            seg = "codes"
        elif seg == "codes" and len(s) == 2 and s[0] == "A" and s[1].isdigit():
            out.append(Token.code(int(s[1])))
        elif s in CONTROL_LABELS:
            out.append(Token("control_label", s))
        else:
            out.append(Token.text(s))
    return out


def dumps_trace(trace: ChunkTrace, header: bool = True) -> str:
    body = format_tokens(encode_trace(trace))
    if not header:
        return body
    head = "# " + json.dumps(trace.meta(), ensure_ascii=False)
    return head + ("\n" + body if body else "")


def loads_traces(text: str) -> list:
    """Parse a wire text file holding one or more ``#``-headed blocks."""
    blocks = []
    meta, tokens, started = None, [], False

    def finish():
        m = meta or {}
        cfg = ClockConfig.from_dict(m["clock"]) if "clock" in m else DEFAULT_CLOCK
        blocks.append(decode_trace(tokens, cfg, task=m.get("task", "dialogue"),
                                   system_prompt=m.get("system_prompt", "")))

    for line in text.splitlines():
        if line.startswith("# "):
            if started:
                finish()
            meta, tokens, started = json.loads(line[2:]), [], True
        elif line.strip():
            started = True
            tokens.extend(lex_line(line))
    if started:
        finish()
    return blocks
