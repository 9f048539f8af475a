"""Compile an annotated session into a ground-truth chunk trace."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from .action_scheduler import ActionQueue
from .chunk_model import (
    DEFAULT_CLOCK,
    TIME_EPS,
    USER_FEAT,
    ActionObject,
    Chunk,
    ChunkTrace,
    ClockConfig,
    TA4Unit,
    UserSegment,
    chunk_index,
    chunk_start_time,
    num_chunks,
)
from .tokenizer import is_cjk, tokenize

TASKS = ("dialogue", "asr_human", "asr_assistant", "interpret",
         "interrupt", "backchannel", "pause", "toolcall")

ASR_LAG_CHUNKS = 2

_VOICE_PROMPT = "你是一个 AI 语音助手，用 {} 的声音来说话。"

SYSTEM_PROMPTS = {
    "dialogue": "",
    "asr_human": "请记录下你所听到的语音内容，只记录用户说的内容。",
    "asr_assistant": "请记录下你所听到的语音内容，只记录助手说的内容。",
    "interpret": "请翻译用户说的内容。",
    "toolcall": "你是一个专注于与人互动的 AI，既能聊天，也能使用工具来解决用户的问题。",
    "interrupt": _VOICE_PROMPT,
    "backchannel": _VOICE_PROMPT,
    "pause": _VOICE_PROMPT,
}
SPEAKER_TASKS = frozenset({"interrupt", "backchannel", "pause"})


class CompileError(ValueError):
    pass


def resolve_system_prompt(task: str, speaker: Optional[str] = None) -> str:
    if task not in SYSTEM_PROMPTS:
        raise CompileError(f"unknown task {task!r}")
    if task in SPEAKER_TASKS:
        if not speaker:
            raise CompileError(f"task {task!r} needs a speaker name")
        return SYSTEM_PROMPTS[task].format(speaker)
    return SYSTEM_PROMPTS[task]


@dataclass
class SessionSpec:
    """One annotated session.

    ``user_words`` holds ``(text, onset_s, offset_s)``. ``assistant_script``
    holds ``(text, speak_onset_s)`` or ``(text, speak_onset_s, audio_onset_s)``;
    the anchor lands at the speak-onset chunk and assistant-side ASR uses the
    audio-onset chunk (defaulting to the speak onset).
    """

    task: str
    duration_s: float
    user_words: list = field(default_factory=list)
    assistant_script: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    system_prompt: Optional[str] = None
    speaker: Optional[str] = None
    tts_pad_chunks: int = 3

    def prompt(self) -> str:
        if self.system_prompt is not None:
            return self.system_prompt
        return resolve_system_prompt(self.task, self.speaker)

    def validate(self) -> list:
        problems = []
        if self.task not in TASKS:
            problems.append(f"unknown task {self.task!r}")
        if self.tts_pad_chunks < 0:
            problems.append("tts_pad_chunks must be >= 0")
        end = self.duration_s + TIME_EPS

        def in_range(t):
            return -TIME_EPS <= t <= end

        prev_off = None
        for w in self.user_words:
            text, on, off = w
            if not (in_range(on) and in_range(off)) or off < on:
                problems.append(f"user word {text!r} has bad times ({on}, {off})")
            if prev_off is not None and on < prev_off - TIME_EPS:
                problems.append(f"user word {text!r} overlaps or is out of order")
            prev_off = off
        prev = None
        for entry in self.assistant_script:
            text, on = entry[0], entry[1]
            if not in_range(on) or (len(entry) > 2 and not in_range(entry[2])):
                problems.append(f"assistant token {text!r} outside the session")
            if prev is not None and on < prev:
                problems.append(f"assistant script out of order at {text!r}")
            prev = on
        ids = set()
        for a in self.actions:
            if a.id in ids:
                problems.append(f"duplicate action id {a.id}")
            ids.add(a.id)
            if not in_range(a.offset_s):
                problems.append(f"action {a.id} offset {a.offset_s} beyond duration {self.duration_s}")
        return problems

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "duration_s": self.duration_s,
            "user_words": [list(w) for w in self.user_words],
            "assistant_script": [list(e) for e in self.assistant_script],
            "actions": [a.to_dict() for a in self.actions],
            "tts_pad_chunks": self.tts_pad_chunks,
        }
        if self.system_prompt is not None:
            d["system_prompt"] = self.system_prompt
        if self.speaker is not None:
            d["speaker"] = self.speaker
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SessionSpec":
        return cls(
            task=d["task"],
            duration_s=float(d["duration_s"]),
            user_words=[(str(w[0]), float(w[1]), float(w[2])) for w in d.get("user_words", [])],
            assistant_script=[(str(e[0]),) + tuple(float(x) for x in e[1:])
                              for e in d.get("assistant_script", [])],
            actions=[ActionObject.from_dict(a) for a in d.get("actions", [])],
            system_prompt=d.get("system_prompt"),
            speaker=d.get("speaker"),
            tts_pad_chunks=int(d.get("tts_pad_chunks", 3)),
        )

    @classmethod
    def from_json(cls, line: str) -> "SessionSpec":
        return cls.from_dict(json.loads(line))


def snap_offset(offset_s: float, cfg: ClockConfig = DEFAULT_CLOCK,
                duration_s: Optional[float] = None) -> int:
    if duration_s is not None and offset_s > duration_s + TIME_EPS:
        raise CompileError(f"offset {offset_s} beyond duration {duration_s}")
    return chunk_index(offset_s, cfg)


def _needs_space(prev: Optional[str], cur: str) -> bool:
    return bool(prev) and not is_cjk(prev[-1]) and not is_cjk(cur[0])


def _transcript_actions(words, lag: int, cfg: ClockConfig, first_id: int) -> list:
    """One asr action per source chunk, merged text, delayed by ``lag`` chunks.

    ``words`` is a sequence of (text, chunk).
    """
    merged = {}
    prev = None
    for text, c in words:
        if not text:
            continue
        piece = (" " if _needs_space(prev, text) else "") + text
        merged[c] = merged.get(c, "") + piece
        prev = text
    out = []
    for n, c in enumerate(sorted(merged)):
        out.append(ActionObject(id=first_id + n, name="asr",
                                offset_s=chunk_start_time(c + lag, cfg),
                                planning=merged[c]))
    return out


def compile_session(spec: SessionSpec, cfg: ClockConfig = DEFAULT_CLOCK,
                    tokenizer: Callable = tokenize) -> ChunkTrace:
    problems = spec.validate()
    if problems:
        raise CompileError("; ".join(problems))
    n = num_chunks(spec.duration_s, cfg)

    hints = [[] for _ in range(n)]
    for text, on, _off in spec.user_words:
        c = chunk_index(on, cfg)
        if c < n:
            hints[c].append((text, on))

    anchors = {}
    for entry in spec.assistant_script:
        c = chunk_index(entry[1], cfg)
        anchors[c] = anchors.get(c, "") + entry[0]
    units = []
    last_text = None
    n_codes = cfg.audio_tokens_per_chunk
    for c in range(n):
        if c in anchors:
            units.append(TA4Unit.speech(anchors[c], n_codes))
            last_text = c
        elif last_text is not None and c - last_text <= spec.tts_pad_chunks:
            units.append(TA4Unit.pad(True, n_codes))
        else:
            units.append(TA4Unit.silence(n_codes))

    actions = list(spec.actions)
    next_id = max((a.id for a in actions), default=-1) + 1
    if spec.task in ("asr_human", "interpret"):
        words = [(w[0], chunk_index(w[1], cfg)) for w in spec.user_words]
        actions += _transcript_actions(words, ASR_LAG_CHUNKS, cfg, next_id)
    elif spec.task == "asr_assistant":
        words = [(e[0], chunk_index(e[2] if len(e) > 2 else e[1], cfg))
                 for e in spec.assistant_script]
        actions += _transcript_actions(words, ASR_LAG_CHUNKS, cfg, next_id)

    q = ActionQueue.for_clock(cfg, tokenizer)
    for a in actions:
        q.enqueue(a)
    lanes = [q.emit_for_chunk(i) for i in range(n)]
    if not q.drained:
        raise CompileError(f"action lane cannot drain within {n} chunks; "
                           f"undrained actions: {q.undrained()}")

    chunks = tuple(
        Chunk(index=c, user=UserSegment((USER_FEAT,) * cfg.user_feats_per_chunk, tuple(hints[c])),
              assistant=units[c], action=tuple(lanes[c]))
        for c in range(n)
    )
    return ChunkTrace(chunks, task=spec.task, system_prompt=spec.prompt(), clock=cfg)
