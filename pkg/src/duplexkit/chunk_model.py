"""Domain types and the 160 ms conversational clock."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

USER_BEGIN = "<|user_audio_begin|>"
USER_END = "<|user_audio_end|>"
ASSISTANT_BEGIN = "<|assistant_audio_begin|>"
ASSISTANT_END = "<|assistant_audio_end|>"
ACTION_END = "<|action_end|>"
TOOLCALL_BEGIN = "<|toolcall_begin|>"
TOOLCALL_END = "<|toolcall_end|>"
VAD_SILENCE = "<vad_silence>"
TTS_PAD = "<tts_pad>"

MARKERS = frozenset({
    USER_BEGIN, USER_END, ASSISTANT_BEGIN, ASSISTANT_END, ACTION_END,
    TOOLCALL_BEGIN, TOOLCALL_END, VAD_SILENCE, TTS_PAD,
})

INTERRUPT = "<interrupt>"
BACKCHANNEL = "<backchannel>"
RESPONSE = "<response>"
CONTROL_LABELS = frozenset({INTERRUPT, BACKCHANNEL, RESPONSE})

CONTROL_NAMES = ("response", "interrupt", "backchannel")
RESERVED_NAMES = frozenset(CONTROL_NAMES + ("asr",))

# Synthetic two-symbol assistant codebook.
SILENCE_CODE = 0
VOICED_CODE = 1
AUDIO_CODES = (SILENCE_CODE, VOICED_CODE)

# Opaque user feature placeholder, shown as "U" on the wire.
USER_FEAT = "U"

TOKEN_KINDS = ("marker", "text", "control_label", "audio_code", "user_feat")

# Tolerance for float time arithmetic on the chunk grid.
TIME_EPS = 1e-9


def label_token(name: str) -> str:
    return f"<{name}>"


def label_name(token_value: str) -> str:
    return token_value[1:-1]


class ClockError(ValueError):
    pass


@dataclass(frozen=True)
class ClockConfig:
    chunk_ms: int = 160
    user_stride_ms: int = 80
    audio_stride_ms: int = 40
    user_feats_per_chunk: int = 2
    audio_tokens_per_chunk: int = 4
    action_budget: int = 10

    def __post_init__(self):
        if self.chunk_ms != self.user_feats_per_chunk * self.user_stride_ms:
            raise ClockError("chunk_ms must equal user_feats_per_chunk * user_stride_ms")
        if self.chunk_ms != self.audio_tokens_per_chunk * self.audio_stride_ms:
            raise ClockError("chunk_ms must equal audio_tokens_per_chunk * audio_stride_ms")
        if self.action_budget < 1:
            raise ClockError("action_budget must be >= 1")

    @property
    def chunk_s(self) -> float:
        return self.chunk_ms / 1000

    @classmethod
    def with_chunk_ms(cls, chunk_ms: int, action_budget: int = 10) -> "ClockConfig":
        """Scale a default-shaped clock (2 user feats, 4 audio codes) to ``chunk_ms``."""
        if chunk_ms % 4:
            raise ClockError(f"chunk_ms={chunk_ms} is not divisible into 4 audio strides")
        return cls(chunk_ms=chunk_ms, user_stride_ms=chunk_ms // 2,
                   audio_stride_ms=chunk_ms // 4, action_budget=action_budget)

    def to_dict(self) -> dict:
        return {
            "chunk_ms": self.chunk_ms,
            "user_stride_ms": self.user_stride_ms,
            "audio_stride_ms": self.audio_stride_ms,
            "user_feats_per_chunk": self.user_feats_per_chunk,
            "audio_tokens_per_chunk": self.audio_tokens_per_chunk,
            "action_budget": self.action_budget,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClockConfig":
        return cls(**d)


DEFAULT_CLOCK = ClockConfig()


def chunk_index(t: float, cfg: ClockConfig = DEFAULT_CLOCK) -> int:
    """Chunk ordinal containing time ``t`` (seconds): floor(t / chunk)."""
    if t < 0:
        raise ClockError(f"negative time {t}")
    # Rounding first keeps 0.48 / 0.16 from landing on 2.9999999999999996.
    return math.floor(round(t * 1000 / cfg.chunk_ms, 9))


def chunk_start_time(idx: int, cfg: ClockConfig = DEFAULT_CLOCK) -> float:
    return idx * cfg.chunk_ms / 1000


def num_chunks(duration_s: float, cfg: ClockConfig = DEFAULT_CLOCK) -> int:
    """Number of chunks needed to cover ``duration_s``: ceil(duration / chunk)."""
    if duration_s < 0:
        raise ClockError(f"negative duration {duration_s}")
    return math.ceil(round(duration_s * 1000 / cfg.chunk_ms, 9))


@dataclass(frozen=True)
class Token:
    kind: str
    value: Union[str, int]

    def __post_init__(self):
        if self.kind not in TOKEN_KINDS:
            raise ValueError(f"unknown token kind {self.kind!r}")

    def __repr__(self):
        return f"Token({self.kind}:{self.value!r})"

    @property
    def wire(self) -> str:
        if self.kind == "audio_code":
            return f"A{self.value}"
        return str(self.value)

    @classmethod
    def marker(cls, value: str) -> "Token":
        if value not in MARKERS:
            raise ValueError(f"not a marker: {value!r}")
        return cls("marker", value)

    @classmethod
    def text(cls, value: str) -> "Token":
        return cls("text", value)

    @classmethod
    def label(cls, value: str) -> "Token":
        if value not in CONTROL_LABELS:
            value = label_token(value)
        if value not in CONTROL_LABELS:
            raise ValueError(f"not a control label: {value!r}")
        return cls("control_label", value)

    @classmethod
    def code(cls, value: int) -> "Token":
        return cls("audio_code", value)


# Shared instances for the fixed frame skeleton.
T_USER_BEGIN = Token.marker(USER_BEGIN)
T_USER_END = Token.marker(USER_END)
T_ASSISTANT_BEGIN = Token.marker(ASSISTANT_BEGIN)
T_ASSISTANT_END = Token.marker(ASSISTANT_END)
T_ACTION_END = Token.marker(ACTION_END)
T_TOOLCALL_BEGIN = Token.marker(TOOLCALL_BEGIN)
T_TOOLCALL_END = Token.marker(TOOLCALL_END)
T_VAD_SILENCE = Token.marker(VAD_SILENCE)
T_TTS_PAD = Token.marker(TTS_PAD)
T_USER_FEAT = Token("user_feat", USER_FEAT)


@dataclass(frozen=True)
class TA4Unit:
    """One assistant anchor followed by its audio codes.

    ``anchor`` is either ``VAD_SILENCE``, ``TTS_PAD`` or a text token string.
    """

    anchor: str
    audio: tuple = (SILENCE_CODE,) * 4

    @property
    def is_text(self) -> bool:
        return self.anchor not in (VAD_SILENCE, TTS_PAD)

    @property
    def anchor_token(self) -> Token:
        if self.is_text:
            return Token.text(self.anchor)
        return Token.marker(self.anchor)

    @classmethod
    def silence(cls, n_codes: int = 4) -> "TA4Unit":
        return cls(VAD_SILENCE, (SILENCE_CODE,) * n_codes)

    @classmethod
    def pad(cls, voiced: bool = True, n_codes: int = 4) -> "TA4Unit":
        return cls(TTS_PAD, ((VOICED_CODE if voiced else SILENCE_CODE),) * n_codes)

    @classmethod
    def speech(cls, text: str, n_codes: int = 4) -> "TA4Unit":
        return cls(text, (VOICED_CODE,) * n_codes)


@dataclass(frozen=True)
class UserSegment:
    # Transcript hints are annotation only; they never reach the wire and are
    # ignored by equality so that decode(encode(trace)) == trace.
    feats: tuple = (USER_FEAT, USER_FEAT)
    transcript_hint: tuple = field(default=(), compare=False)

    @property
    def text(self) -> str:
        return "".join(w for w, _ in self.transcript_hint)


@dataclass(frozen=True)
class ActionObject:
    id: int
    name: str
    offset_s: float
    planning: Optional[str] = None
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.offset_s < 0:
            raise ValueError(f"action {self.id}: negative offset {self.offset_s}")
        if self.name in RESERVED_NAMES and self.parameters:
            raise ValueError(f"action {self.id}: {self.name!r} takes no parameters")

    def __hash__(self):
        return hash((self.id, self.name, self.offset_s))

    @property
    def is_control(self) -> bool:
        return self.name in CONTROL_NAMES

    @property
    def is_tool(self) -> bool:
        return self.name not in RESERVED_NAMES

    def to_dict(self) -> dict:
        d = {"id": self.id, "name": self.name, "offset_s": self.offset_s}
        if self.planning is not None:
            d["planning"] = self.planning
        if self.parameters:
            d["parameters"] = dict(self.parameters)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ActionObject":
        return cls(
            id=int(d["id"]),
            name=d["name"],
            offset_s=float(d.get("offset_s", d.get("offset", 0.0))),
            planning=d.get("planning"),
            parameters={str(k): str(v) for k, v in (d.get("parameters") or {}).items()},
        )


@dataclass(frozen=True)
class Chunk:
    index: int
    user: UserSegment = UserSegment()
    assistant: TA4Unit = TA4Unit.silence()
    action: tuple = ()


@dataclass(frozen=True)
class ChunkTrace:
    chunks: tuple
    task: str = "dialogue"
    system_prompt: str = ""
    clock: ClockConfig = DEFAULT_CLOCK

    def __len__(self):
        return len(self.chunks)

    @property
    def duration_s(self) -> float:
        return chunk_start_time(len(self.chunks), self.clock)

    def meta(self) -> dict:
        return {"task": self.task, "system_prompt": self.system_prompt,
                "clock": self.clock.to_dict()}


def is_speaking(unit: TA4Unit) -> bool:
    """Whether a TA4 unit carries audible assistant content."""
    if unit.anchor == VAD_SILENCE:
        return False
    if unit.anchor == TTS_PAD:
        return any(c != SILENCE_CODE for c in unit.audio)
    return True


def validate_chunk(c: Chunk, cfg: ClockConfig = DEFAULT_CLOCK) -> list:
    """Return a list of invariant violations for ``c``; empty means valid."""
    problems = []
    if len(c.user.feats) != cfg.user_feats_per_chunk:
        problems.append(f"user arity: {len(c.user.feats)} placeholders, "
                        f"expected {cfg.user_feats_per_chunk}")
    unit = c.assistant
    if len(unit.audio) != cfg.audio_tokens_per_chunk:
        problems.append(f"TA4 arity: {len(unit.audio)} audio codes, "
                        f"expected {cfg.audio_tokens_per_chunk}")
    if any(code not in AUDIO_CODES for code in unit.audio):
        problems.append("unknown audio code")
    if unit.anchor == VAD_SILENCE and any(code != SILENCE_CODE for code in unit.audio):
        problems.append("vad_silence anchor with voiced audio")
    if unit.is_text:
        if not unit.anchor or any(ch.isspace() for ch in unit.anchor):
            problems.append(f"bad anchor text {unit.anchor!r}")
        elif unit.anchor in MARKERS or unit.anchor in CONTROL_LABELS:
            problems.append(f"anchor is a reserved token {unit.anchor!r}")
    if len(c.action) > cfg.action_budget:
        problems.append(f"budget exceeded: {len(c.action)} action tokens > {cfg.action_budget}")
    for tok in c.action:
        if tok.kind in ("audio_code", "user_feat"):
            problems.append(f"{tok.kind} token on the action lane")
        elif tok.kind == "marker" and tok.value not in (TOOLCALL_BEGIN, TOOLCALL_END):
            problems.append(f"frame marker {tok.value} on the action lane")
        elif tok.kind == "text":
            v = tok.value
            if not v or any(ch.isspace() for ch in v) or v in MARKERS or v in CONTROL_LABELS:
                problems.append(f"bad action text token {v!r}")
    return problems


def validate_trace(trace: ChunkTrace) -> list:
    problems = []
    for pos, c in enumerate(trace.chunks):
        if c.index != pos:
            problems.append(f"chunk {pos}: index {c.index} out of place")
        problems.extend(f"chunk {pos}: {p}" for p in validate_chunk(c, trace.clock))
    return problems
