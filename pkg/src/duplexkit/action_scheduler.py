"""FIFO action-lane scheduler with a per-chunk token budget.

Actions are served in (trigger time, id) order. Each chunk takes up to
``budget`` tokens from the head of the queue; whatever does not fit spills
into the next chunk, and a later action never starts while an earlier one
still has tokens left. Assistant speech is never affected.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from typing import Callable, Optional

from .chunk_model import (
    DEFAULT_CLOCK,
    T_TOOLCALL_BEGIN,
    T_TOOLCALL_END,
    ActionObject,
    ClockConfig,
    Token,
    chunk_index,
)
from .tokenizer import tokenize

# Canonical phrases per control label; paraphrases rotate by action id.
CANONICAL_PHRASES = {
    "response": ("用户发言结束", "检测到表达完毕", "接收到完整内容"),
    "interrupt": ("检测到用户插话", "识别到插话意图", "检测到有效发言"),
    "backchannel": ("检测到附和语气", "识别到轻微反馈", "用户仅做确认"),
}


class SchedulerError(ValueError):
    pass


def toolcall_body(name: str, parameters: dict) -> str:
    return json.dumps({"function": name, "arguments": dict(parameters)}, ensure_ascii=False)


def expand_action(a: ActionObject, tokenizer: Callable = tokenize) -> list:
    """Full token expansion of one action, before any budget is applied."""
    if a.name == "asr":
        return tokenizer(a.planning or "")
    if a.is_control:
        phrases = CANONICAL_PHRASES[a.name]
        planning = a.planning if a.planning is not None else phrases[a.id % len(phrases)]
        return tokenizer(planning) + [Token.label(a.name)]
    out = tokenizer(a.planning or "")
    out.append(T_TOOLCALL_BEGIN)
    out.extend(tokenizer(toolcall_body(a.name, a.parameters)))
    out.append(T_TOOLCALL_END)
    return out


@dataclass
class Emission:
    action: ActionObject
    trigger_chunk: int
    anchor_chunk: Optional[int] = None
    done_chunk: Optional[int] = None
    n_tokens: int = 0


class ActionQueue:
    def __init__(self, budget: int = 10, cfg: ClockConfig = DEFAULT_CLOCK,
                 tokenizer: Callable = tokenize):
        if budget < 1:
            raise SchedulerError("budget must be >= 1")
        self.budget = budget
        self.cfg = cfg
        self.tokenizer = tokenizer
        self.pending = []  # sorted by (offset_s, id)
        self._keys = []
        self.in_flight = None  # (Emission, tokens, cursor)
        self.history = {}  # id -> Emission
        self.last_index = -1

    @classmethod
    def for_clock(cls, cfg: ClockConfig, tokenizer: Callable = tokenize) -> "ActionQueue":
        return cls(cfg.action_budget, cfg, tokenizer)

    def __len__(self):
        return len(self.pending) + (self.in_flight is not None)

    @property
    def drained(self) -> bool:
        return not self.pending and self.in_flight is None

    def enqueue(self, a: ActionObject) -> "ActionQueue":
        if a.id in self.history:
            raise SchedulerError(f"duplicate action id {a.id}")
        key = (a.offset_s, a.id)
        pos = bisect.bisect(self._keys, key)
        self._keys.insert(pos, key)
        self.pending.insert(pos, a)
        self.history[a.id] = Emission(a, chunk_index(a.offset_s, self.cfg))
        return self

    def emit_for_chunk(self, idx: int) -> list:
        """Tokens for chunk ``idx``; calls must use strictly increasing ``idx``."""
        if idx <= self.last_index:
            raise SchedulerError(f"chunk {idx} after chunk {self.last_index}")
        self.last_index = idx
        out = []
        while len(out) < self.budget:
            if self.in_flight is None:
                if not self.pending or self.history[self.pending[0].id].trigger_chunk > idx:
                    break
                a = self.pending.pop(0)
                self._keys.pop(0)
                em = self.history[a.id]
                em.anchor_chunk = idx
                tokens = expand_action(a, self.tokenizer)
                em.n_tokens = len(tokens)
                self.in_flight = (em, tokens, 0)
            em, tokens, cur = self.in_flight
            take = min(self.budget - len(out), len(tokens) - cur)
            out.extend(tokens[cur:cur + take])
            cur += take
            if cur == len(tokens):
                em.done_chunk = idx
                self.in_flight = None
            else:
                self.in_flight = (em, tokens, cur)
        return out

    def anchor_chunk(self, action_id: int) -> int:
        em = self.history.get(action_id)
        if em is None or em.anchor_chunk is None:
            raise SchedulerError(f"action {action_id} was never emitted")
        return em.anchor_chunk

    def undrained(self) -> list:
        ids = [a.id for a in self.pending]
        if self.in_flight is not None:
            ids.insert(0, self.in_flight[0].action.id)
        return ids


def schedule(actions, n_chunks: int, cfg: ClockConfig = DEFAULT_CLOCK,
             tokenizer: Callable = tokenize):
    """Run a queue over ``n_chunks`` chunks; returns (per-chunk tokens, queue)."""
    q = ActionQueue.for_clock(cfg, tokenizer)
    for a in actions:
        q.enqueue(a)
    lanes = [q.emit_for_chunk(i) for i in range(n_chunks)]
    return lanes, q
