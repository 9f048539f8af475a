"""Deterministic text tokenizer for the action lane.

Rules: marker and control-label strings are single special tokens; CJK text
yields one token per grapheme cluster; any other text splits on whitespace.
A token that followed whitespace in the source carries a leading ``▁`` so
that :func:`detokenize` restores the original spacing (JSON bodies depend
on it).
"""

from __future__ import annotations

import re

import regex

from .chunk_model import CONTROL_LABELS, MARKERS, Token

SPACE_MARK = "▁"

_SPECIAL_RE = re.compile("(" + "|".join(re.escape(s) for s in sorted(MARKERS | CONTROL_LABELS, key=len, reverse=True)) + ")")

_CJK_RANGES = (
    (0x1100, 0x11FF),    # Hangul Jamo
    (0x2E80, 0x2FDF),    # CJK radicals
    (0x3000, 0x303F),    # CJK symbols and punctuation
    (0x3040, 0x30FF),    # Hiragana, Katakana
    (0x3100, 0x31FF),
    (0x3200, 0x4DBF),    # enclosed, compatibility, ext A
    (0x4E00, 0x9FFF),    # unified ideographs
    (0xAC00, 0xD7AF),    # Hangul syllables
    (0xF900, 0xFAFF),    # compatibility ideographs
    (0xFE30, 0xFE4F),    # compatibility forms
    (0xFF00, 0xFFEF),    # full/half width forms
    (0x20000, 0x3FFFF),  # supplementary ideographs
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def _split_plain(text: str, out: list) -> None:
    spaced = False
    buf = []

    def flush():
        nonlocal spaced
        if buf:
            out.append(Token.text((SPACE_MARK if spaced else "") + "".join(buf)))
            buf.clear()
            spaced = False

    for g in regex.findall(r"\X", text):
        if g.isspace():
            flush()
            spaced = True
        elif is_cjk(g[0]):
            flush()
            out.append(Token.text((SPACE_MARK if spaced else "") + g))
            spaced = False
        else:
            buf.append(g)
    flush()


def tokenize(text: str) -> list:
    """Split ``text`` into action-lane tokens."""
    out = []
    for piece in _SPECIAL_RE.split(text):
        if not piece:
            continue
        if piece in MARKERS:
            out.append(Token.marker(piece))
        elif piece in CONTROL_LABELS:
            out.append(Token.label(piece))
        else:
            _split_plain(piece, out)
    return out


def count_tokens(text: str) -> int:
    return len(tokenize(text))


def detokenize(tokens) -> str:
    parts = []
    for tok in tokens:
        v = str(tok.value)
        if tok.kind == "text" and v.startswith(SPACE_MARK):
            v = " " + v[1:]
        parts.append(v)
    return "".join(parts)
