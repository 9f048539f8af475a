import random

import pytest
from hypothesis import given, settings, strategies as st

from duplexkit.chunk_model import ActionObject, ClockConfig, validate_trace
from duplexkit.trace_compiler import (
    ASR_LAG_CHUNKS,
    CompileError,
    SessionSpec,
    compile_session,
    resolve_system_prompt,
    snap_offset,
)
from duplexkit.wire_codec import dumps_trace, encode_trace, lex_line

from helpers import GOLDENS

NAMES = ["a1_asr_human", "a2_asr_assistant", "a3_toolcall", "a4_interrupt", "a5_backchannel"]


def load_spec(name):
    return SessionSpec.from_json((GOLDENS / f"{name}.jsonl").read_text(encoding="utf-8").strip())


def golden_lines(name):
    return [l for l in (GOLDENS / f"{name}.wire").read_text(encoding="utf-8").splitlines()
            if not l.startswith("# ")]


def lane(chunk):
    return [t.value for t in chunk.action]


@pytest.mark.parametrize("name", NAMES)
def test_golden_exact(name):
    text = dumps_trace(compile_session(load_spec(name)))
    assert text == (GOLDENS / f"{name}.wire").read_text(encoding="utf-8").rstrip("\n")


def test_a1_transcript_lag_and_merge():
    trace = compile_session(load_spec("a1_asr_human"))
    assert [lane(c) for c in trace.chunks[2:5]] == [["今", "天"], ["天", "气", "很"], ["好"]]
    assert all(not c.action for c in trace.chunks[:2])


def test_a3_shape():
    trace = compile_session(load_spec("a3_toolcall"))
    begin = next(c.index for c in trace.chunks if "<|toolcall_begin|>" in lane(c))
    end = next(c.index for c in trace.chunks if "<|toolcall_end|>" in lane(c))
    first = next(c.index for c in trace.chunks if c.action)
    assert first == 3 and end > begin and end - first >= 1
    anchors = [c.assistant.anchor for c in trace.chunks]
    assert anchors[4] == "我"
    assert anchors[-4:] == ["<tts_pad>"] * 3 + ["<vad_silence>"]


def test_a4_interrupt_then_silence():
    trace = compile_session(load_spec("a4_interrupt"))
    k = next(c.index for c in trace.chunks if "<interrupt>" in lane(c))
    assert all(c.assistant.anchor == "<vad_silence>" for c in trace.chunks[k + 1:])


def test_a5_backchannel_keeps_speaking():
    trace = compile_session(load_spec("a5_backchannel"))
    assert any("<backchannel>" in lane(c) for c in trace.chunks)
    assert all(c.assistant.anchor != "<vad_silence>" for c in trace.chunks)


def test_goldens_lex_to_same_kinds():
    for name in NAMES:
        compiled = [t.kind for t in encode_trace(compile_session(load_spec(name)))]
        lexed = [t.kind for line in golden_lines(name) for t in lex_line(line)]
        assert compiled == lexed, name


@pytest.mark.parametrize("t, k", [(0.50, 3), (1.27, 7), (0.0, 0)])
def test_snap_offset(t, k):
    assert snap_offset(t) == k


def test_snap_offset_past_duration():
    with pytest.raises(CompileError):
        snap_offset(2.0, duration_s=1.0)


def test_empty_session():
    trace = compile_session(SessionSpec("dialogue", 0.8))
    assert len(trace) == 5
    assert all(c.assistant.anchor == "<vad_silence>" and not c.action for c in trace.chunks)


def test_system_prompts():
    assert resolve_system_prompt("dialogue") == ""
    assert "小明" in resolve_system_prompt("interrupt", "小明")
    with pytest.raises(CompileError):
        resolve_system_prompt("interrupt")
    with pytest.raises(CompileError):
        resolve_system_prompt("karaoke")


def test_undrainable_lane_is_an_error():
    spec = SessionSpec("dialogue", 0.32, actions=[ActionObject(1, "asr", 0.16, planning="一二三四五六七八九十十一")])
    with pytest.raises(CompileError, match="undrained"):
        compile_session(spec)


def test_invalid_spec_is_an_error():
    spec = SessionSpec("dialogue", 1.0, actions=[ActionObject(1, "response", 2.0)])
    with pytest.raises(CompileError):
        compile_session(spec)


def test_spec_json_roundtrip():
    spec = load_spec("a3_toolcall")
    assert SessionSpec.from_dict(spec.to_dict()) == spec


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_compiled_traces_are_valid_and_deterministic(seed):
    rnd = random.Random(seed)
    words, t = [], rnd.uniform(0, 0.5)
    for _ in range(rnd.randint(0, 8)):
        words.append((rnd.choice(["今", "天气", "hello", "好"]), round(t, 3), round(t + 0.2, 3)))
        t += rnd.uniform(0.2, 0.6)
    duration = round(t + 2.0, 3)
    spec = SessionSpec("asr_human", duration, user_words=words,
                       assistant_script=[("好", 0.5), ("的", 0.66)])
    a, b = compile_session(spec), compile_session(spec)
    assert a == b and validate_trace(a) == []
    assert len(a) == -(-round(duration * 1000) // 160)
    # The transcript for a user word never appears before its chunk plus the lag.
    first_word_chunk = min((int(w[1] * 1000) // 160 for w in words), default=None)
    first_action = next((c.index for c in a.chunks if c.action), None)
    if first_word_chunk is None:
        assert first_action is None
    else:
        assert first_action == first_word_chunk + ASR_LAG_CHUNKS


def test_other_chunk_sizes():
    cfg = ClockConfig.with_chunk_ms(240)
    trace = compile_session(SessionSpec("dialogue", 1.2, actions=[ActionObject(1, "response", 0.5)]), cfg)
    assert len(trace) == 5
    assert next(c.index for c in trace.chunks if c.action) == 2
