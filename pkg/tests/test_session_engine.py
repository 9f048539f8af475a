import random

import pytest
from hypothesis import given, settings, strategies as st

from duplexkit.casegen import gen_cases
from duplexkit.chunk_model import ActionObject, TA4Unit, Token
from duplexkit.session_engine import (
    AlwaysSilent,
    BenchCase,
    CaseError,
    EagerSpeaker,
    EventLog,
    NeverYield,
    Policy,
    TraceReplay,
    oracle_trace,
    parse_toolcall_body,
    predicted_actions,
    run_session,
)


def normal_case():
    return BenchCase("n1", 2.0, scenario="normal", user_words=[("你好", 0.2, 0.6)],
                     anchors={"t_ue": 0.6}, assistant_script=[("好", 0.64), ("的", 0.8)])


def test_always_silent_logs_nothing():
    assert len(run_session(AlwaysSilent(), normal_case())) == 0


def test_eager_speaker_speaks_at_zero():
    log = run_session(EagerSpeaker(), normal_case())
    assert [(e.t, e.kind) for e in log] == [(0.0, "speak")]


def test_never_yield():
    log = run_session(NeverYield(onset_s=0.32), normal_case())
    assert [(e.t, e.kind) for e in log] == [(0.32, "speak")]


def test_trace_replay_labels_and_speech():
    case = normal_case()
    log = run_session(TraceReplay(oracle_trace(case)), case)
    speak = log.of_kind("speak")
    assert speak[0].t == pytest.approx(0.64)
    (label,) = log.labels("response")
    assert label.t == pytest.approx(0.48)


def test_over_budget_policy_is_truncated_and_logged():
    class Chatty(Policy):
        def step(self, user):
            return TA4Unit.silence(), [Token.text("字")] * 12

    log = run_session(Chatty(), normal_case())
    assert log.of_kind("malformed")[0].payload["reason"] == "budget exceeded"


def test_invalid_case_rejected():
    with pytest.raises(CaseError):
        run_session(AlwaysSilent(), BenchCase("x", 1.0, scenario="normal"))


def test_event_log_jsonl_roundtrip():
    case = normal_case()
    log = run_session(TraceReplay(oracle_trace(case)), case)
    assert EventLog.from_jsonl(log.to_jsonl()).entries == log.entries


def test_parse_toolcall_body_forms():
    assert parse_toolcall_body('{"function": "f", "arguments": {"AC": "26度"}}') == ("f", {"AC": "26度"})
    assert parse_toolcall_body('{"function": "f", "arguments": "AC=26度, fan=2"}') == ("f", {"AC": "26度", "fan": "2"})
    assert parse_toolcall_body("not json") is None


def test_control_label_tool_call_is_dropped():
    class Sneaky(Policy):
        def step(self, user):
            if self.k == 0:
                self.k += 1
                body = '{"function": "interrupt", "arguments": {"a": "b"}}'
                from duplexkit.tokenizer import tokenize
                return TA4Unit.silence(), tokenize("<|toolcall_begin|>" + body + "<|toolcall_end|>")
            return TA4Unit.silence(), []

    case = BenchCase("s", 1.0, pattern="single", gt_actions=[ActionObject(1, "play_media", 0.5)])
    log = run_session(Sneaky(), case)
    assert len(log.tool_calls()) == 1
    assert predicted_actions(log) == []


def test_multi_action_offsets_increase():
    for case in gen_cases("multi", 50, seed=3):
        offs = [a.offset_s for a in case.gt_actions]
        assert offs == sorted(offs) and len(set(offs)) == len(offs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_speak_stop_alternate_and_align_to_clock(seed):
    rnd = random.Random(seed)
    scenario = rnd.choice(["normal", "pause", "interrupt", "backchannel"])
    case = gen_cases(scenario, 1, seed=seed)[0]
    log = run_session(TraceReplay(oracle_trace(case)), case)
    turns = [e.kind for e in log if e.kind in ("speak", "stop")]
    assert all(a != b for a, b in zip(turns, turns[1:]))
    assert not turns or turns[0] == "speak"
    for e in log:
        assert abs(e.t / 0.16 - round(e.t / 0.16)) < 1e-6
