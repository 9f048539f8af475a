"""Chunk-level full-duplex dialogue protocol tools."""

from .action_scheduler import ActionQueue, expand_action, schedule
from .bench_scorer import aggregate, load_tool_registry, match_tool_calls, score_case
from .chunk_model import (
    DEFAULT_CLOCK,
    ActionObject,
    Chunk,
    ChunkTrace,
    ClockConfig,
    TA4Unit,
    Token,
    UserSegment,
    chunk_index,
)
from .session_engine import BenchCase, EventLog, run_session
from .trace_compiler import SessionSpec, compile_session
from .wire_codec import StreamParser, decode_trace, encode_trace

__all__ = [
    "DEFAULT_CLOCK", "ActionObject", "ActionQueue", "BenchCase", "Chunk", "ChunkTrace",
    "ClockConfig", "EventLog", "SessionSpec", "StreamParser", "TA4Unit", "Token",
    "UserSegment", "aggregate", "chunk_index", "compile_session", "decode_trace",
    "encode_trace", "expand_action", "load_tool_registry", "match_tool_calls",
    "run_session", "schedule", "score_case",
]
