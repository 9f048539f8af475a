"""Random instance generators and reference oracles shared by the tests."""

from __future__ import annotations

import random
from pathlib import Path

from duplexkit.action_scheduler import expand_action
from duplexkit.chunk_model import (
    DEFAULT_CLOCK,
    SILENCE_CODE,
    VOICED_CODE,
    ActionObject,
    Chunk,
    ChunkTrace,
    ClockConfig,
    TA4Unit,
    Token,
    UserSegment,
    chunk_index,
)

GOLDENS = Path(__file__).parent / "goldens"

_HAN = "的一是不了人我在有他这中大来上国个到说们为子和你地出道也时年得就那要下以生会自着去之过家学对可她里后小么心多天而能好都然没日于起还发成事只作当想看文无开手十用主行方又如前所本见经头面公同三已老从动两长知民样现分将外但身些与高意进把法此实回二理美点月明其种声全工己话儿者向情部正名定女问力机给等几很业最间新什打便位因重被走电四第门相次东政海口使教西再平真听世气信北少关并内加化由却代军产入先山五太水万市眼体别处总才场师书比住员九笑性通目华报立马命张活难神数件安表原车白应路期叫死常提感金何更反合放做系计或司利受光王果亲界及今京务制解各任至清物台象记边共风战干接它许八特觉望直服毛林题建南度统色字请交爱让认算论百吃义科怎元社术结六功指思非流每青管夫连远资队跟带花快条院变联言权往展该领传近留红治决周保达办运武半候七必城父强步完革深区即求品士转量空甚众技轻程告江语英基派满式李息写呢识极令黄德收脸钱党倒未持取设始版双历越史商千片容研像找友孩站广改议形委早房音火际则首单据导影失拿网香似斯专石若兵弟谁校读志飞观争究包组造落视济喜离虽坏兴"
_LATIN = ["play", "music", "AC=26", "ok", "x", "route", "42", "set", "Beatles"]
_CONTROL = ("response", "interrupt", "backchannel")


def rand_text(rnd: random.Random, n_tokens: int) -> str:
    """Text that tokenizes to exactly ``n_tokens`` CJK tokens."""
    return "".join(rnd.choice(_HAN) for _ in range(n_tokens))


def random_action(rnd: random.Random, aid: int, max_offset: float, tools=("set_car_setting", "play_media", "navigate")):
    kind = rnd.random()
    offset = round(rnd.uniform(0, max_offset), 3)
    if kind < 0.35:
        return ActionObject(aid, "asr", offset, planning=rand_text(rnd, rnd.randint(0, 30)))
    if kind < 0.6:
        name = rnd.choice(_CONTROL)
        planning = None if rnd.random() < 0.5 else rand_text(rnd, rnd.randint(0, 20))
        return ActionObject(aid, name, offset, planning=planning)
    params = {}
    for _ in range(rnd.randint(0, 2)):
        params[rnd.choice(["target", "value", "AC"])] = rnd.choice(_LATIN + ["26度", "周杰伦"])
    return ActionObject(aid, rnd.choice(tools), offset,
                        planning=rand_text(rnd, rnd.randint(0, 8)), parameters=params)


def random_actions(rnd: random.Random, max_actions: int = 5, max_offset: float = 3.0,
                   max_tokens: int = 30) -> list:
    out = []
    aid = rnd.randint(0, 3)
    for _ in range(rnd.randint(0, max_actions)):
        while True:
            a = random_action(rnd, aid, max_offset)
            if len(expand_action(a)) <= max_tokens:
                break
        out.append(a)
        aid += rnd.randint(1, 3)
    # Equal offsets exercise the id tie-break.
    if len(out) >= 2 and rnd.random() < 0.3:
        a = out[1]
        out[1] = ActionObject(a.id, a.name, out[0].offset_s, a.planning, a.parameters)
    return out


def reference_emit(actions, budget: int, cfg: ClockConfig = DEFAULT_CLOCK) -> list:
    """Single-tape reference emitter.

    Lays every action's tokens end to end in (offset, id) order, tags each
    token with its action's trigger chunk, then fills chunks greedily from the
    front of the tape. Returns per-chunk token lists until the tape is empty.
    """
    tape = []
    for a in sorted(actions, key=lambda a: (a.offset_s, a.id)):
        trig = chunk_index(a.offset_s, cfg)
        tape.extend((tok, trig, a.id) for tok in expand_action(a))
    rows, pos, c = [], 0, 0
    while pos < len(tape):
        row = []
        while len(row) < budget and pos < len(tape) and tape[pos][1] <= c:
            row.append(tape[pos])
            pos += 1
        rows.append(row)
        c += 1
    return rows


def random_unit(rnd: random.Random) -> TA4Unit:
    r = rnd.random()
    if r < 0.35:
        return TA4Unit.silence()
    if r < 0.55:
        return TA4Unit("<tts_pad>", tuple(rnd.choice((SILENCE_CODE, VOICED_CODE)) for _ in range(4)))
    text = rnd.choice([rand_text(rnd, rnd.randint(1, 3)), rnd.choice(_LATIN)])
    return TA4Unit(text, tuple(rnd.choice((SILENCE_CODE, VOICED_CODE)) for _ in range(4)))


def random_trace(rnd: random.Random, max_chunks: int = 64, max_actions: int = 5) -> ChunkTrace:
    """A valid trace built without the scheduler.

    Action expansions are concatenated and cut into chunk-sized pieces of
    random length, so tool-call blocks often straddle chunk boundaries.
    """
    n = rnd.randint(1, max_chunks)
    budget = rnd.randint(1, 10)
    cfg = ClockConfig(action_budget=budget)
    tape = []
    for a in random_actions(rnd, max_actions):
        tape.extend(expand_action(a))
    lanes = [[] for _ in range(n)]
    pos = 0
    for c in range(n):
        if pos >= len(tape):
            break
        take = rnd.randint(0, budget)
        if c == n - 1:
            take = budget
        lanes[c] = tape[pos:pos + take]
        pos += take
    if pos < len(tape):
        # Drop a dangling tail so the stream stays balanced.
        kept = [t for lane in lanes for t in lane]
        depth = 0
        for t in kept:
            if t.kind == "marker" and t.value == "<|toolcall_begin|>":
                depth += 1
            elif t.kind == "marker" and t.value == "<|toolcall_end|>":
                depth -= 1
        if depth:
            for lane in reversed(lanes):
                while lane:
                    t = lane.pop()
                    if t.kind == "marker" and t.value == "<|toolcall_begin|>":
                        break
                else:
                    continue
                break
    chunks = tuple(
        Chunk(c, UserSegment(("U", "U"), ((rand_text(rnd, 1), c * 0.16),) if rnd.random() < 0.3 else ()),
              random_unit(rnd), tuple(lanes[c]))
        for c in range(n)
    )
    return ChunkTrace(chunks, task=rnd.choice(["dialogue", "toolcall"]), clock=cfg)


def toolcall_depths(tokens) -> list:
    depth, out = 0, []
    for t in tokens:
        if t.kind == "marker" and t.value == "<|toolcall_begin|>":
            depth += 1
        elif t.kind == "marker" and t.value == "<|toolcall_end|>":
            depth -= 1
        out.append(depth)
    return out


def tok(text: str) -> Token:
    return Token.text(text)
