"""Synthetic benchmark cases with textual word timings.

User speech runs at a constant rate (default 4 tokens/s); reference
assistant speech places one token per chunk.
"""

from __future__ import annotations

import random

from .chunk_model import DEFAULT_CLOCK, ActionObject, ClockConfig, chunk_index
from .session_engine import PATTERNS, SCENARIOS, BenchCase

USER_RATE = 4.0  # tokens per second
PAUSE_MIN_S = 0.5

_USER_WORDS = ["今天", "我们", "那个", "想", "问", "一下", "明天", "天气", "怎么样", "会议",
               "几点", "开始", "最近", "工作", "有点", "忙", "周末", "去", "哪里", "玩"]
_FILLERS = ["嗯", "那个", "就是"]
_ACKS = [["没错"], ["对"], ["嗯嗯"], ["你", "说得对"], ["是的"], ["好的"]]
_INTERRUPT_HEAD = [["你", "说得对"], ["对"], ["嗯"]]
_INTERRUPT_BODY = ["但", "项目", "很", "紧", "我", "也", "没", "办法", "换个", "话题"]
_ASSISTANT = ["身体", "健康", "是", "最", "重要", "的", "所以", "要", "注意", "休息",
              "多", "运动", "早点", "睡觉", "好吗"]
_HISTORY = [
    [{"role": "user", "text": "你好"}, {"role": "assistant", "text": "你好，有什么可以帮你？"}],
    [{"role": "user", "text": "最近睡不好"}, {"role": "assistant", "text": "要注意作息规律。"}],
    [],
]

_TARGETS = {
    "cabin": ["空调", "座椅加热", "车窗", "除雾", "氛围灯"],
    "system": ["蓝牙", "音量", "亮度", "设置页面"],
    "navigation": ["公司", "机场", "最近的加油站", "火锅店"],
    "media": ["周杰伦", "新闻", "相声", "披头士"],
    "search": ["附近的餐厅", "酒店", "明天天气", "股票行情"],
}
_VERBS = {"cabin": "调节", "system": "设置", "navigation": "去", "media": "播放", "search": "查"}
_PLANNING = {
    "cabin": "用户需要调节车内设置",
    "system": "用户需要修改系统设置",
    "navigation": "用户需要导航",
    "media": "用户想听点内容",
    "search": "用户需要查询信息",
}


def _say(words, start: float, rate: float = USER_RATE) -> tuple:
    """Timed user words starting at ``start``; returns (timed words, end time)."""
    step = 1.0 / rate
    out, t = [], start
    for w in words:
        out.append((w, round(t, 4), round(t + step, 4)))
        t += step
    return out, round(t, 4)


def _assistant_tokens(start: float, stop: float, cfg: ClockConfig) -> list:
    """One reference token per chunk from ``start`` while onset <= ``stop``."""
    out = []
    k = chunk_index(start, cfg)
    while True:
        t = round(k * cfg.chunk_s, 4)
        if t > stop + 1e-9:
            break
        out.append((_ASSISTANT[len(out) % len(_ASSISTANT)], t))
        k += 1
    return out


def _tool_action(rnd, registry, aid: int, offset: float, family=None):
    tools = [t for t in registry if family is None or t.family == family]
    tool = rnd.choice(tools)
    target = rnd.choice(_TARGETS[tool.family])
    words = ["帮我", _VERBS[tool.family], target]
    action = ActionObject(aid, tool.name, offset, planning=_PLANNING[tool.family],
                          parameters={"target": target})
    return words, action


def gen_case(scenario: str, i: int, rnd: random.Random, cfg: ClockConfig = DEFAULT_CLOCK,
             registry=None) -> BenchCase:
    cid = f"{scenario}-{i:04d}"
    history = list(rnd.choice(_HISTORY))
    lead = round(rnd.uniform(0.2, 1.0), 2)

    if scenario == "normal":
        words, t_ue = _say(rnd.sample(_USER_WORDS, rnd.randint(3, 8)), lead)
        script = _assistant_tokens(t_ue, t_ue + rnd.randint(3, 8) * cfg.chunk_s, cfg)
        return BenchCase(cid, round(t_ue + 3.0, 4), scenario=scenario, user_words=words,
                         history=history, anchors={"t_ue": t_ue}, assistant_script=script)

    if scenario == "pause":
        first, t1 = _say(rnd.sample(_USER_WORDS, rnd.randint(2, 4)) + [rnd.choice(_FILLERS)], lead)
        gap = round(rnd.uniform(PAUSE_MIN_S, 1.5), 2)
        second, t_ue = _say(rnd.sample(_USER_WORDS, rnd.randint(2, 4)), round(t1 + gap, 4))
        script = _assistant_tokens(t_ue, t_ue + rnd.randint(3, 8) * cfg.chunk_s, cfg)
        return BenchCase(cid, round(t_ue + 3.0, 4), scenario=scenario, user_words=first + second,
                         history=history, anchors={"t_ue": t_ue}, assistant_script=script)

    if scenario == "interrupt":
        start = round(rnd.uniform(0.5, 1.5), 2)
        body = _INTERRUPT_BODY[:rnd.randint(4, len(_INTERRUPT_BODY))]
        words, end = _say(rnd.choice(_INTERRUPT_HEAD) + body, start)
        head_len = len(words) - len(body)
        # The new thought becomes clear on its second word.
        t_int = words[head_len + 1][1]
        script = _assistant_tokens(0.0, t_int, cfg)
        audio_end = round(max(end, t_int + 2.0) + 1.0, 4)
        return BenchCase(cid, audio_end, scenario=scenario, user_words=words, history=history,
                         anchors={"t_int": t_int}, assistant_script=script)

    if scenario == "backchannel":
        t_bc_s = round(rnd.uniform(1.0, 3.0), 2)
        words, t_bc_e = _say(rnd.choice(_ACKS), t_bc_s)
        audio_end = round(t_bc_e + 3.0, 4)
        script = _assistant_tokens(0.0, audio_end - 0.5, cfg)
        return BenchCase(cid, audio_end, scenario=scenario, user_words=words, history=history,
                         anchors={"t_bc_s": t_bc_s, "t_bc_e": t_bc_e}, assistant_script=script)

    if registry is None:
        from .bench_scorer import load_tool_registry
        registry = load_tool_registry()

    if scenario == "single":
        req, action = _tool_action(rnd, registry, 1, 0.0)
        words, t_ue = _say(req, lead)
        action = ActionObject(1, action.name, t_ue, action.planning, action.parameters)
        script = _assistant_tokens(t_ue + 0.32, t_ue + 0.32 + 5 * cfg.chunk_s, cfg)
        return BenchCase(cid, round(t_ue + 2.0, 4), pattern=scenario, user_words=words,
                         history=history, gt_actions=[action], assistant_script=script)

    if scenario == "multi":
        families = rnd.sample(sorted(_TARGETS), rnd.randint(2, 3))
        words, actions, t = [], [], lead
        for n, fam in enumerate(families, start=1):
            req, action = _tool_action(rnd, registry, n, 0.0, fam)
            timed, t = _say((["然后"] if n > 1 else []) + req, t)
            words += timed
            actions.append(ActionObject(n, action.name, t, action.planning, action.parameters))
        script = _assistant_tokens(t + 0.32, t + 0.32 + 5 * cfg.chunk_s, cfg)
        return BenchCase(cid, round(t + 2.0, 4), pattern=scenario, user_words=words,
                         history=history, gt_actions=actions, assistant_script=script)

    if scenario == "backchannel_action":
        req, action = _tool_action(rnd, registry, 1, 0.0)
        words, t_req = _say(req, round(rnd.uniform(1.0, 3.0), 2))
        action = ActionObject(1, action.name, t_req, action.planning, action.parameters)
        audio_end = round(t_req + 2.0, 4)
        script = _assistant_tokens(0.0, audio_end - 0.5, cfg)
        return BenchCase(cid, audio_end, pattern=scenario, user_words=words, history=history,
                         gt_actions=[action], assistant_script=script)

    raise ValueError(f"unknown scenario {scenario!r}")


def gen_cases(scenario: str, n: int, seed: int = 0, cfg: ClockConfig = DEFAULT_CLOCK,
              registry=None) -> list:
    if scenario not in SCENARIOS + PATTERNS:
        raise ValueError(f"unknown scenario {scenario!r}")
    rnd = random.Random(f"{scenario}:{seed}")
    return [gen_case(scenario, i, rnd, cfg, registry) for i in range(n)]
