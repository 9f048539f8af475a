"""Turn-taking windows, tool-call matching and report aggregation."""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

from .chunk_model import RESERVED_NAMES, TIME_EPS, ActionObject
from .session_engine import BenchCase, EventLog, predicted_actions

INF = math.inf


class ScoreError(ValueError):
    pass


class RegistryError(ValueError):
    pass


# -- tool registry --------------------------------------------------------

@dataclass(frozen=True)
class ToolSpec:
    name: str
    family: str
    description: str = ""


class ToolRegistry:
    def __init__(self, tools):
        self.tools = {}
        for t in tools:
            if t.name in self.tools:
                raise RegistryError(f"duplicate tool name {t.name!r}")
            if t.name in RESERVED_NAMES:
                raise RegistryError(f"{t.name!r} is a control name, not a tool")
            self.tools[t.name] = t

    def __len__(self):
        return len(self.tools)

    def __contains__(self, name):
        return name in self.tools

    def __iter__(self):
        return iter(self.tools.values())

    def get(self, name: str) -> Optional[ToolSpec]:
        return self.tools.get(name)

    def family(self, name: str) -> str:
        return self.require(name).family

    def require(self, name: str) -> ToolSpec:
        tool = self.tools.get(name)
        if tool is None:
            raise RegistryError(f"unknown tool {name!r}")
        return tool

    def validate_call(self, a: ActionObject) -> None:
        self.require(a.name)

    def names(self) -> list:
        return list(self.tools)


def load_tool_registry(path=None) -> ToolRegistry:
    """Load a JSON list of ``{name, family, description}``; defaults to the bundled schema."""
    if path is None:
        text = resources.files("duplexkit").joinpath("data/tools.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return ToolRegistry(ToolSpec(d["name"], d["family"], d.get("description", ""))
                        for d in json.loads(text))


@functools.lru_cache(maxsize=None)
def default_registry() -> ToolRegistry:
    return load_tool_registry()


# -- turn-taking windows --------------------------------------------------

@dataclass(frozen=True)
class WindowRule:
    scenario: str
    lo_anchor: str
    lo_offset: float
    hi_anchor: Optional[str]  # None means +inf
    hi_offset: float
    target_event: str  # speak | stop | backchannel
    delay_anchor: str

    def window(self, anchors: dict) -> tuple:
        lo = anchors[self.lo_anchor] + self.lo_offset
        hi = INF if self.hi_anchor is None else anchors[self.hi_anchor] + self.hi_offset
        return lo, hi


WINDOW_RULES = {
    "normal": WindowRule("normal", "t_ue", -0.2, None, 0.0, "speak", "t_ue"),
    "pause": WindowRule("pause", "t_ue", -0.2, None, 0.0, "speak", "t_ue"),
    "interrupt": WindowRule("interrupt", "t_int", -1.0, "t_int", 2.0, "stop", "t_int"),
    "backchannel": WindowRule("backchannel", "t_bc_s", -0.2, "t_bc_e", 2.0, "backchannel", "t_bc_e"),
}


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    group: str
    hit: bool
    delay_s: Optional[float] = None
    pair_delays: tuple = ()
    note: str = ""

    def to_dict(self) -> dict:
        return {"case_id": self.case_id, "group": self.group, "hit": self.hit,
                "delay_s": self.delay_s, "pair_delays": list(self.pair_delays),
                "note": self.note}


def _matches(entry, target: str, mode: str) -> bool:
    if target == "backchannel":
        if mode == "relaxed":
            return entry.kind in ("speak", "stop")
        return entry.kind == "label" and entry.payload.get("name") == "backchannel"
    return entry.kind == target


def score_turn_taking(log: EventLog, case: BenchCase, mode: str = "labeled",
                      rule: Optional[WindowRule] = None) -> CaseScore:
    if mode not in ("labeled", "relaxed"):
        raise ScoreError(f"unknown mode {mode!r}")
    rule = rule or WINDOW_RULES.get(case.scenario)
    if rule is None:
        raise ScoreError(f"case {case.id}: no window rule for {case.scenario!r}")
    needed = {rule.lo_anchor, rule.delay_anchor} | ({rule.hi_anchor} - {None})
    missing = sorted(k for k in needed if k not in case.anchors)
    if missing:
        raise ScoreError(f"case {case.id}: missing anchors {missing}")

    lo, hi = rule.window(case.anchors)
    hits = [e.t for e in log
            if _matches(e, rule.target_event, mode) and lo - TIME_EPS <= e.t <= hi + TIME_EPS]
    if not hits:
        return CaseScore(case.id, case.scenario, False)
    t = min(hits)
    if rule.target_event == "backchannel" and mode == "relaxed":
        return CaseScore(case.id, case.scenario, True, None, note="relaxed")
    return CaseScore(case.id, case.scenario, True, abs(t - case.anchors[rule.delay_anchor]))


# -- tool-call matching ---------------------------------------------------

def _norm(s) -> str:
    return " ".join(str(s).split()).casefold()


def exact_argument_judge(pred: dict, gt: dict) -> bool:
    """Case- and whitespace-normalized equality; two empty maps match."""
    if not pred and not gt:
        return True
    return ({_norm(k): _norm(v) for k, v in pred.items()}
            == {_norm(k): _norm(v) for k, v in gt.items()})


@dataclass(frozen=True)
class ToolMatchConfig:
    early_slack_s: float = 1.0
    late_slack_s: float = 3.0
    argument_judge: Callable = exact_argument_judge
    assignment: str = "greedy"  # or "optimal"

    def __post_init__(self):
        if self.early_slack_s < 0 or self.late_slack_s < 0:
            raise ScoreError("slacks must be >= 0")
        if self.assignment not in ("greedy", "optimal"):
            raise ScoreError(f"unknown assignment {self.assignment!r}")


@dataclass(frozen=True)
class ToolMatch:
    case_hit: bool
    pairs: tuple  # (gt index, pred index)
    delays: tuple


def timing_legal(anchor_t: float, gt_offset: float, audio_end_s: float,
                 cfg: ToolMatchConfig = ToolMatchConfig()) -> bool:
    return (anchor_t >= gt_offset - cfg.early_slack_s - TIME_EPS
            and anchor_t <= audio_end_s + cfg.late_slack_s + TIME_EPS)


def _compatible(p, g, cfg, audio_end_s) -> bool:
    a, t = p
    return (a.name == g.name and cfg.argument_judge(a.parameters, g.parameters)
            and timing_legal(t, g.offset_s, audio_end_s, cfg))


def match_tool_calls(pred, gt, cfg: ToolMatchConfig = ToolMatchConfig(),
                     audio_end_s: float = INF) -> ToolMatch:
    """Match predicted (action, anchor time) pairs against ground-truth actions.

    A pair matches on equal name, judged-equal arguments and a legal trigger
    time. Each prediction is used at most once; the case is a hit when every
    ground-truth action is matched.
    """
    pred = list(pred)
    gt = list(gt)
    if cfg.assignment == "optimal":
        pairs = _optimal_pairs(pred, gt, cfg, audio_end_s)
    else:
        used = set()
        pairs = []
        for gi, g in enumerate(gt):
            for pi, p in enumerate(pred):
                if pi not in used and _compatible(p, g, cfg, audio_end_s):
                    used.add(pi)
                    pairs.append((gi, pi))
                    break
    delays = tuple(abs(pred[pi][1] - gt[gi].offset_s) for gi, pi in pairs)
    return ToolMatch(len(pairs) == len(gt), tuple(pairs), delays)


def _optimal_pairs(pred, gt, cfg, audio_end_s) -> list:
    if not pred or not gt:
        return []
    import numpy as np
    from scipy.optimize import linear_sum_assignment

    big = 1e6
    cost = np.full((len(gt), len(pred)), big)
    for gi, g in enumerate(gt):
        for pi, p in enumerate(pred):
            if _compatible(p, g, cfg, audio_end_s):
                cost[gi, pi] = abs(p[1] - g.offset_s)
    rows, cols = linear_sum_assignment(cost)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if cost[r, c] < big)


def score_tool_case(log: EventLog, case: BenchCase, cfg: ToolMatchConfig = ToolMatchConfig(),
                    registry: Optional[ToolRegistry] = None) -> CaseScore:
    pred = predicted_actions(log)
    note = ""
    if registry is not None:
        unknown = [a.name for a, _ in pred if a.name not in registry]
        if unknown:
            note = f"unknown tools ignored: {unknown}"
        pred = [(a, t) for a, t in pred if a.name in registry]
    m = match_tool_calls(pred, case.gt_actions, cfg, case.audio_end_s)
    if not m.case_hit:
        return CaseScore(case.id, case.pattern, False, None, m.delays, note)
    return CaseScore(case.id, case.pattern, True, sum(m.delays) / len(m.delays), m.delays, note)


def score_case(log: EventLog, case: BenchCase, mode: str = "labeled",
               tool_cfg: ToolMatchConfig = ToolMatchConfig(),
               registry: Optional[ToolRegistry] = None) -> CaseScore:
    if case.scenario is not None:
        return score_turn_taking(log, case, mode)
    return score_tool_case(log, case, tool_cfg, registry)


# -- aggregation ----------------------------------------------------------

GROUP_ORDER = ("normal", "pause", "interrupt", "backchannel",
               "single", "multi", "backchannel_action")


@dataclass(frozen=True)
class GroupRow:
    group: str
    n: int
    hits: int
    accuracy: float
    delay_s: Optional[float]


@dataclass
class Report:
    rows: list
    model: str = "model"
    meta: dict = field(default_factory=dict)

    def row(self, group: str) -> GroupRow:
        for r in self.rows:
            if r.group == group:
                return r
        raise KeyError(group)

    @property
    def average(self) -> GroupRow:
        """Macro average over groups."""
        delays = [r.delay_s for r in self.rows if r.delay_s is not None]
        return GroupRow("avg", sum(r.n for r in self.rows), sum(r.hits for r in self.rows),
                        sum(r.accuracy for r in self.rows) / len(self.rows),
                        sum(delays) / len(delays) if delays else None)

    def to_dict(self) -> dict:
        rows = self.rows + ([self.average] if len(self.rows) > 1 else [])
        return {"model": self.model, "meta": self.meta,
                "rows": [{"group": r.group, "n": r.n, "hits": r.hits,
                          "accuracy": round(r.accuracy, 2),
                          "delay_s": None if r.delay_s is None else round(r.delay_s, 2)}
                         for r in rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    def format_table(self) -> str:
        cols = ([("Avg.", self.average)] if len(self.rows) > 1 else [])
        cols += [(r.group, r) for r in self.rows]
        head1 = ["Model"] + [name for name, _ in cols for _ in (0, 1)]
        head2 = [""] + ["Acc.(%)", "Delay (s)"] * len(cols)
        body = [self.model]
        for _, r in cols:
            body += [f"{r.accuracy:.2f}", "N/A" if r.delay_s is None else f"{r.delay_s:.2f}"]
        widths = [max(len(a), len(b), len(c)) for a, b, c in zip(head1, head2, body)]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip()
                         for line in (head1, head2, body))


def aggregate(scores, model: str = "model") -> Report:
    """Per-group accuracy (percent) and mean delay over hits."""
    groups = {}
    for s in sorted(scores, key=lambda s: s.case_id):
        groups.setdefault(s.group, []).append(s)
    if not groups:
        raise ScoreError("nothing to aggregate")
    order = sorted(groups, key=lambda g: (GROUP_ORDER.index(g) if g in GROUP_ORDER else 99, g))
    rows = []
    for g in order:
        ss = groups[g]
        hits = [s for s in ss if s.hit]
        delays = [s.delay_s for s in hits if s.delay_s is not None]
        rows.append(GroupRow(g, len(ss), len(hits), 100.0 * len(hits) / len(ss),
                             sum(delays) / len(delays) if delays else None))
    return Report(rows, model)
