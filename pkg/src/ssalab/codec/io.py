"""Trace files, layout sidecars and JSONL event logs."""
from __future__ import annotations

import json
from pathlib import Path

from ..search.core import Action, Outcome, SearchState, StepEvent, TrailEntry
from .encode import Trace


def write_traces(path, traces) -> None:
    path = Path(path)
    path.write_text("".join(" ".join(t.tokens) + "\n" for t in traces), encoding="utf-8")
    side = [{"prefix_len": t.prefix_len, "blocks": [list(b) for b in t.blocks], "actions": t.actions,
             "domain": t.domain, "format": t.fmt} for t in traces]
    path.with_suffix(".layout.json").write_text(json.dumps(side), encoding="utf-8")


def read_traces(path) -> list:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    side = json.loads(path.with_suffix(".layout.json").read_text(encoding="utf-8"))
    return [Trace(line.split(), s["prefix_len"], [tuple(b) for b in s["blocks"]], s["actions"], s["domain"],
                  s["format"]) for line, s in zip(lines, side)]


def _jv(x):
    return x if isinstance(x, (bool, int, float, str)) or x is None else repr(x)


def _state_json(s: SearchState) -> dict:
    return {
        "assignment": [[k, v] for k, v in sorted(s.assignment.items())],
        "domains": [[k, list(v)] for k, v in sorted(s.domains.items())],
        "trail": [[e.var, e.value, e.level, e.forced, _jv(e.reason)] for e in s.trail],
        "level": s.level,
        "tried": [[k, sorted(v)] for k, v in sorted(s.tried.items())],
        "conflict": _jv(s.conflict),
    }


def _state_from(d: dict) -> SearchState:
    return SearchState(
        {k: v for k, v in d["assignment"]},
        {k: tuple(v) for k, v in d["domains"]},
        tuple(TrailEntry(*e) for e in d["trail"]),
        d["level"],
        {k: frozenset(v) for k, v in d["tried"]},
        d["conflict"],
    )


def event_to_json(ev: StepEvent) -> str:
    o = ev.outcome
    return json.dumps({
        "state_before": _state_json(ev.state_before),
        "action": {"kind": ev.action.kind, "var": ev.action.var, "value": ev.action.value},
        "evidence": _jv(repr(ev.evidence)) if ev.evidence is not None else None,
        "outcome": {"kind": o.kind, "target": o.target, "retry": list(o.retry) if o.retry else None,
                    "solved": o.solved},
        "state_after": _state_json(ev.state_after),
    }, sort_keys=True)


def event_from_json(line: str) -> StepEvent:
    d = json.loads(line)
    a = d["action"]
    o = d["outcome"]
    return StepEvent(_state_from(d["state_before"]), Action(a["kind"], a["var"], a["value"]), d["evidence"],
                     Outcome(o["kind"], o["target"], tuple(o["retry"]) if o["retry"] else None, o["solved"]),
                     _state_from(d["state_after"]))


def write_event_log(path, events) -> None:
    Path(path).write_text("".join(event_to_json(e) + "\n" for e in events), encoding="utf-8")


def read_event_log(path) -> list:
    return [event_from_json(l) for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
