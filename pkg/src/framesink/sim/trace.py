"""Line-delimited JSON traces.

One object per step, keys in ``TRACE_FIELDS`` order. Floats are written with
17 significant digits so a trace replays bit-exactly.
"""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import IO, Iterable

from framesink.sim.rollout import StepRecord

TRACE_FIELDS = tuple(f.name for f in dataclasses.fields(StepRecord))
TRACE_VERSION = 1


def _render(value) -> str:
    if value is None or isinstance(value, (bool, str)):
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"cannot serialise non-finite float {value}")
        text = format(value, ".17g")
        # keep floats recognisable as floats after a round trip
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_render(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_render(v) for v in value) + "]"
    raise TypeError(f"cannot serialise {type(value).__name__}")


def record_to_line(record: StepRecord) -> str:
    return _render({name: getattr(record, name) for name in TRACE_FIELDS})


def trace_text(records: Iterable[StepRecord]) -> str:
    return "".join(record_to_line(r) + "\n" for r in records)


def write_trace(records: Iterable[StepRecord], out: str | Path | IO[str]) -> None:
    if hasattr(out, "write"):
        out.write(trace_text(records))
    else:
        Path(out).write_text(trace_text(records), encoding="utf-8")


def parse_line(line: str) -> StepRecord:
    raw = json.loads(line)
    if tuple(raw) != TRACE_FIELDS:
        raise ValueError(f"trace fields {tuple(raw)} do not match {TRACE_FIELDS}")
    raw["retrieved"] = [(int(b), float(s)) for b, s in raw["retrieved"]]
    return StepRecord(**raw)


def read_trace(source: str | Path | IO[str]) -> list[StepRecord]:
    text = source.read() if hasattr(source, "read") else Path(source).read_text(encoding="utf-8")
    return [parse_line(line) for line in text.splitlines() if line.strip()]
