"""History CSV and batch-log persistence.

The CSV header is ``eval_id,phase,status,duration_s,<parameters...>,response``.
Floats use the shortest round-trip representation; failed evaluations leave
``response`` empty. A trailing line without a newline is treated as a torn
write and dropped on read.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from egohpo.driver import BatchRecord, Observation, RunHistory, impute_failed, to_internal
from egohpo.errors import DomainError
from egohpo.search_space import SearchSpace

FIXED_COLUMNS = ("eval_id", "phase", "status", "duration_s")


class HistoryFormatError(DomainError):
    """The history file does not follow the expected layout."""


def header(space: SearchSpace) -> str:
    return ",".join([*FIXED_COLUMNS, *space.names, "response"])


def fmt_float(v: float) -> str:
    return repr(float(v))


def format_row(obs: Observation, space: SearchSpace) -> str:
    values = [
        str(int(r)) if p.integer else fmt_float(r) for p, r in zip(space.params, obs.raw)
    ]
    response = "" if obs.response is None else fmt_float(obs.response)
    return ",".join([str(obs.eval_id), obs.phase, obs.status, fmt_float(obs.duration_s), *values, response])


def emit(history: RunHistory) -> str:
    lines = [header(history.space)] + [format_row(o, history.space) for o in history.observations]
    return "\n".join(lines) + "\n"


def _complete_lines(text: str) -> list[str]:
    lines = text.split("\n")
    # the last element is "" after a final newline, or a torn partial row
    return [ln for ln in lines[:-1]]


def parse(text: str, space: SearchSpace, direction: str = "minimize") -> RunHistory:
    """Rebuild a :class:`RunHistory` from CSV text."""
    lines = _complete_lines(text)
    if not lines:
        raise HistoryFormatError("history is empty (no header)")
    if lines[0] != header(space):
        raise HistoryFormatError(f"unexpected header {lines[0]!r}; expected {header(space)!r}")
    history = RunHistory(space=space, direction=direction)
    d = space.dim
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(FIXED_COLUMNS) + d + 1:
            raise HistoryFormatError(f"line {lineno}: expected {len(FIXED_COLUMNS) + d + 1} fields")
        try:
            eval_id = int(cells[0])
            phase, status = cells[1], cells[2]
            duration = float(cells[3])
            raw = np.array([float(c) for c in cells[4:4 + d]])
            response = float(cells[-1]) if cells[-1] else None
        except ValueError as exc:
            raise HistoryFormatError(f"line {lineno}: {exc}") from None
        if phase not in ("init", "ego") or status not in ("ok", "failed"):
            raise HistoryFormatError(f"line {lineno}: bad phase/status {phase!r}/{status!r}")
        if (status == "ok") != (response is not None):
            raise HistoryFormatError(f"line {lineno}: status {status} with response {cells[-1]!r}")
        try:
            u = space.to_unit(raw)
        except DomainError as exc:
            raise HistoryFormatError(f"line {lineno}: {exc}") from None
        obs = Observation(
            eval_id=eval_id, phase=phase, u=u, raw=raw, response=response,
            internal=None if response is None else to_internal(response, direction),
            status=status, duration_s=duration,
        )
        if status == "failed":
            impute_failed(history, obs)
        try:
            history.append(obs)
        except DomainError as exc:
            raise HistoryFormatError(f"line {lineno}: {exc}") from None
    return history


def read(path, space: SearchSpace, direction: str = "minimize") -> RunHistory:
    return parse(Path(path).read_text(encoding="utf-8"), space, direction)


def _sync(fh):
    fh.flush()
    os.fsync(fh.fileno())


def write(path, history: RunHistory):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(emit(history))
        _sync(fh)


def append(path, observations, space: SearchSpace):
    path = Path(path)
    new_file = not path.exists()
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        if new_file:
            fh.write(header(space) + "\n")
        for o in observations:
            fh.write(format_row(o, space) + "\n")
        _sync(fh)


def append_batch_record(path, record: BatchRecord):
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        _sync(fh)


def read_batch_records(path) -> list[BatchRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for line in _complete_lines(path.read_text(encoding="utf-8")):
        if line.strip():
            records.append(BatchRecord.from_dict(json.loads(line)))
    return records


def trim_partial_line(path):
    """Drop a torn trailing row left by a crash mid-write."""
    path = Path(path)
    data = path.read_bytes()
    if data and not data.endswith(b"\n"):
        path.write_bytes(data[: data.rfind(b"\n") + 1])
