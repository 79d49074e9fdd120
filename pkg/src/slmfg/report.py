"""Report records shared by the CLI and the corpus runner.

A report is a list of records; each record is a kind plus ordered fields.
``records`` rendering is one ``key=value`` line per record (byte-stable);
``human`` rendering is an indented block per record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig


def fmt(v) -> str:
    """Stable short rendering of numbers, enums and nested sequences."""
    if isinstance(v, (list, tuple, np.ndarray)):
        return "(" + ",".join(fmt(t) for t in v) + ")"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if abs(v) < 1e-12:  # solver noise around zero
            return "0"
        return f"{v:.8g}"
    if hasattr(v, "value") and not isinstance(v, (int, np.integer)):
        return str(v.value)
    if v is None:
        return "none"
    return str(v)


def _quote(s: str) -> str:
    if s == "" or any(c.isspace() or c in '"=' for c in s):
        return json.dumps(s)
    return s


@dataclass
class Record:
    kind: str
    fields: dict = field(default_factory=dict)

    def line(self) -> str:
        parts = [f"record={self.kind}"] + [f"{k}={_quote(fmt(v))}" for k, v in self.fields.items()]
        return " ".join(parts)


@dataclass
class Report:
    cfg: RunConfig
    command: str
    records: list[Record] = field(default_factory=list)
    text: str | None = None  # raw output replacing the rendered report
    text_after: str | None = None  # appended after the rendered report (human only)

    def add(self, kind: str, /, **fields) -> Record:
        r = Record(kind, fields)
        self.records.append(r)
        return r

    def config_record(self) -> Record:
        d = self.cfg.as_dict()
        return Record("config", {"command": self.command, **{k: d[k] for k in sorted(d)}})

    def render(self, style: str | None = None) -> str:
        style = style or self.cfg.fmt
        recs = [self.config_record()] + self.records
        if style == "records":
            return "\n".join(r.line() for r in recs) + "\n"
        return "\n".join(_human(r) for r in recs) + "\n"


CHECK = {"Holds": "[x]", "Fails": "[ ]", "Unknown": "[?]"}


def _human(r: Record) -> str:
    if r.kind == "config":
        return "config: " + " ".join(f"{k}={fmt(v)}" for k, v in r.fields.items())
    if r.kind == "hypothesis":  # checklist rendering for theorem gates
        f = r.fields
        mark = CHECK.get(fmt(f.get("status")), "[?]")
        detail = f" - {f['detail']}" if f.get("detail") else ""
        return f"  {mark} {f['name']}: {fmt(f.get('status'))}{detail}"
    lines = [f"{r.kind}:"]
    lines += [f"  {k}: {fmt(v)}" for k, v in r.fields.items()]
    return "\n".join(lines)
