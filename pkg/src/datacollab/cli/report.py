"""Run reports: json-lines for aggregation, a plain table for people."""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import DataCollabError

TIMING_FIELDS = ("timing_s",)


@dataclass
class ModeResult:
    mode: str
    accuracy: float
    per_party_accuracy: list
    n_train: list
    n_test: list
    alignment_residual: Optional[float] = None
    singular_values: Optional[list] = None
    timing_s: float = 0.0


@dataclass
class RunReport:
    config: dict = field(default_factory=dict)
    modes: list = field(default_factory=list)

    def result(self, mode: str) -> ModeResult:
        for r in self.modes:
            if r.mode == mode:
                return r
        raise KeyError(mode)

    @property
    def accuracies(self) -> dict:
        return {r.mode: r.accuracy for r in self.modes}

    def records(self) -> list:
        out = [{"record": "config", "config": self.config}]
        out += [{"record": "mode", **asdict(r)} for r in self.modes]
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=False) + "\n" for rec in self.records())

    @classmethod
    def from_jsonl(cls, text: str) -> "RunReport":
        report = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("record")
            if kind == "config":
                report.config = rec["config"]
            elif kind == "mode":
                report.modes.append(ModeResult(**rec))
            else:
                raise ValueError(f"unknown record type {kind!r}")
        return report

    def to_table(self) -> str:
        buf = io.StringIO()
        buf.write("config\n")
        for line in json.dumps(self.config, indent=2).splitlines():
            buf.write(f"  {line}\n")
        buf.write("\n")
        head = f"{'mode':<26}{'accuracy':>10}{'residual':>12}{'parties':>9}{'n_train':>9}{'n_test':>8}{'time[s]':>10}\n"
        buf.write(head)
        buf.write("-" * (len(head) - 1) + "\n")
        for r in self.modes:
            res = "-" if r.alignment_residual is None else f"{r.alignment_residual:.3e}"
            buf.write(
                f"{r.mode:<26}{r.accuracy:>10.4f}{res:>12}{len(r.per_party_accuracy):>9}"
                f"{sum(r.n_train):>9}{sum(r.n_test):>8}{r.timing_s:>10.3f}\n"
            )
        for r in self.modes:
            parts = ", ".join(f"{a:.4f}" for a in r.per_party_accuracy)
            buf.write(f"\n{r.mode} per-party accuracy: [{parts}]")
            if r.singular_values is not None:
                sv = ", ".join(f"{s:.4g}" for s in r.singular_values)
                buf.write(f"\n{r.mode} singular values: [{sv}]")
        buf.write("\n")
        return buf.getvalue()


def strip_timings(report: RunReport) -> RunReport:
    modes = [ModeResult(**{**asdict(r), **{k: 0.0 for k in TIMING_FIELDS}}) for r in report.modes]
    return RunReport(report.config, modes)


def emit_report(report: RunReport, path, fmt: str = "json-lines") -> Path:
    if fmt == "json-lines":
        text = report.to_jsonl()
    elif fmt == "human-table":
        text = report.to_table()
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {path}: {exc}") from exc
    return path


class ReportIOError(DataCollabError, OSError):
    exit_code = 1
