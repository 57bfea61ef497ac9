"""Line-delimited metric and trace records with deterministic serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List

from .engine import TraceRecord

CATEGORIES = ("frame", "drop", "heartbeat", "alert", "failover", "placement")


@dataclass(frozen=True)
class MetricRecord:
    time_us: int
    category: str
    payload: Dict[str, Any]


class MetricsLog:
    """Append-only metric sink enforcing non-decreasing timestamps."""

    def __init__(self):
        self.records: List[MetricRecord] = []
        self.violations: List[str] = []

    def emit(self, time_us: int, category: str, **payload: Any) -> None:
        if category not in CATEGORIES:
            raise ValueError(f"unknown metric category {category}")
        if self.records and time_us < self.records[-1].time_us:
            self.violations.append(
                f"metric time went backwards: {time_us} after "
                f"{self.records[-1].time_us}")
        self.records.append(MetricRecord(time_us, category, payload))

    def by_category(self, category: str) -> List[MetricRecord]:
        return [r for r in self.records if r.category == category]


def metric_lines(records: Iterable[MetricRecord]) -> List[str]:
    lines = []
    for r in records:
        body = {"time_us": r.time_us, "category": r.category}
        body.update(r.payload)
        lines.append(json.dumps(body, sort_keys=True, separators=(",", ":")))
    return lines


def trace_lines(records: Iterable[TraceRecord]) -> List[str]:
    return [json.dumps({"time_us": r.time_us, "seq": r.seq,
                        "kind": r.kind, "subject": r.subject},
                       sort_keys=True, separators=(",", ":"))
            for r in records]


def write_lines(path: str, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
