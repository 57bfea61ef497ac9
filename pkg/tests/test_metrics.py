"""Metric and trace serialization."""

import json

import pytest

from tsnmcs.engine import TraceRecord
from tsnmcs.metrics import MetricsLog, metric_lines, trace_lines, write_lines


def test_emit_and_filter_by_category():
    log = MetricsLog()
    log.emit(0, "frame", event="sent", seq=0)
    log.emit(10, "drop", reason="link-down")
    log.emit(20, "frame", event="accepted", seq=0)
    assert [r.payload["event"] for r in log.by_category("frame")] == \
        ["sent", "accepted"]
    assert log.violations == []


def test_unknown_category_rejected():
    log = MetricsLog()
    with pytest.raises(ValueError):
        log.emit(0, "mystery")


def test_backwards_time_recorded_as_violation():
    log = MetricsLog()
    log.emit(100, "frame", event="sent")
    log.emit(50, "frame", event="sent")
    assert len(log.violations) == 1
    assert "backwards" in log.violations[0]


def test_metric_lines_are_compact_sorted_json():
    log = MetricsLog()
    log.emit(5, "alert", kind="ReplayAttack", stream="video", seq=7)
    line = metric_lines(log.records)[0]
    assert line == ('{"category":"alert","kind":"ReplayAttack",'
                    '"seq":7,"stream":"video","time_us":5}')
    assert json.loads(line)["seq"] == 7


def test_trace_lines_round_trip():
    lines = trace_lines([TraceRecord(10, 3, "FrameArrival", "video:0/1@TSN2")])
    assert json.loads(lines[0]) == {"time_us": 10, "seq": 3,
                                    "kind": "FrameArrival",
                                    "subject": "video:0/1@TSN2"}


def test_write_lines(tmp_path):
    target = tmp_path / "out.jsonl"
    write_lines(str(target), ["a", "b"])
    assert target.read_text() == "a\nb\n"
