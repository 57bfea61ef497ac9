"""Render run metrics into figures and a delimited summary table.

Reads a line-delimited metrics file produced by a run and writes PNG charts
plus a summary.csv next to them. Uses the non-interactive matplotlib
backend; nothing here runs during simulation.
"""

from __future__ import annotations

import csv
import json
import os
from collections import defaultdict
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import ConfigError  # noqa: E402


def load_metrics(path: str) -> List[dict]:
    records = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}:{i + 1}: bad record: {exc}") \
                        from None
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    return records


def _seconds(time_us: int) -> float:
    return time_us / 1e6


def _plot_stream_delivery(records: List[dict], out: str) -> bool:
    accepted = defaultdict(list)
    for r in records:
        if r.get("category") == "frame" and r.get("event") == "accepted":
            accepted[r["stream"]].append((_seconds(r["time_us"]), r["seq"]))
    if not accepted:
        return False
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for stream in sorted(accepted):
        points = accepted[stream]
        ax.plot([p[0] for p in points], [p[1] for p in points],
                linewidth=0.8, label=stream)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("accepted sequence number")
    ax.set_title("Accepted frames per stream")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return True


def _plot_link_drops(records: List[dict], out: str) -> bool:
    drops = defaultdict(list)
    for r in records:
        if r.get("category") == "drop" and "link" in r and "reason" in r:
            drops[r["link"]].append(_seconds(r["time_us"]))
    if not drops:
        return False
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for link in sorted(drops):
        times = sorted(drops[link])
        ax.step(times, range(1, len(times) + 1), where="post", label=link)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("cumulative dropped frames")
    ax.set_title("Frame drops per link")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return True


def _plot_control_timeline(records: List[dict], out: str) -> bool:
    heartbeats = defaultdict(list)
    failover_events = []
    for r in records:
        if r.get("category") == "heartbeat" and "seqno" in r:
            heartbeats[r["node"]].append(_seconds(r["time_us"]))
        elif r.get("category") == "failover" and "event" in r:
            failover_events.append((_seconds(r["time_us"]), r["event"]))
    if not heartbeats and not failover_events:
        return False
    fig, ax = plt.subplots(figsize=(8, 4.5))
    nodes = sorted(heartbeats)
    for level, node in enumerate(nodes):
        times = heartbeats[node]
        ax.plot(times, [level] * len(times), "|", markersize=8, label=node)
    for when, event in failover_events:
        ax.axvline(when, color="tab:red", alpha=0.4, linewidth=0.8)
    ax.set_yticks(range(len(nodes)))
    ax.set_yticklabels(nodes)
    ax.set_xlabel("time [s]")
    ax.set_title("Heartbeats per node (red lines: failover events)")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return True


def _plot_alerts(records: List[dict], out: str) -> bool:
    alerts = [(r["time_us"], r["kind"]) for r in records
              if r.get("category") == "alert"]
    if not alerts:
        return False
    kinds = sorted({kind for _, kind in alerts})
    level = {kind: i for i, kind in enumerate(kinds)}
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot([_seconds(t) for t, k in alerts],
            [level[k] for _, k in alerts], "x", color="tab:red")
    ax.set_yticks(range(len(kinds)))
    ax.set_yticklabels(kinds)
    ax.set_xlabel("time [s]")
    ax.set_title("Monitor alerts")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return True


def _write_summary(records: List[dict], out: str) -> None:
    rows = []
    for r in records:
        if r.get("event") == "stream-summary":
            rows.append({"kind": "stream", "subject": r["stream"],
                         "sent": r["sent"], "accepted": r["accepted"],
                         "duplicate": r["duplicate"], "stale": r["stale"],
                         "dropped": ""})
        elif r.get("event") == "link-summary":
            rows.append({"kind": "link", "subject": r["link"],
                         "sent": r["sent"], "accepted": "",
                         "duplicate": "", "stale": "",
                         "dropped": r["dropped"]})
    alert_counts: Dict[str, int] = defaultdict(int)
    for r in records:
        if r.get("category") == "alert":
            alert_counts[r["kind"]] += 1
    for kind in sorted(alert_counts):
        rows.append({"kind": "alerts", "subject": kind,
                     "sent": "", "accepted": "", "duplicate": "",
                     "stale": "", "dropped": alert_counts[kind]})
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "kind", "subject", "sent", "accepted", "duplicate", "stale",
            "dropped"])
        writer.writeheader()
        writer.writerows(rows)


def render_report(metrics_path: str, out_dir: str) -> List[str]:
    """Write figures and summary.csv for one metrics file; returns the paths."""
    records = load_metrics(metrics_path)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    panels = [
        ("stream_delivery.png", _plot_stream_delivery),
        ("link_drops.png", _plot_link_drops),
        ("control_timeline.png", _plot_control_timeline),
        ("alerts.png", _plot_alerts),
    ]
    for name, renderer in panels:
        path = os.path.join(out_dir, name)
        if renderer(records, path):
            written.append(path)
    summary = os.path.join(out_dir, "summary.csv")
    _write_summary(records, summary)
    written.append(summary)
    return written
