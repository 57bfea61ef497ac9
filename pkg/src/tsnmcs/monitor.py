"""Passive traffic analyzer tapping one bridge for FRER anomalies.

The monitor mirrors listener-side window semantics over the frames the tap
bridge forwards, keeps per-path statistics, and raises alerts for replayed
sequence numbers, frames from unexpected ports, unknown streams, abrupt
sequence jumps, silent member paths, and source address changes. It never
mutates or blocks traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set

from .frer import SEQ_SPACE, TaggedFrame
from .model import BridgeId, StreamId

DEFAULT_JUMP_THRESHOLD = 64
DEFAULT_SILENCE_PERIODS = 5
DEFAULT_CHECK_INTERVAL_US = 100_000
DEFAULT_RESET_TIMEOUT_US = 100_000
HISTORY_LENGTH = 16
_COUNT_WINDOW = 4096


@dataclass(frozen=True)
class Alert:
    kind: str
    time_us: int
    stream: Optional[StreamId]
    seq: Optional[int]
    ingress_port: Optional[str]
    evidence: str
    severity: str = "alert"


@dataclass
class _PathState:
    last_seen_us: Optional[int] = None
    frames: int = 0
    silent_alerted: bool = False


@dataclass
class StreamObservation:
    stream: StreamId
    period_us: int
    ports: Dict[str, int]          # configured ingress port -> path index
    paths: Dict[int, _PathState] = field(default_factory=dict)
    seq_counts: Dict[int, int] = field(default_factory=dict)
    highest_seen: Optional[int] = None
    last_seen_us: int = 0
    last_src_mac: Optional[str] = None


class Monitor:
    def __init__(self, tap_bridge: BridgeId,
                 jump_threshold: int = DEFAULT_JUMP_THRESHOLD,
                 silence_periods: int = DEFAULT_SILENCE_PERIODS,
                 reset_timeout_us: int = DEFAULT_RESET_TIMEOUT_US):
        self.tap_bridge = tap_bridge
        self.jump_threshold = jump_threshold
        self.silence_periods = silence_periods
        self.reset_timeout_us = reset_timeout_us
        self.observations: Dict[StreamId, StreamObservation] = {}
        self.alerts: List[Alert] = []

    # -- configuration ----------------------------------------------------

    def configure_stream(self, stream: StreamId, period_us: int,
                         ports: Dict[str, int]) -> None:
        """Register a stream with its expected ingress port per member path."""
        self.observations[stream] = StreamObservation(
            stream, period_us, dict(ports),
            paths={idx: _PathState() for idx in sorted(set(ports.values()))})

    def deconfigure_stream(self, stream: StreamId) -> None:
        self.observations.pop(stream, None)

    # -- frame path -------------------------------------------------------

    def observe(self, f: TaggedFrame, ingress_port: str,
                now_us: int) -> List[Alert]:
        alerts: List[Alert] = []
        obs = self.observations.get(f.stream)
        if obs is None:
            alerts.append(Alert("UnknownStream", now_us, f.stream, f.seq,
                                ingress_port,
                                f"stream {f.stream} is not configured"))
            self.alerts.extend(alerts)
            return alerts

        prior = obs.seq_counts.get(f.seq, 0)
        if ingress_port not in obs.ports:
            alerts.append(Alert("ReplayAttack", now_us, f.stream, f.seq,
                                ingress_port,
                                f"frame entered on unconfigured port "
                                f"{ingress_port}"))
        elif prior >= 2:
            alerts.append(Alert("ReplayAttack", now_us, f.stream, f.seq,
                                ingress_port,
                                f"seq {f.seq} already seen {prior} times"))

        gap = now_us - obs.last_seen_us
        reset_gap = (obs.highest_seen is not None
                     and gap > self.reset_timeout_us)
        if obs.highest_seen is None or reset_gap:
            obs.highest_seen = f.seq
        else:
            forward = (f.seq - obs.highest_seen) % SEQ_SPACE
            if forward < SEQ_SPACE // 2:
                deviation = forward - 1 if forward > 0 else 0
                if deviation > self.jump_threshold:
                    alerts.append(Alert(
                        "SequenceJump", now_us, f.stream, f.seq, ingress_port,
                        f"expected near {(obs.highest_seen + 1) % SEQ_SPACE}, "
                        f"got {f.seq} (+{deviation})"))
                obs.highest_seen = f.seq
            else:
                lag = SEQ_SPACE - forward
                deviation = lag - HISTORY_LENGTH
                if deviation > self.jump_threshold:
                    alerts.append(Alert(
                        "SequenceJump", now_us, f.stream, f.seq, ingress_port,
                        f"seq {f.seq} lags window head {obs.highest_seen} "
                        f"by {lag}"))

        if obs.last_src_mac is not None and f.src_mac != obs.last_src_mac:
            alerts.append(Alert("SourceMacChange", now_us, f.stream, f.seq,
                                ingress_port,
                                f"src mac {obs.last_src_mac} -> {f.src_mac}",
                                severity="info"))
        obs.last_src_mac = f.src_mac

        obs.seq_counts[f.seq] = prior + 1
        if len(obs.seq_counts) > _COUNT_WINDOW and obs.highest_seen is not None:
            head = obs.highest_seen
            stale = [s for s in obs.seq_counts
                     if (head - s) % SEQ_SPACE > _COUNT_WINDOW // 2]
            for s in stale:
                del obs.seq_counts[s]
        obs.last_seen_us = now_us
        path = obs.ports.get(ingress_port)
        if path is not None:
            state = obs.paths[path]
            state.last_seen_us = now_us
            state.frames += 1
            state.silent_alerted = False
        self.alerts.extend(alerts)
        return alerts

    # -- periodic silence check ---------------------------------------------

    def check_silence(self, now_us: int) -> List[Alert]:
        """Alert once per silent episode of a member path that was active."""
        alerts: List[Alert] = []
        threshold_factor = self.silence_periods
        for stream in sorted(self.observations):
            obs = self.observations[stream]
            threshold = threshold_factor * obs.period_us
            for idx in sorted(obs.paths):
                state = obs.paths[idx]
                if state.last_seen_us is None or state.silent_alerted:
                    continue
                silent_for = now_us - state.last_seen_us
                if silent_for > threshold:
                    state.silent_alerted = True
                    alerts.append(Alert(
                        "PathSilence", now_us, stream, None, None,
                        f"member path {idx} silent for {silent_for} us "
                        f"(threshold {threshold} us)"))
        self.alerts.extend(alerts)
        return alerts

    def recent_alerts(self, limit: int = 20) -> List[Alert]:
        return self.alerts[-limit:]
