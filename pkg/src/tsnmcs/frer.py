"""Frame replication at talkers and sequence-recovery elimination at listeners.

Sequence numbers live in [0, 65535] and wrap modulo 2^16. Elimination keeps
a sliding history window of recently seen sequence numbers (vector recovery)
so duplicates and stale stragglers are discarded while each number is
accepted at most once per window lifetime.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

from .errors import NoPathsConfigured, StreamMismatch
from .model import StreamId

SEQ_SPACE = 1 << 16
FORWARD_WINDOW = 1 << 15
DEFAULT_HISTORY_LENGTH = 16
DEFAULT_RESET_TIMEOUT_US = 100_000


@dataclass(frozen=True)
class TaggedFrame:
    stream: StreamId
    seq: int
    member_path_index: int
    payload_bytes: int
    src_mac: str


@dataclass
class SequenceGenerator:
    stream: StreamId
    next_seq: int = 0


class RecoverDecision(str, Enum):
    ACCEPT = "Accept"
    DISCARD_DUPLICATE = "DiscardDuplicate"
    DISCARD_STALE = "DiscardStale"


@dataclass
class RecoveryState:
    stream: StreamId
    history_length: int = DEFAULT_HISTORY_LENGTH
    reset_timeout_us: int = DEFAULT_RESET_TIMEOUT_US
    recov_seq: Optional[int] = None
    history: int = 0
    last_accept_time_us: int = 0

    def reset(self) -> None:
        self.recov_seq = None
        self.history = 0


def replicate(gen: SequenceGenerator, payload_bytes: int,
              paths: Sequence[object], src_mac: str = "") -> List[TaggedFrame]:
    """Tag one frame per member path with the generator's next sequence number."""
    if not paths:
        raise NoPathsConfigured(f"stream {gen.stream} has no paths")
    seq = gen.next_seq
    gen.next_seq = (seq + 1) % SEQ_SPACE
    return [TaggedFrame(gen.stream, seq, idx, payload_bytes, src_mac)
            for idx in range(len(paths))]


def recover(state: RecoveryState, f: TaggedFrame, now_us: int) -> RecoverDecision:
    """Decide acceptance of one frame and update the recovery window."""
    if f.stream != state.stream:
        raise StreamMismatch(f"frame for {f.stream} offered to {state.stream}")
    mask = (1 << state.history_length) - 1
    if state.recov_seq is None:
        state.recov_seq = f.seq
        state.history = 1
        state.last_accept_time_us = now_us
        return RecoverDecision.ACCEPT
    delta = (f.seq - state.recov_seq) % SEQ_SPACE
    if delta == 0:
        return RecoverDecision.DISCARD_DUPLICATE
    if delta < FORWARD_WINDOW:
        state.history = ((state.history << delta) | 1) & mask
        state.recov_seq = f.seq
        state.last_accept_time_us = now_us
        return RecoverDecision.ACCEPT
    lag = SEQ_SPACE - delta
    if lag >= state.history_length:
        return RecoverDecision.DISCARD_STALE
    bit = 1 << lag
    if state.history & bit:
        return RecoverDecision.DISCARD_DUPLICATE
    state.history |= bit
    state.last_accept_time_us = now_us
    return RecoverDecision.ACCEPT


def maybe_reset(state: RecoveryState, now_us: int) -> RecoveryState:
    """Return to the unset state after a long silence so restarts re-sync."""
    if (state.recov_seq is not None
            and now_us - state.last_accept_time_us > state.reset_timeout_us):
        state.reset()
    return state
