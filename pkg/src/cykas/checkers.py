"""Vector-clock causality checking and delivery-count liveness checking.

The clocks live outside the protocol: nothing here is piggybacked on wire
messages. Only application payloads are recorded; ACK and YCT traffic never
reaches the history. Message ids are ``(sender, seq)`` pairs with ``seq``
counting up from zero per sender.

Stamping rule: a send increments the sender's own entry and the resulting
clock is the message's stamp; a delivery merges the stamp into the receiver's
clock without incrementing.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

VectorClock = tuple[int, ...]
MsgId = tuple[int, int]


class CausalViolation(NamedTuple):
    process: int
    earlier_id: MsgId
    later_id: MsgId
    earlier_vc: VectorClock
    later_vc: VectorClock

    def __str__(self) -> str:
        return (
            f"CAUSAL VIOLATION at p{self.process}: delivered "
            f"{format_id(self.later_id)} before {format_id(self.earlier_id)}; "
            f"VC {format_vc(self.earlier_vc)} < VC {format_vc(self.later_vc)}"
        )


class LivenessViolation(NamedTuple):
    sent: int
    delivered: int

    def __str__(self) -> str:
        return (
            f"LIVENESS VIOLATION: {self.sent} messages application-sent, "
            f"{self.delivered} delivered"
        )


class ExecutionHistory(NamedTuple):
    clocks: tuple[VectorClock, ...]
    # stamps[sender][seq] is the stamp recorded when (sender, seq) was sent
    stamps: tuple[tuple[VectorClock, ...], ...]
    logs: tuple[tuple[tuple[MsgId, VectorClock], ...], ...]
    sent_count: int = 0
    delivered_count: int = 0

    @classmethod
    def empty(cls, n: int) -> "ExecutionHistory":
        return cls(((0,) * n,) * n, ((),) * n, ((),) * n)

    @property
    def n(self) -> int:
        return len(self.clocks)

    def stamp_of(self, msg_id: MsgId) -> VectorClock:
        sender, seq = msg_id
        try:
            return self.stamps[sender][seq]
        except IndexError:
            raise KeyError(f"unknown message {format_id(msg_id)}") from None


def format_id(msg_id: MsgId) -> str:
    return f"m{msg_id[0]}.{msg_id[1]}"


def format_vc(vc: VectorClock) -> str:
    return "[" + ",".join(map(str, vc)) + "]"


def vc_leq(a: VectorClock, b: VectorClock) -> bool:
    if len(a) != len(b):
        raise ValueError(f"vector clocks of different lengths {len(a)} and {len(b)}")
    return all(x <= y for x, y in zip(a, b))


def vc_lt(a: VectorClock, b: VectorClock) -> bool:
    return vc_leq(a, b) and a != b


def vc_merge(a: VectorClock, b: VectorClock) -> VectorClock:
    return tuple(x if x >= y else y for x, y in zip(a, b))


def record_send(
    h: ExecutionHistory, sender: int, msg_id: MsgId
) -> tuple[ExecutionHistory, VectorClock]:
    """Stamp a fresh application send; returns ``(history, stamp)``."""
    who, seq = msg_id
    if who != sender:
        raise ValueError(f"message {format_id(msg_id)} not sent by p{sender}")
    known = h.stamps[sender]
    if seq < len(known):
        raise ValueError(f"duplicate message id {format_id(msg_id)}")
    if seq > len(known):
        raise ValueError(
            f"message {format_id(msg_id)} skips sequence numbers (next is {len(known)})"
        )
    clock = list(h.clocks[sender])
    clock[sender] += 1
    stamp = tuple(clock)
    h = h._replace(
        clocks=_put(h.clocks, sender, stamp),
        stamps=_put(h.stamps, sender, known + (stamp,)),
        sent_count=h.sent_count + 1,
    )
    return h, stamp


def record_delivery(
    h: ExecutionHistory,
    receiver: int,
    msg_id: MsgId,
    stamp: Optional[VectorClock] = None,
) -> ExecutionHistory:
    recorded = h.stamp_of(msg_id)
    if stamp is None:
        stamp = recorded
    elif stamp != recorded:
        raise ValueError(f"stamp for {format_id(msg_id)} does not match its send")
    return h._replace(
        clocks=_put(h.clocks, receiver, vc_merge(h.clocks[receiver], stamp)),
        logs=_put(h.logs, receiver, h.logs[receiver] + ((msg_id, stamp),)),
        delivered_count=h.delivered_count + 1,
    )


def check_causal(h: ExecutionHistory) -> Optional[CausalViolation]:
    """First out-of-order pair over all logs, or ``None``.

    Scan order is by process, then by the later log position, then by the
    earlier one.
    """
    for p in range(h.n):
        for j in range(1, len(h.logs[p])):
            found = _against_earlier(h.logs[p], p, j)
            if found:
                return found
    return None


def check_latest(h: ExecutionHistory, process: int) -> Optional[CausalViolation]:
    """Check only pairs involving the newest entry of ``process``'s log."""
    log = h.logs[process]
    if len(log) < 2:
        return None
    return _against_earlier(log, process, len(log) - 1)


def check_liveness(h: ExecutionHistory, terminal: bool = True) -> Optional[LivenessViolation]:
    if not terminal:
        return None
    if h.delivered_count != h.sent_count:
        return LivenessViolation(h.sent_count, h.delivered_count)
    return None


def _against_earlier(log, process: int, j: int) -> Optional[CausalViolation]:
    msg_id, stamp = log[j]
    own = msg_id[0]
    mine = stamp[own]
    for i in range(j):
        other_id, other = log[i]
        # an earlier-delivered message can only follow this one causally if
        # its sender had already seen this send
        if other[own] >= mine and vc_lt(stamp, other):
            return CausalViolation(process, msg_id, other_id, stamp, other)
    return None


def _put(t: tuple, i: int, value) -> tuple:
    return t[:i] + (value,) + t[i + 1 :]
