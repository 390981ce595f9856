"""Cykas sender-side causal delivery as pure state-transition functions.

Every operation takes a state value and returns a :class:`TransitionOutput`
holding the successor state, the wire messages to hand to the network (in
emission order) and the payloads handed to the application (in delivery
order). Nothing is mutated in place.

Bit vectors (``unack`` and the entries of ``eager_sent``) are stored as
integer bitmasks: bit ``j`` set means "waiting on an ACK from process j".
Use :func:`bits` to expand one into a list.
"""

from __future__ import annotations

from enum import IntEnum
from typing import NamedTuple, Optional


class ProtocolError(RuntimeError):
    """A message arrived that the protocol state says cannot exist."""


class Kind(IntEnum):
    NORMAL = 0
    EAGER = 1
    ACK = 2
    YCT = 3

    @property
    def label(self) -> str:
        return _KIND_LABELS[self]

    @property
    def is_data(self) -> bool:
        return self <= Kind.EAGER


_KIND_LABELS = {
    Kind.NORMAL: "NormalSend",
    Kind.EAGER: "EagerSend",
    Kind.ACK: "Ack",
    Kind.YCT: "Yct",
}
KIND_BY_LABEL = {v: k for k, v in _KIND_LABELS.items()}


class Payload(NamedTuple):
    sender: int
    receiver: int
    seq: int
    size_bytes: int = 64
    job_ms: Optional[float] = None

    @property
    def msg_id(self) -> tuple[int, int]:
        return (self.sender, self.seq)


class WireMessage(NamedTuple):
    kind: Kind
    src: int
    dst: int
    payload: Optional[Payload] = None
    # matrix-clock stamp, only carried by the receiver-side baseline
    stamp: Optional[tuple] = None

    def describe(self) -> str:
        text = f"{self.kind.label} {self.src}→{self.dst}"
        if self.payload is not None:
            text += f" #{self.payload.seq}"
        return text


def data_message(kind: Kind, payload: Payload, stamp=None) -> WireMessage:
    return WireMessage(kind, payload.sender, payload.receiver, payload, stamp)


def control_message(kind: Kind, src: int, dst: int) -> WireMessage:
    if src == dst:
        raise ValueError(f"control message from {src} to itself")
    return WireMessage(kind, src, dst)


class CykasState(NamedTuple):
    id: int
    n: int
    ob: tuple[Payload, ...]
    unack: int
    mode: int
    # one FIFO queue of bitmasks per destination; () means no entry
    eager_sent: tuple[tuple[int, ...], ...]

    def unack_bits(self) -> list[int]:
        return bits(self.unack, self.n)

    def eager_sent_map(self) -> dict[int, list[list[int]]]:
        """Non-empty ``eager_sent`` queues as ``{dst: [bit list, ...]}``."""
        return {
            j: [bits(v, self.n) for v in queue]
            for j, queue in enumerate(self.eager_sent)
            if queue
        }


class TransitionOutput(NamedTuple):
    state: object
    emissions: tuple[WireMessage, ...] = ()
    deliveries: tuple[Payload, ...] = ()


def bits(mask: int, n: int) -> list[int]:
    return [(mask >> j) & 1 for j in range(n)]


def check_process(id: int, n: int) -> None:
    if n < 1:
        raise ValueError(f"need at least one process, got n={n}")
    if not 0 <= id < n:
        raise ValueError(f"process id {id} out of range for n={n}")


def check_outgoing(state, m: Payload) -> None:
    if m.sender != state.id:
        raise ValueError(f"payload sender {m.sender} is not process {state.id}")
    if m.receiver == state.id:
        raise ValueError(f"process {state.id} cannot send to itself")
    if not 0 <= m.receiver < state.n:
        raise ValueError(f"receiver {m.receiver} out of range for n={state.n}")


def init(id: int, n: int) -> CykasState:
    check_process(id, n)
    return CykasState(id, n, (), 0, 0, ((),) * n)


def application_send(state: CykasState, m: Payload) -> TransitionOutput:
    check_outgoing(state, m)
    return try_send_message(state._replace(ob=state.ob + (m,)))


def drain_output_buffer(state, allowed: Optional[int] = None):
    """Network-send from the head of ``state.ob`` until something blocks.

    ``allowed`` restricts sending to a single recipient; this is only used by
    the secret-mode-sends variant. Returns ``(successor, emissions)``.
    """
    ob, unack, eager_sent = state.ob, state.unack, state.eager_sent
    emissions = []
    sent = 0
    for m in ob:
        j = m.receiver
        if allowed is not None and j != allowed:
            break
        if unack >> j & 1:
            break
        if unack == 0:
            emissions.append(data_message(Kind.NORMAL, m))
        else:
            emissions.append(data_message(Kind.EAGER, m))
            # snapshot is taken before unack[j] is set for this send
            eager_sent = _push(eager_sent, j, unack)
        unack |= 1 << j
        sent += 1
    if not sent:
        return state, ()
    return (
        state._replace(ob=ob[sent:], unack=unack, eager_sent=eager_sent),
        tuple(emissions),
    )


def try_send_message(state: CykasState) -> TransitionOutput:
    if state.mode > 0:
        return TransitionOutput(state)
    state, emissions = drain_output_buffer(state)
    return TransitionOutput(state, emissions)


def receive_deliver(state: CykasState, msg: WireMessage) -> TransitionOutput:
    _check_incoming(state, msg)
    if not msg.kind.is_data:
        raise ProtocolError(f"receive_deliver given control message {msg.describe()}")
    if msg.kind is Kind.EAGER:
        state = state._replace(mode=state.mode + 1)
    ack = control_message(Kind.ACK, state.id, msg.src)
    return TransitionOutput(state, (ack,), (msg.payload,))


def clear_ack(state, sender: int):
    """Clear ``sender``'s bit in ``unack`` and in every ``eager_sent`` bitmask,
    then release whatever YCTs became sendable (lowest destination first)."""
    if not state.unack >> sender & 1:
        raise ProtocolError(
            f"process {state.id} got an ACK from {sender} with nothing outstanding"
        )
    unack = state.unack & ~(1 << sender)
    clear = ~(1 << sender)
    eager_sent = tuple(
        tuple(v & clear for v in queue) if queue else queue
        for queue in state.eager_sent
    )
    state = state._replace(unack=unack, eager_sent=eager_sent)
    emissions = []
    for receiver, queue in enumerate(eager_sent):
        if queue:
            state, ycts = _release_ycts(state, receiver)
            emissions.extend(ycts)
    return state, emissions


def receive_ack(state: CykasState, sender: int) -> TransitionOutput:
    state, emissions = clear_ack(state, sender)
    # unconditional, so an ACK also unblocks the head when eager_sent is empty
    out = try_send_message(state)
    return TransitionOutput(out.state, tuple(emissions) + out.emissions)


def try_send_yct(state: CykasState, receiver: int) -> TransitionOutput:
    state, emissions = _release_ycts(state, receiver)
    return TransitionOutput(state, emissions)


def _release_ycts(state, receiver: int):
    queue = state.eager_sent[receiver]
    if state.unack >> receiver & 1:
        return state, ()
    k = 0
    while k < len(queue) and queue[k] == 0:
        k += 1
    if not k:
        return state, ()
    eager_sent = list(state.eager_sent)
    eager_sent[receiver] = queue[k:]
    ycts = (control_message(Kind.YCT, state.id, receiver),) * k
    return state._replace(eager_sent=tuple(eager_sent)), ycts


def receive_yct(state: CykasState) -> TransitionOutput:
    if state.mode < 1:
        raise ProtocolError(f"process {state.id} got a YCT while not in secret mode")
    return try_send_message(state._replace(mode=state.mode - 1))


def handle(state: CykasState, msg: WireMessage) -> TransitionOutput:
    """Dispatch an incoming wire message to the matching receive operation."""
    _check_incoming(state, msg)
    if msg.kind.is_data:
        return receive_deliver(state, msg)
    if msg.kind is Kind.ACK:
        return receive_ack(state, msg.src)
    return receive_yct(state)


def is_quiescent(state: CykasState) -> bool:
    return not state.ob and state.unack == 0 and state.mode == 0 and not any(
        state.eager_sent
    )


def describe(state: CykasState) -> tuple[str, str]:
    """The ``unack`` and ``mode`` columns of the trace rendering."""
    return "unack=" + "".join(map(str, state.unack_bits())), f"mode={state.mode}"


def _push(eager_sent, j: int, mask: int):
    queues = list(eager_sent)
    queues[j] = queues[j] + (mask,)
    return tuple(queues)


def _check_incoming(state, msg: WireMessage) -> None:
    if msg.dst != state.id:
        raise ProtocolError(
            f"message for process {msg.dst} handed to process {state.id}"
        )
