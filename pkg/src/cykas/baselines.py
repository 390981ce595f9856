"""Comparison protocols sharing the :class:`TransitionOutput` shape.

* MFSS: the classic sender-side buffer protocol. One data message in flight
  per process; everything else waits in the output buffer for its ACK.
* Matrix: receiver-side enforcement. Each data message carries an n-by-n
  matrix of send counts and the receiver buffers it until deliverable.
* Buggy Cykas: Cykas where a process in secret mode may still send to the
  sender of its most recently delivered eager message. Known to be unsafe.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

from . import protocol
from .protocol import (
    Kind,
    Payload,
    ProtocolError,
    TransitionOutput,
    WireMessage,
    check_outgoing,
    check_process,
    control_message,
    data_message,
)

# -- MFSS -------------------------------------------------------------------


class MfssState(NamedTuple):
    id: int
    n: int
    ob: tuple[Payload, ...]
    awaiting_ack: bool


def mfss_init(id: int, n: int) -> MfssState:
    check_process(id, n)
    return MfssState(id, n, (), False)


def _mfss_send_head(state: MfssState) -> TransitionOutput:
    if state.awaiting_ack or not state.ob:
        return TransitionOutput(state)
    head = state.ob[0]
    state = state._replace(ob=state.ob[1:], awaiting_ack=True)
    return TransitionOutput(state, (data_message(Kind.NORMAL, head),))


def mfss_application_send(state: MfssState, m: Payload) -> TransitionOutput:
    check_outgoing(state, m)
    return _mfss_send_head(state._replace(ob=state.ob + (m,)))


def mfss_handle(state: MfssState, msg: WireMessage) -> TransitionOutput:
    if msg.dst != state.id:
        raise ProtocolError(f"message for {msg.dst} handed to process {state.id}")
    if msg.kind is Kind.NORMAL:
        ack = control_message(Kind.ACK, state.id, msg.src)
        return TransitionOutput(state, (ack,), (msg.payload,))
    if msg.kind is Kind.ACK:
        if not state.awaiting_ack:
            raise ProtocolError(f"process {state.id} got an unexpected ACK")
        return _mfss_send_head(state._replace(awaiting_ack=False))
    raise ProtocolError(f"MFSS has no {msg.kind.label} messages")


def mfss_is_quiescent(state: MfssState) -> bool:
    return not state.ob and not state.awaiting_ack


def mfss_describe(state: MfssState) -> tuple[str, str]:
    return f"awaiting={int(state.awaiting_ack)}", f"queued={len(state.ob)}"


# -- Matrix clock -------------------------------------------------------------

Matrix = tuple[tuple[int, ...], ...]


class MatrixState(NamedTuple):
    id: int
    n: int
    sent: Matrix
    delivered: tuple[int, ...]
    # buffered messages, kept sorted so flush order is deterministic
    pending: tuple[WireMessage, ...]


def zero_matrix(n: int) -> Matrix:
    return ((0,) * n,) * n


def matrix_init(id: int, n: int) -> MatrixState:
    check_process(id, n)
    return MatrixState(id, n, zero_matrix(n), (0,) * n, ())


def matrix_send(state: MatrixState, m: Payload) -> TransitionOutput:
    check_outgoing(state, m)
    stamp = state.sent
    sent = _bump(stamp, state.id, m.receiver, stamp[state.id][m.receiver] + 1)
    msg = data_message(Kind.NORMAL, m, stamp)
    return TransitionOutput(state._replace(sent=sent), (msg,))


def matrix_deliverable(state: MatrixState, stamp: Matrix, src: int) -> bool:
    me = state.id
    for k in range(state.n):
        if stamp[k][me] > state.delivered[k]:
            return False
    return True


def _merge(state: MatrixState, msg: WireMessage) -> MatrixState:
    src, me, stamp = msg.src, state.id, msg.stamp
    delivered = list(state.delivered)
    delivered[src] += 1
    sent = tuple(
        tuple(a if a >= b else b for a, b in zip(row, srow))
        for row, srow in zip(state.sent, stamp)
    )
    sent = _bump(sent, src, me, max(sent[src][me], stamp[src][me] + 1))
    return state._replace(sent=sent, delivered=tuple(delivered))


def matrix_receive(state: MatrixState, msg: WireMessage) -> TransitionOutput:
    if msg.dst != state.id:
        raise ProtocolError(f"message for {msg.dst} handed to process {state.id}")
    if msg.stamp is None:
        raise ProtocolError("matrix data message without a stamp")
    if not matrix_deliverable(state, msg.stamp, msg.src):
        pending = tuple(sorted(state.pending + (msg,)))
        return TransitionOutput(state._replace(pending=pending))
    state = _merge(state, msg)
    deliveries = [msg.payload]
    flushed = True
    while flushed and state.pending:
        flushed = False
        for i, waiting in enumerate(state.pending):
            if matrix_deliverable(state, waiting.stamp, waiting.src):
                state = _merge(state, waiting)
                state = state._replace(
                    pending=state.pending[:i] + state.pending[i + 1 :]
                )
                deliveries.append(waiting.payload)
                flushed = True
                break
    return TransitionOutput(state, (), tuple(deliveries))


def matrix_is_quiescent(state: MatrixState) -> bool:
    return not state.pending


def matrix_describe(state: MatrixState) -> tuple[str, str]:
    return "delivered=" + ",".join(map(str, state.delivered)), f"pending={len(state.pending)}"


def stamp_summary(stamp: Optional[Matrix]) -> str:
    """Nonzero entries of a matrix stamp, e.g. ``W{0→2:1}``."""
    if stamp is None:
        return ""
    cells = [
        f"{k}→{j}:{v}"
        for k, row in enumerate(stamp)
        for j, v in enumerate(row)
        if v
    ]
    return "W{" + ",".join(cells) + "}"


def _bump(matrix: Matrix, row: int, col: int, value: int) -> Matrix:
    r = list(matrix[row])
    r[col] = value
    return matrix[:row] + (tuple(r),) + matrix[row + 1 :]


# -- Cykas with secret-mode sends ----------------------------------------------


class BuggyCykasState(NamedTuple):
    id: int
    n: int
    ob: tuple[Payload, ...]
    unack: int
    mode: int
    eager_sent: tuple[tuple[int, ...], ...]
    allowed_recipient: Optional[int]

    def unack_bits(self) -> list[int]:
        return protocol.bits(self.unack, self.n)


def buggy_init(id: int, n: int) -> BuggyCykasState:
    return BuggyCykasState(*protocol.init(id, n), None)


def buggy_try_send_message(state: BuggyCykasState) -> TransitionOutput:
    allowed = state.allowed_recipient if state.mode > 0 else None
    state, emissions = protocol.drain_output_buffer(state, allowed)
    return TransitionOutput(state, emissions)


def buggy_application_send(state: BuggyCykasState, m: Payload) -> TransitionOutput:
    check_outgoing(state, m)
    return buggy_try_send_message(state._replace(ob=state.ob + (m,)))


def buggy_handle(state: BuggyCykasState, msg: WireMessage) -> TransitionOutput:
    if msg.dst != state.id:
        raise ProtocolError(f"message for {msg.dst} handed to process {state.id}")
    if msg.kind.is_data:
        if msg.kind is Kind.EAGER:
            # overwritten, not stacked: only the latest eager sender counts
            state = state._replace(mode=state.mode + 1, allowed_recipient=msg.src)
        ack = control_message(Kind.ACK, state.id, msg.src)
        return TransitionOutput(state, (ack,), (msg.payload,))
    if msg.kind is Kind.ACK:
        state, emissions = protocol.clear_ack(state, msg.src)
        out = buggy_try_send_message(state)
        return TransitionOutput(out.state, tuple(emissions) + out.emissions)
    if state.mode < 1:
        raise ProtocolError(f"process {state.id} got a YCT while not in secret mode")
    mode = state.mode - 1
    state = state._replace(
        mode=mode, allowed_recipient=state.allowed_recipient if mode else None
    )
    return buggy_try_send_message(state)


def buggy_is_quiescent(state: BuggyCykasState) -> bool:
    return (
        not state.ob
        and state.unack == 0
        and state.mode == 0
        and not any(state.eager_sent)
    )


def buggy_describe(state: BuggyCykasState) -> tuple[str, str]:
    unack = "unack=" + "".join(map(str, state.unack_bits()))
    mode = f"mode={state.mode}"
    if state.allowed_recipient is not None:
        mode += f" allow={state.allowed_recipient}"
    return unack, mode
