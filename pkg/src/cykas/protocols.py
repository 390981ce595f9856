"""Uniform handles on every protocol, keyed by the names the CLI accepts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from . import baselines, protocol
from .protocol import Payload, TransitionOutput, WireMessage


@dataclass(frozen=True)
class ProtocolOps:
    name: str
    init: Callable[[int, int], Any]
    app_send: Callable[[Any, Payload], TransitionOutput]
    handle: Callable[[Any, WireMessage], TransitionOutput]
    is_quiescent: Callable[[Any], bool]
    describe: Callable[[Any], tuple[str, str]]
    # whether data messages carry a matrix stamp
    stamped: bool = False


PROTOCOLS = {
    ops.name: ops
    for ops in (
        ProtocolOps(
            "cykas",
            protocol.init,
            protocol.application_send,
            protocol.handle,
            protocol.is_quiescent,
            protocol.describe,
        ),
        ProtocolOps(
            "mfss",
            baselines.mfss_init,
            baselines.mfss_application_send,
            baselines.mfss_handle,
            baselines.mfss_is_quiescent,
            baselines.mfss_describe,
        ),
        ProtocolOps(
            "matrix",
            baselines.matrix_init,
            baselines.matrix_send,
            baselines.matrix_receive,
            baselines.matrix_is_quiescent,
            baselines.matrix_describe,
            stamped=True,
        ),
        ProtocolOps(
            "buggy-cykas",
            baselines.buggy_init,
            baselines.buggy_application_send,
            baselines.buggy_handle,
            baselines.buggy_is_quiescent,
            baselines.buggy_describe,
        ),
    )
}


def get(name: str) -> ProtocolOps:
    try:
        return PROTOCOLS[name]
    except KeyError:
        known = ", ".join(sorted(PROTOCOLS))
        raise ValueError(f"unknown protocol {name!r} (choose from {known})") from None
