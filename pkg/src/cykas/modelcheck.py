"""Bounded exhaustive exploration of a scripted actor system.

The network is a multiset of in-flight messages: reliable, but with no
ordering between any two messages, so every delivery order is explored.
Scripted application sends interleave freely with deliveries.

Search is breadth-first with full-state deduplication, so a reported
counterexample uses the fewest possible actions. The causality check runs
after every transition and the liveness check at every terminal state.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Union

from . import checkers, protocols
from .baselines import stamp_summary
from .checkers import CausalViolation, ExecutionHistory, LivenessViolation
from .protocol import KIND_BY_LABEL, Payload, WireMessage
from .protocols import ProtocolOps

Script = tuple[tuple[int, ...], ...]
Violation = Union[CausalViolation, LivenessViolation]

PASS = "pass"
SAFETY = "safety-violation"
LIVENESS = "liveness-violation"
LIMIT = "limit-reached"


class Action(NamedTuple):
    pid: int
    # None for an application send of ``pid``'s next scripted intent
    msg: Optional[WireMessage] = None

    @property
    def is_send(self) -> bool:
        return self.msg is None


class GlobalState(NamedTuple):
    actors: tuple
    cursors: tuple[int, ...]
    network: tuple[WireMessage, ...]  # sorted, duplicates allowed
    history: ExecutionHistory


def default_script(n: int, msgs: int) -> Script:
    """Every process cycles through the others in ascending id order.

    For three processes this is the counterexample shape for secret-mode
    sends: p0 → 1, 2; p1 → 0, 2; p2 → 0, ...
    """
    if n < 2 and msgs:
        raise ValueError("need at least two processes to send anything")
    script = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        script.append(tuple(others[k % len(others)] for k in range(msgs)))
    return tuple(script)


def parse_script(text: str) -> Script:
    """``"1,2;0,2;0"`` → ``((1, 2), (0, 2), (0,))``."""
    return tuple(
        tuple(int(x) for x in part.split(",") if x.strip())
        for part in text.split(";")
    )


def format_script(script: Script) -> str:
    return ";".join(",".join(map(str, row)) for row in script)


class Model:
    def __init__(self, protocol: Union[str, ProtocolOps], script: Sequence[Sequence[int]]):
        self.ops = protocols.get(protocol) if isinstance(protocol, str) else protocol
        self.script: Script = tuple(tuple(row) for row in script)
        self.n = len(self.script)
        for i, row in enumerate(self.script):
            for dst in row:
                if dst == i or not 0 <= dst < self.n:
                    raise ValueError(f"bad destination {dst} in p{i}'s script")

    def initial(self) -> GlobalState:
        return GlobalState(
            tuple(self.ops.init(i, self.n) for i in range(self.n)),
            (0,) * self.n,
            (),
            ExecutionHistory.empty(self.n),
        )

    def actions(self, gs: GlobalState) -> list[Action]:
        acts = [
            Action(i)
            for i in range(self.n)
            if gs.cursors[i] < len(self.script[i])
        ]
        prev = None
        for m in gs.network:
            if m != prev:
                acts.append(Action(m.dst, m))
                prev = m
        return acts

    def step(self, gs: GlobalState, action: Action):
        """Apply one action. Returns ``(successor, output, violation)``."""
        actors, history = gs.actors, gs.history
        cursors, network = gs.cursors, gs.network
        pid = action.pid
        if action.is_send:
            seq = cursors[pid]
            payload = Payload(pid, self.script[pid][seq], seq)
            history, _ = checkers.record_send(history, pid, payload.msg_id)
            out = self.ops.app_send(actors[pid], payload)
            cursors = cursors[:pid] + (seq + 1,) + cursors[pid + 1 :]
        else:
            k = network.index(action.msg)
            network = network[:k] + network[k + 1 :]
            out = self.ops.handle(actors[pid], action.msg)
        violation = None
        for payload in out.deliveries:
            history = checkers.record_delivery(history, pid, payload.msg_id)
            if violation is None:
                violation = checkers.check_latest(history, pid)
        if out.emissions:
            network = tuple(sorted(network + out.emissions))
        actors = actors[:pid] + (out.state,) + actors[pid + 1 :]
        return GlobalState(actors, cursors, network, history), out, violation

    def successors(self, gs: GlobalState) -> list[tuple[Action, GlobalState]]:
        return [(a, self.step(gs, a)[0]) for a in self.actions(gs)]


@dataclass
class ExplorationReport:
    protocol: str
    script: Script
    total_states: int
    unique_states: int
    max_depth: int
    verdict: str
    elapsed: float
    trace: tuple[Action, ...] = ()
    violation: Optional[Violation] = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def table(self) -> str:
        return format_table([self])


def explore(
    protocol: Union[str, ProtocolOps],
    script: Sequence[Sequence[int]],
    max_states: Optional[int] = None,
    max_depth: Optional[int] = None,
) -> ExplorationReport:
    model = Model(protocol, script)
    start = time.perf_counter()
    init = model.initial()
    # parent links double as the visited set
    parents: dict[GlobalState, Optional[tuple[GlobalState, Action]]] = {init: None}
    frontier = deque([(init, 0)])
    total = 1
    deepest = 0
    verdict, bad, bad_state = PASS, None, None
    truncated = False

    while frontier:
        gs, depth = frontier.popleft()
        acts = model.actions(gs)
        if not acts:
            live = checkers.check_liveness(gs.history, terminal=True)
            if live:
                verdict, bad, bad_state = LIVENESS, live, gs
                break
            continue
        if max_depth is not None and depth >= max_depth:
            truncated = True
            continue
        for action in acts:
            nxt, _, violation = model.step(gs, action)
            total += 1
            if nxt in parents:
                continue
            parents[nxt] = (gs, action)
            if depth + 1 > deepest:
                deepest = depth + 1
            if violation:
                verdict, bad, bad_state = SAFETY, violation, nxt
                break
            if max_states is not None and len(parents) >= max_states:
                truncated = True
                frontier.clear()
                break
            frontier.append((nxt, depth + 1))
        if bad:
            break

    if verdict == PASS and truncated:
        verdict = LIMIT
    trace = _path(parents, bad_state) if bad_state is not None else ()
    return ExplorationReport(
        model.ops.name,
        model.script,
        total,
        len(parents),
        deepest,
        verdict,
        time.perf_counter() - start,
        trace,
        bad,
    )


def _path(parents, gs) -> tuple[Action, ...]:
    actions = []
    while parents[gs] is not None:
        gs, action = parents[gs]
        actions.append(action)
    return tuple(reversed(actions))


# -- traces -----------------------------------------------------------------


def render_transition(model: Model, before: GlobalState, action: Action, after: GlobalState, out) -> str:
    pid = action.pid
    if action.is_send:
        seq = before.cursors[pid]
        what = f"App {pid}→{model.script[pid][seq]} #{seq}"
        verb = "app_send"
    else:
        what = action.msg.describe()
        verb = "deliver"
    unack, mode = model.ops.describe(after.actors[pid])
    fields = [f"p{pid}", verb, what, unack, mode]
    extras = [m.describe() for m in out.emissions]
    if extras:
        fields.append("out: " + ", ".join(extras))
    if action.msg is not None and action.msg.stamp is not None:
        fields.append(stamp_summary(action.msg.stamp))
    return " | ".join(fields)


def replay(
    protocol: Union[str, ProtocolOps],
    script: Sequence[Sequence[int]],
    trace: Iterable[Action],
) -> tuple[list[str], str, Optional[Violation]]:
    """Re-run ``trace`` from the initial state.

    Returns the rendered lines, the verdict at the end of the trace and the
    violation (if any). A trace that asks for an action which is not enabled
    raises ``ValueError``.
    """
    model = Model(protocol, script)
    gs = model.initial()
    lines = []
    for action in trace:
        if action not in model.actions(gs):
            raise ValueError(f"trace diverges: {action} is not enabled")
        nxt, out, violation = model.step(gs, action)
        lines.append(render_transition(model, gs, action, nxt, out))
        gs = nxt
        if violation:
            return lines, SAFETY, violation
    if not model.actions(gs):
        live = checkers.check_liveness(gs.history, terminal=True)
        if live:
            return lines, LIVENESS, live
    return lines, PASS, None


def write_trace(report: ExplorationReport) -> str:
    lines, verdict, violation = replay(report.protocol, report.script, report.trace)
    header = [
        f"# protocol={report.protocol}",
        f"# script={format_script(report.script)}",
    ]
    footer = [f"# verdict={verdict}"]
    if violation:
        footer.append(f"# {violation}")
    return "\n".join(header + lines + footer) + "\n"


def read_trace(text: str):
    """Parse a trace file back into ``(protocol, script, actions)``.

    Deliveries are resolved against the in-flight messages while replaying,
    so the result is a list of concrete :class:`Action` values.
    """
    meta = {}
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) < 3 or not parts[0].startswith("p"):
            raise ValueError(f"line {lineno}: not a trace line: {raw!r}")
        steps.append((lineno, int(parts[0][1:]), parts[1], parts[2]))
    if "protocol" not in meta or "script" not in meta:
        raise ValueError("trace is missing its protocol/script header")
    model = Model(meta["protocol"], parse_script(meta["script"]))
    gs = model.initial()
    actions = []
    for lineno, pid, verb, what in steps:
        if verb == "app_send":
            action = Action(pid)
        elif verb == "deliver":
            action = _match_delivery(gs, pid, what, lineno)
        else:
            raise ValueError(f"line {lineno}: unknown action {verb!r}")
        if action not in model.actions(gs):
            raise ValueError(f"line {lineno}: action not enabled")
        gs = model.step(gs, action)[0]
        actions.append(action)
    return meta["protocol"], model.script, actions


def _match_delivery(gs: GlobalState, pid: int, what: str, lineno: int) -> Action:
    label, _, rest = what.partition(" ")
    kind = KIND_BY_LABEL.get(label)
    if kind is None:
        raise ValueError(f"line {lineno}: unknown message kind {label!r}")
    ends, _, seq = rest.partition("#")
    src, dst = (int(x) for x in ends.strip().split("→"))
    for m in gs.network:
        if (m.kind, m.src, m.dst) != (kind, src, dst):
            continue
        if seq.strip() and (m.payload is None or m.payload.seq != int(seq)):
            continue
        return Action(pid, m)
    raise ValueError(f"line {lineno}: no in-flight message matches {what!r}")


# -- report table --------------------------------------------------------------

_VERDICT_MARK = {PASS: "yes", SAFETY: "NO (safety)", LIVENESS: "NO (liveness)", LIMIT: "incomplete"}


def format_table(reports: Sequence[ExplorationReport]) -> str:
    head = f"{'Protocol':<14} {'Total/unique states':>24} {'Max depth':>10} {'Time (s)':>10}  Correct?"
    rows = [head, "-" * len(head)]
    for r in reports:
        states = f"{r.total_states:,} / {r.unique_states:,}"
        rows.append(
            f"{r.protocol:<14} {states:>24} {r.max_depth:>10} {r.elapsed:>10.2f}  "
            f"{_VERDICT_MARK[r.verdict]}"
        )
    return "\n".join(rows)
