"""Discrete-event network simulation of the three causal delivery protocols.

Time is in milliseconds and bandwidth in kB/s, which is conveniently the
same thing as bytes per millisecond. Each emitted message is serialized onto
a FIFO link (one per sending process by default, or a single link shared by
the whole system), then arrives after a fixed propagation delay.

A delivered message may trigger a job on its recipient. While a job runs the
recipient's application sends are deferred; protocol handling (ACKs, YCTs,
deliveries) carries on. By default send k of a process falls due at
k * comm_freq_ms, and sends that fell due during a job go out back to back
once it ends.
"""

from __future__ import annotations

import csv
import heapq
import io
import logging
import math
import os
from bisect import bisect_left
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import product
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from . import checkers, protocols
from .checkers import ExecutionHistory
from .protocol import Kind, Payload, WireMessage, data_message

log = logging.getLogger(__name__)

SIM_PROTOCOLS = ("cykas", "mfss", "matrix")
LINK_MODELS = ("per-process", "shared")
# fixed: send k becomes due at k * comm_freq_ms; after-send: comm_freq_ms
# after the previous send actually happened
PACING_MODELS = ("fixed", "after-send")
# overlap: jobs start on delivery even if another job is running;
# serial: a process runs one job at a time
JOB_MODELS = ("overlap", "serial")


@dataclass(frozen=True)
class SimConfig:
    protocol: str = "cykas"
    n: int = 100
    bandwidth_kbps: float = 50.0
    prop_delay_ms: float = 5.0
    msgs_per_process: int = 100
    comm_freq_ms: float = 10.0
    job_prob: float = 0.1
    job_mean_ms: float = 25.0
    # None means a quarter of the mean
    job_stddev_ms: Optional[float] = None
    hotspot_frac: float = 0.0
    hotspot_prob: float = 0.8
    payload_bytes: int = 64
    header_bytes: int = 16
    control_bytes: int = 16
    matrix_entry_bytes: int = 4
    link: str = "per-process"
    pacing: str = "fixed"
    jobs: str = "overlap"
    count_control_bytes: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in SIM_PROTOCOLS:
            raise ValueError(f"protocol must be one of {SIM_PROTOCOLS}, got {self.protocol!r}")
        if self.link not in LINK_MODELS:
            raise ValueError(f"link must be one of {LINK_MODELS}, got {self.link!r}")
        if self.pacing not in PACING_MODELS:
            raise ValueError(f"pacing must be one of {PACING_MODELS}, got {self.pacing!r}")
        if self.jobs not in JOB_MODELS:
            raise ValueError(f"jobs must be one of {JOB_MODELS}, got {self.jobs!r}")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (int, float)) and not isinstance(value, bool) and value < 0:
                raise ValueError(f"{f.name} must be >= 0, got {value}")
        for name in ("job_prob", "hotspot_prob", "hotspot_frac"):
            if getattr(self, name) > 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.bandwidth_kbps <= 0:
            raise ValueError("bandwidth_kbps must be positive")

    @property
    def job_sd(self) -> float:
        return self.job_mean_ms / 4 if self.job_stddev_ms is None else self.job_stddev_ms


class SendIntent(NamedTuple):
    dst: int
    triggers_job: bool = False
    job_ms: float = 0.0
    # wait until this (sender, seq) message has been delivered locally
    after: Optional[tuple[int, int]] = None


Workload = tuple[tuple[SendIntent, ...], ...]


def hotspot_set(n: int, frac: float) -> range:
    return range(math.ceil(frac * n - 1e-9))


def generate_workload(cfg: SimConfig, rng: Optional[np.random.Generator] = None) -> Workload:
    if cfg.n < 2:
        raise ValueError("a workload needs at least two processes")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    hot = list(hotspot_set(cfg.n, cfg.hotspot_frac))
    cold = [j for j in range(cfg.n) if j >= len(hot)]
    everyone = list(range(cfg.n))
    sd = cfg.job_sd
    workload = []
    for i in range(cfg.n):
        if hot:
            hot_i = [j for j in hot if j != i] or [j for j in cold if j != i]
            cold_i = [j for j in cold if j != i] or hot_i
        else:
            hot_i = cold_i = [j for j in everyone if j != i]
        intents = []
        for _ in range(cfg.msgs_per_process):
            pool = hot_i if hot and rng.random() < cfg.hotspot_prob else cold_i
            dst = pool[int(rng.integers(len(pool)))]
            if rng.random() < cfg.job_prob:
                job = max(0.0, float(rng.normal(cfg.job_mean_ms, sd)))
                intents.append(SendIntent(dst, True, job))
            else:
                intents.append(SendIntent(dst))
        workload.append(tuple(intents))
    return tuple(workload)


def message_size(protocol: str, kind: Kind, n: int, cfg: SimConfig) -> int:
    if kind.is_data:
        size = cfg.payload_bytes + cfg.header_bytes
        if protocol == "matrix":
            size += cfg.matrix_entry_bytes * n * n
        return size
    if protocol == "matrix":
        raise ValueError("the matrix protocol has no control messages")
    return cfg.control_bytes


@dataclass
class SimMetrics:
    total_ms: float = 0.0
    avg_job_start_ms: Optional[float] = None
    bytes_sent: int = 0
    data_msgs: int = 0
    control_msgs: int = 0
    kind_counts: dict = field(default_factory=dict)
    jobs: int = 0
    link_busy_ms: float = 0.0
    buffered: int = 0
    causal_violation: Optional[checkers.CausalViolation] = None


class Speedup(NamedTuple):
    execution: float
    job_start: Optional[float]


def speedup(baseline: SimMetrics, subject: SimMetrics) -> Speedup:
    """How many times faster ``subject`` is than ``baseline`` (> 1 is better)."""
    if subject.total_ms == 0:
        raise ValueError("subject total execution time is zero")
    job = None
    if baseline.avg_job_start_ms is not None and subject.avg_job_start_ms is not None:
        if subject.avg_job_start_ms == 0:
            raise ValueError("subject average job start time is zero")
        job = baseline.avg_job_start_ms / subject.avg_job_start_ms
    return Speedup(baseline.total_ms / subject.total_ms, job)


# event ranks: ties at equal time resolve in this order
JOB_DONE, ARRIVAL, APP_SEND_READY = 0, 1, 2


class _Simulation:
    def __init__(self, cfg: SimConfig, workload: Workload, check: bool):
        if len(workload) != cfg.n:
            raise ValueError(f"workload has {len(workload)} processes, config says {cfg.n}")
        for i, intents in enumerate(workload):
            for it in intents:
                if it.dst == i or not 0 <= it.dst < cfg.n:
                    raise ValueError(f"bad destination {it.dst} for process {i}")
        self.cfg, self.workload, self.check = cfg, workload, check
        self.n = n = cfg.n
        self.matrix = cfg.protocol == "matrix"
        self.ops = protocols.get(cfg.protocol)
        self.states = [self.ops.init(i, n) for i in range(n)]
        self.cursor = [0] * n
        self.busy_until = [0.0] * n
        self.owed = [0] * n
        self.waiting_for: list[Optional[tuple[int, int]]] = [None] * n
        self.delivered_ids = [set() for _ in range(n)] if any(
            it.after for intents in workload for it in intents
        ) else None
        self.link_free = [0.0] * (n if cfg.link == "per-process" else 1)
        self.history = ExecutionHistory.empty(n)
        self.events: list = []
        self.counter = 0
        self.metrics = SimMetrics()
        self.job_starts: list[float] = []
        if self.matrix:
            # dest_pos[k][d]: sequence numbers of k's sends addressed to d
            self.dest_pos = [[[] for _ in range(n)] for _ in range(n)]
            self.delivered_from = [[0] * n for _ in range(n)]
            self.pending: list[list[WireMessage]] = [[] for _ in range(n)]

    def push(self, t: float, rank: int, arg) -> None:
        self.counter += 1
        heapq.heappush(self.events, (t, rank, self.counter, arg))

    def run(self) -> SimMetrics:
        for i in range(self.n):
            if self.workload[i]:
                self.push(0.0, APP_SEND_READY, i)
                if self.cfg.pacing == "fixed":
                    for k in range(1, len(self.workload[i])):
                        self.push(k * self.cfg.comm_freq_ms, APP_SEND_READY, i)
        now = 0.0
        while self.events:
            now, rank, _, arg = heapq.heappop(self.events)
            if rank == ARRIVAL:
                self.arrive(now, arg)
            elif rank == APP_SEND_READY:
                self.ready(now, arg)
            else:
                self.job_done(now, arg)
        return self.finish(now)

    # -- application side ---------------------------------------------------

    def ready(self, t: float, pid: int) -> None:
        self.owed[pid] += 1
        self.issue(t, pid)

    def issue(self, t: float, pid: int) -> None:
        """Perform every owed application send that nothing holds back."""
        while self.owed[pid] and self.busy_until[pid] <= t:
            intent = self.workload[pid][self.cursor[pid]]
            if intent.after is not None and intent.after not in self.delivered_ids[pid]:
                self.waiting_for[pid] = intent.after
                return
            self.owed[pid] -= 1
            self.app_send(t, pid, intent)

    def app_send(self, t: float, pid: int, intent: SendIntent) -> None:
        cfg = self.cfg
        seq = self.cursor[pid]
        payload = Payload(
            pid,
            intent.dst,
            seq,
            cfg.payload_bytes,
            intent.job_ms if intent.triggers_job else None,
        )
        self.history, _ = checkers.record_send(self.history, pid, payload.msg_id)
        if self.matrix:
            self.dest_pos[pid][intent.dst].append(seq)
            self.transmit(t, data_message(Kind.NORMAL, payload))
        else:
            out = self.ops.app_send(self.states[pid], payload)
            self.states[pid] = out.state
            for msg in out.emissions:
                self.transmit(t, msg)
        self.cursor[pid] = seq + 1
        if seq + 1 < len(self.workload[pid]) and cfg.pacing == "after-send":
            self.push(t + cfg.comm_freq_ms, APP_SEND_READY, pid)

    def job_done(self, t: float, pid: int) -> None:
        self.issue(t, pid)

    # -- network side ---------------------------------------------------------

    def transmit(self, t: float, msg: WireMessage) -> None:
        cfg, m = self.cfg, self.metrics
        size = message_size(cfg.protocol, msg.kind, self.n, cfg)
        m.kind_counts[msg.kind.label] = m.kind_counts.get(msg.kind.label, 0) + 1
        if msg.kind.is_data:
            m.data_msgs += 1
        else:
            m.control_msgs += 1
            if not cfg.count_control_bytes:
                self.push(t + cfg.prop_delay_ms, ARRIVAL, msg)
                return
        link = msg.src if cfg.link == "per-process" else 0
        start = max(t, self.link_free[link])
        busy = size / cfg.bandwidth_kbps
        self.link_free[link] = start + busy
        m.bytes_sent += size
        m.link_busy_ms += busy
        self.push(start + busy + cfg.prop_delay_ms, ARRIVAL, msg)

    def arrive(self, t: float, msg: WireMessage) -> None:
        dst = msg.dst
        if self.matrix:
            self.matrix_arrive(t, msg)
            return
        out = self.ops.handle(self.states[dst], msg)
        self.states[dst] = out.state
        for payload in out.deliveries:
            self.deliver(t, dst, payload)
        for reply in out.emissions:
            self.transmit(t, reply)

    def deliver(self, t: float, pid: int, payload: Payload) -> None:
        self.history = checkers.record_delivery(self.history, pid, payload.msg_id)
        if self.check and self.metrics.causal_violation is None:
            self.metrics.causal_violation = checkers.check_latest(self.history, pid)
        if payload.job_ms is not None:
            start = t if self.cfg.jobs == "overlap" else max(t, self.busy_until[pid])
            self.job_starts.append(start)
            end = start + payload.job_ms
            if end > self.busy_until[pid]:
                self.busy_until[pid] = end
            self.push(end, JOB_DONE, pid)
        if self.delivered_ids is not None:
            self.delivered_ids[pid].add(payload.msg_id)
            if self.waiting_for[pid] == payload.msg_id:
                self.waiting_for[pid] = None
                self.issue(t, pid)

    # -- matrix clock, derived from vector clocks ----------------------------

    def matrix_deliverable(self, msg: WireMessage) -> bool:
        """Matrix-clock delivery test without materializing the matrix.

        Column ``dst`` of the stamp counts, for each k, the sends k → dst
        that causally precede this send; the vector-clock stamp says how many
        of k's sends precede it, and ``dest_pos`` says which went to dst.
        """
        dst, src = msg.dst, msg.src
        stamp = self.history.stamp_of(msg.payload.msg_id)
        have = self.delivered_from[dst]
        for k in range(self.n):
            known = stamp[k] - (k == src)
            if known and bisect_left(self.dest_pos[k][dst], known) > have[k]:
                return False
        return True

    def matrix_arrive(self, t: float, msg: WireMessage) -> None:
        dst = msg.dst
        if not self.matrix_deliverable(msg):
            self.pending[dst].append(msg)
            self.metrics.buffered += 1
            return
        self.matrix_deliver(t, msg)
        pending = self.pending[dst]
        progress = True
        while progress and pending:
            progress = False
            for i, waiting in enumerate(pending):
                if self.matrix_deliverable(waiting):
                    del pending[i]
                    self.matrix_deliver(t, waiting)
                    progress = True
                    break

    def matrix_deliver(self, t: float, msg: WireMessage) -> None:
        self.delivered_from[msg.dst][msg.src] += 1
        self.deliver(t, msg.dst, msg.payload)

    # -- wrap up -------------------------------------------------------------

    def finish(self, now: float) -> SimMetrics:
        m = self.metrics
        h = self.history
        if h.delivered_count != h.sent_count:
            raise RuntimeError(
                f"simulation stalled: {h.sent_count} sent, {h.delivered_count} delivered"
            )
        if self.matrix:
            stuck = any(self.pending)
        else:
            stuck = not all(self.ops.is_quiescent(s) for s in self.states)
        if stuck or any(c < len(w) for c, w in zip(self.cursor, self.workload)):
            raise RuntimeError("simulation ended with unsent or undelivered work")
        m.total_ms = now
        m.jobs = len(self.job_starts)
        if self.job_starts:
            m.avg_job_start_ms = sum(self.job_starts) / len(self.job_starts)
        return m


def simulate(cfg: SimConfig, workload: Optional[Workload] = None, check: bool = False) -> SimMetrics:
    """Run one simulation. ``check`` also runs the causality checker."""
    if workload is None:
        workload = generate_workload(cfg)
    return _Simulation(cfg, workload, check).run()


# -- sweeps and CSV ---------------------------------------------------------------

CSV_COLUMNS = (
    "protocol",
    "n",
    "bandwidth_kbps",
    "prop_delay_ms",
    "comm_freq_ms",
    "job_prob",
    "job_mean_ms",
    "hotspot_frac",
    "seed",
    "total_ms",
    "avg_job_start_ms",
    "bytes_sent",
    "data_msgs",
    "control_msgs",
)


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.4f}".rstrip("0").rstrip(".") if x != int(x) else str(int(x))
    return str(x)


def csv_row(cfg: SimConfig, m: SimMetrics) -> list[str]:
    values = asdict(cfg)
    values.update(
        total_ms=m.total_ms,
        avg_job_start_ms=m.avg_job_start_ms,
        bytes_sent=m.bytes_sent,
        data_msgs=m.data_msgs,
        control_msgs=m.control_msgs,
    )
    return [_num(values[c]) for c in CSV_COLUMNS]


def format_csv(rows: Iterable[list[str]], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


def cell_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


@dataclass(frozen=True)
class Cell:
    """One grid point; every protocol in ``protocols`` sees the same workload."""

    config: SimConfig
    protocols: tuple[str, ...] = ("cykas", "mfss")


def run_cell(cell: Cell) -> list[tuple[SimConfig, SimMetrics]]:
    workload = generate_workload(cell.config)
    results = []
    for name in cell.protocols:
        cfg = replace(cell.config, protocol=name)
        results.append((cfg, simulate(cfg, workload)))
    return results


def seeded_cells(cells: Sequence[Cell], base_seed: int) -> list[Cell]:
    return [
        replace(c, config=replace(c.config, seed=cell_seed(base_seed, i)))
        for i, c in enumerate(cells)
    ]


def worker_count() -> int:
    try:
        return max(0, int(os.environ.get("CYKAS_THREADS", "0") or 0))
    except ValueError:
        return 0


def run_sweep(
    cells: Sequence[Cell], base_seed: int = 0, workers: Optional[int] = None
) -> Iterator[tuple[SimConfig, SimMetrics]]:
    """Yield ``(config, metrics)`` per protocol per cell, in grid order.

    A failing cell is logged and skipped.
    """
    if not cells:
        raise ValueError("empty sweep grid")
    cells = seeded_cells(cells, base_seed)
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(run_cell, c) for c in cells]
            for c, fut in zip(cells, futures):
                try:
                    yield from fut.result()
                except Exception as exc:
                    log.error("sweep cell %s failed: %s", c.config, exc)
        return
    for c in cells:
        try:
            results = run_cell(c)
        except Exception as exc:
            log.error("sweep cell %s failed: %s", c.config, exc)
            continue
        yield from results


# -- figure presets -------------------------------------------------------------

FIG4_PROCESSES = (25, 50, 100, 200, 500)
FIG4_BANDWIDTHS = (20, 100, 1000, 10000)
FIG5_JOB_MS = (0.5, 5, 12.5, 25, 50)
FIG5_COMM_FREQ_MS = (1, 10, 100, 1000)
FIG6_HOTSPOT_FRACS = (0.0, 0.05, 0.10, 0.20)


# send as fast as each protocol allows, so only bandwidth and delay matter
FIG4_BASE = SimConfig(prop_delay_ms=5, msgs_per_process=100, job_prob=0.0, comm_freq_ms=0)
FIG5_BASE = SimConfig(n=100, bandwidth_kbps=50, prop_delay_ms=5, job_prob=0.1)
FIG6_BASE = SimConfig(
    n=100, bandwidth_kbps=50, prop_delay_ms=5, comm_freq_ms=10, hotspot_prob=0.8, job_mean_ms=25
)


def fig4_cells(
    processes: Sequence[int] = FIG4_PROCESSES,
    bandwidths: Sequence[float] = FIG4_BANDWIDTHS,
    base: Optional[SimConfig] = None,
) -> list[Cell]:
    base = base or FIG4_BASE
    return [
        Cell(replace(base, n=n, bandwidth_kbps=bw), ("cykas", "mfss", "matrix"))
        for n, bw in product(processes, bandwidths)
    ]


def fig5_cells(base: Optional[SimConfig] = None) -> list[Cell]:
    base = base or FIG5_BASE
    return [
        Cell(replace(base, comm_freq_ms=freq, job_mean_ms=job))
        for freq, job in product(FIG5_COMM_FREQ_MS, FIG5_JOB_MS)
    ]


def fig6_cells(base: Optional[SimConfig] = None) -> list[Cell]:
    """Jobs off, then jobs on; hotspot fraction varies fastest."""
    base = base or FIG6_BASE
    return [
        Cell(replace(base, hotspot_frac=frac, job_prob=job_prob))
        for job_prob, frac in product((0.0, 0.1), FIG6_HOTSPOT_FRACS)
    ]


PRESETS = {"fig4": (fig4_cells, FIG4_BASE), "fig5": (fig5_cells, FIG5_BASE), "fig6": (fig6_cells, FIG6_BASE)}
