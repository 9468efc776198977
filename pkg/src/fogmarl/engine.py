"""Discrete-event engine, FIFO compute stations and serialized link channels.

Time is in seconds. Events are ordered by ``(time, seq)`` where ``seq`` is
assigned from a per-engine counter at scheduling time, so simultaneous events
fire in insertion order.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np


class EventKind(str, Enum):
    JOB_ARRIVAL = "JobArrival"
    SERVICE_COMPLETE = "ServiceComplete"
    TRANSMISSION_COMPLETE = "TransmissionComplete"
    GOSSIP_BROADCAST = "GossipBroadcast"
    CONTROL_MESSAGE_DELIVERED = "ControlMessageDelivered"
    PHASE_CHANGE = "PhaseChange"


class PastEvent(ValueError):
    """Raised when an event is scheduled before the current clock."""


@dataclass
class Event:
    time: float
    kind: EventKind
    payload: Any = None
    seq: int | None = None


class Engine:
    """Single-threaded event loop.

    Handlers are registered per :class:`EventKind` and called as
    ``handler(event)``. Set ``record_trace=True`` to keep ``(time, seq, kind)``
    of every processed event.
    """

    def __init__(self, record_trace: bool = False) -> None:
        self.clock = 0.0
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = 0
        self._handlers: dict[EventKind, Callable[[Event], None]] = {}
        self.trace: list[tuple[float, int, str]] | None = [] if record_trace else None
        self.processed = 0

    def on(self, kind: EventKind, handler: Callable[[Event], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, event: Event) -> Event:
        if event.time < self.clock:
            raise PastEvent(f"event at t={event.time} scheduled with clock at {self.clock}")
        if event.seq is None:
            event.seq = self._seq
            self._seq += 1
        else:
            self._seq = max(self._seq, event.seq + 1)
        heapq.heappush(self._heap, (event.time, event.seq, event))
        return event

    def at(self, time: float, kind: EventKind, payload: Any = None) -> Event:
        return self.schedule(Event(time, kind, payload))

    def pop(self) -> Event:
        time, _, event = heapq.heappop(self._heap)
        self.clock = time
        return event

    def peek_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def run_until(self, t_end: float) -> None:
        if t_end < self.clock:
            raise PastEvent(f"run_until({t_end}) with clock at {self.clock}")
        heap = self._heap
        handlers = self._handlers
        trace = self.trace
        while heap and heap[0][0] <= t_end:
            time, seq, event = heapq.heappop(heap)
            self.clock = time
            if trace is not None:
                trace.append((time, seq, event.kind.value))
            self.processed += 1
            handlers[event.kind](event)
        self.clock = t_end


def service_time(instructions: float, ipt: float, rng: np.random.Generator | None = None) -> float:
    """Seconds needed to run ``instructions`` on a node with ``ipt`` IPS.

    With ``rng`` given the time is exponential with the same mean (used only
    for M/M/1 validation).
    """
    if ipt <= 0:
        raise ValueError("ipt must be positive")
    mean = instructions / ipt
    if rng is None:
        return mean
    return float(rng.exponential(mean))


@dataclass
class QueueStation:
    """Single-server FIFO station.

    ``len(station)`` counts the job in service plus the waiting ones.
    """

    node_id: int
    ipt: float
    queue: deque = field(default_factory=deque)
    busy_until: float | None = None
    busy_time_accum: float = 0.0
    queued_instructions: float = 0.0

    def __len__(self) -> int:
        return len(self.queue)

    @property
    def idle(self) -> bool:
        return not self.queue


def enqueue_job(
    engine: Engine,
    station: QueueStation,
    job: Any,
    now: float,
    rng: np.random.Generator | None = None,
) -> None:
    """Append ``job`` to ``station``; start service if the server is idle.

    ``job`` needs ``instructions``, ``t_enqueued``, ``t_service_start`` and
    ``t_service_end`` attributes. ServiceComplete carries ``(station, job)``.
    """
    job.t_enqueued = now
    station.queue.append(job)
    station.queued_instructions += job.instructions
    if len(station.queue) == 1:
        _start_service(engine, station, job, now, rng)


def _start_service(engine, station, job, now, rng):
    job.t_service_start = now
    end = now + service_time(job.instructions, station.ipt, rng)
    station.busy_until = end
    engine.at(end, EventKind.SERVICE_COMPLETE, (station, job))


def finish_service(
    engine: Engine,
    station: QueueStation,
    now: float,
    rng: np.random.Generator | None = None,
) -> Any:
    """Pop the job in service, account busy time and start the next one."""
    job = station.queue.popleft()
    station.queued_instructions -= job.instructions
    if not station.queue:
        station.queued_instructions = 0.0
    job.t_service_end = now
    station.busy_time_accum += now - job.t_service_start
    if station.queue:
        _start_service(engine, station, station.queue[0], now, rng)
    else:
        station.busy_until = None
    return job


@dataclass
class LinkChannel:
    """One direction of a link. Transmissions serialize; propagation overlaps."""

    endpoints: tuple[int, int]
    bandwidth: float  # bits per second
    prop_delay: float
    free_at: float = 0.0
    messages: int = 0

    def __post_init__(self) -> None:
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")


def transmission_delay(message_bytes: float, link: LinkChannel, now: float = 0.0) -> float:
    """Delay from ``now`` until a message sent now is fully received.

    Does not reserve the channel; see :func:`transmit`.
    """
    start = max(now, link.free_at)
    return start + 8.0 * message_bytes / link.bandwidth + link.prop_delay - now


def transmit(message_bytes: float, link: LinkChannel, now: float) -> float:
    """Reserve the channel for one message and return its arrival time."""
    start = link.free_at if link.free_at > now else now
    done = start + 8.0 * message_bytes / link.bandwidth
    link.free_at = done
    link.messages += 1
    return done + link.prop_delay


@dataclass
class _SimpleJob:
    instructions: float
    t_enqueued: float | None = None
    t_service_start: float | None = None
    t_service_end: float | None = None


def single_station_waits(
    arrival_rate: float,
    mean_service: float,
    n_arrivals: int,
    seed: int = 0,
    stochastic: bool = True,
) -> np.ndarray:
    """Queue waits of ``n_arrivals`` Poisson jobs through one FIFO station.

    Service is exponential with mean ``mean_service`` when ``stochastic``,
    otherwise constant. Arrival and service draws use separate streams.
    """
    eng = Engine()
    station = QueueStation(0, 1.0)
    arr_rng = np.random.default_rng([seed, 0])
    svc_rng = np.random.default_rng([seed, 1]) if stochastic else None
    waits = []
    left = n_arrivals

    def on_arrival(ev):
        nonlocal left
        enqueue_job(eng, station, _SimpleJob(mean_service), ev.time, svc_rng)
        left -= 1
        if left > 0:
            eng.at(ev.time + arr_rng.exponential(1.0 / arrival_rate), EventKind.JOB_ARRIVAL)

    def on_done(ev):
        job = finish_service(eng, ev.payload[0], ev.time, svc_rng)
        waits.append(job.t_service_start - job.t_enqueued)

    eng.on(EventKind.JOB_ARRIVAL, on_arrival)
    eng.on(EventKind.SERVICE_COMPLETE, on_done)
    eng.at(arr_rng.exponential(1.0 / arrival_rate), EventKind.JOB_ARRIVAL)
    eng.run_until(float("inf"))
    return np.array(waits)
