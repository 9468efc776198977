import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogmarl.engine import (
    Engine,
    Event,
    EventKind,
    LinkChannel,
    PastEvent,
    QueueStation,
    enqueue_job,
    finish_service,
    service_time,
    transmission_delay,
    transmit,
)


def _job(instructions):
    return SimpleNamespace(instructions=instructions, t_enqueued=None, t_service_start=None, t_service_end=None)


def run_single_station(lam, instructions, ipt, n_arrivals, seed, stochastic):
    """Poisson arrivals into one station; returns the finished jobs."""
    eng = Engine()
    st_ = QueueStation(0, ipt)
    arr_rng = np.random.default_rng([seed, 0])
    svc_rng = np.random.default_rng([seed, 1]) if stochastic else None
    done = []
    left = [n_arrivals]

    def on_arrival(ev):
        enqueue_job(eng, st_, _job(instructions), ev.time, svc_rng)
        left[0] -= 1
        if left[0] > 0:
            eng.at(ev.time + arr_rng.exponential(1 / lam), EventKind.JOB_ARRIVAL)

    def on_done(ev):
        done.append(finish_service(eng, ev.payload[0], ev.time, svc_rng))

    eng.on(EventKind.JOB_ARRIVAL, on_arrival)
    eng.on(EventKind.SERVICE_COMPLETE, on_done)
    eng.at(arr_rng.exponential(1 / lam), EventKind.JOB_ARRIVAL)
    eng.run_until(math.inf)
    return done, st_


def test_events_pop_in_time_order():
    eng = Engine()
    eng.at(1.0, EventKind.JOB_ARRIVAL, "late")
    eng.at(0.5, EventKind.JOB_ARRIVAL, "early")
    assert [eng.pop().payload for _ in range(2)] == ["early", "late"]


def test_simultaneous_events_keep_insertion_order():
    eng = Engine()
    eng.schedule(Event(5.0, EventKind.JOB_ARRIVAL, "a", seq=3))
    eng.schedule(Event(5.0, EventKind.JOB_ARRIVAL, "b", seq=4))
    assert eng.pop().payload == "a"
    assert eng.pop().payload == "b"


def test_past_event_rejected():
    eng = Engine()
    eng.run_until(2.0)
    with pytest.raises(PastEvent):
        eng.at(1.0, EventKind.JOB_ARRIVAL)


def test_run_until_on_empty_queue_only_moves_clock():
    eng = Engine()
    eng.run_until(10.0)
    assert eng.clock == 10.0 and len(eng) == 0 and eng.processed == 0


def test_event_processed_once():
    eng = Engine()
    seen = []
    eng.on(EventKind.JOB_ARRIVAL, lambda ev: seen.append(ev.time))
    eng.at(3.0, EventKind.JOB_ARRIVAL)
    eng.run_until(10.0)
    assert seen == [3.0] and eng.clock == 10.0


def test_service_time_examples():
    assert service_time(1e4, 1e3) == 10.0
    assert service_time(1e2, 1e6) == pytest.approx(1e-4)
    with pytest.raises(ValueError):
        service_time(1.0, 0.0)


def test_stochastic_service_mean():
    rng = np.random.default_rng(11)
    draws = [service_time(1e3, 1e3, rng) for _ in range(10**6)]
    assert np.mean(draws) == pytest.approx(1.0, rel=0.01)


def test_fifo_waits_and_queue_length():
    eng = Engine()
    station = QueueStation(1, 1e3)
    jobs = [_job(1e3) for _ in range(3)]
    for j in jobs:
        enqueue_job(eng, station, j, 0.0)
    assert len(station) == 3
    eng.on(EventKind.SERVICE_COMPLETE, lambda ev: finish_service(eng, ev.payload[0], ev.time))
    eng.run_until(10.0)
    assert [j.t_service_start - j.t_enqueued for j in jobs] == [0.0, 1.0, 2.0]
    assert station.busy_time_accum == 3.0 and len(station) == 0


def test_idle_station_serves_immediately():
    eng = Engine()
    station = QueueStation(1, 1e3)
    j = _job(1e2)
    enqueue_job(eng, station, j, 4.0)
    assert len(station) == 1 and j.t_service_start == 4.0


def test_transmission_examples():
    link = LinkChannel((0, 1), 100e6, 1.0)
    assert transmission_delay(1e3, link) == pytest.approx(1.00008)
    assert transmission_delay(0.0, LinkChannel((0, 1), 100e6, 2.0)) == 2.0


def test_back_to_back_messages_serialize():
    link = LinkChannel((0, 1), 100e6, 1.0)
    a = transmit(1e3, link, 0.0)
    b = transmit(1e3, link, 0.0)
    assert b - a == pytest.approx(8e-5)
    assert link.messages == 2


def test_transmission_delay_does_not_reserve():
    link = LinkChannel((0, 1), 1e6, 0.5)
    transmission_delay(1e3, link, 0.0)
    assert link.free_at == 0.0


def test_mm1_mean_wait():
    done, _ = run_single_station(0.5, 1e3, 1e3, 10**5, seed=3, stochastic=True)
    waits = [j.t_service_start - j.t_enqueued for j in done]
    # rho / (mu - lam) with rho = 0.5, mu = 1
    assert np.mean(waits) == pytest.approx(1.0, rel=0.05)


def test_md1_mean_wait():
    done, _ = run_single_station(0.5, 1e3, 1e3, 10**5, seed=3, stochastic=False)
    waits = [j.t_service_start - j.t_enqueued for j in done]
    # Pollaczek-Khinchine: rho / (2 mu (1 - rho))
    assert np.mean(waits) == pytest.approx(0.5, rel=0.05)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 50), st.sampled_from([1e2, 1e3, 1e4])), min_size=1, max_size=40),
    st.floats(1e2, 1e5),
)
def test_station_conserves_jobs_and_busy_time(arrivals, ipt):
    eng = Engine()
    station = QueueStation(0, ipt)
    done = []
    eng.on(EventKind.JOB_ARRIVAL, lambda ev: enqueue_job(eng, station, ev.payload, ev.time))
    eng.on(EventKind.SERVICE_COMPLETE, lambda ev: done.append(finish_service(eng, ev.payload[0], ev.time)))
    jobs = []
    for t, w in arrivals:
        j = _job(w)
        jobs.append(j)
        eng.at(t, EventKind.JOB_ARRIVAL, j)
    eng.run_until(math.inf)
    assert len(done) == len(jobs)
    assert station.busy_time_accum == pytest.approx(sum(w for _, w in arrivals) / ipt)
    starts = sorted(j.t_service_start for j in jobs)
    ends = sorted(j.t_service_end for j in jobs)
    # single server: a job never starts before the previous one ends
    assert all(s >= e - 1e-9 for s, e in zip(starts[1:], ends[:-1]))
    assert all(j.t_service_start >= j.t_enqueued for j in jobs)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=50))
def test_pop_order_is_sorted_and_stable(times):
    eng = Engine()
    for i, t in enumerate(times):
        eng.at(t, EventKind.JOB_ARRIVAL, i)
    out = [eng.pop() for _ in range(len(times))]
    keys = [(e.time, e.payload) for e in out]
    assert keys == sorted(keys)


def test_trace_is_deterministic():
    def trace():
        eng = Engine(record_trace=True)
        rng = np.random.default_rng(5)
        eng.on(EventKind.JOB_ARRIVAL, lambda ev: None)
        for t in rng.uniform(0, 10, 100):
            eng.at(float(t), EventKind.JOB_ARRIVAL)
        eng.run_until(10.0)
        return eng.trace

    assert trace() == trace()
