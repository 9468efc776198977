import numpy as np
import pytest
from scipy import stats

from fogmarl.agents import PolicyKind
from fogmarl.topology import build_topology
from fogmarl.workload import (
    CATEGORIES,
    GenerationSchedule,
    HEAVY,
    Job,
    LIGHT,
    MODERATE,
    sample_interarrival,
    spawn_generators,
    stream_rng,
)
from fogmarl.world import BaselineController, World


def test_category_constants():
    assert (HEAVY.instructions, HEAVY.data_bytes) == (1e4, 1e3)
    assert (MODERATE.instructions, MODERATE.data_bytes) == (1e3, 1e2)
    assert (LIGHT.instructions, LIGHT.data_bytes) == (1e2, 1e1)
    assert CATEGORIES == (HEAVY, MODERATE, LIGHT)


@pytest.mark.parametrize("beta", [100.0, 150.0, 200.0])
def test_interarrival_mean_and_cv(beta):
    rng = stream_rng(0, beta)
    x = np.array([sample_interarrival(beta, rng) for _ in range(10**6)])
    assert x.min() > 0
    assert x.mean() == pytest.approx(beta, rel=0.01)
    assert x.std() / x.mean() == pytest.approx(1.0, rel=0.02)


def test_rate_halves_when_beta_doubles():
    rng = np.random.default_rng(1)
    n100 = len(_poisson_times(100.0, 1e6, rng))
    n200 = len(_poisson_times(200.0, 1e6, rng))
    assert n100 / n200 == pytest.approx(2.0, rel=0.05)


def _poisson_times(beta, horizon, rng):
    t, out = 0.0, []
    while True:
        t += sample_interarrival(beta, rng)
        if t > horizon:
            return out
        out.append(t)


def test_poisson_count_within_three_sigma():
    n = len(_poisson_times(100.0, 1e6, stream_rng(3, 1, 2)))
    assert abs(n - 1e4) <= 3 * np.sqrt(1e4)


def test_streams_are_independent():
    first = sample_interarrival(100.0, stream_rng(0, 1, 4, 0))
    ra, rb = stream_rng(0, 1, 4, 0), stream_rng(0, 1, 4, 1)
    xa = np.array([sample_interarrival(100.0, ra) for _ in range(5000)])
    xb = np.array([sample_interarrival(100.0, rb) for _ in range(5000)])
    # same key, same sequence
    assert first == xa[0]
    assert not np.array_equal(xa, xb)
    assert abs(stats.pearsonr(xa, xb)[0]) < 0.05


def test_nonpositive_beta_rejected():
    with pytest.raises(ValueError):
        sample_interarrival(0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        GenerationSchedule([(0, 100), (10, -1)])


def test_schedule_lookup():
    sched = GenerationSchedule([(0, 200), (30000, 150), (60000, 100)])
    assert sched.mean_interarrival(0) == 200
    assert sched.mean_interarrival(29999.9) == 200
    assert sched.mean_interarrival(30000) == 150
    assert sched.mean_interarrival(1e9) == 100
    assert sched.boundaries() == [30000.0, 60000.0]
    assert GenerationSchedule([(0, 200)], beta_scale=0.5).mean_interarrival(5) == 100


def test_sixty_three_streams_at_full_scale():
    topo = build_topology(32, 21, seed=0)
    world = World(topo, BaselineController(PolicyKind.RANDOM, np.random.default_rng(0)), GenerationSchedule([(0, 100)]))
    assert spawn_generators(world) == 63


def test_phase_boundary_switches_rate():
    topo = build_topology(8, 4, seed=0)
    sched = GenerationSchedule([(0, 10.0), (5000, 1.0)])
    world = World(topo, BaselineController(PolicyKind.RANDOM, np.random.default_rng(0)), sched)
    spawn_generators(world)
    world.run_until(10000)
    t = np.array([j.t_generated for j in world.jobs])
    early, late = np.sum(t < 5000), np.sum(t >= 5000)
    # 12 streams: rates 1.2/s then 12/s
    assert early == pytest.approx(6000, rel=0.05)
    assert late == pytest.approx(60000, rel=0.05)


def test_job_delays():
    j = Job(0, HEAVY, 3, t_generated=1.0, t_enqueued=2.0, t_service_start=5.0, t_service_end=15.0, t_response_at_ap=16.2)
    assert j.waiting == 3.0
    assert j.execution_delay == pytest.approx(15.2)
    assert j.instructions == 1e4
