"""IoT workload categories, jobs and Poisson arrival schedules."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class WorkloadCategory:
    name: str
    instructions: float
    data_bytes: float

    @property
    def response_bytes(self) -> float:
        return self.data_bytes


HEAVY = WorkloadCategory("heavy", 1e4, 1e3)
MODERATE = WorkloadCategory("moderate", 1e3, 1e2)
LIGHT = WorkloadCategory("light", 1e2, 1e1)
CATEGORIES = (HEAVY, MODERATE, LIGHT)


@dataclass(slots=True)
class Job:
    job_id: int
    category: WorkloadCategory
    source_ap: int
    t_generated: float
    fog_id: int | None = None
    t_dispatched: float | None = None
    t_enqueued: float | None = None
    t_service_start: float | None = None
    t_service_end: float | None = None
    t_response_at_ap: float | None = None

    @property
    def instructions(self) -> float:
        return self.category.instructions

    @property
    def waiting(self) -> float:
        return self.t_service_start - self.t_enqueued

    @property
    def execution_delay(self) -> float:
        return self.t_response_at_ap - self.t_generated


@dataclass
class GenerationSchedule:
    """Piecewise-constant exponential scale: ``[(start_step, beta), ...]``.

    Phase starts are simulation seconds; the mean interarrival time is
    ``beta * beta_scale`` seconds.
    """

    phases: list[tuple[float, float]] = field(default_factory=lambda: [(0.0, 200.0), (30000.0, 150.0), (60000.0, 100.0)])
    beta_scale: float = 1.0

    def __post_init__(self) -> None:
        self.phases = [(float(s), float(b)) for s, b in self.phases]
        if not self.phases:
            raise ValueError("schedule needs at least one phase")
        starts = [s for s, _ in self.phases]
        if any(b <= s for s, b in zip(starts, starts[1:])):
            raise ValueError("phase starts must be strictly increasing")
        if any(b <= 0 for _, b in self.phases):
            raise ValueError("beta must be positive")
        self._starts = starts

    def phase_index(self, t: float) -> int:
        return max(bisect.bisect_right(self._starts, t) - 1, 0)

    def mean_interarrival(self, t: float) -> float:
        return self.phases[self.phase_index(t)][1] * self.beta_scale

    def boundaries(self) -> list[float]:
        return self._starts[1:]


def sample_interarrival(beta: float, rng: np.random.Generator) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = rng.exponential(beta)
    while x <= 0.0:
        x = rng.exponential(beta)
    return float(x)


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator per ``(seed, key...)``; used for per-(AP, category) streams."""
    return np.random.default_rng([int(seed), *map(int, key)])


def spawn_generators(world, schedule: GenerationSchedule | None = None) -> int:
    """Start one arrival stream per (AP, category) in ``world``; returns the count."""
    if schedule is not None:
        world.schedule = schedule
    n = 0
    for ap in world.topology.ap_ids:
        for ci in range(len(CATEGORIES)):
            world.add_stream(ap, ci)
            n += 1
    return n
