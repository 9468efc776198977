"""A simulated fog region: stations, links, arrival streams and a controller.

Jobs travel hop by hop over the data plane. Observations and CRL
request/reply messages use the control plane, which has its own channels
unless ``shared_contention`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

from .agents import (
    DDQLAgent,
    ObservationModel,
    PolicyKind,
    encode_state,
    select_baseline,
)
from .engine import (
    Engine,
    EventKind,
    LinkChannel,
    QueueStation,
    enqueue_job,
    finish_service,
    transmit,
)
from .topology import Role, Topology
from .workload import CATEGORIES, GenerationSchedule, Job, sample_interarrival, stream_rng

CONTROL_BYTES = 100.0
LOG_FORMAT = "fogmarl-eventlog"
LOG_VERSION = 1


class _Message:
    __slots__ = ("nbytes", "path", "hop", "callback", "data", "control")

    def __init__(self, nbytes, path, callback, data, control):
        self.nbytes = nbytes
        self.path = path
        self.hop = 0
        self.callback = callback
        self.data = data
        self.control = control


@dataclass
class _Stream:
    ap: int
    category_index: int
    rng: np.random.Generator


class World:
    """One simulation run over a fixed topology.

    ``seed`` and ``stream_key`` select the arrival streams: stream
    ``(ap, category)`` draws from ``default_rng([seed, *stream_key, ap, cat])``,
    so every policy facing the same key sees the same demand.
    """

    def __init__(
        self,
        topology: Topology,
        controller,
        schedule: GenerationSchedule,
        seed: int = 0,
        stream_key: tuple[int, ...] = (1,),
        stochastic_service: bool = False,
        shared_contention: bool = False,
        control_bytes: float = CONTROL_BYTES,
        record_trace: bool = False,
    ):
        self.topology = topology
        self.schedule = schedule
        self.engine = Engine(record_trace=record_trace)
        self.control_bytes = control_bytes
        self.service_rng = stream_rng(seed, 4, *stream_key) if stochastic_service else None
        self.fog_ids = topology.fog_ids
        self.fog_index = {f: i for i, f in enumerate(self.fog_ids)}
        self.stations = {
            n: QueueStation(n, spec.ipt)
            for n, spec in topology.nodes.items()
            if spec.role in (Role.FOG, Role.CLOUD)
        }
        self._fog_stations = [self.stations[f] for f in self.fog_ids]
        self.data_channels: dict[tuple[int, int], LinkChannel] = {}
        control: dict[tuple[int, int], LinkChannel] = {}
        for link in topology.links:
            u, v = link.endpoints
            for a, b in ((u, v), (v, u)):
                self.data_channels[(a, b)] = LinkChannel((a, b), link.bandwidth_bps, link.prop_delay)
                control[(a, b)] = LinkChannel((a, b), link.bandwidth_bps, link.prop_delay)
        self.control_channels = self.data_channels if shared_contention else control
        self._graph = topology.graph()
        self._paths: dict[int, dict[int, list[int]]] = {}

        self.jobs: list[Job] = []
        self.generated = 0
        self.completed = 0
        self.in_flight = 0
        self.control_msg_count = 0
        self.observation_msg_count = 0
        self.snapshot_times: list[float] = []

        e = self.engine
        e.on(EventKind.JOB_ARRIVAL, self._on_arrival)
        e.on(EventKind.SERVICE_COMPLETE, self._on_service_complete)
        e.on(EventKind.TRANSMISSION_COMPLETE, self._on_hop)
        e.on(EventKind.CONTROL_MESSAGE_DELIVERED, self._on_hop)
        e.on(EventKind.GOSSIP_BROADCAST, self._on_gossip)
        e.on(EventKind.PHASE_CHANGE, self._on_phase_change)

        self.seed = seed
        self.stream_key = tuple(stream_key)
        self._streams: list[_Stream] = []
        self.controller = controller
        self._snapshot_q = np.zeros(len(self.fog_ids))
        self._snapshot_w = np.zeros(len(self.fog_ids))
        self._delivered: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        controller.attach(self)
        for t in schedule.boundaries():
            e.at(t, EventKind.PHASE_CHANGE, schedule.phase_index(t))
        obs = controller.observation
        if obs is not None and obs.mode == "interval":
            e.at(0.0, EventKind.GOSSIP_BROADCAST, 0)

    # routing ------------------------------------------------------------
    def path(self, src: int, dst: int) -> list[int]:
        """Minimum-propagation-delay route (cached per source)."""
        if src not in self._paths:
            self._paths[src] = nx.single_source_dijkstra_path(self._graph, src, weight="prop_delay")
        return self._paths[src][dst]

    def path_delay(self, src: int, dst: int, nbytes: float = 0.0) -> float:
        p = self.path(src, dst)
        total = 0.0
        for a, b in zip(p, p[1:]):
            ch = self.data_channels[(a, b)]
            total += ch.prop_delay + 8.0 * nbytes / ch.bandwidth
        return total

    def send(self, nbytes: float, src: int, dst: int, callback, data=None, control: bool = False) -> None:
        path = self.path(src, dst)
        msg = _Message(nbytes, path, callback, data, control)
        now = self.engine.clock
        if len(path) == 1:
            self.engine.at(now, EventKind.CONTROL_MESSAGE_DELIVERED if control else EventKind.TRANSMISSION_COMPLETE, msg)
            return
        self._transmit_hop(msg, now)

    def _transmit_hop(self, msg: _Message, now: float) -> None:
        control = msg.control
        channels = self.control_channels if control else self.data_channels
        a, b = msg.path[msg.hop], msg.path[msg.hop + 1]
        arrive = transmit(msg.nbytes, channels[(a, b)], now)
        msg.hop += 1
        last = msg.hop == len(msg.path) - 1
        kind = EventKind.CONTROL_MESSAGE_DELIVERED if (control and last) else EventKind.TRANSMISSION_COMPLETE
        self.engine.at(arrive, kind, msg)

    def _on_hop(self, event) -> None:
        msg = event.payload
        now = event.time
        if msg.hop < len(msg.path) - 1:
            self._transmit_hop(msg, now)
        else:
            msg.callback(msg.data, now)

    # workload -------------------------------------------------------------
    def add_stream(self, ap: int, category_index: int) -> None:
        rng = stream_rng(self.seed, *self.stream_key, ap, category_index)
        s = _Stream(ap, category_index, rng)
        self._streams.append(s)
        t = sample_interarrival(self.schedule.mean_interarrival(0.0), rng)
        self.engine.at(t, EventKind.JOB_ARRIVAL, s)

    def _on_arrival(self, event) -> None:
        s = event.payload
        now = event.time
        job = Job(self.generated, CATEGORIES[s.category_index], s.ap, now)
        self.generated += 1
        self.in_flight += 1
        self.jobs.append(job)
        self.engine.at(now + sample_interarrival(self.schedule.mean_interarrival(now), s.rng), EventKind.JOB_ARRIVAL, s)
        self.controller.on_job(job, now)

    def _on_phase_change(self, event) -> None:
        self.controller.on_phase_change(event.payload, event.time)

    # data plane -------------------------------------------------------------
    def dispatch(self, job: Job, fog_id: int, now: float) -> None:
        job.fog_id = fog_id
        job.t_dispatched = now
        self.send(job.category.data_bytes, job.source_ap, fog_id, self._job_arrived, job)

    def _job_arrived(self, job: Job, now: float) -> None:
        self.in_flight -= 1
        enqueue_job(self.engine, self.stations[job.fog_id], job, now, self.service_rng)

    def _on_service_complete(self, event) -> None:
        station, job = event.payload
        now = event.time
        finish_service(self.engine, station, now, self.service_rng)
        self.in_flight += 1
        self.send(job.category.response_bytes, job.fog_id, job.source_ap, self._response_arrived, job)

    def _response_arrived(self, job: Job, now: float) -> None:
        job.t_response_at_ap = now
        self.in_flight -= 1
        self.completed += 1

    def queued(self) -> int:
        return sum(len(s) for s in self.stations.values())

    # observations -----------------------------------------------------------
    def true_queues(self) -> tuple[np.ndarray, np.ndarray]:
        st = self._fog_stations
        return (
            np.fromiter((len(s.queue) for s in st), float, len(st)),
            np.fromiter((s.queued_instructions for s in st), float, len(st)),
        )

    def _on_gossip(self, event) -> None:
        now = event.time
        q, w = self.true_queues()
        self.snapshot_times.append(now)
        obs = self.controller.observation
        self.observation_msg_count += self.controller.gossip_fanout()
        if obs.delivery == "instant":
            self._snapshot_q, self._snapshot_w = q, w
        else:
            for loc in self.controller.observer_locations():
                for f in self.controller.observed_fogs(loc):
                    i = self.fog_index[f]
                    self.send(self.control_bytes, f, loc, self._gossip_delivered, (loc, i, q[i], w[i]), control=True)
        self.engine.at(now + obs.interval_s, EventKind.GOSSIP_BROADCAST, event.payload + 1)

    def _gossip_delivered(self, data, now: float) -> None:
        loc, i, q, w = data
        if loc not in self._delivered:
            n = len(self.fog_ids)
            self._delivered[loc] = (np.zeros(n), np.zeros(n))
        self._delivered[loc][0][i] = q
        self._delivered[loc][1][i] = w

    def view(self, location: int) -> tuple[np.ndarray, np.ndarray]:
        """Queue lengths and queued instructions of every fog node, as seen from ``location``."""
        obs = self.controller.observation
        if obs is None or obs.mode == "realtime":
            return self.true_queues()
        if obs.delivery == "instant":
            return self._snapshot_q, self._snapshot_w
        n = len(self.fog_ids)
        return self._delivered.get(location, (np.zeros(n), np.zeros(n)))

    # driving ----------------------------------------------------------------
    def run_until(self, t_end: float) -> None:
        self.engine.run_until(t_end)

    def event_log(self, horizon: float | None = None) -> dict:
        """Everything the metrics need, as plain JSON-ready data."""
        horizon = self.engine.clock if horizon is None else horizon
        c = self.controller
        return {
            "format": LOG_FORMAT,
            "version": LOG_VERSION,
            "horizon": horizon,
            "fog_ids": list(self.fog_ids),
            "generated": self.generated,
            "control_msg_count": self.control_msg_count,
            "observation_msg_count": self.observation_msg_count,
            "decision_steps": {str(k): v for k, v in c.decision_counts().items()},
            "jobs": [
                [
                    j.job_id,
                    j.category.name,
                    j.source_ap,
                    j.fog_id,
                    j.t_generated,
                    j.t_dispatched,
                    j.t_enqueued,
                    j.t_service_start,
                    j.t_service_end,
                    j.t_response_at_ap,
                ]
                for j in self.jobs
            ],
        }


JOB_FIELDS = (
    "job_id",
    "category",
    "source_ap",
    "fog_id",
    "t_generated",
    "t_dispatched",
    "t_enqueued",
    "t_service_start",
    "t_service_end",
    "t_response_at_ap",
)


# controllers ----------------------------------------------------------------


class Controller:
    """Base for the objects that turn a generated job into a fog choice."""

    observation: ObservationModel | None = None

    def attach(self, world: World) -> None:
        self.world = world
        self._decisions: dict = {}

    def on_job(self, job: Job, now: float) -> None:
        raise NotImplementedError

    def on_phase_change(self, phase: int, now: float) -> None:
        pass

    def decision_counts(self) -> dict:
        return dict(sorted(self._decisions.items()))

    def _count(self, key) -> None:
        self._decisions[key] = self._decisions.get(key, 0) + 1

    def gossip_fanout(self) -> int:
        return 0

    def observer_locations(self) -> list[int]:
        return []

    def observed_fogs(self, location: int) -> list[int]:
        return []


def _region_of_ap(topology: Topology) -> dict:
    return {ap: r for r in topology.regions for ap in r.ap_ids}


class DistributedController(Controller):
    """One agent per AP, deciding locally with no control messages.

    ``agents`` maps AP id to anything with ``step(state, queues) -> index``
    (a :class:`DDQLAgent`) or ``act(state) -> index`` (a frozen policy).
    """

    def __init__(self, agents: dict, observation: ObservationModel, queue_cap: float = 100.0):
        self.agents = agents
        self.observation = observation
        self.queue_cap = queue_cap

    def attach(self, world: World) -> None:
        super().attach(world)
        self._region = _region_of_ap(world.topology)
        self._cand_idx = {
            ap: np.array([world.fog_index[f] for f in r.candidate_fog_ids]) for ap, r in self._region.items()
        }
        for agent in self.agents.values():
            if hasattr(agent, "reset_episode"):
                agent.reset_episode()

    def on_job(self, job: Job, now: float) -> None:
        ap = job.source_ap
        region = self._region[ap]
        q_all, _ = self.world.view(ap)
        q = q_all[self._cand_idx[ap]]
        if self.observation.mode == "realtime":
            self.world.observation_msg_count += len(q)
        state = encode_state(job.instructions, q, self.queue_cap)
        agent = self.agents[ap]
        a = agent.act(state) if getattr(agent, "frozen", False) else agent.step(state, q)
        self._count(ap)
        self.world.dispatch(job, region.candidate_fog_ids[a], now)

    def gossip_fanout(self) -> int:
        return sum(len(r.candidate_fog_ids) * len(r.ap_ids) for r in self.world.topology.regions)

    def observer_locations(self) -> list[int]:
        return sorted(self._region)

    def observed_fogs(self, location: int) -> list[int]:
        return list(self._region[location].candidate_fog_ids)


class CentralizedController(Controller):
    """One agent per region hosted on ``hosts[region_id]``.

    Each job costs a request (AP -> host) and a reply (host -> AP) before the
    AP can dispatch it.
    """

    def __init__(self, agents: dict, hosts: dict, observation: ObservationModel, queue_cap: float = 100.0):
        self.agents = agents
        self.hosts = hosts
        self.observation = observation
        self.queue_cap = queue_cap

    def attach(self, world: World) -> None:
        super().attach(world)
        self._region = _region_of_ap(world.topology)
        self._cand_idx = {
            r.region_id: np.array([world.fog_index[f] for f in r.candidate_fog_ids]) for r in world.topology.regions
        }
        self._onehot = {}
        for r in world.topology.regions:
            for i, ap in enumerate(r.ap_ids):
                v = np.zeros(len(r.ap_ids))
                v[i] = 1.0
                self._onehot[ap] = v
        for agent in self.agents.values():
            if hasattr(agent, "reset_episode"):
                agent.reset_episode()

    def on_job(self, job: Job, now: float) -> None:
        region = self._region[job.source_ap]
        host = self.hosts[region.region_id]
        self.world.control_msg_count += 1
        self.world.send(self.world.control_bytes, job.source_ap, host, self._decide, job, control=True)

    def _decide(self, job: Job, now: float) -> None:
        region = self._region[job.source_ap]
        rid = region.region_id
        host = self.hosts[rid]
        q_all, _ = self.world.view(host)
        q = q_all[self._cand_idx[rid]]
        if self.observation.mode == "realtime":
            self.world.observation_msg_count += len(q)
        state = encode_state(job.instructions, q, self.queue_cap, self._onehot[job.source_ap])
        agent = self.agents[rid]
        a = agent.act(state) if getattr(agent, "frozen", False) else agent.step(state, q)
        self._count(rid)
        job.fog_id = region.candidate_fog_ids[a]
        self.world.control_msg_count += 1
        self.world.send(self.world.control_bytes, host, job.source_ap, self._reply_arrived, job, control=True)

    def _reply_arrived(self, job: Job, now: float) -> None:
        self.world.dispatch(job, job.fog_id, now)

    def gossip_fanout(self) -> int:
        return sum(len(r.candidate_fog_ids) for r in self.world.topology.regions)

    def observer_locations(self) -> list[int]:
        return sorted(set(self.hosts.values()))

    def observed_fogs(self, location: int) -> list[int]:
        return sorted({f for rid, h in self.hosts.items() if h == location for f in self.world.topology.regions[rid].candidate_fog_ids})


class BaselineController(Controller):
    """Random / DRR / Nearest / Fastest over each AP's region candidates."""

    def __init__(self, kind: PolicyKind, rng: np.random.Generator | None = None, observation: ObservationModel | None = None):
        if kind.learning:
            raise ValueError(f"{kind} is not a baseline")
        self.kind = kind
        self.rng = np.random.default_rng() if rng is None else rng
        self.observation = observation if kind is PolicyKind.FASTEST else None
        if kind is PolicyKind.FASTEST and observation is None:
            self.observation = ObservationModel("realtime")

    def attach(self, world: World) -> None:
        super().attach(world)
        self._region = _region_of_ap(world.topology)
        self._pointer = dict.fromkeys(self._region, 0)
        self._cand_idx = {
            ap: np.array([world.fog_index[f] for f in r.candidate_fog_ids]) for ap, r in self._region.items()
        }
        self._prop = {
            ap: np.array([world.path_delay(ap, f) for f in r.candidate_fog_ids]) for ap, r in self._region.items()
        }
        self._eta_path = {
            (ap, cat.name): np.array([world.path_delay(ap, f, cat.data_bytes) for f in r.candidate_fog_ids])
            for ap, r in self._region.items()
            for cat in CATEGORIES
        }
        self._ipt = {
            ap: np.array([world.stations[f].ipt for f in r.candidate_fog_ids]) for ap, r in self._region.items()
        }

    def on_job(self, job: Job, now: float) -> None:
        ap = job.source_ap
        cands = self._region[ap].candidate_fog_ids
        kind = self.kind
        if kind is PolicyKind.FASTEST:
            _, w_all = self.world.view(ap)
            if self.observation.mode == "realtime":
                self.world.observation_msg_count += len(cands)
            path = self._eta_path[(ap, job.category.name)]
            i = select_baseline(kind, cands, path_delay=path, queued_instr=w_all[self._cand_idx[ap]], ipt=self._ipt[ap], instructions=job.instructions)
        elif kind is PolicyKind.DRR:
            i = select_baseline(kind, cands, pointer=self._pointer[ap])
            self._pointer[ap] += 1
        elif kind is PolicyKind.NEAREST:
            i = select_baseline(kind, cands, path_delay=self._prop[ap])
        else:
            i = select_baseline(kind, cands, self.rng)
        self._count(ap)
        self.world.dispatch(job, cands[i], now)

    def gossip_fanout(self) -> int:
        if self.observation is None:
            return 0
        return sum(len(r.candidate_fog_ids) * len(r.ap_ids) for r in self.world.topology.regions)

    def observer_locations(self) -> list[int]:
        return sorted(self._region)

    def observed_fogs(self, location: int) -> list[int]:
        return list(self._region[location].candidate_fog_ids)


def make_agent(agent_id, n_inputs, n_actions, config, seed: int, key: tuple[int, ...]) -> DDQLAgent:
    return DDQLAgent(
        agent_id,
        n_inputs,
        n_actions,
        config,
        rng=stream_rng(seed, 2, *key),
        init_rng=stream_rng(seed, 3, *key),
    )
