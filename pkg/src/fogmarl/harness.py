"""Scenario files and seeded experiment orchestration.

Each ``(arm, seed)`` run builds the seed's topology, pre-fills and trains the
learning agents phase by phase (transferring at every rate surge), then runs
one evaluation episode with frozen greedy policies. All arms of a seed share
the topology and the evaluation arrival streams.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .agents import ObservationModel, PolicyKind
from .learning import DDQLConfig
from .lifelong import (
    RewardMonitor,
    converged_threshold,
    detect_convergence,
    extract_inference_model,
    moving_mean,
    steps_to_reach,
    transfer,
)
from .metrics import RunSummary, aggregate, aggregate_csv, dumps_json, summaries_csv, summarize_log
from .topology import Topology, TopologyError, build_topology, load_topology
from .workload import CATEGORIES, GenerationSchedule, spawn_generators, stream_rng
from .world import (
    BaselineController,
    CentralizedController,
    DistributedController,
    World,
    make_agent,
)

log = logging.getLogger(__name__)

DEFAULT_ARMS = [
    "DRL-realtime",
    "DRL-interval",
    "CRL-realtime",
    "CRL-interval",
    "Random",
    "DRR",
    "Nearest",
    "Fastest",
]

EVAL_STREAM = 9
PREFILL_STREAM = 5
TRAIN_STREAM = 6


class ConfigInvalid(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass
class Scenario:
    name: str = "full-scale"
    topology: dict = field(default_factory=lambda: {"n_nodes": 32, "n_aps": 21, "attachment_degree": 1})
    regions: list | str | None = None
    phases: list[dict] = field(
        default_factory=lambda: [
            {"start_step": 0, "beta": 200},
            {"start_step": 30000, "beta": 150},
            {"start_step": 60000, "beta": 100},
        ]
    )
    train_steps_per_phase: float = 30000
    episode_steps: float = 10000
    eval_steps: float = 100000
    eval_beta: float | None = None
    arms: list[str] = field(default_factory=lambda: list(DEFAULT_ARMS))
    observation: dict = field(default_factory=lambda: {"interval_s": 3.0, "delivery": "instant"})
    baseline_observation: str = "interval"
    hyperparameters: dict = field(default_factory=dict)
    desk_scale: float = 1.0
    beta_scale: float = 1.0
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    agent_host: str | int = "central"
    stochastic_service: bool = False
    shared_contention: bool = False
    control_bytes: float = 100.0
    save_traces: bool = True
    save_event_logs: bool = False

    # derived ----------------------------------------------------------------
    def ddql_config(self) -> DDQLConfig:
        cfg = DDQLConfig(**{k: (tuple(v) if k == "hidden" else v) for k, v in self.hyperparameters.items()})
        k = self.desk_scale
        return replace(
            cfg,
            buffer_capacity=max(int(round(cfg.buffer_capacity * k)), cfg.batch_size),
            target_update=max(int(round(cfg.target_update * k)), 1),
        )

    def phase_bounds(self) -> list[tuple[float, float, float]]:
        """``(start_s, end_s, beta)`` for each training phase, desk-scaled."""
        k = self.desk_scale
        starts = [float(p["start_step"]) * k for p in self.phases]
        ends = starts[1:] + [starts[-1] + float(self.train_steps_per_phase) * k]
        return [(s, e, float(p["beta"])) for s, e, p in zip(starts, ends, self.phases)]

    @property
    def eval_horizon(self) -> float:
        return float(self.eval_steps) * self.desk_scale

    @property
    def final_beta(self) -> float:
        return float(self.eval_beta if self.eval_beta is not None else self.phases[-1]["beta"])

    def observation_model(self, mode: str) -> ObservationModel:
        o = self.observation
        return ObservationModel(mode, float(o.get("interval_s", 3.0)), o.get("delivery", "instant"))

    def to_dict(self) -> dict:
        return asdict(self)


def parse_arm(arm: str, scenario: Scenario) -> tuple[PolicyKind, str | None]:
    name, _, mode = arm.partition("-")
    kind = PolicyKind(name)
    if kind.learning:
        return kind, mode or "realtime"
    if kind is PolicyKind.FASTEST:
        return kind, mode or scenario.baseline_observation
    if mode:
        raise ValueError(f"{kind.value} takes no observation mode")
    return kind, None


def load_scenario(path: str | Path) -> Scenario:
    data = yaml.safe_load(Path(path).read_text()) or {}
    return scenario_from_dict(data, base=Path(path).parent)


def scenario_from_dict(data: dict, base: Path | None = None) -> Scenario:
    known = {f.name for f in fields(Scenario)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigInvalid([f"unknown field '{k}'" for k in unknown])
    sc = Scenario(**data)
    topo_file = sc.topology.get("file") if isinstance(sc.topology, dict) else None
    if topo_file and base is not None and not Path(topo_file).is_absolute():
        sc.topology = {**sc.topology, "file": str(base / topo_file)}
    return sc


def validate(scenario: Scenario) -> tuple[list[str], list[str]]:
    """Return ``(errors, warnings)``; an empty error list means the scenario can run."""
    errors: list[str] = []
    warnings: list[str] = []
    sc = scenario
    if not sc.phases:
        errors.append("phases: at least one phase is required")
    starts = []
    for i, p in enumerate(sc.phases):
        if "beta" not in p or "start_step" not in p:
            errors.append(f"phases[{i}]: needs start_step and beta")
            continue
        if not float(p["beta"]) > 0:
            errors.append(f"phases[{i}].beta must be positive")
        starts.append(float(p["start_step"]))
    if any(b <= a for a, b in zip(starts, starts[1:])):
        errors.append("phases: start_step values must be strictly increasing")
    if sc.eval_beta is not None and not float(sc.eval_beta) > 0:
        errors.append("eval_beta must be positive")
    interval = sc.observation.get("interval_s", 3.0)
    if not (isinstance(interval, (int, float)) and interval > 0):
        errors.append("observation.interval_s: interval must be positive")
    if sc.observation.get("delivery", "instant") not in ("instant", "link-delayed"):
        errors.append("observation.delivery must be 'instant' or 'link-delayed'")
    if sc.baseline_observation not in ("realtime", "interval"):
        errors.append("baseline_observation must be 'realtime' or 'interval'")
    for name, v in (("train_steps_per_phase", sc.train_steps_per_phase), ("episode_steps", sc.episode_steps), ("eval_steps", sc.eval_steps), ("desk_scale", sc.desk_scale), ("beta_scale", sc.beta_scale)):
        if not float(v) > 0:
            errors.append(f"{name} must be positive")
    if not float(sc.control_bytes) >= 0:
        errors.append("control_bytes must be non-negative")
    if not sc.seeds:
        errors.append("seeds: at least one seed is required")
    if len(set(sc.seeds)) != len(sc.seeds):
        errors.append("seeds: duplicates")
    if not sc.arms:
        errors.append("arms: at least one arm is required")
    for arm in sc.arms:
        try:
            parse_arm(arm, sc)
        except ValueError as exc:
            errors.append(f"arms: bad arm '{arm}' ({exc})")
    try:
        sc.ddql_config()
    except TypeError as exc:
        errors.append(f"hyperparameters: {exc}")
    if not errors:
        errors += _validate_topology(sc)
    if sc.desk_scale != 1.0:
        warnings.append(f"desk_scale={sc.desk_scale} deviates from full scale 1.0")
    if sc.beta_scale != 1.0:
        warnings.append(f"beta_scale={sc.beta_scale}: interarrival means are beta*{sc.beta_scale} s")
    if sc.hyperparameters:
        warnings.append(f"hyperparameters overridden: {sorted(sc.hyperparameters)}")
    return errors, warnings


def _validate_topology(sc: Scenario) -> list[str]:
    t = sc.topology
    if t.get("file"):
        if not Path(t["file"]).exists():
            return [f"topology.file: {t['file']} not found"]
        try:
            topo = load_topology(t["file"])
        except (TopologyError, KeyError, ValueError) as exc:
            return [f"topology.file: {exc}"]
        if sc.regions not in (None, "single"):
            return _check_regions(sc, topo)
        return []
    n, n_aps = int(t.get("n_nodes", 0)), int(t.get("n_aps", 0))
    if n < 5:
        return ["topology.n_nodes must be at least 5"]
    if not 1 <= n_aps <= n - 1:
        return [f"topology.n_aps must be between 1 and {n - 1}"]
    try:
        topo = build_topology(n, n_aps, seed=0, attachment_degree=int(t.get("attachment_degree", 1)))
    except TopologyError as exc:
        return [f"topology: {exc}"]
    if isinstance(sc.regions, list):
        return _check_regions(sc, topo)
    if sc.regions not in (None, "single", "split2"):
        return [f"regions: unknown layout '{sc.regions}'"]
    return []


def _check_regions(sc: Scenario, topo: Topology) -> list[str]:
    from .topology import define_regions

    if not isinstance(sc.regions, list):
        return []
    covered = {int(a) for r in sc.regions for a in r.get("aps", [])}
    diags = [f"regions: AP {a} is not covered by any region" for a in topo.ap_ids if a not in covered]
    if diags:
        return diags
    try:
        define_regions(topo.ap_ids, topo.fog_ids, sc.regions)
    except TopologyError as exc:
        return [f"regions: {exc}"]
    return []


# running ----------------------------------------------------------------------


def scenario_topology(sc: Scenario, seed: int) -> Topology:
    t = sc.topology
    if t.get("file"):
        topo = load_topology(t["file"])
        if isinstance(sc.regions, list):
            from .topology import define_regions

            topo.regions = define_regions(topo.ap_ids, topo.fog_ids, sc.regions)
        return topo
    regions = None if sc.regions in (None, "single") else sc.regions
    return build_topology(
        int(t["n_nodes"]),
        int(t["n_aps"]),
        attachment_degree=int(t.get("attachment_degree", 1)),
        regions=regions,
        rng=stream_rng(seed, 0),
    )


def agent_hosts(topo: Topology, host: str | int) -> dict[int, int]:
    out = {}
    for r in topo.regions:
        if host == "central":
            out[r.region_id] = min(r.candidate_fog_ids, key=lambda f: (-topo.centrality.get(f, 0.0), f))
        elif host == "cloud":
            out[r.region_id] = topo.cloud_id
        else:
            out[r.region_id] = int(host)
    return out


@dataclass
class ArmResult:
    arm: str
    seed: int
    summary: RunSummary
    event_log: dict
    rewards: dict = field(default_factory=dict)  # agent -> [(phase, reward), ...]
    convergence: dict = field(default_factory=dict)  # agent -> {phase: decision index}


def _expected_decisions(sc: Scenario, duration: float, beta: float, n_aps: int) -> int:
    return max(int(round(len(CATEGORIES) * n_aps * duration / (beta * sc.beta_scale))), 1)


def _run_world(sc, topo, controller, beta, seed, stream_key, horizon) -> World:
    world = World(
        topo,
        controller,
        GenerationSchedule([(0.0, beta)], sc.beta_scale),
        seed=seed,
        stream_key=stream_key,
        stochastic_service=sc.stochastic_service,
        shared_contention=sc.shared_contention,
        control_bytes=sc.control_bytes,
    )
    spawn_generators(world)
    world.run_until(horizon)
    return world


def build_learners(sc: Scenario, topo: Topology, kind: PolicyKind, seed: int) -> dict:
    cfg = sc.ddql_config()
    agents = {}
    if kind is PolicyKind.DRL:
        for r in topo.regions:
            for ap in r.ap_ids:
                agents[ap] = make_agent(ap, 1 + len(r.candidate_fog_ids), len(r.candidate_fog_ids), cfg, seed, (ap,))
    else:
        for r in topo.regions:
            n_in = 1 + len(r.ap_ids) + len(r.candidate_fog_ids)
            agents[r.region_id] = make_agent(r.region_id, n_in, len(r.candidate_fog_ids), cfg, seed, (10_000 + r.region_id,))
    return agents


def _aps_per_agent(topo: Topology, kind: PolicyKind) -> dict:
    if kind is PolicyKind.DRL:
        return {ap: 1 for ap in topo.ap_ids}
    return {r.region_id: len(r.ap_ids) for r in topo.regions}


def train_learners(
    sc: Scenario,
    topo: Topology,
    kind: PolicyKind,
    obs: ObservationModel,
    seed: int,
    phases: list[tuple[float, float, float]] | None = None,
    agents: dict | None = None,
    prefill: bool = True,
) -> tuple[dict, dict, dict]:
    """Pre-fill, then train phase by phase with transfer at each surge.

    Returns ``(agents, rewards, convergence)`` where ``rewards[agent]`` lists
    ``(phase, reward)`` per decision and ``convergence[agent][phase]`` is the
    first phase-local decision at which the reward monitor saturated.
    """
    phases = sc.phase_bounds() if phases is None else phases
    agents = build_learners(sc, topo, kind, seed) if agents is None else agents
    hosts = agent_hosts(topo, sc.agent_host)

    def controller(ags):
        if kind is PolicyKind.DRL:
            return DistributedController(ags, obs, sc.ddql_config().queue_cap)
        return CentralizedController(ags, hosts, obs, sc.ddql_config().queue_cap)

    cfg = next(iter(agents.values())).config
    episode = min(float(sc.episode_steps), max(e - s for s, e, _ in phases))
    if prefill and cfg.prefill > 0:
        for a in agents.values():
            a.mode = "prefill"
        k = 0
        while min(len(a.buffer) for a in agents.values()) < cfg.prefill:
            _run_world(sc, topo, controller(agents), phases[0][2], seed, (PREFILL_STREAM, k), episode)
            k += 1
            if k > 1000:
                raise RuntimeError("pre-fill did not reach its target")
        for a in agents.values():
            a.rewards.clear()

    rewards = {k: [] for k in agents}
    convergence = {k: {} for k in agents}
    share = _aps_per_agent(topo, kind)
    for p, (start, end, beta) in enumerate(phases):
        if p > 0:
            agents = {k: transfer(a, source_phase=f"phase{p - 1}") for k, a in agents.items()}
        for k, a in agents.items():
            a.mode = "train"
            a.begin_phase(_expected_decisions(sc, end - start, beta, share[k]), None if p > 0 else cfg.eps_start)
            a.rewards = []
        t, e = start, 0
        while t < end - 1e-9:
            dur = min(episode, end - t)
            _run_world(sc, topo, controller(agents), beta, seed, (TRAIN_STREAM, p, e), dur)
            t += dur
            e += 1
        for k, a in agents.items():
            rewards[k] += [(p, r) for r in a.rewards]
            mon = RewardMonitor(min(1000, max(len(a.rewards) // 4, 2)))
            for i, r in enumerate(a.rewards):
                mon.push(r)
                if mon.full and detect_convergence(mon):
                    convergence[k][p] = i
                    break
    return agents, rewards, convergence


def run_arm(sc: Scenario, arm: str, seed: int, topo: Topology | None = None) -> ArmResult:
    kind, mode = parse_arm(arm, sc)
    topo = scenario_topology(sc, seed) if topo is None else topo
    rewards, convergence = {}, {}
    if kind.learning:
        obs = sc.observation_model(mode)
        agents, rewards, convergence = train_learners(sc, topo, kind, obs, seed)
        frozen = {k: extract_inference_model(a) for k, a in agents.items()}
        if kind is PolicyKind.DRL:
            ctrl = DistributedController(frozen, obs, sc.ddql_config().queue_cap)
        else:
            ctrl = CentralizedController(frozen, agent_hosts(topo, sc.agent_host), obs, sc.ddql_config().queue_cap)
    else:
        obs = sc.observation_model(mode) if mode else None
        ctrl = BaselineController(kind, stream_rng(seed, 7), obs)
    world = _run_world(sc, topo, ctrl, sc.final_beta, seed, (EVAL_STREAM,), sc.eval_horizon)
    event_log = world.event_log(sc.eval_horizon)
    return ArmResult(arm, seed, summarize_log(event_log), event_log, rewards, convergence)


def _mean_curve(rewards: dict, phase: int) -> np.ndarray:
    per_agent = [[r for p, r in rows if p == phase] for rows in rewards.values()]
    n = min(len(x) for x in per_agent)
    return np.mean([x[:n] for x in per_agent], axis=0)


def transfer_speedup(
    sc: Scenario,
    seed: int,
    arm: str = "DRL-realtime",
    low_beta: float = 200.0,
    high_beta: float = 100.0,
    window: int = 500,
    topo: Topology | None = None,
) -> dict:
    """Decisions needed to reach a converged-reward threshold at ``high_beta``.

    A from-scratch learner trains one phase at ``high_beta``; a transferred
    learner trains one phase at ``low_beta`` and then one at ``high_beta``.
    Rewards are averaged across agents decision by decision and smoothed over
    ``window``. The threshold is the 75th percentile of the from-scratch curve
    over its last quarter.
    """
    kind, mode = parse_arm(arm, sc)
    topo = scenario_topology(sc, seed) if topo is None else topo
    obs = sc.observation_model(mode)
    span = float(sc.train_steps_per_phase) * sc.desk_scale
    _, scratch_r, _ = train_learners(sc, topo, kind, obs, seed, phases=[(0.0, span, high_beta)])
    _, moved_r, _ = train_learners(sc, topo, kind, obs, seed, phases=[(0.0, span, low_beta), (span, 2 * span, high_beta)])
    scratch = moving_mean(_mean_curve(scratch_r, 0), window)
    moved = moving_mean(_mean_curve(moved_r, 1), window)
    threshold = converged_threshold(scratch)
    n_scratch = steps_to_reach(scratch, threshold, window)
    n_moved = steps_to_reach(moved, threshold, window)
    ratio = float("inf") if n_moved is None else n_moved / n_scratch
    return {"seed": seed, "threshold": threshold, "scratch_steps": n_scratch, "transfer_steps": n_moved, "ratio": ratio}


def run_experiment(sc: Scenario, out_dir: str | Path | None = None, seeds=None, arms=None) -> dict:
    """Run every (arm, seed); write CSV/JSON artifacts when ``out_dir`` is given."""
    errors, warnings = validate(sc)
    if errors:
        raise ConfigInvalid(errors)
    for w in warnings:
        log.info("scenario warning: %s", w)
    seeds = list(sc.seeds if seeds is None else seeds)
    arms = list(sc.arms if arms is None else arms)
    results: list[ArmResult] = []
    for seed in seeds:
        topo = scenario_topology(sc, seed)
        for arm in arms:
            log.info("running %s seed %d", arm, seed)
            results.append(run_arm(sc, arm, seed, topo))
    if out_dir is not None:
        write_artifacts(sc, results, Path(out_dir))
    return {"results": results, "aggregate": aggregate_by_arm(results)}


def aggregate_by_arm(results: list[ArmResult]) -> dict:
    by_arm: dict[str, list[RunSummary]] = {}
    for r in results:
        by_arm.setdefault(r.arm, []).append(r.summary)
    return {arm: aggregate(s) for arm, s in by_arm.items() if len(s) >= 2}


def write_artifacts(sc: Scenario, results: list[ArmResult], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    records = [(r.seed, r.arm, r.summary) for r in results]
    (out / "summaries.csv").write_text(summaries_csv(records))
    (out / "aggregate.csv").write_text(aggregate_csv(aggregate_by_arm(results)))
    tree = {
        "scenario": sc.to_dict(),
        "runs": [
            {"seed": r.seed, "arm": r.arm, "summary": r.summary.to_dict(), "convergence": {str(k): v for k, v in r.convergence.items()}}
            for r in results
        ],
    }
    (out / "summaries.json").write_text(dumps_json(tree))
    if sc.save_traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for r in results:
            if not r.rewards:
                continue
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["agent", "phase", "decision", "reward"])
            for agent, rows in r.rewards.items():
                for i, (phase, reward) in enumerate(rows):
                    w.writerow([agent, phase, i, repr(reward)])
            (tdir / f"{r.arm}_seed{r.seed}.csv").write_text(buf.getvalue())
    if sc.save_event_logs:
        ldir = out / "logs"
        ldir.mkdir(exist_ok=True)
        for r in results:
            (ldir / f"{r.arm}_seed{r.seed}.json").write_text(json.dumps(r.event_log) + "\n")
