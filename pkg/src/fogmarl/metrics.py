"""Run summaries and cross-seed aggregation.

Every summary is computed from a world's event log (plain JSON data), so a
persisted log reproduces it exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .workload import CATEGORIES


class NoCompletedJobs(ValueError):
    pass


class TooFewRuns(ValueError):
    pass


@dataclass
class RunSummary:
    avg_wait: float
    std_wait_across_nodes: float
    std_utilization_across_nodes: float
    avg_execution_delay: float
    avg_execution_delay_by_category: dict[str, float]
    control_msg_count: int
    observation_msg_count: int
    censored_jobs: int
    generated_jobs: int
    completed_jobs: int
    decision_steps: dict[str, int] = field(default_factory=dict)
    node_mean_wait: dict[str, float] = field(default_factory=dict)
    node_utilization: dict[str, float] = field(default_factory=dict)

    def scalars(self) -> dict[str, float]:
        """Flat metric -> value view used for CSV rows and aggregation."""
        out = {
            "avg_wait": self.avg_wait,
            "std_wait_across_nodes": self.std_wait_across_nodes,
            "std_utilization_across_nodes": self.std_utilization_across_nodes,
            "avg_execution_delay": self.avg_execution_delay,
        }
        for name, v in self.avg_execution_delay_by_category.items():
            out[f"avg_execution_delay_{name}"] = v
        out["control_msg_count"] = self.control_msg_count
        out["observation_msg_count"] = self.observation_msg_count
        out["censored_jobs"] = self.censored_jobs
        out["generated_jobs"] = self.generated_jobs
        out["completed_jobs"] = self.completed_jobs
        out["decision_steps_total"] = sum(self.decision_steps.values())
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def node_utilization(busy_time: float, horizon: float) -> float:
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return min(busy_time / horizon, 1.0)


def busy_time_from_jobs(jobs, fog_ids, horizon: float) -> dict[int, float]:
    """Server busy seconds per fog node inside ``[0, horizon]``."""
    busy = dict.fromkeys(fog_ids, 0.0)
    for rec in jobs:
        fog, start, end = rec[3], rec[7], rec[8]
        if start is None or fog not in busy or start >= horizon:
            continue
        stop = horizon if end is None or end > horizon else end
        busy[fog] += stop - start
    return busy


def summarize_log(log: dict, fog_ids=None) -> RunSummary:
    """Metrics over one event log.

    Waiting counts jobs whose service finished; execution delay counts jobs
    whose response reached the AP; everything else is censored. Fog nodes that
    served nothing have a mean wait of 0. ``fog_ids`` restricts the
    across-node statistics (default: every fog node in the log).
    """
    horizon = log["horizon"]
    fog_ids = list(log["fog_ids"] if fog_ids is None else fog_ids)
    jobs = log["jobs"]
    waits_by_node: dict[int, list[float]] = {f: [] for f in fog_ids}
    waits: list[float] = []
    exec_all: list[float] = []
    exec_cat: dict[str, list[float]] = {c.name: [] for c in CATEGORIES}
    for rec in jobs:
        cat, fog = rec[1], rec[3]
        t_gen, t_enq, t_start, t_end, t_resp = rec[4], rec[6], rec[7], rec[8], rec[9]
        if t_end is not None and t_end <= horizon:
            w = t_start - t_enq
            waits.append(w)
            if fog in waits_by_node:
                waits_by_node[fog].append(w)
        if t_resp is not None and t_resp <= horizon:
            d = t_resp - t_gen
            exec_all.append(d)
            exec_cat[cat].append(d)
    if not waits:
        raise NoCompletedJobs("no job finished service before the horizon")
    node_mean = {f: (math.fsum(v) / len(v) if v else 0.0) for f, v in waits_by_node.items()}
    busy = busy_time_from_jobs(jobs, fog_ids, horizon)
    util = {f: node_utilization(busy[f], horizon) for f in fog_ids}
    return RunSummary(
        avg_wait=math.fsum(waits) / len(waits),
        std_wait_across_nodes=float(np.std(list(node_mean.values()))),
        std_utilization_across_nodes=float(np.std(list(util.values()))),
        avg_execution_delay=math.fsum(exec_all) / len(exec_all) if exec_all else float("nan"),
        avg_execution_delay_by_category={
            k: (math.fsum(v) / len(v) if v else float("nan")) for k, v in exec_cat.items()
        },
        control_msg_count=int(log["control_msg_count"]),
        observation_msg_count=int(log["observation_msg_count"]),
        censored_jobs=len(jobs) - len(exec_all),
        generated_jobs=int(log["generated"]),
        completed_jobs=len(exec_all),
        decision_steps=dict(log.get("decision_steps", {})),
        node_mean_wait={str(k): v for k, v in node_mean.items()},
        node_utilization={str(k): v for k, v in util.items()},
    )


def replay_service(log: dict, ipt: dict, drain: bool = True) -> dict:
    """Re-serve a log's jobs FIFO on fog nodes with the given ``ipt`` values.

    Routing and arrival-at-fog times are kept; service start/end are
    recomputed with deterministic service and every response keeps its
    original return-path delay. With ``drain`` the horizon is lifted so every
    job that reached a fog node is served (the horizon becomes the last
    service end or response), which keeps the set of measured
    jobs fixed across speeds. Returns a new log; the input is not modified.
    """
    instr = {c.name: c.instructions for c in CATEGORIES}
    rows = [list(r) for r in log["jobs"]]
    order = sorted((r for r in rows if r[6] is not None), key=lambda r: (r[3], r[6], r[0]))
    free_at: dict[int, float] = {}
    for r in order:
        fog, t_enq = r[3], r[6]
        back = None if r[9] is None or r[8] is None else r[9] - r[8]
        start = max(t_enq, free_at.get(fog, t_enq))
        end = start + instr[r[1]] / float(ipt[fog])
        free_at[fog] = end
        r[7], r[8] = start, end
        r[9] = None if back is None else end + back
    horizon = log["horizon"]
    if drain:
        ends = [r[8] for r in rows if r[8] is not None] + [r[9] for r in rows if r[9] is not None]
        horizon = max([horizon, *ends])
    return {**log, "horizon": horizon, "jobs": rows}


def summarize_run(world, fog_ids=None) -> RunSummary:
    return summarize_log(world.event_log(), fog_ids)


def population_std(values) -> float:
    return float(np.std(np.asarray(values, dtype=float)))


def t_half_width(values, confidence: float = 0.95) -> float:
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n < 2:
        raise TooFewRuns("need at least two runs for an interval")
    s = float(np.std(x, ddof=1))
    return float(stats.t.ppf(0.5 + confidence / 2, n - 1) * s / math.sqrt(n))


def aggregate(summaries) -> dict[str, tuple[float, float]]:
    """``metric -> (mean, 95% t half-width)`` over per-seed summaries."""
    summaries = list(summaries)
    if len(summaries) < 2:
        raise TooFewRuns("need at least two runs to aggregate")
    rows = [s.scalars() if isinstance(s, RunSummary) else dict(s) for s in summaries]
    out = {}
    for key in rows[0]:
        vals = np.array([r[key] for r in rows], dtype=float)
        out[key] = (float(np.mean(vals)), t_half_width(vals))
    return out


def summaries_csv(records) -> str:
    """CSV with one row per (seed, arm, metric). ``records`` = ``[(seed, arm, RunSummary)]``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "arm", "metric", "value"])
    for seed, arm, summary in records:
        for metric, value in summary.scalars().items():
            w.writerow([seed, arm, metric, repr(float(value))])
    return buf.getvalue()


def aggregate_csv(by_arm: dict[str, dict[str, tuple[float, float]]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arm", "metric", "mean", "ci95_half_width"])
    for arm, metrics in by_arm.items():
        for metric, (mean, hw) in metrics.items():
            w.writerow([arm, metric, repr(mean), repr(hw)])
    return buf.getvalue()


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n"
