"""Convergence/degradation monitoring and policy transfer between load phases."""

from __future__ import annotations

import copy
import io
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .agents import DDQLAgent, greedy
from .learning import SNAPSHOT_FORMAT, SNAPSHOT_VERSION, QNetwork, forward, net_from_arrays, snapshot_arrays

PACKAGE_FORMAT = "fogmarl-transfer"


class WindowNotFull(RuntimeError):
    pass


class FrozenPolicyError(RuntimeError):
    pass


class RewardMonitor:
    """Sliding window of per-decision rewards (rewards are costs, <= 0)."""

    def __init__(self, window_size: int = 1000, saturation_tol: float = 0.01, degradation_tol: float = 0.2):
        self.window_size = int(window_size)
        self.saturation_tol = saturation_tol
        self.degradation_tol = degradation_tol
        self.window: deque[float] = deque(maxlen=self.window_size)

    def push(self, reward: float) -> None:
        self.window.append(float(reward))

    def extend(self, rewards) -> None:
        for r in rewards:
            self.push(r)

    @property
    def full(self) -> bool:
        return len(self.window) == self.window_size

    def mean(self) -> float:
        return math.fsum(self.window) / len(self.window)


def detect_convergence(monitor: RewardMonitor) -> bool:
    """True when the newer half of the window is not better than the older half by ``saturation_tol``."""
    if not monitor.full:
        raise WindowNotFull(f"{len(monitor.window)}/{monitor.window_size} rewards")
    vals = list(monitor.window)
    half = len(vals) // 2
    old = math.fsum(vals[:half]) / half
    new = math.fsum(vals[half:]) / (len(vals) - half)
    if new == old:
        return True
    improvement = (new - old) / max(abs(old), 1e-12)
    return improvement < monitor.saturation_tol


def detect_degradation(monitor: RewardMonitor, baseline_mean: float) -> bool:
    """True when the current mean cost is more than ``degradation_tol`` worse than ``baseline_mean``."""
    return monitor.mean() < baseline_mean * (1.0 + monitor.degradation_tol)


@dataclass
class TransferPackage:
    widths: list[int]
    params: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    source_phase: str = ""

    def network(self) -> QNetwork:
        return net_from_arrays(self._net_arrays())

    def _net_arrays(self) -> dict:
        return {
            "format": np.array(SNAPSHOT_FORMAT),
            "version": np.array(SNAPSHOT_VERSION),
            "widths": np.array(self.widths, dtype=np.int64),
            "params": self.params,
        }

    def dumps(self) -> bytes:
        buf = io.BytesIO()
        np.savez(
            buf,
            package=np.array(PACKAGE_FORMAT),
            source_phase=np.array(self.source_phase),
            states=self.states,
            actions=self.actions,
            rewards=self.rewards,
            next_states=self.next_states,
            **self._net_arrays(),
        )
        return buf.getvalue()

    @classmethod
    def loads(cls, data: bytes) -> "TransferPackage":
        with np.load(io.BytesIO(data), allow_pickle=False) as a:
            if "package" not in a.files or str(a["package"]) != PACKAGE_FORMAT:
                raise ValueError("not a transfer package")
            net = net_from_arrays(a)
            return cls(
                net.widths,
                a["params"].copy(),
                a["states"].copy(),
                a["actions"].copy(),
                a["rewards"].copy(),
                a["next_states"].copy(),
                str(a["source_phase"]),
            )


def make_package(agent: DDQLAgent, x: int, source_phase: str = "") -> TransferPackage:
    s, a, r, s2 = agent.buffer.recent(x)
    arrays = snapshot_arrays(agent.online)
    return TransferPackage(list(agent.online.widths), arrays["params"], s.copy(), a.copy(), r.copy(), s2.copy(), source_phase)


def apply_package(package: TransferPackage, agent: DDQLAgent) -> DDQLAgent:
    net = package.network()
    agent.online.copy_from(net)
    agent.target.copy_from(net)
    for row in zip(package.states, package.actions, package.rewards, package.next_states):
        agent.buffer.add(*row)
    return agent


def transfer(source: DDQLAgent, x: int | None = None, rng: np.random.Generator | None = None, source_phase: str = "") -> DDQLAgent:
    """Fresh agent carrying the source's parameters and its ``x`` latest experiences.

    Online and target nets both start from the source's online net, the
    optimizer starts clean and exploration restarts at ``transfer_eps_start``.
    The source is left untouched.
    """
    cfg = source.config
    if x is None:
        x = int(round(cfg.transfer_fraction * cfg.buffer_capacity))
    if rng is None:
        rng = copy.deepcopy(source.rng)
    target = DDQLAgent(source.agent_id, source.n_inputs, source.n_actions, cfg, rng=rng, init_rng=np.random.default_rng(0))
    apply_package(make_package(source, x, source_phase), target)
    target.eps_start = cfg.transfer_eps_start
    target.decision_step = 0
    return target


@dataclass(frozen=True, eq=False)
class InferencePolicy:
    """Forward-only greedy policy over a read-only copy of a network's parameters."""

    widths: tuple
    flat: np.ndarray
    frozen = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "_views", QNetwork.from_flat(self.widths, self.flat))

    @property
    def weights(self) -> list[np.ndarray]:
        return self._net().weights

    @property
    def biases(self) -> list[np.ndarray]:
        return self._net().biases

    def _net(self) -> QNetwork:
        return self._views

    def act(self, state) -> int:
        return greedy(forward(self._net(), state))

    def q_values(self, state) -> np.ndarray:
        return forward(self._net(), state)

    def train_step(self, *args, **kwargs):
        raise FrozenPolicyError("inference models cannot be trained")

    def step(self, *args, **kwargs):
        raise FrozenPolicyError("inference models do not learn; use act()")

    def snapshot(self) -> dict:
        return snapshot_arrays(self._net())

    def dumps(self) -> bytes:
        buf = io.BytesIO()
        np.savez(buf, **self.snapshot())
        return buf.getvalue()

    @classmethod
    def loads(cls, data: bytes) -> "InferencePolicy":
        with np.load(io.BytesIO(data), allow_pickle=False) as a:
            return _freeze(net_from_arrays(a))


def _freeze(net: QNetwork) -> InferencePolicy:
    flat = net.flat.copy()
    flat.flags.writeable = False
    return InferencePolicy(tuple(net.widths), flat)


def extract_inference_model(agent: DDQLAgent) -> InferencePolicy:
    return _freeze(agent.online)


# learning-curve measurements ------------------------------------------------


def moving_mean(rewards, window: int) -> np.ndarray:
    """Trailing mean over ``window`` rewards; entry ``i`` covers ``i-window+1 .. i``."""
    r = np.asarray(rewards, dtype=float)
    if window < 1 or len(r) < window:
        raise WindowNotFull(f"{len(r)} rewards for a window of {window}")
    c = np.concatenate([[0.0], np.cumsum(r)])
    return (c[window:] - c[:-window]) / window


def converged_threshold(curve, tail: float = 0.25, percentile: float = 75.0) -> float:
    """Percentile of a smoothed curve over its final ``tail`` fraction."""
    curve = np.asarray(curve, dtype=float)
    k = max(int(round(len(curve) * tail)), 1)
    return float(np.percentile(curve[-k:], percentile))


def steps_to_reach(curve, threshold: float, window: int) -> int | None:
    """Decisions needed before the smoothed curve first reaches ``threshold``.

    Entry ``i`` of ``curve`` closes at decision ``i + window``; ``None`` when
    the threshold is never reached.
    """
    hits = np.flatnonzero(np.asarray(curve) >= threshold)
    return None if len(hits) == 0 else int(hits[0]) + window
