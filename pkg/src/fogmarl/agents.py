"""Load-balancing decision makers.

DRL puts one independent DDQL agent in every AP. CRL runs one agent per
region on a host node that APs consult with a request/reply exchange.
Baselines (Random, DRR, Nearest, Fastest) need no learning.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .learning import (
    Adam,
    DDQLConfig,
    QNetwork,
    ReplayBuffer,
    epsilon,
    forward,
    sync_target,
    train_step,
)

W_SCALE = 1e4


class PolicyKind(str, Enum):
    DRL = "DRL"
    CRL = "CRL"
    RANDOM = "Random"
    DRR = "DRR"
    NEAREST = "Nearest"
    FASTEST = "Fastest"

    @property
    def learning(self) -> bool:
        return self in (PolicyKind.DRL, PolicyKind.CRL)

    @property
    def observes(self) -> bool:
        return self in (PolicyKind.DRL, PolicyKind.CRL, PolicyKind.FASTEST)


@dataclass(frozen=True)
class ObservationModel:
    mode: str = "realtime"  # or "interval"
    interval_s: float = 3.0
    delivery: str = "instant"  # or "link-delayed"

    def __post_init__(self) -> None:
        if self.mode not in ("realtime", "interval"):
            raise ValueError(f"unknown observation mode {self.mode!r}")
        if self.delivery not in ("instant", "link-delayed"):
            raise ValueError(f"unknown delivery {self.delivery!r}")
        if self.mode == "interval" and not self.interval_s > 0:
            raise ValueError("interval must be positive")


def encode_state(instructions: float, queues, queue_cap: float = 100.0, ap_onehot=None) -> np.ndarray:
    """``[w / 1e4, (one-hot AP), clip(Q / cap, 0, 1)...]``."""
    q = np.minimum(np.asarray(queues, dtype=float) / queue_cap, 1.0)
    head = [instructions / W_SCALE]
    if ap_onehot is not None:
        return np.concatenate([head, ap_onehot, q])
    return np.concatenate([head, q])


def reward_for(prev_action: int | None, queues) -> float | None:
    """Negated queue length of the previously chosen candidate, read from the current view."""
    if prev_action is None:
        return None
    return -float(queues[prev_action])


def greedy(q_values: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest candidate index
    return int(np.argmax(q_values))


class DDQLAgent:
    """Independent Double-DQL learner with private network, buffer, optimizer and RNG.

    ``mode`` is ``"prefill"`` (uniform actions, store only), ``"train"`` or
    ``"frozen"`` (greedy, nothing stored).
    """

    def __init__(
        self,
        agent_id,
        n_inputs: int,
        n_actions: int,
        config: DDQLConfig | None = None,
        rng: np.random.Generator | None = None,
        init_rng: np.random.Generator | None = None,
    ):
        self.agent_id = agent_id
        self.config = config or DDQLConfig()
        self.rng = np.random.default_rng() if rng is None else rng
        dtype = np.dtype(self.config.dtype)
        self.online = QNetwork(n_inputs, n_actions, self.config.hidden, init_rng if init_rng is not None else self.rng, dtype)
        self.target = self.online.clone()
        self.adam = Adam(self.online, self.config.lr)
        self.buffer = ReplayBuffer(self.config.buffer_capacity, n_inputs, dtype)
        self.mode = "train"
        self.decision_step = 0
        self.phase_step = 0
        self.phase_steps = 1
        self.eps_start = self.config.eps_start
        self.train_steps = 0
        self.prev_state: np.ndarray | None = None
        self.prev_action: int | None = None
        self.rewards: list[float] = []
        self.losses: list[float] = []

    @property
    def n_actions(self) -> int:
        return self.online.n_actions

    @property
    def n_inputs(self) -> int:
        return self.online.n_inputs

    def begin_phase(self, phase_steps: int, eps_start: float | None = None) -> None:
        self.phase_step = 0
        self.phase_steps = max(int(phase_steps), 1)
        if eps_start is not None:
            self.eps_start = eps_start

    def reset_episode(self) -> None:
        """Episode boundaries truncate: no transition links the two sides."""
        self.prev_state = None
        self.prev_action = None

    def current_epsilon(self) -> float:
        if self.mode == "prefill":
            return 1.0
        if self.mode == "frozen":
            return 0.0
        c = self.config
        return epsilon(self.phase_step, self.phase_steps, self.eps_start, c.eps_end, c.eps_decay_fraction)

    def act(self, state: np.ndarray, eps: float) -> int:
        if eps > 0.0 and self.rng.random() < eps:
            return int(self.rng.integers(self.n_actions))
        return greedy(forward(self.online, state))

    def step(self, state: np.ndarray, queues) -> int:
        """Record the reward of the last action, pick the next one and learn.

        ``queues`` are the raw queue lengths of this agent's candidates as seen
        in the same observation that produced ``state``.
        """
        r = reward_for(self.prev_action, queues)
        if r is not None:
            self.rewards.append(r)
            if self.mode != "frozen":
                self.buffer.add(self.prev_state, self.prev_action, r, state)
        a = self.act(state, self.current_epsilon())
        self.prev_state, self.prev_action = state, a
        if self.mode == "train":
            self.decision_step += 1
            self.phase_step += 1
            c = self.config
            if self.decision_step % c.train_period == 0 and len(self.buffer) >= c.batch_size:
                batch = self.buffer.sample(c.batch_size, self.rng)
                self.losses.append(train_step(self.online, self.target, batch, self.adam, c.gamma))
                self.train_steps += 1
            if self.decision_step % c.target_update == 0:
                sync_target(self.online, self.target)
        return a


def select_baseline(kind: PolicyKind, candidates, rng: np.random.Generator | None = None, *, pointer: int = 0, path_delay=None, queued_instr=None, ipt=None, instructions: float = 0.0) -> int:
    """Index of the chosen candidate for a baseline policy.

    ``path_delay``, ``queued_instr`` and ``ipt`` are per-candidate arrays;
    Fastest minimises ``path_delay + (queued_instr + instructions) / ipt``.
    Ties go to the lowest index (candidates are sorted by id).
    """
    n = len(candidates)
    if kind is PolicyKind.RANDOM:
        return int(rng.integers(n))
    if kind is PolicyKind.DRR:
        return pointer % n
    if kind is PolicyKind.NEAREST:
        return int(np.argmin(np.asarray(path_delay, dtype=float)))
    if kind is PolicyKind.FASTEST:
        eta = np.asarray(path_delay, float) + (np.asarray(queued_instr, float) + instructions) / np.asarray(ipt, float)
        return int(np.argmin(eta))
    raise ValueError(f"{kind} is not a baseline")


def replay_trace(agents: dict, trace: list[tuple]) -> dict:
    """Drive agents with a recorded ``(agent_id, state, queues)`` sequence.

    Returns each agent's parameter trajectory: one flat parameter vector per
    decision it made. Used to show that agents share nothing.
    """
    out = {k: [] for k in agents}
    for agent_id, state, queues in trace:
        agent = agents.get(agent_id)
        if agent is None:
            continue
        agent.step(np.asarray(state, dtype=float), queues)
        out[agent_id].append(np.concatenate([p.ravel() for p in agent.online.params()]))
    return out
