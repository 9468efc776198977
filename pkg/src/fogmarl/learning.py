"""Numpy Q-learning substrate: MLP, Adam, Huber loss, replay, Double-DQL target."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

SNAPSHOT_FORMAT = "fogmarl-qnet"
SNAPSHOT_VERSION = 1
HIDDEN = (256, 128, 64)


class DimensionMismatch(ValueError):
    pass


class EmptyBuffer(RuntimeError):
    pass


class QNetwork:
    """Fully connected net, ReLU hidden layers, linear output.

    Hidden weights use He-uniform init (limit ``sqrt(6/fan_in)``), the output
    layer Glorot-uniform; biases start at zero. All parameters live in one
    flat array (``flat``); ``weights`` and ``biases`` are views into it.
    """

    def __init__(self, n_inputs: int, n_actions: int, hidden=HIDDEN, rng: np.random.Generator | None = None, dtype=np.float64):
        rng = np.random.default_rng() if rng is None else rng
        widths = [int(n_inputs), *map(int, hidden), int(n_actions)]
        self._bind(widths, np.zeros(_param_count(widths), dtype=dtype))
        for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            last = i == len(widths) - 2
            limit = np.sqrt(6.0 / (fan_in + fan_out)) if last else np.sqrt(6.0 / fan_in)
            self.weights[i][:] = rng.uniform(-limit, limit, size=(fan_in, fan_out))

    def _bind(self, widths: list[int], flat: np.ndarray) -> None:
        self.flat = flat
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        pos = 0
        for fan_in, fan_out in zip(widths, widths[1:]):
            self.weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out))
            pos += fan_in * fan_out
            self.biases.append(flat[pos : pos + fan_out])
            pos += fan_out

    @classmethod
    def from_flat(cls, widths, flat: np.ndarray) -> "QNetwork":
        widths = [int(w) for w in widths]
        if flat.ndim != 1 or flat.size != _param_count(widths):
            raise DimensionMismatch("parameter count does not match layer widths")
        net = cls.__new__(cls)
        net._bind(widths, flat)
        return net

    @property
    def dtype(self):
        return self.flat.dtype

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy_from(self, other: "QNetwork") -> None:
        if other.widths != self.widths:
            raise DimensionMismatch(f"{other.widths} vs {self.widths}")
        self.flat[:] = other.flat

    def clone(self) -> "QNetwork":
        return QNetwork.from_flat(self.widths, self.flat.copy())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


def _param_count(widths) -> int:
    return sum(a * b + b for a, b in zip(widths, widths[1:]))


def forward(net: QNetwork, state: np.ndarray) -> np.ndarray:
    h = np.asarray(state, dtype=net.flat.dtype)
    if h.shape[-1] != net.n_inputs:
        raise DimensionMismatch(f"state has {h.shape[-1]} features, net expects {net.n_inputs}")
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def _forward_cached(net: QNetwork, x: np.ndarray):
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def _backward(net: QNetwork, acts, grad_out: np.ndarray) -> np.ndarray:
    """Flat gradient laid out like ``net.flat``."""
    grad = np.empty_like(net.flat)
    views = QNetwork.from_flat(net.widths, grad)
    g = grad_out
    for i in range(len(net.weights) - 1, -1, -1):
        np.matmul(acts[i].T, g, out=views.weights[i])
        g.sum(axis=0, out=views.biases[i])
        if i > 0:
            g = (g @ net.weights[i].T) * (acts[i] > 0.0)
    return grad


def grads_as_arrays(net: QNetwork, flat_grad: np.ndarray) -> list[np.ndarray]:
    """Split a flat gradient into arrays ordered like :meth:`QNetwork.params`."""
    return QNetwork.from_flat(net.widths, flat_grad).params()


def huber(pred, target, delta: float = 1.0) -> float:
    e = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    a = np.abs(e)
    return float(np.mean(np.where(a <= delta, 0.5 * e * e, delta * (a - 0.5 * delta))))


def loss_and_grads(net: QNetwork, states, actions, targets) -> tuple[float, list[np.ndarray]]:
    """Mean Huber loss of ``Q(s, a)`` against fixed ``targets`` and its parameter gradients."""
    loss, flat = loss_and_flat_grad(net, states, actions, targets)
    return loss, grads_as_arrays(net, flat)


def loss_and_flat_grad(net: QNetwork, states, actions, targets) -> tuple[float, np.ndarray]:
    dt = net.flat.dtype
    states = np.atleast_2d(np.asarray(states, dtype=dt))
    actions = np.asarray(actions, dtype=int)
    acts = _forward_cached(net, states)
    q = acts[-1]
    rows = np.arange(len(actions))
    e = q[rows, actions] - np.asarray(targets, dtype=dt)
    a = np.abs(e)
    loss = float(np.mean(np.where(a <= 1.0, 0.5 * e * e, a - 0.5)))
    grad_out = np.zeros_like(q)
    grad_out[rows, actions] = np.clip(e, -1.0, 1.0) / len(actions)
    return loss, _backward(net, acts, grad_out)


class Adam:
    def __init__(self, net: QNetwork, lr: float = 2.5e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros_like(net.flat)
        self.v = np.zeros_like(net.flat)
        self.t = 0

    def step(self, net: QNetwork, grads) -> None:
        """Update ``net`` in place from a flat gradient or a list ordered like ``params()``."""
        g = grads if isinstance(grads, np.ndarray) else np.concatenate([x.ravel() for x in grads])
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = self.lr * np.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        m, v = self.m, self.v
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        g = g * g
        g *= 1.0 - b2
        v += g
        d = np.sqrt(v)
        d += self.eps
        np.divide(m, d, out=d)
        d *= step
        net.flat -= d


class ReplayBuffer:
    """Ring buffer of ``(s, a, r, s')`` rows with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, dtype=np.float64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim), dtype=dtype)
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim), dtype=dtype)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, s, a: int, r: float, s_next) -> None:
        i = self.inserted % self.capacity
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s_next
        self.inserted += 1

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if len(self) == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        return rng.integers(0, len(self), size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = self.sample_indices(batch_size, rng)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]

    def recent(self, x: int):
        """The last ``x`` rows in insertion order (oldest first)."""
        n = min(int(x), len(self))
        idx = (np.arange(self.inserted - n, self.inserted)) % self.capacity
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


def ddql_target(r, s_next, online: QNetwork, target: QNetwork, gamma: float = 0.99) -> np.ndarray:
    """``r + gamma * Q_target(s', argmax_a Q_online(s', a))``; no terminal masking."""
    s_next = np.atleast_2d(np.asarray(s_next, dtype=float))
    best = np.argmax(forward(online, s_next), axis=1)
    q_next = forward(target, s_next)[np.arange(len(best)), best]
    return np.asarray(r, dtype=float) + gamma * q_next


def train_step(net: QNetwork, target_net: QNetwork, batch, adam: Adam, gamma: float = 0.99) -> float:
    """One Adam step on the online net; ``target_net`` is only read."""
    states, actions, rewards, next_states = batch
    if len(actions) == 0:
        raise EmptyBuffer("empty batch")
    y = ddql_target(rewards, next_states, net, target_net, gamma)
    loss, grad = loss_and_flat_grad(net, states, actions, y)
    adam.step(net, grad)
    return loss


def sync_target(online: QNetwork, target: QNetwork) -> None:
    target.copy_from(online)


def epsilon(decision_step: int, phase_steps: int, eps_start: float = 1.0, eps_end: float = 0.01, decay_fraction: float = 0.75) -> float:
    """Linear decay over the first ``decay_fraction`` of the phase, then flat."""
    if phase_steps <= 0:
        raise ValueError("phase_steps must be positive")
    horizon = decay_fraction * phase_steps
    if decision_step >= horizon:
        return eps_end
    return eps_start + (eps_end - eps_start) * decision_step / horizon


def snapshot_arrays(net: QNetwork) -> dict[str, np.ndarray]:
    return {
        "format": np.array(SNAPSHOT_FORMAT),
        "version": np.array(SNAPSHOT_VERSION),
        "widths": np.array(net.widths, dtype=np.int64),
        "params": net.flat.copy(),
    }


def net_from_arrays(arrays) -> QNetwork:
    if str(arrays["format"]) != SNAPSHOT_FORMAT:
        raise ValueError("not a fogmarl network snapshot")
    if int(arrays["version"]) != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {int(arrays['version'])}")
    flat = np.array(arrays["params"])
    if flat.dtype.kind != "f":
        raise ValueError("snapshot parameters must be floating point")
    return QNetwork.from_flat(arrays["widths"], flat)


def dump_snapshot(net: QNetwork) -> bytes:
    buf = io.BytesIO()
    np.savez(buf, **snapshot_arrays(net))
    return buf.getvalue()


def load_snapshot(data: bytes) -> QNetwork:
    with np.load(io.BytesIO(data), allow_pickle=False) as arrays:
        return net_from_arrays(arrays)


@dataclass
class DDQLConfig:
    """Learner hyper-parameters; counts are in decision steps."""

    gamma: float = 0.99
    lr: float = 2.5e-4
    hidden: tuple[int, ...] = HIDDEN
    buffer_capacity: int = 1_000_000
    prefill_fraction: float = 0.1
    batch_size: int = 50
    train_period: int = 4
    target_update: int = 2000
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_fraction: float = 0.75
    transfer_eps_start: float = 0.1
    transfer_fraction: float = 0.1
    queue_cap: float = 100.0
    dtype: str = "float32"

    @property
    def prefill(self) -> int:
        return int(round(self.prefill_fraction * self.buffer_capacity))
