"""
Double DQL from scratch on a tiny decision problem
==================================================

The network, Huber loss, backprop and Adam are plain numpy. We first compare
the analytic gradient with central differences, then train on a two-state,
two-action problem and compare the learned Q-table with value iteration.
"""

import numpy as np

from fogmarl.learning import Adam, QNetwork, ReplayBuffer, forward, loss_and_grads, sync_target, train_step

rng = np.random.default_rng(0)

# --- gradient check -------------------------------------------------------
net = QNetwork(3, 2, (5, 4), rng)
s = rng.normal(size=(6, 3))
a = rng.integers(0, 2, 6)
y = rng.normal(size=6)
_, grads = loss_and_grads(net, s, a, y)
w = net.weights[0]
num = np.zeros_like(w)
h = 1e-6
for i in np.ndindex(w.shape):
    old = w[i]
    w[i] = old + h
    up = loss_and_grads(net, s, a, y)[0]
    w[i] = old - h
    down = loss_and_grads(net, s, a, y)[0]
    w[i] = old
    num[i] = (up - down) / (2 * h)
err = np.linalg.norm(grads[0] - num) / (np.linalg.norm(grads[0]) + np.linalg.norm(num))
print(f"first-layer gradient vs finite differences: rel. error {err:.2e}")

# --- toy problem -------------------------------------------------------------
# state 0: stay for -1 or pay 3 to move; state 1: stay for -0.2 or pay 1 to go back
R = np.array([[-1.0, -3.0], [-0.2, -1.0]])
NEXT = np.array([[0, 1], [1, 0]])
gamma = 0.9

q = np.zeros((2, 2))
for _ in range(2000):
    q = R + gamma * q[NEXT].max(axis=2)
print("\nvalue iteration Q*:\n", q.round(3))

eye = np.eye(2)
buf = ReplayBuffer(1000, 2)
for _ in range(1000):
    st, ac = rng.integers(2), rng.integers(2)
    buf.add(eye[st], ac, R[st, ac], eye[NEXT[st, ac]])

online = QNetwork(2, 2, (32, 32), rng)
target = online.clone()
adam = Adam(online, 1e-3)
for k in range(1, 6001):
    loss = train_step(online, target, buf.sample(32, rng), adam, gamma)
    if k % 100 == 0:
        sync_target(online, target)
    if k % 2000 == 0:
        print(f"update {k}: loss {loss:.5f}")

learned = forward(online, eye)
print("\nlearned Q:\n", learned.round(3))
print("greedy policy", learned.argmax(axis=1), "optimal", q.argmax(axis=1))
