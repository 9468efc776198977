import numpy as np
import pytest

from fogmarl.agents import DDQLAgent
from fogmarl.learning import DDQLConfig, forward
from fogmarl.lifelong import (
    FrozenPolicyError,
    InferencePolicy,
    RewardMonitor,
    TransferPackage,
    WindowNotFull,
    converged_threshold,
    detect_convergence,
    detect_degradation,
    extract_inference_model,
    make_package,
    moving_mean,
    steps_to_reach,
    transfer,
)

SMALL = DDQLConfig(hidden=(16, 16), buffer_capacity=400, target_update=50)


def _trained_agent(seed=0, n=300):
    agent = DDQLAgent("a", 4, 3, SMALL, np.random.default_rng(seed), np.random.default_rng(seed + 1))
    agent.begin_phase(n)
    rng = np.random.default_rng(seed + 2)
    for _ in range(n):
        agent.step(rng.random(4), rng.integers(0, 5, 3))
    return agent


def test_constant_rewards_have_converged():
    m = RewardMonitor(100)
    m.extend([-5.0] * 100)
    assert detect_convergence(m)


def test_improving_rewards_have_not_converged():
    m = RewardMonitor(100)
    m.extend(np.linspace(-10, -2, 100))
    assert not detect_convergence(m)


def test_half_full_window_raises():
    m = RewardMonitor(100)
    m.extend([-1.0] * 50)
    with pytest.raises(WindowNotFull):
        detect_convergence(m)


@pytest.mark.parametrize("current, degraded", [(-4.1, False), (-6.0, True), (-4.8, False)])
def test_degradation_examples(current, degraded):
    m = RewardMonitor(10)
    m.extend([current] * 10)
    assert detect_degradation(m, -4.0) is degraded


def test_monitoring_does_not_touch_policy():
    agent = _trained_agent()
    before = agent.online.flat.copy()
    m = RewardMonitor(50)
    m.extend(agent.rewards[-50:])
    detect_convergence(m)
    detect_degradation(m, -1.0)
    assert np.array_equal(before, agent.online.flat)


def test_transfer_copies_parameters_into_both_nets():
    src = _trained_agent()
    dst = transfer(src, x=40)
    states = np.random.default_rng(5).random((200, 4))
    np.testing.assert_array_equal(forward(src.online, states), forward(dst.online, states))
    np.testing.assert_array_equal(dst.online.flat, dst.target.flat)


def test_transfer_seeds_buffer_with_latest_experiences():
    src = _trained_agent()
    dst = transfer(src, x=40)
    assert len(dst.buffer) == 40
    for a, b in zip(src.buffer.recent(40), dst.buffer.recent(40)):
        np.testing.assert_array_equal(a, b)
    assert len(transfer(src, x=10_000).buffer) == len(src.buffer)


def test_transfer_leaves_source_alone():
    src = _trained_agent()
    params = src.online.flat.copy()
    buf = [x.copy() for x in src.buffer.recent(len(src.buffer))]
    size, t = len(src.buffer), src.adam.t
    dst = transfer(src, x=40)
    for _ in range(100):
        dst.step(np.random.default_rng(1).random(4), [1, 2, 3])
    assert np.array_equal(params, src.online.flat)
    assert len(src.buffer) == size and src.adam.t == t
    for a, b in zip(buf, src.buffer.recent(size)):
        np.testing.assert_array_equal(a, b)


def test_transfer_resets_optimizer_and_exploration():
    src = _trained_agent()
    assert src.adam.t > 0
    dst = transfer(src)
    assert dst.adam.t == 0 and not dst.adam.m.any() and not dst.adam.v.any()
    assert dst.eps_start == SMALL.transfer_eps_start == 0.1
    dst.begin_phase(100)
    assert dst.current_epsilon() == pytest.approx(0.1)
    # default x is a tenth of capacity
    assert len(dst.buffer) == 40


def test_package_round_trip():
    src = _trained_agent()
    pkg = make_package(src, 25, "low")
    back = TransferPackage.loads(pkg.dumps())
    assert back.source_phase == "low" and back.widths == pkg.widths
    np.testing.assert_array_equal(back.params, pkg.params)
    np.testing.assert_array_equal(back.states, pkg.states)
    with pytest.raises(ValueError):
        TransferPackage.loads(InferencePolicy.dumps(extract_inference_model(src)))


def test_frozen_policy_matches_greedy_agent():
    agent = _trained_agent()
    frozen = extract_inference_model(agent)
    states = np.random.default_rng(9).random((10_000, 4))
    assert all(frozen.act(s) == agent.act(s, 0.0) for s in states)


def test_frozen_policy_is_immutable():
    frozen = extract_inference_model(_trained_agent())
    with pytest.raises(FrozenPolicyError):
        frozen.train_step()
    with pytest.raises(FrozenPolicyError):
        frozen.step(np.zeros(4), [0, 0, 0])
    with pytest.raises(ValueError):
        frozen.weights[0][0, 0] = 1.0
    assert not hasattr(frozen, "buffer") and not hasattr(frozen, "adam")


def test_frozen_policy_round_trips_bit_exactly():
    frozen = extract_inference_model(_trained_agent())
    back = InferencePolicy.loads(frozen.dumps())
    assert back.widths == frozen.widths
    assert back.flat.dtype == frozen.flat.dtype
    assert np.array_equal(back.flat, frozen.flat)


def test_moving_mean_matches_convolution():
    r = np.random.default_rng(0).normal(size=50)
    np.testing.assert_allclose(moving_mean(r, 7), np.convolve(r, np.ones(7) / 7, mode="valid"))
    with pytest.raises(WindowNotFull):
        moving_mean(r[:3], 7)


def test_threshold_and_first_crossing():
    curve = np.concatenate([np.linspace(-10, -1, 10), np.full(10, -1.0)])
    assert converged_threshold(curve) == -1.0
    # entry 9 is the first at -1, closing decision 9 + window
    assert steps_to_reach(curve, -1.0, window=5) == 14
    assert steps_to_reach(curve, 0.0, window=5) is None
