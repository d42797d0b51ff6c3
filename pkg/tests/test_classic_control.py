import math

import numpy as np
import pytest

from evorl.classic_control import Acrobot, CartPole, MountainCar, get_spec, make_env
from evorl.errors import InvalidArgumentError, ProtocolError


def reference_cartpole_step(state, action):
    """Straight transcription of the published cart-pole update (Euler, dt 0.02)."""
    gravity, m_cart, m_pole, half_len, force_mag, dt = 9.8, 1.0, 0.1, 0.5, 10.0, 0.02
    x, x_dot, theta, theta_dot = state
    force = force_mag if action == 1 else -force_mag
    total = m_cart + m_pole
    c, s = math.cos(theta), math.sin(theta)
    temp = (force + m_pole * half_len * theta_dot**2 * s) / total
    theta_acc = (gravity * s - c * temp) / (half_len * (4.0 / 3.0 - m_pole * c**2 / total))
    x_acc = temp - m_pole * half_len * theta_acc * c / total
    new = (x + dt * x_dot, x_dot + dt * x_acc, theta + dt * theta_dot, theta_dot + dt * theta_acc)
    limit = 12 * 2 * math.pi / 360
    done = abs(new[0]) > 2.4 or abs(new[2]) > limit
    return new, done


class TestCartPole:
    def test_reset_support(self):
        env = CartPole()
        rng = np.random.default_rng(0)
        for _ in range(100):
            obs = env.reset(rng)
            assert all(abs(v) <= 0.05 for v in obs)

    def test_reset_determinism(self):
        a = CartPole().reset(np.random.default_rng(42))
        b = CartPole().reset(np.random.default_rng(42))
        assert a == b

    def test_alternating_actions_match_reference(self):
        env = CartPole()
        obs = env.reset(np.random.default_rng(3))
        ref = obs
        t = 0
        while True:
            action = t % 2
            obs, reward, terminal, truncated = env.step(action)
            ref, ref_done = reference_cartpole_step(ref, action)
            assert obs == pytest.approx(ref, abs=1e-12)
            assert terminal == ref_done
            t += 1
            if terminal or truncated:
                break
        assert t == 200 or terminal

    def test_return_equals_length(self):
        env = CartPole()
        rng = np.random.default_rng(1)
        for _ in range(20):
            env.reset(rng)
            total, steps, done = 0.0, 0, False
            while not done:
                _, r, term, trunc = env.step(int(rng.integers(2)))
                total += r
                steps += 1
                done = term or trunc
            assert total == steps
            assert 1 <= total <= 200

    def test_terminates_when_limit_exceeded(self):
        env = CartPole()
        env.reset(state=(2.39, 1.0, 0.0, 0.0))
        _, _, terminal, _ = env.step(1)
        assert terminal  # x = 2.39 + 0.02 > 2.4

    def test_invalid_action(self):
        env = CartPole()
        env.reset(np.random.default_rng(0))
        with pytest.raises(InvalidArgumentError):
            env.step(2)

    def test_step_after_done(self):
        env = CartPole()
        env.reset(state=(2.39, 1.0, 0.0, 0.0))
        env.step(1)
        with pytest.raises(ProtocolError):
            env.step(0)


class TestMountainCar:
    def test_reset(self):
        env = MountainCar()
        obs = env.reset(np.random.default_rng(5))
        assert -0.6 <= obs[0] <= -0.4
        assert obs[1] == 0.0

    def test_no_push_never_reaches_goal(self):
        env = MountainCar()
        rng = np.random.default_rng(0)
        for _ in range(10):
            env.reset(rng)
            total, done = 0.0, False
            while not done:
                _, r, term, trunc = env.step(1)
                total += r
                done = term or trunc
                assert not term
            assert total == -200

    def test_energy_pumping_reaches_goal(self):
        env = MountainCar()
        obs = env.reset(np.random.default_rng(0))
        total, done = 0.0, False
        while not done:
            obs, r, term, trunc = env.step(2 if obs[1] >= 0 else 0)
            total += r
            done = term or trunc
        assert term and obs[0] >= 0.5
        assert -200 < total <= -1


class TestAcrobot:
    def test_observation_shape_and_bounds(self):
        env = Acrobot()
        obs = env.reset(np.random.default_rng(0))
        assert len(obs) == 6
        assert obs[0] == pytest.approx(math.cos(env.state[0]))
        rng = np.random.default_rng(1)
        for _ in range(300):
            obs, r, term, trunc = env.step(int(rng.integers(3)))
            assert abs(obs[4]) <= 4 * math.pi and abs(obs[5]) <= 9 * math.pi
            assert r in (-1.0, 0.0)
            if term or trunc:
                break

    def test_return_bounds(self):
        env = Acrobot()
        rng = np.random.default_rng(2)
        env.reset(rng)
        total, done = 0.0, False
        while not done:
            _, r, term, trunc = env.step(int(rng.integers(3)))
            total += r
            done = term or trunc
        assert -500 <= total <= -1

    def test_energy_pumping_swings_up(self):
        env = Acrobot()
        obs = env.reset(np.random.default_rng(0))
        done, steps = False, 0
        while not done:
            obs, _, term, trunc = env.step(2 if obs[5] >= 0 else 0)
            steps += 1
            done = term or trunc
        assert term and steps < 500


@pytest.mark.parametrize("name", ["cartpole", "acrobot", "mountaincar"])
def test_batch_matches_scalar(name):
    env = make_env(name)
    rng = np.random.default_rng(11)
    starts = env.sample_initial_states(rng, 8)
    actions = rng.integers(env.spec.action_count, size=(40, 8))
    states = starts.copy()
    scalar = [make_env(name) for _ in range(8)]
    for e, s in zip(scalar, starts):
        e.reset(state=s)
    for t in range(40):
        states, rewards, terminal = env.batch_step(states, actions[t])
        obs = env.batch_observe(states)
        for i, e in enumerate(scalar):
            if e._done:
                continue
            o, r, term, _ = e.step(int(actions[t, i]))
            np.testing.assert_allclose(obs[i], o, rtol=0, atol=1e-9)
            assert rewards[i] == r and terminal[i] == term


@pytest.mark.parametrize(
    "name,steps,threshold",
    [("cartpole", 200, 195.0), ("acrobot", 500, -100.0), ("mountaincar", 200, -110.0)],
)
def test_specs(name, steps, threshold):
    spec = get_spec(name)
    assert spec.max_episode_steps == steps
    assert spec.reward_threshold == threshold
    assert spec.action_count >= 2


def test_unknown_env():
    with pytest.raises(InvalidArgumentError):
        make_env("pendulum")
