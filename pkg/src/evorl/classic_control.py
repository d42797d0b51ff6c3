"""CartPole, Acrobot and MountainCar with seeded initial-state sampling.

Each problem's dynamics are written once against a small table of math
operations (``_SCALAR`` or ``_VECTOR``), so the same code drives both the
per-step scalar environment used during learning and the batched rollouts
used for fitness evaluation.

Observations on the scalar path are plain tuples of floats; batched paths
take and return ``(n, dim)`` float arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidArgumentError, ProtocolError

Observation = tuple  # tuple[float, ...]


class _Ops(NamedTuple):
    cos: Callable
    sin: Callable
    clip: Callable
    where: Callable


_SCALAR = _Ops(
    cos=math.cos,
    sin=math.sin,
    clip=lambda v, lo, hi: lo if v < lo else (hi if v > hi else v),
    where=lambda c, a, b: a if c else b,
)
_VECTOR = _Ops(cos=np.cos, sin=np.sin, clip=np.clip, where=np.where)


@dataclass(frozen=True)
class EnvSpec:
    """Static description of a control problem.

    ``obs_lower``/``obs_upper`` are the clipping bounds used for binning and
    for drawing condition thresholds; for unbounded velocity components they
    are conventional limits rather than hard physical ones.
    """

    name: str
    state_dim: int
    action_count: int
    max_episode_steps: int
    reward_threshold: float
    obs_lower: tuple[float, ...]
    obs_upper: tuple[float, ...]
    default_bins: tuple[int, ...]

    def __post_init__(self):
        if self.action_count < 2:
            raise InvalidArgumentError("action_count must be >= 2")
        if self.max_episode_steps < 1:
            raise InvalidArgumentError("max_episode_steps must be >= 1")
        if not (len(self.obs_lower) == len(self.obs_upper) == len(self.default_bins) == self.state_dim):
            raise InvalidArgumentError("bounds/bins length must equal state_dim")


class ControlEnv:
    """Base class: episode bookkeeping around a pure dynamics function.

    Subclasses provide ``spec``, ``_sample(rng, n)``, ``_dynamics(state, action, ops)``
    returning ``(next_state, reward, terminal)``, and ``_observe(state, ops)``.
    """

    spec: EnvSpec

    def __init__(self):
        self._state = None
        self._t = 0
        self._done = True

    # -- single episode -------------------------------------------------
    def reset(self, rng: np.random.Generator | None = None, *, state=None) -> Observation:
        """Start a new episode.

        Args:
            rng: stream for sampling the initial state. A fresh unseeded
                generator is used when omitted.
            state: explicit internal initial state; bypasses sampling.
        """
        if state is None:
            if rng is None:
                rng = np.random.default_rng()
            state = self._sample(rng, 1)[0]
        self._state = tuple(float(v) for v in state)
        self._t = 0
        self._done = False
        return self._observe(self._state, _SCALAR)

    def step(self, action: int) -> tuple[Observation, float, bool, bool]:
        """Advance one step; returns ``(obs, reward, terminal, truncated)``."""
        if self._done:
            raise ProtocolError("step() called on a finished episode; call reset()")
        if not (0 <= action < self.spec.action_count):
            raise InvalidArgumentError(f"invalid action {action!r} for {self.spec.name}")
        self._state, reward, terminal = self._dynamics(self._state, action, _SCALAR)
        self._t += 1
        truncated = (not terminal) and self._t >= self.spec.max_episode_steps
        self._done = bool(terminal or truncated)
        return self._observe(self._state, _SCALAR), reward, bool(terminal), truncated

    @property
    def state(self):
        return self._state

    @property
    def elapsed_steps(self) -> int:
        return self._t

    # -- batched --------------------------------------------------------
    def sample_initial_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self._sample(rng, n)

    def batch_step(self, states: np.ndarray, actions: np.ndarray):
        """Vectorized dynamics: ``(n, k)`` states, ``(n,)`` actions -> (states, rewards, terminal)."""
        n = states.shape[0]
        nxt, reward, terminal = self._dynamics(tuple(states.T), np.asarray(actions), _VECTOR)
        if np.ndim(reward) == 0:
            reward = np.full(n, float(reward))
        return np.stack(nxt, axis=1), reward, terminal

    def batch_observe(self, states: np.ndarray) -> np.ndarray:
        """Observations for ``(n, k)`` internal states (the input itself when they coincide)."""
        if type(self)._observe is ControlEnv._observe:
            return states
        return np.stack(self._observe(tuple(states.T), _VECTOR), axis=1)

    # -- subclass hooks -------------------------------------------------
    def _sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def _dynamics(self, state, action, ops):
        raise NotImplementedError

    def _observe(self, state, ops):
        return state


class CartPole(ControlEnv):
    """Cart-pole balancing (v0 rules: 200-step cap, solved at 195)."""

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masscart + masspole
    length = 0.5  # half the pole length
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * math.pi / 360
    x_threshold = 2.4

    spec = EnvSpec(
        name="cartpole",
        state_dim=4,
        action_count=2,
        max_episode_steps=200,
        reward_threshold=195.0,
        obs_lower=(-2.4, -3.0, -theta_threshold, -3.5),
        obs_upper=(2.4, 3.0, theta_threshold, 3.5),
        default_bins=(4, 4, 4, 4),
    )

    def _sample(self, rng, n):
        return rng.uniform(-0.05, 0.05, size=(n, 4))

    def _dynamics(self, state, action, ops):
        x, x_dot, theta, theta_dot = state
        force = ops.where(action == 1, self.force_mag, -self.force_mag)
        costheta = ops.cos(theta)
        sintheta = ops.sin(theta)
        temp = (force + self.polemass_length * theta_dot * theta_dot * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta * costheta / self.total_mass)
        )
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * xacc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * thetaacc
        terminal = (
            (x < -self.x_threshold)
            | (x > self.x_threshold)
            | (theta < -self.theta_threshold)
            | (theta > self.theta_threshold)
        )
        return (x, x_dot, theta, theta_dot), 1.0, terminal


class MountainCar(ControlEnv):
    """Under-powered car in a valley (v0 rules: 200-step cap, -1 per step)."""

    min_position = -1.2
    max_position = 0.6
    max_speed = 0.07
    goal_position = 0.5
    force = 0.001
    gravity = 0.0025

    spec = EnvSpec(
        name="mountaincar",
        state_dim=2,
        action_count=3,
        max_episode_steps=200,
        reward_threshold=-110.0,
        obs_lower=(-1.2, -0.07),
        obs_upper=(0.6, 0.07),
        default_bins=(16, 16),
    )

    def _sample(self, rng, n):
        pos = rng.uniform(-0.6, -0.4, size=n)
        return np.column_stack([pos, np.zeros(n)])

    def _dynamics(self, state, action, ops):
        position, velocity = state
        velocity = velocity + (action - 1) * self.force + ops.cos(3 * position) * (-self.gravity)
        velocity = ops.clip(velocity, -self.max_speed, self.max_speed)
        position = position + velocity
        position = ops.clip(position, self.min_position, self.max_position)
        velocity = ops.where((position == self.min_position) & (velocity < 0), 0.0, velocity)
        terminal = (position >= self.goal_position) & (velocity >= 0)
        return (position, velocity), -1.0, terminal


class Acrobot(ControlEnv):
    """Two-link underactuated swing-up (v1 rules: 500-step cap, RK4, book dynamics).

    Internal state is ``(theta1, theta2, dtheta1, dtheta2)``; the observation
    is ``(cos t1, sin t1, cos t2, sin t2, dtheta1, dtheta2)``.
    """

    dt = 0.2
    link_length_1 = 1.0
    link_mass_1 = 1.0
    link_mass_2 = 1.0
    link_com_pos_1 = 0.5
    link_com_pos_2 = 0.5
    link_moi = 1.0
    max_vel_1 = 4 * math.pi
    max_vel_2 = 9 * math.pi
    torques = (-1.0, 0.0, 1.0)
    g = 9.8

    spec = EnvSpec(
        name="acrobot",
        state_dim=6,
        action_count=3,
        max_episode_steps=500,
        reward_threshold=-100.0,
        obs_lower=(-1.0, -1.0, -1.0, -1.0, -4 * math.pi, -9 * math.pi),
        obs_upper=(1.0, 1.0, 1.0, 1.0, 4 * math.pi, 9 * math.pi),
        default_bins=(3, 3, 3, 3, 3, 3),
    )

    def _sample(self, rng, n):
        return rng.uniform(-0.1, 0.1, size=(n, 4))

    def _dsdt(self, s, torque, ops):
        m1, m2 = self.link_mass_1, self.link_mass_2
        l1 = self.link_length_1
        lc1, lc2 = self.link_com_pos_1, self.link_com_pos_2
        i1 = i2 = self.link_moi
        g = self.g
        theta1, theta2, dtheta1, dtheta2 = s
        cos_t2 = ops.cos(theta2)
        sin_t2 = ops.sin(theta2)
        d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * cos_t2) + i1 + i2
        d2 = m2 * (lc2**2 + l1 * lc2 * cos_t2) + i2
        phi2 = m2 * lc2 * g * ops.cos(theta1 + theta2 - math.pi / 2.0)
        phi1 = (
            -m2 * l1 * lc2 * dtheta2**2 * sin_t2
            - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin_t2
            + (m1 * lc1 + m2 * l1) * g * ops.cos(theta1 - math.pi / 2)
            + phi2
        )
        ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * sin_t2 - phi2) / (
            m2 * lc2**2 + i2 - d2**2 / d1
        )
        ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
        return (dtheta1, dtheta2, ddtheta1, ddtheta2)

    def _dynamics(self, state, action, ops):
        if ops is _SCALAR:
            torque = self.torques[action]
        else:
            torque = np.asarray(self.torques)[action]
        h = self.dt

        def shifted(s, k, c):
            return tuple(si + c * ki for si, ki in zip(s, k))

        k1 = self._dsdt(state, torque, ops)
        k2 = self._dsdt(shifted(state, k1, h / 2), torque, ops)
        k3 = self._dsdt(shifted(state, k2, h / 2), torque, ops)
        k4 = self._dsdt(shifted(state, k3, h), torque, ops)
        t1, t2, dt1, dt2 = (
            s + h / 6.0 * (a + 2 * b + 2 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4)
        )
        t1 = _wrap(t1, -math.pi, math.pi)
        t2 = _wrap(t2, -math.pi, math.pi)
        dt1 = ops.clip(dt1, -self.max_vel_1, self.max_vel_1)
        dt2 = ops.clip(dt2, -self.max_vel_2, self.max_vel_2)
        terminal = (-ops.cos(t1) - ops.cos(t2 + t1)) > 1.0
        reward = ops.where(terminal, 0.0, -1.0)
        return (t1, t2, dt1, dt2), reward, terminal

    def _observe(self, state, ops):
        t1, t2, dt1, dt2 = state
        return (ops.cos(t1), ops.sin(t1), ops.cos(t2), ops.sin(t2), dt1, dt2)


def _wrap(x, lo, hi):
    return (x - lo) % (hi - lo) + lo


ENVIRONMENTS: dict[str, type[ControlEnv]] = {
    "cartpole": CartPole,
    "acrobot": Acrobot,
    "mountaincar": MountainCar,
}


def register_env(name: str, cls: type[ControlEnv]) -> None:
    """Add an environment class to the name registry."""
    ENVIRONMENTS[name] = cls


def make_env(name: str) -> ControlEnv:
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise InvalidArgumentError(
            f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}"
        ) from None


def get_spec(name: str) -> EnvSpec:
    try:
        return ENVIRONMENTS[name].spec
    except KeyError:
        raise InvalidArgumentError(f"unknown environment {name!r}") from None
